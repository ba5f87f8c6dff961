//! Typed, SSA-form mini-IR: the substrate programs under test are written in.
//!
//! Programs are a flat list of record declarations plus functions. Function
//! bodies are straight instruction lists; control flow is expressed with
//! `branch` jumping to instruction labels (indices). Application functions
//! carry real bodies; `extern` functions are opaque and dispatch to host
//! stubs at run time.

mod parse;
mod print;
#[cfg(test)]
pub(crate) mod tests;

pub use parse::{parse_program, ParseError};
pub use print::pretty_print;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A type as it appears in declarations and signatures.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Type {
    Int,
    Bool,
    Str,
    /// A declared record type, by name.
    Record(String),
    Array(Box<Type>),
}

impl Type {
    pub fn is_primitive(&self) -> bool {
        matches!(self, Type::Int | Type::Bool | Type::Str)
    }

    /// Eligible as an influencing type: records and arrays of (transitively)
    /// record element type. Primitives, strings and arrays of primitives are
    /// excluded.
    pub fn is_influencing_eligible(&self) -> bool {
        match self {
            Type::Int | Type::Bool | Type::Str => false,
            Type::Record(_) => true,
            Type::Array(elem) => elem.is_influencing_eligible(),
        }
    }

    /// The display name used by the analysis and the distance map.
    pub fn type_name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => write!(f, "int"),
            Type::Bool => write!(f, "bool"),
            Type::Str => write!(f, "string"),
            Type::Record(name) => write!(f, "{name}"),
            Type::Array(elem) => write!(f, "array<{elem}>"),
        }
    }
}

/// A record type declaration with its ordered field signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordDecl {
    pub name: String,
    pub fields: Vec<(String, Type)>,
}

impl RecordDecl {
    pub fn field_type(&self, field: &str) -> Option<&Type> {
        self.fields.iter().find(|(n, _)| n == field).map(|(_, t)| t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FunctionOrigin {
    Application,
    Extern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinopKind {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinopKind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinopKind::Add => "add",
            BinopKind::Sub => "sub",
            BinopKind::Mul => "mul",
            BinopKind::Div => "div",
            BinopKind::Mod => "mod",
            BinopKind::Eq => "eq",
            BinopKind::Ne => "ne",
            BinopKind::Lt => "lt",
            BinopKind::Le => "le",
            BinopKind::Gt => "gt",
            BinopKind::Ge => "ge",
            BinopKind::And => "and",
            BinopKind::Or => "or",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Some(match s {
            "add" => BinopKind::Add,
            "sub" => BinopKind::Sub,
            "mul" => BinopKind::Mul,
            "div" => BinopKind::Div,
            "mod" => BinopKind::Mod,
            "eq" => BinopKind::Eq,
            "ne" => BinopKind::Ne,
            "lt" => BinopKind::Lt,
            "le" => BinopKind::Le,
            "gt" => BinopKind::Gt,
            "ge" => BinopKind::Ge,
            "and" => BinopKind::And,
            "or" => BinopKind::Or,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstValue {
    Int(i64),
    Bool(bool),
}

/// Instruction operations. Operands are always variable names; constants are
/// materialized through `Const`/`StrConst`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Const {
        dest: String,
        value: ConstValue,
    },
    /// `dest = strconst "<literal>"`; the literal is interned in
    /// `Program::string_constants` and referenced by index.
    StrConst {
        dest: String,
        index: usize,
    },
    FieldLoad {
        dest: String,
        base: String,
        field: String,
    },
    ArrayLoad {
        dest: String,
        base: String,
        index: String,
    },
    /// `dest` is None for calls to void functions.
    Call {
        dest: Option<String>,
        callee: String,
        args: Vec<String>,
    },
    Binop {
        dest: String,
        kind: BinopKind,
        lhs: String,
        rhs: String,
    },
    /// `var` is None for `return` from a void function.
    Return {
        var: Option<String>,
    },
    Branch {
        cond: String,
        then_label: u32,
        else_label: u32,
    },
}

impl Op {
    pub fn dest(&self) -> Option<&str> {
        match self {
            Op::Const { dest, .. }
            | Op::StrConst { dest, .. }
            | Op::FieldLoad { dest, .. }
            | Op::ArrayLoad { dest, .. }
            | Op::Binop { dest, .. } => Some(dest),
            Op::Call { dest, .. } => dest.as_deref(),
            Op::Return { .. } | Op::Branch { .. } => None,
        }
    }
}

/// One instruction; `label` is its index within the function body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub label: u32,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<(String, Type)>,
    /// None means void.
    pub return_type: Option<Type>,
    pub body: Vec<Instruction>,
    pub origin: FunctionOrigin,
}

impl Function {
    pub fn is_extern(&self) -> bool {
        self.origin == FunctionOrigin::Extern
    }
}

/// Which arm of a branch a target denotes.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Arm {
    Then,
    Else,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::Then => write!(f, "then"),
            Arm::Else => write!(f, "else"),
        }
    }
}

/// One side of a branch in an application function: the unit of coverage
/// obligation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CodeTarget {
    pub function: String,
    pub branch_label: u32,
    pub arm: Arm,
}

impl fmt::Display for CodeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}:{}", self.function, self.branch_label, self.arm)
    }
}

/// A parsed, validated program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub records: Vec<RecordDecl>,
    pub functions: Vec<Function>,
    /// Name of the application entry function (single parameter).
    pub entry: String,
    /// Distinct string literals from application code, in source order.
    pub string_constants: Vec<String>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn record(&self, name: &str) -> Option<&RecordDecl> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn entry_function(&self) -> &Function {
        self.function(&self.entry)
            .expect("validated at parse time: entry exists")
    }

    /// The declared type of the entry function's single parameter.
    pub fn input_type(&self) -> &Type {
        &self.entry_function().params[0].1
    }

    /// Per-function map from variable name to its static type, including
    /// parameters. Synthetic (`$`-prefixed) variables are included; callers
    /// that must not see them filter on the name.
    pub fn var_types(&self, func: &Function) -> BTreeMap<String, Type> {
        let mut types = BTreeMap::new();
        for (name, ty) in &func.params {
            types.insert(name.clone(), ty.clone());
        }
        for instr in &func.body {
            if let Some(dest) = instr.op.dest() {
                if let Some(ty) = self.result_type(func, &instr.op, &types) {
                    types.insert(dest.to_string(), ty);
                }
            }
        }
        types
    }

    fn result_type(
        &self,
        _func: &Function,
        op: &Op,
        env: &BTreeMap<String, Type>,
    ) -> Option<Type> {
        match op {
            Op::Const { value, .. } => Some(match value {
                ConstValue::Int(_) => Type::Int,
                ConstValue::Bool(_) => Type::Bool,
            }),
            Op::StrConst { .. } => Some(Type::Str),
            Op::FieldLoad { base, field, .. } => {
                let base_ty = env.get(base)?;
                if let Type::Record(name) = base_ty {
                    self.record(name)?.field_type(field).cloned()
                } else {
                    None
                }
            }
            Op::ArrayLoad { base, .. } => {
                if let Type::Array(elem) = env.get(base)? {
                    Some((**elem).clone())
                } else {
                    None
                }
            }
            Op::Call { callee, .. } => self.function(callee)?.return_type.clone(),
            Op::Binop { kind, lhs, .. } => Some(match kind {
                BinopKind::Add
                | BinopKind::Sub
                | BinopKind::Mul
                | BinopKind::Div
                | BinopKind::Mod => Type::Int,
                BinopKind::Eq
                | BinopKind::Ne
                | BinopKind::Lt
                | BinopKind::Le
                | BinopKind::Gt
                | BinopKind::Ge => Type::Bool,
                BinopKind::And | BinopKind::Or => {
                    let _ = lhs;
                    Type::Bool
                }
            }),
            Op::Return { .. } | Op::Branch { .. } => None,
        }
    }
}

/// All code targets of a program: two per branch instruction in application
/// functions. Extern functions contribute none.
pub fn enumerate_code_targets(program: &Program) -> Vec<CodeTarget> {
    let mut targets = Vec::new();
    for func in &program.functions {
        if func.is_extern() {
            continue;
        }
        for instr in &func.body {
            if matches!(instr.op, Op::Branch { .. }) {
                for arm in [Arm::Then, Arm::Else] {
                    targets.push(CodeTarget {
                        function: func.name.clone(),
                        branch_label: instr.label,
                        arm,
                    });
                }
            }
        }
    }
    targets
}

/// True for parser-generated (`$`-prefixed) variables: exempt from the SSA
/// rule, invisible to the dependency analysis.
pub fn is_synthetic_var(name: &str) -> bool {
    name.starts_with('$')
}

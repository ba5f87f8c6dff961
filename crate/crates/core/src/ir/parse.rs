//! Line-oriented parser for the textual IR format.
//!
//! Grammar (one construct per line unless noted):
//!
//! ```text
//! program   := item*
//! item      := record | entry | function
//! record    := "record" NAME "{" field ("," field)* "}"        (may span lines)
//! field     := IDENT ":" type
//! entry     := "entry" NAME                                     (default: "main")
//! function  := "fn" ["extern"] NAME "(" params ")" "->" rettype body?
//! params    := [ VAR ":" type ("," VAR ":" type)* ]
//! rettype   := type | "void"
//! body      := "{" (instr | LABEL ":" | loop)* "}"              (extern bodies are
//!                                                                parsed and discarded)
//! loop      := "loop" (VAR | INT) "{" (instr | LABEL ":")* "}"  (bounded; desugars to a
//!                                                                counted backward branch)
//! instr     := VAR "=" rhs
//!            | "call" NAME "(" args ")"
//!            | "return" [VAR]
//!            | "branch" VAR "," target "," target
//! rhs       := "const" (INT | "true" | "false")
//!            | "strconst" STRING
//!            | "fieldload" VAR "." IDENT
//!            | "arrayload" VAR "[" VAR "]"
//!            | "call" NAME "(" args ")"
//!            | "binop" KIND VAR "," VAR
//! target    := LABEL | INT                                      (instruction index)
//! type      := "int" | "bool" | "string" | NAME | "array" "<" type ">"
//! ```
//!
//! Instruction labels are the 0-based instruction index within the function
//! after loop desugaring. A branch target equal to the body length is an
//! implicit function exit. `#` starts a comment. Variables are `v<N>`
//! (user, single textual assignment) or `$`-prefixed (reserved for the
//! desugarer; exempt from the SSA rule and invisible to analysis).

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{
    is_synthetic_var, BinopKind, ConstValue, Function, FunctionOrigin, Instruction, Op,
    Program, RecordDecl, Type,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("{line}:{col}: SSA violation: {var} assigned more than once in {function}")]
    SsaViolation {
        line: u32,
        col: u32,
        function: String,
        var: String,
    },
    #[error("{line}:{col}: unresolved call target: {callee}")]
    UnresolvedCall { line: u32, col: u32, callee: String },
    #[error("{line}:{col}: undeclared type: {name}")]
    UndeclaredType { line: u32, col: u32, name: String },
    #[error("{line}:{col}: type error: {msg}")]
    Type { line: u32, col: u32, msg: String },
    #[error("{line}:{col}: undefined variable: {var}")]
    UndefinedVar { line: u32, col: u32, var: String },
    #[error("{line}:{col}: invalid branch target: {target}")]
    BadBranchTarget { line: u32, col: u32, target: String },
    #[error("program error: {0}")]
    Program(String),
}

/// Parse and validate a program. Total over the grammar above: any failure
/// is a diagnostic, never a panic.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    Parser::new(text).parse()
}

struct Line<'a> {
    number: u32,
    text: &'a str,
}

/// An instruction whose branch targets may still be symbolic.
struct RawInstr {
    line: u32,
    op: RawOp,
}

enum RawOp {
    Done(Op),
    Branch {
        cond: String,
        then_target: String,
        else_target: String,
    },
}

struct RawFunction {
    line: u32,
    name: String,
    params: Vec<(String, Type)>,
    return_type: Option<Type>,
    origin: FunctionOrigin,
    instrs: Vec<RawInstr>,
    labels: HashMap<String, u32>,
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
    records: Vec<RecordDecl>,
    raw_functions: Vec<RawFunction>,
    entry: Option<String>,
    string_constants: Vec<String>,
    loop_counter: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, raw)| {
                let stripped = match raw.find('#') {
                    Some(idx) => &raw[..idx],
                    None => raw,
                };
                Line {
                    number: (i + 1) as u32,
                    text: stripped.trim(),
                }
            })
            .filter(|l| !l.text.is_empty())
            .collect();
        Parser {
            lines,
            pos: 0,
            records: Vec::new(),
            raw_functions: Vec::new(),
            entry: None,
            string_constants: Vec::new(),
            loop_counter: 0,
        }
    }

    fn parse(mut self) -> Result<Program, ParseError> {
        while self.pos < self.lines.len() {
            let line = &self.lines[self.pos];
            let (lineno, text) = (line.number, line.text);
            if text.starts_with("record ") || text == "record" {
                self.parse_record()?;
            } else if let Some(rest) = text.strip_prefix("entry ") {
                let name = rest.trim();
                if !is_ident(name) {
                    return Err(syntax(lineno, 7, "expected function name after 'entry'"));
                }
                if self.entry.is_some() {
                    return Err(syntax(lineno, 1, "duplicate entry declaration"));
                }
                self.entry = Some(name.to_string());
                self.pos += 1;
            } else if text.starts_with("fn ") || text == "fn" {
                self.parse_function()?;
            } else {
                return Err(syntax(
                    lineno,
                    1,
                    format!("expected 'record', 'entry' or 'fn', found {text:?}"),
                ));
            }
        }
        self.finish()
    }

    fn parse_record(&mut self) -> Result<(), ParseError> {
        // Gather lines until the closing brace; records may span lines.
        let start = self.lines[self.pos].number;
        let mut joined = String::new();
        let mut closed = false;
        while self.pos < self.lines.len() {
            joined.push_str(self.lines[self.pos].text);
            joined.push(' ');
            self.pos += 1;
            if joined.contains('}') {
                closed = true;
                break;
            }
        }
        if !closed {
            return Err(syntax(start, 1, "record declaration missing closing '}'"));
        }
        let mut tok = Tokens::new(&joined, start);
        tok.expect_word("record")?;
        let name = tok.ident("record name")?;
        tok.expect_punct('{')?;
        let mut fields = Vec::new();
        if !tok.peek_punct('}') {
            loop {
                let field = tok.ident("field name")?;
                tok.expect_punct(':')?;
                let ty = tok.parse_type()?;
                fields.push((field, ty));
                if tok.peek_punct(',') {
                    tok.expect_punct(',')?;
                } else {
                    break;
                }
            }
        }
        tok.expect_punct('}')?;
        tok.expect_end()?;
        if fields.iter().map(|(n, _)| n).collect::<std::collections::BTreeSet<_>>().len()
            != fields.len()
        {
            return Err(syntax(start, 1, format!("duplicate field in record {name}")));
        }
        self.records.push(RecordDecl { name, fields });
        Ok(())
    }

    fn parse_function(&mut self) -> Result<(), ParseError> {
        let header = &self.lines[self.pos];
        let lineno = header.number;
        let mut tok = Tokens::new(header.text, lineno);
        tok.expect_word("fn")?;
        let origin = if tok.peek_word("extern") {
            tok.expect_word("extern")?;
            FunctionOrigin::Extern
        } else {
            FunctionOrigin::Application
        };
        let name = tok.ident("function name")?;
        tok.expect_punct('(')?;
        let mut params = Vec::new();
        if !tok.peek_punct(')') {
            loop {
                let var = tok.var("parameter")?;
                tok.expect_punct(':')?;
                let ty = tok.parse_type()?;
                params.push((var, ty));
                if tok.peek_punct(',') {
                    tok.expect_punct(',')?;
                } else {
                    break;
                }
            }
        }
        tok.expect_punct(')')?;
        tok.expect_punct('-')?;
        tok.expect_punct('>')?;
        let return_type = if tok.peek_word("void") {
            tok.expect_word("void")?;
            None
        } else {
            Some(tok.parse_type()?)
        };

        // "{}" on the header line closes an empty body immediately; a bare
        // extern header may omit the body entirely.
        let mut has_body = false;
        let mut body_closed_inline = false;
        if tok.peek_punct('{') {
            tok.expect_punct('{')?;
            has_body = true;
            if tok.peek_punct('}') {
                tok.expect_punct('}')?;
                body_closed_inline = true;
            }
        }
        tok.expect_end()?;
        self.pos += 1;

        if origin == FunctionOrigin::Application && !has_body {
            return Err(syntax(lineno, 1, format!("function {name} requires a body")));
        }

        let mut instrs = Vec::new();
        let mut labels = HashMap::new();
        if has_body && !body_closed_inline {
            if origin == FunctionOrigin::Extern {
                // Parse and discard: stubs define extern semantics.
                self.skip_extern_body(lineno)?;
            } else {
                self.parse_body(&name, &mut instrs, &mut labels)?;
            }
        }

        self.raw_functions.push(RawFunction {
            line: lineno,
            name,
            params,
            return_type,
            origin,
            instrs,
            labels,
        });
        Ok(())
    }

    fn skip_extern_body(&mut self, header_line: u32) -> Result<(), ParseError> {
        let mut depth = 1usize;
        while self.pos < self.lines.len() {
            let line = &self.lines[self.pos];
            let text = line.text;
            self.pos += 1;
            if text == "}" {
                depth -= 1;
                if depth == 0 {
                    return Ok(());
                }
            } else if text.ends_with('{') {
                depth += 1;
            } else {
                // Must still be a syntactically valid instruction or label.
                if !text.ends_with(':') {
                    self.parse_instr_line(text, line.number)?;
                }
            }
        }
        Err(syntax(header_line, 1, "extern body missing closing '}'"))
    }

    fn parse_body(
        &mut self,
        func_name: &str,
        instrs: &mut Vec<RawInstr>,
        labels: &mut HashMap<String, u32>,
    ) -> Result<(), ParseError> {
        // Stack of open loops: (body_start_index, counter, one, bound, loop id).
        struct OpenLoop {
            body_start: u32,
            counter: String,
            one: String,
            bound: String,
        }
        let mut loops: Vec<OpenLoop> = Vec::new();

        loop {
            if self.pos >= self.lines.len() {
                return Err(syntax(0, 1, format!("function {func_name} missing closing '}}'")));
            }
            let line = &self.lines[self.pos];
            let (lineno, text) = (line.number, line.text);
            self.pos += 1;

            if text == "}" {
                if let Some(open) = loops.pop() {
                    // Counted backward branch: increment, test, jump back.
                    let cond = format!("{}_c", open.counter.trim_end_matches("_i"));
                    instrs.push(RawInstr {
                        line: lineno,
                        op: RawOp::Done(Op::Binop {
                            dest: open.counter.clone(),
                            kind: BinopKind::Add,
                            lhs: open.counter.clone(),
                            rhs: open.one.clone(),
                        }),
                    });
                    instrs.push(RawInstr {
                        line: lineno,
                        op: RawOp::Done(Op::Binop {
                            dest: cond.clone(),
                            kind: BinopKind::Lt,
                            lhs: open.counter.clone(),
                            rhs: open.bound.clone(),
                        }),
                    });
                    let after = instrs.len() as u32 + 1;
                    instrs.push(RawInstr {
                        line: lineno,
                        op: RawOp::Branch {
                            cond,
                            then_target: open.body_start.to_string(),
                            else_target: after.to_string(),
                        },
                    });
                    continue;
                }
                return Ok(());
            }

            if let Some(rest) = text.strip_prefix("loop ") {
                let rest = rest.trim();
                let Some(bound_text) = rest.strip_suffix('{') else {
                    return Err(syntax(lineno, 1, "loop header must end with '{'"));
                };
                let bound_text = bound_text.trim();
                let id = self.loop_counter;
                self.loop_counter += 1;
                let counter = format!("$l{id}_i");
                let one = format!("$l{id}_one");
                let bound = if let Ok(n) = bound_text.parse::<i64>() {
                    if n < 1 {
                        return Err(syntax(lineno, 6, "loop bound must be >= 1"));
                    }
                    let bvar = format!("$l{id}_n");
                    instrs.push(RawInstr {
                        line: lineno,
                        op: RawOp::Done(Op::Const {
                            dest: bvar.clone(),
                            value: ConstValue::Int(n),
                        }),
                    });
                    bvar
                } else if is_var(bound_text) {
                    bound_text.to_string()
                } else {
                    return Err(syntax(lineno, 6, "loop bound must be a variable or integer"));
                };
                instrs.push(RawInstr {
                    line: lineno,
                    op: RawOp::Done(Op::Const {
                        dest: counter.clone(),
                        value: ConstValue::Int(0),
                    }),
                });
                instrs.push(RawInstr {
                    line: lineno,
                    op: RawOp::Done(Op::Const {
                        dest: one.clone(),
                        value: ConstValue::Int(1),
                    }),
                });
                loops.push(OpenLoop {
                    body_start: instrs.len() as u32,
                    counter,
                    one,
                    bound,
                });
                continue;
            }

            if let Some(label) = text.strip_suffix(':') {
                let label = label.trim();
                if !is_ident(label) {
                    return Err(syntax(lineno, 1, format!("invalid label {label:?}")));
                }
                if labels.insert(label.to_string(), instrs.len() as u32).is_some() {
                    return Err(syntax(lineno, 1, format!("duplicate label {label}")));
                }
                continue;
            }

            let op = self.parse_instr_line(text, lineno)?;
            instrs.push(RawInstr { line: lineno, op });
        }
    }

    fn parse_instr_line(&mut self, text: &str, lineno: u32) -> Result<RawOp, ParseError> {
        let mut tok = Tokens::new(text, lineno);
        if tok.peek_word("return") {
            tok.expect_word("return")?;
            let var = if tok.at_end() { None } else { Some(tok.var("return value")?) };
            tok.expect_end()?;
            return Ok(RawOp::Done(Op::Return { var }));
        }
        if tok.peek_word("branch") {
            tok.expect_word("branch")?;
            let cond = tok.var("branch condition")?;
            tok.expect_punct(',')?;
            let then_target = tok.label_or_int()?;
            tok.expect_punct(',')?;
            let else_target = tok.label_or_int()?;
            tok.expect_end()?;
            return Ok(RawOp::Branch { cond, then_target, else_target });
        }
        if tok.peek_word("call") {
            // Void call without a destination.
            tok.expect_word("call")?;
            let (callee, args) = tok.call_tail()?;
            tok.expect_end()?;
            return Ok(RawOp::Done(Op::Call { dest: None, callee, args }));
        }

        let dest = tok.var("destination")?;
        tok.expect_punct('=')?;
        let op_word = tok.word("operation")?;
        let op = match op_word.as_str() {
            "const" => {
                let value = tok.const_value()?;
                Op::Const { dest, value }
            }
            "strconst" => {
                let literal = tok.string_literal()?;
                let index = self.intern_string(literal);
                Op::StrConst { dest, index }
            }
            "fieldload" => {
                let base = tok.var("base")?;
                tok.expect_punct('.')?;
                let field = tok.ident("field name")?;
                Op::FieldLoad { dest, base, field }
            }
            "arrayload" => {
                let base = tok.var("base")?;
                tok.expect_punct('[')?;
                let index = tok.var("index")?;
                tok.expect_punct(']')?;
                Op::ArrayLoad { dest, base, index }
            }
            "call" => {
                let (callee, args) = tok.call_tail()?;
                Op::Call { dest: Some(dest), callee, args }
            }
            "binop" => {
                let kind_word = tok.word("binop kind")?;
                let Some(kind) = BinopKind::from_mnemonic(&kind_word) else {
                    return Err(syntax(lineno, tok.col(), format!("unknown binop kind {kind_word:?}")));
                };
                let lhs = tok.var("lhs")?;
                tok.expect_punct(',')?;
                let rhs = tok.var("rhs")?;
                Op::Binop { dest, kind, lhs, rhs }
            }
            other => {
                return Err(syntax(lineno, tok.col(), format!("unknown operation {other:?}")));
            }
        };
        tok.expect_end()?;
        Ok(RawOp::Done(op))
    }

    fn intern_string(&mut self, literal: String) -> usize {
        if let Some(idx) = self.string_constants.iter().position(|s| *s == literal) {
            return idx;
        }
        self.string_constants.push(literal);
        self.string_constants.len() - 1
    }

    fn finish(self) -> Result<Program, ParseError> {
        let Parser { records, raw_functions, entry, string_constants, .. } = self;

        let mut seen = std::collections::BTreeSet::new();
        for rec in &records {
            if !seen.insert(rec.name.clone()) {
                return Err(ParseError::Program(format!(
                    "duplicate record declaration: {}",
                    rec.name
                )));
            }
        }
        let mut fn_names = std::collections::BTreeSet::new();
        for f in &raw_functions {
            if !fn_names.insert(f.name.clone()) {
                return Err(ParseError::Program(format!(
                    "duplicate function declaration: {}",
                    f.name
                )));
            }
        }

        let mut program = Program {
            records,
            functions: Vec::new(),
            entry: entry.unwrap_or_else(|| "main".to_string()),
            string_constants,
        };

        // Signatures first so call checking can see every function.
        for raw in &raw_functions {
            for (_, ty) in &raw.params {
                check_type_declared(&program, ty, raw.line)?;
            }
            if let Some(ty) = &raw.return_type {
                check_type_declared(&program, ty, raw.line)?;
            }
            program.functions.push(Function {
                name: raw.name.clone(),
                params: raw.params.clone(),
                return_type: raw.return_type.clone(),
                body: Vec::new(),
                origin: raw.origin,
            });
        }
        for rec in &program.records {
            for (_, ty) in &rec.fields {
                check_type_declared(&program, ty, 0)?;
            }
        }

        for (idx, raw) in raw_functions.iter().enumerate() {
            let body = resolve_and_check(&program, raw)?;
            program.functions[idx].body = body;
        }

        let entry_fn = program
            .function(&program.entry)
            .ok_or_else(|| ParseError::Program(format!("entry function {} not found", program.entry)))?;
        if entry_fn.is_extern() {
            return Err(ParseError::Program(format!(
                "entry function {} must be an application function",
                program.entry
            )));
        }
        if entry_fn.params.len() != 1 {
            return Err(ParseError::Program(format!(
                "entry function {} must take exactly one parameter",
                program.entry
            )));
        }
        Ok(program)
    }
}

fn check_type_declared(program: &Program, ty: &Type, line: u32) -> Result<(), ParseError> {
    match ty {
        Type::Int | Type::Bool | Type::Str => Ok(()),
        Type::Record(name) => {
            if program.record(name).is_some() {
                Ok(())
            } else {
                Err(ParseError::UndeclaredType { line, col: 1, name: name.clone() })
            }
        }
        Type::Array(elem) => check_type_declared(program, elem, line),
    }
}

/// Resolve symbolic branch targets, enforce SSA and def-before-use, and type
/// check every instruction of one application function.
fn resolve_and_check(program: &Program, raw: &RawFunction) -> Result<Vec<Instruction>, ParseError> {
    let len = raw.instrs.len() as u32;
    let mut body = Vec::with_capacity(raw.instrs.len());

    let mut env: BTreeMap<String, Type> = BTreeMap::new();
    for (var, ty) in &raw.params {
        if env.insert(var.clone(), ty.clone()).is_some() {
            return Err(ParseError::SsaViolation {
                line: raw.line,
                col: 1,
                function: raw.name.clone(),
                var: var.clone(),
            });
        }
    }

    for (idx, ri) in raw.instrs.iter().enumerate() {
        let line = ri.line;
        let op = match &ri.op {
            RawOp::Done(op) => op.clone(),
            RawOp::Branch { cond, then_target, else_target } => {
                let then_label = resolve_target(then_target, &raw.labels, len, line)?;
                let else_label = resolve_target(else_target, &raw.labels, len, line)?;
                Op::Branch { cond: cond.clone(), then_label, else_label }
            }
        };

        let use_ty = |var: &String| -> Result<Type, ParseError> {
            env.get(var)
                .cloned()
                .ok_or_else(|| ParseError::UndefinedVar { line, col: 1, var: var.clone() })
        };

        let result_ty: Option<Type> = match &op {
            Op::Const { value, .. } => Some(match value {
                ConstValue::Int(_) => Type::Int,
                ConstValue::Bool(_) => Type::Bool,
            }),
            Op::StrConst { .. } => Some(Type::Str),
            Op::FieldLoad { base, field, .. } => {
                let base_ty = use_ty(base)?;
                let Type::Record(rec_name) = &base_ty else {
                    return Err(type_err(line, format!("fieldload base {base} is not a record")));
                };
                let rec = program.record(rec_name).ok_or_else(|| ParseError::UndeclaredType {
                    line,
                    col: 1,
                    name: rec_name.clone(),
                })?;
                let Some(fty) = rec.field_type(field) else {
                    return Err(type_err(line, format!("record {rec_name} has no field {field}")));
                };
                Some(fty.clone())
            }
            Op::ArrayLoad { base, index, .. } => {
                let base_ty = use_ty(base)?;
                let Type::Array(elem) = base_ty else {
                    return Err(type_err(line, format!("arrayload base {base} is not an array")));
                };
                if use_ty(index)? != Type::Int {
                    return Err(type_err(line, format!("array index {index} must be int")));
                }
                Some(*elem)
            }
            Op::Call { dest, callee, args } => {
                let Some(f) = program.function(callee) else {
                    return Err(ParseError::UnresolvedCall { line, col: 1, callee: callee.clone() });
                };
                if f.params.len() != args.len() {
                    return Err(type_err(
                        line,
                        format!(
                            "call to {callee} expects {} arguments, got {}",
                            f.params.len(),
                            args.len()
                        ),
                    ));
                }
                for (arg, (pname, pty)) in args.iter().zip(&f.params) {
                    let aty = use_ty(arg)?;
                    if aty != *pty {
                        return Err(type_err(
                            line,
                            format!("call to {callee}: argument for {pname} has type {aty}, expected {pty}"),
                        ));
                    }
                }
                match (&f.return_type, dest) {
                    (None, Some(_)) => {
                        return Err(type_err(line, format!("{callee} returns void; cannot bind result")));
                    }
                    (Some(rt), _) => Some(rt.clone()),
                    (None, None) => None,
                }
            }
            Op::Binop { kind, lhs, rhs, .. } => {
                let lt = use_ty(lhs)?;
                let rt = use_ty(rhs)?;
                match kind {
                    BinopKind::Add
                    | BinopKind::Sub
                    | BinopKind::Mul
                    | BinopKind::Div
                    | BinopKind::Mod
                    | BinopKind::Lt
                    | BinopKind::Le
                    | BinopKind::Gt
                    | BinopKind::Ge => {
                        if lt != Type::Int || rt != Type::Int {
                            return Err(type_err(
                                line,
                                format!("binop {} requires int operands", kind.mnemonic()),
                            ));
                        }
                    }
                    BinopKind::Eq | BinopKind::Ne => {
                        if lt != rt || !lt.is_primitive() {
                            return Err(type_err(
                                line,
                                format!("binop {} requires matching int/bool/string operands", kind.mnemonic()),
                            ));
                        }
                    }
                    BinopKind::And | BinopKind::Or => {
                        if lt != Type::Bool || rt != Type::Bool {
                            return Err(type_err(
                                line,
                                format!("binop {} requires bool operands", kind.mnemonic()),
                            ));
                        }
                    }
                }
                Some(match kind {
                    BinopKind::Add
                    | BinopKind::Sub
                    | BinopKind::Mul
                    | BinopKind::Div
                    | BinopKind::Mod => Type::Int,
                    _ => Type::Bool,
                })
            }
            Op::Return { var } => {
                let f = program.function(&raw.name).expect("own function");
                match (&f.return_type, var) {
                    (None, None) => {}
                    (None, Some(v)) => {
                        return Err(type_err(line, format!("void function returns value {v}")));
                    }
                    (Some(rt), Some(v)) => {
                        let vt = use_ty(v)?;
                        if vt != *rt {
                            return Err(type_err(
                                line,
                                format!("return type mismatch: {vt}, expected {rt}"),
                            ));
                        }
                    }
                    (Some(rt), None) => {
                        return Err(type_err(line, format!("missing return value of type {rt}")));
                    }
                }
                None
            }
            Op::Branch { cond, .. } => {
                if use_ty(cond)? != Type::Bool {
                    return Err(type_err(line, format!("branch condition {cond} must be bool")));
                }
                None
            }
        };

        if let Some(dest) = op.dest() {
            if !is_synthetic_var(dest) && env.contains_key(dest) {
                return Err(ParseError::SsaViolation {
                    line,
                    col: 1,
                    function: raw.name.clone(),
                    var: dest.to_string(),
                });
            }
            if let Some(ty) = result_ty {
                env.insert(dest.to_string(), ty);
            }
        }

        body.push(Instruction { label: idx as u32, op });
    }

    Ok(body)
}

fn resolve_target(
    target: &str,
    labels: &HashMap<String, u32>,
    len: u32,
    line: u32,
) -> Result<u32, ParseError> {
    if let Ok(n) = target.parse::<u32>() {
        if n > len {
            return Err(ParseError::BadBranchTarget { line, col: 1, target: target.to_string() });
        }
        return Ok(n);
    }
    labels
        .get(target)
        .copied()
        .ok_or_else(|| ParseError::BadBranchTarget { line, col: 1, target: target.to_string() })
}

fn syntax(line: u32, col: u32, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, col, msg: msg.into() }
}

fn type_err(line: u32, msg: impl Into<String>) -> ParseError {
    ParseError::Type { line, col: 1, msg: msg.into() }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_var(s: &str) -> bool {
    if let Some(rest) = s.strip_prefix('$') {
        return is_ident(rest);
    }
    is_ident(s)
}

/// Tiny cursor-based tokenizer over a single (joined) line.
struct Tokens<'a> {
    text: &'a str,
    line: u32,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str, line: u32) -> Self {
        Tokens { text, line, pos: 0 }
    }

    fn col(&self) -> u32 {
        self.pos as u32 + 1
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.text.len()
    }

    fn rest(&self) -> &str {
        &self.text[self.pos..]
    }

    fn take_word(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.text.as_bytes();
        if start < bytes.len() && bytes[start] == b'$' {
            self.pos += 1;
        }
        while self.pos < bytes.len()
            && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            Some(self.text[start..self.pos].to_string())
        }
    }

    fn peek_word(&mut self, word: &str) -> bool {
        self.skip_ws();
        let rest = self.rest();
        rest.starts_with(word)
            && rest[word.len()..]
                .chars()
                .next()
                .is_none_or(|c| !(c.is_ascii_alphanumeric() || c == '_'))
    }

    fn expect_word(&mut self, word: &str) -> Result<(), ParseError> {
        if self.peek_word(word) {
            self.pos += word.len();
            Ok(())
        } else {
            Err(syntax(self.line, self.col(), format!("expected {word:?}")))
        }
    }

    fn word(&mut self, what: &str) -> Result<String, ParseError> {
        self.take_word()
            .ok_or_else(|| syntax(self.line, self.col(), format!("expected {what}")))
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        let col = self.col();
        let w = self.word(what)?;
        if is_ident(&w) {
            Ok(w)
        } else {
            Err(syntax(self.line, col, format!("invalid {what}: {w:?}")))
        }
    }

    fn var(&mut self, what: &str) -> Result<String, ParseError> {
        let col = self.col();
        let w = self.word(what)?;
        if is_var(&w) {
            Ok(w)
        } else {
            Err(syntax(self.line, col, format!("invalid {what}: {w:?}")))
        }
    }

    fn label_or_int(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len()
            && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(syntax(self.line, self.col(), "expected branch target"));
        }
        Ok(self.text[start..self.pos].to_string())
    }

    fn peek_punct(&mut self, c: char) -> bool {
        self.skip_ws();
        self.rest().starts_with(c)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek_punct(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(syntax(self.line, self.col(), format!("expected {c:?}")))
        }
    }

    fn expect_end(&mut self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(syntax(
                self.line,
                self.col(),
                format!("unexpected trailing input: {:?}", self.rest().trim()),
            ))
        }
    }

    fn const_value(&mut self) -> Result<ConstValue, ParseError> {
        self.skip_ws();
        if self.peek_word("true") {
            self.expect_word("true")?;
            return Ok(ConstValue::Bool(true));
        }
        if self.peek_word("false") {
            self.expect_word("false")?;
            return Ok(ConstValue::Bool(false));
        }
        let start = self.pos;
        let bytes = self.text.as_bytes();
        if self.pos < bytes.len() && (bytes[self.pos] == b'-' || bytes[self.pos] == b'+') {
            self.pos += 1;
        }
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.text[start..self.pos]
            .parse::<i64>()
            .map(ConstValue::Int)
            .map_err(|_| syntax(self.line, start as u32 + 1, "expected integer or bool constant"))
    }

    fn string_literal(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let col = self.col();
        let bytes = self.text.as_bytes();
        if self.pos >= bytes.len() || bytes[self.pos] != b'"' {
            return Err(syntax(self.line, col, "expected string literal"));
        }
        self.pos += 1;
        let mut out = String::new();
        while self.pos < bytes.len() {
            match bytes[self.pos] {
                b'"' => {
                    self.pos += 1;
                    return Ok(out);
                }
                b'\\' => {
                    self.pos += 1;
                    let esc = bytes.get(self.pos).copied().ok_or_else(|| {
                        syntax(self.line, self.col(), "unterminated escape sequence")
                    })?;
                    out.push(match esc {
                        b'"' => '"',
                        b'\\' => '\\',
                        b'n' => '\n',
                        b't' => '\t',
                        other => {
                            return Err(syntax(
                                self.line,
                                self.col(),
                                format!("unknown escape \\{}", other as char),
                            ));
                        }
                    });
                    self.pos += 1;
                }
                _ => {
                    let ch = self.text[self.pos..].chars().next().unwrap();
                    out.push(ch);
                    self.pos += ch.len_utf8();
                }
            }
        }
        Err(syntax(self.line, col, "unterminated string literal"))
    }

    fn call_tail(&mut self) -> Result<(String, Vec<String>), ParseError> {
        let callee = self.ident("call target")?;
        self.expect_punct('(')?;
        let mut args = Vec::new();
        if !self.peek_punct(')') {
            loop {
                args.push(self.var("argument")?);
                if self.peek_punct(',') {
                    self.expect_punct(',')?;
                } else {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        Ok((callee, args))
    }

    fn parse_type(&mut self) -> Result<Type, ParseError> {
        let col = self.col();
        let word = self.word("type")?;
        match word.as_str() {
            "int" => Ok(Type::Int),
            "bool" => Ok(Type::Bool),
            "string" => Ok(Type::Str),
            "array" => {
                self.expect_punct('<')?;
                let elem = self.parse_type()?;
                self.expect_punct('>')?;
                Ok(Type::Array(Box::new(elem)))
            }
            "void" => Err(syntax(self.line, col, "void is only valid as a return type")),
            name if is_ident(name) => Ok(Type::Record(name.to_string())),
            other => Err(syntax(self.line, col, format!("invalid type {other:?}"))),
        }
    }
}

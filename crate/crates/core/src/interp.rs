//! Tree-walking interpreter over the mini-IR with branch-arm coverage
//! recording, extern stub dispatch, and a per-test step budget.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::ir::{Arm, BinopKind, CodeTarget, ConstValue, Function, Op, Program, Type};

/// A runtime value. Records carry all declared fields; arrays are
/// homogeneous. Aggregates are immutable and shared, so cloning is cheap
/// no matter how large the input gets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(Arc<str>),
    Record { type_name: Arc<str>, fields: Arc<BTreeMap<String, Value>> },
    Array(Arc<Vec<Value>>),
}

impl Value {
    pub fn string(s: impl AsRef<str>) -> Self {
        Value::Str(Arc::from(s.as_ref()))
    }

    pub fn record(type_name: &str, fields: BTreeMap<String, Value>) -> Self {
        Value::Record { type_name: Arc::from(type_name), fields: Arc::new(fields) }
    }

    pub fn array(items: Vec<Value>) -> Self {
        Value::Array(Arc::new(items))
    }

    /// Structural conformance with a declared type.
    pub fn conforms(&self, program: &Program, ty: &Type) -> bool {
        match (self, ty) {
            (Value::Int(_), Type::Int) => true,
            (Value::Bool(_), Type::Bool) => true,
            (Value::Str(_), Type::Str) => true,
            (Value::Array(items), Type::Array(elem)) => {
                items.iter().all(|v| v.conforms(program, elem))
            }
            (Value::Record { type_name, fields }, Type::Record(want)) => {
                if type_name.as_ref() != want.as_str() {
                    return false;
                }
                let Some(decl) = program.record(want) else { return false };
                decl.fields.len() == fields.len()
                    && decl.fields.iter().all(|(name, fty)| {
                        fields.get(name).is_some_and(|v| v.conforms(program, fty))
                    })
            }
            _ => false,
        }
    }
}

/// Application branch-arm coverage plus a flat extern coverage id space.
/// The two never mix: uncovered-target bookkeeping is application-only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageSet {
    pub app: BTreeSet<CodeTarget>,
    pub ext: BTreeSet<String>,
}

impl CoverageSet {
    pub fn merge(&mut self, other: &CoverageSet) {
        self.app.extend(other.app.iter().cloned());
        self.ext.extend(other.ext.iter().cloned());
    }

    pub fn total_len(&self) -> usize {
        self.app.len() + self.ext.len()
    }

    /// True if `other` holds any point not already in `self`.
    pub fn has_new(&self, other: &CoverageSet) -> bool {
        other.app.iter().any(|t| !self.app.contains(t))
            || other.ext.iter().any(|t| !self.ext.contains(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FailureKind {
    /// IR-level runtime trap: division by zero, array index out of bounds,
    /// missing return, unbound variable.
    Assertion,
    /// An extern stub reported a fault, or an unregistered extern was called.
    ExternFault,
    StepBudgetExhausted,
    /// Input shape does not match the entry parameter type (generator bug).
    TypeError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure(FailureKind),
}

#[derive(Debug, Clone)]
pub struct TestResult {
    pub outcome: Outcome,
    pub coverage: CoverageSet,
    pub steps: u64,
    pub wall_time: Duration,
}

impl TestResult {
    pub fn is_success(&self) -> bool {
        matches!(self.outcome, Outcome::Success)
    }
}

/// Per-run mutable state handed to extern stubs: an in-memory key-value
/// store (cleared before each test) and the extern coverage sink.
pub struct ExternCtx<'a> {
    pub store: &'a mut BTreeMap<String, Value>,
    coverage: &'a mut BTreeSet<String>,
}

impl ExternCtx<'_> {
    /// Report a synthetic extern-coverage identifier.
    pub fn cover(&mut self, id: impl Into<String>) {
        self.coverage.insert(id.into());
    }
}

pub type ExternStub =
    Box<dyn Fn(&mut ExternCtx<'_>, &[Value]) -> Result<Option<Value>, String> + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("extern {0} already registered")]
    Duplicate(String),
    #[error("{0} is not declared as an extern function")]
    NotExtern(String),
}

/// Host stubs for extern functions. Stub state lives in the per-run
/// `ExternCtx`, so a registry is immutable during fuzzing.
#[derive(Default)]
pub struct ExternRegistry {
    stubs: BTreeMap<String, ExternStub>,
    extern_names: BTreeSet<String>,
}

impl ExternRegistry {
    pub fn new(program: &Program) -> Self {
        ExternRegistry {
            stubs: BTreeMap::new(),
            extern_names: program
                .functions
                .iter()
                .filter(|f| f.is_extern())
                .map(|f| f.name.clone())
                .collect(),
        }
    }

    pub fn register<F>(&mut self, name: &str, stub: F) -> Result<(), RegistryError>
    where
        F: Fn(&mut ExternCtx<'_>, &[Value]) -> Result<Option<Value>, String>
            + Send
            + Sync
            + 'static,
    {
        if !self.extern_names.contains(name) {
            return Err(RegistryError::NotExtern(name.to_string()));
        }
        if self.stubs.contains_key(name) {
            return Err(RegistryError::Duplicate(name.to_string()));
        }
        self.stubs.insert(name.to_string(), Box::new(stub));
        Ok(())
    }

    fn get(&self, name: &str) -> Option<&ExternStub> {
        self.stubs.get(name)
    }
}

struct Frame<'p> {
    func: &'p Function,
    env: HashMap<String, Value>,
    pc: usize,
    /// Where the caller wants the return value bound.
    ret_dest: Option<String>,
}

enum Step<'p> {
    Push(Frame<'p>),
    /// Pop the current frame, optionally binding (dest, value) in the caller.
    Pop(Option<(String, Value)>),
}

/// Execute the program's entry function on `input`. Deterministic given
/// (program, input); every executed branch adds exactly one arm to
/// coverage; coverage accumulated before a failure is retained.
pub fn run(
    program: &Program,
    externs: &ExternRegistry,
    input: &Value,
    step_budget: u64,
) -> TestResult {
    let started = Instant::now();
    let mut coverage = CoverageSet::default();
    let mut store: BTreeMap<String, Value> = BTreeMap::new();
    let mut steps: u64 = 0;

    let entry = program.entry_function();
    if !input.conforms(program, &entry.params[0].1) {
        return TestResult {
            outcome: Outcome::Failure(FailureKind::TypeError),
            coverage,
            steps,
            wall_time: started.elapsed(),
        };
    }

    let mut stack: Vec<Frame> = Vec::new();
    let mut env = HashMap::new();
    env.insert(entry.params[0].0.clone(), input.clone());
    stack.push(Frame { func: entry, env, pc: 0, ret_dest: None });

    let outcome = loop {
        let Some(frame) = stack.last_mut() else {
            break Outcome::Success;
        };
        let func = frame.func;

        if frame.pc >= func.body.len() {
            // Implicit exit: fine for void functions, a trap otherwise.
            if func.return_type.is_some() {
                break Outcome::Failure(FailureKind::Assertion);
            }
            stack.pop();
            continue;
        }
        if steps >= step_budget {
            break Outcome::Failure(FailureKind::StepBudgetExhausted);
        }
        steps += 1;

        let instr = &func.body[frame.pc];
        let step = exec_instr(
            program,
            externs,
            frame,
            instr,
            &mut coverage,
            &mut store,
        );
        match step {
            Ok(None) => {}
            Ok(Some(Step::Push(new_frame))) => stack.push(new_frame),
            Ok(Some(Step::Pop(binding))) => {
                stack.pop();
                if let Some((dest, value)) = binding {
                    if let Some(caller) = stack.last_mut() {
                        caller.env.insert(dest, value);
                    }
                }
            }
            Err(kind) => break Outcome::Failure(kind),
        }
    };

    TestResult { outcome, coverage, steps, wall_time: started.elapsed() }
}

/// Execute one instruction in `frame`. Returns Ok(None) when the frame
/// advanced in place, Ok(Some(step)) for stack transitions, Err for traps.
fn exec_instr<'p>(
    program: &'p Program,
    externs: &ExternRegistry,
    frame: &mut Frame<'p>,
    instr: &'p crate::ir::Instruction,
    coverage: &mut CoverageSet,
    store: &mut BTreeMap<String, Value>,
) -> Result<Option<Step<'p>>, FailureKind> {
    macro_rules! get_var {
        ($name:expr) => {
            frame.env.get($name).ok_or(FailureKind::Assertion)?
        };
    }

    match &instr.op {
        Op::Const { dest, value } => {
            let v = match value {
                ConstValue::Int(n) => Value::Int(*n),
                ConstValue::Bool(b) => Value::Bool(*b),
            };
            frame.env.insert(dest.clone(), v);
            frame.pc += 1;
            Ok(None)
        }
        Op::StrConst { dest, index } => {
            let v = Value::string(&program.string_constants[*index]);
            frame.env.insert(dest.clone(), v);
            frame.pc += 1;
            Ok(None)
        }
        Op::FieldLoad { dest, base, field } => {
            let Value::Record { fields, .. } = get_var!(base) else {
                return Err(FailureKind::Assertion);
            };
            let v = fields.get(field).cloned().ok_or(FailureKind::Assertion)?;
            frame.env.insert(dest.clone(), v);
            frame.pc += 1;
            Ok(None)
        }
        Op::ArrayLoad { dest, base, index } => {
            let Value::Int(idx) = *get_var!(index) else {
                return Err(FailureKind::Assertion);
            };
            let Value::Array(items) = get_var!(base) else {
                return Err(FailureKind::Assertion);
            };
            if idx < 0 || idx as usize >= items.len() {
                return Err(FailureKind::Assertion);
            }
            let v = items[idx as usize].clone();
            frame.env.insert(dest.clone(), v);
            frame.pc += 1;
            Ok(None)
        }
        Op::Binop { dest, kind, lhs, rhs } => {
            let l = get_var!(lhs).clone();
            let r = get_var!(rhs).clone();
            let v = eval_binop(*kind, &l, &r).ok_or(FailureKind::Assertion)?;
            frame.env.insert(dest.clone(), v);
            frame.pc += 1;
            Ok(None)
        }
        Op::Branch { cond, then_label, else_label } => {
            let Value::Bool(taken) = *get_var!(cond) else {
                return Err(FailureKind::Assertion);
            };
            let arm = if taken { Arm::Then } else { Arm::Else };
            coverage.app.insert(CodeTarget {
                function: frame.func.name.clone(),
                branch_label: instr.label,
                arm,
            });
            frame.pc = if taken { *then_label } else { *else_label } as usize;
            Ok(None)
        }
        Op::Return { var } => {
            let binding = match (var, frame.ret_dest.clone()) {
                (Some(v), Some(dest)) => Some((dest, get_var!(v).clone())),
                _ => None,
            };
            Ok(Some(Step::Pop(binding)))
        }
        Op::Call { dest, callee, args } => {
            let mut actuals = Vec::with_capacity(args.len());
            for a in args {
                actuals.push(get_var!(a).clone());
            }
            let callee_fn = program.function(callee).expect("validated at parse");
            if callee_fn.is_extern() {
                let Some(stub) = externs.get(callee) else {
                    return Err(FailureKind::ExternFault);
                };
                let mut ctx = ExternCtx { store, coverage: &mut coverage.ext };
                match stub(&mut ctx, &actuals) {
                    Ok(result) => {
                        if let (Some(dest), Some(v)) = (dest.as_ref(), result) {
                            frame.env.insert(dest.clone(), v);
                        }
                        frame.pc += 1;
                        Ok(None)
                    }
                    Err(_) => Err(FailureKind::ExternFault),
                }
            } else {
                frame.pc += 1;
                let mut env = HashMap::with_capacity(callee_fn.params.len());
                for ((pname, _), v) in callee_fn.params.iter().zip(actuals) {
                    env.insert(pname.clone(), v);
                }
                Ok(Some(Step::Push(Frame {
                    func: callee_fn,
                    env,
                    pc: 0,
                    ret_dest: dest.clone(),
                })))
            }
        }
    }
}

fn eval_binop(kind: BinopKind, lhs: &Value, rhs: &Value) -> Option<Value> {
    use BinopKind::*;
    match kind {
        Add | Sub | Mul | Div | Mod | Lt | Le | Gt | Ge => {
            let (Value::Int(a), Value::Int(b)) = (lhs, rhs) else { return None };
            Some(match kind {
                Add => Value::Int(a.wrapping_add(*b)),
                Sub => Value::Int(a.wrapping_sub(*b)),
                Mul => Value::Int(a.wrapping_mul(*b)),
                Div => {
                    if *b == 0 {
                        return None;
                    }
                    Value::Int(a.wrapping_div(*b))
                }
                Mod => {
                    if *b == 0 {
                        return None;
                    }
                    Value::Int(a.wrapping_rem(*b))
                }
                Lt => Value::Bool(a < b),
                Le => Value::Bool(a <= b),
                Gt => Value::Bool(a > b),
                Ge => Value::Bool(a >= b),
                _ => unreachable!(),
            })
        }
        Eq | Ne => {
            let equal = match (lhs, rhs) {
                (Value::Int(a), Value::Int(b)) => a == b,
                (Value::Bool(a), Value::Bool(b)) => a == b,
                (Value::Str(a), Value::Str(b)) => a == b,
                _ => return None,
            };
            Some(Value::Bool(if kind == Eq { equal } else { !equal }))
        }
        And | Or => {
            let (Value::Bool(a), Value::Bool(b)) = (lhs, rhs) else { return None };
            Some(Value::Bool(if kind == And { *a && *b } else { *a || *b }))
        }
    }
}

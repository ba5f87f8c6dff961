//! Canonical textual form of a parsed program. Loops appear desugared;
//! branch targets are emitted as symbolic labels. The output reparses to a
//! structurally identical `Program`.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::{ConstValue, Function, Op, Program};

pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    for rec in &program.records {
        let fields = rec
            .fields
            .iter()
            .map(|(name, ty)| format!("{name}: {ty}"))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "record {} {{ {} }}", rec.name, fields);
    }
    if !program.records.is_empty() {
        out.push('\n');
    }
    let _ = writeln!(out, "entry {}", program.entry);
    for func in &program.functions {
        out.push('\n');
        print_function(&mut out, program, func);
    }
    out
}

fn print_function(out: &mut String, program: &Program, func: &Function) {
    let params = func
        .params
        .iter()
        .map(|(var, ty)| format!("{var}: {ty}"))
        .collect::<Vec<_>>()
        .join(", ");
    let ret = match &func.return_type {
        Some(ty) => ty.to_string(),
        None => "void".to_string(),
    };
    if func.is_extern() {
        let _ = writeln!(out, "fn extern {}({params}) -> {ret}", func.name);
        return;
    }
    let _ = writeln!(out, "fn {}({params}) -> {ret} {{", func.name);

    let mut targets: BTreeSet<u32> = BTreeSet::new();
    for instr in &func.body {
        if let Op::Branch { then_label, else_label, .. } = instr.op {
            targets.insert(then_label);
            targets.insert(else_label);
        }
    }

    for instr in &func.body {
        if targets.contains(&instr.label) {
            let _ = writeln!(out, "L{}:", instr.label);
        }
        let _ = writeln!(out, "  {}", render_op(program, &instr.op));
    }
    // A branch may exit the function by targeting one past the last index.
    let exit = func.body.len() as u32;
    if targets.contains(&exit) {
        let _ = writeln!(out, "L{exit}:");
    }
    let _ = writeln!(out, "}}");
}

fn render_op(program: &Program, op: &Op) -> String {
    match op {
        Op::Const { dest, value } => match value {
            ConstValue::Int(n) => format!("{dest} = const {n}"),
            ConstValue::Bool(b) => format!("{dest} = const {b}"),
        },
        Op::StrConst { dest, index } => {
            format!("{dest} = strconst {}", quote(&program.string_constants[*index]))
        }
        Op::FieldLoad { dest, base, field } => format!("{dest} = fieldload {base}.{field}"),
        Op::ArrayLoad { dest, base, index } => format!("{dest} = arrayload {base}[{index}]"),
        Op::Call { dest, callee, args } => {
            let args = args.join(", ");
            match dest {
                Some(d) => format!("{d} = call {callee}({args})"),
                None => format!("call {callee}({args})"),
            }
        }
        Op::Binop { dest, kind, lhs, rhs } => {
            format!("{dest} = binop {} {lhs}, {rhs}", kind.mnemonic())
        }
        Op::Return { var } => match var {
            Some(v) => format!("return {v}"),
            None => "return".to_string(),
        },
        Op::Branch { cond, then_label, else_label } => {
            format!("branch {cond}, L{then_label}, L{else_label}")
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

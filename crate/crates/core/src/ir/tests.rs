use super::*;

/// Transcription of the year-filter dataflow: array load, an extern call,
/// an application call, then a branch on an int comparison.
pub(crate) const FIG5_SRC: &str = r#"
record FileRec { id: int }
record PathRec { id: int }

entry main

fn extern to_path(v0: FileRec) -> PathRec

fn year_taken(v0: PathRec) -> int {
  v1 = fieldload v0.id
  return v1
}

fn main(v10: array<FileRec>) -> void {
  v26 = const 0
  v3 = const 2008
  v17 = arrayload v10[v26]
  v19 = call to_path(v17)
  v21 = call year_taken(v19)
  vb = binop ne v21, v3
  branch vb, Lt, Le
Lt:
  return
Le:
  return
}
"#;

#[test]
fn minimal_program_parses() {
    let program = parse_program("fn main(v0: int) -> void {\n  return\n}").unwrap();
    assert_eq!(program.functions.len(), 1);
    assert_eq!(program.entry, "main");
    assert!(enumerate_code_targets(&program).is_empty());
}

#[test]
fn fig5_transcription_has_one_branch_two_targets() {
    let program = parse_program(FIG5_SRC).unwrap();
    let targets = enumerate_code_targets(&program);
    assert_eq!(targets.len(), 2);
    assert!(targets.iter().all(|t| t.function == "main" && t.branch_label == 6));
    assert_eq!(
        targets.iter().map(|t| t.arm).collect::<Vec<_>>(),
        vec![Arm::Then, Arm::Else]
    );
}

#[test]
fn double_assignment_is_ssa_violation() {
    let src = "fn main(v0: int) -> void {\n  v1 = const 1\n  v1 = const 2\n  return\n}";
    let err = parse_program(src).unwrap_err();
    assert!(matches!(err, ParseError::SsaViolation { ref var, .. } if var == "v1"), "{err}");
}

#[test]
fn reassigning_a_parameter_is_ssa_violation() {
    let src = "fn main(v0: int) -> void {\n  v0 = const 1\n  return\n}";
    assert!(matches!(parse_program(src).unwrap_err(), ParseError::SsaViolation { .. }));
}

#[test]
fn unresolved_call_target_is_distinct_diagnostic() {
    let src = "fn main(v0: int) -> void {\n  v1 = call nope(v0)\n  return\n}";
    let err = parse_program(src).unwrap_err();
    assert!(matches!(err, ParseError::UnresolvedCall { ref callee, .. } if callee == "nope"));
}

#[test]
fn undeclared_type_is_distinct_diagnostic() {
    let src = "fn main(v0: Widget) -> void {\n  return\n}";
    let err = parse_program(src).unwrap_err();
    assert!(matches!(err, ParseError::UndeclaredType { ref name, .. } if name == "Widget"));
}

#[test]
fn syntax_error_carries_line_and_column() {
    let src = "fn main(v0: int) -> void {\n  v1 = klonk v0\n  return\n}";
    match parse_program(src).unwrap_err() {
        ParseError::Syntax { line, col, .. } => {
            assert_eq!(line, 2);
            assert!(col > 1);
        }
        other => panic!("expected syntax error, got {other}"),
    }
}

#[test]
fn branch_condition_must_be_bool() {
    let src = "fn main(v0: int) -> void {\n  v1 = const 3\n  branch v1, 2, 2\n  return\n}";
    assert!(matches!(parse_program(src).unwrap_err(), ParseError::Type { .. }));
}

#[test]
fn extern_body_is_parsed_and_discarded() {
    let src = r#"
fn extern helper(v0: int) -> int {
  v1 = const 1
  v2 = binop lt v0, v1
  branch v2, La, Lb
La:
  return v1
Lb:
  return v0
}

fn f(v0: int) -> bool {
  v1 = const 0
  v2 = binop lt v0, v1
  branch v2, Lt, Le
Lt:
  v3 = const true
  return v3
Le:
  v4 = const false
  return v4
}

fn main(v0: int) -> void {
  v1 = call f(v0)
  branch v1, Lx, Ly
Lx:
  v2 = call f(v0)
  branch v2, Ly, Ly
Ly:
  return
}
"#;
    let program = parse_program(src).unwrap();
    let helper = program.function("helper").unwrap();
    assert!(helper.is_extern());
    assert!(helper.body.is_empty());
    // 3 application branches = 6 targets; the 2 branches written inside the
    // extern stub contribute none.
    assert_eq!(enumerate_code_targets(&program).len(), 6);
}

#[test]
fn string_constants_interned_in_source_order() {
    let src = r#"
fn main(v0: int) -> void {
  v1 = strconst "beta"
  v2 = strconst "alpha"
  v3 = strconst "beta"
  return
}
"#;
    let program = parse_program(src).unwrap();
    assert_eq!(program.string_constants, vec!["beta".to_string(), "alpha".to_string()]);
    let f = program.function("main").unwrap();
    let indices: Vec<usize> = f
        .body
        .iter()
        .filter_map(|i| match i.op {
            Op::StrConst { index, .. } => Some(index),
            _ => None,
        })
        .collect();
    assert_eq!(indices, vec![0, 1, 0]);
}

#[test]
fn loop_sugar_desugars_to_counted_backward_branch() {
    let src = r#"
fn extern tick(v0: int) -> void

fn main(v0: int) -> void {
  v1 = const 41
  loop 3 {
    call tick(v1)
  }
  return
}
"#;
    let program = parse_program(src).unwrap();
    let main = program.function("main").unwrap();
    let branches: Vec<&Instruction> = main
        .body
        .iter()
        .filter(|i| matches!(i.op, Op::Branch { .. }))
        .collect();
    assert_eq!(branches.len(), 1);
    let Op::Branch { then_label, else_label, cond } = &branches[0].op else { unreachable!() };
    assert!(*then_label < branches[0].label, "loop branch jumps backward");
    assert_eq!(*else_label, branches[0].label + 1);
    assert!(is_synthetic_var(cond));
    // The desugared loop still counts as a branch: 2 code targets.
    assert_eq!(enumerate_code_targets(&program).len(), 2);
}

#[test]
fn labels_strictly_increase_in_listing_order() {
    let program = parse_program(FIG5_SRC).unwrap();
    for func in &program.functions {
        for window in func.body.windows(2) {
            assert!(window[0].label < window[1].label);
        }
    }
}

#[test]
fn round_trip_is_structurally_identical() {
    for src in [
        FIG5_SRC,
        "fn main(v0: int) -> void {\n  return\n}",
        r#"
record P { x: int, y: bool }

entry go

fn extern probe(v0: P) -> int

fn go(v0: P) -> void {
  v1 = strconst "needle"
  v2 = fieldload v0.y
  branch v2, Lt, Le
Lt:
  v3 = call probe(v0)
  loop 2 {
    call probe(v0)
  }
  return
Le:
  return
}
"#,
    ] {
        let program = parse_program(src).unwrap();
        let printed = pretty_print(&program);
        let reparsed = parse_program(&printed)
            .unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
        assert_eq!(program, reparsed, "round-trip mismatch for:\n{printed}");
    }
}

#[test]
fn targets_are_two_per_application_branch() {
    let program = parse_program(FIG5_SRC).unwrap();
    let branches: usize = program
        .functions
        .iter()
        .filter(|f| !f.is_extern())
        .flat_map(|f| &f.body)
        .filter(|i| matches!(i.op, Op::Branch { .. }))
        .count();
    assert_eq!(enumerate_code_targets(&program).len(), 2 * branches);
}

#[test]
fn entry_must_take_exactly_one_parameter() {
    let src = "fn main(v0: int, v1: int) -> void {\n  return\n}";
    assert!(matches!(parse_program(src).unwrap_err(), ParseError::Program(_)));
}

#[test]
fn void_call_cannot_bind_result() {
    let src = r#"
fn extern fire(v0: int) -> void

fn main(v0: int) -> void {
  v1 = call fire(v0)
  return
}
"#;
    assert!(matches!(parse_program(src).unwrap_err(), ParseError::Type { .. }));
}

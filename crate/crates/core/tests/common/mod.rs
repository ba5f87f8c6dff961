//! Shared test utilities: a seeded random mini-IR program generator and an
//! independent brute-force influencing-type oracle.
//!
//! The oracle deliberately shares no code with the analysis module: it
//! derives edges by a direct scan of the instruction listing and runs a
//! plain breadth-first search per target, so the two can disagree if
//! either is wrong.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use typefuzz::ir::{CodeTarget, Op, Program, Type};

// ---------------------------------------------------------------- generator

/// Build the source text of a random, always-valid program with at most
/// `max_instructions` instructions across all functions.
pub fn random_program_source(seed: u64, max_instructions: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();

    // Record declarations; later records may nest earlier ones.
    let n_records = rng.random_range(1..=3);
    let mut record_names: Vec<String> = Vec::new();
    for i in 0..n_records {
        let name = format!("R{i}");
        let n_fields = rng.random_range(1..=3);
        let mut fields = Vec::new();
        for f in 0..n_fields {
            let ty = random_type(&mut rng, &record_names, true);
            fields.push(format!("f{f}: {ty}"));
        }
        out.push_str(&format!("record {name} {{ {} }}\n", fields.join(", ")));
        record_names.push(name);
    }
    out.push('\n');

    // Signatures first so bodies can call anything, including themselves.
    struct Sig {
        name: String,
        params: Vec<String>,
        ret: Option<String>,
        is_extern: bool,
    }
    let mut sigs: Vec<Sig> = Vec::new();
    let n_externs = rng.random_range(0..=2);
    for i in 0..n_externs {
        let n_params = rng.random_range(1..=2);
        let params =
            (0..n_params).map(|_| random_type(&mut rng, &record_names, true)).collect();
        // Extern results are the main source of record-typed values.
        let ret = if rng.random_bool(0.7) {
            Some(random_type(&mut rng, &record_names, true))
        } else {
            None
        };
        sigs.push(Sig { name: format!("ext{i}"), params, ret, is_extern: true });
    }
    let n_helpers = rng.random_range(0..=3);
    for i in 0..n_helpers {
        let n_params = rng.random_range(1..=3);
        let params =
            (0..n_params).map(|_| random_type(&mut rng, &record_names, true)).collect();
        let ret = if rng.random_bool(0.8) {
            Some(["int", "bool", "string"][rng.random_range(0..3)].to_string())
        } else {
            None
        };
        sigs.push(Sig { name: format!("h{i}"), params, ret, is_extern: false });
    }
    let entry_param = if record_names.is_empty() {
        "int".to_string()
    } else {
        record_names[rng.random_range(0..record_names.len())].clone()
    };
    sigs.push(Sig {
        name: "main".to_string(),
        params: vec![entry_param],
        ret: None,
        is_extern: false,
    });

    for sig in &sigs {
        let params = sig
            .params
            .iter()
            .enumerate()
            .map(|(i, t)| format!("v{i}: {t}"))
            .collect::<Vec<_>>()
            .join(", ");
        let ret = sig.ret.as_deref().unwrap_or("void");
        if sig.is_extern {
            out.push_str(&format!("fn extern {}({params}) -> {ret}\n\n", sig.name));
        }
    }

    let callables: Vec<(String, Vec<String>, Option<String>)> = sigs
        .iter()
        .map(|s| (s.name.clone(), s.params.clone(), s.ret.clone()))
        .collect();

    // Worst-case body: 5 straight + bool + branch + arm instr + 2x2
    // returns = 12 instructions; with at most 4 application functions the
    // program stays within the cap.
    let app_count = sigs.iter().filter(|s| !s.is_extern).count();
    let per_fn = (max_instructions / app_count).clamp(3, 12);
    for sig in sigs.iter().filter(|s| !s.is_extern) {
        let body = random_body(&mut rng, &sig.params, sig.ret.as_deref(), &callables, per_fn);
        let params = sig
            .params
            .iter()
            .enumerate()
            .map(|(i, t)| format!("v{i}: {t}"))
            .collect::<Vec<_>>()
            .join(", ");
        let ret = sig.ret.as_deref().unwrap_or("void");
        out.push_str(&format!("fn {}({params}) -> {ret} {{\n{body}}}\n\n", sig.name));
    }
    out
}

fn random_type(rng: &mut ChaCha8Rng, records: &[String], allow_arrays: bool) -> String {
    let roll = rng.random_range(0..10);
    match roll {
        0..=2 => "int".to_string(),
        3 => "bool".to_string(),
        4 => "string".to_string(),
        5..=7 if !records.is_empty() => records[rng.random_range(0..records.len())].clone(),
        8 | 9 if allow_arrays => {
            let inner = random_type(rng, records, false);
            format!("array<{inner}>")
        }
        _ => "int".to_string(),
    }
}

/// Emit a type-correct body: a straight-line prefix, possibly one branch
/// with two returning arms, otherwise a single return.
fn random_body(
    rng: &mut ChaCha8Rng,
    params: &[String],
    ret: Option<&str>,
    callables: &[(String, Vec<String>, Option<String>)],
    max_instrs: usize,
) -> String {
    let mut lines: Vec<String> = Vec::new();
    let mut env: Vec<(String, String)> = params
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("v{i}"), t.clone()))
        .collect();
    let mut next_var = params.len();

    // Leave room for the branch scaffolding (up to 7 instructions).
    let straight = rng.random_range(1..=max_instrs.saturating_sub(7).clamp(1, 5));
    for _ in 0..straight {
        emit_random_instr(rng, &mut lines, &mut env, &mut next_var, callables);
    }

    let want_branch = rng.random_bool(0.75);
    if want_branch {
        let cond = ensure_bool(rng, &mut lines, &mut env, &mut next_var);
        lines.push(format!("  branch {cond}, Lt, Le"));
        lines.push("Lt:".to_string());
        if rng.random_bool(0.5) {
            emit_random_instr(rng, &mut lines, &mut env, &mut next_var, callables);
        }
        emit_return(rng, &mut lines, &mut env, &mut next_var, ret);
        lines.push("Le:".to_string());
        emit_return(rng, &mut lines, &mut env, &mut next_var, ret);
    } else {
        emit_return(rng, &mut lines, &mut env, &mut next_var, ret);
    }
    let mut body = lines.join("\n");
    body.push('\n');
    body
}

fn find_var(env: &[(String, String)], ty: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    let matching: Vec<&String> =
        env.iter().filter(|(_, t)| t == ty).map(|(v, _)| v).collect();
    if matching.is_empty() {
        None
    } else {
        Some(matching[rng.random_range(0..matching.len())].clone())
    }
}

fn fresh(next_var: &mut usize) -> String {
    let v = format!("v{next_var}");
    *next_var += 1;
    v
}

fn emit_random_instr(
    rng: &mut ChaCha8Rng,
    lines: &mut Vec<String>,
    env: &mut Vec<(String, String)>,
    next_var: &mut usize,
    callables: &[(String, Vec<String>, Option<String>)],
) {
    for _ in 0..8 {
        match rng.random_range(0..8) {
            0 => {
                let v = fresh(next_var);
                lines.push(format!("  {v} = const {}", rng.random_range(-100..100)));
                env.push((v, "int".to_string()));
                return;
            }
            1 => {
                let v = fresh(next_var);
                lines.push(format!("  {v} = const {}", rng.random_bool(0.5)));
                env.push((v, "bool".to_string()));
                return;
            }
            2 => {
                let v = fresh(next_var);
                lines.push(format!("  {v} = strconst \"s{}\"", rng.random_range(0..5)));
                env.push((v, "string".to_string()));
                return;
            }
            3 => {
                // Arithmetic over two (possibly equal) int vars. Stick to
                // add/sub/mul so random execution cannot trap on div.
                if let Some(a) = find_var(env, "int", rng) {
                    if let Some(b) = find_var(env, "int", rng) {
                        let v = fresh(next_var);
                        let op = ["add", "sub", "mul"][rng.random_range(0..3)];
                        lines.push(format!("  {v} = binop {op} {a}, {b}"));
                        env.push((v, "int".to_string()));
                        return;
                    }
                }
            }
            4 => {
                // Comparison producing a bool.
                if let Some(a) = find_var(env, "int", rng) {
                    if let Some(b) = find_var(env, "int", rng) {
                        let v = fresh(next_var);
                        let op = ["eq", "ne", "lt", "le", "gt", "ge"][rng.random_range(0..6)];
                        lines.push(format!("  {v} = binop {op} {a}, {b}"));
                        env.push((v, "bool".to_string()));
                        return;
                    }
                }
            }
            5 => {
                // Field load from any record-typed var in scope.
                let records: Vec<(String, String)> = env
                    .iter()
                    .filter(|(_, t)| t.starts_with('R'))
                    .map(|(v, t)| (v.clone(), t.clone()))
                    .collect();
                if let Some((base, _ty)) = records.get(rng.random_range(0..records.len().max(1)))
                {
                    // Field types are only known to the parser; load f0,
                    // which every record declares.
                    let v = fresh(next_var);
                    lines.push(format!("  {v} = fieldload {base}.f0"));
                    env.push((v, format!("#field:{base}")));
                    // The placeholder type is unusable for further picks,
                    // which keeps generation honest without tracking the
                    // record tables here.
                    return;
                }
            }
            6 => {
                // Array load when an array and an index are in scope.
                let arrays: Vec<(String, String)> = env
                    .iter()
                    .filter(|(_, t)| t.starts_with("array<"))
                    .map(|(v, t)| (v.clone(), t.clone()))
                    .collect();
                if !arrays.is_empty() {
                    if let Some(idx) = find_var(env, "int", rng) {
                        let (base, aty) = arrays[rng.random_range(0..arrays.len())].clone();
                        let elem = aty["array<".len()..aty.len() - 1].to_string();
                        let v = fresh(next_var);
                        lines.push(format!("  {v} = arrayload {base}[{idx}]"));
                        env.push((v, elem));
                        return;
                    }
                }
            }
            _ => {
                // Call something whose arguments are all satisfiable.
                let (name, param_tys, ret) =
                    callables[rng.random_range(0..callables.len())].clone();
                let mut args = Vec::new();
                let mut ok = true;
                for ty in &param_tys {
                    match find_var(env, ty, rng) {
                        Some(v) => args.push(v),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    match ret {
                        Some(rty) => {
                            let v = fresh(next_var);
                            lines.push(format!("  {v} = call {name}({})", args.join(", ")));
                            env.push((v, rty));
                        }
                        None => lines.push(format!("  call {name}({})", args.join(", "))),
                    }
                    return;
                }
            }
        }
    }
    // Everything type-dependent failed; a const always works.
    let v = fresh(next_var);
    lines.push(format!("  {v} = const 0"));
    env.push((v, "int".to_string()));
}

fn ensure_bool(
    rng: &mut ChaCha8Rng,
    lines: &mut Vec<String>,
    env: &mut Vec<(String, String)>,
    next_var: &mut usize,
) -> String {
    if rng.random_bool(0.8) {
        if let Some(b) = find_var(env, "bool", rng) {
            return b;
        }
    }
    if let (Some(a), Some(b)) = (find_var(env, "int", rng), find_var(env, "int", rng)) {
        let v = fresh(next_var);
        lines.push(format!("  {v} = binop lt {a}, {b}"));
        env.push((v.clone(), "bool".to_string()));
        return v;
    }
    let v = fresh(next_var);
    lines.push(format!("  {v} = const true"));
    env.push((v.clone(), "bool".to_string()));
    v
}

fn emit_return(
    rng: &mut ChaCha8Rng,
    lines: &mut Vec<String>,
    env: &mut Vec<(String, String)>,
    next_var: &mut usize,
    ret: Option<&str>,
) {
    match ret {
        None => lines.push("  return".to_string()),
        Some(ty) => {
            if let Some(v) = find_var(env, ty, rng) {
                lines.push(format!("  return {v}"));
                return;
            }
            let v = fresh(next_var);
            match ty {
                "int" => lines.push(format!("  {v} = const {}", rng.random_range(0..10))),
                "bool" => lines.push(format!("  {v} = const false")),
                "string" => lines.push(format!("  {v} = strconst \"r\"")),
                other => unreachable!("helpers only return primitives, got {other}"),
            }
            env.push((v.clone(), ty.to_string()));
            lines.push(format!("  return {v}"));
        }
    }
}

// ------------------------------------------------------------------- oracle

/// Node encoding for the oracle's own graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Node {
    Var(String, String),
    Arg(String, usize),
    Ret(String),
}

fn node_for(program: &Program, function: &str, var: &str) -> Node {
    let func = program.function(function).expect("function exists");
    match func.params.iter().position(|(p, _)| p == var) {
        Some(i) => Node::Arg(function.to_string(), i),
        None => Node::Var(function.to_string(), var.to_string()),
    }
}

/// Functions reachable from the entry via call instructions.
fn reachable_functions(program: &Program) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut work = vec![program.entry.clone()];
    while let Some(name) = work.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        let Some(func) = program.function(&name) else { continue };
        if func.is_extern() {
            continue;
        }
        for instr in &func.body {
            if let Op::Call { callee, .. } = &instr.op {
                work.push(callee.clone());
            }
        }
    }
    seen
}

fn oracle_edges(program: &Program) -> Vec<(Node, Node)> {
    let mut edges = Vec::new();
    let reachable = reachable_functions(program);
    for func in &program.functions {
        if func.is_extern() || !reachable.contains(&func.name) {
            continue;
        }
        let f = func.name.as_str();
        for instr in &func.body {
            match &instr.op {
                Op::FieldLoad { dest, base, .. } => {
                    edges.push((node_for(program, f, dest), node_for(program, f, base)));
                }
                Op::ArrayLoad { dest, base, index } => {
                    edges.push((node_for(program, f, dest), node_for(program, f, base)));
                    edges.push((node_for(program, f, dest), node_for(program, f, index)));
                }
                Op::Binop { dest, lhs, rhs, .. } => {
                    edges.push((node_for(program, f, dest), node_for(program, f, lhs)));
                    edges.push((node_for(program, f, dest), node_for(program, f, rhs)));
                }
                Op::Call { dest, callee, args } => {
                    if let Some(dest) = dest {
                        for arg in args {
                            edges.push((node_for(program, f, dest), node_for(program, f, arg)));
                        }
                    }
                    let callee_is_app =
                        program.function(callee).is_some_and(|c| !c.is_extern());
                    if callee_is_app {
                        for (i, arg) in args.iter().enumerate() {
                            edges.push((
                                Node::Arg(callee.clone(), i),
                                node_for(program, f, arg),
                            ));
                        }
                        if let Some(dest) = dest {
                            edges.push((node_for(program, f, dest), Node::Ret(callee.clone())));
                        }
                    }
                }
                Op::Return { var: Some(v) } => {
                    edges.push((Node::Ret(f.to_string()), node_for(program, f, v)));
                }
                _ => {}
            }
        }
    }
    edges
}

fn oracle_node_type(
    program: &Program,
    types: &BTreeMap<String, BTreeMap<String, Type>>,
    node: &Node,
) -> Option<Type> {
    match node {
        Node::Var(f, v) => types.get(f)?.get(v).cloned(),
        Node::Arg(f, i) => program.function(f)?.params.get(*i).map(|(_, t)| t.clone()),
        Node::Ret(f) => program.function(f)?.return_type.clone(),
    }
}

fn eligible(ty: &Type) -> bool {
    match ty {
        Type::Int | Type::Bool | Type::Str => false,
        Type::Record(_) => true,
        Type::Array(elem) => eligible(elem),
    }
}

/// Brute-force per-node shortest-path backward reachability from the
/// branch condition of `target`: returns (type name, min distance) sorted
/// ascending by (distance, name).
pub fn oracle_influencing(program: &Program, target: &CodeTarget) -> Vec<(String, u32)> {
    let edges = oracle_edges(program);
    let mut adjacency: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
    for (from, to) in &edges {
        adjacency.entry(from.clone()).or_default().push(to.clone());
    }

    let func = program.function(&target.function).expect("target function");
    let cond = func
        .body
        .iter()
        .find(|i| i.label == target.branch_label)
        .and_then(|i| match &i.op {
            Op::Branch { cond, .. } => Some(cond.clone()),
            _ => None,
        })
        .expect("target labels a branch");
    let start = node_for(program, &target.function, &cond);

    let var_types: BTreeMap<String, BTreeMap<String, Type>> = program
        .functions
        .iter()
        .filter(|f| !f.is_extern())
        .map(|f| (f.name.clone(), program.var_types(f)))
        .collect();

    let mut dist: BTreeMap<Node, u32> = BTreeMap::new();
    let mut queue = VecDeque::new();
    dist.insert(start.clone(), 0);
    queue.push_back(start);
    while let Some(node) = queue.pop_front() {
        let d = dist[&node];
        if let Some(succs) = adjacency.get(&node) {
            for succ in succs {
                if !dist.contains_key(succ) {
                    dist.insert(succ.clone(), d + 1);
                    queue.push_back(succ.clone());
                }
            }
        }
    }

    let mut best: BTreeMap<String, u32> = BTreeMap::new();
    for (node, d) in &dist {
        if *d == 0 {
            continue;
        }
        if let Some(ty) = oracle_node_type(program, &var_types, node) {
            if eligible(&ty) {
                let name = ty.type_name();
                let entry = best.entry(name).or_insert(*d);
                if *d < *entry {
                    *entry = *d;
                }
            }
        }
    }
    let mut result: Vec<(String, u32)> = best.into_iter().collect();
    result.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    result
}

//! Static phase: variable dependency graph, per-target influencing types
//! with distances, type unification, and the constant-string lookup table.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;

use crate::ir::{
    enumerate_code_targets, is_synthetic_var, CodeTarget, Function, Op, Program, Type,
};

/// Distances are clamped into this range at unification and after every
/// dynamic update, so the x3/4 and x4/3 updates can never drive a selection
/// weight to zero or infinity.
pub const D_MIN: f64 = 0.25;
pub const D_MAX: f64 = 1024.0;

/// A node in the dependency graph: a variable, a formal argument slot, or a
/// function's return slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarRef {
    Var { function: String, var: String },
    FormalArg { function: String, index: usize },
    Ret { function: String },
}

impl std::fmt::Display for VarRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VarRef::Var { function, var } => write!(f, "{function}/{var}"),
            VarRef::FormalArg { function, index } => write!(f, "farg({function},{index})"),
            VarRef::Ret { function } => write!(f, "ret({function})"),
        }
    }
}

/// Directed use -> def dependency graph over application code.
#[derive(Debug, Clone, Default)]
pub struct DepGraph {
    pub nodes: BTreeSet<VarRef>,
    pub edges: BTreeSet<(VarRef, VarRef)>,
    succ: BTreeMap<VarRef, Vec<VarRef>>,
}

impl DepGraph {
    fn add_node(&mut self, node: VarRef) {
        self.nodes.insert(node);
    }

    fn add_edge(&mut self, from: VarRef, to: VarRef) {
        self.add_node(from.clone());
        self.add_node(to.clone());
        if self.edges.insert((from.clone(), to.clone())) {
            self.succ.entry(from).or_default().push(to);
        }
    }

    pub fn successors(&self, node: &VarRef) -> &[VarRef] {
        self.succ.get(node).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// An influencing type with its hop distance from the branch operands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluencingType {
    pub type_name: String,
    pub distance: u32,
}

/// Per-target influencing types, sorted ascending by distance. Every code
/// target of the program is present as a key, possibly with an empty list.
pub type InfluencingTypeMap = BTreeMap<CodeTarget, Vec<InfluencingType>>;

/// The unified, fuzz-time mutable type -> distance table. Reads and writes
/// go through counted accessors so a campaign can prove it never touched
/// the map (baseline-mode equivalence).
#[derive(Debug, Clone, Default)]
pub struct DistanceMap {
    map: BTreeMap<String, f64>,
    reads: Arc<AtomicU64>,
    writes: Arc<AtomicU64>,
}

impl DistanceMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (name, d) in entries {
            map.insert(name, d.clamp(D_MIN, D_MAX));
        }
        DistanceMap { map, reads: Arc::default(), writes: Arc::default() }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, type_name: &str) -> Option<f64> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.map.get(type_name).copied()
    }

    /// Clamped update. Counted as a write.
    pub fn set(&mut self, type_name: &str, distance: f64) {
        self.writes.fetch_add(1, Ordering::Relaxed);
        self.map.insert(type_name.to_string(), distance.clamp(D_MIN, D_MAX));
    }

    /// Snapshot of (type, distance) pairs in name order. Counted as a read.
    pub fn entries(&self) -> Vec<(String, f64)> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.map.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    /// Uncounted view for reporting and tests; never used by mutation.
    pub fn entries_unchecked(&self) -> Vec<(String, f64)> {
        self.map.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    pub fn read_count(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn write_count(&self) -> u64 {
        self.writes.load(Ordering::Relaxed)
    }
}

/// Application string literals reachable from the entry function.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StringTable(pub Vec<String>);

impl StringTable {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Result of the full static phase.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub gamma: InfluencingTypeMap,
    pub distances: DistanceMap,
    pub strings: StringTable,
    pub uncovered: BTreeSet<CodeTarget>,
}

/// Build the use->def dependency graph for all application functions
/// reachable from the entry. Extern callee bodies are never analyzed;
/// recursive callees are visited once. Synthetic loop-counter variables do
/// not appear in the graph.
pub fn build_dependency_graph(program: &Program) -> DepGraph {
    let mut graph = DepGraph::default();
    let mut visited: BTreeSet<String> = BTreeSet::new();
    let mut stack = vec![program.entry.clone()];
    while let Some(name) = stack.pop() {
        if !visited.insert(name.clone()) {
            continue;
        }
        let Some(func) = program.function(&name) else { continue };
        if func.is_extern() {
            continue;
        }
        add_function_edges(program, func, &mut graph, &mut stack);
    }
    graph
}

fn add_function_edges(
    program: &Program,
    func: &Function,
    graph: &mut DepGraph,
    stack: &mut Vec<String>,
) {
    let fname = &func.name;
    // A function's formal parameter IS its farg node: uses of a param var
    // resolve to farg(f, i), which call sites connect to the actuals.
    let node = |v: &str| -> VarRef {
        if let Some(index) = func.params.iter().position(|(p, _)| p == v) {
            VarRef::FormalArg { function: fname.clone(), index }
        } else {
            VarRef::Var { function: fname.clone(), var: v.to_string() }
        }
    };
    let use_edge = |graph: &mut DepGraph, dest: &str, operand: &str| {
        if is_synthetic_var(dest) || is_synthetic_var(operand) {
            return;
        }
        graph.add_edge(node(dest), node(operand));
    };

    for instr in &func.body {
        match &instr.op {
            Op::Const { dest, .. } | Op::StrConst { dest, .. } => {
                if !is_synthetic_var(dest) {
                    graph.add_node(node(dest));
                }
            }
            Op::FieldLoad { dest, base, .. } => {
                use_edge(graph, dest, base);
            }
            Op::ArrayLoad { dest, base, index } => {
                use_edge(graph, dest, base);
                use_edge(graph, dest, index);
            }
            Op::Binop { dest, lhs, rhs, .. } => {
                use_edge(graph, dest, lhs);
                use_edge(graph, dest, rhs);
            }
            Op::Call { dest, callee, args } => {
                let callee_fn = program.function(callee).expect("validated at parse");
                // The bound result depends on every actual, for both
                // application and extern callees.
                if let Some(dest) = dest {
                    for arg in args {
                        use_edge(graph, dest, arg);
                    }
                }
                if !callee_fn.is_extern() {
                    for (i, arg) in args.iter().enumerate() {
                        if is_synthetic_var(arg) {
                            continue;
                        }
                        graph.add_edge(
                            VarRef::FormalArg { function: callee.clone(), index: i },
                            node(arg),
                        );
                    }
                    if let Some(dest) = dest {
                        if !is_synthetic_var(dest) {
                            graph.add_edge(node(dest), VarRef::Ret { function: callee.clone() });
                        }
                    }
                    stack.push(callee.clone());
                }
            }
            Op::Return { var: Some(v) } => {
                if !is_synthetic_var(v) {
                    graph.add_edge(VarRef::Ret { function: fname.clone() }, node(v));
                }
            }
            Op::Return { var: None } | Op::Branch { .. } => {}
        }
    }
}

/// Static type of a graph node, if known.
fn node_type(
    program: &Program,
    var_types: &BTreeMap<String, BTreeMap<String, Type>>,
    node: &VarRef,
) -> Option<Type> {
    match node {
        VarRef::Var { function, var } => var_types.get(function)?.get(var).cloned(),
        VarRef::FormalArg { function, index } => {
            program.function(function)?.params.get(*index).map(|(_, t)| t.clone())
        }
        VarRef::Ret { function } => program.function(function)?.return_type.clone(),
    }
}

/// Backward BFS from the operands of the target's branch condition.
/// The condition variable's direct dependencies sit at distance 1; a type's
/// distance is the minimum over variables carrying it. Primitive, string and
/// array-of-primitive types are excluded. Sorted ascending by distance, then
/// by name for determinism.
pub fn collect_influencing_types(
    graph: &DepGraph,
    program: &Program,
    target: &CodeTarget,
) -> Vec<InfluencingType> {
    let var_types = program_var_types(program);
    let Some(func) = program.function(&target.function) else { return Vec::new() };
    let Some(instr) = func.body.iter().find(|i| i.label == target.branch_label) else {
        return Vec::new();
    };
    let Op::Branch { cond, .. } = &instr.op else { return Vec::new() };

    let cond_node = match func.params.iter().position(|(p, _)| p == cond) {
        Some(index) => VarRef::FormalArg { function: target.function.clone(), index },
        None => VarRef::Var { function: target.function.clone(), var: cond.clone() },
    };
    let mut queue: VecDeque<(VarRef, u32)> = VecDeque::new();
    let mut seen: BTreeSet<VarRef> = BTreeSet::new();
    for succ in graph.successors(&cond_node) {
        if seen.insert(succ.clone()) {
            queue.push_back((succ.clone(), 1));
        }
    }

    let mut best: BTreeMap<String, u32> = BTreeMap::new();
    while let Some((node, dist)) = queue.pop_front() {
        if let Some(ty) = node_type(program, &var_types, &node) {
            if ty.is_influencing_eligible() {
                let name = ty.type_name();
                let entry = best.entry(name).or_insert(dist);
                if dist < *entry {
                    *entry = dist;
                }
            }
        }
        for succ in graph.successors(&node) {
            if seen.insert(succ.clone()) {
                queue.push_back((succ.clone(), dist + 1));
            }
        }
    }

    let mut result: Vec<InfluencingType> = best
        .into_iter()
        .map(|(type_name, distance)| InfluencingType { type_name, distance })
        .collect();
    result.sort_by(|a, b| a.distance.cmp(&b.distance).then_with(|| a.type_name.cmp(&b.type_name)));
    result
}

fn program_var_types(program: &Program) -> BTreeMap<String, BTreeMap<String, Type>> {
    program
        .functions
        .iter()
        .filter(|f| !f.is_extern())
        .map(|f| (f.name.clone(), program.var_types(f)))
        .collect()
}

/// Merge per-target influencing types into a single type -> distance table.
/// A type appearing in several targets takes its distance from the target
/// with the most influencing types; ties prefer the smaller distance.
/// Deterministic and independent of target iteration order.
pub fn unify_types(gamma: &InfluencingTypeMap) -> DistanceMap {
    let mut chosen: BTreeMap<String, (usize, u32)> = BTreeMap::new();
    for types in gamma.values() {
        let size = types.len();
        for ty in types {
            match chosen.get_mut(&ty.type_name) {
                None => {
                    chosen.insert(ty.type_name.clone(), (size, ty.distance));
                }
                Some((best_size, best_dist)) => {
                    if size > *best_size || (size == *best_size && ty.distance < *best_dist) {
                        *best_size = size;
                        *best_dist = ty.distance;
                    }
                }
            }
        }
    }
    DistanceMap::from_entries(chosen.into_iter().map(|(name, (_, d))| (name, d as f64)))
}

/// Distinct string literals from application functions reachable from the
/// entry, in first-encounter order of a deterministic DFS (callees visited
/// in instruction order, each function once).
pub fn collect_constant_strings(program: &Program) -> StringTable {
    let mut table = Vec::new();
    let mut seen_strings: BTreeSet<usize> = BTreeSet::new();
    let mut visited: BTreeSet<String> = BTreeSet::new();
    dfs_strings(program, &program.entry, &mut visited, &mut seen_strings, &mut table);
    StringTable(table)
}

fn dfs_strings(
    program: &Program,
    name: &str,
    visited: &mut BTreeSet<String>,
    seen: &mut BTreeSet<usize>,
    table: &mut Vec<String>,
) {
    if !visited.insert(name.to_string()) {
        return;
    }
    let Some(func) = program.function(name) else { return };
    if func.is_extern() {
        return;
    }
    for instr in &func.body {
        match &instr.op {
            Op::StrConst { index, .. } => {
                if seen.insert(*index) {
                    table.push(program.string_constants[*index].clone());
                }
            }
            Op::Call { callee, .. } => {
                dfs_strings(program, callee, visited, seen, table);
            }
            _ => {}
        }
    }
}

/// The full static phase: dependency graph, per-target influencing types,
/// unified distances, string table. `uncovered` starts as all code targets.
pub fn analyze(program: &Program) -> Analysis {
    let graph = build_dependency_graph(program);
    let mut gamma = InfluencingTypeMap::new();
    // Both arms of one branch share the same operands, hence the same list;
    // compute per branch and insert per arm.
    let mut cache: BTreeMap<(String, u32), Vec<InfluencingType>> = BTreeMap::new();
    for target in enumerate_code_targets(program) {
        let key = (target.function.clone(), target.branch_label);
        let types = cache
            .entry(key)
            .or_insert_with(|| collect_influencing_types(&graph, program, &target))
            .clone();
        gamma.insert(target, types);
    }
    let distances = unify_types(&gamma);
    let strings = collect_constant_strings(program);
    let uncovered = gamma.keys().cloned().collect();
    Analysis { gamma, distances, strings, uncovered }
}


/// Deterministic plain-text report of the analysis results, used by the
/// CLI's `--dump-analysis` flag.
pub fn render_analysis_report(program: &Program, analysis: &Analysis) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "program: entry {}", program.entry);
    let _ = writeln!(out, "targets: {}", analysis.gamma.len());
    for (target, types) in &analysis.gamma {
        let rendered = types
            .iter()
            .map(|t| format!("({}, {})", t.type_name, t.distance))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "  {target}: [{rendered}]");
    }
    let unified = analysis
        .distances
        .entries_unchecked()
        .iter()
        .map(|(name, d)| format!("({name}, {d})"))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "unified: [{unified}]");
    let strings = analysis
        .strings
        .0
        .iter()
        .map(|s| format!("{s:?}"))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "strings: [{strings}]");
    out
}

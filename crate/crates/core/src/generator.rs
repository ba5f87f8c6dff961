//! Generator-combinator framework. Every random draw inside a generator is
//! intercepted: the draw's execution index (EI) and the stack of generator
//! return types are recorded alongside the value, forming the
//! execution-indexed, type-annotated fuzzer-chosen input (FCI).
//!
//! During regeneration, a draw first looks for an unconsumed stored entry
//! with an equal EI and reuses its value; otherwise a fresh value is drawn
//! from the session RNG and appended. Reuse is keyed by EI, never by
//! position, so a value keeps feeding the same dynamic draw site even when
//! mutations shift the control flow of other generators.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::StringTable;
use crate::interp::Value;

/// Maximum generator nesting before generation is aborted.
pub const GENERATOR_DEPTH_LIMIT: usize = 64;

/// Identifies the dynamic location of a random draw: one (call-site label,
/// invocation count) pair per generator frame on the call stack, outermost
/// first, flattened as [l1, q1, l2, q2, ...]. Counts start at 1 and reset
/// on each new activation of a frame. Equality is structural; uniqueness
/// across a run is not guaranteed (relaxed execution indexing).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExecutionIndex(pub Arc<[(u32, u32)]>);

impl ExecutionIndex {
    pub fn of(pairs: &[(u32, u32)]) -> Self {
        ExecutionIndex(Arc::from(pairs))
    }

    /// The flattened [l, q, l, q, ...] form.
    pub fn flat(&self) -> Vec<u32> {
        self.0.iter().flat_map(|(l, q)| [*l, *q]).collect()
    }
}

impl std::fmt::Display for ExecutionIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}]",
            self.flat().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
        )
    }
}

/// Return types of the generator frames active at a draw, innermost first,
/// the root generator's type last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeStack(pub Arc<Vec<String>>);

impl TypeStack {
    pub fn contains(&self, type_name: &str) -> bool {
        self.0.iter().any(|t| t == type_name)
    }

    pub fn outermost(&self) -> &str {
        self.0.last().expect("type stack is never empty at a draw")
    }
}

/// One recorded draw: the value, the bounds it was drawn within, its EI and
/// its type annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct FciEntry {
    pub value: i64,
    pub lo: i64,
    pub hi: i64,
    pub ei: ExecutionIndex,
    pub types: TypeStack,
}

/// The fuzzer-chosen input: the ordered draw record of one generation pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fci {
    pub entries: Vec<FciEntry>,
}

impl Fci {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("no generator registered for type {0}")]
    MissingGenerator(String),
    #[error("generator recursion depth limit ({GENERATOR_DEPTH_LIMIT}) exceeded")]
    DepthLimit,
}

pub type GeneratorFn = Arc<dyn Fn(&mut GenCtx<'_>) -> Result<Value, GenError> + Send + Sync>;

/// Generators by the type name they produce. The version tag participates
/// in corpus fingerprints so stale corpora are rejected on load.
#[derive(Clone, Default)]
pub struct GeneratorRegistry {
    generators: BTreeMap<String, GeneratorFn>,
    version_tag: String,
}

impl GeneratorRegistry {
    pub fn new(version_tag: &str) -> Self {
        GeneratorRegistry { generators: BTreeMap::new(), version_tag: version_tag.to_string() }
    }

    pub fn register<F>(&mut self, type_name: &str, generator: F)
    where
        F: Fn(&mut GenCtx<'_>) -> Result<Value, GenError> + Send + Sync + 'static,
    {
        self.generators.insert(type_name.to_string(), Arc::new(generator));
    }

    pub fn get(&self, type_name: &str) -> Option<&GeneratorFn> {
        self.generators.get(type_name)
    }

    pub fn version_tag(&self) -> &str {
        &self.version_tag
    }
}

/// Session-level configuration for one generation pass.
#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Seed for fresh draws. Replay of a complete FCI never consults it.
    pub seed: u64,
    /// Constant-string lookup table; empty outside str-opt/spoton modes.
    pub string_table: StringTable,
    /// Probability of drawing a table constant when generating a string.
    pub p_const: f64,
}

impl GenConfig {
    pub fn new(seed: u64) -> Self {
        GenConfig { seed, string_table: StringTable::default(), p_const: 0.5 }
    }

    pub fn with_strings(seed: u64, table: StringTable, p_const: f64) -> Self {
        GenConfig { seed, string_table: table, p_const }
    }
}

struct GenFrame {
    type_name: String,
    /// Per-label invocation counts within the current activation.
    site_counts: HashMap<u32, u32>,
    /// The (label, count) of the in-flight nested generator call, if any.
    pending: Option<(u32, u32)>,
}

/// Live state of one generation pass, exposed to generators.
pub struct GenCtx<'a> {
    registry: &'a GeneratorRegistry,
    rng: ChaCha8Rng,
    lookup: HashMap<&'a [(u32, u32)], VecDeque<usize>>,
    input: &'a Fci,
    out: Vec<FciEntry>,
    stack: Vec<GenFrame>,
    cached_types: Option<TypeStack>,
    string_table: &'a StringTable,
    p_const: f64,
    scratch_pairs: Vec<(u32, u32)>,
}

impl<'a> GenCtx<'a> {
    /// Intercepted random draw at call-site `label`, inclusive bounds.
    /// Reuses the stored value at an equal EI when one is unconsumed,
    /// folding it into the requested bounds; draws fresh otherwise.
    pub fn draw(&mut self, label: u32, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi, "draw bounds must satisfy lo <= hi");
        let count = {
            let frame = self.stack.last_mut().expect("draw inside a generator frame");
            bump(&mut frame.site_counts, label)
        };
        self.fill_current_pairs(label, count);

        let reused = self
            .lookup
            .get_mut(self.scratch_pairs.as_slice())
            .and_then(VecDeque::pop_front);
        let (value, ei) = match reused {
            Some(index) => {
                let entry = &self.input.entries[index];
                (fold_into_bounds(entry.value, lo, hi), entry.ei.clone())
            }
            None => (
                self.rng.random_range(lo..=hi),
                ExecutionIndex(Arc::from(self.scratch_pairs.as_slice())),
            ),
        };
        let types = self.type_stack();
        self.out.push(FciEntry { value, lo, hi, ei, types });
        value
    }

    /// Invoke the registered generator for `type_name` as a nested frame at
    /// call-site `label`.
    pub fn invoke(&mut self, label: u32, type_name: &str) -> Result<Value, GenError> {
        if self.stack.len() >= GENERATOR_DEPTH_LIMIT {
            return Err(GenError::DepthLimit);
        }
        let generator = self
            .registry
            .get(type_name)
            .cloned()
            .ok_or_else(|| GenError::MissingGenerator(type_name.to_string()))?;

        let frame = self.stack.last_mut().expect("invoke inside a generator frame");
        let count = bump(&mut frame.site_counts, label);
        frame.pending = Some((label, count));

        self.push_frame(type_name);
        let result = generator(self);
        self.pop_frame();
        self.stack.last_mut().expect("caller frame").pending = None;
        result
    }

    /// Generate a string: with probability `p_const` and a non-empty table,
    /// a uniformly chosen table constant; otherwise a fresh random string of
    /// length 0..=12. Uses draw sites `label`..`label+3`.
    pub fn gen_string(&mut self, label: u32) -> String {
        let coin = self.draw(label, 0, 9999);
        let threshold = (self.p_const * 10_000.0) as i64;
        if !self.string_table.is_empty() && coin < threshold {
            let idx = self.draw(label + 1, 0, self.string_table.len() as i64 - 1);
            return self.string_table.0[idx as usize].clone();
        }
        let len = self.draw(label + 2, 0, 12);
        let mut out = String::with_capacity(len as usize);
        for _ in 0..len {
            let c = self.draw(label + 3, 0, 25) as u8;
            out.push((b'a' + c) as char);
        }
        out
    }

    fn push_frame(&mut self, type_name: &str) {
        self.stack.push(GenFrame {
            type_name: type_name.to_string(),
            site_counts: HashMap::new(),
            pending: None,
        });
        self.cached_types = None;
    }

    fn pop_frame(&mut self) {
        self.stack.pop();
        self.cached_types = None;
    }

    /// Rebuild the scratch EI pair buffer for a draw at the top frame.
    fn fill_current_pairs(&mut self, top_label: u32, top_count: u32) {
        self.scratch_pairs.clear();
        for frame in &self.stack[..self.stack.len() - 1] {
            let (l, q) = frame.pending.expect("non-top frames have an in-flight call");
            self.scratch_pairs.push((l, q));
        }
        self.scratch_pairs.push((top_label, top_count));
    }

    fn type_stack(&mut self) -> TypeStack {
        if let Some(cached) = &self.cached_types {
            return cached.clone();
        }
        let types: Vec<String> =
            self.stack.iter().rev().map(|f| f.type_name.clone()).collect();
        let stack = TypeStack(Arc::new(types));
        self.cached_types = Some(stack.clone());
        stack
    }
}

fn bump(counts: &mut HashMap<u32, u32>, label: u32) -> u32 {
    let slot = counts.entry(label).or_insert(0);
    *slot += 1;
    *slot
}

/// Fold a stored value into the bounds requested at the reuse site.
fn fold_into_bounds(value: i64, lo: i64, hi: i64) -> i64 {
    if value >= lo && value <= hi {
        return value;
    }
    let span = (hi - lo + 1) as i128;
    let off = (value as i128 - lo as i128).rem_euclid(span);
    (lo as i128 + off) as i64
}

/// Run the registered generator for `root_type` against `fci`, producing
/// the program input and the FCI actually consumed/extended. Deterministic
/// given (registry, fci, config). Unconsumed stale entries are dropped.
pub fn generate(
    registry: &GeneratorRegistry,
    root_type: &str,
    fci: &Fci,
    config: &GenConfig,
) -> Result<(Value, Fci), GenError> {
    let generator = registry
        .get(root_type)
        .cloned()
        .ok_or_else(|| GenError::MissingGenerator(root_type.to_string()))?;

    let mut lookup: HashMap<&[(u32, u32)], VecDeque<usize>> = HashMap::new();
    for (index, entry) in fci.entries.iter().enumerate() {
        lookup.entry(entry.ei.0.as_ref()).or_default().push_back(index);
    }

    let mut ctx = GenCtx {
        registry,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        lookup,
        input: fci,
        out: Vec::with_capacity(fci.entries.len()),
        stack: Vec::new(),
        cached_types: None,
        string_table: &config.string_table,
        p_const: config.p_const,
        scratch_pairs: Vec::with_capacity(8),
    };
    ctx.push_frame(root_type);
    let value = generator(&mut ctx)?;
    ctx.pop_frame();
    Ok((value, Fci { entries: ctx.out }))
}

//! The outer fuzzing loop: corpus scheduling, candidate budgeting,
//! coverage-driven corpus growth, and uncovered-target bookkeeping.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{analyze, DistanceMap, StringTable};
use crate::generator::{generate, Fci, GenConfig, GenError, GeneratorRegistry};
use crate::interp::{run, CoverageSet, ExternRegistry, FailureKind, Outcome, TestResult};
use crate::ir::{enumerate_code_targets, CodeTarget, Program};
use crate::mutation::{mutate, Mode, MutationKind, MutationOutcome};

pub const DEFAULT_STEP_BUDGET: u64 = 100_000;
/// Children per corpus entry at median cost.
pub const CANDIDATES_BASE: u64 = 20;
/// Hard cap on children per corpus entry per sweep.
pub const CANDIDATES_MAX: u64 = 100;

/// Campaign budget. Test-count budgets make the whole campaign
/// deterministic; wall-clock budgets suit long exploratory runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Tests(u64),
    Wall(Duration),
}

#[derive(Debug, Clone)]
pub struct CampaignOptions {
    pub mode: Mode,
    pub budget: Budget,
    pub seed: u64,
    pub step_budget: u64,
    pub p_const: f64,
    /// Skip the static phase entirely. Only valid in baseline mode; exists
    /// to demonstrate baseline behavior does not depend on the analysis.
    pub skip_analysis: bool,
}

impl CampaignOptions {
    pub fn new(mode: Mode, budget: Budget, seed: u64) -> Self {
        CampaignOptions {
            mode,
            budget,
            seed,
            step_budget: DEFAULT_STEP_BUDGET,
            p_const: 0.5,
            skip_analysis: false,
        }
    }
}

/// A saved successful input with its per-entry stats.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub fci: Fci,
    /// 1-based test index of the discovery run.
    pub discovered_at_test: u64,
    /// Virtual time (total interpreter steps) when discovered.
    pub discovered_at_steps: u64,
    /// Coverage points that were new when this entry was saved.
    pub new_coverage: CoverageSet,
    /// Interpreter steps of the discovery run: the deterministic cost proxy
    /// used by candidate budgeting.
    pub cost_steps: u64,
    pub wall_time: Duration,
    /// Outcome of the discovery run. Only the initial seed can ever be a
    /// failure here; coverage-discovered entries always ran successfully.
    pub outcome: Outcome,
}

#[derive(Debug, Clone)]
pub struct FailureEntry {
    pub fci: Fci,
    pub kind: FailureKind,
    pub at_test: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub successes: Vec<CorpusEntry>,
    pub failures: Vec<FailureEntry>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub mutation: Duration,
    pub generation: Duration,
    pub testing: Duration,
    pub handling: Duration,
}

impl PhaseTimings {
    pub fn sum(&self) -> Duration {
        self.mutation + self.generation + self.testing + self.handling
    }
}

/// One point of the coverage-over-time series, appended whenever coverage
/// grows (plus the initial and final tests).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TracePoint {
    pub tests: u64,
    /// Cumulative interpreter steps: the deterministic clock.
    pub virtual_steps: u64,
    pub wall: Duration,
    pub app_cov: usize,
    pub total_cov: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CampaignStats {
    pub tests_run: u64,
    pub total_steps: u64,
    pub generation_errors: u64,
    pub random_mutations: u64,
    pub targeted_hits: u64,
    pub targeted_misses: u64,
    pub phase: PhaseTimings,
    pub campaign_wall: Duration,
}

#[derive(Debug, Clone)]
pub struct CampaignState {
    pub total_coverage: CoverageSet,
    pub uncovered: BTreeSet<CodeTarget>,
    pub distances: DistanceMap,
    pub stats: CampaignStats,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign options: {0}")]
    InvalidOptions(String),
    #[error("generation setup failed: {0}")]
    Setup(#[from] GenError),
}

/// Children to schedule for one corpus entry: entries that cost as much as
/// the median get `CANDIDATES_BASE`; slower entries get proportionally
/// fewer, clamped to [1, CANDIDATES_MAX].
pub fn num_candidates(entry_cost: f64, median_cost: f64) -> u64 {
    if entry_cost <= 0.0 {
        return CANDIDATES_MAX;
    }
    let count = (CANDIDATES_BASE as f64 * median_cost / entry_cost).round() as i64;
    (count.max(1) as u64).min(CANDIDATES_MAX)
}

fn median(sorted: &[u64]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Run one fuzzing campaign. Deterministic given (program, registry, mode,
/// test-count budget, seed).
pub fn fuzz_campaign(
    program: &Program,
    externs: &ExternRegistry,
    registry: &GeneratorRegistry,
    options: &CampaignOptions,
) -> Result<(Corpus, CampaignState), CampaignError> {
    if options.skip_analysis && options.mode != Mode::Baseline {
        return Err(CampaignError::InvalidOptions(
            "skip_analysis is only meaningful in baseline mode".to_string(),
        ));
    }
    if !(0.0..=1.0).contains(&options.p_const) {
        return Err(CampaignError::InvalidOptions(format!(
            "p_const must be in [0, 1], got {}",
            options.p_const
        )));
    }

    let (distances, strings, uncovered) = if options.skip_analysis {
        let uncovered: BTreeSet<CodeTarget> =
            enumerate_code_targets(program).into_iter().collect();
        (DistanceMap::new(), StringTable::default(), uncovered)
    } else {
        let analysis = analyze(program);
        (analysis.distances, analysis.strings, analysis.uncovered)
    };

    let table = if options.mode.uses_string_table() { strings } else { StringTable::default() };
    let root_type = program.input_type().type_name();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut gen_cfg = GenConfig::with_strings(0, table, options.p_const);

    let mut corpus = Corpus::default();
    let mut state = CampaignState {
        total_coverage: CoverageSet::default(),
        uncovered,
        distances,
        stats: CampaignStats::default(),
        trace: Vec::new(),
    };

    let started = Instant::now();

    // Alg. line "S <- { RANDOM }": one generation pass over an empty FCI,
    // executed as the first test so its cost and coverage are known.
    gen_cfg.seed = rng.next_u64();
    let gen_started = Instant::now();
    let (seed_input, seed_fci) = generate(registry, &root_type, &Fci::default(), &gen_cfg)?;
    state.stats.phase.generation += gen_started.elapsed();

    let test_started = Instant::now();
    let seed_result = run(program, externs, &seed_input, options.step_budget);
    state.stats.phase.testing += test_started.elapsed();

    let handle_started = Instant::now();
    state.stats.tests_run = 1;
    state.stats.total_steps = seed_result.steps;
    if seed_result.is_success() {
        apply_new_coverage(&mut state, &seed_result.coverage);
    } else {
        corpus.failures.push(FailureEntry {
            fci: seed_fci.clone(),
            kind: failure_kind(&seed_result),
            at_test: 1,
        });
    }
    corpus.successes.push(CorpusEntry {
        fci: seed_fci,
        discovered_at_test: 1,
        discovered_at_steps: seed_result.steps,
        new_coverage: seed_result.coverage.clone(),
        cost_steps: seed_result.steps,
        wall_time: seed_result.wall_time,
        outcome: seed_result.outcome,
    });
    push_trace_point(&mut state, started);
    state.stats.phase.handling += handle_started.elapsed();

    let budget_left = |stats: &CampaignStats, started: Instant| match options.budget {
        Budget::Tests(n) => stats.tests_run < n,
        Budget::Wall(limit) => started.elapsed() < limit,
    };

    let mut sorted_costs: Vec<u64> = vec![corpus.successes[0].cost_steps];
    let mut median_cost = median(&sorted_costs);

    'campaign: loop {
        if !budget_left(&state.stats, started) {
            break;
        }
        let mut entry_idx = 0;
        while entry_idx < corpus.successes.len() {
            let candidates =
                num_candidates(corpus.successes[entry_idx].cost_steps as f64, median_cost);
            for _ in 0..candidates {
                if !budget_left(&state.stats, started) {
                    break 'campaign;
                }

                let mutate_started = Instant::now();
                let MutationOutcome { fci: child_fci, distances: new_distances, kind } =
                    mutate(
                        &corpus.successes[entry_idx].fci,
                        &state.uncovered,
                        &state.distances,
                        &mut rng,
                        options.mode,
                    );
                state.distances = new_distances;
                match kind {
                    MutationKind::Random => state.stats.random_mutations += 1,
                    MutationKind::TargetedHit(_) => state.stats.targeted_hits += 1,
                    MutationKind::TargetedMiss(_) => state.stats.targeted_misses += 1,
                }
                state.stats.phase.mutation += mutate_started.elapsed();

                gen_cfg.seed = rng.next_u64();
                let gen_started = Instant::now();
                let generated = generate(registry, &root_type, &child_fci, &gen_cfg);
                state.stats.phase.generation += gen_started.elapsed();
                let (input, fci_out) = match generated {
                    Ok(pair) => pair,
                    Err(_) => {
                        state.stats.generation_errors += 1;
                        continue;
                    }
                };

                let test_started = Instant::now();
                let result = run(program, externs, &input, options.step_budget);
                state.stats.phase.testing += test_started.elapsed();

                let handle_started = Instant::now();
                state.stats.tests_run += 1;
                state.stats.total_steps += result.steps;
                let mut fci_slot = Some(fci_out);
                if !result.is_success() {
                    corpus.failures.push(FailureEntry {
                        fci: fci_slot.take().expect("unconsumed"),
                        kind: failure_kind(&result),
                        at_test: state.stats.tests_run,
                    });
                } else if state.total_coverage.has_new(&result.coverage) {
                    let mut new_coverage = result.coverage.clone();
                    new_coverage.app.retain(|t| !state.total_coverage.app.contains(t));
                    new_coverage.ext.retain(|t| !state.total_coverage.ext.contains(t));
                    apply_new_coverage(&mut state, &result.coverage);
                    corpus.successes.push(CorpusEntry {
                        fci: fci_slot.take().expect("unconsumed"),
                        discovered_at_test: state.stats.tests_run,
                        discovered_at_steps: state.stats.total_steps,
                        new_coverage,
                        cost_steps: result.steps,
                        wall_time: result.wall_time,
                        outcome: result.outcome,
                    });
                    let pos = sorted_costs.partition_point(|c| *c <= result.steps);
                    sorted_costs.insert(pos, result.steps);
                    median_cost = median(&sorted_costs);
                    push_trace_point(&mut state, started);
                }
                // Freeing the mutated FCI, the generated input and the
                // result is part of result handling; keep it inside the
                // measured span.
                drop(fci_slot);
                drop(child_fci);
                drop(input);
                drop(result);
                state.stats.phase.handling += handle_started.elapsed();
            }
            entry_idx += 1;
        }
    }

    push_trace_point(&mut state, started);
    state.stats.campaign_wall = started.elapsed();
    Ok((corpus, state))
}

fn apply_new_coverage(state: &mut CampaignState, coverage: &CoverageSet) {
    state.total_coverage.merge(coverage);
    for target in &coverage.app {
        state.uncovered.remove(target);
    }
}

fn push_trace_point(state: &mut CampaignState, started: Instant) {
    let point = TracePoint {
        tests: state.stats.tests_run,
        virtual_steps: state.stats.total_steps,
        wall: started.elapsed(),
        app_cov: state.total_coverage.app.len(),
        total_cov: state.total_coverage.total_len(),
    };
    if state.trace.last().map(|p| (p.tests, p.app_cov, p.total_cov))
        != Some((point.tests, point.app_cov, point.total_cov))
    {
        state.trace.push(point);
    }
}

fn failure_kind(result: &TestResult) -> FailureKind {
    match result.outcome {
        Outcome::Failure(kind) => kind,
        Outcome::Success => unreachable!("failure entry from a successful run"),
    }
}

/// Re-execute a saved FCI: regenerate the input and run it. With the same
/// program, registry and generation config this reproduces the original
/// TestResult bit for bit.
pub fn replay(
    program: &Program,
    externs: &ExternRegistry,
    registry: &GeneratorRegistry,
    gen_cfg: &GenConfig,
    fci: &Fci,
    step_budget: u64,
) -> Result<(crate::interp::Value, TestResult), GenError> {
    let root_type = program.input_type().type_name();
    let (input, _) = generate(registry, &root_type, fci, gen_cfg)?;
    let result = run(program, externs, &input, step_budget);
    Ok((input, result))
}

/// The generation config a campaign in `mode` would use for replay: the
/// string table is re-derived from the program, the fresh-draw seed is
/// irrelevant for complete FCIs and fixed to 0.
pub fn replay_gen_config(program: &Program, mode: Mode, p_const: f64) -> GenConfig {
    let table = if mode.uses_string_table() {
        crate::analysis::collect_constant_strings(program)
    } else {
        StringTable::default()
    };
    GenConfig::with_strings(0, table, p_const)
}

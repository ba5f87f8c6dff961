//! Campaign suites: repeated runs, per-run coverage-over-time CSVs,
//! per-mode summaries, and two-mode comparisons with a Mann-Whitney U
//! significance flag.

use std::collections::BTreeSet;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::engine::{
    fuzz_campaign, Budget, CampaignError, CampaignOptions, Corpus, PhaseTimings, TracePoint,
};
use crate::interp::ExternRegistry;
use crate::ir::{CodeTarget, Program};
use crate::mutation::Mode;

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub mode: Mode,
    pub budget: Budget,
    pub repetitions: u32,
    pub base_seed: u64,
    pub step_budget: u64,
    pub p_const: f64,
    /// Per-run CSVs and the summary JSON land here when set.
    pub out_dir: Option<PathBuf>,
}

impl SuiteConfig {
    pub fn new(mode: Mode, budget: Budget, repetitions: u32, base_seed: u64) -> Self {
        SuiteConfig {
            mode,
            budget,
            repetitions,
            base_seed,
            step_budget: crate::engine::DEFAULT_STEP_BUDGET,
            p_const: 0.5,
            out_dir: None,
        }
    }
}

/// One repetition's results.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub repetition: u32,
    pub seed: u64,
    pub trace: Vec<TracePoint>,
    pub final_app: BTreeSet<CodeTarget>,
    pub final_ext: BTreeSet<String>,
    pub tests: u64,
    pub phase: PhaseTimings,
    pub campaign_wall: Duration,
    /// Mean generation time per executed test, seconds.
    pub mean_gen_time_s: f64,
    pub corpus: Corpus,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub mode: Mode,
    pub records: Vec<RunRecord>,
    /// Median application coverage sampled on a common tests grid.
    pub median_curve: Vec<(u64, f64)>,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("campaign failed: {0}")]
    Campaign(#[from] CampaignError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn write_file(path: &Path, contents: &str) -> Result<(), SuiteError> {
    std::fs::write(path, contents)
        .map_err(|source| SuiteError::Io { path: path.to_path_buf(), source })
}

/// Execute `repetitions` campaigns with seeds base_seed, base_seed+1, ...
/// and emit one CSV per run plus a per-mode summary when an output
/// directory is configured.
pub fn run_suite(
    program: &Program,
    externs: &ExternRegistry,
    registry: &crate::generator::GeneratorRegistry,
    config: &SuiteConfig,
) -> Result<SuiteResult, SuiteError> {
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|source| SuiteError::Io { path: dir.clone(), source })?;
    }

    let mut records = Vec::with_capacity(config.repetitions as usize);
    for rep in 0..config.repetitions {
        let seed = config.base_seed + rep as u64;
        let mut options = CampaignOptions::new(config.mode, config.budget, seed);
        options.step_budget = config.step_budget;
        options.p_const = config.p_const;
        let (corpus, state) = fuzz_campaign(program, externs, registry, &options)?;

        let tests = state.stats.tests_run;
        let record = RunRecord {
            repetition: rep,
            seed,
            trace: state.trace,
            final_app: state.total_coverage.app,
            final_ext: state.total_coverage.ext,
            tests,
            phase: state.stats.phase,
            campaign_wall: state.stats.campaign_wall,
            mean_gen_time_s: if tests > 0 {
                state.stats.phase.generation.as_secs_f64() / tests as f64
            } else {
                0.0
            },
            corpus,
        };
        if let Some(dir) = &config.out_dir {
            let path = dir.join(format!("{}_rep{:03}.csv", config.mode, rep));
            write_file(&path, &render_csv(&record.trace, config.budget))?;
        }
        records.push(record);
    }

    let median_curve = median_curve(&records);
    let result = SuiteResult { mode: config.mode, records, median_curve };
    if let Some(dir) = &config.out_dir {
        let path = dir.join(format!("summary_{}.json", config.mode));
        write_file(&path, &render_summary_json(config, &result))?;
    }
    Ok(result)
}

/// CSV schema: `elapsed_s,tests,app_cov,total_cov`, rows monotone in both
/// coverage columns. Under a test-count budget `elapsed_s` is deterministic
/// virtual time (cumulative interpreter steps at 1 MIPS); under a
/// wall-clock budget it is real elapsed seconds.
pub fn render_csv(trace: &[TracePoint], budget: Budget) -> String {
    let mut out = String::from("elapsed_s,tests,app_cov,total_cov\n");
    for point in trace {
        let elapsed = match budget {
            Budget::Tests(_) => point.virtual_steps as f64 / 1_000_000.0,
            Budget::Wall(_) => point.wall.as_secs_f64(),
        };
        out.push_str(&format!(
            "{:.6},{},{},{}\n",
            elapsed, point.tests, point.app_cov, point.total_cov
        ));
    }
    out
}

/// Median application coverage across repetitions on a 100-point tests
/// grid. Each repetition contributes its step function sampled at the grid.
fn median_curve(records: &[RunRecord]) -> Vec<(u64, f64)> {
    if records.is_empty() {
        return Vec::new();
    }
    let max_tests = records.iter().map(|r| r.tests).max().unwrap_or(0);
    if max_tests == 0 {
        return Vec::new();
    }
    let mut curve = Vec::with_capacity(101);
    for i in 0..=100u64 {
        let at = max_tests * i / 100;
        let mut values: Vec<f64> = records
            .iter()
            .map(|r| {
                r.trace
                    .iter()
                    .take_while(|p| p.tests <= at)
                    .last()
                    .map(|p| p.app_cov as f64)
                    .unwrap_or(0.0)
            })
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        curve.push((at, median));
    }
    curve.dedup_by(|a, b| a.0 == b.0);
    curve
}

fn render_summary_json(config: &SuiteConfig, result: &SuiteResult) -> String {
    let reps: Vec<serde_json::Value> = result
        .records
        .iter()
        .map(|r| {
            serde_json::json!({
                "rep": r.repetition,
                "seed": r.seed,
                "tests": r.tests,
                "final_app_cov": r.final_app.len(),
                "final_total_cov": r.final_app.len() + r.final_ext.len(),
                "mean_gen_time_s": r.mean_gen_time_s,
                "phase_s": {
                    "mutation": r.phase.mutation.as_secs_f64(),
                    "generation": r.phase.generation.as_secs_f64(),
                    "testing": r.phase.testing.as_secs_f64(),
                    "handling": r.phase.handling.as_secs_f64(),
                },
                "campaign_wall_s": r.campaign_wall.as_secs_f64(),
            })
        })
        .collect();
    let curve: Vec<serde_json::Value> = result
        .median_curve
        .iter()
        .map(|(tests, app)| serde_json::json!([tests, app]))
        .collect();
    let budget = match config.budget {
        Budget::Tests(n) => format!("{n}t"),
        Budget::Wall(d) => format!("{}s", d.as_secs()),
    };
    serde_json::to_string_pretty(&serde_json::json!({
        "mode": config.mode.as_str(),
        "budget": budget,
        "repetitions": config.repetitions,
        "base_seed": config.base_seed,
        "runs": reps,
        "median_app_cov_curve": curve,
    }))
    .expect("summary json serializes")
}

/// Two-mode comparison: target partition over the union of final
/// application coverage, plus a Mann-Whitney U test over per-repetition
/// final application-coverage counts.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub mode_a: Mode,
    pub mode_b: Mode,
    pub common: usize,
    pub only_a: usize,
    pub only_b: usize,
    pub a_total: usize,
    pub b_total: usize,
    pub mwu: MannWhitney,
}

pub fn compare_modes(a: &SuiteResult, b: &SuiteResult) -> Comparison {
    let union_app = |r: &SuiteResult| -> BTreeSet<CodeTarget> {
        r.records.iter().flat_map(|rec| rec.final_app.iter().cloned()).collect()
    };
    let set_a = union_app(a);
    let set_b = union_app(b);
    let common = set_a.intersection(&set_b).count();
    let only_a = set_a.difference(&set_b).count();
    let only_b = set_b.difference(&set_a).count();

    let counts = |r: &SuiteResult| -> Vec<f64> {
        r.records.iter().map(|rec| rec.final_app.len() as f64).collect()
    };
    let mwu = mann_whitney_u(&counts(a), &counts(b));

    Comparison {
        mode_a: a.mode,
        mode_b: b.mode,
        common,
        only_a,
        only_b,
        a_total: set_a.len(),
        b_total: set_b.len(),
        mwu,
    }
}

pub fn render_comparison_json(cmp: &Comparison) -> String {
    serde_json::to_string_pretty(&serde_json::json!({
        "mode_a": cmp.mode_a.as_str(),
        "mode_b": cmp.mode_b.as_str(),
        "common": cmp.common,
        "only_a": cmp.only_a,
        "only_b": cmp.only_b,
        "a_total": cmp.a_total,
        "b_total": cmp.b_total,
        "mann_whitney": {
            "u": cmp.mwu.u,
            "z": cmp.mwu.z,
            "p": cmp.mwu.p,
            "significant_at_0_05": cmp.mwu.significant,
        },
    }))
    .expect("comparison json serializes")
}

/// Mann-Whitney U with tie-corrected normal approximation, two-sided.
#[derive(Debug, Clone, Copy)]
pub struct MannWhitney {
    pub u: f64,
    pub z: f64,
    pub p: f64,
    pub significant: bool,
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> MannWhitney {
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    if a.is_empty() || b.is_empty() {
        return MannWhitney { u: 0.0, z: 0.0, p: 1.0, significant: false };
    }

    let mut combined: Vec<(f64, usize)> = a
        .iter()
        .map(|v| (*v, 0usize))
        .chain(b.iter().map(|v| (*v, 1usize)))
        .collect();
    combined.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    // Average ranks over tie groups.
    let n = combined.len();
    let mut ranks = vec![0.0f64; n];
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && combined[j + 1].0 == combined[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for rank in ranks.iter_mut().take(j + 1).skip(i) {
            *rank = avg_rank;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    let r1: f64 = combined
        .iter()
        .zip(&ranks)
        .filter(|((_, group), _)| *group == 0)
        .map(|(_, rank)| *rank)
        .sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let u2 = n1 * n2 - u1;
    let u = u1.min(u2);

    let mu = n1 * n2 / 2.0;
    let n_total = n1 + n2;
    let sigma_sq =
        n1 * n2 / 12.0 * (n_total + 1.0 - tie_term / (n_total * (n_total - 1.0)));
    if sigma_sq <= 0.0 {
        return MannWhitney { u, z: 0.0, p: 1.0, significant: false };
    }
    let sigma = sigma_sq.sqrt();
    // Continuity correction.
    let z = (u - mu).abs().max(0.5) - 0.5;
    let z = z / sigma;
    let p = 2.0 * (1.0 - normal_cdf(z));
    let p = p.clamp(0.0, 1.0);
    MannWhitney { u, z, p, significant: p <= 0.05 }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Abramowitz & Stegun 7.1.26, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

//! Command-line front end.
//!
//! ```text
//! typefuzz fuzz --program <file|bench:NAME> --mode <m> --budget <n>{s|t}
//!               --reps <k> --seed <s> --out <dir>
//!               [--dump-analysis] [--p-const <f>] [--step-budget <n>]
//!               [--save-corpus]
//! typefuzz compare --program ... --modes a,b --budget ... --reps ... --seed ... --out <dir>
//! ```
//!
//! Exit codes: 0 on completion, 2 on configuration errors, 3 on
//! parse/analysis errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use typefuzz::analysis::{analyze, render_analysis_report};
use typefuzz::bench::load_benchmark;
use typefuzz::corpus_io::{campaign_fingerprint, save_corpus};
use typefuzz::engine::Budget;
use typefuzz::generator::GeneratorRegistry;
use typefuzz::interp::ExternRegistry;
use typefuzz::ir::parse_program;
use typefuzz::mutation::Mode;
use typefuzz::report::{compare_modes, render_comparison_json, run_suite, SuiteConfig};
use typefuzz::Program;

const EXIT_CONFIG: u8 = 2;
const EXIT_ANALYSIS: u8 = 3;

#[derive(Parser)]
#[command(name = "typefuzz", about = "Type-targeted generator-based fuzzer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run fuzzing campaigns for one mode.
    Fuzz(FuzzArgs),
    /// Run two modes under the same budget and compare coverage.
    Compare(CompareArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// IR source file, or bench:<name> for a bundled benchmark.
    #[arg(long)]
    program: String,
    /// Budget per repetition: <n>t (tests) or <n>s (wall-clock seconds).
    #[arg(long)]
    budget: String,
    /// Repetitions per mode.
    #[arg(long, default_value_t = 1)]
    reps: u32,
    /// Base seed; repetition k uses seed + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSVs and summaries.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Probability of drawing a table constant when generating strings.
    #[arg(long, default_value_t = 0.5)]
    p_const: f64,
    /// Interpreter step budget per test.
    #[arg(long, default_value_t = typefuzz::engine::DEFAULT_STEP_BUDGET)]
    step_budget: u64,
}

#[derive(Args)]
struct FuzzArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Fuzzing mode: baseline, str-opt or spoton.
    #[arg(long)]
    mode: Mode,
    /// Print the static analysis report and exit without fuzzing.
    #[arg(long)]
    dump_analysis: bool,
    /// Persist each repetition's corpus under <out>/corpus_<mode>_rep<k>/.
    #[arg(long)]
    save_corpus: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Two comma-separated modes, e.g. baseline,spoton.
    #[arg(long)]
    modes: String,
}

struct Target {
    program: Program,
    registry: GeneratorRegistry,
    externs: ExternRegistry,
}

fn load_target(spec: &str) -> Result<Target, (u8, String)> {
    if let Some(name) = spec.strip_prefix("bench:") {
        let bench = load_benchmark(name).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
        let externs = bench.externs();
        return Ok(Target { program: bench.program, registry: bench.registry, externs });
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| (EXIT_CONFIG, format!("reading {spec}: {e}")))?;
    let program = parse_program(&text).map_err(|e| (EXIT_ANALYSIS, e.to_string()))?;
    // File-based programs carry no generators; only analysis-level commands
    // work without a registry.
    let externs = ExternRegistry::new(&program);
    Ok(Target { program, registry: GeneratorRegistry::new("file-v1"), externs })
}

fn parse_budget(text: &str) -> Result<Budget, String> {
    let text = text.trim();
    if let Some(n) = text.strip_suffix('t') {
        let n: u64 = n.parse().map_err(|_| format!("invalid test-count budget {text:?}"))?;
        return Ok(Budget::Tests(n));
    }
    if let Some(n) = text.strip_suffix('s') {
        let n: u64 = n.parse().map_err(|_| format!("invalid wall-clock budget {text:?}"))?;
        return Ok(Budget::Wall(Duration::from_secs(n)));
    }
    Err(format!("budget {text:?} must end in 't' (tests) or 's' (seconds)"))
}

fn suite_config(common: &CommonArgs, mode: Mode) -> Result<SuiteConfig, String> {
    if common.reps < 1 {
        return Err("--reps must be >= 1".to_string());
    }
    if !(0.0..=1.0).contains(&common.p_const) {
        return Err("--p-const must be in [0, 1]".to_string());
    }
    let mut config =
        SuiteConfig::new(mode, parse_budget(&common.budget)?, common.reps, common.seed);
    config.step_budget = common.step_budget;
    config.p_const = common.p_const;
    config.out_dir = common.out.clone();
    Ok(config)
}

fn cmd_fuzz(args: &FuzzArgs) -> Result<(), (u8, String)> {
    let target = load_target(&args.common.program)?;

    if args.dump_analysis {
        let analysis = analyze(&target.program);
        print!("{}", render_analysis_report(&target.program, &analysis));
        return Ok(());
    }

    let config = suite_config(&args.common, args.mode).map_err(|e| (EXIT_CONFIG, e))?;
    let result = run_suite(&target.program, &target.externs, &target.registry, &config)
        .map_err(|e| (1, e.to_string()))?;

    for record in &result.records {
        println!(
            "{} rep {:03} seed {}: {} tests, app_cov {}, total_cov {}, corpus {}+{}",
            args.mode,
            record.repetition,
            record.seed,
            record.tests,
            record.final_app.len(),
            record.final_app.len() + record.final_ext.len(),
            record.corpus.successes.len(),
            record.corpus.failures.len(),
        );
        if args.save_corpus {
            let Some(out) = &args.common.out else {
                return Err((EXIT_CONFIG, "--save-corpus requires --out".to_string()));
            };
            let dir = out.join(format!("corpus_{}_rep{:03}", args.mode, record.repetition));
            let fp = campaign_fingerprint(
                &target.program,
                &target.registry,
                args.mode,
                args.common.p_const,
            );
            save_corpus(&dir, &record.corpus, &fp).map_err(|e| (1, e.to_string()))?;
        }
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), (u8, String)> {
    let (a, b) = args
        .modes
        .split_once(',')
        .ok_or((EXIT_CONFIG, "--modes expects two comma-separated modes".to_string()))?;
    let mode_a: Mode = a.trim().parse().map_err(|e: String| (EXIT_CONFIG, e))?;
    let mode_b: Mode = b.trim().parse().map_err(|e: String| (EXIT_CONFIG, e))?;

    let target = load_target(&args.common.program)?;
    let config_a = suite_config(&args.common, mode_a).map_err(|e| (EXIT_CONFIG, e))?;
    let config_b = suite_config(&args.common, mode_b).map_err(|e| (EXIT_CONFIG, e))?;

    let result_a = run_suite(&target.program, &target.externs, &target.registry, &config_a)
        .map_err(|e| (1, e.to_string()))?;
    let result_b = run_suite(&target.program, &target.externs, &target.registry, &config_b)
        .map_err(|e| (1, e.to_string()))?;

    let cmp = compare_modes(&result_a, &result_b);
    let json = render_comparison_json(&cmp);
    println!("{json}");
    if let Some(out) = &args.common.out {
        let path = out.join(format!("compare_{mode_a}_vs_{mode_b}.json"));
        std::fs::write(&path, &json)
            .map_err(|e| (1, format!("writing {}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fuzz(args) => cmd_fuzz(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

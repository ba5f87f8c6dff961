//! Bundled benchmark programs with their generators, extern stubs, hard
//! targets and witness inputs.
//!
//! - `thumbnail`: a year-filtering image pipeline analog. The hard branch
//!   wants a file whose modification calendar lands on one specific year;
//!   date draws are a tiny slice of the input, so untargeted mutation
//!   mostly churns file content.
//! - `csv-loader-analog`: the hard branch compares a generated object key
//!   against a string constant from application code.
//! - `nikoshen-analog`: the hard branch wants two independently generated
//!   keys (object key and table-item key) to match.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::generator::{GenCtx, GenError, GeneratorRegistry};
use crate::interp::{ExternCtx, ExternRegistry, Value};
use crate::ir::{parse_program, Arm, CodeTarget, Program};

/// The corpus clock: year generators offset from this fixed "current year".
pub const NOW_YEAR: i64 = 2034;
/// The year the thumbnail hard branch filters for.
pub const TARGET_YEAR: i64 = 2008;
/// Files per album.
pub const ALBUM_FILES: i64 = 3;
/// Content blob draws per file.
pub const CONTENT_DRAWS: u32 = 64;

pub const BENCHMARK_NAMES: [&str; 3] = ["thumbnail", "csv-loader-analog", "nikoshen-analog"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown benchmark {0:?} (available: thumbnail, csv-loader-analog, nikoshen-analog)")]
pub struct UnknownBenchmark(pub String);

pub struct Benchmark {
    pub name: &'static str,
    pub source: &'static str,
    pub program: Program,
    pub registry: GeneratorRegistry,
    /// Branch arms the targeted heuristic is meant to reach.
    pub hard_targets: Vec<CodeTarget>,
    /// A hand-built input covering every hard target.
    pub witness: Value,
    externs_builder: fn(&Program) -> ExternRegistry,
}

impl Benchmark {
    pub fn externs(&self) -> ExternRegistry {
        (self.externs_builder)(&self.program)
    }
}

pub fn load_benchmark(name: &str) -> Result<Benchmark, UnknownBenchmark> {
    match name {
        "thumbnail" => Ok(thumbnail()),
        "csv-loader-analog" => Ok(csv_loader()),
        "nikoshen-analog" => Ok(nikoshen()),
        other => Err(UnknownBenchmark(other.to_string())),
    }
}

fn record(type_name: &str, fields: &[(&str, Value)]) -> Value {
    Value::record(
        type_name,
        fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    )
}

fn target(function: &str, branch_label: u32, arm: Arm) -> CodeTarget {
    CodeTarget { function: function.to_string(), branch_label, arm }
}

/// Invert the geometric(1/5) CDF on a 10^4 grid: maps a uniform draw in
/// [0, 9999] to an offset in years. One draw instead of a Bernoulli run
/// keeps the FCI footprint of each date small.
pub fn year_offset_from_grid(u: i64) -> i64 {
    for k in 0..64 {
        let threshold = 10_000.0 * (1.0 - 0.8f64.powi(k + 1));
        if (u as f64) < threshold {
            return k as i64;
        }
    }
    64
}

fn gen_calendar(ctx: &mut GenCtx<'_>) -> Result<Value, GenError> {
    let day = ctx.draw(23, 1, 31);
    let month = ctx.draw(24, 1, 12);
    let offset = year_offset_from_grid(ctx.draw(25, 0, 9999));
    let future = ctx.draw(26, 0, 3) == 0;
    let year = if future { NOW_YEAR + offset } else { NOW_YEAR - offset };
    Ok(record("Cal", &[
        ("day", Value::Int(day)),
        ("month", Value::Int(month)),
        ("year", Value::Int(year)),
    ]))
}

// ---------------------------------------------------------------- thumbnail

const THUMBNAIL_SRC: &str = r#"
record Cal { day: int, month: int, year: int }
record Stamp { cal: Cal }
record Attrs { created: Stamp, accessed: Stamp, modified: Stamp }
record File { name: string, content: array<int>, attrs: Attrs }
record Album { files: array<File> }

entry main

fn extern thumb(v0: File) -> int
fn extern emit(v0: int) -> void

fn check_file(v0: File) -> int {
  v1 = fieldload v0.attrs
  v2 = fieldload v1.modified
  v3 = fieldload v2.cal
  v4 = fieldload v3.year
  v5 = const 2008
  v6 = binop eq v4, v5
  branch v6, Lthen, Lelse
Lthen:
  v7 = call thumb(v0)
  return v7
Lelse:
  v8 = const 0
  return v8
}

fn process(v0: array<File>, v1: int) -> void {
  v2 = const 3
  v3 = binop lt v1, v2
  branch v3, Lbody, Ldone
Lbody:
  v4 = arrayload v0[v1]
  v5 = call check_file(v4)
  call emit(v5)
  v6 = const 1
  v7 = binop add v1, v6
  call process(v0, v7)
  return
Ldone:
  return
}

fn main(v0: Album) -> void {
  v1 = fieldload v0.files
  v2 = const 0
  call process(v1, v2)
  return
}
"#;

fn gen_file(ctx: &mut GenCtx<'_>) -> Result<Value, GenError> {
    let name = ctx.gen_string(4);
    let mut content = Vec::with_capacity(CONTENT_DRAWS as usize);
    for _ in 0..CONTENT_DRAWS {
        content.push(Value::Int(ctx.draw(8, 0, 255)));
    }
    // Three dates from one call site, like the generator loop in the
    // motivating setup: created, accessed, modified in iteration order.
    let created = ctx.invoke(13, "Cal")?;
    let accessed = ctx.invoke(13, "Cal")?;
    let modified = ctx.invoke(13, "Cal")?;
    let stamp = |cal: Value| record("Stamp", &[("cal", cal)]);
    Ok(record("File", &[
        ("name", Value::string(name)),
        ("content", Value::array(content)),
        ("attrs", record("Attrs", &[
            ("created", stamp(created)),
            ("accessed", stamp(accessed)),
            ("modified", stamp(modified)),
        ])),
    ]))
}

fn gen_album(ctx: &mut GenCtx<'_>) -> Result<Value, GenError> {
    let mut files = Vec::with_capacity(ALBUM_FILES as usize);
    for _ in 0..ALBUM_FILES {
        files.push(ctx.invoke(1, "File")?);
    }
    Ok(record("Album", &[("files", Value::array(files))]))
}

fn thumbnail_externs(program: &Program) -> ExternRegistry {
    let mut externs = ExternRegistry::new(program);
    externs
        .register("thumb", |ctx: &mut ExternCtx<'_>, args: &[Value]| {
            ctx.cover("thumb.call");
            let Value::Record { fields, .. } = &args[0] else {
                return Err("thumb expects a file record".to_string());
            };
            let Some(Value::Array(content)) = fields.get("content") else {
                return Err("file record has no content".to_string());
            };
            let sum: i64 = content
                .iter()
                .map(|v| if let Value::Int(n) = v { *n } else { 0 })
                .sum();
            if sum % 2 == 0 {
                ctx.cover("thumb.even");
            } else {
                ctx.cover("thumb.odd");
            }
            Ok(Some(Value::Int(sum)))
        })
        .expect("thumb is declared extern");
    externs
        .register("emit", |ctx: &mut ExternCtx<'_>, _args: &[Value]| {
            ctx.cover("emit.call");
            Ok(None)
        })
        .expect("emit is declared extern");
    externs
}

pub fn thumbnail_witness() -> Value {
    let cal = |year: i64| {
        record("Cal", &[
            ("day", Value::Int(14)),
            ("month", Value::Int(6)),
            ("year", Value::Int(year)),
        ])
    };
    let stamp = |year: i64| record("Stamp", &[("cal", cal(year))]);
    let file = |modified_year: i64| {
        record("File", &[
            ("name", Value::string("img")),
            ("content", Value::array(vec![Value::Int(7); CONTENT_DRAWS as usize])),
            ("attrs", record("Attrs", &[
                ("created", stamp(2030)),
                ("accessed", stamp(2031)),
                ("modified", stamp(modified_year)),
            ])),
        ])
    };
    record("Album", &[(
        "files",
        Value::array(vec![file(TARGET_YEAR), file(2020), file(2035)]),
    )])
}

fn thumbnail() -> Benchmark {
    let program = parse_program(THUMBNAIL_SRC).expect("bundled thumbnail source parses");
    let mut registry = GeneratorRegistry::new("thumbnail-v1");
    registry.register("Album", gen_album);
    registry.register("File", gen_file);
    registry.register("Cal", gen_calendar);
    Benchmark {
        name: "thumbnail",
        source: THUMBNAIL_SRC,
        program,
        registry,
        hard_targets: vec![target("check_file", 6, Arm::Then)],
        witness: thumbnail_witness(),
        externs_builder: thumbnail_externs,
    }
}

// --------------------------------------------------------- csv-loader-analog

const CSV_LOADER_SRC: &str = r#"
record Row { qty: int, price: int }
record Req { key: string, rows: array<Row> }

entry main

fn extern db_put(v0: string, v1: int) -> void
fn extern log_skip(v0: string) -> void

fn sum_rows(v0: array<Row>, v1: int, v2: int) -> int {
  v3 = const 4
  v4 = binop lt v1, v3
  branch v4, Lbody, Ldone
Lbody:
  v5 = arrayload v0[v1]
  v6 = fieldload v5.qty
  v7 = fieldload v5.price
  v8 = binop mul v6, v7
  v9 = binop add v2, v8
  v10 = const 1
  v11 = binop add v1, v10
  v12 = call sum_rows(v0, v11, v9)
  return v12
Ldone:
  return v2
}

fn main(v0: Req) -> void {
  v1 = fieldload v0.key
  v2 = strconst "grades.csv"
  v3 = binop eq v1, v2
  branch v3, Lload, Lskip
Lload:
  v4 = fieldload v0.rows
  v5 = const 0
  v6 = const 0
  v7 = call sum_rows(v4, v5, v6)
  v8 = const 1000
  v9 = binop gt v7, v8
  branch v9, Lbig, Lsmall
Lbig:
  v10 = strconst "totals"
  call db_put(v10, v7)
  return
Lsmall:
  call db_put(v1, v7)
  return
Lskip:
  call log_skip(v1)
  return
}
"#;

fn gen_row(ctx: &mut GenCtx<'_>) -> Result<Value, GenError> {
    let qty = ctx.draw(20, 1, 9);
    let price = ctx.draw(21, 1, 99);
    Ok(record("Row", &[("qty", Value::Int(qty)), ("price", Value::Int(price))]))
}

fn gen_req(ctx: &mut GenCtx<'_>) -> Result<Value, GenError> {
    let key = ctx.gen_string(1);
    let mut rows = Vec::with_capacity(4);
    for _ in 0..4 {
        rows.push(ctx.invoke(10, "Row")?);
    }
    Ok(record("Req", &[("key", Value::string(key)), ("rows", Value::array(rows))]))
}

fn db_put_stub(ctx: &mut ExternCtx<'_>, args: &[Value]) -> Result<Option<Value>, String> {
    let Value::Str(key) = &args[0] else {
        return Err("db_put expects a string key".to_string());
    };
    if key.is_empty() {
        return Err("db_put: empty key".to_string());
    }
    ctx.cover("db.put");
    if ctx.store.insert(format!("db/{key}"), args[1].clone()).is_some() {
        ctx.cover("db.put.overwrite");
    }
    Ok(None)
}

fn csv_externs(program: &Program) -> ExternRegistry {
    let mut externs = ExternRegistry::new(program);
    externs.register("db_put", db_put_stub).expect("db_put is declared extern");
    externs
        .register("log_skip", |ctx: &mut ExternCtx<'_>, args: &[Value]| {
            let Value::Str(s) = &args[0] else {
                return Err("log_skip expects a string".to_string());
            };
            if s.is_empty() {
                return Err("log_skip: empty key".to_string());
            }
            ctx.cover("log.skip");
            Ok(None)
        })
        .expect("log_skip is declared extern");
    externs
}

pub fn csv_witness() -> Value {
    let row = |qty: i64, price: i64| {
        record("Row", &[("qty", Value::Int(qty)), ("price", Value::Int(price))])
    };
    record("Req", &[
        ("key", Value::string("grades.csv")),
        ("rows", Value::array(vec![row(9, 99), row(8, 90), row(7, 80), row(6, 70)])),
    ])
}

fn csv_loader() -> Benchmark {
    let program = parse_program(CSV_LOADER_SRC).expect("bundled csv-loader source parses");
    let mut registry = GeneratorRegistry::new("csv-loader-v1");
    registry.register("Req", gen_req);
    registry.register("Row", gen_row);
    Benchmark {
        name: "csv-loader-analog",
        source: CSV_LOADER_SRC,
        program,
        registry,
        hard_targets: vec![target("main", 3, Arm::Then)],
        witness: csv_witness(),
        externs_builder: csv_externs,
    }
}

// ---------------------------------------------------------- nikoshen-analog

const NIKOSHEN_SRC: &str = r#"
record Item { key: string, val: int }
record Event { obj_key: string, item: Item }

entry main

fn extern db_put(v0: string, v1: int) -> void
fn extern db_touch(v0: string) -> void

fn main(v0: Event) -> void {
  v1 = fieldload v0.obj_key
  v2 = fieldload v0.item
  v3 = fieldload v2.key
  v4 = binop eq v1, v3
  branch v4, Lmatch, Lmiss
Lmatch:
  v5 = fieldload v2.val
  v6 = const 50
  v7 = binop gt v5, v6
  branch v7, Lhot, Lcold
Lhot:
  call db_put(v1, v5)
  return
Lcold:
  call db_touch(v1)
  return
Lmiss:
  v8 = strconst "users"
  call db_touch(v8)
  v9 = strconst "sessions"
  call db_touch(v9)
  return
}
"#;

fn gen_item(ctx: &mut GenCtx<'_>) -> Result<Value, GenError> {
    let key = ctx.gen_string(1);
    let val = ctx.draw(5, 0, 100);
    Ok(record("Item", &[("key", Value::string(key)), ("val", Value::Int(val))]))
}

fn gen_event(ctx: &mut GenCtx<'_>) -> Result<Value, GenError> {
    let obj_key = ctx.gen_string(1);
    let item = ctx.invoke(10, "Item")?;
    Ok(record("Event", &[("obj_key", Value::string(obj_key)), ("item", item)]))
}

fn nikoshen_externs(program: &Program) -> ExternRegistry {
    let mut externs = ExternRegistry::new(program);
    externs.register("db_put", db_put_stub).expect("db_put is declared extern");
    externs
        .register("db_touch", |ctx: &mut ExternCtx<'_>, args: &[Value]| {
            let Value::Str(key) = &args[0] else {
                return Err("db_touch expects a string key".to_string());
            };
            if key.is_empty() {
                return Err("db_touch: empty key".to_string());
            }
            ctx.cover("db.touch");
            if ctx.store.contains_key(&format!("db/{key}")) {
                ctx.cover("db.touch.exists");
            }
            Ok(None)
        })
        .expect("db_touch is declared extern");
    externs
}

pub fn nikoshen_witness() -> Value {
    record("Event", &[
        ("obj_key", Value::string("users")),
        ("item", record("Item", &[
            ("key", Value::string("users")),
            ("val", Value::Int(60)),
        ])),
    ])
}

fn nikoshen() -> Benchmark {
    let program = parse_program(NIKOSHEN_SRC).expect("bundled nikoshen source parses");
    let mut registry = GeneratorRegistry::new("nikoshen-v1");
    registry.register("Event", gen_event);
    registry.register("Item", gen_item);
    Benchmark {
        name: "nikoshen-analog",
        source: NIKOSHEN_SRC,
        program,
        registry,
        hard_targets: vec![target("main", 4, Arm::Then)],
        witness: nikoshen_witness(),
        externs_builder: nikoshen_externs,
    }
}

/// Used by tests: a map from field names for quick witness assertions.
pub fn record_fields(value: &Value) -> Option<&BTreeMap<String, Value>> {
    if let Value::Record { fields, .. } = value {
        Some(fields)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze;
    use crate::generator::{generate, Fci, GenConfig};
    use crate::interp::run;
    use crate::ir::Arm;

    #[test]
    fn unknown_benchmark_is_an_error() {
        assert!(load_benchmark("nope").is_err());
        for name in BENCHMARK_NAMES {
            assert_eq!(load_benchmark(name).unwrap().name, name);
        }
    }

    #[test]
    fn witnesses_cover_every_hard_target() {
        for name in BENCHMARK_NAMES {
            let bench = load_benchmark(name).unwrap();
            let externs = bench.externs();
            let result = run(&bench.program, &externs, &bench.witness, 100_000);
            assert!(result.is_success(), "{name} witness must run clean");
            for target in &bench.hard_targets {
                assert!(
                    result.coverage.app.contains(target),
                    "{name}: witness misses hard target {target}"
                );
            }
        }
    }

    #[test]
    fn thumbnail_year_match_covers_then_arm() {
        let bench = load_benchmark("thumbnail").unwrap();
        let externs = bench.externs();
        let result = run(&bench.program, &externs, &thumbnail_witness(), 100_000);
        let then_arm = CodeTarget {
            function: "check_file".to_string(),
            branch_label: 6,
            arm: Arm::Then,
        };
        assert!(result.coverage.app.contains(&then_arm));
        // The two non-matching files also exercise the else arm.
        let else_arm = CodeTarget { arm: Arm::Else, ..then_arm };
        assert!(result.coverage.app.contains(&else_arm));
    }

    #[test]
    fn thumbnail_distance_ladder_keeps_calendar_closest() {
        let bench = load_benchmark("thumbnail").unwrap();
        let analysis = analyze(&bench.program);
        let entries = analysis.distances.entries_unchecked();
        let get = |name: &str| {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .unwrap_or_else(|| panic!("{name} missing from {entries:?}"))
                .1
        };
        // Frozen from the hop-count BFS: the ordering (not the integers)
        // mirrors the influencing-type listing of the original program.
        assert_eq!(get("Cal"), 2.0);
        assert_eq!(get("Stamp"), 3.0);
        assert_eq!(get("Attrs"), 4.0);
        assert_eq!(get("File"), 5.0);
        assert_eq!(get("array<File>"), 7.0);
        assert_eq!(get("Album"), 9.0);
        assert!(get("Cal") < get("File"), "calendar must be strictly closer than file");
    }

    #[test]
    fn csv_unification_prefers_the_larger_target() {
        // Req is at distance 2 in the key branch (1 influencing type) and
        // at 3 in the sum branch (3 influencing types): the larger target
        // wins.
        let bench = load_benchmark("csv-loader-analog").unwrap();
        let analysis = analyze(&bench.program);
        let entries = analysis.distances.entries_unchecked();
        assert!(entries.contains(&("Req".to_string(), 3.0)), "{entries:?}");
    }

    #[test]
    fn string_tables_collect_reachable_constants() {
        let csv = load_benchmark("csv-loader-analog").unwrap();
        assert_eq!(analyze(&csv.program).strings.0, vec!["grades.csv", "totals"]);
        let nik = load_benchmark("nikoshen-analog").unwrap();
        assert_eq!(analyze(&nik.program).strings.0, vec!["users", "sessions"]);
        let thumb = load_benchmark("thumbnail").unwrap();
        assert!(analyze(&thumb.program).strings.is_empty());
    }

    #[test]
    fn year_offset_grid_is_a_valid_geometric_inverse() {
        // The grid inverse must be monotone and start at the exact
        // geometric(1/5) head probabilities.
        assert_eq!(year_offset_from_grid(0), 0);
        assert_eq!(year_offset_from_grid(1999), 0);
        assert_eq!(year_offset_from_grid(2000), 1);
        let mut last = 0;
        for u in 0..10_000 {
            let g = year_offset_from_grid(u);
            assert!(g >= last);
            last = g;
        }
    }

    #[test]
    fn target_year_probability_matches_grid_closed_form_monte_carlo() {
        // Exact per-generation probability from the grid: the number of
        // u-values mapping to offset NOW-TARGET, past branch (3 of 4 coin
        // values).
        let offset = NOW_YEAR - TARGET_YEAR;
        let grid_count =
            (0..10_000).filter(|u| year_offset_from_grid(*u) == offset).count() as f64;
        let p_exact = (grid_count / 10_000.0) * 0.75;
        assert!(p_exact > 0.0, "target year must be reachable");
        assert!(p_exact < 0.01, "target year must stay rare");

        let bench = load_benchmark("thumbnail").unwrap();
        let trials = 200_000u32;
        let mut hits = 0u32;
        for seed in 0..trials {
            let (value, _) = generate(
                &bench.registry,
                "Cal",
                &Fci::default(),
                &GenConfig::new(seed as u64),
            )
            .unwrap();
            let fields = record_fields(&value).unwrap();
            if fields["year"] == Value::Int(TARGET_YEAR) {
                hits += 1;
            }
        }
        let expected = trials as f64 * p_exact;
        let sigma = (trials as f64 * p_exact * (1.0 - p_exact)).sqrt();
        assert!(
            (hits as f64 - expected).abs() <= 3.0 * sigma,
            "hits {hits}, expected {expected:.1} +/- {:.1}",
            3.0 * sigma
        );
    }

    #[test]
    fn date_relevant_draws_stay_under_five_percent() {
        let bench = load_benchmark("thumbnail").unwrap();
        let (_, fci) =
            generate(&bench.registry, "Album", &Fci::default(), &GenConfig::new(1)).unwrap();
        // The draws that decide a file's modification year: the offset and
        // future/past draws (sites 25, 26) of the third date (q = 3).
        let date_relevant = fci
            .entries
            .iter()
            .filter(|e| {
                let pairs = &e.ei.0;
                pairs.len() >= 2
                    && pairs[pairs.len() - 2] == (13, 3)
                    && matches!(pairs.last().unwrap().0, 25 | 26)
            })
            .count();
        assert_eq!(date_relevant, 2 * ALBUM_FILES as usize);
        let fraction = date_relevant as f64 / fci.len() as f64;
        assert!(fraction < 0.05, "date-relevant fraction {fraction:.3} of {}", fci.len());
    }

    #[test]
    fn csv_witness_sums_exercise_the_big_branch() {
        let bench = load_benchmark("csv-loader-analog").unwrap();
        let externs = bench.externs();
        let result = run(&bench.program, &externs, &csv_witness(), 100_000);
        let big = CodeTarget { function: "main".to_string(), branch_label: 10, arm: Arm::Then };
        assert!(result.coverage.app.contains(&big), "witness sum exceeds the threshold");
    }

    #[test]
    fn nikoshen_witness_reaches_match_and_hot_branches() {
        let bench = load_benchmark("nikoshen-analog").unwrap();
        let externs = bench.externs();
        let result = run(&bench.program, &externs, &nikoshen_witness(), 100_000);
        for (label, arm) in [(4, Arm::Then), (8, Arm::Then)] {
            let target = CodeTarget { function: "main".to_string(), branch_label: label, arm };
            assert!(result.coverage.app.contains(&target));
        }
    }
}

//! Python bindings: parse/analyze IR programs, load bundled benchmarks,
//! run single tests and whole campaigns from Python.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use typefuzz::analysis::{analyze, render_analysis_report};
use typefuzz::bench::{load_benchmark, Benchmark};
use typefuzz::engine::{fuzz_campaign, Budget, CampaignOptions};
use typefuzz::interp::{run, Outcome, Value};
use typefuzz::ir::{enumerate_code_targets, parse_program, pretty_print};
use typefuzz::mutation::Mode;

fn value_to_py(py: Python<'_>, value: &Value) -> PyResult<Py<PyAny>> {
    Ok(match value {
        Value::Int(n) => n.into_pyobject(py)?.into_any().unbind(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Str(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items.iter() {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Record { type_name, fields } => {
            let dict = PyDict::new(py);
            dict.set_item("__record__", type_name.as_ref())?;
            for (name, v) in fields.iter() {
                dict.set_item(name, value_to_py(py, v)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn value_from_py(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if let Ok(b) = obj.extract::<bool>() {
        return Ok(Value::Bool(b));
    }
    if let Ok(n) = obj.extract::<i64>() {
        return Ok(Value::Int(n));
    }
    if let Ok(s) = obj.extract::<String>() {
        return Ok(Value::string(s));
    }
    if let Ok(list) = obj.cast::<PyList>() {
        let mut items = Vec::with_capacity(list.len());
        for item in list.iter() {
            items.push(value_from_py(&item)?);
        }
        return Ok(Value::array(items));
    }
    if let Ok(dict) = obj.cast::<PyDict>() {
        let Some(type_name) = dict.get_item("__record__")? else {
            return Err(PyValueError::new_err(
                "record dicts need a '__record__' key naming the record type",
            ));
        };
        let type_name: String = type_name.extract()?;
        let mut fields = BTreeMap::new();
        for (key, val) in dict.iter() {
            let key: String = key.extract()?;
            if key == "__record__" {
                continue;
            }
            fields.insert(key, value_from_py(&val)?);
        }
        return Ok(Value::record(&type_name, fields));
    }
    Err(PyValueError::new_err(format!("cannot convert {} to an IR value", obj.get_type())))
}

/// A parsed mini-IR program.
#[pyclass(name = "Program")]
struct PyProgram {
    program: typefuzz::Program,
}

#[pymethods]
impl PyProgram {
    /// Canonical pretty-printed source.
    fn pretty(&self) -> String {
        pretty_print(&self.program)
    }

    /// All (function, branch_label, arm) coverage targets.
    fn code_targets(&self) -> Vec<(String, u32, String)> {
        enumerate_code_targets(&self.program)
            .into_iter()
            .map(|t| (t.function, t.branch_label, t.arm.to_string()))
            .collect()
    }

    /// Deterministic plain-text analysis report.
    fn analysis_report(&self) -> String {
        let analysis = analyze(&self.program);
        render_analysis_report(&self.program, &analysis)
    }

    /// Unified type -> distance map from the static phase.
    fn distances(&self) -> Vec<(String, f64)> {
        analyze(&self.program).distances.entries_unchecked()
    }

    /// Reachable constant strings, in collection order.
    fn string_table(&self) -> Vec<String> {
        analyze(&self.program).strings.0
    }
}

#[pyfunction]
fn parse(text: &str) -> PyResult<PyProgram> {
    let program = parse_program(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyProgram { program })
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(PyValueError::new_err)
}

/// A bundled benchmark: program, generators and extern stubs.
#[pyclass(name = "Benchmark")]
struct PyBenchmark {
    bench: Benchmark,
}

#[pymethods]
impl PyBenchmark {
    #[getter]
    fn name(&self) -> &str {
        self.bench.name
    }

    fn program_text(&self) -> &str {
        self.bench.source
    }

    fn analysis_report(&self) -> String {
        let analysis = analyze(&self.bench.program);
        render_analysis_report(&self.bench.program, &analysis)
    }

    fn hard_targets(&self) -> Vec<(String, u32, String)> {
        self.bench
            .hard_targets
            .iter()
            .map(|t| (t.function.clone(), t.branch_label, t.arm.to_string()))
            .collect()
    }

    /// Run the stored witness input; returns a result dict.
    fn run_witness(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let externs = self.bench.externs();
        let result = run(&self.bench.program, &externs, &self.bench.witness, 100_000);
        test_result_dict(py, &result, &self.bench)
    }

    /// Run an arbitrary input built from Python values.
    fn run_input(&self, py: Python<'_>, input: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let value = value_from_py(input)?;
        let externs = self.bench.externs();
        let result = run(&self.bench.program, &externs, &value, 100_000);
        test_result_dict(py, &result, &self.bench)
    }

    /// The witness input as Python values.
    fn witness(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        value_to_py(py, &self.bench.witness)
    }

    /// Run one campaign; returns a stats dict.
    #[pyo3(signature = (mode, tests, seed, p_const=0.5))]
    fn fuzz(
        &self,
        py: Python<'_>,
        mode: &str,
        tests: u64,
        seed: u64,
        p_const: f64,
    ) -> PyResult<Py<PyAny>> {
        let mode = parse_mode(mode)?;
        let externs = self.bench.externs();
        let mut options = CampaignOptions::new(mode, Budget::Tests(tests), seed);
        options.p_const = p_const;
        let (corpus, state) =
            fuzz_campaign(&self.bench.program, &externs, &self.bench.registry, &options)
                .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;

        let hard_covered = self
            .bench
            .hard_targets
            .iter()
            .all(|t| state.total_coverage.app.contains(t));
        let dict = PyDict::new(py);
        dict.set_item("tests", state.stats.tests_run)?;
        dict.set_item("app_cov", state.total_coverage.app.len())?;
        dict.set_item("total_cov", state.total_coverage.total_len())?;
        dict.set_item("uncovered", state.uncovered.len())?;
        dict.set_item("saved", corpus.successes.len())?;
        dict.set_item("failures", corpus.failures.len())?;
        dict.set_item("hard_covered", hard_covered)?;
        dict.set_item(
            "covered_targets",
            state
                .total_coverage
                .app
                .iter()
                .map(|t| (t.function.clone(), t.branch_label, t.arm.to_string()))
                .collect::<Vec<_>>(),
        )?;
        Ok(dict.into_any().unbind())
    }
}

fn test_result_dict(
    py: Python<'_>,
    result: &typefuzz::TestResult,
    bench: &Benchmark,
) -> PyResult<Py<PyAny>> {
    let dict = PyDict::new(py);
    let outcome = match result.outcome {
        Outcome::Success => "success".to_string(),
        Outcome::Failure(kind) => format!("failure:{kind:?}"),
    };
    dict.set_item("outcome", outcome)?;
    dict.set_item("steps", result.steps)?;
    dict.set_item("app_cov", result.coverage.app.len())?;
    dict.set_item("ext_cov", result.coverage.ext.len())?;
    let hard_covered =
        bench.hard_targets.iter().all(|t| result.coverage.app.contains(t));
    dict.set_item("hard_covered", hard_covered)?;
    Ok(dict.into_any().unbind())
}

#[pyfunction(name = "load_benchmark")]
fn load_benchmark_py(name: &str) -> PyResult<PyBenchmark> {
    let bench = load_benchmark(name).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyBenchmark { bench })
}

#[pyfunction]
fn benchmark_names() -> Vec<&'static str> {
    typefuzz::bench::BENCHMARK_NAMES.to_vec()
}

#[pymodule]
fn typefuzz_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProgram>()?;
    m.add_class::<PyBenchmark>()?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(load_benchmark_py, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_names, m)?)?;
    Ok(())
}

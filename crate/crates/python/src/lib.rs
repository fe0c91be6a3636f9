//! Python bindings. Runs are loaded into [`Run`] objects; every analysis
//! returns its report as a JSON string, the same document the CLI prints.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use delta_core::analyses::render::{Format, Report};
use delta_core::analyses::{self, AnalysisOptions, TestMethod};
use delta_core::cfg::{graph_for_runs, render_dot, CfgOptions, GraphDump, Scope};
use delta_core::ingest::{AlignOptions, AlignStrategy, AlignedRun, E2eEndpoints};
use delta_core::simgen::{self, PipelineSpec};
use delta_core::stats::{self, TieMode};

fn value_error<E: Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scope(name: &str) -> Result<Scope, String> {
    match name {
        "per-host" => Ok(Scope::PerHost),
        "cross-host" => Ok(Scope::CrossHost),
        other => Err(format!("unknown scope \"{other}\" (per-host, cross-host)")),
    }
}

fn strategy(align: &str, offset_ns: Option<f64>, floor_ns: f64) -> Result<AlignStrategy, String> {
    match (align, offset_ns) {
        ("explicit-offset", Some(o)) => Ok(AlignStrategy::ExplicitOffset(o)),
        ("explicit-offset", None) => Err("explicit-offset needs offset_ns".into()),
        (_, Some(_)) => Err("offset_ns needs align=\"explicit-offset\"".into()),
        ("pre-aligned", None) => Ok(AlignStrategy::PreAligned),
        ("min-symmetry", None) => Ok(AlignStrategy::MinSymmetry {
            forward: None,
            reverse: None,
            floor_ns: Some(floor_ns),
        }),
        (other, None) => Err(format!(
            "unknown alignment \"{other}\" (min-symmetry, explicit-offset, pre-aligned)"
        )),
    }
}

fn method(permutations: Option<usize>, seed: u64) -> TestMethod {
    match permutations {
        Some(iterations) => TestMethod::Permutation { iterations, seed },
        None => TestMethod::Asymptotic,
    }
}

fn json<R: Report>(r: &R) -> String {
    r.render(Format::Json)
}

/// One aligned sender/receiver run.
#[pyclass(name = "Run", frozen, module = "delta")]
pub struct Run {
    inner: AlignedRun,
}

#[pymethods]
impl Run {
    /// Loads a run directory holding `sender.csv` and `receiver.csv`.
    #[staticmethod]
    #[pyo3(signature = (path, align = "min-symmetry", offset_ns = None, min_delay_floor = 0.0, e2e_start = None, e2e_end = None))]
    fn load(
        path: PathBuf,
        align: &str,
        offset_ns: Option<f64>,
        min_delay_floor: f64,
        e2e_start: Option<String>,
        e2e_end: Option<String>,
    ) -> PyResult<Self> {
        let options = AlignOptions {
            strategy: strategy(align, offset_ns, min_delay_floor).map_err(value_error)?,
            endpoints: E2eEndpoints {
                start: e2e_start,
                end: e2e_end,
            },
        };
        let inner = delta_core::cli::load_run(&path, &options).map_err(value_error)?;
        Ok(Run { inner })
    }

    #[getter]
    fn run_id(&self) -> &str {
        self.inner.run_id()
    }

    #[getter]
    fn version_label(&self) -> &str {
        self.inner.version_label()
    }

    /// Receiver clock minus sender clock as applied, in ns.
    #[getter]
    fn offset_ns(&self) -> i64 {
        self.inner.applied_offset_ns()
    }

    #[getter]
    fn energy_joules(&self) -> Option<f64> {
        self.inner.energy_joules()
    }

    /// End-to-end latency in ns per packet sequence number.
    #[getter]
    fn e2e_ns(&self) -> BTreeMap<u64, f64> {
        self.inner.e2e_ns.clone()
    }

    fn alignment(&self) -> String {
        serde_json::to_string(&self.inner.alignment).expect("alignment serializes")
    }

    fn __repr__(&self) -> String {
        format!(
            "Run(run_id={:?}, version_label={:?}, packets={})",
            self.inner.run_id(),
            self.inner.version_label(),
            self.inner.e2e_ns.len()
        )
    }
}

fn owned(runs: &[PyRef<'_, Run>]) -> Vec<AlignedRun> {
    runs.iter().map(|r| r.inner.clone()).collect()
}

fn cfg_options(min_support: usize, scope_name: &str) -> PyResult<CfgOptions> {
    Ok(CfgOptions {
        min_support,
        scope: scope(scope_name).map_err(value_error)?,
    })
}

/// The reduced control-flow graph pooled over `runs`, as JSON, plus its
/// DOT rendering.
#[pyfunction(name = "cfg")]
#[pyo3(signature = (runs, min_support = 30, scope = "per-host"))]
fn control_flow_graph(runs: Vec<PyRef<'_, Run>>, min_support: usize, scope: &str) -> PyResult<(String, String)> {
    let refs: Vec<&AlignedRun> = runs.iter().map(|r| &r.inner).collect();
    let graph = graph_for_runs(&refs, cfg_options(min_support, scope)?).map_err(value_error)?;
    Ok((json(&GraphDump::from(&graph)), render_dot(&graph)))
}

#[pyfunction]
#[pyo3(signature = (run, min_support = 30, scope = "per-host"))]
fn criticality(run: PyRef<'_, Run>, min_support: usize, scope: &str) -> PyResult<String> {
    let graph = analyses::run_graph(&run.inner, cfg_options(min_support, scope)?).map_err(value_error)?;
    let rep = analyses::latency_criticality(&run.inner, &graph).map_err(value_error)?;
    Ok(json(&rep))
}

#[pyfunction]
#[pyo3(signature = (runs, alpha = 0.01, min_support = 30, scope = "per-host", permutations = None, seed = 0))]
fn predictability(
    runs: Vec<PyRef<'_, Run>>,
    alpha: f64,
    min_support: usize,
    scope: &str,
    permutations: Option<usize>,
    seed: u64,
) -> PyResult<String> {
    let options = AnalysisOptions {
        alpha,
        tie_mode: TieMode::Midrank,
        cfg: cfg_options(min_support, scope)?,
        method: method(permutations, seed),
    };
    let rep = analyses::timing_predictability(&owned(&runs), &options).map_err(value_error)?;
    Ok(json(&rep))
}

#[pyfunction]
#[pyo3(signature = (old, new, alpha = 0.01, min_support = 30, scope = "per-host", permutations = None, seed = 0))]
fn diff(
    old: Vec<PyRef<'_, Run>>,
    new: Vec<PyRef<'_, Run>>,
    alpha: f64,
    min_support: usize,
    scope: &str,
    permutations: Option<usize>,
    seed: u64,
) -> PyResult<String> {
    let options = AnalysisOptions {
        alpha,
        tie_mode: TieMode::Midrank,
        cfg: cfg_options(min_support, scope)?,
        method: method(permutations, seed),
    };
    let rep = analyses::modification_diff(&owned(&old), &owned(&new), &options).map_err(value_error)?;
    Ok(json(&rep))
}

#[pyfunction]
fn energy(runs: Vec<PyRef<'_, Run>>) -> PyResult<String> {
    Ok(json(&analyses::energy_et2(&owned(&runs)).map_err(value_error)?))
}

#[pyfunction]
#[pyo3(signature = (fast, slow, min_support = 30, scope = "per-host"))]
fn slowdown(fast: PyRef<'_, Run>, slow: PyRef<'_, Run>, min_support: usize, scope: &str) -> PyResult<String> {
    let graph =
        graph_for_runs(&[&fast.inner, &slow.inner], cfg_options(min_support, scope)?).map_err(value_error)?;
    let rep = analyses::slowdown(&fast.inner, &slow.inner, &graph).map_err(value_error)?;
    Ok(json(&rep))
}

#[pyfunction]
fn et2(energy_per_packet_j: f64, mean_e2e_s: f64) -> f64 {
    analyses::et2(energy_per_packet_j, mean_e2e_s)
}

/// k-sample Anderson-Darling test with midrank ties, as JSON.
#[pyfunction]
#[pyo3(signature = (samples, alpha = 0.01, permutations = None, seed = 0))]
fn ad_ksample(samples: Vec<Vec<f64>>, alpha: f64, permutations: Option<usize>, seed: u64) -> PyResult<String> {
    let result = match permutations {
        Some(b) => stats::ad_ksample_permutation(&samples, alpha, TieMode::Midrank, b, seed),
        None => stats::ad_ksample(&samples, alpha, TieMode::Midrank),
    }
    .map_err(value_error)?;
    Ok(serde_json::to_string(&result).expect("test result serializes"))
}

#[pyfunction]
fn default_spec() -> String {
    serde_json::to_string_pretty(&simgen::default_pipeline()).expect("spec serializes")
}

fn write_simulation(out_dir: &Path, n_packets: usize, spec: Option<&str>, seed: Option<u64>) -> Result<[String; 3], String> {
    let mut spec: PipelineSpec = match spec {
        Some(text) => serde_json::from_str(text).map_err(|e| format!("InvalidSpec: {e}"))?,
        None => simgen::default_pipeline(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let generated = simgen::generate(&spec, n_packets).map_err(|e| e.to_string())?;
    let paths = simgen::write_fixture(out_dir, &generated).map_err(|e| format!("Io: {e}"))?;
    Ok([paths.sender, paths.receiver, paths.ground_truth].map(|p| p.display().to_string()))
}

/// Generates a fixture into `out_dir` from a JSON spec (the built-in
/// pipeline when omitted). Returns the sender, receiver and ground-truth
/// paths.
#[pyfunction]
#[pyo3(signature = (out_dir, n_packets, spec = None, seed = None))]
fn simulate(out_dir: PathBuf, n_packets: usize, spec: Option<&str>, seed: Option<u64>) -> PyResult<(String, String, String)> {
    let [s, r, g] = write_simulation(&out_dir, n_packets, spec, seed).map_err(value_error)?;
    Ok((s, r, g))
}

/// Runs the command line in-process: `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("delta".to_string()).chain(args);
    let code = delta_core::cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

#[pymodule]
fn delta(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Run>()?;
    m.add_function(wrap_pyfunction!(control_flow_graph, m)?)?;
    m.add_function(wrap_pyfunction!(criticality, m)?)?;
    m.add_function(wrap_pyfunction!(predictability, m)?)?;
    m.add_function(wrap_pyfunction!(diff, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(slowdown, m)?)?;
    m.add_function(wrap_pyfunction!(et2, m)?)?;
    m.add_function(wrap_pyfunction!(ad_ksample, m)?)?;
    m.add_function(wrap_pyfunction!(default_spec, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_names() {
        assert_eq!(scope("per-host"), Ok(Scope::PerHost));
        assert_eq!(scope("cross-host"), Ok(Scope::CrossHost));
        assert!(scope("both").is_err());
    }

    #[test]
    fn alignment_names() {
        assert_eq!(strategy("pre-aligned", None, 0.0), Ok(AlignStrategy::PreAligned));
        assert_eq!(
            strategy("explicit-offset", Some(5.0), 0.0),
            Ok(AlignStrategy::ExplicitOffset(5.0))
        );
        assert!(strategy("explicit-offset", None, 0.0).is_err());
        assert!(strategy("pre-aligned", Some(1.0), 0.0).is_err());
        assert!(strategy("ntp", None, 0.0).is_err());
    }

    #[test]
    fn simulation_writes_loadable_run() {
        let dir = tempfile_dir();
        let [s, _, g] = write_simulation(&dir, 100, None, Some(4)).unwrap();
        assert!(s.ends_with("sender.csv"));
        let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(g).unwrap()).unwrap();
        assert_eq!(truth["seed"], 4);
        let run = delta_core::cli::load_run(&dir, &AlignOptions::default()).unwrap();
        assert_eq!(run.e2e_ns.len(), 100);
        std::fs::remove_dir_all(dir).unwrap();
    }

    fn tempfile_dir() -> PathBuf {
        let dir = std::env::temp_dir().join(format!("delta-python-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}

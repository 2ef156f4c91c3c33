//! Python bindings for novex-core.
//!
//! Exposes p-values, BH/FastLSU, the score model and its quantized wire
//! form, synthetic data, single episodes and sweeps.

use num_rational::Ratio;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use novex_core::{
    self as core, emit_table, fastlsu_actual_comm, fastlsu_comm_bound, parse_level, run_episode,
    run_sweep, EpisodeConfig, Error, ForestConfig, Level, Method, PValue, PValueVector,
    QuantSpec, Scorer, SweepAxis, SweepSpec, SynthConfig, TableFormat,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Episode { .. } | Error::Hygiene(_) | Error::Io(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn level(alpha: &str) -> PyResult<Level> {
    parse_level(alpha).map_err(to_py)
}

fn pvalue(p: (u64, u64)) -> PyResult<PValue> {
    if p.1 == 0 {
        return Err(PyValueError::new_err("zero denominator"));
    }
    Ok(Ratio::new(p.0, p.1))
}

fn pair(p: PValue) -> (u64, u64) {
    (*p.numer(), *p.denom())
}

/// Conformal p-values of `tests` against `calibration`, as
/// `(numerator, denominator)` pairs.
#[pyfunction]
fn empirical_pvalues(calibration: Vec<f64>, tests: Vec<f64>) -> PyResult<Vec<(u64, u64)>> {
    let p = core::empirical_pvalues(&calibration, &tests).map_err(to_py)?;
    Ok(p.into_iter().map(pair).collect())
}

/// Indices rejected by BH at `alpha` (decimal or "n/d").
#[pyfunction]
fn bh(pvalues: Vec<(u64, u64)>, alpha: &str) -> PyResult<Vec<usize>> {
    let p = pvalues.into_iter().map(pvalue).collect::<PyResult<Vec<_>>>()?;
    let set = core::bh_procedure(&p, level(alpha)?).map_err(to_py)?;
    Ok(set.rejected.iter().map(|id| id.index).collect())
}

/// FastLSU over per-agent p-value lists. Returns the rejected
/// `(agent, index)` pairs and the count trajectory `R_0, R_1, ...`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn fastlsu(
    agents: Vec<Vec<(u64, u64)>>,
    alpha: &str,
) -> PyResult<(Vec<(usize, usize)>, Vec<usize>)> {
    let vectors = agents
        .into_iter()
        .enumerate()
        .map(|(a, p)| {
            let p = p.into_iter().map(pvalue).collect::<PyResult<Vec<_>>>()?;
            let n = p.len();
            PValueVector::new(a, p, (0..n).collect()).map_err(to_py)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = core::fastlsu(&vectors, level(alpha)?).map_err(to_py)?;
    Ok((
        out.rejections.rejected.iter().map(|id| (id.agent, id.index)).collect(),
        out.log.trajectory(),
    ))
}

/// Worst-case FastLSU bits per agent for `m` tests on each of `agents`.
#[pyfunction]
fn comm_bound(m: usize, agents: usize) -> u64 {
    fastlsu_comm_bound(m, agents)
}

/// A trained random-forest score function.
#[pyclass(frozen)]
struct ScoreModel {
    inner: core::ScoreModel,
}

#[pymethods]
impl ScoreModel {
    /// Trains on labeled nulls against the mix of held-out nulls and tests.
    #[staticmethod]
    #[pyo3(signature = (nulls, tests, train_fraction=0.5, seed=0, trees=100, max_depth=8))]
    fn train(
        nulls: Vec<Vec<f64>>,
        tests: Vec<Vec<f64>>,
        train_fraction: f64,
        seed: u64,
        trees: usize,
        max_depth: usize,
    ) -> PyResult<Self> {
        let pu = core::build_pu_dataset(&nulls, &tests, train_fraction, seed).map_err(to_py)?;
        let config = ForestConfig {
            trees,
            max_depth,
            ..ForestConfig::default()
        };
        let inner = core::train_score_model(&pu, &config, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Decodes a wire payload for points of dimension `dim`.
    #[staticmethod]
    fn from_bytes(payload: &[u8], dim: usize) -> PyResult<Self> {
        let qm = core::deserialize(payload).map_err(to_py)?;
        let inner = core::dequantize(&qm, dim).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Serializes the model, quantized to `bits` per parameter when given.
    #[pyo3(signature = (bits=None))]
    fn to_bytes<'py>(&self, py: Python<'py>, bits: Option<u8>) -> PyResult<Bound<'py, PyBytes>> {
        let spec = QuantSpec {
            bits,
            ..QuantSpec::none()
        };
        let qm = core::quantize_model(&self.inner, spec).map_err(to_py)?;
        Ok(PyBytes::new(py, &core::serialize(&qm)))
    }

    fn score(&self, point: Vec<f64>) -> PyResult<f64> {
        self.inner.score(&point).map_err(to_py)
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }
}

/// One agent's synthetic sample.
#[pyclass(frozen, get_all)]
struct AgentData {
    agent_id: usize,
    nulls: Vec<Vec<f64>>,
    tests: Vec<Vec<f64>>,
    novelty: Vec<bool>,
}

#[allow(clippy::too_many_arguments)]
fn synth(delta: f64, agents: usize, d: usize, pi0: f64, n_train: usize, n_test: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        d,
        agents,
        delta,
        pi0,
        n_train_total: n_train,
        n_test_total: n_test,
        seed,
    }
}

/// Samples the Gaussian benchmark.
#[pyfunction]
#[pyo3(signature = (delta=0.0, agents=3, d=20, pi0=0.6, n_train=3000, n_test=1000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn generate(
    delta: f64,
    agents: usize,
    d: usize,
    pi0: f64,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> PyResult<Vec<AgentData>> {
    let data = core::generate(&synth(delta, agents, d, pi0, n_train, n_test, seed)).map_err(to_py)?;
    Ok(data
        .into_iter()
        .map(|a| AgentData {
            agent_id: a.agent_id,
            nulls: a.nulls,
            tests: a.tests,
            novelty: a.novelty,
        })
        .collect())
}

/// Result of one episode.
#[pyclass(frozen, get_all)]
struct Episode {
    method: String,
    fdp: f64,
    power: f64,
    rejections: usize,
    false_discoveries: usize,
    novelties: usize,
    rejected: Vec<(usize, usize)>,
    comm_kb: f64,
    fastlsu_rounds: usize,
    fastlsu_bits_per_agent: u64,
    payload_bytes: Vec<usize>,
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().map_err(to_py)
}

/// Generates data and runs one episode of `method` on it.
#[pyfunction]
#[pyo3(signature = (
    method="ME", delta=2.0, bits=None, agents=3, alpha="0.1", seed=0, data_seed=0,
    trees=100, max_depth=8, train_fraction=0.5, d=20, pi0=0.6, n_train=3000, n_test=1000
))]
#[allow(clippy::too_many_arguments)]
fn episode(
    method: &str,
    delta: f64,
    bits: Option<u8>,
    agents: usize,
    alpha: &str,
    seed: u64,
    data_seed: u64,
    trees: usize,
    max_depth: usize,
    train_fraction: f64,
    d: usize,
    pi0: f64,
    n_train: usize,
    n_test: usize,
) -> PyResult<Episode> {
    let data = core::generate(&synth(delta, agents, d, pi0, n_train, n_test, data_seed))
        .map_err(to_py)?;
    let config = EpisodeConfig {
        agents,
        alpha: level(alpha)?,
        method: self::method(method)?,
        quant: QuantSpec {
            bits,
            ..QuantSpec::none()
        },
        forest: ForestConfig {
            trees,
            max_depth,
            ..ForestConfig::default()
        },
        train_fraction,
        seed,
    };
    let out = run_episode(&config, &data).map_err(to_py)?;
    let bits_per_agent = out
        .fastlsu_log
        .as_ref()
        .map_or(0, |log| fastlsu_actual_comm(log, out.fastlsu_m, agents));
    Ok(Episode {
        method: out.method.to_string(),
        fdp: out.global.fdp,
        power: out.global.power,
        rejections: out.global.rejections,
        false_discoveries: out.global.false_discoveries,
        novelties: out.global.novelties,
        rejected: out.rejections.rejected.iter().map(|id| (id.agent, id.index)).collect(),
        comm_kb: out.comm_kb(),
        fastlsu_rounds: out.fastlsu_rounds,
        fastlsu_bits_per_agent: bits_per_agent,
        payload_bytes: out.model_payload_bytes,
    })
}

/// Runs a sweep and returns the summary table as CSV or markdown text.
#[pyfunction]
#[pyo3(signature = (
    sweep="delta", values=None, methods=None, trials=100, seed=0, delta=2.0, bits=None,
    agents=3, alpha="0.1", trees=100, max_depth=8, d=20, pi0=0.6, n_train=3000, n_test=1000,
    format="csv"
))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    sweep: &str,
    values: Option<Vec<String>>,
    methods: Option<Vec<String>>,
    trials: usize,
    seed: u64,
    delta: f64,
    bits: Option<u8>,
    agents: usize,
    alpha: &str,
    trees: usize,
    max_depth: usize,
    d: usize,
    pi0: f64,
    n_train: usize,
    n_test: usize,
    format: &str,
) -> PyResult<String> {
    let axis = match sweep {
        "delta" => {
            let v = values.unwrap_or_else(|| ["0", "0.5", "1", "2", "3", "4"].map(String::from).to_vec());
            SweepAxis::Delta(
                v.iter()
                    .map(|s| s.parse().map_err(|_| PyValueError::new_err(format!("bad shift {s:?}"))))
                    .collect::<PyResult<_>>()?,
            )
        }
        "bits" => {
            let v = values.unwrap_or_else(|| ["none", "6", "4", "2", "1"].map(String::from).to_vec());
            SweepAxis::Bits(v.iter().map(|s| s.parse().map_err(to_py)).collect::<PyResult<_>>()?)
        }
        other => return Err(PyValueError::new_err(format!("unknown sweep {other:?}"))),
    };
    let methods = match methods {
        Some(m) => m.iter().map(|s| self::method(s)).collect::<PyResult<_>>()?,
        None => vec![Method::B2, Method::B3, Method::Me],
    };
    let spec = SweepSpec {
        axis,
        methods,
        trials,
        episode: EpisodeConfig {
            agents,
            alpha: level(alpha)?,
            quant: QuantSpec {
                bits,
                ..QuantSpec::none()
            },
            forest: ForestConfig {
                trees,
                max_depth,
                ..ForestConfig::default()
            },
            ..EpisodeConfig::default()
        },
        data: synth(delta, agents, d, pi0, n_train, n_test, seed),
        master_seed: seed,
    };
    let format: TableFormat = format.parse().map_err(to_py)?;
    let rows = run_sweep(&spec).map_err(to_py)?;
    emit_table(&rows, format).map_err(to_py)
}

#[pymodule]
fn novex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(empirical_pvalues, m)?)?;
    m.add_function(wrap_pyfunction!(bh, m)?)?;
    m.add_function(wrap_pyfunction!(fastlsu, m)?)?;
    m.add_function(wrap_pyfunction!(comm_bound, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(episode, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_class::<ScoreModel>()?;
    m.add_class::<AgentData>()?;
    m.add_class::<Episode>()?;
    Ok(())
}

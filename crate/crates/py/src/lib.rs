//! Python bindings: `import pycopss`.

use std::collections::BTreeMap;

use copss::channel;
use copss::engine::{self, Algorithm, RunParams};
use copss::link::{self, McsTable};
use copss::metrics::{self, MetricsStore};
use copss::sharing::{self, SbsReport, SharingReport};
use copss::topology::{self, AdjacencyMatrix, Operator, Point, SmallCell};
use copss::traffic::TrafficClass;
use copss::{CqiMode, LayoutKind, ScenarioConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: copss::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = copss::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

fn class_filter(class: Option<&str>) -> PyResult<Option<TrafficClass>> {
    class.map(parse).transpose()
}

/// Scenario configuration (TOML-backed).
#[pyclass(name = "Config", module = "pycopss", from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => ScenarioConfig::from_toml_str(t).map_err(py_err)?,
            None => ScenarioConfig::default(),
        };
        Ok(PyConfig { inner })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn sharing_factor(&self) -> f64 {
        self.inner.sharing_factor
    }

    #[setter]
    fn set_sharing_factor(&mut self, v: f64) -> PyResult<()> {
        self.inner.sharing_factor = v;
        self.inner.sharing_factors = None;
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn layout(&self) -> &'static str {
        self.inner.layout.as_str()
    }

    #[setter]
    fn set_layout(&mut self, v: &str) -> PyResult<()> {
        self.inner.layout = parse::<LayoutKind>(v)?;
        Ok(())
    }

    #[getter]
    fn buildings(&self) -> usize {
        self.inner.buildings
    }

    #[setter]
    fn set_buildings(&mut self, v: usize) -> PyResult<()> {
        self.inner.buildings = v;
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn users_per_sbs(&self) -> (usize, usize) {
        (self.inner.users_per_sbs[0], self.inner.users_per_sbs[1])
    }

    #[setter]
    fn set_users_per_sbs(&mut self, v: (usize, usize)) -> PyResult<()> {
        self.inner.users_per_sbs = [v.0, v.1];
        self.inner.validate().map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(layout={}, buildings={}, sharing_factor={}, seed={})",
            self.inner.layout.as_str(),
            self.inner.buildings,
            self.inner.sharing_factor,
            self.inner.seed
        )
    }
}

/// Per-user throughput samples of a run.
#[pyclass(name = "Metrics", module = "pycopss")]
pub struct PyMetrics {
    inner: MetricsStore,
}

#[pymethods]
impl PyMetrics {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Mean throughput in bit/s, optionally for one class.
    #[pyo3(signature = (class_ = None))]
    fn mean(&self, class_: Option<&str>) -> PyResult<Option<f64>> {
        Ok(self.inner.mean(class_filter(class_)?))
    }

    #[pyo3(signature = (class_ = None))]
    fn throughputs(&self, class_: Option<&str>) -> PyResult<Vec<f64>> {
        Ok(self.inner.throughputs(class_filter(class_)?))
    }

    /// `(user_id, drop, class, throughput_bps)` per sample.
    fn samples(&self) -> Vec<(usize, u64, &'static str, f64)> {
        self.inner.samples.iter().map(|s| (s.user_id, s.drop, s.class.as_str(), s.throughput_bps)).collect()
    }

    fn stats(&self) -> BTreeMap<&'static str, u64> {
        let s = &self.inner.stats;
        BTreeMap::from([
            ("first_transmissions", s.first_transmissions),
            ("first_failures", s.first_failures),
            ("retransmissions", s.retransmissions),
            ("acked_bits", s.acked_bits),
            ("delivered_bits", s.delivered_bits),
            ("dropped_blocks", s.dropped_blocks),
            ("grants_issued", s.grants_issued),
            ("loaned_prb_uses", s.loaned_prb_uses),
            ("adjacent_grant_collisions", s.adjacent_grant_collisions),
        ])
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(py_err)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Runs the simulator and returns its metrics.
#[pyfunction]
#[pyo3(signature = (config = None, algorithm = "none", cqi_mode = "coordinated", ttis = 2000, drops = 20, warmup = 50))]
fn run(config: Option<&PyConfig>, algorithm: &str, cqi_mode: &str, ttis: u64, drops: u64, warmup: u64) -> PyResult<PyMetrics> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let params = RunParams {
        ttis,
        drops,
        warmup_ttis: warmup,
        algorithm: parse::<Algorithm>(algorithm)?,
        cqi_mode: parse::<CqiMode>(cqi_mode)?,
        ..RunParams::default()
    };
    engine::run(&cfg, &params).map(|inner| PyMetrics { inner }).map_err(py_err)
}

/// Receiver EVM impairment on a linear SINR.
#[pyfunction]
fn apply_evm(sinr: f64, evm_pct: f64) -> f64 {
    channel::apply_evm(sinr, evm_pct)
}

/// `(index, efficiency, threshold_db)` of the default table's choice.
#[pyfunction]
fn select_mcs(sinr_db: f64) -> (u8, f64, f64) {
    let table = McsTable::default();
    let l = link::select_mcs(sinr_db, &table);
    (l.index, l.efficiency, l.threshold_db)
}

#[pyfunction]
fn effective_sinr(sinr: Vec<f64>, prbs: Vec<usize>) -> PyResult<f64> {
    if prbs.iter().any(|&p| p >= sinr.len()) {
        return Err(PyValueError::new_err("PRB index out of range"));
    }
    link::effective_sinr(&sinr, &prbs).map_err(py_err)
}

/// Adjacency matrix of SBSs at `positions` within `threshold_m`.
#[pyfunction]
fn adjacency(positions: Vec<(f64, f64)>, threshold_m: f64) -> Vec<Vec<bool>> {
    let cells: Vec<SmallCell> = positions
        .iter()
        .enumerate()
        .map(|(id, &(x, y))| SmallCell { id, operator_id: 0, building: 0, position: Point::new(x, y), tx_power_dbm: 20.0 })
        .collect();
    let refs: Vec<&SmallCell> = cells.iter().collect();
    let a = topology::compute_adjacency(&refs, threshold_m);
    (0..a.len()).map(|i| a.row(i).to_vec()).collect()
}

/// Connected components as ascending vertex lists.
#[pyfunction]
fn connected_components(matrix: Vec<Vec<bool>>) -> PyResult<Vec<Vec<usize>>> {
    let a = matrix_to_adjacency(&matrix)?;
    Ok(topology::connected_components(&a).into_iter().map(|g| g.vertices).collect())
}

fn matrix_to_adjacency(m: &[Vec<bool>]) -> PyResult<AdjacencyMatrix> {
    let n = m.len();
    let mut a = AdjacencyMatrix::empty(n);
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(PyValueError::new_err("adjacency matrix must be square"));
        }
        for (j, &v) in row.iter().enumerate() {
            if m.get(j).and_then(|r| r.get(i)) != Some(&v) {
                return Err(PyValueError::new_err("adjacency matrix must be symmetric"));
            }
            if v && i != j {
                a.set(i, j, true);
            }
        }
    }
    Ok(a)
}

/// One coordination round. `reports` holds `(operator_id, bwu)` per SBS.
/// Returns `(sbs_index, sorted PRB indices)` per grant.
#[pyfunction]
#[pyo3(signature = (algorithm, reports, edges, operators, prbs_per_operator, sharing_factor, seed = 0))]
fn grants(
    algorithm: &str,
    reports: Vec<(usize, f64)>,
    edges: Vec<(usize, usize)>,
    operators: usize,
    prbs_per_operator: usize,
    sharing_factor: f64,
    seed: u64,
) -> PyResult<Vec<(usize, Vec<usize>)>> {
    if operators * prbs_per_operator > sharing::MAX_PRBS {
        return Err(PyValueError::new_err("too many PRBs"));
    }
    if reports.iter().any(|(o, _)| *o >= operators) || edges.iter().any(|(i, j)| *i >= reports.len() || *j >= reports.len()) {
        return Err(PyValueError::new_err("operator or SBS index out of range"));
    }
    let ops: Vec<Operator> = (0..operators)
        .map(|id| Operator { id, sharing_factor, band: id * prbs_per_operator..(id + 1) * prbs_per_operator })
        .collect();
    let report = SharingReport {
        reports: reports.iter().enumerate().map(|(i, &(op, bwu))| SbsReport { sbs_id: i, operator_id: op, bwu }).collect(),
        adjacency: AdjacencyMatrix::from_edges(reports.len(), &edges),
        snapshot_tti: 0,
        valid_tti: 0,
    };
    let mut rng = copss::rng::stream(seed, copss::rng::Stream::Controller, &[]);
    let alg = parse::<Algorithm>(algorithm)?;
    Ok(sharing::compute_grants(alg, &ops, &report, &mut rng).into_iter().map(|g| (g.sbs, g.prbs.to_vec())).collect())
}

#[pyfunction]
fn cdf(samples: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    metrics::cdf(&samples).map_err(py_err)
}

#[pyfunction]
fn percentile(samples: Vec<f64>, p: f64) -> PyResult<f64> {
    metrics::percentile(&samples, p).map_err(py_err)
}

/// Co-primary spectrum sharing simulator.
#[pymodule]
fn pycopss(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyMetrics>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(apply_evm, m)?)?;
    m.add_function(wrap_pyfunction!(select_mcs, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sinr, m)?)?;
    m.add_function(wrap_pyfunction!(adjacency, m)?)?;
    m.add_function(wrap_pyfunction!(connected_components, m)?)?;
    m.add_function(wrap_pyfunction!(grants, m)?)?;
    m.add_function(wrap_pyfunction!(cdf, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_and_components() {
        let a = adjacency(vec![(0.0, 0.0), (10.0, 0.0), (100.0, 0.0)], 50.0);
        assert!(a[0][1] && a[1][0] && !a[0][2]);
        assert_eq!(connected_components(a).unwrap(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        assert!(matrix_to_adjacency(&[vec![false, true], vec![false, false]]).is_err());
        assert!(matrix_to_adjacency(&[vec![false, true]]).is_err());
    }

    #[test]
    fn grants_are_disjoint_for_adjacent_overloaded() {
        let g = grants("centralized_graph", vec![(0, 1.0), (1, 1.0), (2, 0.0)], vec![(0, 1), (0, 2), (1, 2)], 3, 4, 1.0, 0).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g[0].1.iter().all(|p| !g[1].1.contains(p)));
        assert!(g.iter().flat_map(|(_, p)| p).all(|&p| (8..12).contains(&p)));
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(grants("equal", vec![(5, 1.0)], vec![], 3, 4, 1.0, 0).is_err());
        assert!(grants("equal", vec![(0, 1.0)], vec![(0, 3)], 3, 4, 1.0, 0).is_err());
        assert!(grants("equal", vec![], vec![], 3, 64, 1.0, 0).is_err());
        assert!(effective_sinr(vec![1.0], vec![2]).is_err());
    }

    #[test]
    fn evm_and_mcs() {
        assert!(apply_evm(1e12, 4.0) <= 625.0);
        assert_eq!(select_mcs(40.0).0, 15);
    }
}

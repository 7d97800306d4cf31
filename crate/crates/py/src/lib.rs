//! Python module `urban_abe`: segment-tree representations, the experiment
//! runner and a small toy-city protocol handle.

use std::borrow::Cow;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use urban_abe_core::attrspace::PolicySpec;
use urban_abe_core::citysim::experiment::{run_experiment as run_cells, ExperimentConfig};
use urban_abe_core::citysim::metrics::{to_csv_string, MetricsRow};
use urban_abe_core::protocol::{CitySystem, ItemRef, ProtocolError, SystemConfig};
use urban_abe_core::segtree::{Interval, NodeSet, SegmentTree};

/// Python view of an item reference: (device, day, generation, counter).
type ItemTuple = (u32, u32, u32, u32);

fn names(tree: &SegmentTree, set: &NodeSet) -> Vec<String> {
    set.iter().map(|n| tree.node_name(n)).collect()
}

pub fn point_rep_names(range_max: u32, point: u32) -> Result<Vec<String>, String> {
    let tree = SegmentTree::new(range_max).map_err(|e| e.to_string())?;
    let set = tree.point_rep(point).map_err(|e| e.to_string())?;
    Ok(names(&tree, &set))
}

pub fn interval_rep_names(range_max: u32, lo: u32, hi: u32) -> Result<Vec<String>, String> {
    let tree = SegmentTree::new(range_max).map_err(|e| e.to_string())?;
    let iv = Interval::new(lo, hi).map_err(|e| e.to_string())?;
    let set = tree.interval_rep(iv).map_err(|e| e.to_string())?;
    Ok(names(&tree, &set))
}

/// Runs the revocation sweep and returns the metrics CSV text.
pub fn experiment_csv(config_json: Option<&str>, seed: Option<u64>) -> Result<String, String> {
    let mut cfg = match config_json {
        Some(text) => ExperimentConfig::from_json(text).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let cells = run_cells(&cfg).map_err(|e| e.to_string())?;
    let rows: Vec<MetricsRow> = cells.into_iter().map(|c| c.row).collect();
    Ok(to_csv_string(&rows))
}

#[pyfunction]
fn point_rep(range_max: u32, point: u32) -> PyResult<Vec<String>> {
    point_rep_names(range_max, point).map_err(PyValueError::new_err)
}

#[pyfunction]
fn interval_rep(range_max: u32, lo: u32, hi: u32) -> PyResult<Vec<String>> {
    interval_rep_names(range_max, lo, hi).map_err(PyValueError::new_err)
}

#[pyfunction]
#[pyo3(signature = (config_json=None, seed=None))]
fn run_experiment(py: Python<'_>, config_json: Option<&str>, seed: Option<u64>) -> PyResult<String> {
    let text = config_json.map(str::to_owned);
    py.detach(|| experiment_csv(text.as_deref(), seed))
        .map_err(PyValueError::new_err)
}

fn runtime(e: ProtocolError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn item_ref((device, day, generation, counter): ItemTuple) -> ItemRef {
    ItemRef {
        device,
        day,
        generation,
        counter,
    }
}

/// The 2×2-block toy city with one device per street.
#[pyclass(unsendable)]
struct ToyCity {
    sys: CitySystem,
}

#[pymethods]
impl ToyCity {
    #[new]
    #[pyo3(signature = (seed=1))]
    fn new(seed: u64) -> PyResult<Self> {
        Ok(ToyCity {
            sys: CitySystem::new(SystemConfig::toy(), seed).map_err(runtime)?,
        })
    }

    #[getter]
    fn today(&self) -> u32 {
        self.sys.today()
    }

    fn device_ids(&self) -> Vec<u32> {
        self.sys.device_ids().collect()
    }

    /// Registers a user authorized on `(street, lo, hi)` runs for days
    /// `first..=last`; returns the user id.
    fn add_user(&mut self, authorized: Vec<(u32, u32, u32)>, first: u32, last: u32) -> PyResult<u32> {
        let bad = |e: urban_abe_core::segtree::SegTreeError| PyValueError::new_err(e.to_string());
        let spec = PolicySpec {
            authorized: authorized
                .into_iter()
                .map(|(s, lo, hi)| Ok((s, Interval::new(lo, hi).map_err(bad)?)))
                .collect::<PyResult<_>>()?,
            validity: Interval::new(first, last).map_err(bad)?,
        };
        let u = self.sys.register_user();
        self.sys.distribute_key(u, &spec).map_err(runtime)?;
        Ok(u)
    }

    fn advance_day(&mut self) -> PyResult<u32> {
        self.sys.advance_day().map_err(runtime)
    }

    /// Seals a new generation for every device; returns the number sealed.
    fn seal_day(&mut self) -> PyResult<usize> {
        let rep = self.sys.seal_day().map_err(runtime)?;
        match rep.rejected.first() {
            Some((d, why)) => Err(PyRuntimeError::new_err(format!("device {d}: {why}"))),
            None => Ok(rep.sealed.len()),
        }
    }

    fn produce(&mut self, device: u32, data: &[u8]) -> PyResult<ItemTuple> {
        let i = self.sys.produce_data(device, data).map_err(runtime)?;
        Ok((i.device, i.day, i.generation, i.counter))
    }

    /// The item's plaintext, or `None` when the user is not authorized.
    fn consume(&mut self, user: u32, item: ItemTuple) -> PyResult<Option<Cow<'static, [u8]>>> {
        match self.sys.consume_data(user, item_ref(item)) {
            Ok(sd) => Ok(Some(Cow::Owned(sd))),
            Err(e) if e.is_bottom() => Ok(None),
            Err(ProtocolError::UnknownUser(u)) => Err(PyKeyError::new_err(u)),
            Err(e) => Err(runtime(e)),
        }
    }

    fn revoke(&mut self, user: u32) -> PyResult<usize> {
        let rep = self.sys.revoke_key(user).map_err(runtime)?;
        Ok(rep.sealed.len())
    }

    /// Structural check of the storage service's state.
    fn audit(&self) -> PyResult<()> {
        self.sys.css().audit().map_err(runtime)
    }
}

#[pymodule]
fn urban_abe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(point_rep, m)?)?;
    m.add_function(wrap_pyfunction!(interval_rep, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<ToyCity>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_follow_tree_layout() {
        assert_eq!(point_rep_names(4, 3).unwrap(), vec!["n0_0", "n1_1", "l3"]);
        assert_eq!(interval_rep_names(4, 1, 4).unwrap(), vec!["n0_0"]);
        assert_eq!(interval_rep_names(4, 2, 3).unwrap(), vec!["l2", "l3"]);
        assert!(point_rep_names(4, 5).is_err());
        assert!(interval_rep_names(4, 3, 2).is_err());
    }

    #[test]
    fn experiment_csv_honours_config_and_seed() {
        let cfg = r#"{"city": {"type": "grid", "blocks_x": 2, "blocks_y": 2, "block_length": 100.0, "segment_length": 25.0},
                      "representations": [{"kind": "segment_tree"}], "route_lengths_m": [100.0],
                      "users": 10, "subscription_days": 5, "lifetime_days": 30, "devices": 4}"#;
        let a = experiment_csv(Some(cfg), Some(3)).unwrap();
        assert_eq!(a.lines().count(), 3);
        assert!(a.lines().nth(2).unwrap().starts_with("segtree,1,100.0,10,3,"));
        assert_eq!(a, experiment_csv(Some(cfg), Some(3)).unwrap());
        assert!(experiment_csv(Some("{\"users\": 0}"), None).is_err());
    }
}

//! Python bindings: snapshot I/O, surrogate generation, ROM databases,
//! prediction, the cost functional and the genetic search.
//!
//! Matrices cross the boundary as lists of rows (`N_x` rows of `N_s` values).

use ddga_core::barycentric::{self, FixedPointConfig, InterpolationRequest};
use ddga_core::dataset::{self, Grid, Param, ParamKind, Rect, SnapshotMatrix as CoreSnapshots, TimeAxis};
use ddga_core::ddga::{run, GaConfig, SearchSpace};
use ddga_core::objective::{self, Target};
use ddga_core::pod::{self, RomDatabase as CoreDatabase};
use ddga_core::surrogate::{self, CavityParams, PlumeParams, SolverConfig};
use ddga_core::Error;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_usage() => PyValueError::new_err(e.to_string()),
        e => PyArithmeticError::new_err(e.to_string()),
    }
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn kind(name: &str) -> PyResult<ParamKind> {
    ParamKind::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown parameter kind {name:?}")))
}

fn mask_rect(mask: (f64, f64, f64, f64)) -> Rect {
    Rect::new(mask.0, mask.1, mask.2, mask.3)
}

/// A field sampled on a cell-centred grid at `n_steps` instants.
#[pyclass(name = "Snapshots", module = "ddga", from_py_object)]
#[derive(Clone)]
struct Snapshots {
    inner: CoreSnapshots,
}

#[pymethods]
impl Snapshots {
    #[new]
    #[pyo3(signature = (values, nx, ny, lx, ly, t_final, kind="velocity", param=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        values: Vec<Vec<f64>>,
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        t_final: f64,
        kind: &str,
        param: f64,
    ) -> PyResult<Self> {
        let values = rows_to_matrix(values)?;
        let grid = Grid::new(nx, ny, lx, ly).map_err(to_py)?;
        let times = TimeAxis::new(values.ncols(), t_final).map_err(to_py)?;
        let inner =
            CoreSnapshots::new(grid, times, Param::new(self::kind(kind)?, param), values).map_err(to_py)?;
        Ok(Snapshots { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Snapshots {
            inner: dataset::read_snapshots(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        dataset::write_snapshots(&self.inner, path).map_err(to_py)
    }

    /// Analytic drifting plume at `delta`.
    #[staticmethod]
    #[pyo3(signature = (delta, nx=24, ny=24, lx=1.04, ly=1.04, n_steps=40, t_final=10.0, sigma=0.5))]
    #[allow(clippy::too_many_arguments)]
    fn plume(
        delta: f64,
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        n_steps: usize,
        t_final: f64,
        sigma: f64,
    ) -> PyResult<Self> {
        let grid = Grid::new(nx, ny, lx, ly).map_err(to_py)?;
        let times = TimeAxis::new(n_steps, t_final).map_err(to_py)?;
        let p = PlumeParams {
            sigma,
            ..PlumeParams::new(delta)
        };
        Ok(Snapshots {
            inner: surrogate::analytic_plume(&p, &grid, &times).map_err(to_py)?,
        })
    }

    /// Cavity run; `kind` names which inlet value `param` replaces.
    #[staticmethod]
    #[pyo3(signature = (kind, param, inlet_velocity=0.57, inlet_temperature=15.0, nx=32, ny=32, lx=1.04, ly=1.04, n_steps=100, t_final=60.0))]
    #[allow(clippy::too_many_arguments)]
    fn cavity(
        kind: &str,
        param: f64,
        inlet_velocity: f64,
        inlet_temperature: f64,
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        n_steps: usize,
        t_final: f64,
    ) -> PyResult<Self> {
        let grid = Grid::new(nx, ny, lx, ly).map_err(to_py)?;
        let times = TimeAxis::new(n_steps, t_final).map_err(to_py)?;
        let family = surrogate::Family::Cavity {
            base: CavityParams::new(inlet_velocity, inlet_temperature),
            varied: self::kind(kind)?,
            solver: SolverConfig::default(),
        };
        Ok(Snapshots {
            inner: family.generate(param, &grid, &times).map_err(to_py)?,
        })
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.values())
    }

    /// `(nx, ny, lx, ly)`
    #[getter]
    fn grid(&self) -> (usize, usize, f64, f64) {
        let g = self.inner.grid();
        (g.nx(), g.ny(), g.lx(), g.ly())
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.times().n_steps()
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.times().t_final()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.param().kind.name()
    }

    #[getter]
    fn param(&self) -> f64 {
        self.inner.param().value
    }

    fn __repr__(&self) -> String {
        let (nx, ny, _, _) = self.grid();
        format!(
            "Snapshots({}={}, grid={nx}x{ny}, n_steps={})",
            self.kind(),
            self.param(),
            self.n_steps()
        )
    }
}

/// Two-level POD database over a parameter ensemble.
#[pyclass(name = "RomDatabase", module = "ddga")]
struct RomDatabase {
    inner: CoreDatabase,
}

#[pymethods]
impl RomDatabase {
    #[staticmethod]
    #[pyo3(signature = (samples, q, r=None, s=None))]
    fn build(samples: Vec<Snapshots>, q: usize, r: Option<usize>, s: Option<usize>) -> PyResult<Self> {
        let samples: Vec<CoreSnapshots> = samples.into_iter().map(|s| s.inner).collect();
        Ok(RomDatabase {
            inner: pod::build_database(&samples, q, r, s).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(RomDatabase {
            inner: pod::read_database(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        pod::write_database(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r()
    }

    #[getter]
    fn s(&self) -> usize {
        self.inner.s()
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.params.clone()
    }

    #[getter]
    fn hull(&self) -> (f64, f64) {
        self.inner.hull()
    }

    /// Training sample `k` rebuilt from its first `m` modes.
    #[pyo3(signature = (k, m=None))]
    fn reconstruct(&self, k: usize, m: Option<usize>) -> PyResult<Snapshots> {
        Ok(Snapshots {
            inner: pod::reconstruct_sample(&self.inner, k, m.unwrap_or(self.inner.q)).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "RomDatabase(q={}, r={}, s={}, params={:?})",
            self.inner.q,
            self.inner.r(),
            self.inner.s(),
            self.inner.params
        )
    }
}

/// Interpolated field at `delta`. Returns `(snapshots, info)` where `info`
/// holds `iterations`, `final_error`, `converged` and `degenerate`.
#[pyfunction]
#[pyo3(signature = (db, delta, ne_x=2, ne_t=2, m=None, epsilon=1e-8, max_iters=100))]
#[allow(clippy::too_many_arguments)]
fn predict(
    py: Python<'_>,
    db: &RomDatabase,
    delta: f64,
    ne_x: usize,
    ne_t: usize,
    m: Option<usize>,
    epsilon: f64,
    max_iters: usize,
) -> PyResult<(Snapshots, Py<PyAny>)> {
    let req = InterpolationRequest {
        delta_new: delta,
        ne_x,
        ne_t,
        m: m.unwrap_or(db.inner.q),
    };
    let cfg = FixedPointConfig { epsilon, max_iters };
    let (field, res) = barycentric::predict(&db.inner, &req, &cfg).map_err(to_py)?;
    let info = pyo3::types::PyDict::new(py);
    info.set_item("iterations", res.iterations)?;
    info.set_item("final_error", res.final_error)?;
    info.set_item("converged", res.converged)?;
    info.set_item("degenerate", res.degenerate)?;
    Ok((Snapshots { inner: field }, info.into_any().unbind()))
}

/// Time-integrated squared mismatch over the mask `(x_min, x_max, y_min, y_max)`.
#[pyfunction]
fn cost(predicted: &Snapshots, target: &Snapshots, mask: (f64, f64, f64, f64)) -> PyResult<f64> {
    let region = dataset::build_mask(target.inner.grid(), mask_rect(mask)).map_err(to_py)?;
    let t = Target::from_field(&target.inner, region).map_err(to_py)?;
    let rows = predicted.inner.values().select_rows(t.mask().indices());
    objective::cost(&rows, &t).map_err(to_py)
}

/// Per-instant relative L2 error in percent over the full domain.
#[pyfunction]
fn error_series(predicted: &Snapshots, target: &Snapshots) -> PyResult<Vec<f64>> {
    objective::l2_error_series(predicted.inner.values(), target.inner.values()).map_err(to_py)
}

/// Genetic search for the parameter reproducing `target` inside `mask`.
///
/// Returns a dict with `delta`, `ne_t`, `ne_x`, `m`, `cost` and `history`
/// (the history CSV text).
#[pyfunction]
#[pyo3(signature = (db, target, mask=(0.1, 0.9, 0.15, 0.7), pop=20, gens=30, pc=0.8, pm=0.1, seed=0, ne=(2, 3), m=None))]
#[allow(clippy::too_many_arguments)]
fn optimize(
    py: Python<'_>,
    db: &RomDatabase,
    target: &Snapshots,
    mask: (f64, f64, f64, f64),
    pop: usize,
    gens: usize,
    pc: f64,
    pm: f64,
    seed: u64,
    ne: (usize, usize),
    m: Option<(usize, usize)>,
) -> PyResult<Py<PyAny>> {
    let region = dataset::build_mask(target.inner.grid(), mask_rect(mask)).map_err(to_py)?;
    let t = Target::from_field(&target.inner, region).map_err(to_py)?;
    let space = SearchSpace {
        delta: db.inner.hull(),
        ne,
        m: m.unwrap_or((1, db.inner.q)),
    };
    let cfg = GaConfig {
        population_size: pop,
        generations: gens,
        crossover_prob: pc,
        mutation_prob: pm,
        seed,
        ..GaConfig::new(space)
    };
    let inner = &db.inner;
    let outcome = py.detach(|| run(&cfg, inner, &t)).map_err(to_py)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("delta", outcome.best.delta)?;
    out.set_item("ne_t", outcome.best.ne_t)?;
    out.set_item("ne_x", outcome.best.ne_x)?;
    out.set_item("m", outcome.best.m)?;
    out.set_item("cost", outcome.best_cost)?;
    out.set_item("history", outcome.history.to_csv())?;
    Ok(out.into_any().unbind())
}

#[pymodule]
fn ddga(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Snapshots>()?;
    m.add_class::<RomDatabase>()?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(cost, m)?)?;
    m.add_function(wrap_pyfunction!(error_series, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    Ok(())
}

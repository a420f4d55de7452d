//! Desk-scale generators of parametrized snapshot ensembles.
//!
//! Two families are provided: an analytic moving Gaussian plume, whose
//! exact values serve as ground truth for interpolation tests, and a 2D
//! passive-scalar advection–diffusion cavity driven by a prescribed
//! recirculating velocity field.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dataset::{self, Grid, Param, ParamKind, SnapshotMatrix, TimeAxis};
use crate::error::{ensure_arg, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlumeParams {
    pub delta: f64,
    pub theta_cold: f64,
    pub theta_hot: f64,
    /// Plume width, m.
    pub sigma: f64,
}

impl PlumeParams {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            theta_cold: 15.0,
            theta_hot: 35.0,
            sigma: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_arg!(self.sigma > 0.0, "plume width must be positive");
        ensure_arg!(
            self.theta_hot > self.theta_cold,
            "plume peak must exceed background temperature"
        );
        ensure_arg!(
            [self.delta, self.theta_cold, self.theta_hot, self.sigma]
                .iter()
                .all(|v| v.is_finite()),
            "plume parameters must be finite"
        );
        Ok(())
    }

    /// Plume center at time `t`.
    pub fn center(&self, grid: &Grid, times: &TimeAxis, t: f64) -> (f64, f64) {
        let s = t / times.t_final();
        let xc = 0.5 * grid.lx() * (1.0 + 0.8 * (2.0 * PI * self.delta * s).sin());
        let yc = grid.ly() * (0.2 + 0.6 * s);
        (xc, yc)
    }

    pub fn value(&self, grid: &Grid, times: &TimeAxis, t: f64, x: f64, y: f64) -> f64 {
        let (xc, yc) = self.center(grid, times, t);
        let r2 = (x - xc).powi(2) + (y - yc).powi(2);
        self.theta_cold + (self.theta_hot - self.theta_cold) * (-r2 / (self.sigma * self.sigma)).exp()
    }
}

pub fn analytic_plume(p: &PlumeParams, grid: &Grid, times: &TimeAxis) -> Result<SnapshotMatrix> {
    p.validate()?;
    let values = DMatrix::from_fn(grid.len(), times.n_steps(), |j, l| {
        let (x, y) = grid.center(j);
        p.value(grid, times, times.instant(l), x, y)
    });
    SnapshotMatrix::new(
        *grid,
        *times,
        Param::new(ParamKind::Synthetic, p.delta),
        values,
    )
}

/// Cell-centered velocity components, m/s.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VelocityField {
    pub fn max_speed(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0, f64::max)
    }
}

/// Velocity of the stream function `ψ = U·lx·sin(πx/lx)·sin(πy/ly)/π` at a point.
pub fn velocity_at(speed: f64, grid: &Grid, x: f64, y: f64) -> (f64, f64) {
    let (lx, ly) = (grid.lx(), grid.ly());
    let u = speed * (lx / ly) * (PI * x / lx).sin() * (PI * y / ly).cos();
    let v = -speed * (PI * x / lx).cos() * (PI * y / ly).sin();
    (u, v)
}

pub fn recirculating_velocity(speed: f64, grid: &Grid) -> Result<VelocityField> {
    ensure_arg!(speed >= 0.0 && speed.is_finite(), "inlet velocity must be >= 0, got {speed}");
    let (u, v) = (0..grid.len())
        .map(|j| {
            let (x, y) = grid.center(j);
            velocity_at(speed, grid, x, y)
        })
        .unzip();
    Ok(VelocityField { u, v })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    /// m/s
    pub inlet_velocity: f64,
    /// °C
    pub inlet_temperature: f64,
    /// Floor temperature, °C.
    pub theta_hot: f64,
    /// Temperature of the remaining walls, °C.
    pub theta_cold: f64,
    /// m²/s
    pub diffusivity: f64,
    pub theta_init: f64,
    /// Fraction of the left wall, measured down from the top, held at the inlet temperature.
    pub inlet_height: f64,
}

impl CavityParams {
    pub fn new(inlet_velocity: f64, inlet_temperature: f64) -> Self {
        Self {
            inlet_velocity,
            inlet_temperature,
            theta_hot: 35.0,
            theta_cold: 15.0,
            diffusivity: 2e-3,
            theta_init: 15.0,
            inlet_height: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_arg!(
            self.inlet_velocity >= 0.0,
            "inlet velocity must be >= 0, got {}",
            self.inlet_velocity
        );
        ensure_arg!(
            self.diffusivity > 0.0,
            "diffusivity must be positive, got {}",
            self.diffusivity
        );
        ensure_arg!(
            self.inlet_height > 0.0 && self.inlet_height <= 1.0,
            "inlet height fraction must lie in (0, 1], got {}",
            self.inlet_height
        );
        ensure_arg!(
            [
                self.inlet_velocity,
                self.inlet_temperature,
                self.theta_hot,
                self.theta_cold,
                self.diffusivity,
                self.theta_init
            ]
            .iter()
            .all(|v| v.is_finite()),
            "cavity parameters must be finite"
        );
        Ok(())
    }

    /// Range allowed by the discrete maximum principle.
    pub fn bounds(&self) -> (f64, f64) {
        let vals = [
            self.theta_hot,
            self.theta_cold,
            self.inlet_temperature,
            self.theta_init,
        ];
        (
            vals.iter().cloned().fold(f64::INFINITY, f64::min),
            vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// First-order upwind advection, second-order centered diffusion, forward Euler.
    UpwindCentered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub cfl: f64,
    pub scheme: Scheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cfl: 0.9,
            scheme: Scheme::UpwindCentered,
        }
    }
}

/// Runs needing more explicit substeps than this are refused.
pub const MAX_SUBSTEPS: f64 = 1e7;

/// Explicit finite-difference solution of `∂Θ/∂t + u·∇Θ = κΔΘ` in the cavity.
///
/// Dirichlet walls: floor at `theta_hot`, other walls at `theta_cold`, except
/// the top `inlet_height` fraction of the left wall, which is held at the inlet temperature.
/// The step is sized so every update is a convex combination of old values,
/// hence the discrete maximum principle. The result is tagged with the
/// inlet velocity; use [`SnapshotMatrix::with_param`] to retag.
pub fn solve_cavity(
    p: &CavityParams,
    grid: &Grid,
    times: &TimeAxis,
    cfg: &SolverConfig,
) -> Result<SnapshotMatrix> {
    p.validate()?;
    ensure_arg!(
        cfg.cfl > 0.0 && cfg.cfl <= 1.0,
        "CFL factor must lie in (0, 1], got {}",
        cfg.cfl
    );
    let Scheme::UpwindCentered = cfg.scheme;

    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let vel = recirculating_velocity(p.inlet_velocity, grid)?;
    let kx = p.diffusivity / (dx * dx);
    let ky = p.diffusivity / (dy * dy);

    // Worst-case rate: boundary cells see a ghost with 3x the diagonal weight.
    let rate = vel
        .u
        .iter()
        .zip(&vel.v)
        .map(|(u, v)| u.abs() / dx + v.abs() / dy + 3.0 * kx + 3.0 * ky)
        .fold(0.0, f64::max);
    let dt_max = cfg.cfl / rate;
    if !(dt_max.is_finite() && dt_max > 0.0) || 1.0 - dt_max * rate < -1e-12 {
        return Err(Error::Stability(format!(
            "explicit step {dt_max} violates the monotonicity bound"
        )));
    }
    let substeps = times.t_final() / dt_max;
    if substeps > MAX_SUBSTEPS {
        return Err(Error::Stability(format!(
            "stable step {dt_max:e} s needs {substeps:e} substeps (limit {MAX_SUBSTEPS:e})"
        )));
    }

    let inlet_floor = grid.ly() * (1.0 - p.inlet_height);
    let west_wall: Vec<f64> = (0..ny)
        .map(|iy| {
            if grid.y_center(iy) > inlet_floor {
                p.inlet_temperature
            } else {
                p.theta_cold
            }
        })
        .collect();

    let mut field = vec![p.theta_init; grid.len()];
    let mut next = field.clone();
    let mut values = DMatrix::zeros(grid.len(), times.n_steps());
    values.set_column(0, &nalgebra::DVector::from_column_slice(&field));

    let mut t = 0.0;
    for l in 1..times.n_steps() {
        let t_target = times.instant(l);
        while t < t_target {
            let dt = dt_max.min(t_target - t);
            for iy in 0..ny {
                for ix in 0..nx {
                    let j = iy * nx + ix;
                    let th = field[j];
                    let (west, west_wall_v) = if ix > 0 {
                        (field[j - 1], None)
                    } else {
                        (0.0, Some(west_wall[iy]))
                    };
                    let (east, east_wall_v) = if ix + 1 < nx {
                        (field[j + 1], None)
                    } else {
                        (0.0, Some(p.theta_cold))
                    };
                    let (south, south_wall_v) = if iy > 0 {
                        (field[j - nx], None)
                    } else {
                        (0.0, Some(p.theta_hot))
                    };
                    let (north, north_wall_v) = if iy + 1 < ny {
                        (field[j + nx], None)
                    } else {
                        (0.0, Some(p.theta_cold))
                    };
                    // Diffusion sees a ghost mirrored about the wall value.
                    let ghost = |n: f64, w: Option<f64>| w.map_or(n, |w| 2.0 * w - th);
                    // Advection takes the wall value itself as upwind state.
                    let upwind = |n: f64, w: Option<f64>| w.unwrap_or(n);

                    let (u, v) = (vel.u[j], vel.v[j]);
                    let up_x = if u >= 0.0 {
                        upwind(west, west_wall_v)
                    } else {
                        upwind(east, east_wall_v)
                    };
                    let up_y = if v >= 0.0 {
                        upwind(south, south_wall_v)
                    } else {
                        upwind(north, north_wall_v)
                    };
                    let lap_x = ghost(west, west_wall_v) + ghost(east, east_wall_v) - 2.0 * th;
                    let lap_y = ghost(south, south_wall_v) + ghost(north, north_wall_v) - 2.0 * th;
                    next[j] = th - dt * (u.abs() / dx) * (th - up_x) - dt * (v.abs() / dy) * (th - up_y)
                        + dt * (kx * lap_x + ky * lap_y);
                }
            }
            std::mem::swap(&mut field, &mut next);
            t = if dt == t_target - t { t_target } else { t + dt };
        }
        if field.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite temperature at t = {t_target}"
            )));
        }
        values.set_column(l, &nalgebra::DVector::from_column_slice(&field));
    }

    SnapshotMatrix::new(
        *grid,
        *times,
        Param::new(ParamKind::Velocity, p.inlet_velocity),
        values,
    )
}

/// A one-parameter family of surrogate runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Analytic plume; `delta` replaces the template's own value.
    Plume(PlumeParams),
    /// Cavity solve with either the inlet velocity or the inlet temperature varied.
    Cavity {
        base: CavityParams,
        varied: ParamKind,
        solver: SolverConfig,
    },
}

impl Family {
    pub fn generate(&self, delta: f64, grid: &Grid, times: &TimeAxis) -> Result<SnapshotMatrix> {
        match *self {
            Family::Plume(template) => analytic_plume(&PlumeParams { delta, ..template }, grid, times),
            Family::Cavity {
                base,
                varied,
                solver,
            } => {
                let p = match varied {
                    ParamKind::Velocity => CavityParams {
                        inlet_velocity: delta,
                        ..base
                    },
                    ParamKind::Temperature => CavityParams {
                        inlet_temperature: delta,
                        ..base
                    },
                    ParamKind::Synthetic => {
                        return Err(Error::Argument(
                            "cavity runs vary inlet velocity or temperature".into(),
                        ))
                    }
                };
                Ok(solve_cavity(&p, grid, times, &solver)?.with_param(Param::new(varied, delta)))
            }
        }
    }
}

/// Runs the family for every parameter value; runs are independent and
/// execute concurrently. Output order follows `deltas`.
pub fn generate_ensemble(
    family: &Family,
    deltas: &[f64],
    grid: &Grid,
    times: &TimeAxis,
) -> Result<Vec<SnapshotMatrix>> {
    deltas
        .par_iter()
        .map(|&d| family.generate(d, grid, times))
        .collect()
}

/// One line of an ensemble manifest: `kind,value,path`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub kind: ParamKind,
    pub value: f64,
    pub path: PathBuf,
}

/// Writes a manifest; paths are stored as given (relative paths resolve
/// against the manifest's directory when read back).
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for e in entries {
        let _ = writeln!(text, "{},{},{}", e.kind.name(), e.value, e.path.display());
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Format(format!("{}:{}: malformed manifest line", path.display(), n + 1));
        let mut parts = line.splitn(3, ',');
        let (Some(kind), Some(value), Some(file)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let kind = ParamKind::from_name(kind.trim()).ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        let file = PathBuf::from(file.trim());
        let path = if file.is_absolute() { file } else { base.join(file) };
        entries.push(ManifestEntry { kind, value, path });
    }
    Ok(entries)
}

/// Loads every snapshot file listed in a manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SnapshotMatrix>> {
    read_manifest(path)?
        .iter()
        .map(|e| dataset::read_snapshots(&e.path))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n, n, 1.04, 1.04).unwrap()
    }

    #[test]
    fn plume_at_start() {
        let g = Grid::new(11, 10, 1.0, 1.0).unwrap();
        let t = TimeAxis::new(5, 10.0).unwrap();
        let p = PlumeParams::new(0.7);
        let (xc, yc) = p.center(&g, &t, 0.0);
        assert_eq!(xc, 0.5);
        assert!((yc - 0.2).abs() < 1e-15);
        // cell (5, 1) has center (0.5, 0.15): offset 0.05 in y only
        let m = analytic_plume(&p, &g, &t).unwrap();
        let expected = 15.0 + 20.0 * (-(0.05f64 * 0.05) / 0.25).exp();
        assert!((m.values()[(g.index(5, 1), 0)] - expected).abs() < 1e-12);
        assert_eq!(p.value(&g, &t, 0.0, 0.5, 0.2), 35.0);
    }

    #[test]
    fn plume_without_lateral_motion() {
        let g = grid(8);
        let t = TimeAxis::new(9, 4.0).unwrap();
        let p = PlumeParams::new(0.0);
        for time in t.instants() {
            assert_eq!(p.center(&g, &t, time).0, 0.52);
        }
    }

    #[test]
    fn plume_range_and_determinism() {
        let g = grid(12);
        let t = TimeAxis::new(7, 4.0).unwrap();
        let p = PlumeParams::new(0.63);
        let a = analytic_plume(&p, &g, &t).unwrap();
        let b = analytic_plume(&p, &g, &t).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|&v| v > 15.0 && v <= 35.0));
        assert!(analytic_plume(&PlumeParams { sigma: 0.0, ..p }, &g, &t).is_err());
    }

    #[test]
    fn plume_smooth_in_parameter() {
        let g = grid(16);
        let t = TimeAxis::new(20, 1.0).unwrap();
        let base = analytic_plume(&PlumeParams::new(0.6), &g, &t).unwrap();
        let rel = |eps: f64| {
            let m = analytic_plume(&PlumeParams::new(0.6 + eps), &g, &t).unwrap();
            crate::linalg::relative_frobenius(m.values(), base.values())
        };
        let (e1, e2, e3) = (rel(0.04), rel(0.02), rel(0.01));
        assert!(e2 < e1 && e3 < e2);
        assert!((e1 / e2 - 2.0).abs() < 0.2, "first-order decay expected: {e1} {e2}");
    }

    #[test]
    fn velocity_zero_and_corners() {
        let g = grid(6);
        let f = recirculating_velocity(0.0, &g).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|&c| c == 0.0));
        for (x, y) in [(0.0, 0.0), (1.04, 0.0), (0.0, 1.04), (1.04, 1.04)] {
            let (u, v) = velocity_at(0.7, &g, x, y);
            assert!(u.abs() < 1e-15 && v.abs() < 1e-15);
        }
        assert!(recirculating_velocity(-1.0, &g).is_err());
        let f = recirculating_velocity(0.5, &grid(40)).unwrap();
        assert!(f.max_speed() <= 0.5 + 1e-12 && f.max_speed() > 0.45);
    }

    fn max_discrete_divergence(n: usize) -> f64 {
        // rectangular domain so the centered-difference error does not cancel
        let g = Grid::new(n, 2 * n, 1.0, 1.7).unwrap();
        let f = recirculating_velocity(1.0, &g).unwrap();
        let mut worst = 0.0_f64;
        for iy in 1..g.ny() - 1 {
            for ix in 1..g.nx() - 1 {
                let j = g.index(ix, iy);
                let du = (f.u[j + 1] - f.u[j - 1]) / (2.0 * g.dx());
                let dv = (f.v[j + g.nx()] - f.v[j - g.nx()]) / (2.0 * g.dy());
                worst = worst.max((du + dv).abs());
            }
        }
        worst
    }

    #[test]
    fn divergence_second_order() {
        let coarse = max_discrete_divergence(16);
        let fine = max_discrete_divergence(32);
        let ratio = coarse / fine;
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn uniform_cold_cavity_stays_constant() {
        let g = grid(12);
        let t = TimeAxis::new(6, 5.0).unwrap();
        let p = CavityParams {
            inlet_velocity: 0.0,
            theta_hot: 15.0,
            ..CavityParams::new(0.0, 15.0)
        };
        let m = solve_cavity(&p, &g, &t, &SolverConfig::default()).unwrap();
        assert!(m.values().iter().all(|&v| v == 15.0));
    }

    #[test]
    fn maximum_principle() {
        let g = grid(16);
        let t = TimeAxis::new(11, 20.0).unwrap();
        for p in [
            CavityParams::new(0.6, 15.0),
            CavityParams::new(0.57, 5.0),
            CavityParams {
                theta_init: 40.0,
                ..CavityParams::new(0.8, 25.0)
            },
        ] {
            let m = solve_cavity(&p, &g, &t, &SolverConfig::default()).unwrap();
            let (lo, hi) = p.bounds();
            assert!(m.values().iter().all(|&v| v >= lo && v <= hi));
        }
    }

    #[test]
    fn smooth_in_velocity() {
        let g = grid(16);
        let t = TimeAxis::new(3, 20.0).unwrap();
        let run = |u: f64| {
            let m = solve_cavity(&CavityParams::new(u, 15.0), &g, &t, &SolverConfig::default()).unwrap();
            m.values().column(2).into_owned()
        };
        let (a, b, c) = (run(0.51), run(0.52), run(0.798));
        let near = (&b - &a).norm() / a.norm();
        let far = (&c - &a).norm() / a.norm();
        assert!(near < far, "{near} vs {far}");
    }

    #[test]
    fn bad_solver_inputs() {
        let g = grid(6);
        let t = TimeAxis::new(3, 1.0).unwrap();
        let cfg = SolverConfig::default();
        assert!(solve_cavity(&CavityParams::new(-0.1, 15.0), &g, &t, &cfg).is_err());
        let p = CavityParams {
            diffusivity: 0.0,
            ..CavityParams::new(0.5, 15.0)
        };
        assert!(solve_cavity(&p, &g, &t, &cfg).is_err());
        let p = CavityParams {
            inlet_height: 0.0,
            ..CavityParams::new(0.5, 15.0)
        };
        assert!(solve_cavity(&p, &g, &t, &cfg).is_err());
        let stiff = CavityParams {
            diffusivity: 1e300,
            ..CavityParams::new(0.5, 15.0)
        };
        assert!(matches!(solve_cavity(&stiff, &g, &t, &cfg), Err(Error::Stability(_))));
        let cfg = SolverConfig { cfl: 1.5, ..cfg };
        assert!(solve_cavity(&CavityParams::new(0.5, 15.0), &g, &t, &cfg).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let entries = vec![
            ManifestEntry {
                kind: ParamKind::Velocity,
                value: 0.51,
                path: "a.snp".into(),
            },
            ManifestEntry {
                kind: ParamKind::Temperature,
                value: 12.5,
                path: "/abs/b.snp".into(),
            },
        ];
        write_manifest(&path, &entries).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back[0].path, dir.path().join("a.snp"));
        assert_eq!(back[1].path, PathBuf::from("/abs/b.snp"));
        assert_eq!(back[1].value, 12.5);
        std::fs::write(&path, "velocity;0.5;x\n").unwrap();
        assert!(read_manifest(&path).is_err());
    }
}

//! Fixed-point barycentric interpolation of POD coefficient blocks.
//!
//! For an untrained parameter `δ̃`, the spatial blocks `φ_k` and temporal
//! blocks `α_h` of neighboring training samples are combined as
//!
//! ```text
//! φ̃ = Σ_k ω_k(δ̃) φ_k Q_k,   Q_k = η_k ξ_kᵀ  with  φ̃ᵀ φ_k = ξ_k Σ_k η_kᵀ
//! α̃ = Σ_h κ_h(δ̃) α_h K_h,   K_h = τ_h ζ_hᵀ  with  α̃ᵀ α_h = ζ_h Υ_h τ_hᵀ
//! ```
//!
//! iterated jointly to a fixed point, and the reduced matrix is
//! `Ỹ = φ̃ α̃ᵀ = Σ_{k,h} ω_k κ_h φ_k Q_k K_hᵀ α_hᵀ`.

use nalgebra::DMatrix;

use crate::dataset::{Param, SnapshotMatrix};
use crate::error::{ensure_arg, Error, Result};
use crate::linalg::thin_svd;
use crate::pod::RomDatabase;

/// Relative singular-value floor under which an alignment is flagged degenerate.
const DEGENERATE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationRequest {
    pub delta_new: f64,
    pub ne_x: usize,
    pub ne_t: usize,
    pub m: usize,
}

impl InterpolationRequest {
    pub fn validate(&self, db: &RomDatabase) -> Result<()> {
        let np = db.n_params();
        ensure_arg!(
            (2..=np).contains(&self.ne_x),
            "spatial neighbor count {} outside [2, {np}]",
            self.ne_x
        );
        ensure_arg!(
            (2..=np).contains(&self.ne_t),
            "temporal neighbor count {} outside [2, {np}]",
            self.ne_t
        );
        ensure_arg!(
            (1..=db.q).contains(&self.m),
            "truncation order {} outside [1, {}]",
            self.m,
            db.q
        );
        let (lo, hi) = db.hull();
        ensure_arg!(
            self.delta_new >= lo && self.delta_new <= hi,
            "parameter {} outside the training range [{lo}, {hi}]",
            self.delta_new
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            max_iters: 100,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_arg!(
            self.epsilon > 0.0 && self.epsilon.is_finite(),
            "fixed-point tolerance must be positive"
        );
        ensure_arg!(self.max_iters >= 1, "fixed-point iteration cap must be >= 1");
        Ok(())
    }
}

/// Indices of the `ne` training parameters nearest to `delta_new`, ascending.
/// Ties go to the smaller parameter value.
pub fn select_neighbors(params: &[f64], delta_new: f64, ne: usize) -> Result<Vec<usize>> {
    ensure_arg!(
        ne <= params.len(),
        "requested {ne} neighbors from {} parameters",
        params.len()
    );
    let mut order: Vec<usize> = (0..params.len()).collect();
    order.sort_by(|&a, &b| {
        let da = (params[a] - delta_new).abs();
        let db = (params[b] - delta_new).abs();
        da.total_cmp(&db).then(params[a].total_cmp(&params[b]))
    });
    let mut picked: Vec<usize> = order.into_iter().take(ne).collect();
    picked.sort_by(|&a, &b| params[a].total_cmp(&params[b]));
    Ok(picked)
}

/// Lagrange interpolation weights `ω_k(δ̃) = Π_{i≠k} (δ̃ − δ_i)/(δ_k − δ_i)`.
///
/// Evaluated in barycentric form so the weights sum to one to rounding
/// error; exact Kronecker values at the nodes.
pub fn lagrange_weights(nodes: &[f64], delta_new: f64) -> Result<Vec<f64>> {
    ensure_arg!(!nodes.is_empty(), "no interpolation nodes");
    ensure_arg!(
        nodes.iter().all(|v| v.is_finite()) && delta_new.is_finite(),
        "non-finite interpolation node"
    );
    for (i, a) in nodes.iter().enumerate() {
        ensure_arg!(
            nodes[i + 1..].iter().all(|b| b != a),
            "duplicate interpolation node {a}"
        );
    }
    if let Some(hit) = nodes.iter().position(|&d| d == delta_new) {
        return Ok((0..nodes.len()).map(|k| if k == hit { 1.0 } else { 0.0 }).collect());
    }
    let terms: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(k, &dk)| {
            let lambda: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, &di)| 1.0 / (dk - di))
                .product();
            lambda / (delta_new - dk)
        })
        .collect();
    let total: f64 = terms.iter().sum();
    Ok(terms.iter().map(|t| t / total).collect())
}

/// Orthogonal alignment of `other` onto `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `m × m` orthogonal matrix `Q = η ξᵀ`.
    pub q: DMatrix<f64>,
    /// The cross product was rank deficient; `Q` is not unique.
    pub degenerate: bool,
}

/// Solves `refᵀ·other = ξ Σ ηᵀ` and returns `Q = η ξᵀ`, so that `other·Q`
/// is the rotation of `other` closest to `reference`.
pub fn procrustes_align(reference: &DMatrix<f64>, other: &DMatrix<f64>) -> Result<Alignment> {
    ensure_arg!(
        reference.shape() == other.shape(),
        "alignment shapes differ: {:?} vs {:?}",
        reference.shape(),
        other.shape()
    );
    let cross = reference.transpose() * other;
    let svd = thin_svd(&cross)?;
    let smax = svd.sigma[0];
    let smin = svd.sigma[svd.sigma.len() - 1];
    let degenerate = smax == 0.0 || smin <= DEGENERATE_RTOL * smax;
    Ok(Alignment {
        q: &svd.v * svd.u.transpose(),
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOutcome {
    pub basis: DMatrix<f64>,
    pub alignments: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub final_error: f64,
    pub converged: bool,
    pub degenerate: bool,
}

fn check_blocks(blocks: &[DMatrix<f64>], weights: &[f64], init: &DMatrix<f64>) -> Result<()> {
    ensure_arg!(!blocks.is_empty(), "no blocks to interpolate");
    ensure_arg!(
        blocks.len() == weights.len(),
        "{} blocks but {} weights",
        blocks.len(),
        weights.len()
    );
    ensure_arg!(
        blocks.iter().all(|b| b.shape() == init.shape()),
        "block shapes differ from the initial iterate"
    );
    Ok(())
}

fn align_all(current: &DMatrix<f64>, blocks: &[DMatrix<f64>], degenerate: &mut bool) -> Result<Vec<DMatrix<f64>>> {
    blocks
        .iter()
        .map(|b| {
            let a = procrustes_align(current, b)?;
            *degenerate |= a.degenerate;
            Ok(a.q)
        })
        .collect()
}

fn weighted_sum(blocks: &[DMatrix<f64>], weights: &[f64], rotations: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(blocks[0].nrows(), blocks[0].ncols());
    for ((b, w), q) in blocks.iter().zip(weights).zip(rotations) {
        acc += (b * q) * *w;
    }
    acc
}

/// Fixed point `φ̃ = Σ_k w_k φ_k Q_k(φ̃)` of a single family of blocks.
///
/// The initial iterate counts as aligned with the identity, so the first
/// error compares the first alignments against `I`. The error is
/// `Σ_k ‖Q_k⁽ⁿ⁾ − Q_k⁽ⁿ⁻¹⁾‖_F`. Not converging within `max_iters` is
/// reported through `converged`, not as an error.
pub fn fixed_point_basis(
    blocks: &[DMatrix<f64>],
    weights: &[f64],
    init: &DMatrix<f64>,
    cfg: &FixedPointConfig,
) -> Result<FixedPointOutcome> {
    cfg.validate()?;
    check_blocks(blocks, weights, init)?;
    let m = init.ncols();
    let mut current = init.clone();
    let mut previous = vec![DMatrix::identity(m, m); blocks.len()];
    let mut degenerate = false;
    let mut error = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let rotations = align_all(&current, blocks, &mut degenerate)?;
        current = weighted_sum(blocks, weights, &rotations);
        error = rotations
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b).norm())
            .sum();
        previous = rotations;
        if error <= cfg.epsilon {
            break;
        }
    }
    if !error.is_finite() {
        return Err(Error::Numerical("fixed-point error is not finite".into()));
    }
    Ok(FixedPointOutcome {
        basis: current,
        alignments: previous,
        iterations,
        final_error: error,
        converged: error <= cfg.epsilon,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricResult {
    /// `r × s` reduced matrix `Ỹ`.
    pub y_reduced: DMatrix<f64>,
    /// `r × m`
    pub phi_tilde: DMatrix<f64>,
    /// `s × m`
    pub alpha_tilde: DMatrix<f64>,
    pub spatial_neighbors: Vec<usize>,
    pub temporal_neighbors: Vec<usize>,
    pub spatial_weights: Vec<f64>,
    pub temporal_weights: Vec<f64>,
    /// Final `Q_k`, one per spatial neighbor.
    pub spatial_alignments: Vec<DMatrix<f64>>,
    /// Final `K_h`, one per temporal neighbor.
    pub temporal_alignments: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub final_error: f64,
    pub converged: bool,
    pub degenerate: bool,
}

/// Predicts the reduced matrix for `req.delta_new`.
///
/// Both fixed points start from the training sample nearest to `δ̃` and are
/// iterated together; the stopping error couples them through
/// `Σ_k Σ_h ‖Q_k⁽ⁿ⁾K_h⁽ⁿ⁾ᵀ − Q_k⁽ⁿ⁻¹⁾K_h⁽ⁿ⁻¹⁾ᵀ‖_F` over the selected
/// neighbor sets.
pub fn interpolate_reduced(
    db: &RomDatabase,
    req: &InterpolationRequest,
    cfg: &FixedPointConfig,
) -> Result<BarycentricResult> {
    cfg.validate()?;
    req.validate(db)?;
    let m = req.m;
    let delta = req.delta_new;

    let spatial_neighbors = select_neighbors(&db.params, delta, req.ne_x)?;
    let temporal_neighbors = select_neighbors(&db.params, delta, req.ne_t)?;
    let nearest = select_neighbors(&db.params, delta, 1)?[0];

    let phis: Vec<DMatrix<f64>> = spatial_neighbors
        .iter()
        .map(|&k| db.blocks[k].phi.columns(0, m).into_owned())
        .collect();
    let alphas: Vec<DMatrix<f64>> = temporal_neighbors
        .iter()
        .map(|&h| db.blocks[h].alpha.columns(0, m).into_owned())
        .collect();
    let nodes = |idx: &[usize]| idx.iter().map(|&i| db.params[i]).collect::<Vec<_>>();
    let omega = lagrange_weights(&nodes(&spatial_neighbors), delta)?;
    let kappa = lagrange_weights(&nodes(&temporal_neighbors), delta)?;

    let mut phi_t = db.blocks[nearest].phi.columns(0, m).into_owned();
    let mut alpha_t = db.blocks[nearest].alpha.columns(0, m).into_owned();
    let eye = DMatrix::<f64>::identity(m, m);
    let mut prev_q = vec![eye.clone(); phis.len()];
    let mut prev_k = vec![eye; alphas.len()];
    let mut degenerate = false;
    let mut error = f64::INFINITY;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let qs = align_all(&phi_t, &phis, &mut degenerate)?;
        let ks = align_all(&alpha_t, &alphas, &mut degenerate)?;
        phi_t = weighted_sum(&phis, &omega, &qs);
        alpha_t = weighted_sum(&alphas, &kappa, &ks);

        error = 0.0;
        for (q, pq) in qs.iter().zip(&prev_q) {
            for (k, pk) in ks.iter().zip(&prev_k) {
                error += (q * k.transpose() - pq * pk.transpose()).norm();
            }
        }
        prev_q = qs;
        prev_k = ks;
        if error <= cfg.epsilon {
            break;
        }
    }
    if !error.is_finite() || phi_t.iter().chain(alpha_t.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("barycentric iteration produced non-finite values".into()));
    }

    Ok(BarycentricResult {
        y_reduced: &phi_t * alpha_t.transpose(),
        phi_tilde: phi_t,
        alpha_tilde: alpha_t,
        spatial_neighbors,
        temporal_neighbors,
        spatial_weights: omega,
        temporal_weights: kappa,
        spatial_alignments: prev_q,
        temporal_alignments: prev_k,
        iterations,
        final_error: error,
        converged: error <= cfg.epsilon,
        degenerate,
    })
}

/// `Φ(rows, :) · Ỹ · Λ(cols, :)ᵀ`.
pub fn reconstruct_field(
    db: &RomDatabase,
    y_reduced: &DMatrix<f64>,
    rows: &[usize],
    cols: &[usize],
) -> Result<DMatrix<f64>> {
    ensure_arg!(
        y_reduced.shape() == (db.r(), db.s()),
        "reduced matrix is {:?}, database expects {}x{}",
        y_reduced.shape(),
        db.r(),
        db.s()
    );
    ensure_arg!(
        rows.iter().all(|&j| j < db.n_space()),
        "spatial index out of range (N_x = {})",
        db.n_space()
    );
    ensure_arg!(
        cols.iter().all(|&l| l < db.n_time()),
        "time index out of range (N_s = {})",
        db.n_time()
    );
    let phi_rows = db.phi.select_rows(rows);
    let lambda_rows = db.lambda.select_rows(cols);
    Ok(phi_rows * y_reduced * lambda_rows.transpose())
}

/// Full-field prediction at `req.delta_new` with the database's layout.
pub fn predict(
    db: &RomDatabase,
    req: &InterpolationRequest,
    cfg: &FixedPointConfig,
) -> Result<(SnapshotMatrix, BarycentricResult)> {
    let layout = db
        .layout
        .ok_or_else(|| Error::Argument("database carries no grid layout".into()))?;
    let result = interpolate_reduced(db, req, cfg)?;
    let values = &db.phi * &result.y_reduced * db.lambda.transpose();
    let field = SnapshotMatrix::new(
        layout.grid,
        layout.times,
        Param::new(layout.kind, req.delta_new),
        values,
    )
    .map_err(|e| Error::Numerical(format!("prediction: {e}")))?;
    Ok((field, result))
}

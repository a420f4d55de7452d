//! Proper orthogonal decomposition of snapshot matrices and the two-level
//! compression into global bases plus small per-parameter coefficient blocks.
//!
//! Each sample is factored as `Y_k ≈ S_k T_kᵀ` (orthonormal `S_k`, temporal
//! coefficients `T_k = V_k Σ_k`). The stacked bases `[S_1 … S_Np]` and
//! `[T_1 … T_Np]` are compressed again into `Φ` (order `r`) and `Λ` (order
//! `s`), giving `Y_k ≈ Φ φ_k α_kᵀ Λᵀ` with `φ_k = Φᵀ S_k` (`r × q`) and
//! `α_k = Λᵀ T_k` (`s × q`).

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dataset::{
    self, decode_geometry, encode_geometry, Decoder, Encoder, Grid, Param, ParamKind,
    SnapshotMatrix, TimeAxis,
};
use crate::error::{ensure_arg, Error, Result};
use crate::linalg::thin_svd;

pub const ROM_MAGIC: &[u8; 4] = b"ROM1";
pub const ROM_VERSION: u32 = 1;

/// Rank-`q` POD of one snapshot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PodPair {
    /// `N_x × q`, orthonormal columns.
    pub spatial: DMatrix<f64>,
    /// `N_s × q`, right singular vectors scaled by the singular values.
    pub temporal: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl PodPair {
    pub fn order(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.spatial * self.temporal.transpose()
    }
}

pub fn pod_factorize(y: &SnapshotMatrix, q: usize) -> Result<PodPair> {
    pod_factorize_matrix(y.values(), q)
}

pub fn pod_factorize_matrix(y: &DMatrix<f64>, q: usize) -> Result<PodPair> {
    let max_q = y.nrows().min(y.ncols());
    ensure_arg!(
        q >= 1 && q <= max_q,
        "POD order {q} outside [1, {max_q}] for a {}x{} matrix",
        y.nrows(),
        y.ncols()
    );
    let svd = thin_svd(y)?;
    let spatial = svd.u.columns(0, q).into_owned();
    let mut temporal = svd.v.columns(0, q).into_owned();
    for (c, sigma) in svd.sigma.iter().take(q).enumerate() {
        temporal.column_mut(c).scale_mut(*sigma);
    }
    Ok(PodPair {
        spatial,
        temporal,
        singular_values: svd.sigma.iter().take(q).copied().collect(),
    })
}

/// Grid, time axis and parameter kind shared by every sample of a database.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub grid: Grid,
    pub times: TimeAxis,
    pub kind: ParamKind,
}

/// Per-parameter nested coefficient blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// `r × q`
    pub phi: DMatrix<f64>,
    /// `s × q`
    pub alpha: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomDatabase {
    /// `N_x × r`
    pub phi: DMatrix<f64>,
    /// `N_s × s`
    pub lambda: DMatrix<f64>,
    pub blocks: Vec<Block>,
    pub params: Vec<f64>,
    pub q: usize,
    pub layout: Option<Layout>,
}

impl RomDatabase {
    pub fn r(&self) -> usize {
        self.phi.ncols()
    }
    pub fn s(&self) -> usize {
        self.lambda.ncols()
    }
    pub fn n_params(&self) -> usize {
        self.params.len()
    }
    pub fn n_space(&self) -> usize {
        self.phi.nrows()
    }
    pub fn n_time(&self) -> usize {
        self.lambda.nrows()
    }

    /// Training hull `[min δ, max δ]`.
    pub fn hull(&self) -> (f64, f64) {
        (self.params[0], self.params[self.params.len() - 1])
    }

    /// Nested reduced matrix `φ_k α_kᵀ` truncated to `m` columns.
    pub fn reduced_sample(&self, k: usize, m: usize) -> Result<DMatrix<f64>> {
        ensure_arg!(k < self.n_params(), "sample index {k} out of range");
        ensure_arg!(m >= 1 && m <= self.q, "truncation order {m} outside [1, {}]", self.q);
        let b = &self.blocks[k];
        Ok(b.phi.columns(0, m) * b.alpha.columns(0, m).transpose())
    }

    /// `Φ φ_k(:, 1..m) α_k(:, 1..m)ᵀ Λᵀ`.
    pub fn reconstruct_values(&self, k: usize, m: usize) -> Result<DMatrix<f64>> {
        let reduced = self.reduced_sample(k, m)?;
        Ok(&self.phi * reduced * self.lambda.transpose())
    }
}

pub fn two_level_compress(
    pairs: &[PodPair],
    params: &[f64],
    r: usize,
    s: usize,
) -> Result<RomDatabase> {
    ensure_arg!(!pairs.is_empty(), "no POD pairs to compress");
    ensure_arg!(
        pairs.len() == params.len(),
        "{} POD pairs but {} parameters",
        pairs.len(),
        params.len()
    );
    ensure_arg!(
        params.iter().all(|p| p.is_finite()) && params.windows(2).all(|w| w[0] < w[1]),
        "parameters must be finite and strictly increasing"
    );
    let (nx, ns, q) = (
        pairs[0].spatial.nrows(),
        pairs[0].temporal.nrows(),
        pairs[0].order(),
    );
    ensure_arg!(
        pairs.iter().all(|p| p.spatial.shape() == (nx, q) && p.temporal.shape() == (ns, q)),
        "POD pairs disagree on shapes"
    );
    let np = pairs.len();
    let r_max = (q * np).min(nx);
    let s_max = (q * np).min(ns);
    ensure_arg!(r >= 1 && r <= r_max, "spatial order r = {r} outside [1, {r_max}]");
    ensure_arg!(s >= 1 && s <= s_max, "temporal order s = {s} outside [1, {s_max}]");

    let stacked_s = DMatrix::from_fn(nx, q * np, |i, c| pairs[c / q].spatial[(i, c % q)]);
    let stacked_t = DMatrix::from_fn(ns, q * np, |i, c| pairs[c / q].temporal[(i, c % q)]);
    let phi = thin_svd(&stacked_s)?.u.columns(0, r).into_owned();
    let lambda = thin_svd(&stacked_t)?.u.columns(0, s).into_owned();

    let phi_t = phi.transpose();
    let lambda_t = lambda.transpose();
    let blocks = pairs
        .iter()
        .map(|p| Block {
            phi: &phi_t * &p.spatial,
            alpha: &lambda_t * &p.temporal,
        })
        .collect();
    Ok(RomDatabase {
        phi,
        lambda,
        blocks,
        params: params.to_vec(),
        q,
        layout: None,
    })
}

/// Default global orders: the largest admissible ones, `r = min(q·N_p, N_x)`
/// and `s = min(q·N_p, N_s)`, for which the second-level compression is lossless.
pub fn default_orders(q: usize, n_params: usize, n_space: usize, n_time: usize) -> (usize, usize) {
    ((q * n_params).min(n_space), (q * n_params).min(n_time))
}

/// Factorizes every sample at order `q` and compresses the ensemble.
/// Samples are sorted by parameter value; they must share grid, time axis
/// and parameter kind. `r`/`s` default to [`default_orders`].
pub fn build_database(
    samples: &[SnapshotMatrix],
    q: usize,
    r: Option<usize>,
    s: Option<usize>,
) -> Result<RomDatabase> {
    ensure_arg!(!samples.is_empty(), "empty ensemble");
    let first = &samples[0];
    let layout = Layout {
        grid: *first.grid(),
        times: *first.times(),
        kind: first.param().kind,
    };
    ensure_arg!(
        samples.iter().all(|m| *m.grid() == layout.grid
            && *m.times() == layout.times
            && m.param().kind == layout.kind),
        "ensemble members disagree on grid, time axis or parameter kind"
    );
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].param().value.total_cmp(&samples[b].param().value));
    let params: Vec<f64> = order.iter().map(|&k| samples[k].param().value).collect();
    let pairs = order
        .par_iter()
        .map(|&k| pod_factorize(&samples[k], q))
        .collect::<Result<Vec<_>>>()?;
    let (dr, ds) = default_orders(q, samples.len(), layout.grid.len(), layout.times.n_steps());
    let mut db = two_level_compress(&pairs, &params, r.unwrap_or(dr), s.unwrap_or(ds))?;
    db.layout = Some(layout);
    Ok(db)
}

/// Truncated blocks `(φ_k(:, 1..m), α_k(:, 1..m))` for every parameter.
pub fn truncate_blocks(db: &RomDatabase, m: usize) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    ensure_arg!(m >= 1 && m <= db.q, "truncation order {m} outside [1, {}]", db.q);
    Ok(db
        .blocks
        .iter()
        .map(|b| (b.phi.columns(0, m).into_owned(), b.alpha.columns(0, m).into_owned()))
        .collect())
}

pub fn reconstruct_sample(db: &RomDatabase, k: usize, m: usize) -> Result<SnapshotMatrix> {
    let layout = db
        .layout
        .ok_or_else(|| Error::Argument("database carries no grid layout".into()))?;
    let values = db.reconstruct_values(k, m)?;
    SnapshotMatrix::new(
        layout.grid,
        layout.times,
        Param::new(layout.kind, db.params[k]),
        values,
    )
}

/// Writes a ROM1 file.
///
/// Layout (little-endian): magic `"ROM1"`, `u32` version, `u32 q`, `u32 r`,
/// `u32 s`, `u32 N_p`, grid/time/kind header as in SNP1, `N_p` `f64`
/// parameters, then `Φ`, `Λ` and each `(φ_k, α_k)` pair, all column-major.
pub fn write_database(db: &RomDatabase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let layout = db
        .layout
        .ok_or_else(|| Error::Argument("only databases with a grid layout can be saved".into()))?;
    let mut enc = Encoder::default();
    enc.bytes(ROM_MAGIC);
    enc.u32(ROM_VERSION);
    for v in [db.q, db.r(), db.s(), db.n_params()] {
        enc.u32(v as u32);
    }
    encode_geometry(&mut enc, &layout.grid, &layout.times, layout.kind);
    enc.f64s(&db.params);
    enc.f64s(db.phi.as_slice());
    enc.f64s(db.lambda.as_slice());
    for b in &db.blocks {
        enc.f64s(b.phi.as_slice());
        enc.f64s(b.alpha.as_slice());
    }
    std::fs::write(path, &enc.buf).map_err(|e| Error::io(path, e))
}

pub fn read_database(path: impl AsRef<Path>) -> Result<RomDatabase> {
    let path = path.as_ref();
    let bytes = dataset::read_all(path)?;
    let mut dec = Decoder::new(&bytes, "ROM1");
    dec.magic(ROM_MAGIC, ROM_VERSION)?;
    let q = dec.u32()? as usize;
    let r = dec.u32()? as usize;
    let s = dec.u32()? as usize;
    let np = dec.u32()? as usize;
    let (grid, times, kind) = decode_geometry(&mut dec)?;
    let (nx, ns) = (grid.len(), times.n_steps());
    if q == 0 || np == 0 || r == 0 || s == 0 || r > (q * np).min(nx) || s > (q * np).min(ns) {
        return Err(Error::Corrupt(format!(
            "inconsistent ROM1 orders q={q} r={r} s={s} N_p={np}"
        )));
    }
    let params = dec.matrix(np, 1)?.as_slice().to_vec();
    let phi = dec.matrix(nx, r)?;
    let lambda = dec.matrix(ns, s)?;
    let mut blocks = Vec::with_capacity(np);
    for _ in 0..np {
        let phi_k = dec.matrix(r, q)?;
        let alpha_k = dec.matrix(s, q)?;
        blocks.push(Block {
            phi: phi_k,
            alpha: alpha_k,
        });
    }
    dec.finish()?;
    if !params.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Corrupt("ROM1 parameters not strictly increasing".into()));
    }
    Ok(RomDatabase {
        phi,
        lambda,
        blocks,
        params,
        q,
        layout: Some(Layout { grid, times, kind }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_defect, relative_frobenius};
    use crate::surrogate::{analytic_plume, PlumeParams};
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Squared singular values from the eigenvalues of `YᵀY`, descending.
    fn gram_spectrum(y: &DMatrix<f64>) -> Vec<f64> {
        let gram = if y.nrows() >= y.ncols() {
            y.transpose() * y
        } else {
            y * y.transpose()
        };
        let mut ev: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|v| v.max(0.0)).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    #[test]
    fn rank_one_example() {
        let y = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pod_factorize_matrix(&y, 1).unwrap();
        assert_eq!(p.singular_values, vec![2.0]);
        assert_eq!(p.spatial.column(0).abs(), nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(p.temporal.column(0).abs(), nalgebra::DVector::from_vec(vec![2.0, 0.0]));
        assert_eq!(p.reconstruct(), y);
    }

    #[test]
    fn full_order_reproduces() {
        let y = random(30, 10, 1);
        let p = pod_factorize_matrix(&y, 10).unwrap();
        assert!((p.reconstruct() - &y).norm() <= 1e-10 * y.norm());
        assert!(orthonormality_defect(&p.spatial) <= 1e-10);
    }

    #[test]
    fn truncation_error_matches_spectrum_tail() {
        let y = random(30, 10, 2);
        let spectrum = gram_spectrum(&y);
        let p = pod_factorize_matrix(&y, 3).unwrap();
        let err2 = (p.reconstruct() - &y).norm_squared();
        let tail: f64 = spectrum[3..].iter().sum();
        assert!((err2 - tail).abs() <= 1e-10 * y.norm_squared(), "{err2} vs {tail}");
        for (i, s) in p.singular_values.iter().enumerate() {
            assert!((s * s - spectrum[i]).abs() <= 1e-10 * spectrum[0]);
        }
    }

    #[test]
    fn order_out_of_range() {
        let y = random(5, 4, 3);
        assert!(matches!(pod_factorize_matrix(&y, 0), Err(Error::Argument(_))));
        assert!(matches!(pod_factorize_matrix(&y, 5), Err(Error::Argument(_))));
    }

    #[test]
    fn sign_convention() {
        let y = random(20, 8, 4);
        let a = pod_factorize_matrix(&y, 8).unwrap();
        let b = pod_factorize_matrix(&(-&y * -1.0), 8).unwrap();
        assert_eq!(a, b);
        for c in 0..8 {
            let col = a.spatial.column(c);
            let imax = col.iamax();
            assert!(col[imax] >= 0.0);
        }
    }

    #[test]
    fn single_sample_full_order_lossless() {
        let y = random(12, 6, 5);
        let pair = pod_factorize_matrix(&y, 6).unwrap();
        let db = two_level_compress(std::slice::from_ref(&pair), &[0.3], 6, 6).unwrap();
        let rebuilt = db.reconstruct_values(0, 6).unwrap();
        assert!(relative_frobenius(&rebuilt, &pair.reconstruct()) <= 1e-10);
        assert!(orthonormality_defect(&db.phi) <= 1e-10);
        assert!(orthonormality_defect(&db.lambda) <= 1e-10);
    }

    fn plume_samples(deltas: &[f64]) -> Vec<SnapshotMatrix> {
        let g = Grid::new(12, 10, 1.04, 1.04).unwrap();
        let t = TimeAxis::new(24, 10.0).unwrap();
        deltas
            .iter()
            .map(|&d| analytic_plume(&PlumeParams::new(d), &g, &t).unwrap())
            .collect()
    }

    #[test]
    fn three_sample_full_recompression() {
        let q = 5;
        let samples = plume_samples(&[0.4, 0.5, 0.6]);
        let db = build_database(&samples, q, Some(3 * q), Some(3 * q)).unwrap();
        for (k, y) in samples.iter().enumerate() {
            let direct = pod_factorize(y, q).unwrap().reconstruct();
            let nested = db.reconstruct_values(k, q).unwrap();
            assert!(relative_frobenius(&nested, &direct) <= 1e-8);
        }
    }

    #[test]
    fn reconstruction_bounded_by_tail_energy() {
        let q = 4;
        let samples = plume_samples(&[0.3, 0.45, 0.5, 0.7]);
        let db = build_database(&samples, q, None, None).unwrap();
        assert_eq!(db.r(), q * 4);
        assert_eq!(db.s(), (q * 4).min(24));
        for (k, y) in samples.iter().enumerate() {
            let spectrum = gram_spectrum(y.values());
            let tail: f64 = spectrum[q..].iter().sum::<f64>().sqrt() / y.values().norm();
            let rec = reconstruct_sample(&db, k, q).unwrap();
            let err = relative_frobenius(rec.values(), y.values());
            assert!(err <= tail + 1e-8, "{err} > {tail}");
            assert_eq!(rec.param().value, y.param().value);
        }
    }

    #[test]
    fn truncation_monotone() {
        let q = 6;
        let samples = plume_samples(&[0.3, 0.5, 0.7]);
        let db = build_database(&samples, q, None, None).unwrap();
        let full = truncate_blocks(&db, q).unwrap();
        for (k, (p, a)) in full.iter().enumerate() {
            assert_eq!(p, &db.blocks[k].phi);
            assert_eq!(a, &db.blocks[k].alpha);
        }
        let one = truncate_blocks(&db, 1).unwrap();
        assert_eq!(one[1].0, db.blocks[1].phi.columns(0, 1).into_owned());
        assert!(truncate_blocks(&db, 0).is_err());
        assert!(truncate_blocks(&db, q + 1).is_err());
        for (k, y) in samples.iter().enumerate() {
            let mut prev = f64::INFINITY;
            for m in 1..=q {
                let e = relative_frobenius(&db.reconstruct_values(k, m).unwrap(), y.values());
                assert!(e <= prev + 1e-12);
                prev = e;
            }
        }
        assert!(reconstruct_sample(&db, 0, 0).is_err());
        assert!(reconstruct_sample(&db, 3, 1).is_err());
    }

    #[test]
    fn compress_argument_errors() {
        let a = pod_factorize_matrix(&random(8, 5, 6), 2).unwrap();
        let b = pod_factorize_matrix(&random(8, 5, 7), 2).unwrap();
        let pairs = [a.clone(), b.clone()];
        assert!(two_level_compress(&pairs, &[0.5, 0.5], 2, 2).is_err());
        assert!(two_level_compress(&pairs, &[0.6, 0.5], 2, 2).is_err());
        assert!(two_level_compress(&pairs, &[0.5], 2, 2).is_err());
        assert!(two_level_compress(&pairs, &[0.1, 0.5], 5, 2).is_err());
        assert!(two_level_compress(&pairs, &[0.1, 0.5], 4, 6).is_err());
        let c = pod_factorize_matrix(&random(8, 5, 8), 3).unwrap();
        assert!(two_level_compress(&[a, c], &[0.1, 0.5], 2, 2).is_err());
        assert!(two_level_compress(&pairs, &[0.1, 0.5], 4, 4).is_ok());
    }

    #[test]
    fn rom_file_round_trip_and_errors() {
        let samples = plume_samples(&[0.5, 0.6]);
        let db = build_database(&samples, 3, None, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.rom");
        write_database(&db, &path).unwrap();
        assert_eq!(read_database(&path).unwrap(), db);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_database(&path), Err(Error::Corrupt(_))));
        std::fs::write(&path, b"SNP1\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_database(&path), Err(Error::Format(_))));

        let bare = two_level_compress(&[pod_factorize_matrix(&random(5, 4, 9), 2).unwrap()], &[1.0], 2, 2).unwrap();
        assert!(write_database(&bare, &path).is_err());
    }
}

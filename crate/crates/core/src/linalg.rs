//! Dense linear-algebra helpers shared by the POD and interpolation code.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

const SVD_MAX_ITERS: usize = 10_000;

/// Thin singular value decomposition `a = u * diag(sigma) * vᵀ` with
/// singular values sorted in nonincreasing order.
///
/// Signs are fixed so that the largest-magnitude entry of every left
/// singular vector is nonnegative (first such entry on ties); the matching
/// right singular vector is flipped with it.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Err(Error::Argument("SVD of an empty matrix".into()));
    }
    let svd = SVD::try_new(a.clone(), true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD factors missing".into()));
    };
    let sv = svd.singular_values;
    if sv.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite singular value".into()));
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));

    let mut out_u = DMatrix::zeros(a.nrows(), k);
    let mut out_v = DMatrix::zeros(a.ncols(), k);
    let mut sigma = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        let col = u.column(src);
        let mut pivot = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        out_u.set_column(dst, &(col * sign));
        out_v.set_column(dst, &(v_t.row(src).transpose() * sign));
        sigma[dst] = sv[src];
    }
    Ok(ThinSvd {
        u: out_u,
        sigma,
        v: out_v,
    })
}

/// Largest absolute entry of `aᵀa − I`.
pub fn orthonormality_defect(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    let mut worst = 0.0_f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// `‖a − b‖_F / ‖b‖_F`, falling back to the absolute norm when `b` is zero.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

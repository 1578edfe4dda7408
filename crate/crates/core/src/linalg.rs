//! Small dense linear-algebra helpers shared by the geometric modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest entry of |M − Mᵀ|.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}

/// Largest entry of |M + Mᵀ|.
pub fn skew_defect(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m + m.transpose()))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
/// Eigenvectors are the columns of the returned matrix, in the same order.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Applies `g` to the spectrum of a symmetric matrix: V·diag(g(λ))·Vᵀ.
pub fn sym_spectral_map(m: &DMatrix<f64>, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen_sorted(m);
    let d = DMatrix::from_diagonal(&values.map(g));
    &vectors * d * vectors.transpose()
}

/// Inverse square root of a symmetric positive definite matrix. Eigenvalues are
/// floored at `floor`; an eigenvalue below the floor is reported as an error.
pub fn spd_inv_sqrt(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let (values, _) = sym_eigen_sorted(m);
    let smallest = values.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest < floor {
        return Err(Error::NotPositiveDefinite(smallest));
    }
    Ok(sym_spectral_map(m, |l| 1.0 / l.max(floor).sqrt()))
}

pub fn spd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_spectral_map(m, |l| l.max(0.0).sqrt())
}

/// Orthonormal basis (as columns) of the range of a symmetric projector.
pub fn projector_range_basis(p: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen_sorted(p);
    let cols: Vec<DVector<f64>> = values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.5)
        .map(|(i, _)| vectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(p.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm solution of `J·dx = r` through the SVD pseudo-inverse.
/// Singular values below `rcond · σ_max` are treated as zero.
pub fn min_norm_solve(j: &DMatrix<f64>, r: &DVector<f64>, rcond: f64) -> DVector<f64> {
    if j.nrows() == 0 {
        return DVector::zeros(j.ncols());
    }
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = (rcond * smax).max(f64::MIN_POSITIVE);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd vt");
    let mut dx = DVector::zeros(j.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let coeff = u.column(k).dot(r) / s;
            dx += vt.row(k).transpose() * coeff;
        }
    }
    dx
}

/// Outcome of a Newton projection onto the zero set of a system.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub point: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Gauss–Newton with minimum-norm steps on `F(x) = 0`.
///
/// Iterates until the residual is below `tol` and the step has stalled, so that
/// points on singular levels (where convergence is only linear) are still
/// driven all the way to the singular point.
pub fn newton_project<F>(system: F, x0: &DVector<f64>, tol: f64, max_iter: usize) -> Result<NewtonOutcome>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut x = x0.clone();
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let (r, j) = system(&x);
        residual = r.amax();
        if !residual.is_finite() {
            return Err(Error::NoConvergence(residual));
        }
        if r.is_empty() {
            return Ok(NewtonOutcome { point: x, residual: 0.0, iterations: it });
        }
        let dx = min_norm_solve(&j, &r, 1e-14);
        let step = dx.norm();
        x -= dx;
        if residual <= tol && step <= 1e-14 * (1.0 + x.norm()) {
            let (r, _) = system(&x);
            return Ok(NewtonOutcome { point: x, residual: r.amax(), iterations: it + 1 });
        }
    }
    let (r, _) = system(&x);
    let final_residual = r.amax();
    if final_residual <= tol {
        Ok(NewtonOutcome { point: x, residual: final_residual, iterations: max_iter })
    } else {
        Err(Error::NoConvergence(final_residual.max(residual.min(final_residual))))
    }
}

/// Cross-product matrix: `cross_matrix(a) * b == a × b`.
pub fn cross_matrix(a: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -a[2], a[1], a[2], 0.0, -a[0], -a[1], a[0], 0.0])
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// The 2×2 rotation generator [[0, −1], [1, 0]].
pub fn rot2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_eigen_is_ascending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let (v, _) = sym_eigen_sorted(&m);
        assert_eq!(v.as_slice(), &[-1.0, 2.0, 3.0]);
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = spd_inv_sqrt(&m, 1e-12).unwrap();
        let inv = m.clone().try_inverse().unwrap();
        assert!(max_abs(&(&s * &s - inv)) < 1e-12);
    }

    #[test]
    fn inverse_sqrt_rejects_indefinite() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(spd_inv_sqrt(&m, 1e-12), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn newton_reaches_singular_point() {
        // x² + y² = 1 together with y = 1 only meets at (0, 1), where the Jacobian drops rank.
        let sys = |x: &DVector<f64>| {
            let r = DVector::from_vec(vec![x[0] * x[0] + x[1] * x[1] - 1.0, x[1] - 1.0]);
            let j = DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 2.0 * x[1], 0.0, 1.0]);
            (r, j)
        };
        let out = newton_project(sys, &DVector::from_vec(vec![0.3, 0.9]), 1e-12, 200).unwrap();
        // x² vanishes in 1 + x² once |x| is below √ε, so that is the attainable accuracy.
        assert!(out.point[0].abs() < 5e-8, "{}", out.point);
    }

    #[test]
    fn cross_matrix_matches_cross_product() {
        let a = nalgebra::Vector3::new(1.0, 2.0, 3.0);
        let b = nalgebra::Vector3::new(-0.5, 0.25, 2.0);
        let m = cross_matrix(a.as_slice());
        let got = m * DVector::from_column_slice(b.as_slice());
        let want = a.cross(&b);
        for i in 0..3 {
            assert!((got[i] - want[i]).abs() < 1e-15);
        }
    }
}

//! Rational independence of real vectors and good projections of tori.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const DEFAULT_COEFF_BOUND: i64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum Independence {
    /// No integer relation with coefficients up to `bound` was found.
    Independent { bound: i64, tol: f64 },
    /// `Σ witness_i·θ_i` vanishes to within `tol`.
    Dependent { witness: Vec<i64>, residual: f64 },
}

impl Independence {
    pub fn is_independent(&self) -> bool {
        matches!(self, Independence::Independent { .. })
    }
}

fn residual(theta: &[f64], s: &[i64]) -> f64 {
    theta.iter().zip(s).map(|(t, &c)| t * c as f64).sum::<f64>().abs()
}

/// Sign-normalised witness: first nonzero coefficient positive.
fn normalise(mut s: Vec<i64>) -> Vec<i64> {
    if s.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0) {
        s.iter_mut().for_each(|c| *c = -*c);
    }
    s
}

fn better(a: &[i64], b: &[i64]) -> bool {
    let na = a.iter().map(|c| c.abs()).max().unwrap_or(0);
    let nb = b.iter().map(|c| c.abs()).max().unwrap_or(0);
    na < nb || (na == nb && a < b)
}

/// Searches for a nonzero integer vector s with ‖s‖∞ ≤ `coeff_bound` and
/// |Σ sᵢθᵢ| ≤ `tol` (default 1e-9·‖θ‖). Exhaustive up to three entries,
/// lattice reduction above.
pub fn rationally_independent(theta: &[f64], coeff_bound: i64, tol: Option<f64>) -> Result<Independence> {
    if theta.is_empty() {
        return Err(Error::InvalidArgument("rational independence of an empty vector".into()));
    }
    if coeff_bound < 1 {
        return Err(Error::InvalidArgument(format!("coefficient bound {coeff_bound} < 1")));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("non-finite entry".into()));
    }
    let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    let tol = tol.unwrap_or(1e-9 * norm);
    let found = if theta.len() <= 3 {
        exhaustive(theta, coeff_bound, tol)
    } else {
        lattice_search(theta, coeff_bound, tol)
    };
    Ok(match found {
        Some(witness) => Independence::Dependent { residual: residual(theta, &witness), witness },
        None => Independence::Independent { bound: coeff_bound, tol },
    })
}

/// Enumerates all coefficients except the one on the largest entry, which is
/// then fixed by rounding.
fn exhaustive(theta: &[f64], bound: i64, tol: f64) -> Option<Vec<i64>> {
    let n = theta.len();
    let pivot = (0..n).max_by(|&a, &b| theta[a].abs().total_cmp(&theta[b].abs()))?;
    if theta[pivot] == 0.0 {
        // θ = 0: any unit vector is a relation.
        let mut s = vec![0; n];
        s[0] = 1;
        return Some(s);
    }
    let others: Vec<usize> = (0..n).filter(|&i| i != pivot).collect();
    let mut best: Option<Vec<i64>> = None;
    let mut counter = vec![-bound; others.len()];
    loop {
        let partial: f64 = others.iter().zip(&counter).map(|(&i, &c)| theta[i] * c as f64).sum();
        let sp = (-partial / theta[pivot]).round() as i64;
        if sp.abs() <= bound {
            let mut s = vec![0; n];
            s[pivot] = sp;
            for (&i, &c) in others.iter().zip(&counter) {
                s[i] = c;
            }
            if s.iter().any(|&c| c != 0) && residual(theta, &s) <= tol {
                let s = normalise(s);
                if best.as_ref().is_none_or(|b| better(&s, b)) {
                    best = Some(s);
                }
            }
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == counter.len() {
                return best;
            }
            counter[k] += 1;
            if counter[k] <= bound {
                break;
            }
            counter[k] = -bound;
            k += 1;
        }
    }
}

/// LLL reduction of the rows of `b` (δ = 3/4), in floating point.
fn lll(mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, c)| a * c).sum::<f64>();
    let gram_schmidt = |b: &Vec<Vec<f64>>| {
        let mut bs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut mu = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut v = b[i].clone();
            for j in 0..i {
                mu[i][j] = dot(&b[i], &bs[j]) / dot(&bs[j], &bs[j]);
                for (vk, bk) in v.iter_mut().zip(&bs[j]) {
                    *vk -= mu[i][j] * bk;
                }
            }
            bs.push(v);
        }
        (bs, mu)
    };
    let (mut bs, mut mu) = gram_schmidt(&b);
    let mut k = 1;
    let mut guard = 0;
    while k < n && guard < 100_000 {
        guard += 1;
        for j in (0..k).rev() {
            let q = mu[k][j].round();
            if q != 0.0 {
                let bj = b[j].clone();
                for (x, y) in b[k].iter_mut().zip(&bj) {
                    *x -= q * y;
                }
                let (nbs, nmu) = gram_schmidt(&b);
                bs = nbs;
                mu = nmu;
            }
        }
        if dot(&bs[k], &bs[k]) >= (0.75 - mu[k][k - 1] * mu[k][k - 1]) * dot(&bs[k - 1], &bs[k - 1]) {
            k += 1;
        } else {
            b.swap(k, k - 1);
            let (nbs, nmu) = gram_schmidt(&b);
            bs = nbs;
            mu = nmu;
            k = (k - 1).max(1);
        }
    }
    b
}

fn lattice_search(theta: &[f64], bound: i64, tol: f64) -> Option<Vec<i64>> {
    let n = theta.len();
    let norm = theta.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let weight = 1.0 / tol.max(1e-15 * norm);
    let basis: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n + 1];
            row[i] = 1.0;
            row[n] = weight * theta[i];
            row
        })
        .collect();
    let reduced = lll(basis);
    let mut best: Option<Vec<i64>> = None;
    for row in reduced {
        let s: Vec<i64> = row[..n].iter().map(|v| v.round() as i64).collect();
        if s.iter().all(|&c| c == 0) || s.iter().any(|c| c.abs() > bound) {
            continue;
        }
        if residual(theta, &s) <= tol {
            let s = normalise(s);
            if best.as_ref().is_none_or(|b| better(&s, b)) {
                best = Some(s);
            }
        }
    }
    best
}

/// A linear projection `π: ℝ^(n+1) → ℝⁿ` with a certified direction θ ⊥ ker π.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionChoice {
    /// n × (n+1) matrix with orthonormal rows.
    pub matrix: DMatrix<f64>,
    /// Unit generator p of the kernel.
    pub kernel: DVector<f64>,
    pub witness_theta: DVector<f64>,
    /// Embedded image of θ whose components are rationally independent.
    pub image_components: DVector<f64>,
    pub certificate: Independence,
    /// Normal of H′ = (π*)⁻¹H in ℝⁿ, namely π·h.
    pub hyperplane_image: DVector<f64>,
    pub trials_used: usize,
}

/// Orthonormal basis of p^⊥ as rows.
fn complement_rows(p: &DVector<f64>) -> DMatrix<f64> {
    let n1 = p.len();
    let proj = DMatrix::identity(n1, n1) - p * p.transpose() / p.norm_squared();
    let basis = crate::linalg::projector_range_basis(&proj);
    basis.transpose()
}

/// Checks one candidate (p, θ) and assembles the choice.
///
/// Fails when θ is not orthogonal to p, when the embedded image of θ has a
/// bounded integer relation, or when π*(ℝⁿ) = p^⊥ coincides with H.
pub fn certify_choice(
    embedding: &DMatrix<f64>,
    hyperplane_normal: &DVector<f64>,
    p: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<ProjectionChoice> {
    let n1 = p.len();
    if embedding.ncols() != n1 || hyperplane_normal.len() != n1 || theta.len() != n1 {
        return Err(Error::DimensionMismatch(format!(
            "embedding {}x{}, normal {}, p {n1}, θ {}",
            embedding.nrows(),
            embedding.ncols(),
            hyperplane_normal.len(),
            theta.len()
        )));
    }
    let p = p.normalize();
    let inner = theta.dot(&p);
    if inner.abs() > 1e-12 * theta.norm().max(1.0) {
        return Err(Error::InvalidArgument(format!("θ is not orthogonal to p (⟨θ,p⟩ = {inner:.3e})")));
    }
    let h = hyperplane_normal.normalize();
    if 1.0 - p.dot(&h).abs() <= 1e-9 {
        return Err(Error::InvalidArgument("π*(ℝⁿ) coincides with the hyperplane H".into()));
    }
    let image = embedding * theta;
    let certificate = rationally_independent(image.as_slice(), DEFAULT_COEFF_BOUND, None)?;
    if !certificate.is_independent() {
        return Err(Error::InvalidArgument(format!("image of θ is rationally dependent: {certificate:?}")));
    }
    let matrix = complement_rows(&p);
    Ok(ProjectionChoice {
        hyperplane_image: &matrix * &h,
        matrix,
        kernel: p,
        witness_theta: theta.clone(),
        image_components: image,
        certificate,
        trials_used: 1,
    })
}

/// Randomised search for a projection whose kernel is orthogonal to a
/// direction with rationally independent embedded image.
pub fn choose_good_projection(
    n_plus_1: usize,
    embedding: &DMatrix<f64>,
    hyperplane_normal: &DVector<f64>,
    trials: usize,
    seed: u64,
) -> Result<ProjectionChoice> {
    if n_plus_1 < 2 {
        return Err(Error::InvalidArgument(format!("n + 1 = {n_plus_1} < 2")));
    }
    if embedding.ncols() != n_plus_1 || hyperplane_normal.len() != n_plus_1 {
        return Err(Error::DimensionMismatch(format!(
            "embedding with {} columns and normal of length {} for n + 1 = {n_plus_1}",
            embedding.ncols(),
            hyperplane_normal.len()
        )));
    }
    let sv = embedding.clone().svd(false, false).singular_values;
    if embedding.nrows() < n_plus_1 || sv.min() <= 1e-12 * sv.max().max(1.0) {
        return Err(Error::InvalidArgument("embedding is not of full rank".into()));
    }
    if hyperplane_normal.norm() == 0.0 {
        return Err(Error::InvalidArgument("hyperplane normal is zero".into()));
    }
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let theta = DVector::from_iterator(n_plus_1, (0..n_plus_1).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        let p = if n_plus_1 == 2 {
            DVector::from_vec(vec![theta[1], -theta[0]])
        } else {
            let r: DVector<f64> = DVector::from_iterator(n_plus_1, (0..n_plus_1).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
            let t = theta.normalize();
            &r - &t * t.dot(&r)
        };
        if p.norm() < 1e-8 {
            continue;
        }
        let p = p.normalize();
        // Remove the rounding residue so that ⟨θ, p⟩ is at machine precision.
        let theta = &theta - &p * theta.dot(&p);
        if let Ok(mut choice) = certify_choice(embedding, hyperplane_normal, &p, &theta) {
            choice.trials_used = trial + 1;
            return Ok(choice);
        }
    }
    Err(Error::TrialsExhausted(trials))
}

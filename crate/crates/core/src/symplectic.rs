//! Linear symplectic algebra: frames, compatible complex structures, Hessian
//! signatures, isotropy weights of linear torus actions, and torus averaging.
//!
//! Conventions. A symplectic form is stored as a matrix `Ω` acting as an
//! operator, `ω(u, v) = vᵀ·Ω·u`, so that the standard form on ℝ² with
//! `ω(e₁, e₂) = 1` is the rotation generator `[[0, −1], [1, 0]]`. With metric
//! `G` the representing operator is `A = G⁻¹·Ω`, which satisfies
//! `ω(u, v) = ⟨A·u, v⟩_G`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, asymmetry, max_abs, skew_defect, sym_eigen_sorted};

const SKEW_TOL: f64 = 1e-12;
const SINGULAR_TOL: f64 = 1e-10;
const ADJOINT_TOL: f64 = 1e-10;
const GENERATOR_TOL: f64 = 1e-9;
const INV_SQRT_FLOOR: f64 = 1e-12;

/// A symplectic form together with an inner product and the skew-adjoint
/// operator linking them.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticFrame {
    dim: usize,
    omega: DMatrix<f64>,
    metric: DMatrix<f64>,
    a_operator: DMatrix<f64>,
}

impl SymplecticFrame {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    pub fn a_operator(&self) -> &DMatrix<f64> {
        &self.a_operator
    }

    /// ω(u, v) = vᵀ·Ω·u.
    pub fn omega_eval(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.omega * u))
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.metric * v))
    }
}

/// Builds a frame from a skew, invertible `omega` and an SPD `metric`.
pub fn build_frame(omega: DMatrix<f64>, metric: DMatrix<f64>) -> Result<SymplecticFrame> {
    let dim = omega.nrows();
    if omega.ncols() != dim || metric.nrows() != dim || metric.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "omega {}x{}, metric {}x{}",
            omega.nrows(),
            omega.ncols(),
            metric.nrows(),
            metric.ncols()
        )));
    }
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!("dimension {dim} is not even and positive")));
    }
    let skew = skew_defect(&omega);
    if skew > SKEW_TOL * (1.0 + max_abs(&omega)) {
        return Err(Error::NotSkew(skew));
    }
    let smallest_sv = omega.singular_values().min();
    if smallest_sv < SINGULAR_TOL {
        return Err(Error::SingularForm(smallest_sv));
    }
    let sym = asymmetry(&metric);
    if sym > SKEW_TOL * (1.0 + max_abs(&metric)) {
        return Err(Error::NotSymmetric(sym));
    }
    let (eig, _) = sym_eigen_sorted(&metric);
    if eig[0] <= SINGULAR_TOL {
        return Err(Error::NotPositiveDefinite(eig[0]));
    }
    let metric_inv = metric
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite(eig[0]))?;
    let a_operator = &metric_inv * &omega;
    let frame = SymplecticFrame { dim, omega, metric, a_operator };
    let defect = max_abs(&(&frame.metric * &frame.a_operator + frame.a_operator.transpose() * &frame.metric));
    if defect > ADJOINT_TOL * (1.0 + max_abs(&frame.omega)) {
        return Err(Error::NotSkew(defect));
    }
    Ok(frame)
}

/// A complex structure `J` with `J² = −I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexStructure {
    pub j: DMatrix<f64>,
}

/// The polar factor `J = (A·A*)^(−1/2)·A`, adjoints taken in the frame metric.
///
/// Computed in metric-orthonormal coordinates `Ã = S·A·S⁻¹` with `S = G^(1/2)`,
/// where `A* = Ãᵀ` and `Ã·Ãᵀ` is symmetric positive definite.
pub fn compatible_complex_structure(frame: &SymplecticFrame) -> Result<ComplexStructure> {
    let s = linalg::spd_sqrt(&frame.metric);
    let s_inv = linalg::spd_inv_sqrt(&frame.metric, INV_SQRT_FLOOR)?;
    let a_tilde = &s * &frame.a_operator * &s_inv;
    let aat = &a_tilde * a_tilde.transpose();
    let (eig, _) = sym_eigen_sorted(&aat);
    let scale = eig[eig.len() - 1].max(1.0);
    if eig[0] < INV_SQRT_FLOOR * scale {
        return Err(Error::DegenerateFrame(eig[0]));
    }
    let inv_sqrt = linalg::spd_inv_sqrt(&aat, INV_SQRT_FLOOR)?;
    let j_tilde = inv_sqrt * a_tilde;
    Ok(ComplexStructure { j: s_inv * j_tilde * s })
}

/// Sorted spectrum of a symmetric matrix with index/coindex counts.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianSpectrum {
    pub eigenvalues: Vec<f64>,
    pub index: usize,
    pub coindex: usize,
    pub degenerate: bool,
    pub tolerance: f64,
}

impl HessianSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn smallest_magnitude(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min)
    }
}

/// Default degeneracy tolerance: `1e-8 · max|λ|`.
pub fn hessian_spectrum(h: &DMatrix<f64>, tol: Option<f64>) -> Result<HessianSpectrum> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch(format!("hessian {}x{}", h.nrows(), h.ncols())));
    }
    let asym = asymmetry(h);
    if asym > 1e-10 * (1.0 + max_abs(h)) {
        return Err(Error::NotSymmetric(asym));
    }
    let (values, _) = sym_eigen_sorted(h);
    let largest = values.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let tolerance = tol.unwrap_or(1e-8 * largest);
    let index = values.iter().filter(|&&l| l < -tolerance).count();
    let coindex = values.iter().filter(|&&l| l > tolerance).count();
    let degenerate = values.iter().any(|l| l.abs() <= tolerance);
    Ok(HessianSpectrum { eigenvalues: values.iter().copied().collect(), index, coindex, degenerate, tolerance })
}

/// Weights of a linear torus representation, one per invariant 2-plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsotropyWeights {
    pub weights: Vec<Vec<i64>>,
    pub fixed_dim: usize,
}

impl IsotropyWeights {
    /// Hessian eigenvalues of the quadratic momentum model: each weight α
    /// contributes the pair `−⟨α, ξ⟩` and the fixed summand contributes zeros.
    /// These are exact when the metric is compatible (`A·A* = I`).
    pub fn quadratic_model_eigenvalues(&self, xi: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.weights.len() + self.fixed_dim);
        for alpha in &self.weights {
            let pairing: f64 = alpha.iter().zip(xi).map(|(&a, &x)| a as f64 * x).sum();
            out.push(-pairing);
            out.push(-pairing);
        }
        out.extend(std::iter::repeat_n(0.0, self.fixed_dim));
        out.sort_by(f64::total_cmp);
        out
    }
}

/// Hessian of the quadratic momentum `μ(z) = ½·ω(L·z, z)` of a linear
/// Hamiltonian generator `L`, as a symmetric matrix in the frame coordinates.
pub fn linear_momentum_hessian(frame: &SymplecticFrame, generator: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::symmetrize(&(&frame.omega * generator))
}

fn check_generators(frame: &SymplecticFrame, generators: &[DMatrix<f64>]) -> Result<()> {
    let dim = frame.dim;
    for (i, l) in generators.iter().enumerate() {
        if l.nrows() != dim || l.ncols() != dim {
            return Err(Error::DimensionMismatch(format!("generator {i} is {}x{}", l.nrows(), l.ncols())));
        }
        let residual = max_abs(&(l.transpose() * &frame.omega + &frame.omega * l));
        if residual > GENERATOR_TOL * (1.0 + max_abs(l) * max_abs(&frame.omega)) {
            return Err(Error::NotSymplectic { index: i, residual });
        }
    }
    for i in 0..generators.len() {
        for k in (i + 1)..generators.len() {
            let c = &generators[i] * &generators[k] - &generators[k] * &generators[i];
            let residual = max_abs(&c);
            if residual > GENERATOR_TOL * (1.0 + max_abs(&generators[i]) * max_abs(&generators[k])) {
                return Err(Error::NotCommuting(i, k, residual));
            }
        }
    }
    Ok(())
}

/// Integer weights of a commuting family of infinitesimally symplectic
/// generators.
///
/// The metric is first averaged over the torus so that every generator is
/// skew-adjoint. With the compatible `J` of the averaged frame, each generator
/// acts on a weight space `V_α` as `L_j = α_j·J`, so the weights are the
/// eigenvalues of the commuting symmetric operators `−J·L_j` (in orthonormal
/// coordinates), read off by simultaneous diagonalisation.
pub fn isotropy_weights(frame: &SymplecticFrame, generators: &[DMatrix<f64>]) -> Result<IsotropyWeights> {
    check_generators(frame, generators)?;
    let dim = frame.dim;
    if generators.iter().all(|l| max_abs(l) == 0.0) {
        return Ok(IsotropyWeights { weights: Vec::new(), fixed_dim: dim });
    }

    let invariant = generators.iter().all(|l| {
        max_abs(&(&frame.metric * l + l.transpose() * &frame.metric)) <= 1e-10 * (1.0 + max_abs(l))
    });
    let frame = if invariant {
        frame.clone()
    } else {
        for (i, l) in generators.iter().enumerate() {
            let period = (l * (2.0 * PI)).exp();
            let err = max_abs(&(period - DMatrix::identity(dim, dim)));
            if err > 1e-8 {
                return Err(Error::InvalidArgument(format!(
                    "generator {i} does not integrate to a circle action (exp(2πL) − I = {err:.3e})"
                )));
            }
        }
        let grid = TorusGrid::new(generators, 32)?;
        build_frame(frame.omega.clone(), grid.average_metric(&frame.metric))?
    };

    let j = compatible_complex_structure(&frame)?.j;
    let s = linalg::spd_sqrt(&frame.metric);
    let s_inv = linalg::spd_inv_sqrt(&frame.metric, INV_SQRT_FLOOR)?;
    let j_t = &s * &j * &s_inv;
    let ops: Vec<DMatrix<f64>> = generators
        .iter()
        .map(|l| linalg::symmetrize(&(-(&j_t * (&s * l * &s_inv)))))
        .collect();

    // Generic combination separating the joint eigenspaces.
    let coeffs: Vec<f64> = [2.0_f64, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0]
        .iter()
        .cycle()
        .take(ops.len())
        .enumerate()
        .map(|(i, p)| p.sqrt() * (1.0 + 0.1 * i as f64))
        .collect();
    let mut combined = DMatrix::zeros(dim, dim);
    for (c, op) in coeffs.iter().zip(&ops) {
        combined += op * *c;
    }
    let (values, vectors) = sym_eigen_sorted(&combined);
    let scale = values.iter().map(|v| v.abs()).fold(1.0, f64::max);

    let mut weights = Vec::new();
    let mut fixed_dim = 0;
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && (values[end] - values[start]).abs() <= 1e-7 * scale {
            end += 1;
        }
        let v = vectors.column(start).into_owned();
        let mut alpha = Vec::with_capacity(ops.len());
        for op in &ops {
            let raw = v.dot(&(op * &v));
            let rounded = raw.round();
            if (raw - rounded).abs() > 1e-6 * (1.0 + raw.abs()) {
                return Err(Error::NonIntegralWeight(raw));
            }
            alpha.push(rounded as i64);
        }
        let mult = end - start;
        if alpha.iter().all(|&a| a == 0) {
            fixed_dim += mult;
        } else {
            if mult % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "weight space for {alpha:?} has odd real dimension {mult}"
                )));
            }
            weights.extend(std::iter::repeat_n(alpha, mult / 2));
        }
        start = end;
    }
    weights.sort();
    Ok(IsotropyWeights { weights, fixed_dim })
}

/// Uniform product grid on the torus generated by commuting circle generators.
#[derive(Debug, Clone)]
pub struct TorusGrid {
    elements: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl TorusGrid {
    pub fn new(generators: &[DMatrix<f64>], quadrature_points: usize) -> Result<Self> {
        if quadrature_points < 4 {
            return Err(Error::InvalidArgument(format!("quadrature_points = {quadrature_points} < 4")));
        }
        let Some(first) = generators.first() else {
            return Err(Error::InvalidArgument("torus of dimension zero".into()));
        };
        let dim = first.nrows();
        let torus_dim = generators.len();
        let total = quadrature_points.pow(torus_dim as u32);
        let step = 2.0 * PI / quadrature_points as f64;
        let mut elements = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut algebra = DMatrix::zeros(dim, dim);
            for l in generators {
                let idx = rem % quadrature_points;
                rem /= quadrature_points;
                algebra += l * (idx as f64 * step);
            }
            let g = algebra.clone().exp();
            let g_inv = (-algebra).exp();
            elements.push((g, g_inv));
        }
        Ok(Self { elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Σ gᵀ·G·g / N, an inner product for which every grid element is an isometry
    /// up to quadrature error.
    pub fn average_metric(&self, metric: &DMatrix<f64>) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(metric.nrows(), metric.ncols());
        for (g, _) in &self.elements {
            acc += g.transpose() * metric * g;
        }
        linalg::symmetrize(&(acc / self.elements.len() as f64))
    }
}

/// Torus average `u ↦ (1/N^d)·Σ g·F(g⁻¹·u)` of a point map.
pub struct AveragedMap<F> {
    map: F,
    grid: TorusGrid,
}

impl<F> AveragedMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    pub fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut acc = DVector::zeros(u.len());
        for (g, g_inv) in &self.grid.elements {
            acc += g * (self.map)(&(g_inv * u));
        }
        acc / self.grid.len() as f64
    }
}

pub fn group_average<F>(map: F, generators: &[DMatrix<f64>], quadrature_points: usize) -> Result<AveragedMap<F>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    Ok(AveragedMap { map, grid: TorusGrid::new(generators, quadrature_points)? })
}

//! Fourier-truncated based loops in SU(2).
//!
//! A loop of degree K is `γ(θ) = exp(ξ(θ))` with
//! `ξ(θ) = Σ_k a_k·sin(kθ) + b_k·(cos(kθ) − 1)`, so `γ(0) = 1`. Algebra
//! elements are real 3-vectors in the orthonormal basis {X, Y, H} of su(2)
//! for `⟨U, V⟩ = −½·tr(UV)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::convexity::{self, ConvexityReport, Tolerance};
use crate::error::{Error, Result};

pub type Algebra = [f64; 3];

/// Default evaluation grid.
pub const DEFAULT_GRID: usize = 512;

/// A quaternion-form 2×2 complex matrix `[[α, β], [−β̄, ᾱ]]`.
/// Unit determinant elements are SU(2); the same form holds su(2) elements and
/// derivatives of SU(2) paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2 {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl Su2 {
    pub fn identity() -> Self {
        Self { alpha: Complex64::new(1.0, 0.0), beta: Complex64::new(0.0, 0.0) }
    }

    pub fn mul(&self, o: &Su2) -> Su2 {
        Su2 {
            alpha: self.alpha * o.alpha - self.beta * o.beta.conj(),
            beta: self.alpha * o.beta + self.beta * o.alpha.conj(),
        }
    }

    /// Conjugate transpose; the inverse for SU(2) elements.
    pub fn adjoint(&self) -> Su2 {
        Su2 { alpha: self.alpha.conj(), beta: -self.beta }
    }

    pub fn det(&self) -> f64 {
        self.alpha.norm_sqr() + self.beta.norm_sqr()
    }

    /// The element `xX + yY + hH` of su(2).
    pub fn from_algebra(v: &Algebra) -> Su2 {
        Su2 { alpha: Complex64::new(0.0, v[2]), beta: Complex64::new(v[0], v[1]) }
    }

    /// Coordinates in {X, Y, H}, ignoring the real part of α.
    pub fn to_algebra(&self) -> Algebra {
        [self.beta.re, self.beta.im, self.alpha.im]
    }

    pub fn exp(v: &Algebra) -> Su2 {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let sinc = if r < 1e-8 { 1.0 - r * r / 6.0 } else { r.sin() / r };
        Su2 { alpha: Complex64::new(r.cos(), v[2] * sinc), beta: Complex64::new(v[0] * sinc, v[1] * sinc) }
    }

    /// Largest entry of |γᴴγ − I|.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.det();
        // γᴴγ = diag(|α|² + |β|², |α|² + |β|²) for quaternion form.
        (n - 1.0).abs()
    }

    pub fn distance(&self, o: &Su2) -> f64 {
        ((self.alpha - o.alpha).norm_sqr() + (self.beta - o.beta).norm_sqr()).sqrt()
    }

    /// Real entries (Re α, Im α, Re β, Im β).
    pub fn entries(&self) -> [f64; 4] {
        [self.alpha.re, self.alpha.im, self.beta.re, self.beta.im]
    }

    fn from_entries(e: [f64; 4]) -> Su2 {
        Su2 { alpha: Complex64::new(e[0], e[1]), beta: Complex64::new(e[2], e[3]) }
    }
}

/// Lie bracket in {X, Y, H} coordinates: [H,X] = 2Y, [H,Y] = −2X, [X,Y] = 2H.
pub fn bracket(u: &Algebra, v: &Algebra) -> Algebra {
    [2.0 * (u[1] * v[2] - u[2] * v[1]), 2.0 * (u[2] * v[0] - u[0] * v[2]), 2.0 * (u[0] * v[1] - u[1] * v[0])]
}

pub fn inner(u: &Algebra, v: &Algebra) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

/// A based loop with finite Fourier series in the exponential chart.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierLoop {
    degree: usize,
    /// `coeffs[2(k−1)] = a_k`, `coeffs[2(k−1)+1] = b_k`.
    coeffs: Vec<Algebra>,
    grid_n: usize,
}

impl FourierLoop {
    pub fn new(degree: usize, coeffs: Vec<Algebra>, grid_n: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidArgument("loop degree must be at least 1".into()));
        }
        if coeffs.len() != 2 * degree {
            return Err(Error::DimensionMismatch(format!("{} coefficients for degree {degree}", coeffs.len())));
        }
        if grid_n < 8 * degree {
            return Err(Error::GridTooCoarse { grid_n, degree });
        }
        Ok(Self { degree, coeffs, grid_n })
    }

    pub fn zero(degree: usize, grid_n: usize) -> Result<Self> {
        Self::new(degree, vec![[0.0; 3]; 2 * degree], grid_n)
    }

    /// Builds a loop from the flat coefficient vector (a_1, b_1, …, a_K, b_K).
    pub fn from_flat(degree: usize, flat: &[f64], grid_n: usize) -> Result<Self> {
        if flat.len() != 6 * degree {
            return Err(Error::DimensionMismatch(format!("{} coefficients for degree {degree}", flat.len())));
        }
        let coeffs = flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(degree, coeffs, grid_n)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn a(&self, k: usize) -> &Algebra {
        &self.coeffs[2 * (k - 1)]
    }

    pub fn b(&self, k: usize) -> &Algebra {
        &self.coeffs[2 * (k - 1) + 1]
    }

    pub fn flat(&self) -> Vec<f64> {
        self.coeffs.iter().flatten().copied().collect()
    }

    /// The algebra path ξ(θ).
    pub fn algebra_path(&self, theta: f64) -> Algebra {
        let mut out = [0.0; 3];
        for k in 1..=self.degree {
            let s = (k as f64 * theta).sin();
            let c = (k as f64 * theta).cos() - 1.0;
            let (a, b) = (self.a(k), self.b(k));
            for i in 0..3 {
                out[i] += a[i] * s + b[i] * c;
            }
        }
        out
    }

    /// Random loop with Gaussian coefficients of scale σ/k².
    pub fn random<R: rand::Rng + ?Sized>(degree: usize, sigma: f64, grid_n: usize, rng: &mut R) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(2 * degree);
        for k in 1..=degree {
            let normal = Normal::new(0.0, sigma / (k * k) as f64)
                .map_err(|e| Error::InvalidArgument(format!("loop scale: {e}")))?;
            for _ in 0..2 {
                coeffs.push([normal.sample(rng), normal.sample(rng), normal.sample(rng)]);
            }
        }
        Self::new(degree, coeffs, grid_n)
    }
}

/// Loop values on the uniform grid θ_i = 2πi/N.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopValues {
    pub values: Vec<Su2>,
}

impl LoopValues {
    pub fn grid_n(&self) -> usize {
        self.values.len()
    }

    pub fn theta(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.values.len() as f64
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.values.iter().map(Su2::unitarity_defect).fold(0.0, f64::max)
    }

    pub fn max_distance(&self, other: &LoopValues) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.distance(b)).fold(0.0, f64::max)
    }

    /// Writes `theta,re_alpha,im_alpha,re_beta,im_beta` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,re_alpha,im_alpha,re_beta,im_beta")?;
        for (i, g) in self.values.iter().enumerate() {
            let e = g.entries();
            writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", self.theta(i), e[0], e[1], e[2], e[3])?;
        }
        Ok(())
    }
}

pub fn loop_eval(lp: &FourierLoop) -> Result<LoopValues> {
    if lp.grid_n < 8 * lp.degree {
        return Err(Error::GridTooCoarse { grid_n: lp.grid_n, degree: lp.degree });
    }
    let n = lp.grid_n;
    let values = (0..n).map(|i| Su2::exp(&lp.algebra_path(2.0 * PI * i as f64 / n as f64))).collect();
    Ok(LoopValues { values })
}

/// The homomorphism γ_k(θ) = exp(kθH), evaluated in closed form.
pub fn homomorphism(k: i64, grid_n: usize) -> LoopValues {
    let values = (0..grid_n)
        .map(|i| {
            let t = k as f64 * 2.0 * PI * i as f64 / grid_n as f64;
            Su2 { alpha: Complex64::new(t.cos(), t.sin()), beta: Complex64::new(0.0, 0.0) }
        })
        .collect();
    LoopValues { values }
}

/// Spectral derivative d/dθ of a real periodic sample sequence on [0, 2π).
/// The Nyquist mode is dropped.
pub fn spectral_derivative(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        let freq = if 2 * j < n {
            j as f64
        } else if 2 * j == n {
            0.0
        } else {
            j as f64 - n as f64
        };
        *c *= Complex64::new(0.0, freq);
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Trigonometric interpolation of a real periodic sequence, shifted by φ:
/// returns samples of s ↦ f(s + φ).
fn spectral_shift(samples: &[f64], phi: f64) -> Vec<f64> {
    let n = samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        if 2 * j == n {
            *c *= (phi * j as f64).cos();
            continue;
        }
        let freq = if 2 * j < n { j as f64 } else { j as f64 - n as f64 };
        *c *= Complex64::from_polar(1.0, freq * phi);
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn componentwise(values: &LoopValues, op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Su2> {
    let n = values.grid_n();
    let mut columns = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (i, g) in values.values.iter().enumerate() {
        for (c, e) in g.entries().iter().enumerate() {
            columns[c][i] = *e;
        }
    }
    let mapped: Vec<Vec<f64>> = columns.iter().map(|c| op(c)).collect();
    (0..n).map(|i| Su2::from_entries([mapped[0][i], mapped[1][i], mapped[2][i], mapped[3][i]])).collect()
}

/// Right logarithmic derivative γ′γ⁻¹ at every grid node.
pub fn log_derivative(values: &LoopValues) -> Vec<Algebra> {
    let deriv = componentwise(values, spectral_derivative);
    deriv.iter().zip(&values.values).map(|(d, g)| d.mul(&g.adjoint()).to_algebra()).collect()
}

/// Energy (1/4π)∫‖γ′γ⁻¹‖² dθ.
pub fn energy(values: &LoopValues) -> f64 {
    let g = log_derivative(values);
    0.5 * g.iter().map(|v| inner(v, v)).sum::<f64>() / g.len() as f64
}

/// H-component of the average logarithmic derivative.
pub fn momentum_t(values: &LoopValues) -> f64 {
    let g = log_derivative(values);
    g.iter().map(|v| v[2]).sum::<f64>() / g.len() as f64
}

/// `(p, E)` for a loop.
pub fn momentum_pair(values: &LoopValues) -> (f64, f64) {
    let g = log_derivative(values);
    let n = g.len() as f64;
    let p = g.iter().map(|v| v[2]).sum::<f64>() / n;
    let e = 0.5 * g.iter().map(|v| inner(v, v)).sum::<f64>() / n;
    (p, e)
}

/// `(p, E)` of the loop with flat coefficients `flat`. Panics only on a
/// coefficient vector of the wrong length.
pub fn coefficient_momentum(degree: usize, flat: &[f64], grid_n: usize) -> (f64, f64) {
    let lp = FourierLoop::from_flat(degree, flat, grid_n).expect("coefficient vector matches degree");
    momentum_pair(&loop_eval(&lp).expect("grid checked at construction"))
}

fn tangent_derivative(path: &[Algebra]) -> Vec<Algebra> {
    let n = path.len();
    let mut out = vec![[0.0; 3]; n];
    for c in 0..3 {
        let col: Vec<f64> = path.iter().map(|v| v[c]).collect();
        for (i, d) in spectral_derivative(&col).into_iter().enumerate() {
            out[i][c] = d;
        }
    }
    out
}

/// ω(γ, η) = (1/2π)∫⟨γ′, η⟩ dθ on algebra-valued grid paths.
pub fn loop_symplectic_form(gamma: &[Algebra], eta: &[Algebra]) -> Result<f64> {
    if gamma.len() != eta.len() {
        return Err(Error::GridMismatch(gamma.len(), eta.len()));
    }
    if gamma.is_empty() {
        return Ok(0.0);
    }
    let dg = tangent_derivative(gamma);
    Ok(dg.iter().zip(eta).map(|(a, b)| inner(a, b)).sum::<f64>() / gamma.len() as f64)
}

/// ⟨γ, η⟩ = (1/2π)∫⟨γ, η⟩ dθ + (1/2π)∫⟨γ′, η′⟩ dθ.
pub fn h1_inner_product(gamma: &[Algebra], eta: &[Algebra]) -> Result<f64> {
    if gamma.len() != eta.len() {
        return Err(Error::GridMismatch(gamma.len(), eta.len()));
    }
    if gamma.is_empty() {
        return Ok(0.0);
    }
    let dg = tangent_derivative(gamma);
    let de = tangent_derivative(eta);
    let n = gamma.len() as f64;
    let l2: f64 = gamma.iter().zip(eta).map(|(a, b)| inner(a, b)).sum();
    let d2: f64 = dg.iter().zip(&de).map(|(a, b)| inner(a, b)).sum();
    Ok((l2 + d2) / n)
}

/// Tangent path at the constant loop for a coefficient direction.
pub fn coefficient_tangent_path(degree: usize, flat: &[f64], grid_n: usize) -> Result<Vec<Algebra>> {
    let lp = FourierLoop::from_flat(degree, flat, grid_n)?;
    Ok((0..grid_n).map(|i| lp.algebra_path(2.0 * PI * i as f64 / grid_n as f64)).collect())
}

/// Symplectic operator of the left-invariant loop form at the loop with
/// coefficients `flat`, pulled back through the exponential chart:
/// `W[v, u] = ω(γ⁻¹·δ_u γ, γ⁻¹·δ_v γ)` with `δ_u γ` the derivative of the loop
/// along the coefficient direction u. At the constant loop this is
/// [`tangent_form_matrix`].
pub fn tangent_form_at(degree: usize, flat: &[f64], grid_n: usize) -> Result<DMatrix<f64>> {
    const H: f64 = 1e-6;
    let m = 6 * degree;
    let base = loop_eval(&FourierLoop::from_flat(degree, flat, grid_n)?)?;
    let mut paths = Vec::with_capacity(m);
    for j in 0..m {
        let mut plus = flat.to_vec();
        let mut minus = flat.to_vec();
        plus[j] += H;
        minus[j] -= H;
        let vp = loop_eval(&FourierLoop::from_flat(degree, &plus, grid_n)?)?;
        let vm = loop_eval(&FourierLoop::from_flat(degree, &minus, grid_n)?)?;
        let path: Vec<Algebra> = (0..grid_n)
            .map(|i| {
                let (a, b) = (vp.values[i].entries(), vm.values[i].entries());
                let d = Su2::from_entries([0, 1, 2, 3].map(|c| (a[c] - b[c]) / (2.0 * H)));
                base.values[i].adjoint().mul(&d).to_algebra()
            })
            .collect();
        paths.push(path);
    }
    let derivs: Vec<Vec<Algebra>> = paths.iter().map(|p| tangent_derivative(p)).collect();
    let mut w = DMatrix::zeros(m, m);
    for u in 0..m {
        for v in 0..m {
            w[(v, u)] = derivs[u].iter().zip(&paths[v]).map(|(a, b)| inner(a, b)).sum::<f64>() / grid_n as f64;
        }
    }
    Ok((&w - w.transpose()) * 0.5)
}

fn a_index(k: usize, c: usize) -> usize {
    6 * (k - 1) + c
}

fn b_index(k: usize, c: usize) -> usize {
    6 * (k - 1) + 3 + c
}

/// Symplectic operator of the loop form on coefficient space at the constant
/// loop, with `ω(u, v) = vᵀ·W·u`. Pairs a_k against b_k with weight k/2.
pub fn tangent_form_matrix(degree: usize) -> DMatrix<f64> {
    let m = 6 * degree;
    let mut w = DMatrix::zeros(m, m);
    for k in 1..=degree {
        for c in 0..3 {
            w[(b_index(k, c), a_index(k, c))] = k as f64 / 2.0;
            w[(a_index(k, c), b_index(k, c))] = -(k as f64) / 2.0;
        }
    }
    w
}

/// Linearized loop rotation on coefficient space: ξ ↦ ξ′ − ξ′(0).
pub fn rotation_generator(degree: usize) -> DMatrix<f64> {
    let m = 6 * degree;
    let mut l = DMatrix::zeros(m, m);
    for k in 1..=degree {
        for c in 0..3 {
            l[(b_index(k, c), a_index(k, c))] = k as f64;
            l[(a_index(k, c), b_index(k, c))] = -(k as f64);
        }
    }
    l
}

/// Infinitesimal conjugation by exp(sH): each coefficient goes to [H, ·].
pub fn conjugation_generator(degree: usize) -> DMatrix<f64> {
    let m = 6 * degree;
    let mut l = DMatrix::zeros(m, m);
    for block in 0..2 * degree {
        let o = 3 * block;
        l[(o + 1, o)] = 2.0;
        l[(o, o + 1)] = -2.0;
    }
    l
}

/// `(e^{iφ}γ)(s) = γ(s + φ)·γ(φ)⁻¹`. Grid multiples of φ shift exactly;
/// other angles go through trigonometric interpolation.
pub fn rotate_loop(phi: f64, values: &LoopValues) -> LoopValues {
    let n = values.grid_n();
    let steps = phi * n as f64 / (2.0 * PI);
    let shifted: Vec<Su2> = if (steps - steps.round()).abs() < 1e-9 {
        let s = (steps.round() as i64).rem_euclid(n as i64) as usize;
        (0..n).map(|i| values.values[(i + s) % n]).collect()
    } else {
        componentwise(values, |c| spectral_shift(c, phi))
    };
    let base = shifted[0];
    let base_inv = {
        let d = base.det().sqrt();
        Su2 { alpha: base.alpha / d, beta: base.beta / d }.adjoint()
    };
    LoopValues { values: shifted.iter().map(|g| g.mul(&base_inv)).collect() }
}

/// Pointwise conjugation by t = exp(s·H).
pub fn conjugate_loop(s: f64, values: &LoopValues) -> LoopValues {
    let t = Su2::exp(&[0.0, 0.0, s]);
    let ti = t.adjoint();
    LoopValues { values: values.values.iter().map(|g| t.mul(g).mul(&ti)).collect() }
}

/// A homomorphism loop with its momentum image.
#[derive(Debug, Clone)]
pub struct FixedLoop {
    pub k: i64,
    pub values: LoopValues,
    pub image: (f64, f64),
    /// Largest deviation under the sample rotations and conjugations tried.
    pub fixed_residual: f64,
}

/// The loops γ_k for |k| ≤ K with their images (p, E) = (k, k²/2).
pub fn fixed_point_loops(degree: usize, grid_n: usize) -> Result<Vec<FixedLoop>> {
    if degree == 0 {
        return Err(Error::InvalidArgument("degree must be at least 1".into()));
    }
    let k_max = degree as i64;
    let mut out = Vec::new();
    for k in -k_max..=k_max {
        let values = homomorphism(k, grid_n);
        let mut residual: f64 = 0.0;
        for &phi in &[0.7, 2.0 * PI / grid_n as f64 * 3.0] {
            residual = residual.max(rotate_loop(phi, &values).max_distance(&values));
        }
        for &s in &[0.4, -1.3] {
            residual = residual.max(conjugate_loop(s, &values).max_distance(&values));
        }
        let image = momentum_pair(&values);
        out.push(FixedLoop { k, values, image, fixed_residual: residual });
    }
    Ok(out)
}

/// Lower convex envelope of {(k, k²/2)} at p: the chord between the
/// neighbouring integers, extended linearly past ±K.
pub fn fixed_image_envelope(degree: usize, p: f64) -> f64 {
    let k_max = degree as f64;
    let k = p.floor().clamp(-k_max, k_max - 1.0);
    let (e0, e1) = (k * k / 2.0, (k + 1.0) * (k + 1.0) / 2.0);
    e0 + (e1 - e0) * (p - k)
}

/// Sampled momentum image of random loops.
#[derive(Debug, Clone)]
pub struct LoopMomentumImage {
    pub points: Vec<(f64, f64)>,
    pub fixed_images: Vec<(i64, f64)>,
}

impl LoopMomentumImage {
    /// Writes `p,E,loop_id` rows; fixed images carry ids `fixed_k`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "p,E,loop_id")?;
        for (i, (p, e)) in self.points.iter().enumerate() {
            writeln!(w, "{p:.17e},{e:.17e},{i}")?;
        }
        for (k, e) in &self.fixed_images {
            writeln!(w, "{:.17e},{e:.17e},fixed_{k}", *k as f64)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LoopExperimentConfig {
    pub degree: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub grid_n: usize,
    pub sigma: f64,
    pub pair_trials: usize,
    pub tolerance: Tolerance,
    /// Slack allowed below the envelope of fixed images.
    pub envelope_tol: f64,
}

impl LoopExperimentConfig {
    pub fn new(degree: usize, sample_count: usize, seed: u64) -> Self {
        Self {
            degree,
            sample_count,
            seed,
            grid_n: (8 * degree).max(128),
            sigma: 1.0,
            pair_trials: 1000,
            tolerance: Tolerance::cloud_relative(),
            envelope_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoopExperiment {
    pub image: LoopMomentumImage,
    pub report: ConvexityReport,
    pub envelope_violations: usize,
    /// Smallest E − envelope(p) over the samples.
    pub min_envelope_gap: f64,
    /// Smallest E − p²/2 over the samples.
    pub min_cauchy_schwarz_gap: f64,
    pub pass: bool,
}

pub fn loop_momentum_experiment(cfg: &LoopExperimentConfig) -> Result<LoopExperiment> {
    if cfg.degree == 0 {
        return Err(Error::InvalidArgument("degree must be at least 1".into()));
    }
    let points: Vec<(f64, f64)> = (0..cfg.sample_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let lp = FourierLoop::random(cfg.degree, cfg.sigma, cfg.grid_n, &mut rng)?;
            Ok(momentum_pair(&loop_eval(&lp)?))
        })
        .collect::<Result<_>>()?;
    let fixed = fixed_point_loops(cfg.degree, cfg.grid_n)?;
    let fixed_images: Vec<(i64, f64)> = fixed.iter().map(|f| (f.k, f.image.1)).collect();

    let mut min_envelope_gap = f64::INFINITY;
    let mut min_cs_gap = f64::INFINITY;
    let mut envelope_violations = 0;
    for &(p, e) in &points {
        let gap = e - fixed_image_envelope(cfg.degree, p);
        min_envelope_gap = min_envelope_gap.min(gap);
        min_cs_gap = min_cs_gap.min(e - p * p / 2.0);
        if gap < -cfg.envelope_tol {
            envelope_violations += 1;
        }
    }

    let mut cloud: Vec<DVector<f64>> = points.iter().map(|&(p, e)| DVector::from_vec(vec![p, e])).collect();
    let fixed_vecs: Vec<DVector<f64>> = fixed.iter().map(|f| DVector::from_vec(vec![f.image.0, f.image.1])).collect();
    cloud.extend(fixed_vecs.iter().cloned());
    let mut report = convexity::verify_convexity(&cloud, cfg.pair_trials, cfg.tolerance, cfg.seed);
    report.fixed_images = fixed_vecs;
    let pass = report.pass && envelope_violations == 0;
    Ok(LoopExperiment {
        image: LoopMomentumImage { points, fixed_images },
        report,
        envelope_violations,
        min_envelope_gap,
        min_cauchy_schwarz_gap: min_cs_gap,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const N: usize = 512;

    fn random_loop(seed: u64, degree: usize, grid_n: usize) -> FourierLoop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FourierLoop::random(degree, 1.0, grid_n, &mut rng).unwrap()
    }

    #[test]
    fn group_law() {
        let g = Su2::exp(&[0.3, -0.2, 0.9]);
        let h = Su2::exp(&[-1.1, 0.4, 0.2]);
        assert!(g.mul(&g.adjoint()).distance(&Su2::identity()) < 1e-15);
        assert!((g.mul(&h).det() - 1.0).abs() < 1e-14);
        // exp of a multiple of H is diagonal.
        let t = Su2::exp(&[0.0, 0.0, 0.5]);
        assert!((t.alpha - Complex64::from_polar(1.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn bracket_relations() {
        let (x, y, h) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
        assert_eq!(bracket(&h, &x), [0.0, 2.0, 0.0]);
        assert_eq!(bracket(&h, &y), [-2.0, 0.0, 0.0]);
        assert_eq!(bracket(&x, &y), [0.0, 0.0, 2.0]);
        // agrees with the matrix commutator
        let u = [0.3, -0.7, 1.2];
        let v = [-0.4, 0.1, 0.5];
        let (mu, mv) = (Su2::from_algebra(&u), Su2::from_algebra(&v));
        let uv = mu.mul(&mv);
        let vu = mv.mul(&mu);
        let comm = Su2 { alpha: uv.alpha - vu.alpha, beta: uv.beta - vu.beta };
        let b = bracket(&u, &v);
        let c = comm.to_algebra();
        for i in 0..3 {
            assert!((b[i] - c[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn eval_examples() {
        let zero = FourierLoop::zero(2, 64).unwrap();
        let vals = loop_eval(&zero).unwrap();
        assert!(vals.values.iter().all(|g| g.distance(&Su2::identity()) == 0.0));

        let mut coeffs = vec![[0.0; 3]; 2];
        coeffs[0] = [0.1, 0.0, 0.0];
        let lp = FourierLoop::new(1, coeffs, 64).unwrap();
        let vals = loop_eval(&lp).unwrap();
        for (i, g) in vals.values.iter().enumerate() {
            let want = Su2::exp(&[0.1 * vals.theta(i).sin(), 0.0, 0.0]);
            assert!(g.distance(&want) < 1e-10);
        }
        assert!(matches!(FourierLoop::zero(4, 16), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn homomorphism_functionals() {
        for k in -5..=5_i64 {
            let v = homomorphism(k, N);
            let (p, e) = momentum_pair(&v);
            assert!((e - (k * k) as f64 / 2.0).abs() < 1e-9, "k={k} E={e}");
            assert!((p - k as f64).abs() < 1e-9, "k={k} p={p}");
        }
    }

    #[test]
    fn constant_loop_functionals() {
        let v = loop_eval(&FourierLoop::zero(3, N).unwrap()).unwrap();
        assert_eq!(energy(&v), 0.0);
        assert_eq!(momentum_t(&v), 0.0);
    }

    #[test]
    fn spectral_derivative_of_trig_polynomial() {
        let n = 64;
        let xs: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let f: Vec<f64> = xs.iter().map(|&t| (3.0 * t).sin() + 0.5 * (7.0 * t).cos()).collect();
        let d = spectral_derivative(&f);
        for (i, &t) in xs.iter().enumerate() {
            let want = 3.0 * (3.0 * t).cos() - 3.5 * (7.0 * t).sin();
            assert!((d[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn symplectic_form_examples() {
        let n = 256;
        let th = |i: usize| 2.0 * PI * i as f64 / n as f64;
        let g: Vec<Algebra> = (0..n).map(|i| [th(i).sin(), 0.0, 0.0]).collect();
        let e: Vec<Algebra> = (0..n).map(|i| [th(i).cos() - 1.0, 0.0, 0.0]).collect();
        // ⟨γ′, cos θ − 1⟩ averages cos²θ.
        assert!((loop_symplectic_form(&g, &e).unwrap() - 0.5).abs() < 1e-12);
        assert!((loop_symplectic_form(&e, &g).unwrap() + 0.5).abs() < 1e-12);
        assert!(loop_symplectic_form(&g, &g).unwrap().abs() < 1e-12);
        assert!((h1_inner_product(&g, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(loop_symplectic_form(&g, &e[..10]), Err(Error::GridMismatch(_, _))));
    }

    #[test]
    fn pulled_back_form_at_constant_loop() {
        let w = tangent_form_at(2, &[0.0; 12], 64).unwrap();
        assert!((w - tangent_form_matrix(2)).amax() < 1e-9);
    }

    #[test]
    fn energy_generates_reversed_rotation() {
        // dE(δ) = −ω(X, δ) for X the field of γ ↦ γ(· + φ)γ(φ)⁻¹, with the
        // left-invariant form, at a loop far from the constant one.
        let (degree, n) = (2, 256);
        let lp = random_loop(3, degree, n);
        let flat = lp.flat();
        let g = loop_eval(&lp).unwrap();
        let dg = componentwise(&g, spectral_derivative);
        let d0 = dg[0].to_algebra();
        let field: Vec<Algebra> = (0..n)
            .map(|i| {
                let a = g.values[i].adjoint().mul(&dg[i]).to_algebra();
                [a[0] - d0[0], a[1] - d0[1], a[2] - d0[2]]
            })
            .collect();
        let dfield = tangent_derivative(&field);
        let h = 1e-6;
        for j in 0..6 * degree {
            let (mut plus, mut minus) = (flat.clone(), flat.clone());
            plus[j] += h;
            minus[j] -= h;
            let vp = loop_eval(&FourierLoop::from_flat(degree, &plus, n).unwrap()).unwrap();
            let vm = loop_eval(&FourierLoop::from_flat(degree, &minus, n).unwrap()).unwrap();
            let de = (energy(&vp) - energy(&vm)) / (2.0 * h);
            let delta: Vec<Algebra> = (0..n)
                .map(|i| {
                    let (a, b) = (vp.values[i].entries(), vm.values[i].entries());
                    let d = Su2::from_entries([0, 1, 2, 3].map(|c| (a[c] - b[c]) / (2.0 * h)));
                    g.values[i].adjoint().mul(&d).to_algebra()
                })
                .collect();
            let w = dfield.iter().zip(&delta).map(|(a, b)| inner(a, b)).sum::<f64>() / n as f64;
            assert!((de + w).abs() < 1e-7, "direction {j}: {de} vs {w}");
        }
    }

    #[test]
    fn coefficient_form_matches_quadrature() {
        let degree = 3;
        let n = 64;
        let m = 6 * degree;
        let paths: Vec<Vec<Algebra>> = (0..m)
            .map(|i| {
                let mut e = vec![0.0; m];
                e[i] = 1.0;
                coefficient_tangent_path(degree, &e, n).unwrap()
            })
            .collect();
        let w = tangent_form_matrix(degree);
        for u in 0..m {
            for v in 0..m {
                let q = loop_symplectic_form(&paths[u], &paths[v]).unwrap();
                assert!((q - w[(v, u)]).abs() < 1e-12, "({u},{v}) {q} vs {}", w[(v, u)]);
            }
        }
        let s = w.clone().svd(false, false).singular_values;
        assert!(s.min() > 1e-8);
    }

    #[test]
    fn rotation_generator_matches_linearized_rotation() {
        // d/dφ [ξ(s + φ) − ξ(φ)] at φ = 0 is ξ′(s) − ξ′(0).
        let degree = 2;
        let n = 64;
        let flat: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let path = coefficient_tangent_path(degree, &flat, n).unwrap();
        let d = tangent_derivative(&path);
        let rotated_flat = rotation_generator(degree) * DVector::from_vec(flat);
        let rotated = coefficient_tangent_path(degree, rotated_flat.as_slice(), n).unwrap();
        for i in 0..n {
            for c in 0..3 {
                assert!((rotated[i][c] - (d[i][c] - d[0][c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_loops() {
        let fixed = fixed_point_loops(2, N).unwrap();
        assert_eq!(fixed.len(), 5);
        for f in &fixed {
            assert!(f.fixed_residual < 1e-10, "k={} residual {}", f.k, f.fixed_residual);
        }
        let by_k = |k: i64| fixed.iter().find(|f| f.k == k).unwrap().image;
        assert!(by_k(0).0.abs() < 1e-12 && by_k(0).1.abs() < 1e-12);
        assert!((by_k(1).0 - 1.0).abs() < 1e-9 && (by_k(1).1 - 0.5).abs() < 1e-9);
        assert!((by_k(-2).0 + 2.0).abs() < 1e-9 && (by_k(-2).1 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn envelope_interpolates_fixed_images() {
        for k in -3..=3_i64 {
            assert!((fixed_image_envelope(3, k as f64) - (k * k) as f64 / 2.0).abs() < 1e-15);
        }
        assert!((fixed_image_envelope(3, 0.5) - 0.25).abs() < 1e-15);
        // beyond ±K the chord is extended
        assert!((fixed_image_envelope(1, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conjugation_and_rotation_at_zero_are_identity() {
        let v = loop_eval(&random_loop(4, 2, 128)).unwrap();
        assert!(conjugate_loop(0.0, &v).max_distance(&v) < 1e-15);
        assert!(rotate_loop(0.0, &v).max_distance(&v) < 1e-15);
    }

    #[test]
    fn quadrature_converges() {
        for seed in 0..5 {
            let lp = random_loop(seed, 5, 256);
            let e1 = energy(&loop_eval(&lp).unwrap());
            let lp2 = FourierLoop::new(5, lp.coeffs.clone(), 512).unwrap();
            let e2 = energy(&loop_eval(&lp2).unwrap());
            assert!((e1 - e2).abs() <= 1e-9, "{e1} vs {e2}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn loops_are_unitary_and_based(seed in any::<u64>(), degree in 1usize..4) {
            let v = loop_eval(&random_loop(seed, degree, 128)).unwrap();
            prop_assert!(v.max_unitarity_defect() <= 1e-10);
            prop_assert!(v.values[0].distance(&Su2::identity()) <= 1e-12);
        }

        #[test]
        fn actions_preserve_basedness_and_functionals(seed in any::<u64>(), phi in 0.0..(2.0 * PI), s in -3.0..3.0f64) {
            let v = loop_eval(&random_loop(seed, 3, 256)).unwrap();
            let (p, e) = momentum_pair(&v);
            let r = rotate_loop(phi, &v);
            let c = conjugate_loop(s, &v);
            prop_assert!(r.values[0].distance(&Su2::identity()) <= 1e-12);
            prop_assert!(c.values[0].distance(&Su2::identity()) <= 1e-12);
            for w in [&r, &c] {
                let (p2, e2) = momentum_pair(w);
                prop_assert!((p - p2).abs() <= 1e-8 && (e - e2).abs() <= 1e-8, "({p},{e}) vs ({p2},{e2})");
            }
        }

        #[test]
        fn energy_dominates_momentum(seed in any::<u64>()) {
            let v = loop_eval(&random_loop(seed, 3, 256)).unwrap();
            let (p, e) = momentum_pair(&v);
            prop_assert!(e >= -1e-12);
            prop_assert!(e >= p * p / 2.0 - 1e-9);
        }

        #[test]
        fn symplectic_form_is_skew(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..12).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
            let b: Vec<f64> = (0..12).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
            let pa = coefficient_tangent_path(2, &a, 64).unwrap();
            let pb = coefficient_tangent_path(2, &b, 64).unwrap();
            let w1 = loop_symplectic_form(&pa, &pb).unwrap();
            let w2 = loop_symplectic_form(&pb, &pa).unwrap();
            prop_assert!((w1 + w2).abs() <= 1e-10);
            prop_assert!(h1_inner_product(&pa, &pa).unwrap() > 0.0);
        }
    }
}

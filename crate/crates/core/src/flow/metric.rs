//! Metrics made standard near critical points.
//!
//! Around each fixed point `p` a Morse chart `y = φ(x)` puts the function in
//! the form `f(p) + Σ sᵢ·yᵢ²` with signs `sᵢ = ±1`. The blended metric is
//! `(1 − κ)·g + a²·κ·φ*g_E`, with κ a quintic smoothstep that equals 1 on the
//! inner half of the ball and vanishes outside it. Taking `a ≥ 1/σ_min(dφ)`
//! keeps blended norms above the original ones.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::models::{FixedPointRecord, ManifoldModel, ModelKind};

const SCALE_SAMPLES: usize = 256;
const SCALE_MARGIN: f64 = 1.05;

#[derive(Debug, Clone)]
struct SphereFactorChart {
    offset: usize,
    /// +1 at the north pole of the factor, −1 at the south pole.
    pole: f64,
    scale: f64,
}

#[derive(Debug, Clone)]
enum ChartKind {
    Linear { scale: f64 },
    Spheres(Vec<SphereFactorChart>),
}

/// Coordinates around a fixed point in which the function is a signed sum of squares.
#[derive(Debug, Clone)]
pub struct MorseChart {
    center: DVector<f64>,
    kind: ChartKind,
    signs: Vec<f64>,
}

impl MorseChart {
    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            ChartKind::Linear { scale } => (x - &self.center) * *scale,
            ChartKind::Spheres(factors) => {
                let mut y = DVector::zeros(2 * factors.len());
                for (i, c) in factors.iter().enumerate() {
                    let w = (1.0 + c.pole * x[c.offset + 2]).sqrt();
                    y[2 * i] = c.scale * x[c.offset] / w;
                    y[2 * i + 1] = c.scale * x[c.offset + 1] / w;
                }
                y
            }
        }
    }

    /// Ambient Jacobian of the chart map.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = x.len();
        match &self.kind {
            ChartKind::Linear { scale } => DMatrix::identity(m, m) * *scale,
            ChartKind::Spheres(factors) => {
                let mut j = DMatrix::zeros(2 * factors.len(), m);
                for (i, c) in factors.iter().enumerate() {
                    let w = 1.0 + c.pole * x[c.offset + 2];
                    let inv_sqrt = 1.0 / w.sqrt();
                    let d3 = -0.5 * c.pole * c.scale * inv_sqrt / w;
                    for r in 0..2 {
                        j[(2 * i + r, c.offset + r)] = c.scale * inv_sqrt;
                        j[(2 * i + r, c.offset + 2)] = d3 * x[c.offset + r];
                    }
                }
                j
            }
        }
    }

    /// The standard field `(−2sᵢyᵢ)` in chart coordinates.
    pub fn standard_field(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(y.len(), y.iter().zip(&self.signs).map(|(v, s)| -2.0 * s * v))
    }
}

fn nonzero_xi(xi: &[f64], model: &ManifoldModel) -> Result<()> {
    if xi.iter().any(|c| c.abs() < 1e-12) {
        return Err(Error::NoMorseChart(format!("{} with a vanishing weight in ξ = {xi:?}", model.name())));
    }
    Ok(())
}

/// Morse chart of `f = μ^ξ` at a fixed point of a registry model.
pub fn morse_chart(model: &ManifoldModel, f: &ScalarField, fixed: &FixedPointRecord) -> Result<MorseChart> {
    let xi = match f {
        ScalarField::Momentum { model: fm, xi } if fm == model => xi.clone(),
        _ => return Err(Error::NoMorseChart(format!("{} on {}", f.name(), model.name()))),
    };
    nonzero_xi(&xi, model)?;
    let center = fixed.point.clone();
    match model.kind() {
        ModelKind::MorseChart { plus, minus } => {
            let s = xi[0].signum();
            let mut signs = vec![s; plus];
            signs.extend(std::iter::repeat_n(-s, minus));
            Ok(MorseChart { center, kind: ChartKind::Linear { scale: xi[0].abs().sqrt() }, signs })
        }
        ModelKind::Sphere | ModelKind::HeightCircleMap | ModelKind::SphereProduct { .. } => {
            let n = model.constraint_count();
            let mut factors = Vec::with_capacity(n);
            let mut signs = Vec::with_capacity(2 * n);
            for (i, c) in xi.iter().enumerate().take(n) {
                let pole = center[3 * i + 2].signum();
                factors.push(SphereFactorChart { offset: 3 * i, pole, scale: c.abs().sqrt() });
                // ξ(x₃ − 1) = −sgn(ξ)|y|² at a north pole, ξ(x₃ + 1) = sgn(ξ)|y|² at a south pole.
                let s = -pole * c.signum();
                signs.push(s);
                signs.push(s);
            }
            Ok(MorseChart { center, kind: ChartKind::Spheres(factors), signs })
        }
        ModelKind::LoopTruncation { .. } => Err(Error::NoMorseChart(model.name().into())),
    }
}

/// A bump region around one critical point.
#[derive(Debug, Clone)]
pub struct Bump {
    pub radius: f64,
    /// Norm-comparison constant a_p.
    pub scale: f64,
    pub chart: MorseChart,
}

impl Bump {
    /// κ: 1 within radius/2, 0 beyond radius, quintic smoothstep between.
    pub fn kappa(&self, x: &DVector<f64>) -> f64 {
        let r = (x - self.chart.center()).norm();
        let t = ((self.radius - r) / (0.5 * self.radius)).clamp(0.0, 1.0);
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

#[derive(Debug, Clone)]
pub struct BlendedMetric {
    model: ManifoldModel,
    bumps: Vec<Bump>,
}

impl BlendedMetric {
    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    fn active(&self, x: &DVector<f64>) -> Option<(&Bump, f64)> {
        self.bumps.iter().find_map(|b| {
            let k = b.kappa(x);
            (k > 0.0).then_some((b, k))
        })
    }

    /// Ambient symmetric operator `M` with `g_new(u, v) = uᵀ·M·v` on tangent vectors.
    pub fn operator(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = x.len();
        let id = DMatrix::identity(m, m);
        match self.active(x) {
            None => id,
            Some((b, k)) => {
                let j = b.chart.jacobian(x);
                id * (1.0 - k) + j.transpose() * j * (b.scale * b.scale * k)
            }
        }
    }

    /// Gram matrix of the blended metric in an orthonormal tangent basis.
    pub fn tangent_metric(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let basis = self.model.tangent_basis(x);
        let g = basis.transpose() * self.operator(x) * &basis;
        (basis, g)
    }

    pub fn norm(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        v.dot(&(self.operator(x) * v)).max(0.0).sqrt()
    }

    /// Gradient of `f` for the blended metric.
    pub fn gradient(&self, f: &ScalarField, x: &DVector<f64>) -> DVector<f64> {
        let (basis, g) = self.tangent_metric(x);
        let rhs = basis.transpose() * f.ambient_gradient(x);
        let coords = g.cholesky().map(|c| c.solve(&rhs)).unwrap_or(rhs);
        basis * coords
    }
}

/// Blends the induced metric with chart metrics around each fixed point.
/// `radii` has one entry per fixed point of the model.
pub fn blend_standard_metric(model: &ManifoldModel, f: &ScalarField, radii: &[f64]) -> Result<BlendedMetric> {
    let fixed = model.fixed_points().map_err(|_| Error::NoMorseChart(model.name().into()))?;
    if radii.len() != fixed.len() {
        return Err(Error::InvalidArgument(format!("{} radii for {} critical points", radii.len(), fixed.len())));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument(format!("radius {r} is not positive")));
    }
    for i in 0..fixed.len() {
        for k in (i + 1)..fixed.len() {
            let d = (&fixed[i].point - &fixed[k].point).norm();
            if d <= radii[i] + radii[k] {
                return Err(Error::OverlappingBalls(format!(
                    "balls {i} and {k} of radii {} and {} at distance {d}",
                    radii[i], radii[k]
                )));
            }
        }
    }
    if !model.is_flat() && radii.iter().any(|&r| r >= 1.0) {
        return Err(Error::NoMorseChart(format!("radius beyond the pole charts of {}", model.name())));
    }
    let mut bumps = Vec::with_capacity(fixed.len());
    for (rec, &radius) in fixed.iter().zip(radii) {
        let chart = morse_chart(model, f, rec)?;
        let scale = comparison_constant(model, &chart, radius);
        bumps.push(Bump { radius, scale, chart });
    }
    Ok(BlendedMetric { model: model.clone(), bumps })
}

fn min_tangent_singular_value(model: &ManifoldModel, chart: &MorseChart, x: &DVector<f64>) -> f64 {
    let b = model.tangent_basis(x);
    (chart.jacobian(x) * b).singular_values().min()
}

/// Sampled sup of 1/σ_min(dφ) over the ball, with a safety margin unless the
/// chart is an isometry at every sample.
fn comparison_constant(model: &ManifoldModel, chart: &MorseChart, radius: f64) -> f64 {
    let center = chart.center();
    let mut worst = 1.0 / min_tangent_singular_value(model, chart, center);
    let basis = model.tangent_basis(center);
    let d = basis.ncols();
    for i in 0..SCALE_SAMPLES {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        rng.set_stream(i as u64);
        let dir = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
        let len = radius * (i + 1) as f64 / SCALE_SAMPLES as f64;
        let Ok(x) = model.project_to_manifold(&(center + &basis * dir.normalize() * len)) else {
            continue;
        };
        if (&x - center).norm() > radius {
            continue;
        }
        worst = worst.max(1.0 / min_tangent_singular_value(model, chart, &x));
    }
    if (worst - 1.0).abs() <= 1e-12 {
        1.0
    } else {
        worst * SCALE_MARGIN
    }
}

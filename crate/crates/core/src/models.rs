//! Registry of embedded manifolds with Hamiltonian torus actions.
//!
//! Every model lives in an ambient ℝ^m with the induced Euclidean metric. The
//! actions are linear in ambient coordinates, so a model exposes one ambient
//! generator matrix per circle factor. Symplectic forms are ambient operator
//! matrices `W(x)` with `ω(u, v) = vᵀ·W(x)·u` on tangent vectors.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag, cross_matrix, rot2};
use crate::loops;
use crate::symplectic::{self, SymplecticFrame};

pub const MODEL_NAMES: [&str; 5] = ["morse-chart", "sphere", "sphere-product", "height-circle-map", "loop-truncation"];

const CONSTRAINT_TOL: f64 = 1e-10;
const PROJECTION_ITERS: usize = 50;

/// A parameter value in a model definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    List(Vec<f64>),
    Text(String),
}

impl ParamValue {
    /// Parses a command-line value: integer, float, comma-separated list, or text.
    pub fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        if let Ok(i) = raw.parse::<i64>() {
            return ParamValue::Int(i);
        }
        if let Ok(f) = raw.parse::<f64>() {
            return ParamValue::Float(f);
        }
        if raw.contains(',') {
            let parts: std::result::Result<Vec<f64>, _> = raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
            if let Ok(v) = parts {
                return ParamValue::List(v);
            }
        }
        ParamValue::Text(raw.to_string())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Int(i) => Some(*i),
            ParamValue::Float(f) if f.fract() == 0.0 => Some(*f as i64),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<Vec<f64>> {
        match self {
            ParamValue::List(v) => Some(v.clone()),
            ParamValue::Int(_) | ParamValue::Float(_) => self.as_float().map(|f| vec![f]),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::List(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
            ParamValue::Text(s) => write!(f, "{s}"),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// Model-definition file format: `{"name": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

impl ModelSpec {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), params: Params::new() }
    }

    pub fn with(mut self, key: &str, value: ParamValue) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn instantiate(&self) -> Result<ManifoldModel> {
        registry_get(&self.name, &self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Flat ℝ^(d₊+d₋) with f(x) = ‖x₊‖² − ‖x₋‖².
    MorseChart { plus: usize, minus: usize },
    /// S² ⊂ ℝ³ rotated about the third axis, μ = x₃.
    Sphere,
    /// (S²)ⁿ with the n-torus acting factorwise.
    SphereProduct { n: usize },
    /// S² with the circle-valued map h(x) = exp(iπ·x₃), handled through its lift x₃.
    HeightCircleMap,
    /// Coefficient space of the truncated based loop group, μ = (p, E).
    LoopTruncation { degree: usize, grid_n: usize },
}

/// A closed-form fixed point of the torus action.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRecord {
    pub point: DVector<f64>,
    pub mu_image: DVector<f64>,
    /// Orthonormal tangent basis (columns) in which the Hessians are written.
    pub tangent_basis: DMatrix<f64>,
    /// Tangent Hessian of each momentum component.
    pub component_hessians: Vec<DMatrix<f64>>,
}

impl FixedPointRecord {
    /// Tangent Hessian of μ^ξ = ⟨μ, ξ⟩.
    pub fn hessian(&self, xi: &[f64]) -> DMatrix<f64> {
        let d = self.tangent_basis.ncols();
        let mut h = DMatrix::zeros(d, d);
        for (c, hi) in xi.iter().zip(&self.component_hessians) {
            h += hi * *c;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    kind: ModelKind,
}

fn param_usize(name: &str, params: &Params, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => {
            let i = v.as_int().ok_or_else(|| Error::InvalidParams {
                model: name.into(),
                reason: format!("`{key}` must be an integer, got {v}"),
            })?;
            usize::try_from(i).map_err(|_| Error::InvalidParams {
                model: name.into(),
                reason: format!("`{key}` must be non-negative, got {i}"),
            })
        }
    }
}

fn check_keys(name: &str, params: &Params, allowed: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidParams { model: name.into(), reason: format!("unknown parameter `{key}`") });
        }
    }
    Ok(())
}

/// Instantiates a registry model by name.
pub fn registry_get(name: &str, params: &Params) -> Result<ManifoldModel> {
    let kind = match name {
        "morse-chart" => {
            check_keys(name, params, &["d_plus", "d_minus"])?;
            let plus = param_usize(name, params, "d_plus", 1)?;
            let minus = param_usize(name, params, "d_minus", 1)?;
            if plus + minus == 0 {
                return Err(Error::InvalidParams { model: name.into(), reason: "d_plus = d_minus = 0".into() });
            }
            ModelKind::MorseChart { plus, minus }
        }
        "sphere" => {
            check_keys(name, params, &[])?;
            ModelKind::Sphere
        }
        "sphere-product" => {
            check_keys(name, params, &["n"])?;
            let n = param_usize(name, params, "n", 2)?;
            if n < 1 {
                return Err(Error::InvalidParams { model: name.into(), reason: "n must be at least 1".into() });
            }
            ModelKind::SphereProduct { n }
        }
        "height-circle-map" => {
            check_keys(name, params, &[])?;
            ModelKind::HeightCircleMap
        }
        "loop-truncation" => {
            check_keys(name, params, &["K", "grid"])?;
            let degree = param_usize(name, params, "K", 1)?;
            if degree < 1 {
                return Err(Error::InvalidParams { model: name.into(), reason: "K must be at least 1".into() });
            }
            let grid_n = param_usize(name, params, "grid", (8 * degree).max(128))?;
            if grid_n < 8 * degree {
                return Err(Error::InvalidParams {
                    model: name.into(),
                    reason: format!("grid {grid_n} is below 8·K = {}", 8 * degree),
                });
            }
            ModelKind::LoopTruncation { degree, grid_n }
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Ok(ManifoldModel { kind })
}

impl ManifoldModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::MorseChart { .. } => "morse-chart",
            ModelKind::Sphere => "sphere",
            ModelKind::SphereProduct { .. } => "sphere-product",
            ModelKind::HeightCircleMap => "height-circle-map",
            ModelKind::LoopTruncation { .. } => "loop-truncation",
        }
    }

    /// Number of 2-sphere factors for the sphere-like models.
    fn sphere_factors(&self) -> Option<usize> {
        match self.kind {
            ModelKind::Sphere | ModelKind::HeightCircleMap => Some(1),
            ModelKind::SphereProduct { n } => Some(n),
            _ => None,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ModelKind::MorseChart { plus, minus } => plus + minus,
            ModelKind::LoopTruncation { degree, .. } => 6 * degree,
            _ => 3 * self.sphere_factors().unwrap_or(1),
        }
    }

    pub fn manifold_dim(&self) -> usize {
        self.ambient_dim() - self.constraint_count()
    }

    pub fn constraint_count(&self) -> usize {
        self.sphere_factors().unwrap_or(0)
    }

    pub fn action_dim(&self) -> usize {
        match self.kind {
            ModelKind::MorseChart { .. } | ModelKind::Sphere | ModelKind::HeightCircleMap => 1,
            ModelKind::SphereProduct { n } => n,
            ModelKind::LoopTruncation { .. } => 2,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.constraint_count() == 0
    }

    pub fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.sphere_factors() {
            Some(n) => DVector::from_iterator(n, (0..n).map(|i| x.fixed_rows::<3>(3 * i).norm_squared() - 1.0)),
            None => DVector::zeros(0),
        }
    }

    pub fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.ambient_dim();
        match self.sphere_factors() {
            Some(n) => {
                let mut j = DMatrix::zeros(n, m);
                for i in 0..n {
                    for c in 0..3 {
                        j[(i, 3 * i + c)] = 2.0 * x[3 * i + c];
                    }
                }
                j
            }
            None => DMatrix::zeros(0, m),
        }
    }

    /// Ambient Hessian of constraint `k`.
    pub fn constraint_hessian(&self, k: usize) -> DMatrix<f64> {
        let m = self.ambient_dim();
        let mut h = DMatrix::zeros(m, m);
        for c in 0..3 {
            h[(3 * k + c, 3 * k + c)] = 2.0;
        }
        h
    }

    pub fn constraint_residual(&self, x: &DVector<f64>) -> f64 {
        let r = self.constraints(x);
        if r.is_empty() {
            0.0
        } else {
            r.amax()
        }
    }

    /// Orthogonal projector onto the tangent space, `I − Jᵀ(JJᵀ)⁻¹J`.
    pub fn tangent_projector(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.ambient_dim();
        let j = self.constraint_jacobian(x);
        if j.nrows() == 0 {
            return DMatrix::identity(m, m);
        }
        let gram = &j * j.transpose();
        let inv = gram.try_inverse().unwrap_or_else(|| DMatrix::zeros(j.nrows(), j.nrows()));
        DMatrix::identity(m, m) - j.transpose() * inv * &j
    }

    pub fn tangent_basis(&self, x: &DVector<f64>) -> DMatrix<f64> {
        if self.is_flat() {
            let m = self.ambient_dim();
            return DMatrix::identity(m, m);
        }
        linalg::projector_range_basis(&self.tangent_projector(x))
    }

    /// Newton projection onto the constraint set (at most 50 iterations).
    pub fn project_to_manifold(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch(format!("point of length {} for ambient {}", x.len(), self.ambient_dim())));
        }
        if self.is_flat() {
            return Ok(x.clone());
        }
        let out = linalg::newton_project(
            |y| (self.constraints(y), self.constraint_jacobian(y)),
            x,
            CONSTRAINT_TOL,
            PROJECTION_ITERS,
        )?;
        Ok(out.point)
    }

    /// Ambient generator matrices `L_i` with `X_ξ(x) = Σ ξ_i·L_i·x`.
    /// `None` when the model carries no symplectic structure.
    pub fn generator_matrices(&self) -> Option<Vec<DMatrix<f64>>> {
        match self.kind {
            ModelKind::MorseChart { plus, minus } => {
                if plus % 2 != 0 || minus % 2 != 0 {
                    return None;
                }
                let mut blocks = Vec::new();
                blocks.extend(std::iter::repeat_n(rot2() * -2.0, plus / 2));
                blocks.extend(std::iter::repeat_n(rot2() * 2.0, minus / 2));
                Some(vec![block_diag(&blocks)])
            }
            // (p, E) generate the conjugation and the rotation run backwards.
            // Conjugation is exact in the chart; the rotation is its
            // linearisation at the constant loop.
            ModelKind::LoopTruncation { degree, .. } => {
                Some(vec![-loops::conjugation_generator(degree), -loops::rotation_generator(degree)])
            }
            _ => {
                let n = self.sphere_factors().unwrap_or(1);
                let axis = cross_matrix(&[0.0, 0.0, 1.0]);
                Some(
                    (0..n)
                        .map(|i| {
                            let mut l = DMatrix::zeros(3 * n, 3 * n);
                            l.view_mut((3 * i, 3 * i), (3, 3)).copy_from(&axis);
                            l
                        })
                        .collect(),
                )
            }
        }
    }

    pub fn generator_field(&self, xi: &[f64], x: &DVector<f64>) -> Option<DVector<f64>> {
        let gens = self.generator_matrices()?;
        let mut v = DVector::zeros(x.len());
        for (c, l) in xi.iter().zip(&gens) {
            v += l * x * *c;
        }
        Some(v)
    }

    /// Ambient symplectic operator `W(x)`, `ω(u, v) = vᵀ·W·u` for tangent u, v.
    pub fn omega_at(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        match self.kind {
            ModelKind::MorseChart { plus, minus } => {
                if plus % 2 != 0 || minus % 2 != 0 {
                    return None;
                }
                Some(block_diag(&vec![rot2(); (plus + minus) / 2]))
            }
            ModelKind::LoopTruncation { degree, grid_n } => {
                Some(loops::tangent_form_at(degree, x.as_slice(), grid_n).expect("coefficient vector matches degree"))
            }
            _ => {
                let n = self.sphere_factors().unwrap_or(1);
                let blocks: Vec<DMatrix<f64>> =
                    (0..n).map(|i| cross_matrix(x.fixed_rows::<3>(3 * i).as_slice())).collect();
                Some(block_diag(&blocks))
            }
        }
    }

    pub fn is_symplectic(&self) -> bool {
        self.generator_matrices().is_some()
    }

    pub fn momentum(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ModelKind::MorseChart { plus, .. } => {
                let pos: f64 = x.rows(0, plus).norm_squared();
                let neg: f64 = x.rows(plus, x.len() - plus).norm_squared();
                DVector::from_element(1, pos - neg)
            }
            ModelKind::LoopTruncation { degree, grid_n } => {
                let (p, e) = loops::coefficient_momentum(degree, x.as_slice(), grid_n);
                DVector::from_vec(vec![p, e])
            }
            _ => {
                let n = self.sphere_factors().unwrap_or(1);
                DVector::from_iterator(n, (0..n).map(|i| x[3 * i + 2]))
            }
        }
    }

    /// Ambient Jacobian of the momentum map (rows are components).
    pub fn momentum_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.ambient_dim();
        match self.kind {
            ModelKind::MorseChart { plus, .. } => {
                let mut j = DMatrix::zeros(1, m);
                for i in 0..m {
                    j[(0, i)] = if i < plus { 2.0 * x[i] } else { -2.0 * x[i] };
                }
                j
            }
            ModelKind::LoopTruncation { .. } => {
                let h = 1e-6;
                let mut j = DMatrix::zeros(2, m);
                for i in 0..m {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let d = (self.momentum(&xp) - self.momentum(&xm)) / (2.0 * h);
                    j.set_column(i, &d);
                }
                j
            }
            _ => {
                let n = self.sphere_factors().unwrap_or(1);
                let mut j = DMatrix::zeros(n, m);
                for i in 0..n {
                    j[(i, 3 * i + 2)] = 1.0;
                }
                j
            }
        }
    }

    /// Ambient Hessian of momentum component `i` at `x`.
    pub fn momentum_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.ambient_dim();
        match self.kind {
            ModelKind::MorseChart { plus, .. } => {
                let diag = DVector::from_iterator(m, (0..m).map(|k| if k < plus { 2.0 } else { -2.0 }));
                DMatrix::from_diagonal(&diag)
            }
            ModelKind::LoopTruncation { .. } => {
                let h = 1e-4;
                let f = |y: &DVector<f64>| self.momentum(y)[i];
                let f0 = f(x);
                let mut hess = DMatrix::zeros(m, m);
                for a in 0..m {
                    for b in a..m {
                        let val = if a == b {
                            let mut xp = x.clone();
                            let mut xm = x.clone();
                            xp[a] += h;
                            xm[a] -= h;
                            (f(&xp) - 2.0 * f0 + f(&xm)) / (h * h)
                        } else {
                            let shifted = |sa: f64, sb: f64| {
                                let mut y = x.clone();
                                y[a] += sa * h;
                                y[b] += sb * h;
                                f(&y)
                            };
                            (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
                                / (4.0 * h * h)
                        };
                        hess[(a, b)] = val;
                        hess[(b, a)] = val;
                    }
                }
                hess
            }
            _ => DMatrix::zeros(m, m),
        }
    }

    /// Riemannian (tangent) Hessian of momentum component `i` at a critical
    /// point: `Bᵀ(∇²μ_i − Σ λ_k ∇²g_k)B` with Lagrange multipliers λ.
    pub fn tangent_momentum_hessian(&self, i: usize, x: &DVector<f64>, basis: &DMatrix<f64>) -> DMatrix<f64> {
        let mut ambient = self.momentum_hessian(i, x);
        let cj = self.constraint_jacobian(x);
        if cj.nrows() > 0 {
            let grad = self.momentum_jacobian(x).row(i).transpose();
            let lambda = linalg::min_norm_solve(&cj.transpose(), &grad, 1e-14);
            for k in 0..cj.nrows() {
                ambient -= self.constraint_hessian(k) * lambda[k];
            }
        }
        linalg::symmetrize(&(basis.transpose() * ambient * basis))
    }

    /// Closed-form fixed points of the action.
    pub fn fixed_points(&self) -> Result<Vec<FixedPointRecord>> {
        match self.kind {
            ModelKind::LoopTruncation { .. } => Err(Error::NoClosedFormFixedPoints(self.name().into())),
            _ => Ok(self.fixed_points_in_chart()),
        }
    }

    /// Fixed points visible in the model's coordinates. For the loop truncation
    /// this is only the constant loop; the homomorphism loops lie outside the
    /// exponential chart and are produced by the loop-group module.
    pub fn fixed_points_in_chart(&self) -> Vec<FixedPointRecord> {
        let points: Vec<DVector<f64>> = match self.kind {
            ModelKind::MorseChart { .. } | ModelKind::LoopTruncation { .. } => {
                vec![DVector::zeros(self.ambient_dim())]
            }
            _ => {
                let n = self.sphere_factors().unwrap_or(1);
                (0..(1usize << n))
                    .map(|mask| {
                        let mut p = DVector::zeros(3 * n);
                        for i in 0..n {
                            p[3 * i + 2] = if mask & (1 << i) == 0 { 1.0 } else { -1.0 };
                        }
                        p
                    })
                    .collect()
            }
        };
        points.into_iter().map(|p| self.fixed_point_record(p)).collect()
    }

    fn fixed_point_record(&self, point: DVector<f64>) -> FixedPointRecord {
        let tangent_basis = self.tangent_basis(&point);
        let component_hessians = (0..self.action_dim())
            .map(|i| self.tangent_momentum_hessian(i, &point, &tangent_basis))
            .collect();
        FixedPointRecord { mu_image: self.momentum(&point), point, tangent_basis, component_hessians }
    }

    /// Linear symplectic data at a fixed point in tangent coordinates: the frame
    /// (with the induced metric) and the tangent generator matrices.
    pub fn isotropy_data(&self, record: &FixedPointRecord) -> Result<(SymplecticFrame, Vec<DMatrix<f64>>)> {
        let gens = self.generator_matrices().ok_or_else(|| Error::NoSymplecticStructure(self.name().into()))?;
        let w = self.omega_at(&record.point).ok_or_else(|| Error::NoSymplecticStructure(self.name().into()))?;
        let b = &record.tangent_basis;
        let d = b.ncols();
        let o = b.transpose() * w * b;
        let omega = (&o - o.transpose()) * 0.5;
        let frame = symplectic::build_frame(omega, DMatrix::identity(d, d))?;
        let tangent_gens = gens.iter().map(|l| b.transpose() * l * b).collect();
        Ok((frame, tangent_gens))
    }

    /// Gaussian ambient proposal for on-manifold sampling.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let m = self.ambient_dim();
        match self.kind {
            ModelKind::LoopTruncation { degree, .. } => {
                DVector::from_iterator(m, (0..m).map(|i| {
                    let k = i / 6 + 1;
                    debug_assert!(k <= degree);
                    let z: f64 = rng.sample(StandardNormal);
                    z / (k * k) as f64
                }))
            }
            _ => DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal))),
        }
    }

    /// Draws a proposal and projects it onto the manifold.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let mut last = Error::NoConvergence(f64::INFINITY);
        for _ in 0..16 {
            let x = self.propose(rng);
            if self.sphere_factors().is_some() {
                let degenerate = (0..self.constraint_count()).any(|i| x.fixed_rows::<3>(3 * i).norm() < 1e-3);
                if degenerate {
                    continue;
                }
            }
            match self.project_to_manifold(&x) {
                Ok(p) => return Ok(p),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    /// Whether μ^ξ is bounded below on the model.
    pub fn momentum_component_bounded_below(&self, xi: &[f64]) -> bool {
        match self.kind {
            ModelKind::MorseChart { plus, minus } => {
                let s = xi.first().copied().unwrap_or(0.0);
                (minus == 0 && s >= 0.0) || (plus == 0 && s <= 0.0)
            }
            ModelKind::LoopTruncation { .. } => xi.get(1).copied().unwrap_or(0.0) > 0.0,
            _ => true,
        }
    }

    /// Momentum levels whose union is the preimage of the grid value `c`.
    ///
    /// For the height-circle map the value `s` stands for h = exp(iπ·s); its
    /// preimage is the x₃-level `s` reduced into (−1, 1], plus the level −1
    /// when h = −1 (where x₃ = ±1 are identified).
    pub fn lift_level(&self, c: &DVector<f64>) -> Vec<DVector<f64>> {
        match self.kind {
            ModelKind::HeightCircleMap => {
                let s = c[0];
                let mut r = (s + 1.0).rem_euclid(2.0) - 1.0;
                if r <= -1.0 + 1e-12 {
                    r = 1.0;
                }
                if (r - 1.0).abs() <= 1e-12 {
                    vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)]
                } else {
                    vec![DVector::from_element(1, r)]
                }
            }
            _ => vec![c.clone()],
        }
    }
}

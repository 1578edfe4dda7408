//! Gradient flows on registry models.
//!
//! Trajectories are integrated with fixed-step RK4 in ambient coordinates.
//! Stage points and accepted points are projected back onto the manifold.

mod levels;
mod metric;

pub use levels::{
    connected_components, palais_smale_diagnostic, sample_level_set, sample_momentum_level, ComponentLabels, Epsilon,
    LevelSample, PalaisSmaleReport,
};
pub use metric::{blend_standard_metric, morse_chart, BlendedMetric, Bump, MorseChart};

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::models::{FixedPointRecord, ManifoldModel};

pub const DEFAULT_STEP: f64 = 1e-2;
pub const CONVERGENCE_TOL: f64 = 1e-8;
const NORMALIZED_STEP_FRACTION: f64 = 0.1;
pub const NORMALIZED_DELTA: f64 = 1e-4;
const MAX_HALVINGS: usize = 10;
const ON_MANIFOLD_TOL: f64 = 1e-8;
const LIMIT_MATCH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum FlowStatus {
    Converged { point: DVector<f64>, grad_norm: f64 },
    MaxTime,
    LeftDomain,
    StepFailure,
}

impl FlowStatus {
    pub fn label(&self) -> &'static str {
        match self {
            FlowStatus::Converged { .. } => "converged",
            FlowStatus::MaxTime => "max_time",
            FlowStatus::LeftDomain => "left_domain",
            FlowStatus::StepFailure => "step_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    pub f_values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub status: FlowStatus,
}

impl FlowTrajectory {
    pub fn final_point(&self) -> &DVector<f64> {
        self.points.last().expect("trajectory holds its start point")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds its start time")
    }

    /// Writes `t,x0,…,x{m−1},f,grad_norm` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.points.first().map_or(0, |p| p.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..m).map(|i| format!("x{i}")));
        header.push("f".into());
        header.push("grad_norm".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.times.len() {
            let mut row = vec![format!("{:.17e}", self.times[i])];
            row.extend(self.points[i].iter().map(|v| format!("{v:.17e}")));
            row.push(format!("{:.17e}", self.f_values[i]));
            row.push(format!("{:.17e}", self.grad_norms[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Gradient of `f` for the metric in use: the induced metric, or a blended one.
pub fn gradient(model: &ManifoldModel, f: &ScalarField, metric: Option<&BlendedMetric>, x: &DVector<f64>) -> DVector<f64> {
    match metric {
        Some(m) => m.gradient(f, x),
        None => {
            let g = f.ambient_gradient(x);
            if model.is_flat() {
                g
            } else {
                model.tangent_projector(x) * g
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Descent,
    Normalized { delta: f64 },
}

enum StageError {
    Projection,
    Domain,
}

struct Integrator<'a> {
    model: &'a ManifoldModel,
    f: &'a ScalarField,
    metric: Option<&'a BlendedMetric>,
    mode: Mode,
}

impl Integrator<'_> {
    fn field(&self, x: &DVector<f64>) -> std::result::Result<DVector<f64>, StageError> {
        let g = gradient(self.model, self.f, self.metric, x);
        match self.mode {
            Mode::Descent => Ok(-g),
            Mode::Normalized { delta } => {
                let n = g.norm();
                if n < delta {
                    Err(StageError::Domain)
                } else {
                    Ok(-g / (n * n))
                }
            }
        }
    }

    fn project(&self, x: DVector<f64>) -> std::result::Result<DVector<f64>, StageError> {
        if self.model.is_flat() {
            return Ok(x);
        }
        self.model.project_to_manifold(&x).map_err(|_| StageError::Projection)
    }

    fn rk4(&self, x: &DVector<f64>, h: f64) -> std::result::Result<DVector<f64>, StageError> {
        let k1 = self.field(x)?;
        let x2 = self.project(x + &k1 * (h / 2.0))?;
        let k2 = self.field(&x2)?;
        let x3 = self.project(x + &k2 * (h / 2.0))?;
        let k3 = self.field(&x3)?;
        let x4 = self.project(x + &k3 * h)?;
        let k4 = self.field(&x4)?;
        self.project(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }

    fn run(&self, x0: &DVector<f64>, t_end: f64, step: f64) -> Result<FlowTrajectory> {
        validate(self.model, x0, t_end, step)?;
        let mut x = x0.clone();
        let mut t = 0.0;
        let mut traj =
            FlowTrajectory { times: vec![], points: vec![], f_values: vec![], grad_norms: vec![], status: FlowStatus::MaxTime };
        loop {
            let gn = gradient(self.model, self.f, self.metric, &x).norm();
            traj.times.push(t);
            traj.f_values.push(self.f.value(&x));
            traj.grad_norms.push(gn);
            traj.points.push(x.clone());
            match self.mode {
                Mode::Descent if gn < CONVERGENCE_TOL => {
                    traj.status = FlowStatus::Converged { point: x, grad_norm: gn };
                    return Ok(traj);
                }
                Mode::Normalized { delta } if gn < delta => {
                    if t == 0.0 {
                        return Err(Error::CriticalStart(gn));
                    }
                    traj.status = FlowStatus::LeftDomain;
                    return Ok(traj);
                }
                _ => {}
            }
            let remaining = t_end - t;
            if remaining <= 1e-12 * t_end.max(1.0) {
                traj.status = FlowStatus::MaxTime;
                return Ok(traj);
            }
            let mut h = step.min(remaining);
            if let Mode::Normalized { .. } = self.mode {
                // Displacement per step is h/|∇f|; keep it below |∇f|/10 so the
                // step cannot jump over a critical point.
                h = h.min(NORMALIZED_STEP_FRACTION * gn * gn);
            }
            let mut halvings = 0;
            let next = loop {
                match self.rk4(&x, h) {
                    Ok(next) => break next,
                    Err(StageError::Domain) => {
                        traj.status = FlowStatus::LeftDomain;
                        return Ok(traj);
                    }
                    Err(StageError::Projection) if halvings < MAX_HALVINGS => {
                        h /= 2.0;
                        halvings += 1;
                    }
                    Err(StageError::Projection) => {
                        traj.status = FlowStatus::StepFailure;
                        return Ok(traj);
                    }
                }
            };
            t = if h == remaining { t_end } else { t + h };
            x = next;
        }
    }
}

fn validate(model: &ManifoldModel, x0: &DVector<f64>, t_end: f64, step: f64) -> Result<()> {
    if x0.len() != model.ambient_dim() {
        return Err(Error::DimensionMismatch(format!("start point of length {} for ambient {}", x0.len(), model.ambient_dim())));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be non-negative, got {t_end}")));
    }
    let r = model.constraint_residual(x0);
    if r > ON_MANIFOLD_TOL {
        return Err(Error::InvalidArgument(format!("start point is off the manifold (residual {r:.3e})")));
    }
    Ok(())
}

/// Integrates `x′ = −∇f` with the induced metric.
pub fn integrate_flow(model: &ManifoldModel, f: &ScalarField, x0: &DVector<f64>, t_end: f64, step: f64) -> Result<FlowTrajectory> {
    Integrator { model, f, metric: None, mode: Mode::Descent }.run(x0, t_end, step)
}

/// Integrates `x′ = −∇f` for a blended metric.
pub fn integrate_flow_with_metric(
    model: &ManifoldModel,
    f: &ScalarField,
    metric: &BlendedMetric,
    x0: &DVector<f64>,
    t_end: f64,
    step: f64,
) -> Result<FlowTrajectory> {
    Integrator { model, f, metric: Some(metric), mode: Mode::Descent }.run(x0, t_end, step)
}

/// Integrates `x′ = −∇f/‖∇f‖²`, along which f drops at unit speed.
pub fn normalized_flow(model: &ManifoldModel, f: &ScalarField, x0: &DVector<f64>, t_end: f64, step: f64) -> Result<FlowTrajectory> {
    Integrator { model, f, metric: None, mode: Mode::Normalized { delta: NORMALIZED_DELTA } }.run(x0, t_end, step)
}

/// Follows the descending flow with doubling horizons until it converges.
/// The limit is matched against the model's fixed points.
pub fn limit_critical_point(model: &ManifoldModel, f: &ScalarField, x0: &DVector<f64>, budget: f64) -> Result<FixedPointRecord> {
    if !f.bounded_below() {
        return Err(Error::InvalidArgument(format!("{} is not bounded below on {}", f.name(), model.name())));
    }
    let mut x = x0.clone();
    let mut elapsed = 0.0;
    let mut horizon: f64 = 1.0;
    loop {
        let span = horizon.min(budget - elapsed);
        let traj = integrate_flow(model, f, &x, span, DEFAULT_STEP)?;
        match traj.status {
            FlowStatus::Converged { point, .. } => return match_fixed_point(model, &point),
            FlowStatus::MaxTime => {
                elapsed += traj.final_time();
                x = traj.final_point().clone();
                if elapsed >= budget - 1e-12 {
                    return Err(Error::BudgetExhausted(elapsed));
                }
                horizon *= 2.0;
            }
            FlowStatus::LeftDomain | FlowStatus::StepFailure => {
                return Err(Error::StepFailure(elapsed + traj.final_time()));
            }
        }
    }
}

fn match_fixed_point(model: &ManifoldModel, point: &DVector<f64>) -> Result<FixedPointRecord> {
    let candidates = model.fixed_points_in_chart();
    let (best, dist) = candidates
        .iter()
        .map(|r| (r, (&r.point - point).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::UnmatchedLimit(f64::INFINITY))?;
    if dist <= LIMIT_MATCH_TOL {
        Ok(best.clone())
    } else {
        Err(Error::UnmatchedLimit(dist))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Member,
    NotMember,
    /// The flow budget ran out before a limit was reached.
    Indeterminate,
}

/// Whether the descending flow from `x` tends to `p`.
pub fn stable_set_membership(
    model: &ManifoldModel,
    f: &ScalarField,
    p: &DVector<f64>,
    x: &DVector<f64>,
    budget: f64,
) -> Result<Membership> {
    let gp = gradient(model, f, None, p).norm();
    if gp > 1e-6 {
        return Err(Error::InvalidArgument(format!("p is not critical (gradient norm {gp:.3e})")));
    }
    if (x - p).norm() <= 1e-12 {
        return Ok(Membership::Member);
    }
    match limit_critical_point(model, f, x, budget) {
        Ok(rec) => Ok(if (&rec.point - p).norm() <= 1e-5 { Membership::Member } else { Membership::NotMember }),
        Err(Error::BudgetExhausted(_)) => Ok(Membership::Indeterminate),
        Err(e) => Err(e),
    }
}

/// Whether the ascending flow from `x` tends to `p`.
pub fn unstable_set_membership(
    model: &ManifoldModel,
    f: &ScalarField,
    p: &DVector<f64>,
    x: &DVector<f64>,
    budget: f64,
) -> Result<Membership> {
    stable_set_membership(model, &f.negated(), p, x, budget)
}

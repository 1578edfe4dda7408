//! Scalar functions on registry models.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::models::ManifoldModel;

type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A smooth function on the ambient space of a model.
#[derive(Clone)]
pub enum ScalarField {
    /// μ^ξ = ⟨μ, ξ⟩.
    Momentum { model: ManifoldModel, xi: Vec<f64> },
    /// Arbitrary function with its ambient gradient.
    Custom { name: String, value: ValueFn, gradient: GradientFn, bounded_below: bool },
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Momentum { model, xi } => write!(f, "Momentum({}, {xi:?})", model.name()),
            ScalarField::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl ScalarField {
    pub fn momentum(model: &ManifoldModel, xi: &[f64]) -> Self {
        ScalarField::Momentum { model: model.clone(), xi: xi.to_vec() }
    }

    /// The model's default Morse function: μ^ξ with ξ = (1, …, 1).
    pub fn canonical(model: &ManifoldModel) -> Self {
        Self::momentum(model, &vec![1.0; model.action_dim()])
    }

    pub fn custom<V, G>(name: &str, value: V, gradient: G, bounded_below: bool) -> Self
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        ScalarField::Custom { name: name.into(), value: Arc::new(value), gradient: Arc::new(gradient), bounded_below }
    }

    /// f(x) = arctan(x₀), bounded with vanishing gradient at infinity.
    pub fn arctan() -> Self {
        Self::custom("arctan", |x| x[0].atan(), |x| {
            let mut g = DVector::zeros(x.len());
            g[0] = 1.0 / (1.0 + x[0] * x[0]);
            g
        }, true)
    }

    /// f(x) = x₀.
    pub fn coordinate() -> Self {
        Self::custom("coordinate", |x| x[0], |x| {
            let mut g = DVector::zeros(x.len());
            g[0] = 1.0;
            g
        }, false)
    }

    pub fn name(&self) -> String {
        match self {
            ScalarField::Momentum { xi, .. } => format!("momentum{xi:?}"),
            ScalarField::Custom { name, .. } => name.clone(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            ScalarField::Momentum { model, xi } => {
                model.momentum(x).iter().zip(xi).map(|(m, c)| m * c).sum()
            }
            ScalarField::Custom { value, .. } => value(x),
        }
    }

    pub fn ambient_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ScalarField::Momentum { model, xi } => {
                model.momentum_jacobian(x).transpose() * DVector::from_column_slice(xi)
            }
            ScalarField::Custom { gradient, .. } => gradient(x),
        }
    }

    pub fn bounded_below(&self) -> bool {
        match self {
            ScalarField::Momentum { model, xi } => model.momentum_component_bounded_below(xi),
            ScalarField::Custom { bounded_below, .. } => *bounded_below,
        }
    }

    /// The field −f.
    pub fn negated(&self) -> Self {
        match self {
            ScalarField::Momentum { model, xi } => {
                ScalarField::Momentum { model: model.clone(), xi: xi.iter().map(|c| -c).collect() }
            }
            ScalarField::Custom { name, value, gradient, .. } => {
                let (v, g) = (value.clone(), gradient.clone());
                ScalarField::Custom {
                    name: format!("-{name}"),
                    value: Arc::new(move |x| -v(x)),
                    gradient: Arc::new(move |x| -g(x)),
                    bounded_below: false,
                }
            }
        }
    }

    /// The weights ξ for momentum fields.
    pub fn xi(&self) -> Option<&[f64]> {
        match self {
            ScalarField::Momentum { xi, .. } => Some(xi),
            ScalarField::Custom { .. } => None,
        }
    }
}

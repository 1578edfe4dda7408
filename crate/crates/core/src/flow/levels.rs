//! Level-set sampling, ε-graph components, and the Palais–Smale diagnostic.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::field::ScalarField;
use crate::linalg;
use crate::models::ManifoldModel;

const LEVEL_TOL: f64 = 1e-9;
const CONSTRAINT_TOL: f64 = 1e-10;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_ITERS: usize = 200;

/// Points on a level together with projection statistics.
#[derive(Debug, Clone, Default)]
pub struct LevelSample {
    pub points: Vec<DVector<f64>>,
    pub attempted: usize,
    pub failed: usize,
}

impl LevelSample {
    pub fn failure_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.failed as f64 / self.attempted as f64
        }
    }

    /// More than 90% of projections diverged.
    pub fn mostly_failed(&self) -> bool {
        self.failure_rate() > 0.9
    }
}

/// Two-stage Newton: onto the manifold, then onto the joint zero set of the
/// constraints and `extra`.
fn project_to_level<F>(model: &ManifoldModel, extra: &F, x0: &DVector<f64>) -> Option<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let x = model.project_to_manifold(x0).ok()?;
    let m = model.ambient_dim();
    let system = |y: &DVector<f64>| {
        let (r_extra, j_extra) = extra(y);
        let r_con = model.constraints(y);
        let j_con = model.constraint_jacobian(y);
        let rows = r_con.len() + r_extra.len();
        let mut r = DVector::zeros(rows);
        let mut j = DMatrix::zeros(rows, m);
        r.rows_mut(0, r_con.len()).copy_from(&r_con);
        r.rows_mut(r_con.len(), r_extra.len()).copy_from(&r_extra);
        j.view_mut((0, 0), (r_con.len(), m)).copy_from(&j_con);
        j.view_mut((r_con.len(), 0), (r_extra.len(), m)).copy_from(&j_extra);
        (r, j)
    };
    let out = linalg::newton_project(system, &x, NEWTON_TOL, NEWTON_ITERS).ok()?;
    let (r_extra, _) = extra(&out.point);
    let ok = r_extra.iter().all(|v| v.abs() <= LEVEL_TOL) && model.constraint_residual(&out.point).abs() <= CONSTRAINT_TOL;
    ok.then_some(out.point)
}

fn sample_with<F>(model: &ManifoldModel, extra: F, count: usize, seed: u64) -> LevelSample
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>) + Sync,
{
    let mut sample = LevelSample::default();
    if count == 0 {
        return sample;
    }
    let max_attempts = (20 * count).max(100);
    let batch = (2 * count).max(64);
    while sample.points.len() < count && sample.attempted < max_attempts {
        let start = sample.attempted;
        let end = (start + batch).min(max_attempts);
        let results: Vec<Option<DVector<f64>>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                project_to_level(model, &extra, &model.propose(&mut rng))
            })
            .collect();
        for r in results {
            if sample.points.len() >= count {
                break;
            }
            sample.attempted += 1;
            match r {
                Some(p) => sample.points.push(p),
                None => sample.failed += 1,
            }
        }
        // An empty level: every projection in a full batch diverged.
        if sample.points.is_empty() && sample.attempted >= batch {
            break;
        }
    }
    sample
}

/// Up to `count` points of `{f = c}` on the model. Out-of-range levels give an
/// empty sample with every projection counted as failed.
pub fn sample_level_set(model: &ManifoldModel, f: &ScalarField, c: f64, count: usize, seed: u64) -> LevelSample {
    sample_with(
        model,
        |y: &DVector<f64>| {
            let r = DVector::from_element(1, f.value(y) - c);
            let g = f.ambient_gradient(y);
            let j = DMatrix::from_row_slice(1, g.len(), g.as_slice());
            (r, j)
        },
        count,
        seed,
    )
}

/// Up to `count` points of `μ⁻¹(c)`, solving all momentum components jointly.
pub fn sample_momentum_level(model: &ManifoldModel, c: &DVector<f64>, count: usize, seed: u64) -> LevelSample {
    sample_with(model, |y: &DVector<f64>| (model.momentum(y) - c, model.momentum_jacobian(y)), count, seed)
}

/// Linking radius for the ε-neighbour graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Fixed(f64),
    /// Three times the largest nearest-neighbour distance.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabels {
    pub labels: Vec<usize>,
    pub component_count: usize,
    pub epsilon: f64,
}

/// Distance from each point to its nearest other point (∞ for a lone point).
pub fn nearest_neighbor_distances(points: &[DVector<f64>]) -> Vec<f64> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            points
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, q)| (&points[i] - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

const AUTO_MIN_POINTS: usize = 3;

/// Connected components of the graph linking points closer than ε.
/// Labels are numbered in order of first appearance.
pub fn connected_components(points: &[DVector<f64>], epsilon: Epsilon) -> ComponentLabels {
    let n = points.len();
    let eps = match epsilon {
        Epsilon::Fixed(e) => e,
        // Two points give no sampling scale apart from their own distance.
        Epsilon::Auto if n < AUTO_MIN_POINTS => 0.0,
        Epsilon::Auto => {
            let nn = nearest_neighbor_distances(points);
            let max = nn.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
            3.0 * max
        }
    };
    let edges: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            ((i + 1)..n).filter(move |&k| (&points[i] - &points[k]).norm() <= eps).map(move |k| (i, k))
        })
        .collect();
    let mut uf = UnionFind::new(n);
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut root_label = std::collections::HashMap::new();
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let r = uf.find(i);
            let next = root_label.len();
            *root_label.entry(r).or_insert(next)
        })
        .collect();
    ComponentLabels { component_count: root_label.len(), labels, epsilon: eps }
}

#[derive(Debug, Clone)]
pub struct PalaisSmaleReport {
    pub satisfied: bool,
    /// No generated point had a gradient norm below the threshold.
    pub vacuous: bool,
    pub near_critical_count: usize,
    /// Escaping near-critical points when the condition fails.
    pub witness: Vec<DVector<f64>>,
    pub witness_grad_norms: Vec<f64>,
}

/// Looks for sequences with ‖df‖ → 0 that have no convergent subsequence.
///
/// The sequence `x_0, …, x_{horizon−1}` is generated by `generator`. Points
/// with gradient norm below 1e-4 are near-critical. Condition (C) is reported
/// violated when there are at least three such points, consecutive ones stay
/// at least 0.1 apart, and their norms keep growing.
pub fn palais_smale_diagnostic<G>(model: &ManifoldModel, f: &ScalarField, generator: G, horizon: usize) -> PalaisSmaleReport
where
    G: Fn(usize) -> DVector<f64>,
{
    let near: Vec<(DVector<f64>, f64)> = (0..horizon)
        .map(&generator)
        .map(|x| {
            let g = super::gradient(model, f, None, &x).norm();
            (x, g)
        })
        .filter(|(_, g)| *g < 1e-4)
        .collect();
    let count = near.len();
    if count == 0 {
        return PalaisSmaleReport {
            satisfied: true,
            vacuous: true,
            near_critical_count: 0,
            witness: vec![],
            witness_grad_norms: vec![],
        };
    }
    let separated = near.windows(2).all(|w| (&w[1].0 - &w[0].0).norm() >= 0.1);
    let escaping = near.windows(2).all(|w| w[1].0.norm() > w[0].0.norm());
    let violated = count >= 3 && separated && escaping;
    let (witness, witness_grad_norms) = if violated { near.into_iter().unzip() } else { (vec![], vec![]) };
    PalaisSmaleReport { satisfied: !violated, vacuous: false, near_critical_count: count, witness, witness_grad_norms }
}

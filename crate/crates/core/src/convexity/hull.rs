//! Convex hulls of point clouds in dimension at most three.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use robust::{orient3d, Coord3D};

use crate::error::{Error, Result};

/// Relative spread below which a direction is treated as flat.
const FLAT_TOL: f64 = 1e-10;
/// Turns with |sin| below this are treated as straight.
const COLLINEAR_TOL: f64 = 1e-9;
/// Hull vertices closer than this (relative) are reported as one.
const CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
enum Shape {
    Empty,
    Point,
    Interval { lo: f64, hi: f64 },
    /// Counter-clockwise polygon.
    Polygon(Vec<Vector2<f64>>),
    Polytope { points: Vec<Vector3<f64>>, facets: Vec<Facet> },
}

#[derive(Debug, Clone)]
struct Facet {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
}

/// Convex hull with its vertices (a subset of the input points).
#[derive(Debug, Clone)]
pub struct Hull {
    ambient_dim: usize,
    affine_dim: usize,
    vertices: Vec<DVector<f64>>,
    origin: DVector<f64>,
    /// Orthonormal basis (columns) of the affine hull's direction space.
    basis: DMatrix<f64>,
    shape: Shape,
}

impl Hull {
    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn affine_dim(&self) -> usize {
        self.affine_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Euclidean distance from `x` to the hull (0 inside).
    pub fn distance_outside(&self, x: &DVector<f64>) -> f64 {
        if matches!(self.shape, Shape::Empty) {
            return f64::INFINITY;
        }
        let rel = x - &self.origin;
        let coords = self.basis.transpose() * &rel;
        let normal = if self.affine_dim == self.ambient_dim { 0.0 } else { (&rel - &self.basis * &coords).norm() };
        let inner = match &self.shape {
            Shape::Empty => unreachable!(),
            Shape::Point => 0.0,
            Shape::Interval { lo, hi } => (lo - coords[0]).max(coords[0] - hi).max(0.0),
            Shape::Polygon(poly) => polygon_distance(poly, &Vector2::new(coords[0], coords[1])),
            Shape::Polytope { points, facets } => {
                polytope_distance(points, facets, &Vector3::new(coords[0], coords[1], coords[2]))
            }
        };
        inner.hypot(normal)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.distance_outside(x) <= tol
    }
}

/// Convex hull of a cloud in ℝ¹, ℝ² or ℝ³. Clouds spanning a lower-dimensional
/// affine subspace get the hull of that subspace.
pub fn convex_hull(points: &[DVector<f64>]) -> Result<Hull> {
    build(points, true)
}

/// With `prune` unset, every point on a 3-D facet is reported as a vertex.
fn build(points: &[DVector<f64>], prune: bool) -> Result<Hull> {
    let Some(first) = points.first() else {
        return Ok(Hull {
            ambient_dim: 0,
            affine_dim: 0,
            vertices: vec![],
            origin: DVector::zeros(0),
            basis: DMatrix::zeros(0, 0),
            shape: Shape::Empty,
        });
    };
    let n = first.len();
    if n == 0 || n > 3 {
        return Err(Error::InvalidArgument(format!("convex hulls are supported in dimension 1 to 3, got {n}")));
    }
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(Error::DimensionMismatch(format!("point of length {} in a cloud of dimension {n}", p.len())));
    }
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("cloud contains non-finite coordinates".into()));
    }

    let count = points.len() as f64;
    let origin = points.iter().fold(DVector::zeros(n), |acc, p| acc + p) / count;
    // Singular values of the centred cloud, not eigenvalues of its covariance:
    // squaring would lift roundoff in flat directions to ~1e-8 of the spread.
    let centred = DMatrix::from_columns(&points.iter().map(|p| p - &origin).collect::<Vec<_>>());
    let svd = centred.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let top = svd.singular_values.max();
    let kept: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| top > 0.0 && svd.singular_values[i] > FLAT_TOL * top).collect();
    let k = kept.len();
    let basis = if k == 0 {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&kept.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>())
    };
    let coords: Vec<DVector<f64>> = points.iter().map(|p| basis.transpose() * (p - &origin)).collect();

    let (shape, vertex_ids) = match k {
        0 => (Shape::Point, vec![0]),
        1 => {
            let (mut lo, mut hi) = (0, 0);
            for (i, c) in coords.iter().enumerate() {
                if c[0] < coords[lo][0] {
                    lo = i;
                }
                if c[0] > coords[hi][0] {
                    hi = i;
                }
            }
            (Shape::Interval { lo: coords[lo][0], hi: coords[hi][0] }, vec![lo, hi])
        }
        2 => {
            let pts: Vec<Vector2<f64>> = coords.iter().map(|c| Vector2::new(c[0], c[1])).collect();
            let ids = prune_collinear(&pts, monotone_chain(&pts));
            (Shape::Polygon(ids.iter().map(|&i| pts[i]).collect()), ids)
        }
        _ => {
            let pts: Vec<Vector3<f64>> = coords.iter().map(|c| Vector3::new(c[0], c[1], c[2])).collect();
            let facets = incremental_hull(&pts);
            let ids = if prune {
                corner_vertices(&pts, &facets)
            } else {
                facets.iter().flat_map(|f| f.v).collect::<BTreeSet<_>>().into_iter().collect()
            };
            (Shape::Polytope { points: pts, facets }, ids)
        }
    };
    Ok(Hull {
        ambient_dim: n,
        affine_dim: k,
        vertices: vertex_ids.iter().map(|&i| points[i].clone()).collect(),
        origin,
        basis,
        shape,
    })
}

fn cross2(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Strict left turn, up to the collinearity tolerance.
fn left_turn(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let c = cross2(o, a, b);
    c > COLLINEAR_TOL * (a - o).norm() * (b - o).norm()
}

/// Andrew's monotone chain; returns vertex indices counter-clockwise.
fn monotone_chain(pts: &[Vector2<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[a].x.total_cmp(&pts[b].x).then(pts[a].y.total_cmp(&pts[b].y)));
    order.dedup_by(|a, b| pts[*a] == pts[*b]);
    if order.len() < 3 {
        return order;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> =
            if pass == 0 { Box::new(order.iter()) } else { Box::new(order.iter().rev()) };
        for &i in iter {
            while hull.len() >= start + 2 && !left_turn(&pts[hull[hull.len() - 2]], &pts[hull[hull.len() - 1]], &pts[i]) {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull
}

fn segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() > 0.0 { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

fn polygon_distance(poly: &[Vector2<f64>], p: &Vector2<f64>) -> f64 {
    let n = poly.len();
    let inside = (0..n).all(|i| cross2(&poly[i], &poly[(i + 1) % n], p) >= 0.0);
    if inside {
        return 0.0;
    }
    (0..n).map(|i| segment_distance(p, &poly[i], &poly[(i + 1) % n])).fold(f64::INFINITY, f64::min)
}

/// Facet vertices that lie outside the hull of their neighbours. Points on an
/// edge or a face of the hull are dropped. Candidates closer than
/// `CLUSTER_TOL` are pooled and reported once, by the one farthest out.
fn corner_vertices(pts: &[Vector3<f64>], facets: &[Facet]) -> Vec<usize> {
    let scale = pts.iter().map(|p| p.amax()).fold(0.0, f64::max).max(1e-300);
    let mut neighbours: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for f in facets {
        for e in 0..3 {
            neighbours.entry(f.v[e]).or_default().extend([f.v[(e + 1) % 3], f.v[(e + 2) % 3]]);
        }
    }
    let centroid = neighbours.keys().map(|&v| pts[v]).sum::<Vector3<f64>>() / neighbours.len().max(1) as f64;
    let mut candidates: Vec<usize> = neighbours.keys().copied().collect();
    candidates.sort_by(|&a, &b| (pts[b] - centroid).norm().total_cmp(&(pts[a] - centroid).norm()).then(a.cmp(&b)));
    let mut clusters: Vec<(usize, Vec<usize>)> = vec![];
    for v in candidates {
        match clusters.iter_mut().find(|(r, _)| (pts[*r] - pts[v]).norm() <= CLUSTER_TOL * scale) {
            Some(c) => c.1.push(v),
            None => clusters.push((v, vec![v])),
        }
    }
    let to_dvec = |q: &Vector3<f64>| DVector::from_column_slice(q.as_slice());
    let mut ids: Vec<usize> = clusters
        .into_iter()
        .filter(|(rep, members)| {
            let link: Vec<DVector<f64>> = members
                .iter()
                .flat_map(|m| &neighbours[m])
                .filter(|&&u| (pts[u] - pts[*rep]).norm() > CLUSTER_TOL * scale)
                .map(|&u| to_dvec(&pts[u]))
                .collect();
            link.is_empty()
                || build(&link, false).is_ok_and(|h| h.distance_outside(&to_dvec(&pts[*rep])) > CLUSTER_TOL * scale)
        })
        .map(|(rep, _)| rep)
        .collect();
    ids.sort_unstable();
    ids
}

/// Drops polygon vertices lying on the segment between their neighbours.
fn prune_collinear(pts: &[Vector2<f64>], mut ids: Vec<usize>) -> Vec<usize> {
    let scale = pts.iter().map(|p| p.amax()).fold(0.0, f64::max).max(1e-300);
    let mut i = 0;
    while ids.len() > 2 && i < ids.len() {
        let m = ids.len();
        let (a, b) = (pts[ids[(i + m - 1) % m]], pts[ids[(i + 1) % m]]);
        if segment_distance(&pts[ids[i]], &a, &b) <= COLLINEAR_TOL * scale {
            ids.remove(i);
            i = i.saturating_sub(1);
        } else {
            i += 1;
        }
    }
    ids
}

/// Exact test for p strictly outside the plane of f.
fn above(pts: &[Vector3<f64>], f: &Facet, p: &Vector3<f64>) -> bool {
    let c = |q: &Vector3<f64>| Coord3D { x: q.x, y: q.y, z: q.z };
    orient3d(c(&pts[f.v[0]]), c(&pts[f.v[1]]), c(&pts[f.v[2]]), c(p)) < 0.0
}

fn make_facet(pts: &[Vector3<f64>], v: [usize; 3]) -> Facet {
    let n = (pts[v[1]] - pts[v[0]]).cross(&(pts[v[2]] - pts[v[0]]));
    let len = n.norm();
    let normal = if len > 0.0 { n / len } else { n };
    Facet { v, normal, offset: normal.dot(&pts[v[0]]) }
}

fn incremental_hull(pts: &[Vector3<f64>]) -> Vec<Facet> {

    // Initial tetrahedron from extreme points.
    let i0 = (0..pts.len()).min_by(|&a, &b| pts[a].x.total_cmp(&pts[b].x)).unwrap_or(0);
    let i1 = (0..pts.len()).max_by(|&a, &b| (pts[a] - pts[i0]).norm().total_cmp(&(pts[b] - pts[i0]).norm())).unwrap_or(0);
    let dir = (pts[i1] - pts[i0]).normalize();
    let line_dist = |p: &Vector3<f64>| {
        let d = p - pts[i0];
        (d - dir * d.dot(&dir)).norm()
    };
    let i2 = (0..pts.len()).max_by(|&a, &b| line_dist(&pts[a]).total_cmp(&line_dist(&pts[b]))).unwrap_or(0);
    let plane_n = (pts[i1] - pts[i0]).cross(&(pts[i2] - pts[i0])).normalize();
    let plane_dist = |p: &Vector3<f64>| plane_n.dot(&(p - pts[i0])).abs();
    let i3 = (0..pts.len()).max_by(|&a, &b| plane_dist(&pts[a]).total_cmp(&plane_dist(&pts[b]))).unwrap_or(0);

    let centroid = (pts[i0] + pts[i1] + pts[i2] + pts[i3]) / 4.0;
    let mut facets: Vec<Facet> = [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]]
        .iter()
        .map(|&v| {
            let f = make_facet(pts, v);
            if f.normal.dot(&centroid) - f.offset > 0.0 {
                make_facet(pts, [v[0], v[2], v[1]])
            } else {
                f
            }
        })
        .collect();

    // Far points first, so points on edges and faces meet the final facets.
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| (pts[b] - centroid).norm().total_cmp(&(pts[a] - centroid).norm()).then(a.cmp(&b)));
    let seed: HashSet<usize> = [i0, i1, i2, i3].into_iter().collect();
    for pi in order {
        let p = &pts[pi];
        if seed.contains(&pi) {
            continue;
        }
        let height = |f: &Facet| f.normal.dot(p) - f.offset;
        let Some(top) = (0..facets.len())
            .filter(|&i| above(pts, &facets[i], p))
            .max_by(|&a, &b| height(&facets[a]).total_cmp(&height(&facets[b])))
        else {
            continue;
        };
        // Grow the visible region from the highest facet across shared edges,
        // so the horizon is a single loop.
        let owner: HashMap<(usize, usize), usize> = facets
            .iter()
            .enumerate()
            .flat_map(|(i, f)| (0..3).map(move |e| ((f.v[e], f.v[(e + 1) % 3]), i)))
            .collect();
        let mut visible = vec![false; facets.len()];
        visible[top] = true;
        let mut stack = vec![top];
        while let Some(i) = stack.pop() {
            for e in 0..3 {
                let (a, b) = (facets[i].v[e], facets[i].v[(e + 1) % 3]);
                if let Some(&j) = owner.get(&(b, a)) {
                    if !visible[j] && above(pts, &facets[j], p) {
                        visible[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        let mut next = Vec::with_capacity(facets.len() + 4);
        let mut created = Vec::new();
        for (f, &vis) in facets.iter().zip(&visible) {
            if !vis {
                next.push(f.clone());
                continue;
            }
            for e in 0..3 {
                let (a, b) = (f.v[e], f.v[(e + 1) % 3]);
                if !owner.get(&(b, a)).is_some_and(|&j| visible[j]) {
                    created.push(make_facet(pts, [a, b, pi]));
                }
            }
        }
        next.extend(created);
        facets = next;
    }
    facets
}

/// Closest point on triangle abc to p.
fn closest_on_triangle(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

fn polytope_distance(pts: &[Vector3<f64>], facets: &[Facet], p: &Vector3<f64>) -> f64 {
    if facets.iter().all(|f| !above(pts, f, p)) {
        return 0.0;
    }
    facets
        .iter()
        .map(|f| (p - closest_on_triangle(p, &pts[f.v[0]], &pts[f.v[1]], &pts[f.v[2]])).norm())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn sorted(mut pts: Vec<DVector<f64>>) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = pts.drain(..).map(|p| p.iter().copied().collect()).collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    #[test]
    fn interval_hull() {
        let h = convex_hull(&[v(&[-1.0]), v(&[0.2]), v(&[1.0])]).unwrap();
        assert_eq!(sorted(h.vertices().to_vec()), vec![vec![-1.0], vec![1.0]]);
        assert_eq!(h.distance_outside(&v(&[1.5])), 0.5);
        assert_eq!(h.distance_outside(&v(&[0.5])), 0.0);
    }

    #[test]
    fn square_hull() {
        let mut pts = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[1.0, 1.0]), v(&[0.0, 1.0])];
        pts.extend([v(&[0.5, 0.5]), v(&[0.2, 0.7]), v(&[0.5, 0.0]), v(&[0.9, 0.1])]);
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.vertices().len(), 4);
        assert!((h.distance_outside(&v(&[2.0, 0.5])) - 1.0).abs() < 1e-15);
        assert!((h.distance_outside(&v(&[2.0, 2.0])) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn circle_points_are_all_vertices() {
        let pts: Vec<DVector<f64>> = (0..100)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 100.0;
                v(&[a.cos(), a.sin()])
            })
            .collect();
        assert_eq!(convex_hull(&pts).unwrap().vertices().len(), 100);
    }

    #[test]
    fn cube_hull() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(v(&[(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            pts.push(v(&[rng.random(), rng.random(), rng.random()]));
        }
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.affine_dim(), 3);
        assert_eq!(h.vertices().len(), 8);
        assert!((h.distance_outside(&v(&[2.0, 0.5, 0.5])) - 1.0).abs() < 1e-12);
        assert!((h.distance_outside(&v(&[2.0, 2.0, 2.0])) - 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(h.distance_outside(&v(&[0.5, 0.5, 0.5])), 0.0);
    }

    #[test]
    fn points_on_edges_and_faces_are_not_vertices() {
        let mut pts = vec![v(&[1.0, 0.2, 1.0]), v(&[0.3, -0.4, -1.0]), v(&[1.0, 1.0 - 3e-14, 1.0])];
        for i in 0..8 {
            pts.push(v(&[0, 1, 2].map(|b| if i >> b & 1 == 1 { 1.0 } else { -1.0 })));
        }
        assert_eq!(convex_hull(&pts).unwrap().vertices().len(), 8);
        let square = [[1.0, -1.0], [1.0, 1.0], [1.0 - 3e-14, 1.0], [-1.0, 1.0], [-1.0, -1.0], [0.0, -1.0]];
        let square: Vec<_> = square.iter().map(|p| v(p)).collect();
        assert_eq!(convex_hull(&square).unwrap().vertices().len(), 4);
    }

    #[test]
    fn degenerate_clouds() {
        // collinear points in the plane
        let h = convex_hull(&[v(&[0.0, 0.0]), v(&[1.0, 1.0]), v(&[0.5, 0.5])]).unwrap();
        assert_eq!(h.affine_dim(), 1);
        assert_eq!(h.vertices().len(), 2);
        assert!((h.distance_outside(&v(&[0.0, 1.0])) - 0.5f64.sqrt()).abs() < 1e-15);
        // coplanar points in space
        let h = convex_hull(&[v(&[0.0, 0.0, 1.0]), v(&[1.0, 0.0, 1.0]), v(&[0.0, 1.0, 1.0]), v(&[0.2, 0.2, 1.0])]).unwrap();
        assert_eq!(h.affine_dim(), 2);
        assert_eq!(h.vertices().len(), 3);
        assert!((h.distance_outside(&v(&[0.1, 0.1, 3.0])) - 2.0).abs() < 1e-12);
        let h = convex_hull(&[v(&[3.0, 3.0])]).unwrap();
        assert_eq!(h.vertices().len(), 1);
    }

    #[test]
    fn rejects_high_dimension() {
        assert!(convex_hull(&[v(&[0.0; 4])]).is_err());
    }

    fn cloud(seed: u64, n: usize, dim: usize) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-1.0..1.0)))).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn hull_is_idempotent_and_contains_input(seed in any::<u64>(), dim in 1usize..4, n in 5usize..80) {
            let pts = cloud(seed, n, dim);
            let h = convex_hull(&pts).unwrap();
            for p in &pts {
                prop_assert!(h.distance_outside(p) <= 1e-12);
            }
            let h2 = convex_hull(h.vertices()).unwrap();
            prop_assert_eq!(sorted(h.vertices().to_vec()), sorted(h2.vertices().to_vec()));
        }
    }
}

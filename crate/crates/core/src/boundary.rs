//! Dirichlet data on the domain boundary, admissibility against the gradient
//! constraint, and the extremal admissible extensions (the lower and upper
//! obstacles).
//!
//! For a convex domain the obstacles are
//!   upper(x) = min_y [ phi(y) + support(N, x - y) ],
//!   lower(x) = max_y [ phi(y) - support(N, y - x) ],
//! with y ranging over the boundary. Both objectives are piecewise linear
//! along each boundary edge (the data is piecewise linear and the support
//! function is piecewise linear in its argument), so the per-edge extremum
//! is attained either at an edge endpoint or where `x - y(t)` crosses a tie
//! direction of two polygon vertices. We enumerate those breakpoints and
//! evaluate exactly rather than scanning a dense sample; the sampling
//! density is still used for the pairwise admissibility check.
//!
//! For nonconvex domains the straight-chord bound is invalid; the obstacles
//! are computed on the mesh graph by relaxation with per-edge support
//! weights (the intrinsic path analogue). Graph paths are a subset of all
//! paths, so the band is conservative: the computed upper obstacle is >= the
//! true one and the lower is <= it, with an inflation factor set by how well
//! the mesh edge directions resolve the support function (up to 2 for a
//! square constraint on 45-degree edges). Convex domains always take the
//! exact path.

use nalgebra::Vector2;

use crate::error::BoundaryError;
use crate::geometry::{cross, GradientPolygon};
use crate::mesh::TriMesh;

#[derive(Clone, Debug)]
pub struct BoundaryData {
    polyline: Vec<Vector2<f64>>,
    values: Vec<f64>,
    sample_density: f64,
}

/// Outcome of the admissibility check.
#[derive(Clone, Debug)]
pub enum Admissibility {
    Valid,
    Violation {
        y1: Vector2<f64>,
        y2: Vector2<f64>,
        /// Positive amount by which the pair exceeds the support bound.
        slack: f64,
    },
}

impl Admissibility {
    pub fn is_valid(&self) -> bool {
        matches!(self, Admissibility::Valid)
    }
}

impl BoundaryData {
    /// A closed simple polyline (not repeated at the end) with one value per
    /// vertex; values are interpolated linearly along edges.
    pub fn new(
        polyline: Vec<Vector2<f64>>,
        values: Vec<f64>,
        sample_density: f64,
    ) -> Result<Self, BoundaryError> {
        if polyline.len() < 3 {
            return Err(BoundaryError::MalformedBoundary);
        }
        if values.len() != polyline.len() {
            return Err(BoundaryError::ValueCountMismatch {
                values: values.len(),
                vertices: polyline.len(),
            });
        }
        let n = polyline.len();
        for i in 0..n {
            let (a1, b1) = (polyline[i], polyline[(i + 1) % n]);
            if (b1 - a1).norm() < 1e-14 {
                return Err(BoundaryError::MalformedBoundary);
            }
            for j in (i + 1)..n {
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (a2, b2) = (polyline[j], polyline[(j + 1) % n]);
                if segments_cross(a1, b1, a2, b2) {
                    return Err(BoundaryError::SelfIntersecting { segment: i });
                }
            }
        }
        Ok(Self {
            polyline,
            values,
            sample_density,
        })
    }

    pub fn polyline(&self) -> &[Vector2<f64>] {
        &self.polyline
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_density(&self) -> f64 {
        self.sample_density
    }

    /// Whether the enclosed domain is convex (collinear boundary vertices
    /// allowed).
    pub fn is_convex_domain(&self) -> bool {
        let n = self.polyline.len();
        let mut sign = 0.0_f64;
        for i in 0..n {
            let a = self.polyline[i];
            let b = self.polyline[(i + 1) % n];
            let c = self.polyline[(i + 2) % n];
            let cr = cross(b - a, c - b);
            if cr.abs() < 1e-12 {
                continue;
            }
            if sign == 0.0 {
                sign = cr.signum();
            } else if cr.signum() != sign {
                return false;
            }
        }
        true
    }

    /// Piecewise-linear boundary value at a point of the polyline. Returns
    /// `None` when the point is farther than `tol` from every edge.
    pub fn value_at(&self, y: Vector2<f64>, tol: f64) -> Option<f64> {
        let n = self.polyline.len();
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n {
            let a = self.polyline[i];
            let b = self.polyline[(i + 1) % n];
            let ab = b - a;
            let t = ((y - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d = (a + ab * t - y).norm();
            let v = self.values[i] * (1.0 - t) + self.values[(i + 1) % n] * t;
            if best.map(|(bd, _)| d < bd).unwrap_or(true) {
                best = Some((d, v));
            }
        }
        best.filter(|&(d, _)| d <= tol).map(|(_, v)| v)
    }

    /// Dirichlet values at the mesh boundary loop.
    pub fn dirichlet_values(&self, mesh: &TriMesh) -> Result<Vec<(usize, f64)>, BoundaryError> {
        let tol = 1e-9 * (1.0 + mesh.h);
        let mut out = Vec::with_capacity(mesh.boundary_loop.len());
        for &v in &mesh.boundary_loop {
            let val = self
                .value_at(mesh.nodes[v], tol)
                .ok_or(BoundaryError::MalformedBoundary)?;
            out.push((v, val));
        }
        Ok(out)
    }

    /// Boundary sample points (arclength step `sample_density`, vertices
    /// always included) with their values.
    pub fn samples(&self) -> Vec<(Vector2<f64>, f64)> {
        let n = self.polyline.len();
        let mut out = Vec::new();
        for i in 0..n {
            let a = self.polyline[i];
            let b = self.polyline[(i + 1) % n];
            let va = self.values[i];
            let vb = self.values[(i + 1) % n];
            let len = (b - a).norm();
            let steps = (len / self.sample_density).ceil().max(1.0) as usize;
            for k in 0..steps {
                let t = k as f64 / steps as f64;
                out.push((a + (b - a) * t, va + (vb - va) * t));
            }
        }
        out
    }

    /// Pairwise support-bound check over the boundary samples. Straight
    /// chords require a convex domain; use [`check_admissible_on_mesh`] for
    /// nonconvex ones.
    pub fn check_admissible(&self, n: &GradientPolygon) -> Admissibility {
        let samples = self.samples();
        let tol = admissibility_tol(&self.values);
        let mut worst: Option<(Vector2<f64>, Vector2<f64>, f64)> = None;
        for (i, &(y1, v1)) in samples.iter().enumerate() {
            for &(y2, v2) in &samples[i + 1..] {
                for (a, b, va, vb) in [(y1, y2, v1, v2), (y2, y1, v2, v1)] {
                    let slack = va - vb - n.support(a - b);
                    if slack > tol && worst.map(|(_, _, s)| slack > s).unwrap_or(true) {
                        worst = Some((a, b, slack));
                    }
                }
            }
        }
        match worst {
            None => Admissibility::Valid,
            Some((y1, y2, slack)) => Admissibility::Violation { y1, y2, slack },
        }
    }

    /// Admissibility for nonconvex domains: boundary values must be
    /// reproduced by the per-edge support relaxation along mesh paths.
    pub fn check_admissible_on_mesh(
        &self,
        n: &GradientPolygon,
        mesh: &TriMesh,
    ) -> Result<Admissibility, BoundaryError> {
        let upper = relax_upper(self, n, mesh)?;
        let tol = admissibility_tol(&self.values);
        let dirichlet = self.dirichlet_values(mesh)?;
        let mut worst: Option<(Vector2<f64>, f64)> = None;
        for &(v, phi) in &dirichlet {
            let slack = phi - upper[v];
            if slack > tol && worst.map(|(_, s)| slack > s).unwrap_or(true) {
                worst = Some((mesh.nodes[v], slack));
            }
        }
        Ok(match worst {
            None => Admissibility::Valid,
            Some((y, slack)) => Admissibility::Violation { y1: y, y2: y, slack },
        })
    }

    /// Exact lower/upper obstacle values at one point of a convex domain.
    pub fn obstacle_pair(
        &self,
        n: &GradientPolygon,
        x: Vector2<f64>,
    ) -> Result<(f64, f64), BoundaryError> {
        if let Admissibility::Violation { y1, y2, slack } = self.check_admissible(n) {
            return Err(BoundaryError::Inadmissible {
                y1: (y1.x, y1.y),
                y2: (y2.x, y2.y),
                slack,
            });
        }
        Ok(self.obstacle_pair_unchecked(n, x))
    }

    /// Same as [`obstacle_pair`] without re-running the admissibility check;
    /// used by nodal loops that checked once up front.
    pub fn obstacle_pair_unchecked(
        &self,
        n: &GradientPolygon,
        x: Vector2<f64>,
    ) -> (f64, f64) {
        let nv = self.polyline.len();
        let mut upper = f64::INFINITY;
        let mut lower = f64::NEG_INFINITY;
        for i in 0..nv {
            let a = self.polyline[i];
            let b = self.polyline[(i + 1) % nv];
            let va = self.values[i];
            let vb = self.values[(i + 1) % nv];
            for t in edge_breakpoints(n, x, a, b) {
                let y = a + (b - a) * t;
                let phi = va + (vb - va) * t;
                upper = upper.min(phi + n.support(x - y));
                lower = lower.max(phi - n.support(y - x));
            }
        }
        (lower, upper)
    }
}

fn admissibility_tol(values: &[f64]) -> f64 {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    1e-9 * (1.0 + scale)
}

/// Candidate parameters for the per-edge piecewise-linear extremum: the
/// endpoints plus every crossing of a two-vertex tie direction of `N`.
fn edge_breakpoints(
    n: &GradientPolygon,
    x: Vector2<f64>,
    a: Vector2<f64>,
    b: Vector2<f64>,
) -> Vec<f64> {
    let mut ts = vec![0.0, 1.0];
    let d = b - a;
    let verts = n.vertices();
    let m = verts.len();
    for i in 0..m {
        for j in (i + 1)..m {
            let dir = verts[i] - verts[j];
            let denom = dir.dot(&d);
            if denom.abs() < 1e-14 {
                continue;
            }
            let t = dir.dot(&(x - a)) / denom;
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    ts
}

/// Nodal obstacle fields on a mesh.
#[derive(Clone, Debug)]
pub struct Obstacles {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Obstacles {
    /// Compute both nodal fields; picks the exact convex path or the mesh
    /// relaxation depending on the domain. Fails on inadmissible data.
    pub fn compute(
        data: &BoundaryData,
        n: &GradientPolygon,
        mesh: &TriMesh,
    ) -> Result<Self, BoundaryError> {
        let admissibility = if data.is_convex_domain() {
            data.check_admissible(n)
        } else {
            data.check_admissible_on_mesh(n, mesh)?
        };
        if let Admissibility::Violation { y1, y2, slack } = admissibility {
            return Err(BoundaryError::Inadmissible {
                y1: (y1.x, y1.y),
                y2: (y2.x, y2.y),
                slack,
            });
        }
        if data.is_convex_domain() {
            let mut lower = Vec::with_capacity(mesh.node_count());
            let mut upper = Vec::with_capacity(mesh.node_count());
            for &p in &mesh.nodes {
                let (lo, up) = data.obstacle_pair_unchecked(n, p);
                lower.push(lo);
                upper.push(up);
            }
            Ok(Self { lower, upper })
        } else {
            let upper = relax_upper(data, n, mesh)?;
            let lower = relax_lower(data, n, mesh)?;
            Ok(Self { lower, upper })
        }
    }

    /// Indices where the two obstacles pin the solution (gap below `tol`).
    pub fn rigid_nodes(&self, tol: f64) -> Vec<usize> {
        (0..self.lower.len())
            .filter(|&i| self.upper[i] - self.lower[i] <= tol)
            .collect()
    }
}

fn mesh_edges(mesh: &TriMesh) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(3 * mesh.triangle_count());
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

fn relax_upper(
    data: &BoundaryData,
    n: &GradientPolygon,
    mesh: &TriMesh,
) -> Result<Vec<f64>, BoundaryError> {
    let mut u = vec![f64::INFINITY; mesh.node_count()];
    for (v, phi) in data.dirichlet_values(mesh)? {
        u[v] = u[v].min(phi);
    }
    let edges = mesh_edges(mesh);
    loop {
        let mut changed = false;
        for &(a, b) in &edges {
            let dab = n.support(mesh.nodes[b] - mesh.nodes[a]);
            let dba = n.support(mesh.nodes[a] - mesh.nodes[b]);
            if u[a] + dab < u[b] - 1e-14 {
                u[b] = u[a] + dab;
                changed = true;
            }
            if u[b] + dba < u[a] - 1e-14 {
                u[a] = u[b] + dba;
                changed = true;
            }
        }
        if !changed {
            return Ok(u);
        }
    }
}

fn relax_lower(
    data: &BoundaryData,
    n: &GradientPolygon,
    mesh: &TriMesh,
) -> Result<Vec<f64>, BoundaryError> {
    let mut l = vec![f64::NEG_INFINITY; mesh.node_count()];
    for (v, phi) in data.dirichlet_values(mesh)? {
        l[v] = l[v].max(phi);
    }
    let edges = mesh_edges(mesh);
    loop {
        let mut changed = false;
        for &(a, b) in &edges {
            let dab = n.support(mesh.nodes[b] - mesh.nodes[a]);
            let dba = n.support(mesh.nodes[a] - mesh.nodes[b]);
            if l[a] - dba > l[b] + 1e-14 {
                l[b] = l[a] - dba;
                changed = true;
            }
            if l[b] - dab > l[a] + 1e-14 {
                l[a] = l[b] - dab;
                changed = true;
            }
        }
        if !changed {
            return Ok(l);
        }
    }
}

fn segments_cross(
    a: Vector2<f64>,
    b: Vector2<f64>,
    c: Vector2<f64>,
    d: Vector2<f64>,
) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn unit_square_ring() -> Vec<Vector2<f64>> {
        vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(0.0, 1.0),
        ]
    }

    fn linear_data(p0: Vector2<f64>) -> BoundaryData {
        let ring = unit_square_ring();
        let values = ring.iter().map(|y| p0.dot(y)).collect();
        BoundaryData::new(ring, values, 1.0 / 256.0).unwrap()
    }

    #[test]
    fn admissibility_cases() {
        let n = GradientPolygon::square(1.0);
        let zero = BoundaryData::new(unit_square_ring(), vec![0.0; 4], 0.01).unwrap();
        assert!(zero.check_admissible(&n).is_valid());
        assert!(linear_data(Vector2::new(1.0, 0.0))
            .check_admissible(&n)
            .is_valid());
        match linear_data(Vector2::new(2.0, 0.0)).check_admissible(&n) {
            Admissibility::Violation { slack, .. } => assert!(slack > 0.5),
            Admissibility::Valid => panic!("slope 2 must violate"),
        }
    }

    #[test]
    fn obstacles_of_zero_data_are_l1_distances() {
        // N = [-1,1]^2 has support = l1 norm, so the upper obstacle of zero
        // data on the unit square is the l1 distance to the boundary, which
        // is min(x, 1-x, y, 1-y) in closed form.
        let n = GradientPolygon::square(1.0);
        let data = BoundaryData::new(unit_square_ring(), vec![0.0; 4], 0.01).unwrap();
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..1000 {
            let x = Vector2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let (lo, up) = data.obstacle_pair_unchecked(&n, x);
            let exact = x.x.min(1.0 - x.x).min(x.y).min(1.0 - x.y);
            assert!((up - exact).abs() < 1e-12, "upper at {x:?}");
            assert!((lo + exact).abs() < 1e-12, "lower at {x:?}");
        }
        let (lo, up) = data.obstacle_pair(&n, Vector2::new(0.5, 0.5)).unwrap();
        assert!((up - 0.5).abs() < 1e-12 && (lo + 0.5).abs() < 1e-12);
    }

    #[test]
    fn obstacles_attain_boundary_values() {
        let n = GradientPolygon::square(1.0);
        let data = linear_data(Vector2::new(0.4, -0.3));
        for (k, &y) in data.polyline().iter().enumerate() {
            let (lo, up) = data.obstacle_pair_unchecked(&n, y);
            assert!((lo - data.values()[k]).abs() < 1e-12);
            assert!((up - data.values()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_below_upper_randomly() {
        let n = GradientPolygon::lozenge_triangle();
        let ring = unit_square_ring();
        let values: Vec<f64> = ring.iter().map(|y| 0.2 * y.x - 0.1 * y.y).collect();
        let data = BoundaryData::new(ring, values, 0.01).unwrap();
        assert!(data.check_admissible(&n).is_valid());
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..1000 {
            let x = Vector2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let (lo, up) = data.obstacle_pair_unchecked(&n, x);
            assert!(lo <= up + 1e-12);
        }
    }

    #[test]
    fn enlarging_n_widens_the_gap() {
        let small = GradientPolygon::square(0.5);
        let big = GradientPolygon::square(1.0);
        let data = BoundaryData::new(unit_square_ring(), vec![0.0; 4], 0.01).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..300 {
            let x = Vector2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let (ls, us) = data.obstacle_pair_unchecked(&small, x);
            let (lb, ub) = data.obstacle_pair_unchecked(&big, x);
            assert!(ub >= us - 1e-12 && lb <= ls + 1e-12);
        }
    }

    #[test]
    fn obstacle_gradients_stay_in_polygon() {
        use crate::field::ScalarField;
        use std::sync::Arc;
        let n = GradientPolygon::square(1.0);
        let data = linear_data(Vector2::new(0.3, 0.2));
        let mesh = Arc::new(TriMesh::structured_rectangle(0.0, 0.0, 1.0, 1.0, 16, 16).unwrap());
        let obs = Obstacles::compute(&data, &n, &mesh).unwrap();
        let upper = ScalarField::new(mesh.clone(), obs.upper.clone()).unwrap();
        let lower = ScalarField::new(mesh.clone(), obs.lower.clone()).unwrap();
        let tol = 4.0 * mesh.h;
        for t in 0..mesh.triangle_count() {
            assert!(n.gauge_excess(upper.gradient(t)) <= tol);
            assert!(n.gauge_excess(lower.gradient(t)) <= tol);
        }
    }

    #[test]
    fn nonconvex_mesh_relaxation_respects_geodesics() {
        // L-shaped domain: the straight chord from one leg tip to the other
        // leaves the domain, so the intrinsic obstacle must be larger than
        // the chord bound would suggest.
        let ring = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(2.0, 0.0),
            Vector2::new(2.0, 0.5),
            Vector2::new(0.5, 0.5),
            Vector2::new(0.5, 2.0),
            Vector2::new(0.0, 2.0),
        ];
        let values = vec![0.0; 6];
        let data = BoundaryData::new(ring.clone(), values, 0.05).unwrap();
        assert!(!data.is_convex_domain());
        let mesh = TriMesh::polygon(&ring, 0.1).unwrap();
        let n = GradientPolygon::square(1.0);
        let obs = Obstacles::compute(&data, &n, &mesh).unwrap();
        // Exact intrinsic l1 distance to the boundary of the L (every point
        // sees its nearest wall piece along a straight monotone path).
        let exact = |p: Vector2<f64>| -> f64 {
            let mut d = p.x.min(p.y);
            if p.y <= 0.5 {
                d = d.min(2.0 - p.x);
            }
            if p.x <= 0.5 {
                d = d.min(2.0 - p.y);
            }
            if p.x >= 0.5 && p.y <= 0.5 {
                d = d.min(0.5 - p.y);
            }
            if p.y >= 0.5 && p.x <= 0.5 {
                d = d.min(0.5 - p.x);
            }
            // The reflex corner is a boundary point of its own.
            d.min((p.x - 0.5).abs() + (p.y - 0.5).abs())
        };
        for (i, &up) in obs.upper.iter().enumerate() {
            let e = exact(mesh.nodes[i]);
            // Graph paths are a subset of all paths: never below the true
            // band, inflated by at most the 45-degree edge factor 2.
            assert!(up >= e - 1e-9, "node {i}: {up} < exact {e}");
            assert!(up <= 2.0 * e + 1e-9, "node {i}: {up} > 2x exact {e}");
            assert!(obs.lower[i] <= up + 1e-12);
            assert!((obs.lower[i] + up).abs() < 1e-12, "zero data is symmetric");
        }
    }

    #[test]
    fn malformed_boundaries_rejected() {
        assert!(matches!(
            BoundaryData::new(vec![Vector2::new(0.0, 0.0)], vec![0.0], 0.1),
            Err(BoundaryError::MalformedBoundary)
        ));
        let bow = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
        ];
        assert!(matches!(
            BoundaryData::new(bow, vec![0.0; 4], 0.1),
            Err(BoundaryError::SelfIntersecting { .. })
        ));
    }
}

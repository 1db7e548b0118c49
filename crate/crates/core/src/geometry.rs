//! Geometry of the gradient-constraint polygon `N`.
//!
//! Conventions
//! - Vertices are stored counterclockwise and must be in strictly convex
//!   position; the loader reverses clockwise input and reports it.
//! - Sides are `[p_i, p_{i+1}]` with wraparound; `outward[i]` is the unit
//!   outward normal of side `i` and `offsets[i] = outward[i] · p_i`, so
//!   membership is `outward[i] · p <= offsets[i]` for all `i`.
//! - `gauge_excess` is the max of signed side distances. Inside the polygon
//!   it equals minus the distance to the boundary exactly; outside it
//!   understates the distance in vertex fans. `project` is exact everywhere
//!   and is the oracle to use whenever true distance matters.

use nalgebra::Vector2;

use crate::error::GeometryError;

/// Absolute membership tolerance in gradient units. All polygon data in this
/// crate is O(1), so a fixed absolute tolerance is adequate.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// The convex constraint polygon for gradients, with derived side frames.
#[derive(Clone, Debug)]
pub struct GradientPolygon {
    vertices: Vec<Vector2<f64>>,
    outward: Vec<Vector2<f64>>,
    offsets: Vec<f64>,
    interior_point: Vector2<f64>,
    /// Distance from `interior_point` to the boundary.
    inradius_at_center: f64,
    /// Whether the input ring was reversed to restore CCW orientation.
    reversed_on_load: bool,
}

impl GradientPolygon {
    /// Build from a vertex ring. Clockwise input is reversed (see
    /// [`GradientPolygon::reversed_on_load`]); collinear or repeated vertices
    /// are rejected. The interior point defaults to the Chebyshev center.
    pub fn new(mut vertices: Vec<Vector2<f64>>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        let area2: f64 = signed_area2(&vertices);
        let mut reversed = false;
        if area2 < 0.0 {
            vertices.reverse();
            reversed = true;
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if cross(b - a, c - b) <= 0.0 {
                return Err(GeometryError::NotStrictlyConvex { vertex: (i + 1) % n });
            }
        }
        let mut outward = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        for i in 0..n {
            let e = vertices[(i + 1) % n] - vertices[i];
            let len = e.norm();
            if len <= MEMBERSHIP_TOL {
                return Err(GeometryError::DegenerateSide { side: i });
            }
            // CCW ring: rotating the edge by -90 degrees points outward.
            let nrm = Vector2::new(e.y, -e.x) / len;
            outward.push(nrm);
            offsets.push(nrm.dot(&vertices[i]));
        }
        let (center, inr) = chebyshev_center(&outward, &offsets)?;
        Ok(Self {
            vertices,
            outward,
            offsets,
            interior_point: center,
            inradius_at_center: inr,
            reversed_on_load: reversed,
        })
    }

    /// Override the fixed interior point `z_0`. Fails unless the point is
    /// strictly inside.
    pub fn with_interior_point(mut self, z0: Vector2<f64>) -> Result<Self, GeometryError> {
        let d = -self.gauge_excess(z0);
        if d <= MEMBERSHIP_TOL {
            return Err(GeometryError::InteriorPointNotInterior);
        }
        self.interior_point = z0;
        self.inradius_at_center = d;
        Ok(self)
    }

    /// Axis-aligned square `[-s, s]^2`.
    pub fn square(s: f64) -> Self {
        Self::new(vec![
            Vector2::new(-s, -s),
            Vector2::new(s, -s),
            Vector2::new(s, s),
            Vector2::new(-s, s),
        ])
        .expect("square ring is strictly convex")
    }

    /// The gradient triangle of stepped surfaces viewed along (1,1,1): the
    /// slopes of the three coordinate planes as graphs over the plane
    /// {x+y+z=0}, in the fixed orthonormal frame
    /// w1 = (1,-1,0)/sqrt2, w2 = (1,1,-2)/sqrt6.
    pub fn lozenge_triangle() -> Self {
        let r6 = 6.0_f64.sqrt();
        let r2 = 2.0_f64.sqrt();
        Self::new(vec![
            Vector2::new(-r6 / 2.0, -r2 / 2.0), // slope of {x=0}
            Vector2::new(r6 / 2.0, -r2 / 2.0),  // slope of {y=0}
            Vector2::new(0.0, r2),              // slope of {z=0}
        ])
        .expect("lozenge triangle is strictly convex")
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    pub fn side_count(&self) -> usize {
        self.vertices.len()
    }

    /// Side `i` as the closed segment `[p_i, p_(i+1)]`.
    pub fn side(&self, i: usize) -> (Vector2<f64>, Vector2<f64>) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    /// Unit outward normal of side `i`.
    pub fn outward_normal(&self, i: usize) -> Vector2<f64> {
        self.outward[i]
    }

    /// Unit inward normal of side `i` (the direction discontinuity
    /// segments of the minimizer run along).
    pub fn inward_normal(&self, i: usize) -> Vector2<f64> {
        -self.outward[i]
    }

    pub fn side_offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    /// The fixed strictly interior point `z_0`.
    pub fn interior_point(&self) -> Vector2<f64> {
        self.interior_point
    }

    /// Distance from `z_0` to the boundary.
    pub fn interior_margin(&self) -> f64 {
        self.inradius_at_center
    }

    pub fn reversed_on_load(&self) -> bool {
        self.reversed_on_load
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// Support function: `max_i p_i . d`. Positively homogeneous of degree 1.
    pub fn support(&self, d: Vector2<f64>) -> f64 {
        self.vertices
            .iter()
            .map(|p| p.dot(&d))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Vertex index attaining the support in direction `d` (first maximum).
    pub fn support_argmax(&self, d: Vector2<f64>) -> usize {
        let mut best = 0;
        let mut val = f64::NEG_INFINITY;
        for (i, p) in self.vertices.iter().enumerate() {
            let v = p.dot(&d);
            if v > val {
                val = v;
                best = i;
            }
        }
        best
    }

    /// Max of signed side distances: `<= 0` iff `p` lies in the closed
    /// polygon. Negative values are exact distances to the boundary.
    pub fn gauge_excess(&self, p: Vector2<f64>) -> f64 {
        self.outward
            .iter()
            .zip(&self.offsets)
            .map(|(n, c)| n.dot(&p) - c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: Vector2<f64>) -> bool {
        self.gauge_excess(p) <= MEMBERSHIP_TOL
    }

    /// Euclidean nearest point of the closed polygon. Identity inside.
    pub fn project(&self, p: Vector2<f64>) -> Vector2<f64> {
        if self.gauge_excess(p) <= 0.0 {
            return p;
        }
        let n = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d2 = f64::INFINITY;
        for i in 0..n {
            let (a, b) = self.side(i);
            let q = closest_on_segment(a, b, p);
            let d2 = (q - p).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best = q;
            }
        }
        best
    }

    /// True Euclidean distance to the closed polygon (0 inside).
    pub fn distance(&self, p: Vector2<f64>) -> f64 {
        (self.project(p) - p).norm()
    }

    /// Projection together with the local frame of the nearest-point map,
    /// which is what the chain rule through `project` needs: the identity
    /// inside, a rank-one deficient tangential map on a side fan, and the
    /// zero map on a vertex fan.
    pub fn project_with_frame(&self, p: Vector2<f64>) -> (Vector2<f64>, ProjectionFrame) {
        if self.gauge_excess(p) <= 0.0 {
            return (p, ProjectionFrame::Inside);
        }
        let n = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d2 = f64::INFINITY;
        let mut best_side = 0usize;
        let mut best_t = 0.0;
        for i in 0..n {
            let (a, b) = self.side(i);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let q = a + ab * t;
            let d2 = (q - p).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best = q;
                best_side = i;
                best_t = t;
            }
        }
        let frame = if best_t <= 1e-12 {
            ProjectionFrame::Vertex(best_side)
        } else if best_t >= 1.0 - 1e-12 {
            ProjectionFrame::Vertex((best_side + 1) % n)
        } else {
            ProjectionFrame::Side(best_side)
        };
        (best, frame)
    }

    /// The compactifying sphere map `H`: continuous on the closed polygon,
    /// collapses the boundary to the south pole (0,0,-1), sends `z_0` to the
    /// north pole, and is injective on the open polygon minus the (possibly
    /// degenerate) top level set of the distance function.
    ///
    /// Construction: radial coordinate r = 1 - dist(p, boundary)/margin(z_0)
    /// clamped to [0,1], angular coordinate of p - z_0, mapped to the sphere
    /// by (sin(pi r) cos th, sin(pi r) sin th, cos(pi r)). Points outside the
    /// polygon are clamped through `project` first.
    pub fn h_map(&self, p: Vector2<f64>) -> [f64; 3] {
        let q = self.project(p);
        let dist = (-self.gauge_excess(q)).max(0.0);
        let r = (1.0 - dist / self.inradius_at_center).clamp(0.0, 1.0);
        let rel = q - self.interior_point;
        let theta = rel.y.atan2(rel.x);
        let s = (std::f64::consts::PI * r).sin();
        let c = (std::f64::consts::PI * r).cos();
        [s * theta.cos(), s * theta.sin(), c]
    }

    /// Lipschitz constant recorded for `h_map`: pi*sqrt(2)/margin(z_0) bounds
    /// both the radial rate pi/margin and the angular rate sin(pi r)/|p-z_0|.
    pub fn h_lipschitz(&self) -> f64 {
        std::f64::consts::PI * 2.0_f64.sqrt() / self.inradius_at_center
    }

    /// Direction `omega_i` at vertex `i` with `omega_i . (p - p_i) > 0` for
    /// every other point of the closed polygon: the normalized bisector of
    /// the two edge directions leaving the vertex.
    pub fn vertex_inward_direction(&self, i: usize) -> Vector2<f64> {
        let n = self.vertices.len();
        let p = self.vertices[i];
        let d1 = (self.vertices[(i + 1) % n] - p).normalize();
        let d2 = (self.vertices[(i + n - 1) % n] - p).normalize();
        (d1 + d2).normalize()
    }
}

/// Which piece of the nearest-point map a query point landed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionFrame {
    Inside,
    /// Projected to the interior of side `i`.
    Side(usize),
    /// Projected to vertex `i`.
    Vertex(usize),
}

fn signed_area2(ring: &[Vector2<f64>]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    s
}

pub(crate) fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

pub(crate) fn closest_on_segment(
    a: Vector2<f64>,
    b: Vector2<f64>,
    p: Vector2<f64>,
) -> Vector2<f64> {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    a + ab * t
}

/// Chebyshev center of `{z : n_i . z <= c_i}`: maximizes the inradius
/// `t` subject to `n_i . z + t <= c_i`. Solved by enumerating active triples
/// of the small 3-variable LP; ties broken lexicographically by (t, x, y).
fn chebyshev_center(
    outward: &[Vector2<f64>],
    offsets: &[f64],
) -> Result<(Vector2<f64>, f64), GeometryError> {
    let m = outward.len();
    let feasible = |z: Vector2<f64>, t: f64| -> bool {
        outward
            .iter()
            .zip(offsets)
            .all(|(n, c)| n.dot(&z) + t <= c + 1e-9)
    };
    let mut best: Option<(f64, Vector2<f64>)> = None;
    for i in 0..m {
        for j in (i + 1)..m {
            for k in (j + 1)..m {
                // Solve n_q . z + t = c_q for q in {i,j,k}.
                let rows = [i, j, k];
                let mut a = nalgebra::Matrix3::zeros();
                let mut rhs = nalgebra::Vector3::zeros();
                for (r, &q) in rows.iter().enumerate() {
                    a[(r, 0)] = outward[q].x;
                    a[(r, 1)] = outward[q].y;
                    a[(r, 2)] = 1.0;
                    rhs[r] = offsets[q];
                }
                let Some(inv) = a.try_inverse() else {
                    continue;
                };
                let sol = inv * rhs;
                let z = Vector2::new(sol[0], sol[1]);
                let t = sol[2];
                if t <= 0.0 || !feasible(z, t) {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((bt, bz)) => {
                        t > bt + 1e-12
                            || ((t - bt).abs() <= 1e-12
                                && (z.x, z.y) < (bz.x, bz.y))
                    }
                };
                if better {
                    best = Some((t, z));
                }
            }
        }
    }
    best.map(|(t, z)| (z, t))
        .ok_or(GeometryError::EmptyInterior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn square() -> GradientPolygon {
        GradientPolygon::square(1.0)
    }

    #[test]
    fn support_square_and_homogeneity() {
        let n = square();
        assert_eq!(n.support(Vector2::new(1.0, 0.0)), 1.0);
        assert_eq!(n.support(Vector2::new(0.0, 0.0)), 0.0);
        let d = Vector2::new(0.3, -0.7);
        let s = n.support(d);
        assert!((n.support(d * 2.5) - 2.5 * s).abs() < 1e-12);
    }

    #[test]
    fn support_triangle_brute_force() {
        // Dense sample of the closed triangle {(0,0),(1,0),(0,1)}: the max of
        // p.d over the region must match the vertex maximum.
        let tri = GradientPolygon::new(vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
        ])
        .unwrap();
        let d = Vector2::new(1.0, 1.0);
        let mut brute = f64::NEG_INFINITY;
        let k = 300;
        for i in 0..=k {
            for j in 0..=(k - i) {
                let p = Vector2::new(i as f64 / k as f64, j as f64 / k as f64);
                brute = brute.max(p.dot(&d));
            }
        }
        assert!((tri.support(d) - 1.0).abs() < 1e-12);
        assert!((tri.support(d) - brute).abs() < 1e-2 / k as f64 * k as f64);
        assert!(brute <= tri.support(d) + 1e-12);
    }

    #[test]
    fn support_is_convex_in_direction() {
        let n = GradientPolygon::lozenge_triangle();
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..10_000 {
            let d1 = Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let d2 = Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mid = (d1 + d2) * 0.5;
            assert!(n.support(mid) <= 0.5 * (n.support(d1) + n.support(d2)) + 1e-12);
        }
    }

    #[test]
    fn support_monotone_under_vertex_inclusion() {
        let smaller = GradientPolygon::new(vec![
            Vector2::new(-1.0, -1.0),
            Vector2::new(1.0, -1.0),
            Vector2::new(1.0, 1.0),
        ])
        .unwrap();
        let larger = square();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let d = Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            assert!(smaller.support(d) <= larger.support(d) + 1e-12);
        }
    }

    #[test]
    fn gauge_excess_square_values() {
        let n = square();
        assert!((n.gauge_excess(Vector2::new(0.0, 0.0)) + 1.0).abs() < 1e-15);
        assert!((n.gauge_excess(Vector2::new(2.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!(n.gauge_excess(Vector2::new(1.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn project_square_cases() {
        let n = square();
        let inside = Vector2::new(0.2, -0.7);
        assert_eq!(n.project(inside), inside);
        assert!((n.project(Vector2::new(3.0, 0.0)) - Vector2::new(1.0, 0.0)).norm() < 1e-15);
        assert!((n.project(Vector2::new(2.0, 2.0)) - Vector2::new(1.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn projection_distance_matches_boundary_sampling() {
        let n = GradientPolygon::lozenge_triangle();
        let mut rng = StdRng::seed_from_u64(3);
        // Dense boundary sample as an independent distance oracle.
        let mut boundary = Vec::new();
        for i in 0..n.side_count() {
            let (a, b) = n.side(i);
            for k in 0..=4000 {
                boundary.push(a + (b - a) * (k as f64 / 4000.0));
            }
        }
        for _ in 0..200 {
            let p = Vector2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let q = n.project(p);
            assert!(n.gauge_excess(q) <= 1e-9);
            if n.gauge_excess(p) > 0.0 {
                let sampled: f64 = boundary
                    .iter()
                    .map(|y| (y - p).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(((q - p).norm() - sampled).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn h_map_collapse_and_poles() {
        let n = square();
        for i in 0..n.side_count() {
            let (a, b) = n.side(i);
            for k in 0..=10 {
                let p = a + (b - a) * (k as f64 / 10.0);
                let h = n.h_map(p);
                assert!((h[0]).abs() < 1e-9 && (h[1]).abs() < 1e-9 && (h[2] + 1.0).abs() < 1e-9);
            }
        }
        let h0 = n.h_map(n.interior_point());
        assert!((h0[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn h_map_injective_on_interior_samples() {
        let n = square();
        let mut rng = StdRng::seed_from_u64(11);
        let pts: Vec<Vector2<f64>> = (0..400)
            .map(|_| Vector2::new(rng.gen_range(-0.999..0.999), rng.gen_range(-0.999..0.999)))
            .collect();
        let imgs: Vec<[f64; 3]> = pts.iter().map(|&p| n.h_map(p)).collect();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if (pts[i] - pts[j]).norm() > 1e-6 {
                    let d = (imgs[i][0] - imgs[j][0]).abs()
                        + (imgs[i][1] - imgs[j][1]).abs()
                        + (imgs[i][2] - imgs[j][2]).abs();
                    assert!(d > 0.0, "H collapsed {:?} and {:?}", pts[i], pts[j]);
                }
            }
        }
    }

    #[test]
    fn h_map_lipschitz_bound() {
        let n = GradientPolygon::lozenge_triangle();
        let lip = n.h_lipschitz();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20_000 {
            let p = Vector2::new(rng.gen_range(-1.3..1.3), rng.gen_range(-0.8..1.5));
            let q = p + Vector2::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
            if !n.contains(p) || !n.contains(q) {
                continue;
            }
            let hp = n.h_map(p);
            let hq = n.h_map(q);
            let dh = ((hp[0] - hq[0]).powi(2) + (hp[1] - hq[1]).powi(2) + (hp[2] - hq[2]).powi(2))
                .sqrt();
            assert!(dh <= lip * (p - q).norm() + 1e-9);
        }
    }

    #[test]
    fn h_map_boundary_iff_gauge_zero() {
        let n = square();
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..2000 {
            let p = Vector2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let h = n.h_map(p);
            let at_pole = (h[2] + 1.0).abs() < 1e-9;
            let on_or_out = n.gauge_excess(p) >= -1e-9;
            assert_eq!(at_pole, on_or_out, "at {p:?}");
        }
    }

    #[test]
    fn cw_input_is_reversed_with_flag() {
        let n = GradientPolygon::new(vec![
            Vector2::new(-1.0, 1.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(1.0, -1.0),
            Vector2::new(-1.0, -1.0),
        ])
        .unwrap();
        assert!(n.reversed_on_load());
        assert!(n.contains(Vector2::new(0.0, 0.0)));
    }

    #[test]
    fn rejects_nonconvex_ring() {
        let r = GradientPolygon::new(vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(2.0, 0.0),
            Vector2::new(1.0, 0.1),
            Vector2::new(1.0, 2.0),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn chebyshev_center_of_square_is_origin() {
        let n = square();
        assert!((n.interior_point() - Vector2::new(0.0, 0.0)).norm() < 1e-9);
        assert!((n.interior_margin() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vertex_inward_direction_separates() {
        let n = GradientPolygon::lozenge_triangle();
        for i in 0..3 {
            let w = n.vertex_inward_direction(i);
            let pi = n.vertices()[i];
            for (j, p) in n.vertices().iter().enumerate() {
                if i != j {
                    assert!(w.dot(&(p - pi)) > 0.0);
                }
            }
        }
    }
}

//! Surface-tension models `F` on the closed constraint polygon.
//!
//! Three families are provided:
//! - `quadratic`: `F(p) = |p|^2`, smooth and uniformly convex, for exact
//!   oracles and solver sanity runs.
//! - `lozenge`: the stepped-surface tension. With `(a,b,c)` the barycentric
//!   coordinates of `p` in the triangle `N` (vertex k of `N` maps to the
//!   unit proportion e_k), the density is
//!       sigma(p) = -(1/pi) [ L(pi a) + L(pi b) + L(pi c) ],
//!   where `L` is the Lobachevsky function. It is strictly convex inside,
//!   zero on the boundary (L(pi-x) = -L(x)), and symmetric in (a,b,c).
//! - `custom-singular`: a quadratic base plus radial terms
//!   `w_j |p - q_j|^(1+s_j)` with `s_j` in (0,1): finite and C^1 at each
//!   `q_j` but with unbounded second derivatives there, which is exactly the
//!   finite singular set the degenerate regularity theory allows.
//!
//! Second derivatives are refused within a declared radius of a singular
//! point; values and first derivatives are served everywhere inside.

use nalgebra::{Matrix2, Vector2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;

use crate::error::TensionError;
use crate::geometry::{GradientPolygon, MEMBERSHIP_TOL};
use crate::lobachevsky::{lobachevsky, lobachevsky_prime, lobachevsky_second};

/// Value and optional derivatives of a tension evaluation.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub value: f64,
    pub gradient: Option<Vector2<f64>>,
    pub hessian: Option<Matrix2<f64>>,
}

#[derive(Clone, Debug)]
pub struct SingularTerm {
    pub center: Vector2<f64>,
    /// Exponent s in (0,1); the radial profile is |p - center|^(1+s).
    pub exponent: f64,
    pub weight: f64,
}

#[derive(Clone, Debug)]
enum Kind {
    Quadratic,
    Lozenge {
        /// Barycentric forms a_k(p) = g_k . p + b_k.
        forms: [(Vector2<f64>, f64); 3],
    },
    CustomSingular {
        terms: Vec<SingularTerm>,
        base_weight: f64,
    },
}

#[derive(Clone, Debug)]
pub struct TensionModel {
    polygon: GradientPolygon,
    kind: Kind,
    singular_points: Vec<Vector2<f64>>,
    singular_radius: f64,
}

impl TensionModel {
    pub fn quadratic(polygon: GradientPolygon) -> Self {
        Self {
            polygon,
            kind: Kind::Quadratic,
            singular_points: Vec::new(),
            singular_radius: 0.0,
        }
    }

    pub fn lozenge(polygon: GradientPolygon) -> Result<Self, TensionError> {
        if polygon.side_count() != 3 {
            return Err(TensionError::NotATriangle {
                sides: polygon.side_count(),
            });
        }
        let v = [
            polygon.vertices()[0],
            polygon.vertices()[1],
            polygon.vertices()[2],
        ];
        let mut forms = [(Vector2::zeros(), 0.0); 3];
        for k in 0..3 {
            // a_k affine with a_k(v_j) = delta_kj.
            let m = nalgebra::Matrix3::new(
                v[0].x, v[0].y, 1.0, //
                v[1].x, v[1].y, 1.0, //
                v[2].x, v[2].y, 1.0,
            );
            let mut rhs = nalgebra::Vector3::zeros();
            rhs[k] = 1.0;
            let sol = m
                .lu()
                .solve(&rhs)
                .expect("strictly convex triangle has independent vertices");
            forms[k] = (Vector2::new(sol[0], sol[1]), sol[2]);
        }
        Ok(Self {
            polygon,
            kind: Kind::Lozenge { forms },
            singular_points: Vec::new(),
            singular_radius: 0.0,
        })
    }

    pub fn custom_singular(
        polygon: GradientPolygon,
        terms: Vec<SingularTerm>,
        base_weight: f64,
        singular_radius: f64,
    ) -> Result<Self, TensionError> {
        for (index, t) in terms.iter().enumerate() {
            if !(t.exponent > 0.0 && t.exponent < 1.0) {
                return Err(TensionError::BadSingularExponent { value: t.exponent });
            }
            if polygon.gauge_excess(t.center) >= -MEMBERSHIP_TOL {
                return Err(TensionError::SingularPointOutside { index });
            }
        }
        let singular_points = terms.iter().map(|t| t.center).collect();
        Ok(Self {
            polygon,
            kind: Kind::CustomSingular { terms, base_weight },
            singular_points,
            singular_radius,
        })
    }

    pub fn polygon(&self) -> &GradientPolygon {
        &self.polygon
    }

    pub fn singular_points(&self) -> &[Vector2<f64>] {
        &self.singular_points
    }

    pub fn singular_radius(&self) -> f64 {
        self.singular_radius
    }

    pub fn is_lozenge(&self) -> bool {
        matches!(self.kind, Kind::Lozenge { .. })
    }

    fn distance_to_singular(&self, p: Vector2<f64>) -> Option<(usize, f64)> {
        self.singular_points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (p - q).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Evaluate value (order 0), plus gradient (order 1), plus Hessian
    /// (order 2) at a point of the closed polygon.
    pub fn eval(&self, p: Vector2<f64>, order: u8) -> Result<Jet, TensionError> {
        let excess = self.polygon.gauge_excess(p);
        if excess > MEMBERSHIP_TOL {
            return Err(TensionError::OutsideDomain { excess });
        }
        if order >= 2 {
            if let Some((index, d)) = self.distance_to_singular(p) {
                if d < self.singular_radius {
                    return Err(TensionError::SingularPoint {
                        index,
                        radius: self.singular_radius,
                    });
                }
            }
        }
        Ok(self.eval_unchecked(p, order))
    }

    /// Evaluation without the domain / singular-radius guards. Used by the
    /// penalized family, whose inset construction keeps sample points in
    /// safe territory by itself.
    pub(crate) fn eval_unchecked(&self, p: Vector2<f64>, order: u8) -> Jet {
        match &self.kind {
            Kind::Quadratic => Jet {
                value: p.norm_squared(),
                gradient: (order >= 1).then(|| 2.0 * p),
                hessian: (order >= 2).then(|| Matrix2::identity() * 2.0),
            },
            Kind::Lozenge { forms } => {
                let mut value = 0.0;
                let mut grad = Vector2::zeros();
                let mut hess = Matrix2::zeros();
                for (g, b) in forms {
                    // Clamp to [0,1]: boundary evaluations may carry rounding
                    // a hair outside the simplex.
                    let a = (g.dot(&p) + b).clamp(0.0, 1.0);
                    value -= lobachevsky(PI * a) / PI;
                    if order >= 1 {
                        grad -= g * lobachevsky_prime(PI * a);
                    }
                    if order >= 2 {
                        hess -= (g * g.transpose()) * (PI * lobachevsky_second(PI * a));
                    }
                }
                Jet {
                    value,
                    gradient: (order >= 1).then_some(grad),
                    hessian: (order >= 2).then_some(hess),
                }
            }
            Kind::CustomSingular { terms, base_weight } => {
                let mut value = base_weight * p.norm_squared();
                let mut grad = 2.0 * base_weight * p;
                let mut hess = Matrix2::identity() * (2.0 * base_weight);
                for t in terms {
                    let r = p - t.center;
                    let rn = r.norm();
                    let s = t.exponent;
                    value += t.weight * rn.powf(1.0 + s);
                    if rn > 0.0 {
                        if order >= 1 {
                            grad += r * (t.weight * (1.0 + s) * rn.powf(s - 1.0));
                        }
                        // Inside the declared singular radius the term's
                        // curvature is unbounded; the unchecked path serves
                        // the smooth remainder so Newton models keep the
                        // base curvature instead of stalling on a floor
                        // substitute. The checked API still refuses order 2
                        // there.
                        if order >= 2 && rn >= self.singular_radius {
                            let rhat = r / rn;
                            let outer = rhat * rhat.transpose();
                            hess += (Matrix2::identity() + outer * (s - 1.0))
                                * (t.weight * (1.0 + s) * rn.powf(s - 1.0));
                        }
                    }
                }
                Jet {
                    value,
                    gradient: (order >= 1).then_some(grad),
                    hessian: (order >= 2).then_some(hess),
                }
            }
        }
    }

    /// Min/max Hessian eigenvalues over a sampled region. The caller supplies
    /// the sample points; every point must stay outside the singular radius.
    pub fn hessian_bounds(
        &self,
        region: &[Vector2<f64>],
    ) -> Result<(f64, f64), TensionError> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &p in region {
            let jet = self.eval(p, 2)?;
            let h = jet.hessian.expect("order 2 requested");
            let (emin, emax) = sym_eigenvalues(&h);
            lo = lo.min(emin);
            hi = hi.max(emax);
        }
        Ok((lo, hi))
    }

    /// Sampled lower probe of the convexity gap at a given separation:
    /// min over sampled interior pairs |q - p| = sep of
    /// F(q) - F(p) - grad F(p) . (q - p). No closed form is claimed.
    pub fn convexity_modulus_probe(&self, separation: f64, samples: usize, seed: u64) -> f64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let vmin = self
            .polygon
            .vertices()
            .iter()
            .fold(Vector2::new(f64::INFINITY, f64::INFINITY), |m, v| {
                Vector2::new(m.x.min(v.x), m.y.min(v.y))
            });
        let vmax = self
            .polygon
            .vertices()
            .iter()
            .fold(Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |m, v| {
                Vector2::new(m.x.max(v.x), m.y.max(v.y))
            });
        let mut best = f64::INFINITY;
        let mut found = 0;
        while found < samples {
            let p = Vector2::new(
                rng.gen_range(vmin.x..vmax.x),
                rng.gen_range(vmin.y..vmax.y),
            );
            let ang: f64 = rng.gen_range(0.0..2.0 * PI);
            let q = p + Vector2::new(ang.cos(), ang.sin()) * separation;
            let margin = separation * 0.1;
            if self.polygon.gauge_excess(p) > -margin || self.polygon.gauge_excess(q) > -margin {
                continue;
            }
            if self
                .distance_to_singular(p)
                .map(|(_, d)| d < self.singular_radius)
                .unwrap_or(false)
            {
                continue;
            }
            found += 1;
            let jp = self.eval_unchecked(p, 1);
            let jq = self.eval_unchecked(q, 0);
            let gap = jq.value - jp.value - jp.gradient.unwrap().dot(&(q - p));
            best = best.min(gap);
        }
        best
    }
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)];
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - rad, mean + rad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lozenge() -> TensionModel {
        TensionModel::lozenge(GradientPolygon::lozenge_triangle()).unwrap()
    }

    fn barycentric_point(model: &TensionModel, a: f64, b: f64, c: f64) -> Vector2<f64> {
        let v = model.polygon().vertices();
        v[0] * a + v[1] * b + v[2] * c
    }

    #[test]
    fn quadratic_closed_form() {
        let m = TensionModel::quadratic(GradientPolygon::square(1.0));
        let jet = m.eval(Vector2::new(0.3, 0.4), 2).unwrap();
        assert!((jet.value - 0.25).abs() < 1e-15);
        assert!((jet.gradient.unwrap() - Vector2::new(0.6, 0.8)).norm() < 1e-15);
        assert!((jet.hessian.unwrap() - Matrix2::identity() * 2.0).norm() < 1e-15);
    }

    #[test]
    fn lozenge_barycenter_value() {
        let m = lozenge();
        let p = barycentric_point(&m, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        let jet = m.eval(p, 1).unwrap();
        // -(3/pi) L(pi/3), cross-checked against an independent 30-digit oracle.
        assert!((jet.value - (-0.323065947219450514)).abs() < 1e-12);
        // The barycenter is the symmetric critical point.
        assert!(jet.gradient.unwrap().norm() < 1e-10);
    }

    #[test]
    fn lozenge_zero_on_boundary() {
        let m = lozenge();
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..1000 {
            let t: f64 = rng.gen_range(0.0..1.0);
            let side = rng.gen_range(0..3);
            let (x, y, z) = match side {
                0 => (t, 1.0 - t, 0.0),
                1 => (0.0, t, 1.0 - t),
                _ => (1.0 - t, 0.0, t),
            };
            let p = barycentric_point(&m, x, y, z);
            let jet = m.eval(p, 0).unwrap();
            assert!(jet.value.abs() < 1e-9, "sigma({x},{y},{z}) = {}", jet.value);
        }
    }

    #[test]
    fn lozenge_midpoint_convexity() {
        let m = lozenge();
        let mut rng = StdRng::seed_from_u64(2);
        let mut tested = 0;
        while tested < 10_000 {
            let a = rng.gen_range(0.0..1.0);
            let b = rng.gen_range(0.0..1.0 - a);
            let a2 = rng.gen_range(0.0..1.0);
            let b2 = rng.gen_range(0.0..1.0 - a2);
            let p = barycentric_point(&m, a, b, 1.0 - a - b);
            let q = barycentric_point(&m, a2, b2, 1.0 - a2 - b2);
            tested += 1;
            let fm = m.eval((p + q) * 0.5, 0).unwrap().value;
            let fp = m.eval(p, 0).unwrap().value;
            let fq = m.eval(q, 0).unwrap().value;
            assert!(fm <= 0.5 * (fp + fq) + 1e-12);
        }
    }

    #[test]
    fn lozenge_symmetric_under_proportion_permutations() {
        let m = lozenge();
        let (a, b, c) = (0.2, 0.35, 0.45);
        let perms = [
            (a, b, c),
            (a, c, b),
            (b, a, c),
            (b, c, a),
            (c, a, b),
            (c, b, a),
        ];
        let vals: Vec<f64> = perms
            .iter()
            .map(|&(x, y, z)| m.eval(barycentric_point(&m, x, y, z), 0).unwrap().value)
            .collect();
        for v in &vals[1..] {
            assert!((v - vals[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let square = GradientPolygon::square(1.0);
        let models = vec![
            TensionModel::quadratic(square.clone()),
            lozenge(),
            TensionModel::custom_singular(
                square,
                vec![SingularTerm {
                    center: Vector2::new(0.2, -0.1),
                    exponent: 0.5,
                    weight: 0.7,
                }],
                1.0,
                1e-3,
            )
            .unwrap(),
        ];
        let h = 1e-5;
        for model in &models {
            let mut rng = StdRng::seed_from_u64(4);
            let mut tested = 0;
            while tested < 1000 {
                let p = Vector2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.0..1.5));
                // Stay away from the boundary and singular set so the centered
                // stencil is admissible.
                if model.polygon().gauge_excess(p) > -0.05 {
                    continue;
                }
                if model
                    .singular_points()
                    .iter()
                    .any(|q| (p - q).norm() < 0.05)
                {
                    continue;
                }
                tested += 1;
                let jet = model.eval(p, 2).unwrap();
                let g = jet.gradient.unwrap();
                let fd = Vector2::new(
                    (model.eval(p + Vector2::new(h, 0.0), 0).unwrap().value
                        - model.eval(p - Vector2::new(h, 0.0), 0).unwrap().value)
                        / (2.0 * h),
                    (model.eval(p + Vector2::new(0.0, h), 0).unwrap().value
                        - model.eval(p - Vector2::new(0.0, h), 0).unwrap().value)
                        / (2.0 * h),
                );
                let scale = g.norm().max(1.0);
                assert!(
                    (g - fd).norm() <= 1e-6 * scale,
                    "gradient mismatch at {p:?}: {g:?} vs fd {fd:?}"
                );
                // Hessian against finite differences of the gradient.
                let hess = jet.hessian.unwrap();
                let gx = (model.eval(p + Vector2::new(h, 0.0), 1).unwrap().gradient.unwrap()
                    - model.eval(p - Vector2::new(h, 0.0), 1).unwrap().gradient.unwrap())
                    / (2.0 * h);
                let gy = (model.eval(p + Vector2::new(0.0, h), 1).unwrap().gradient.unwrap()
                    - model.eval(p - Vector2::new(0.0, h), 1).unwrap().gradient.unwrap())
                    / (2.0 * h);
                let fd_h = Matrix2::new(gx.x, gy.x, gx.y, gy.y);
                let hscale = hess.norm().max(1.0);
                assert!(
                    (hess - fd_h).norm() <= 1e-4 * hscale,
                    "hessian mismatch at {p:?}"
                );
            }
        }
    }

    #[test]
    fn eval_errors() {
        let m = lozenge();
        let outside = Vector2::new(5.0, 5.0);
        assert!(matches!(
            m.eval(outside, 0),
            Err(TensionError::OutsideDomain { .. })
        ));
        let cs = TensionModel::custom_singular(
            GradientPolygon::square(1.0),
            vec![SingularTerm {
                center: Vector2::new(0.0, 0.0),
                exponent: 0.5,
                weight: 1.0,
            }],
            1.0,
            1e-2,
        )
        .unwrap();
        assert!(matches!(
            cs.eval(Vector2::new(1e-3, 0.0), 2),
            Err(TensionError::SingularPoint { .. })
        ));
        // Value and gradient are still served inside the singular radius.
        assert!(cs.eval(Vector2::new(1e-3, 0.0), 1).is_ok());
    }

    #[test]
    fn hessian_bounds_quadratic_constant() {
        let m = TensionModel::quadratic(GradientPolygon::square(1.0));
        let pts: Vec<Vector2<f64>> = (0..50)
            .map(|k| Vector2::new(-0.9 + 0.036 * k as f64, 0.1))
            .collect();
        let (lo, hi) = m.hessian_bounds(&pts).unwrap();
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hessian_bounds_lozenge_disk_bracket() {
        let m = lozenge();
        let bary = barycentric_point(&m, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        // Coarse disk sample checked by the library call.
        let mut disk = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let p = bary
                    + Vector2::new(
                        -0.05 + 0.005 * i as f64 + 0.0025,
                        -0.05 + 0.005 * j as f64 + 0.0025,
                    );
                if (p - bary).norm() <= 0.05 {
                    disk.push(p);
                }
            }
        }
        let (lo, hi) = m.hessian_bounds(&disk).unwrap();
        // Dense-sampling oracle at step 1e-3.
        let mut olo = f64::INFINITY;
        let mut ohi = f64::NEG_INFINITY;
        let n = 100;
        for i in 0..=n {
            for j in 0..=n {
                let p = bary
                    + Vector2::new(
                        -0.05 + 0.1 * i as f64 / n as f64,
                        -0.05 + 0.1 * j as f64 / n as f64,
                    );
                if (p - bary).norm() <= 0.05 {
                    let h = m.eval(p, 2).unwrap().hessian.unwrap();
                    let (a, b) = sym_eigenvalues(&h);
                    olo = olo.min(a);
                    ohi = ohi.max(b);
                }
            }
        }
        assert!(lo >= olo - 1e-6 && hi <= ohi + 1e-6);
        assert!(lo > 0.0, "lozenge Hessian must be positive near the barycenter");
    }

    #[test]
    fn lozenge_lambda_min_decays_toward_boundary() {
        let m = lozenge();
        let bary = barycentric_point(&m, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        // Nested annuli approaching the boundary: the smallest Hessian
        // eigenvalue over the inner samples decreases as the annuli reach
        // closer to the boundary.
        let mut last = f64::INFINITY;
        for &shrink in &[0.5, 0.8, 0.9, 0.95, 0.99] {
            let mut pts = Vec::new();
            for k in 0..720 {
                let ang = 2.0 * PI * k as f64 / 720.0;
                let dir = Vector2::new(ang.cos(), ang.sin());
                // Scale toward the boundary along rays from the barycenter.
                let mut t = 0.0;
                let mut step = 1.0;
                while step > 1e-9 {
                    while m.polygon().gauge_excess(bary + dir * (t + step)) < 0.0 {
                        t += step;
                    }
                    step *= 0.5;
                }
                pts.push(bary + dir * (t * shrink));
            }
            let (lo, _) = m.hessian_bounds(&pts).unwrap();
            assert!(lo < last + 1e-12, "lambda_min not decreasing at {shrink}");
            last = lo;
        }
        assert!(last < 0.05, "lambda_min should approach 0 near the boundary");
    }

    #[test]
    fn convexity_probe_positive_inside() {
        let m = lozenge();
        let probe = m.convexity_modulus_probe(0.1, 2000, 9);
        assert!(probe > 0.0);
    }
}

//! The smooth penalized family `F_m` approximating a tension model.
//!
//! For a base model `F` on the closed polygon `N` the stage-`m` member is
//!
//!   F_m(p) = A_m(q') + t_m grad A_m(q') . (p - project(p))
//!            + C_m * sum_i g(n_i . p - c_i) + eps_m |p|^2,
//!
//! with `g(t) = max(t,0)^3`, `(n_i, c_i)` the outward side frames of `N`,
//! and
//! - `q' = inset_m(p) = z0 + t_m (project(p) - z0)`,
//!   `t_m = 1 - r_m / margin(z0)`: the projection pulled toward the
//!   interior point by the mollification radius `r_m`, so every evaluation
//!   of `F` happens at distance >= r_m from the boundary;
//! - `A_m` the 8-point disk average of `F` at radius `r_m / sqrt(2)` (the
//!   radius reproduces disk averages of quadratics exactly);
//! - the first-order term extends the averaged model through the
//!   projection. Composing with `project` alone drops the outward slope at
//!   the crease, and that concave gradient jump makes the discrete energy
//!   landscape multi-stationary; the tangent extension is C^1 across the
//!   polygon boundary and changes nothing inside.
//!
//! The schedule drives `C_m -> inf`, `eps_m -> 0`, `r_m -> 0`, giving
//! uniform convergence to `F` on the polygon, a strict convexity floor of
//! `2 eps_m`, and cubic growth with weight `C_m` outside.
//!
//! Order-2 evaluations return the positive-semidefinite model Hessian
//! `t^2 J D2A J + penalty + 2 eps I` (J the projection frame): exact inside
//! the polygon, and a Gauss-Newton-style model outside where the tangent
//! extension's mixed second-order terms would not be sign-definite.

use nalgebra::{Matrix2, Vector2};
use std::f64::consts::PI;

use crate::error::TensionError;
use crate::geometry::ProjectionFrame;
use crate::tension::{Jet, TensionModel};

/// Geometric penalty schedule; the defaults are
/// `C_m = 4^m`, `eps_m = 4^-m`, `r_m = 2^-m * margin(z0)`.
#[derive(Clone, Copy, Debug)]
pub struct PenaltySchedule {
    pub c_base: f64,
    pub eps_base: f64,
    pub moll_base: f64,
    /// Stages run m = 1 ..= m_max.
    pub m_max: usize,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self {
            c_base: 4.0,
            eps_base: 4.0,
            moll_base: 2.0,
            m_max: 8,
        }
    }
}

impl PenaltySchedule {
    pub fn penalty_weight(&self, m: usize) -> f64 {
        self.c_base.powi(m as i32)
    }

    pub fn epsilon(&self, m: usize) -> f64 {
        self.eps_base.powi(-(m as i32))
    }

    pub fn mollification_fraction(&self, m: usize) -> f64 {
        self.moll_base.powi(-(m as i32))
    }
}

#[derive(Clone, Debug)]
pub struct PenalizedTension {
    base: TensionModel,
    m: usize,
    penalty_weight: f64,
    epsilon: f64,
    mollification_radius: f64,
    inset_scale: f64,
    sample_offsets: [Vector2<f64>; 8],
}

/// Build the stage-`m` member of the penalized family (m >= 1).
pub fn build_penalized(base: &TensionModel, m: usize, schedule: &PenaltySchedule) -> PenalizedTension {
    assert!(m >= 1, "penalty stages start at m = 1");
    let margin = base.polygon().interior_margin();
    let r = schedule.mollification_fraction(m) * margin;
    let rho = r / 2.0_f64.sqrt();
    let mut sample_offsets = [Vector2::zeros(); 8];
    for (k, off) in sample_offsets.iter_mut().enumerate() {
        let ang = PI / 4.0 * k as f64;
        *off = Vector2::new(ang.cos(), ang.sin()) * rho;
    }
    PenalizedTension {
        base: base.clone(),
        m,
        penalty_weight: schedule.penalty_weight(m),
        epsilon: schedule.epsilon(m),
        mollification_radius: r,
        inset_scale: 1.0 - schedule.mollification_fraction(m),
        sample_offsets,
    }
}

impl PenalizedTension {
    pub fn base(&self) -> &TensionModel {
        &self.base
    }

    pub fn stage(&self) -> usize {
        self.m
    }

    pub fn penalty_weight(&self) -> f64 {
        self.penalty_weight
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mollification_radius(&self) -> f64 {
        self.mollification_radius
    }

    /// Total evaluation; defined for every `p` and never fails. Where a disk
    /// sample lands inside the base model's singular radius the averaged
    /// Hessian block is replaced by `eps_m I` (values and gradients are
    /// always exact averages).
    pub fn eval(&self, p: Vector2<f64>, order: u8) -> Jet {
        let polygon = self.base.polygon();
        let (proj, frame) = polygon.project_with_frame(p);
        let z0 = polygon.interior_point();
        let q = z0 + (proj - z0) * self.inset_scale;

        // Outside points need one derivative order more from the average:
        // the tangent extension puts grad A into the value and D2A into the
        // gradient.
        let avg_order = if matches!(frame, ProjectionFrame::Inside) {
            order
        } else {
            (order + 1).min(2)
        };

        // Disk average of the base model around the inset point. The
        // unchecked evaluator serves a finite curvature everywhere (the
        // unbounded singular-term block is dropped inside the declared
        // radius), so the averaged Hessian is always available; should a
        // model ever decline one, the convexity floor stands in.
        let mut value = 0.0;
        let mut grad_a = Vector2::zeros();
        let mut hess_a = Matrix2::zeros();
        let mut hess_substituted = false;
        for off in &self.sample_offsets {
            let x = q + off;
            let jet = self.base.eval_unchecked(x, avg_order);
            value += jet.value;
            if avg_order >= 1 {
                grad_a += jet.gradient.expect("order >= 1 requested");
            }
            if avg_order >= 2 {
                match jet.hessian {
                    Some(h) => hess_a += h,
                    None => hess_substituted = true,
                }
            }
        }
        value /= 8.0;
        grad_a /= 8.0;
        hess_a /= 8.0;
        if hess_substituted {
            hess_a = Matrix2::identity() * self.epsilon;
        }

        // Chain rule through the inset map and the tangent extension:
        // value   = A(q') + t grad A(q') . r,  r = p - project(p),
        // grad    = t grad A(q') + t^2 J D2A(q') r,
        // with J the projection frame (identity inside, tangential on a
        // side fan, zero on a vertex fan). Both reduce to the plain inset
        // formulas inside the polygon where r = 0.
        let t_scale = self.inset_scale;
        let r = p - proj;
        let jac = |v: Vector2<f64>| -> Vector2<f64> {
            match frame {
                ProjectionFrame::Inside => v,
                ProjectionFrame::Side(i) => {
                    let n = polygon.outward_normal(i);
                    v - n * n.dot(&v)
                }
                ProjectionFrame::Vertex(_) => Vector2::zeros(),
            }
        };
        value += t_scale * grad_a.dot(&r);
        let mut grad = grad_a * t_scale + 2.0 * self.epsilon * p;
        let mut hess = Matrix2::identity() * (2.0 * self.epsilon);
        if order >= 1 && !matches!(frame, ProjectionFrame::Inside) {
            grad += jac(hess_a * r) * (t_scale * t_scale);
        }
        if order >= 2 {
            let jh = match frame {
                ProjectionFrame::Inside => hess_a * (t_scale * t_scale),
                ProjectionFrame::Side(i) => {
                    let n = polygon.outward_normal(i);
                    let t = Matrix2::identity() - n * n.transpose();
                    t * hess_a * t * (t_scale * t_scale)
                }
                ProjectionFrame::Vertex(_) => Matrix2::zeros(),
            };
            hess += jh;
        }
        value += self.epsilon * p.norm_squared();
        for i in 0..polygon.side_count() {
            let s = polygon.outward_normal(i).dot(&p) - polygon.side_offset(i);
            if s > 0.0 {
                let n = polygon.outward_normal(i);
                value += self.penalty_weight * s * s * s;
                if order >= 1 {
                    grad += n * (3.0 * self.penalty_weight * s * s);
                }
                if order >= 2 {
                    hess += n * n.transpose() * (6.0 * self.penalty_weight * s);
                }
            }
        }
        Jet {
            value,
            gradient: (order >= 1).then_some(grad),
            hessian: (order >= 2).then_some(hess),
        }
    }

    /// Legendre transform `sup_p (p . q - F_m(p))` by damped Newton ascent,
    /// returning the value and the maximizer. The maximizer satisfies
    /// `grad F_m(p) = q` within the gradient tolerance.
    pub fn legendre(&self, q: Vector2<f64>, tol: f64) -> Result<(f64, Vector2<f64>), TensionError> {
        let mut p = self.base.polygon().interior_point();
        let cap = 200;
        let gtol = tol.max(1e-13);
        for _ in 0..cap {
            let jet = self.eval(p, 2);
            let g = q - jet.gradient.unwrap();
            if g.norm() <= gtol {
                return Ok((p.dot(&q) - jet.value, p));
            }
            let h = jet.hessian.unwrap();
            let step = h.lu().solve(&g).unwrap_or(g * (1.0 / self.epsilon.max(1e-12)));
            let phi0 = p.dot(&q) - jet.value;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = p + step * alpha;
                let phi = cand.dot(&q) - self.eval(cand, 0).value;
                if phi >= phi0 + 1e-4 * alpha * g.dot(&step) {
                    p = cand;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // Fall back to a plain gradient step before giving up.
                let cand = p + g * (1.0 / (1.0 + g.norm()));
                let phi = cand.dot(&q) - self.eval(cand, 0).value;
                if phi <= phi0 {
                    return Err(TensionError::NonConvergence { iterations: cap });
                }
                p = cand;
            }
        }
        Err(TensionError::NonConvergence { iterations: cap })
    }
}

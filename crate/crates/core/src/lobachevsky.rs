//! The Lobachevsky function `L(x) = -∫_0^x log|2 sin t| dt`.
//!
//! The integrand has a log singularity at 0. We peel it off analytically,
//!   ∫_0^x log(2 sin t) dt = ∫_0^x log(2t) dt + ∫_0^x log(sin t / t) dt
//!                         = x (log(2x) - 1)   + smooth part,
//! and integrate the smooth remainder by adaptive Simpson to 1e-12. The
//! function is odd and pi-periodic with L(pi - x) = -L(x), so evaluation is
//! reduced to [0, pi/2].

use std::f64::consts::PI;

/// Target absolute error of the quadrature for the smooth part.
const QUAD_TOL: f64 = 1e-12;

pub fn lobachevsky(x: f64) -> f64 {
    // Reduce to [0, pi) by periodicity, then to [0, pi/2] by reflection.
    let mut t = x.rem_euclid(PI);
    let mut sign = 1.0;
    if t > PI / 2.0 {
        t = PI - t;
        sign = -1.0;
    }
    if t <= 0.0 {
        return 0.0;
    }
    let singular = t - t * (2.0 * t).ln();
    let smooth = -adaptive_simpson(log_sinc, 0.0, t, QUAD_TOL);
    sign * (singular + smooth)
}

/// d/dx L(x) = -log|2 sin x|.
pub fn lobachevsky_prime(x: f64) -> f64 {
    let s = (2.0 * x.sin()).abs();
    -s.ln()
}

/// d^2/dx^2 L(x) = -cot x.
pub fn lobachevsky_second(x: f64) -> f64 {
    -x.cos() / x.sin()
}

fn log_sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        // log(sin t / t) = -t^2/6 - t^4/180 - ...
        return -t * t / 6.0;
    }
    (t.sin() / t).ln()
}

fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let c = 0.5 * (a + b);
    let fa = f(a);
    let fb = f(b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_rec(f, a, b, fa, fb, fc, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64 + Copy>(
    f: F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
    }
}

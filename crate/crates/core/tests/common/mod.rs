//! Independent oracles. Nothing here calls into the crate's own quadrature,
//! special functions or FFT, so every comparison pits two separate codes
//! against each other.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Squared `L²` norm of the Townes profile, frozen from [`townes_mass`].
pub const TOWNES_MASS: f64 = 11.700_896_524_56;

/// Radial ground state of `Q'' + Q'/r − Q + Q³ = 0` by shooting on `Q(0)`.
/// Returns `(Q(0), 2π∫Q² r dr)`.
pub fn townes_mass() -> (f64, f64) {
    const H: f64 = 1e-3;
    const R0: f64 = 1e-6;
    // Overshoot: Q crosses zero. Undershoot: Q turns up while positive.
    // Mass accumulates as a third ODE component so it inherits RK4 accuracy.
    fn shoot(q0: f64) -> (bool, f64) {
        let rhs = |r: f64, y: [f64; 3]| -> [f64; 3] {
            [y[1], -y[1] / r + y[0] - y[0].powi(3), 2.0 * PI * r * y[0] * y[0]]
        };
        // series start: Q ≈ q0 + (q0 − q0³) r²/4
        let c = 0.25 * (q0 - q0.powi(3));
        let mut y = [q0 + c * R0 * R0, 2.0 * c * R0, PI * q0 * q0 * R0 * R0];
        let mut r = R0;
        let mut best_mass = y[2];
        while r < 30.0 {
            let k1 = rhs(r, y);
            let k2 = rhs(r + 0.5 * H, add(y, k1, 0.5 * H));
            let k3 = rhs(r + 0.5 * H, add(y, k2, 0.5 * H));
            let k4 = rhs(r + H, add(y, k3, H));
            for i in 0..3 {
                y[i] += H / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            r += H;
            if y[0] < 0.0 {
                return (true, best_mass);
            }
            if y[1] > 0.0 {
                return (false, best_mass);
            }
            best_mass = y[2];
        }
        (false, best_mass)
    }
    fn add(y: [f64; 3], k: [f64; 3], s: f64) -> [f64; 3] {
        [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]]
    }
    let (mut lo, mut hi) = (2.0, 2.4);
    let mut mass = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (over, m) = shoot(mid);
        mass = m;
        if over {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    (0.5 * (lo + hi), mass)
}

/// Tanh-sinh quadrature on `[a, b]` with successive step halving.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let c = 0.5 * (b + a);
    let d = 0.5 * (b - a);
    let eval = |h: f64, odd_only: bool| -> f64 {
        let mut s = 0.0;
        let mut k: i64 = if odd_only { 1 } else { 0 };
        loop {
            let t = k as f64 * h;
            let u = 0.5 * PI * t.sinh();
            let x = u.tanh();
            let w = 0.5 * PI * t.cosh() / u.cosh().powi(2);
            if w < 1e-300 || x >= 1.0 {
                break;
            }
            let term = if k == 0 {
                w * f(c)
            } else {
                // 1 − x computed without cancellation
                let one_minus = 1.0 / (u.exp() * u.cosh());
                w * (f(c + d * x) + f(c - d + d * one_minus))
            };
            s += term;
            k += if odd_only { 2 } else { 1 };
        }
        s
    };
    let mut h = 0.5;
    let mut total = eval(h, false);
    let mut estimate = d * h * total;
    for _ in 0..12 {
        h *= 0.5;
        total += eval(h, true);
        let next = d * h * total;
        if (next - estimate).abs() <= rel * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// `G(k) = ∫_ℝ e^{−s²/4π}/(k² + s²) ds`, integrated piecewise on a mesh that
/// resolves both the Lorentzian width `k` and the Gaussian width `√(4π)`.
pub fn g_oracle(k: f64) -> f64 {
    let w = (4.0 * PI).sqrt();
    let mut knots = vec![0.0];
    let mut x = k.min(w) / 64.0;
    while x < 12.0 * w {
        knots.push(x);
        x *= if x < w { 2.0 } else { 1.25 };
    }
    knots.push(12.0 * w);
    let f = |s: f64| (-s * s / (4.0 * PI)).exp() / (k * k + s * s);
    2.0 * knots
        .windows(2)
        .map(|p| tanh_sinh(f, p[0], p[1], 1e-14))
        .sum::<f64>()
}

/// `e^z K₀(z)` from `∫_0^∞ e^{−z(cosh t − 1)} dt` by the trapezoid rule,
/// which converges exponentially for this analytic integrand.
pub fn k0_scaled(z: f64) -> f64 {
    let h = 0.005;
    let mut s = 0.5;
    let mut t: f64 = h;
    loop {
        let v = (-z * (t.cosh() - 1.0)).exp();
        s += v;
        if v < 1e-18 {
            break;
        }
        t += h;
    }
    s * h
}

/// Real-space kernel through the Bessel closed form
/// `K(r) = √(2π)·c·e^{πr²/2}K₀(πr²/2)`, `c = 1/(2√2 π^{3/2})`.
pub fn k_oracle(r: f64) -> f64 {
    let c = 1.0 / (2.0 * 2f64.sqrt() * PI.powf(1.5));
    (2.0 * PI).sqrt() * c * k0_scaled(0.5 * PI * r * r)
}

/// Plain DFT in the module's centered convention, `O(n²)` per axis.
pub fn slow_forward(n1: usize, n2: usize, l1: f64, l2: f64, u: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (dx1, dx2) = (l1 / n1 as f64, l2 / n2 as f64);
    let mut out = vec![(0.0, 0.0); n1 * n2];
    for p in 0..n1 {
        for q in 0..n2 {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n1 {
                for j in 0..n2 {
                    let pf = if p < n1 / 2 { p as f64 } else { p as f64 - n1 as f64 };
                    let qf = if q < n2 / 2 { q as f64 } else { q as f64 - n2 as f64 };
                    let x1 = -0.5 * l1 + i as f64 * dx1;
                    let x2 = -0.5 * l2 + j as f64 * dx2;
                    let xi1 = 2.0 * PI * pf / l1;
                    let xi2 = 2.0 * PI * qf / l2;
                    let ph = -(xi1 * x1 + xi2 * x2);
                    let (c, s) = (ph.cos(), ph.sin());
                    let (a, b) = u[i * n2 + j];
                    re += a * c - b * s;
                    im += a * s + b * c;
                }
            }
            let w = dx1 * dx2 / (2.0 * PI);
            out[p * n2 + q] = (re * w, im * w);
        }
    }
    out
}

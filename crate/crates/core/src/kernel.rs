//! The Riemann-Liouville kernel and its weighted integrals.
//!
//! The kernel is K(t, s) = (t - s)^(H - 1/2) for 0 <= s < t with Hurst
//! parameter H in (0, 1/2], and K(t, s) = 0 for s >= t (the diagonal is part
//! of the zero region, so K(t, t) = 0). All quadratures remove the endpoint
//! singularity with the substitution u = v^(1 / (H + 1/2)), which maps
//! u^(H - 1/2) du to dv / (H + 1/2) exactly, and then integrate the bounded
//! remainder adaptively to absolute tolerance 1e-12.

use crate::error::{Error, Result};
use crate::quad;

/// Absolute tolerance for all kernel quadratures.
pub const KERNEL_QUAD_TOL: f64 = 1e-12;

/// The Riemann-Liouville kernel with fixed Hurst parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    h: f64,
}

impl KernelSpec {
    /// Requires H in (0, 1/2].
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 0.5) {
            return Err(Error::invalid(format!("Hurst parameter {h} outside (0, 1/2]")));
        }
        Ok(KernelSpec { h })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// H + 1/2, the exponent of the kernel primitive.
    pub fn h_plus(&self) -> f64 {
        self.h + 0.5
    }

    /// K(t, s): the kernel value, zero on s >= t.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            0.0
        } else {
            (t - s).powf(self.h - 0.5)
        }
    }

    /// Exact integral of K(t, .) over [a, b], clamped to the support [0, t):
    /// ((t - a)^(H+1/2) - (t - min(b, t))^(H+1/2)) / (H + 1/2).
    pub fn primitive(&self, t: f64, a: f64, b: f64) -> Result<f64> {
        if !(0.0 <= a && a <= b) {
            return Err(Error::invalid(format!("bad primitive bounds [{a}, {b}]")));
        }
        let hp = self.h_plus();
        let bc = b.min(t);
        if a >= t || bc <= a {
            return Ok(0.0);
        }
        Ok(((t - a).powf(hp) - (t - bc).powf(hp)) / hp)
    }

    /// Autocovariance of the kernel-driven Gaussian process:
    /// cov_vv(s, t) = int_0^(s ^ t) K(s, r) K(t, r) dr.
    ///
    /// Symmetric in (s, t). On the diagonal the exact value t^(2H) / (2H) is
    /// returned; off the diagonal the substitution above leaves the bounded
    /// integrand (t - s + v^(1/(H+1/2)))^(H-1/2) on [0, s^(H+1/2)].
    pub fn cov_vv(&self, s: f64, t: f64) -> Result<f64> {
        if !(s > 0.0 && t > 0.0) {
            return Err(Error::invalid(format!("cov_vv needs positive times, got ({s}, {t})")));
        }
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        if lo == hi {
            return Ok(lo.powf(2.0 * self.h) / (2.0 * self.h));
        }
        let hp = self.h_plus();
        let a = self.h - 0.5;
        let c = hi - lo;
        let inv_hp = 1.0 / hp;
        let val = quad::integrate(
            |v| (c + v.powf(inv_hp)).powf(a),
            0.0,
            lo.powf(hp),
            KERNEL_QUAD_TOL,
        )?;
        Ok(val / hp)
    }

    /// Numerically integrated left side of the power-weight identity:
    /// int_0^t K(t, r) r^beta dr for beta > -1.
    ///
    /// The range is split at t/2; each half gets the substitution that removes
    /// its own endpoint singularity (kernel end at r = t, weight end at r = 0).
    pub fn weighted_integral(&self, t: f64, beta: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("weighted_integral needs t > 0, got {t}")));
        }
        if !(beta > -1.0) {
            return Err(Error::invalid(format!("weight exponent {beta} must be > -1")));
        }
        let hp = self.h_plus();
        let a = self.h - 0.5;
        let inv_hp = 1.0 / hp;
        // r in [t/2, t]: u = t - r, then u = v^(1/(H+1/2)).
        let kernel_end = quad::integrate(
            |v| (t - v.powf(inv_hp)).powf(beta),
            0.0,
            (0.5 * t).powf(hp),
            KERNEL_QUAD_TOL,
        )? / hp;
        // r in [0, t/2]: r = w^(1/(beta+1)) removes the weight singularity.
        let bp = beta + 1.0;
        let inv_bp = 1.0 / bp;
        let weight_end = quad::integrate(
            |w| (t - w.powf(inv_bp)).powf(a),
            0.0,
            (0.5 * t).powf(bp),
            KERNEL_QUAD_TOL,
        )? / bp;
        Ok(kernel_end + weight_end)
    }

    /// Right side of the same identity: B(H + 1/2, beta + 1) t^(beta + H + 1/2),
    /// with the Beta function evaluated through log-Gamma.
    pub fn beta_identity_oracle(&self, t: f64, beta: f64) -> Result<f64> {
        if !(t > 0.0) || !(beta > -1.0) {
            return Err(Error::invalid(format!("oracle needs t > 0, beta > -1, got ({t}, {beta})")));
        }
        Ok(quad::beta_fn(self.h_plus(), beta + 1.0) * t.powf(beta + self.h_plus()))
    }

    /// Weighted L1 modulus of the kernel increment:
    /// int_0^t |K(t, r) - K(t_i, r)| (t - r)^alpha dr for 0 <= t_i < t.
    ///
    /// Split at r = t_i. On [t_i, t] the old kernel vanishes and the integral
    /// has the closed form (t - t_i)^(alpha + H + 1/2) / (alpha + H + 1/2).
    /// On [0, t_i] the increment is K(t_i, r) - K(t, r) >= 0; substituting
    /// u = t_i - r splits it into a singular part handled by the power
    /// substitution and an exactly integrable shifted power.
    pub fn delta_weighted_integral(&self, t: f64, t_i: f64, alpha: f64) -> Result<f64> {
        if !(t > 0.0 && (0.0..t).contains(&t_i)) {
            return Err(Error::invalid(format!("need 0 <= t_i < t, got ({t_i}, {t})")));
        }
        if !(alpha >= 0.0) {
            return Err(Error::invalid(format!("weight exponent {alpha} must be >= 0")));
        }
        let hp = self.h_plus();
        let q = alpha + hp;
        let delta = t - t_i;
        let recent = delta.powf(q) / q;
        if t_i == 0.0 {
            return Ok(recent);
        }
        let inv_hp = 1.0 / hp;
        let singular = quad::integrate(
            |v| (delta + v.powf(inv_hp)).powf(alpha),
            0.0,
            t_i.powf(hp),
            KERNEL_QUAD_TOL,
        )? / hp;
        let shifted = (t.powf(q) - delta.powf(q)) / q;
        Ok((singular - shifted) + recent)
    }
}

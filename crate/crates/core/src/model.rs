//! Model configuration: volatility function, payoff, and the scalar
//! parameters of the log-price dynamics.
//!
//! The dynamics are dX_t = zeta psi(V_t)^2 dt + psi(V_t) dB_t started at x0,
//! with B = rho W + sqrt(1 - rho^2) Wbar and V the kernel-driven Gaussian
//! process. Volatility and payoff families are closed under the derivative
//! orders the weak-error and sensitivity estimators need (psi up to second
//! order plus the derivatives of psi^2, phi up to third order).

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::kernel::KernelSpec;
use serde::{Deserialize, Serialize};

/// Volatility function family. `eval` covers psi, psi', psi''; `sq_deriv`
/// covers (psi^2)' and (psi^2)''.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum VolSpec {
    /// psi(v) = exp(nu v).
    Exponential { nu: f64 },
    /// psi(v) = sum_k coefficients[k] v^k.
    Polynomial { coefficients: Vec<f64> },
    /// psi(v) = a + b v.
    ShiftedLinear { a: f64, b: f64 },
}

impl VolSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            VolSpec::Exponential { nu } => {
                if !nu.is_finite() {
                    return Err(Error::invalid(format!("vol exponent {nu} must be finite")));
                }
            }
            VolSpec::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid(
                        "polynomial volatility needs nonempty finite coefficients".to_string(),
                    ));
                }
            }
            VolSpec::ShiftedLinear { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::invalid(format!("vol parameters ({a}, {b}) must be finite")));
                }
            }
        }
        Ok(())
    }

    /// psi and its first two derivatives: order 0, 1, or 2.
    pub fn eval(&self, order: u32, v: f64) -> Result<f64> {
        if order > 2 {
            return Err(Error::invalid(format!("psi derivative order {order} > 2")));
        }
        Ok(match self {
            VolSpec::Exponential { nu } => nu.powi(order as i32) * (nu * v).exp(),
            VolSpec::Polynomial { coefficients } => poly_derivative(coefficients, order, v),
            VolSpec::ShiftedLinear { a, b } => match order {
                0 => a + b * v,
                1 => *b,
                _ => 0.0,
            },
        })
    }

    /// First and second derivative of psi^2: order 1 or 2.
    pub fn sq_deriv(&self, order: u32, v: f64) -> Result<f64> {
        if !(1..=2).contains(&order) {
            return Err(Error::invalid(format!("psi^2 derivative order {order} outside 1..2")));
        }
        let psi = self.eval(0, v)?;
        let d1 = self.eval(1, v)?;
        Ok(if order == 1 {
            2.0 * psi * d1
        } else {
            2.0 * (d1 * d1 + psi * self.eval(2, v)?)
        })
    }

    /// Exponential growth exponent kappa with |psi^(k)(v)| <= C (1 + e^(kappa v)).
    pub fn growth_exponent(&self) -> f64 {
        match self {
            VolSpec::Exponential { nu } => nu.abs(),
            VolSpec::Polynomial { .. } | VolSpec::ShiftedLinear { .. } => 0.0,
        }
    }
}

/// Value of the `order`-th derivative of a polynomial with ascending
/// coefficients, by Horner evaluation of the shifted coefficients.
fn poly_derivative(coefficients: &[f64], order: u32, v: f64) -> f64 {
    let order = order as usize;
    if order >= coefficients.len() {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in (order..coefficients.len()).rev() {
        let mut fall = 1.0;
        for j in 0..order {
            fall *= (k - j) as f64;
        }
        acc = acc * v + coefficients[k] * fall;
    }
    acc
}

/// Payoff family. `eval` covers phi up to the third derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum PayoffSpec {
    /// phi(x) = a x^2 + b x + c.
    Quadratic { a: f64, b: f64, c: f64 },
    /// phi(x) = x^n.
    Monomial { n: u32 },
    /// Softplus call phi(x) = smoothing * ln(1 + exp((x - strike)/smoothing)).
    SmoothCall { strike: f64, smoothing: f64 },
}

impl PayoffSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PayoffSpec::Quadratic { a, b, c } => {
                if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                    return Err(Error::invalid("quadratic payoff needs finite coefficients".to_string()));
                }
            }
            PayoffSpec::Monomial { n } => {
                if *n == 0 {
                    return Err(Error::invalid("monomial payoff needs n >= 1".to_string()));
                }
            }
            PayoffSpec::SmoothCall { strike, smoothing } => {
                if !strike.is_finite() || !(*smoothing > 0.0) {
                    return Err(Error::invalid(format!(
                        "smooth call needs finite strike and smoothing > 0, got ({strike}, {smoothing})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// phi and its derivatives: order 0 through 3.
    pub fn eval(&self, order: u32, x: f64) -> Result<f64> {
        if order > 3 {
            return Err(Error::invalid(format!("phi derivative order {order} > 3")));
        }
        Ok(match self {
            PayoffSpec::Quadratic { a, b, c } => match order {
                0 => (a * x + b) * x + c,
                1 => 2.0 * a * x + b,
                2 => 2.0 * a,
                _ => 0.0,
            },
            PayoffSpec::Monomial { n } => poly_monomial(*n, order, x),
            PayoffSpec::SmoothCall { strike, smoothing } => {
                softplus_derivative(order, (x - strike) / smoothing, *smoothing)
            }
        })
    }

    /// Polynomial growth exponent kappa with |phi^(k)(x)| <= C (1 + |x|^kappa).
    pub fn growth_exponent(&self) -> f64 {
        match self {
            PayoffSpec::Quadratic { .. } => 2.0,
            PayoffSpec::Monomial { n } => *n as f64,
            PayoffSpec::SmoothCall { .. } => 1.0,
        }
    }
}

fn poly_monomial(n: u32, order: u32, x: f64) -> f64 {
    if order > n {
        return 0.0;
    }
    let mut fall = 1.0;
    for j in 0..order {
        fall *= (n - j) as f64;
    }
    fall * x.powi((n - order) as i32)
}

/// Softplus value/derivatives in the scaled argument z = (x - strike)/lambda.
/// The value uses ln(1 + e^z) = max(z, 0) + ln(1 + e^(-|z|)) so large |z|
/// cannot overflow.
fn softplus_derivative(order: u32, z: f64, lambda: f64) -> f64 {
    let sigma = 1.0 / (1.0 + (-z).exp());
    match order {
        0 => lambda * (z.max(0.0) + (-z.abs()).exp().ln_1p()),
        1 => sigma,
        2 => sigma * (1.0 - sigma) / lambda,
        _ => sigma * (1.0 - sigma) * (1.0 - 2.0 * sigma) / (lambda * lambda),
    }
}

/// Full model configuration, serializable as the run-file JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub x0: f64,
    /// Drift coefficient zeta: 0 for the weak-rate experiments, -1/2 for
    /// martingale pricing.
    pub zeta: f64,
    pub rho: f64,
    pub h: f64,
    pub t: f64,
    pub vol: VolSpec,
    pub payoff: PayoffSpec,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.x0.is_finite() || !self.zeta.is_finite() {
            return Err(Error::invalid(format!(
                "x0 {} and zeta {} must be finite",
                self.x0, self.zeta
            )));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::invalid(format!("correlation {} outside [-1, 1]", self.rho)));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::invalid(format!("horizon {} must be positive", self.t)));
        }
        KernelSpec::new(self.h)?;
        self.vol.validate()?;
        self.payoff.validate()
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.h)
    }

    pub fn grid(&self, n: usize) -> Result<UniformGrid> {
        UniformGrid::new(self.t, n)
    }

    /// sqrt(1 - rho^2), the weight of the independent Brownian component.
    pub fn rho_bar(&self) -> f64 {
        (1.0 - self.rho * self.rho).max(0.0).sqrt()
    }
}

//! Closed-form Gaussian moments of V and the noise-free weak-error evaluator
//! for quadratic payoffs.
//!
//! V_t is centered Gaussian with variance t^(2H)/(2H), so every moment the
//! estimators need is analytic. For a quadratic payoff with zero drift the
//! weak error of the Euler scheme collapses to a left-Riemann-sum defect of
//! g(t) = E[psi(V_t)^2], which these routines evaluate to quadrature accuracy
//! without Monte Carlo noise.

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::model::{ModelConfig, PayoffSpec, VolSpec};
use crate::quad;

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("time {t} must be finite and >= 0")));
    }
    Ok(())
}

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.0 && h <= 0.5) {
        return Err(Error::invalid(format!("Hurst parameter {h} outside (0, 1/2]")));
    }
    Ok(())
}

/// Var(V_t) = t^(2H) / (2H).
pub fn v_variance(h: f64, t: f64) -> Result<f64> {
    check_hurst(h)?;
    check_time(t)?;
    Ok(t.powf(2.0 * h) / (2.0 * h))
}

/// E[V_t^p]: zero for odd p, (p-1)!! Var(V_t)^(p/2) for even p.
pub fn v_moment(h: f64, t: f64, p: u32) -> Result<f64> {
    if p % 2 == 1 {
        check_hurst(h)?;
        check_time(t)?;
        return Ok(0.0);
    }
    let var = v_variance(h, t)?;
    let mut double_fact = 1.0;
    let mut k = p as i64 - 1;
    while k > 1 {
        double_fact *= k as f64;
        k -= 2;
    }
    Ok(double_fact * var.powi(p as i32 / 2))
}

/// E[exp(nu V_t)] = exp(nu^2 t^(2H) / (4H)).
pub fn v_expmoment(h: f64, t: f64, nu: f64) -> Result<f64> {
    let var = v_variance(h, t)?;
    Ok((0.5 * nu * nu * var).exp())
}

/// Ascending coefficients of psi^2 for a polynomial psi.
fn square_coefficients(c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * c.len() - 1];
    for (i, a) in c.iter().enumerate() {
        for (j, b) in c.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn polynomial_mean(coefficients: &[f64], h: f64, t: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (k, c) in coefficients.iter().enumerate() {
        if *c != 0.0 {
            acc += c * v_moment(h, t, k as u32)?;
        }
    }
    Ok(acc)
}

/// E[psi(V_t)] for the supported families.
pub fn expected_psi(vol: &VolSpec, h: f64, t: f64) -> Result<f64> {
    vol.validate()?;
    match vol {
        VolSpec::Exponential { nu } => v_expmoment(h, t, *nu),
        VolSpec::Polynomial { coefficients } => polynomial_mean(coefficients, h, t),
        VolSpec::ShiftedLinear { a, b } => polynomial_mean(&[*a, *b], h, t),
    }
}

/// g(t) = E[psi(V_t)^2] for the supported families.
pub fn expected_psi_sq(vol: &VolSpec, h: f64, t: f64) -> Result<f64> {
    vol.validate()?;
    match vol {
        VolSpec::Exponential { nu } => {
            let var = v_variance(h, t)?;
            Ok((2.0 * nu * nu * var).exp())
        }
        VolSpec::Polynomial { coefficients } => {
            polynomial_mean(&square_coefficients(coefficients), h, t)
        }
        VolSpec::ShiftedLinear { a, b } => polynomial_mean(&square_coefficients(&[*a, *b]), h, t),
    }
}

/// Noise-free weak error of the Euler scheme for a quadratic payoff and zero
/// drift: payoff-curvature times the left-Riemann defect of g(t) = E[psi^2].
///
/// By the Ito isometry E[X_T^2] - E[Xbar_T^2] = int_0^T g - sum_i g(t_i) dt,
/// and the linear payoff terms cancel because both processes are martingales
/// started at x0.
pub fn exact_weak_error_quadratic(config: &ModelConfig, n: usize) -> Result<f64> {
    config.validate()?;
    if config.zeta != 0.0 {
        return Err(Error::invalid(format!(
            "analytic weak error needs zeta = 0, got {}",
            config.zeta
        )));
    }
    let curvature = match &config.payoff {
        PayoffSpec::Quadratic { a, .. } => *a,
        other => {
            return Err(Error::invalid(format!(
                "analytic weak error needs a quadratic payoff, got {other:?}"
            )));
        }
    };
    let grid = config.grid(n)?;
    let h = config.h;
    let vol = config.vol.clone();
    // g has unbounded slope at t = 0 for H < 1/2, hence the geometric panels.
    let integral = quad::integrate_geometric(
        |t| expected_psi_sq(&vol, h, t).unwrap_or(f64::NAN),
        0.0,
        grid.t_end(),
        1e-12,
    )?;
    let mut riemann = 0.0;
    for i in 0..grid.n() {
        riemann += expected_psi_sq(&vol, h, grid.node(i))? * grid.dt();
    }
    Ok(curvature * (integral - riemann))
}

/// Outcome of the mean-regularity sweep: the smallest constant such that
/// |E[g(V_t)] - E[g(V_{t_i})]| <= C (t^(2H) - t_i^(2H)) holds on the scanned
/// lattice for g in {psi, psi^2}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub c_bar: f64,
    /// Number of (i, t) lattice pairs scanned.
    pub points: usize,
}

/// Scans each cell [t_i, t_{i+1}) on a sub-lattice and maximizes the ratio
/// |E[g(V_t)] - E[g(V_{t_i})]| / (t^(2H) - t_i^(2H)) over g in {psi, psi^2}.
pub fn verify_weak_regularity(vol: &VolSpec, h: f64, grid: &UniformGrid) -> Result<RegularityReport> {
    check_hurst(h)?;
    const SUBDIVISIONS: usize = 16;
    let mut c_bar = 0.0f64;
    let mut points = 0;
    for i in 0..grid.n() {
        let t_i = grid.node(i);
        let mean_psi_i = expected_psi(vol, h, t_i)?;
        let mean_sq_i = expected_psi_sq(vol, h, t_i)?;
        let base = t_i.powf(2.0 * h);
        for j in 1..=SUBDIVISIONS {
            let t = t_i + grid.dt() * j as f64 / SUBDIVISIONS as f64;
            let denom = t.powf(2.0 * h) - base;
            if denom <= 0.0 {
                continue;
            }
            let d_psi = (expected_psi(vol, h, t)? - mean_psi_i).abs();
            let d_sq = (expected_psi_sq(vol, h, t)? - mean_sq_i).abs();
            c_bar = c_bar.max(d_psi.max(d_sq) / denom);
            points += 1;
        }
    }
    Ok(RegularityReport { c_bar, points })
}

/// Left-Riemann defect of the power weight t^gamma in closed form, and its
/// first-order bound: returns (lhs, T^gamma dt) with
/// lhs = sum_i [(t_{i+1}^(gamma+1) - t_i^(gamma+1))/(gamma+1) - t_i^gamma dt].
///
/// The bound telescopes the monotone increments: each cell contributes at
/// most dt (t_{i+1}^gamma - t_i^gamma), which sums to T^gamma dt. No higher
/// power of T is available; for T < 1 the defect does exceed T^(1+gamma) dt
/// (gamma = 0.05, T = 0.1, N = 2 gives 4.2e-2 against 4.5e-3).
pub fn trick_rate_one_check(gamma: f64, t_end: f64, n: usize) -> Result<(f64, f64)> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("exponent {gamma} must be > 0")));
    }
    let grid = UniformGrid::new(t_end, n)?;
    let dt = grid.dt();
    let mut riemann = 0.0;
    for i in 0..n {
        riemann += grid.node(i).powf(gamma) * dt;
    }
    let lhs = t_end.powf(gamma + 1.0) / (gamma + 1.0) - riemann;
    Ok((lhs, t_end.powf(gamma) * dt))
}

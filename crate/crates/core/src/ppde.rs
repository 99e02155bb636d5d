//! Monte Carlo evaluation of the path-dependent value function
//! u(t, x, omega), its pathwise derivatives, and the PPDE residual.
//!
//! The value function is represented as u(t, x, omega) =
//! E[phi(X_T^{t,x,omega})], where the conditional Volterra process is
//! V^{t,omega}_s = omega(s) + I^t_s and I^t is built from noise after t. By
//! shift invariance of the kernel in its first slot, the joint law of
//! (I^t at the sub-grid nodes, dW on [t, T]) is exactly the plain joint law
//! on a grid of the same shape over horizon T - t, so one covariance
//! machinery serves both the unconditional scheme and every anchored one.
//!
//! Derivative estimators follow the pathwise representation: x-derivatives
//! are plain means of payoff derivatives, omega-derivatives carry the weight
//! int psi'(V) eta dB + zeta int (psi^2)'(V) eta ds, and the second
//! derivative in the singular direction K(., t) adds the Malliavin remainder
//! with D_s X_T computed by an O(n^2) lag sum.
//!
//! Discretization policy: all integrals over [t, T] are left-endpoint sums
//! on the sub-grid. The singular direction K(., t) is evaluated at left
//! endpoints where it is finite (j >= 1); the first cell, whose left value
//! sits on the kernel's zero diagonal, instead uses the exact cell average
//! so the leading singular mass is not dropped. Integrals weighted by
//! K(., t)^2 use exact per-cell masses for the same reason.

use crate::error::{Error, Result};
use crate::gaussian::{build_joint_covariance, sample_block, unit_panel};
use crate::grid::UniformGrid;
use crate::kernel::KernelSpec;
use crate::linalg;
use crate::model::ModelConfig;
use crate::rng::stream_rng;
use crate::scheme::chunk_paths;
use ndarray::{Array1, Array2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// The forward variance state on [t, T]: a uniform sub-grid
/// s_j = t + j (T - t) / n and the curve values omega(s_j). The anchor value
/// omega(t) is the current variance-state value V_t.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCurve {
    t: f64,
    t_end: f64,
    values: Vec<f64>,
}

impl ForwardCurve {
    pub fn new(t: f64, t_end: f64, values: Vec<f64>) -> Result<Self> {
        if !(t.is_finite() && t_end.is_finite() && t >= 0.0 && t <= t_end) {
            return Err(Error::invalid(format!("bad curve interval [{t}, {t_end}]")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("curve values must be finite"));
        }
        if t == t_end {
            if values.len() != 1 {
                return Err(Error::invalid(
                    "a zero-horizon curve holds exactly the anchor value",
                ));
            }
        } else if values.len() < 2 {
            return Err(Error::invalid("a curve needs values at both interval ends"));
        }
        Ok(ForwardCurve { t, t_end, values })
    }

    /// Constant curve with `n` cells.
    pub fn flat(t: f64, t_end: f64, n: usize, value: f64) -> Result<Self> {
        if t == t_end {
            return Self::new(t, t_end, vec![value]);
        }
        Self::new(t, t_end, vec![value; n + 1])
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn horizon(&self) -> f64 {
        self.t_end - self.t
    }

    /// Number of sub-grid cells (0 for the zero-horizon boundary curve).
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dt(&self) -> f64 {
        if self.n() == 0 {
            0.0
        } else {
            self.horizon() / self.n() as f64
        }
    }

    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j < self.values.len());
        self.t + self.dt() * j as f64
    }

    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The curve restricted to [t + dt, T]: the same values with the anchor
    /// node dropped.
    pub fn restrict_one_step(&self) -> Result<ForwardCurve> {
        if self.n() < 2 {
            return Err(Error::invalid(
                "cannot restrict a curve with fewer than two cells",
            ));
        }
        ForwardCurve::new(self.node(1), self.t_end, self.values[1..].to_vec())
    }
}

/// Paths of the conditional model started at (t, x, omega): V^{t,omega} at
/// the left endpoints of the sub-grid, the Brownian increments, and the
/// terminal scheme values.
#[derive(Debug, Clone)]
pub struct ConditionalSample {
    config: ModelConfig,
    curve: ForwardCurve,
    x: f64,
    /// V^{t,omega} at left endpoints s_0..s_{n-1}; column 0 is omega(t).
    v_left: Array2<f64>,
    dw: Array2<f64>,
    db: Array2<f64>,
    x_terminal: Array1<f64>,
    seed: u64,
}

impl ConditionalSample {
    pub fn paths(&self) -> usize {
        self.x_terminal.len()
    }

    pub fn n(&self) -> usize {
        self.curve.n()
    }

    pub fn curve(&self) -> &ForwardCurve {
        &self.curve
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn x_terminal(&self) -> &Array1<f64> {
        &self.x_terminal
    }

    pub fn v_left(&self) -> &Array2<f64> {
        &self.v_left
    }

    pub fn dw(&self) -> &Array2<f64> {
        &self.dw
    }

    pub fn db(&self) -> &Array2<f64> {
        &self.db
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn euler_fold(config: &ModelConfig, x: f64, v_left: &[f64], db: &[f64], dt: f64) -> Result<f64> {
    let mut acc = x;
    for (v, b) in v_left.iter().zip(db) {
        let psi = config.vol.eval(0, *v)?;
        acc += psi * b + config.zeta * psi * psi * dt;
    }
    Ok(acc)
}

/// Samples the conditional model at anchor (curve.t(), x, curve) with `m`
/// paths. The sub-grid needs at least 8 cells unless the horizon is zero, in
/// which case X_T = x without any simulation.
pub fn simulate_conditional(
    x: f64,
    curve: &ForwardCurve,
    config: &ModelConfig,
    m: usize,
    seed: u64,
) -> Result<ConditionalSample> {
    config.validate()?;
    if curve.t_end() != config.t {
        return Err(Error::invalid(format!(
            "curve ends at {} but the model horizon is {}",
            curve.t_end(),
            config.t
        )));
    }
    if m == 0 {
        return Err(Error::invalid("path count must be >= 1"));
    }
    let n = curve.n();
    if n == 0 {
        return Ok(ConditionalSample {
            config: config.clone(),
            curve: curve.clone(),
            x,
            v_left: Array2::zeros((m, 0)),
            dw: Array2::zeros((m, 0)),
            db: Array2::zeros((m, 0)),
            x_terminal: Array1::from_elem(m, x),
            seed,
        });
    }
    if n < 8 {
        return Err(Error::invalid(format!(
            "sub-grid resolution {n} is below the minimum of 8"
        )));
    }
    let grid = UniformGrid::new(curve.horizon(), n)?;
    let gspec = build_joint_covariance(config.h, &grid)?;
    let bundle = sample_block(&gspec, config.rho, seed, 0, m)?;
    let dt = grid.dt();
    let mut v_left = Array2::<f64>::zeros((m, n));
    for p in 0..m {
        v_left[(p, 0)] = curve.value(0);
        for j in 1..n {
            v_left[(p, j)] = curve.value(j) + bundle.v[(p, j - 1)];
        }
    }
    let mut x_terminal = Array1::<f64>::zeros(m);
    for p in 0..m {
        x_terminal[p] = euler_fold(
            config,
            x,
            v_left.row(p).as_slice().unwrap(),
            bundle.db.row(p).as_slice().unwrap(),
            dt,
        )?;
    }
    Ok(ConditionalSample {
        config: config.clone(),
        curve: curve.clone(),
        x,
        v_left,
        dw: bundle.dw,
        db: bundle.db,
        x_terminal,
        seed,
    })
}

/// A Monte Carlo value with its 95% half-width.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci: f64,
}

pub(crate) fn mean_ci(vals: &[f64]) -> Estimate {
    let m = vals.len();
    let mean = vals.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return Estimate { value: mean, ci: 0.0 };
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    Estimate {
        value: mean,
        ci: 1.96 * (var / m as f64).sqrt(),
    }
}

fn payoff_at_terminal(sample: &ConditionalSample, order: u32) -> Result<Vec<f64>> {
    sample
        .x_terminal
        .iter()
        .map(|&x| sample.config.payoff.eval(order, x))
        .collect()
}

/// u(t, x, omega): mean of phi(X_T).
pub fn u_hat(sample: &ConditionalSample) -> Result<Estimate> {
    Ok(mean_ci(&payoff_at_terminal(sample, 0)?))
}

/// d_x u: mean of phi'(X_T), since the terminal value shifts one-to-one
/// with the initial state.
pub fn du_dx_hat(sample: &ConditionalSample) -> Result<Estimate> {
    Ok(mean_ci(&payoff_at_terminal(sample, 1)?))
}

/// d_xx u: mean of phi''(X_T).
pub fn d2u_dx2_hat(sample: &ConditionalSample) -> Result<Estimate> {
    Ok(mean_ci(&payoff_at_terminal(sample, 2)?))
}

/// A perturbation direction for the curve argument.
#[derive(Debug, Clone)]
pub enum Direction {
    /// eta given by its values at the sub-grid nodes s_0..s_n.
    Curve(Vec<f64>),
    /// eta(s) = K(s, t), the kernel pinned at the anchor.
    SingularKernel,
}

/// The discretized singular direction K(., t) as sub-grid node values:
/// left-endpoint kernel values where finite, and the exact cell average
/// dt^(H - 1/2) / (H + 1/2) at the anchor node where the kernel vanishes
/// by convention.
pub fn singular_direction(h: f64, curve: &ForwardCurve) -> Result<Vec<f64>> {
    let kernel = KernelSpec::new(h)?;
    let n = curve.n();
    if n == 0 {
        return Err(Error::invalid("zero-horizon curve has no direction nodes"));
    }
    let dt = curve.dt();
    let a = h - 0.5;
    let mut eta = Vec::with_capacity(n + 1);
    eta.push(dt.powf(a) / kernel.h_plus());
    for j in 1..=n {
        eta.push((dt * j as f64).powf(a));
    }
    Ok(eta)
}

fn eta_left(sample: &ConditionalSample, direction: &Direction) -> Result<Vec<f64>> {
    let n = sample.n();
    match direction {
        Direction::Curve(values) => {
            if values.len() != n + 1 {
                return Err(Error::Dimension(format!(
                    "direction has {} values, sub-grid has {} nodes",
                    values.len(),
                    n + 1
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("direction values must be finite"));
            }
            Ok(values[..n].to_vec())
        }
        Direction::SingularKernel => {
            let eta = singular_direction(sample.config.h, &sample.curve)?;
            Ok(eta[..n].to_vec())
        }
    }
}

/// Per-path weight int psi'(V) eta dB + zeta int (psi^2)'(V) eta ds as a
/// left-endpoint sum.
fn direction_weights(sample: &ConditionalSample, eta: &[f64]) -> Result<Array1<f64>> {
    let m = sample.paths();
    let n = sample.n();
    let dt = sample.curve.dt();
    let config = &sample.config;
    let mut w = Array1::<f64>::zeros(m);
    for p in 0..m {
        let mut acc = 0.0;
        for j in 0..n {
            let v = sample.v_left[(p, j)];
            acc += config.vol.eval(1, v)? * eta[j] * sample.db[(p, j)]
                + config.zeta * config.vol.sq_deriv(1, v)? * eta[j] * dt;
        }
        w[p] = acc;
    }
    Ok(w)
}

/// <d_omega u, eta>: mean of phi'(X_T) times the direction weight.
pub fn domega_u_hat(sample: &ConditionalSample, direction: &Direction) -> Result<Estimate> {
    let eta = eta_left(sample, direction)?;
    let w = direction_weights(sample, &eta)?;
    let phi1 = payoff_at_terminal(sample, 1)?;
    let vals: Vec<f64> = phi1.iter().zip(w.iter()).map(|(f, w)| f * w).collect();
    Ok(mean_ci(&vals))
}

/// <d_omega d_x u, eta>: mean of phi''(X_T) times the direction weight.
pub fn domega_dx_u_hat(sample: &ConditionalSample, direction: &Direction) -> Result<Estimate> {
    let eta = eta_left(sample, direction)?;
    let w = direction_weights(sample, &eta)?;
    let phi2 = payoff_at_terminal(sample, 2)?;
    let vals: Vec<f64> = phi2.iter().zip(w.iter()).map(|(f, w)| f * w).collect();
    Ok(mean_ci(&vals))
}

/// Exact masses int_{s_j}^{s_{j+1}} K(s, t)^2 ds over the sub-grid cells.
fn k_squared_masses(h: f64, curve: &ForwardCurve) -> Vec<f64> {
    let n = curve.n();
    let dt = curve.dt();
    let two_h = 2.0 * h;
    let scale = dt.powf(two_h) / two_h;
    (0..n)
        .map(|j| scale * (((j + 1) as f64).powf(two_h) - (j as f64).powf(two_h)))
        .collect()
}

/// Per-path pieces of the second derivative in the singular direction: the
/// direction weight A and the full integrand value phi''(X_T) A^2 plus the
/// Malliavin remainder.
fn singular_components(sample: &ConditionalSample) -> Result<(Array1<f64>, Array1<f64>)> {
    let m = sample.paths();
    let n = sample.n();
    let dt = sample.curve.dt();
    let config = &sample.config;
    let rho = config.rho;
    let rho_bar_sq = 1.0 - rho * rho;
    let a_exp = config.h - 0.5;
    let eta = singular_direction(config.h, &sample.curve)?;
    let masses = k_squared_masses(config.h, &sample.curve);
    let weights = direction_weights(sample, &eta[..n])?;
    // K(s_l, s_j) on the sub-grid depends only on the lag l - j.
    let k_lag: Vec<f64> = (0..n)
        .map(|d| if d == 0 { 0.0 } else { (dt * d as f64).powf(a_exp) })
        .collect();
    let mut out = Array1::<f64>::zeros(m);
    let mut g = vec![0.0_f64; n];
    for p in 0..m {
        let xt = sample.x_terminal[p];
        let phi1 = config.payoff.eval(1, xt)?;
        let phi2 = config.payoff.eval(2, xt)?;
        for (j, gj) in g.iter_mut().enumerate() {
            let v = sample.v_left[(p, j)];
            *gj = config.vol.eval(1, v)? * sample.db[(p, j)]
                + config.zeta * config.vol.sq_deriv(1, v)? * dt;
        }
        let mut remainder = 0.0;
        for j in 0..n {
            let v = sample.v_left[(p, j)];
            let psi = config.vol.eval(0, v)?;
            let mut d_x = rho * psi;
            for l in (j + 1)..n {
                d_x += k_lag[l - j] * g[l];
            }
            let malliavin = phi2 * (rho * d_x + rho_bar_sq * psi);
            remainder += masses[j]
                * (malliavin * config.vol.eval(2, v)?
                    + config.zeta * phi1 * config.vol.sq_deriv(2, v)?);
        }
        out[p] = phi2 * weights[p] * weights[p] + remainder;
    }
    Ok((weights, out))
}

/// <d_omega^2 u, (K(., t), K(., t))>: the second derivative in the singular
/// direction, including the Malliavin remainder terms.
pub fn d2omega_u_singular_hat(sample: &ConditionalSample) -> Result<Estimate> {
    if sample.n() == 0 {
        return Err(Error::invalid("zero-horizon sample has no time integrals"));
    }
    let (_, vals) = singular_components(sample)?;
    Ok(mean_ci(vals.as_slice().unwrap()))
}

/// Terminal values recomputed on the same noise with the curve bumped by
/// eps times a direction given at the sub-grid nodes.
pub fn bumped_terminals(
    sample: &ConditionalSample,
    eta_nodes: &[f64],
    eps: f64,
) -> Result<Array1<f64>> {
    let n = sample.n();
    if eta_nodes.len() != n + 1 {
        return Err(Error::Dimension(format!(
            "direction has {} values, sub-grid has {} nodes",
            eta_nodes.len(),
            n + 1
        )));
    }
    let dt = sample.curve.dt();
    let m = sample.paths();
    let mut out = Array1::<f64>::zeros(m);
    let mut v = vec![0.0_f64; n];
    for p in 0..m {
        for j in 0..n {
            v[j] = sample.v_left[(p, j)] + eps * eta_nodes[j];
        }
        out[p] = euler_fold(
            &sample.config,
            sample.x,
            &v,
            sample.db.row(p).as_slice().unwrap(),
            dt,
        )?;
    }
    Ok(out)
}

/// Joint covariance of (I^t at s_1..s_n, dW_0..dW_{n-1}, J_2..J_{n-1}) where
/// J_j = int_t^{t+dt} K(s_j, r) dW_r is the part of I^t_{s_j} carried by the
/// first cell. Subtracting J from I yields the forward-anchored process on
/// [t + dt, T] exactly, on the same Brownian path.
pub(crate) fn augmented_covariance(h: f64, horizon: f64, n: usize) -> Result<Array2<f64>> {
    let kernel = KernelSpec::new(h)?;
    let grid = UniformGrid::new(horizon, n)?;
    let base = build_joint_covariance(h, &grid)?;
    let dt = grid.dt();
    let scale = dt.powf(2.0 * h);
    let dim = 3 * n - 2;
    let mut cov = Array2::<f64>::zeros((dim, dim));
    cov.slice_mut(ndarray::s![..2 * n, ..2 * n]).assign(&base.cov());
    let panel = |j: usize, k: usize| -> Result<f64> {
        let p = j.min(k) - 1;
        let lag = j.abs_diff(k);
        Ok(scale * unit_panel(h, p, lag)?)
    };
    for j in 2..n {
        let aj = 2 * n + (j - 2);
        for k in 1..=n {
            let c = panel(j, k)?;
            cov[(aj, k - 1)] = c;
            cov[(k - 1, aj)] = c;
        }
        let c = kernel.primitive(dt * j as f64, 0.0, dt)?;
        cov[(aj, n)] = c;
        cov[(n, aj)] = c;
        for k in 2..=j {
            let c = panel(j, k)?;
            let ak = 2 * n + (k - 2);
            cov[(aj, ak)] = c;
            cov[(ak, aj)] = c;
        }
    }
    Ok(cov)
}

/// The PPDE residual at (t, x, omega) and its component estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Mean and 95% half-width of the per-path residual sum.
    pub residual: Estimate,
    /// Forward time difference (u(t + dt) - u(t)) / dt.
    pub dt_term: Estimate,
    /// zeta psi(omega_t)^2 d_x u.
    pub drift_term: Estimate,
    /// (1/2) psi(omega_t)^2 d_xx u.
    pub dxx_term: Estimate,
    /// (1/2) <d_omega^2 u, (K^t, K^t)>.
    pub singular_term: Estimate,
    /// rho psi(omega_t) <d_omega d_x u, K^t>.
    pub cross_term: Estimate,
    /// u at the anchor.
    pub u_anchor: Estimate,
    /// u at the forward anchor t + dt on the restricted curve.
    pub u_forward: Estimate,
}

/// Monte Carlo check of the PPDE at (t, x, omega): the right time derivative
/// is a forward difference over one sub-grid step, evaluated on the same
/// Brownian paths through an exact coupling of the two anchors, and all
/// space/curve derivatives are the pathwise estimators above. Every term is
/// accumulated per path, so the confidence interval of the residual is
/// honest about cross-term correlations.
pub fn ppde_residual(
    x: f64,
    curve: &ForwardCurve,
    config: &ModelConfig,
    m: usize,
    dt_step: f64,
    seed: u64,
) -> Result<ResidualReport> {
    config.validate()?;
    if curve.t_end() != config.t {
        return Err(Error::invalid(format!(
            "curve ends at {} but the model horizon is {}",
            curve.t_end(),
            config.t
        )));
    }
    let n = curve.n();
    if n < 8 {
        return Err(Error::invalid(format!(
            "sub-grid resolution {n} is below the minimum of 8"
        )));
    }
    let dt = curve.dt();
    if !((dt_step - dt).abs() <= 1e-12 * dt) {
        return Err(Error::invalid(format!(
            "time step {dt_step} must equal the sub-grid step {dt}; the forward \
             difference is defined one sub-grid cell ahead"
        )));
    }
    if m < 2 {
        return Err(Error::invalid("need at least two paths"));
    }
    let cov = augmented_covariance(config.h, curve.horizon(), n)?;
    let factor = linalg::cholesky(&cov)?;
    let dim = 3 * n - 2;
    let sqrt_dt = dt.sqrt();
    let rho = config.rho;
    let rho_bar = config.rho_bar();
    let psi0 = config.vol.eval(0, curve.value(0))?;

    let mut dt_vals = Vec::with_capacity(m);
    let mut drift_vals = Vec::with_capacity(m);
    let mut dxx_vals = Vec::with_capacity(m);
    let mut singular_vals = Vec::with_capacity(m);
    let mut cross_vals = Vec::with_capacity(m);
    let mut residual_vals = Vec::with_capacity(m);
    let mut u_anchor_vals = Vec::with_capacity(m);
    let mut u_forward_vals = Vec::with_capacity(m);

    let chunk = chunk_paths(dim, m);
    let mut done = 0usize;
    while done < m {
        let take = chunk.min(m - done);
        let mut z = Array2::<f64>::zeros((take, dim));
        let mut dwbar = Array2::<f64>::zeros((take, n));
        Zip::indexed(z.rows_mut())
            .and(dwbar.rows_mut())
            .par_for_each(|p, mut zrow, mut wrow| {
                let mut rng = stream_rng(seed, (done + p) as u64);
                for v in zrow.iter_mut() {
                    *v = rng.sample::<f64, _>(StandardNormal);
                }
                for w in wrow.iter_mut() {
                    *w = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                }
            });
        let s = linalg::tri_mul_batch(factor.l(), z.view())?;
        let mut v_left = Array2::<f64>::zeros((take, n));
        let mut db = Array2::<f64>::zeros((take, n));
        let mut dw = Array2::<f64>::zeros((take, n));
        let mut x_terminal = Array1::<f64>::zeros(take);
        let mut forward_terminal = Array1::<f64>::zeros(take);
        let mut v_fwd = vec![0.0_f64; n - 1];
        for p in 0..take {
            for l in 0..n {
                dw[(p, l)] = s[(p, n + l)];
                db[(p, l)] = rho * dw[(p, l)] + rho_bar * dwbar[(p, l)];
            }
            v_left[(p, 0)] = curve.value(0);
            for j in 1..n {
                v_left[(p, j)] = curve.value(j) + s[(p, j - 1)];
            }
            x_terminal[p] = euler_fold(
                config,
                x,
                v_left.row(p).as_slice().unwrap(),
                db.row(p).as_slice().unwrap(),
                dt,
            )?;
            // Forward anchor: I^{t+dt}_{s_j} = I^t_{s_j} - J_j on the same
            // path; the first left endpoint of the restricted curve carries
            // no accumulated noise at all.
            v_fwd[0] = curve.value(1);
            for j in 2..n {
                v_fwd[j - 1] = curve.value(j) + (s[(p, j - 1)] - s[(p, 2 * n + (j - 2))]);
            }
            forward_terminal[p] = euler_fold(
                config,
                x,
                &v_fwd,
                &db.row(p).as_slice().unwrap()[1..],
                dt,
            )?;
        }
        let chunk_sample = ConditionalSample {
            config: config.clone(),
            curve: curve.clone(),
            x,
            v_left,
            dw,
            db,
            x_terminal,
            seed,
        };
        let (a_weights, d2w_vals) = singular_components(&chunk_sample)?;
        for p in 0..take {
            let xt = chunk_sample.x_terminal[p];
            let phi0 = config.payoff.eval(0, xt)?;
            let phi1 = config.payoff.eval(1, xt)?;
            let phi2 = config.payoff.eval(2, xt)?;
            let phi0_fwd = config.payoff.eval(0, forward_terminal[p])?;
            let dt_term = (phi0_fwd - phi0) / dt;
            let drift_term = config.zeta * psi0 * psi0 * phi1;
            let dxx_term = 0.5 * psi0 * psi0 * phi2;
            let singular_term = 0.5 * d2w_vals[p];
            let cross_term = rho * psi0 * phi2 * a_weights[p];
            dt_vals.push(dt_term);
            drift_vals.push(drift_term);
            dxx_vals.push(dxx_term);
            singular_vals.push(singular_term);
            cross_vals.push(cross_term);
            residual_vals.push(dt_term + drift_term + dxx_term + singular_term + cross_term);
            u_anchor_vals.push(phi0);
            u_forward_vals.push(phi0_fwd);
        }
        done += take;
    }
    Ok(ResidualReport {
        residual: mean_ci(&residual_vals),
        dt_term: mean_ci(&dt_vals),
        drift_term: mean_ci(&drift_vals),
        dxx_term: mean_ci(&dxx_vals),
        singular_term: mean_ci(&singular_vals),
        cross_term: mean_ci(&cross_vals),
        u_anchor: mean_ci(&u_anchor_vals),
        u_forward: mean_ci(&u_forward_vals),
    })
}

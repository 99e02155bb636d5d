//! Command implementations: each takes its config plus the run directory,
//! writes artifacts, and reports what it wrote together with a one-line
//! summary and whether the result is conclusive.

use std::path::Path;

use rvlab_core::gaussian::{build_joint_covariance, sample_bundle, write_matrix};
use rvlab_core::model::ModelConfig;
use rvlab_core::ppde::{
    d2omega_u_singular_hat, d2u_dx2_hat, domega_dx_u_hat, domega_u_hat, du_dx_hat, ppde_residual,
    simulate_conditional, u_hat, Direction, Estimate, ForwardCurve, ResidualReport,
};
use rvlab_core::rates::{regress_loglog, run_case1, run_case2, run_strong, RateEstimate, RateStatus};
use rvlab_core::telescope::telescopic_check;
use rvlab_core::{KernelSpec, UniformGrid};
use serde::Serialize;

use crate::config::{
    CliError, DirectionConfig, KernelsConfig, PpdeConfig, RunConfig, SampleConfig,
    StrongRateConfig, TelescopeConfig, WeakCase, WeakRateConfig,
};
use crate::csvio::{fmt, read_curve_csv, write_csv, write_json};

/// What a finished command hands back to the runner.
pub struct Outcome {
    /// File names inside the run directory, for the manifest.
    pub artifacts: Vec<String>,
    pub summary: String,
    /// False flags the run for the inconclusive exit code.
    pub conclusive: bool,
}

pub fn dispatch(config: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    match config {
        RunConfig::Kernels(cfg) => cmd_kernels(cfg, dir),
        RunConfig::Sample(cfg) => cmd_sample(cfg, dir),
        RunConfig::WeakRate(cfg) => cmd_weak_rate(cfg, dir),
        RunConfig::StrongRate(cfg) => cmd_strong_rate(cfg, dir),
        RunConfig::Ppde(cfg) => cmd_ppde(cfg, dir),
        RunConfig::Telescope(cfg) => cmd_telescope(cfg, dir),
    }
}

const KERNELS_HEADER: &str = "h,t,t_i,alpha,value,oracle,rel_err";

/// H grid for the Beta-identity and diagonal suites; 0.5 is included because
/// its rows have the elementary oracle B(1, beta+1) t^(beta+1).
const BETA_H: [f64; 5] = [0.05, 0.1, 0.25, 0.4, 0.5];
const BETA_EXPONENTS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
const BETA_TIMES: [f64; 3] = [0.5, 1.0, 2.0];
const DELTA_H: [f64; 3] = [0.1, 0.2, 0.4];

#[derive(Debug, Serialize)]
struct DeltaSlope {
    h: f64,
    alpha: f64,
    /// Regression slope of log value against log spacing.
    slope: f64,
    stderr: f64,
    /// The scaling exponent alpha + H + 1/2.
    target: f64,
}

#[derive(Debug, Serialize)]
struct KernelRates {
    beta_max_rel_err: f64,
    diagonal_max_rel_err: f64,
    delta_k: Vec<DeltaSlope>,
}

/// Beta-identity, diagonal-variance, and delta-K scaling suites in one CSV:
/// rows without an oracle belong to the scaling suite, whose conclusion is
/// the per-(H, alpha) regression in `kernel_rates.json`.
fn cmd_kernels(cfg: &KernelsConfig, dir: &Path) -> Result<Outcome, CliError> {
    let mut rows = Vec::new();
    let mut beta_max: f64 = 0.0;
    let mut diag_max: f64 = 0.0;
    for &h in &BETA_H {
        let kernel = KernelSpec::new(h)?;
        for &t in &BETA_TIMES {
            for &beta in &BETA_EXPONENTS {
                let value = kernel.weighted_integral(t, beta)?;
                let oracle = kernel.beta_identity_oracle(t, beta)?;
                let rel = ((value - oracle) / oracle).abs();
                beta_max = beta_max.max(rel);
                rows.push(format!(
                    "{},{},,{},{},{},{}",
                    fmt(h),
                    fmt(t),
                    fmt(beta),
                    fmt(value),
                    fmt(oracle),
                    fmt(rel)
                ));
            }
            let value = kernel.cov_vv(t, t)?;
            let oracle = t.powf(2.0 * h) / (2.0 * h);
            let rel = ((value - oracle) / oracle).abs();
            diag_max = diag_max.max(rel);
            rows.push(format!(
                "{},{},{},,{},{},{}",
                fmt(h),
                fmt(t),
                fmt(t),
                fmt(value),
                fmt(oracle),
                fmt(rel)
            ));
        }
    }

    let mut delta_k = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for &h in &DELTA_H {
        let kernel = KernelSpec::new(h)?;
        for alpha in [0.0, 2.0 * h] {
            let mut points = Vec::with_capacity(cfg.levels.len());
            for &k in &cfg.levels {
                let dt = 0.5f64.powi(k as i32);
                let value = kernel.delta_weighted_integral(2.0 * dt, dt, alpha)?;
                rows.push(format!(
                    "{},{},{},{},{},,",
                    fmt(h),
                    fmt(2.0 * dt),
                    fmt(dt),
                    fmt(alpha),
                    fmt(value)
                ));
                points.push((1.0 / dt, value));
            }
            let (slope_n, _, stderr) = regress_loglog(&points)?;
            let slope = -slope_n;
            let target = alpha + h + 0.5;
            worst_gap = worst_gap.max((slope - target).abs());
            delta_k.push(DeltaSlope { h, alpha, slope, stderr, target });
        }
    }

    write_csv(&dir.join("kernels.csv"), KERNELS_HEADER, &rows)?;
    let rates = KernelRates { beta_max_rel_err: beta_max, diagonal_max_rel_err: diag_max, delta_k };
    write_json(&dir.join("kernel_rates.json"), &rates)?;
    Ok(Outcome {
        artifacts: vec!["kernels.csv".into(), "kernel_rates.json".into()],
        summary: format!(
            "kernels: beta max rel err {:.2e}, diagonal max rel err {:.2e}, \
             {} scaling slopes within {:.4} of their targets",
            beta_max,
            diag_max,
            rates.delta_k.len(),
            worst_gap
        ),
        conclusive: true,
    })
}

/// Joint exact draw of (V, dW) dumped one path per CSV row.
fn cmd_sample(cfg: &SampleConfig, dir: &Path) -> Result<Outcome, CliError> {
    let grid = UniformGrid::new(cfg.t, cfg.n)?;
    let spec = build_joint_covariance(cfg.h, &grid)?;
    let bundle = sample_bundle(&spec, cfg.rho, cfg.m, cfg.seed)?;

    let mut header = String::new();
    for i in 1..=cfg.n {
        header.push_str(&format!("v_{i},"));
    }
    for j in 0..cfg.n {
        header.push_str(&format!("dw_{j}"));
        if j + 1 < cfg.n {
            header.push(',');
        }
    }
    let mut rows = Vec::with_capacity(cfg.m);
    for p in 0..cfg.m {
        let mut row = String::new();
        for i in 0..cfg.n {
            row.push_str(&fmt(bundle.v[(p, i)]));
            row.push(',');
        }
        for j in 0..cfg.n {
            row.push_str(&fmt(bundle.dw[(p, j)]));
            if j + 1 < cfg.n {
                row.push(',');
            }
        }
        rows.push(row);
    }
    write_csv(&dir.join("paths.csv"), &header, &rows)?;

    let mut artifacts = vec!["paths.csv".to_string()];
    if cfg.write_factor {
        write_matrix(&dir.join("cov.bin"), cfg.n as u16, spec.cov())?;
        write_matrix(&dir.join("chol.bin"), cfg.n as u16, spec.chol())?;
        artifacts.push("cov.bin".into());
        artifacts.push("chol.bin".into());
    }
    Ok(Outcome {
        artifacts,
        summary: format!(
            "sample: {} paths of {} steps at h = {} (jitter {:.1e})",
            cfg.m,
            cfg.n,
            cfg.h,
            spec.jitter()
        ),
        conclusive: true,
    })
}

fn write_rate_artifacts(
    dir: &Path,
    plan: &rvlab_core::rates::ExperimentPlan,
    estimate: &RateEstimate,
) -> Result<Vec<String>, CliError> {
    let rows: Vec<String> = estimate
        .points
        .iter()
        .map(|p| format!("{},{},{},{}", p.n, fmt(p.error), fmt(p.ci), p.gated))
        .collect();
    write_csv(&dir.join("levels.csv"), "n,error,ci,gated", &rows)?;
    write_json(&dir.join("rate.json"), estimate)?;
    write_json(&dir.join("plan.json"), plan)?;
    Ok(vec!["levels.csv".into(), "rate.json".into(), "plan.json".into()])
}

fn rate_summary(kind: &str, estimate: &RateEstimate) -> String {
    match estimate.status {
        RateStatus::Estimated => format!(
            "{kind}: slope {:.4} (stderr {:.4}) over {} of {} levels",
            estimate.slope,
            estimate.slope_stderr,
            estimate.points.iter().filter(|p| p.gated).count(),
            estimate.points.len()
        ),
        RateStatus::Degenerate => format!("{kind}: degenerate, zero error at every level"),
        RateStatus::Inconclusive => format!(
            "{kind}: inconclusive, too few levels rose above their noise floor"
        ),
    }
}

fn cmd_weak_rate(cfg: &WeakRateConfig, dir: &Path) -> Result<Outcome, CliError> {
    let plan = cfg.plan.as_ref().expect("resolve fills the plan");
    let estimate = match cfg.case {
        WeakCase::Case1 => run_case1(plan)?,
        WeakCase::Case2 => run_case2(plan)?,
    };
    let artifacts = write_rate_artifacts(dir, plan, &estimate)?;
    let kind = match cfg.case {
        WeakCase::Case1 => "weak-rate case1",
        WeakCase::Case2 => "weak-rate case2",
    };
    Ok(Outcome {
        artifacts,
        summary: rate_summary(kind, &estimate),
        conclusive: estimate.status != RateStatus::Inconclusive,
    })
}

fn cmd_strong_rate(cfg: &StrongRateConfig, dir: &Path) -> Result<Outcome, CliError> {
    let plan = cfg.plan.as_ref().expect("resolve fills the plan");
    let estimate = run_strong(plan)?;
    let artifacts = write_rate_artifacts(dir, plan, &estimate)?;
    Ok(Outcome {
        artifacts,
        summary: rate_summary("strong-rate", &estimate),
        conclusive: estimate.status != RateStatus::Inconclusive,
    })
}

#[derive(Debug, Serialize)]
struct PpdeComponents {
    du_dx: Estimate,
    d2u_dx2: Estimate,
    domega_u: Estimate,
    domega_dx_u: Estimate,
    d2omega_u_singular: Estimate,
}

#[derive(Debug, Serialize)]
struct PpdeResponse {
    value: f64,
    ci: f64,
    components: PpdeComponents,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<ResidualReport>,
}

/// Conditional value and derivative estimates at (t, x, omega), plus the
/// residual decomposition when requested.
fn cmd_ppde(cfg: &PpdeConfig, dir: &Path) -> Result<Outcome, CliError> {
    let model: &ModelConfig = &cfg.model;
    let values = match (&cfg.omega, &cfg.omega_csv) {
        (Some(values), None) => values.clone(),
        (None, Some(path)) => read_curve_csv(path, cfg.t, model.t)?,
        _ => unreachable!("resolve enforces exactly one curve source"),
    };
    let curve = ForwardCurve::new(cfg.t, model.t, values)?;
    let sample = simulate_conditional(cfg.x, &curve, model, cfg.m, cfg.seed)?;

    let value = u_hat(&sample)?;
    let zero = Estimate { value: 0.0, ci: 0.0 };
    let components = if curve.n() == 0 {
        // At the boundary u(T, x, omega) = phi(x): the curve derivatives
        // vanish identically for every direction.
        PpdeComponents {
            du_dx: du_dx_hat(&sample)?,
            d2u_dx2: d2u_dx2_hat(&sample)?,
            domega_u: zero,
            domega_dx_u: zero,
            d2omega_u_singular: zero,
        }
    } else {
        let direction = match &cfg.direction {
            DirectionConfig::Singular => Direction::SingularKernel,
            DirectionConfig::Curve(values) => Direction::Curve(values.clone()),
        };
        PpdeComponents {
            du_dx: du_dx_hat(&sample)?,
            d2u_dx2: d2u_dx2_hat(&sample)?,
            domega_u: domega_u_hat(&sample, &direction)?,
            domega_dx_u: domega_dx_u_hat(&sample, &direction)?,
            d2omega_u_singular: d2omega_u_singular_hat(&sample)?,
        }
    };
    let residual = if cfg.residual {
        Some(ppde_residual(cfg.x, &curve, model, cfg.m, curve.dt(), cfg.seed)?)
    } else {
        None
    };

    let response = PpdeResponse { value: value.value, ci: value.ci, components, residual };
    write_json(&dir.join("ppde.json"), &response)?;
    let mut summary = format!(
        "ppde: u({}, {}) = {:.6e} +/- {:.1e} from {} paths",
        cfg.t, cfg.x, response.value, response.ci, cfg.m
    );
    if let Some(report) = &response.residual {
        summary.push_str(&format!(
            "; residual {:.3e} +/- {:.1e}",
            report.residual.value, report.residual.ci
        ));
    }
    Ok(Outcome { artifacts: vec!["ppde.json".into()], summary, conclusive: true })
}

fn cmd_telescope(cfg: &TelescopeConfig, dir: &Path) -> Result<Outcome, CliError> {
    let model = cfg.model.as_ref().expect("resolve fills the model");
    let report = telescopic_check(model, cfg.n, cfg.m_outer, cfg.m_inner, cfg.seed)?;
    write_json(&dir.join("telescope.json"), &report)?;
    let summary = format!(
        "telescope: lhs {:.4e} +/- {:.1e}, rhs {:.4e} +/- {:.1e}, diff {:.4e} +/- {:.1e} \
         ({} of {} outer paths)",
        report.lhs.value,
        report.lhs.ci,
        report.rhs.value,
        report.rhs.ci,
        report.diff.value,
        report.diff.ci,
        report.paths_done,
        report.m_outer
    );
    Ok(Outcome {
        artifacts: vec!["telescope.json".into()],
        summary,
        conclusive: !report.inconclusive,
    })
}

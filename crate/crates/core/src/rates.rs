//! Convergence-rate experiments and their log-log summaries.
//!
//! Three experiment families share one reporting shape: the analytic weak
//! error for quadratic payoffs (no Monte Carlo), the Monte Carlo weak error
//! on coupled coarse/fine noise, and the strong pathwise error. Each produces
//! per-level error points with uncertainty, and a regression of log |error|
//! on log N over the levels whose error is distinguishable from noise.

use crate::error::{Error, Result};
use crate::model::{ModelConfig, PayoffSpec, VolSpec};
use crate::moments::exact_weak_error_quadratic;
use crate::rng::derive_seed;
use crate::scheme::{multilevel_terminals, strong_gap};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Magnitudes at or below this count as exactly zero when classifying an
/// experiment as degenerate. Analytic weak errors of degenerate models land
/// at quadrature rounding, many orders below any genuine error in range.
const DEGENERATE_TOL: f64 = 1e-13;

/// Signal-to-noise multiplier for admitting a Monte Carlo level into the
/// regression: |error| must exceed this many half-widths.
const GATE_FACTOR: f64 = 3.0;

/// How an experiment concluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateStatus {
    /// Enough clean levels for a regression; slope fields are meaningful.
    Estimated,
    /// Every level vanished identically (a structurally zero error).
    Degenerate,
    /// Too few levels rose above their noise floor; no slope is reported.
    Inconclusive,
}

/// One grid level of an experiment. `error` keeps its sign; regressions use
/// the magnitude and the sign pattern stays visible in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub error: f64,
    pub ci: f64,
    /// Whether the level entered the regression.
    pub gated: bool,
}

/// Log-log regression summary over the gated levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: Vec<RatePoint>,
    pub status: RateStatus,
}

/// Ordinary least squares of ln y on ln x with the residual-based standard
/// error of the slope. Points are sorted internally, so the fit does not
/// depend on input order.
pub fn regress_loglog(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::Insufficient(format!(
            "{} points are too few for a regression",
            points.len()
        )));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for &(x, y) in &sorted {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::invalid(format!(
                "log-log regression needs positive finite points, got ({x}, {y})"
            )));
        }
    }
    let k = sorted.len() as f64;
    let xs: Vec<f64> = sorted.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = sorted.iter().map(|p| p.1.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all regression abscissae coincide".to_string()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = if sorted.len() > 2 {
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, intercept, stderr))
}

/// A full experiment description: model, grid levels, fine reference grid,
/// Monte Carlo budget per replication, and the replication count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub config: ModelConfig,
    pub levels: Vec<usize>,
    pub fine_n: usize,
    pub paths: usize,
    pub seed: u64,
    pub replications: usize,
}

impl ExperimentPlan {
    fn validate_levels(&self) -> Result<()> {
        self.config.validate()?;
        if self.levels.len() < 3 {
            return Err(Error::invalid(format!(
                "{} levels are too few for a rate estimate",
                self.levels.len()
            )));
        }
        for w in self.levels.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("levels must be strictly increasing".to_string()));
            }
        }
        if self.levels[0] == 0 {
            return Err(Error::invalid("levels must be positive".to_string()));
        }
        Ok(())
    }

    fn validate_monte_carlo(&self) -> Result<()> {
        self.validate_levels()?;
        let max = *self.levels.last().unwrap();
        if self.fine_n <= max {
            return Err(Error::invalid(format!(
                "fine grid {} must exceed the largest level {max}",
                self.fine_n
            )));
        }
        for &n in &self.levels {
            if self.fine_n % n != 0 {
                return Err(Error::invalid(format!(
                    "fine grid {} is not a multiple of level {n}",
                    self.fine_n
                )));
            }
        }
        if self.paths < 100 {
            return Err(Error::invalid(format!(
                "{} paths are too few for interval estimates",
                self.paths
            )));
        }
        Ok(())
    }
}

fn finish(points: Vec<RatePoint>) -> Result<RateEstimate> {
    let all_zero = points.iter().all(|p| p.error.abs() <= DEGENERATE_TOL);
    if all_zero {
        return Ok(RateEstimate {
            slope: f64::NAN,
            intercept: f64::NAN,
            slope_stderr: f64::NAN,
            points,
            status: RateStatus::Degenerate,
        });
    }
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.gated)
        .map(|p| (p.n as f64, p.error.abs()))
        .collect();
    if usable.len() < 3 {
        return Ok(RateEstimate {
            slope: f64::NAN,
            intercept: f64::NAN,
            slope_stderr: f64::NAN,
            points,
            status: RateStatus::Inconclusive,
        });
    }
    let (slope, intercept, slope_stderr) = regress_loglog(&usable)?;
    Ok(RateEstimate {
        slope,
        intercept,
        slope_stderr,
        points,
        status: RateStatus::Estimated,
    })
}

/// Weak rate from the closed-form error of quadratic payoffs: no sampling,
/// every level is exact, so all nonzero levels are gated.
pub fn run_case1(plan: &ExperimentPlan) -> Result<RateEstimate> {
    plan.validate_levels()?;
    let mut points = Vec::with_capacity(plan.levels.len());
    for &n in &plan.levels {
        let error = exact_weak_error_quadratic(&plan.config, n)?;
        points.push(RatePoint {
            n,
            error,
            ci: 0.0,
            gated: error.abs() > DEGENERATE_TOL,
        });
    }
    finish(points)
}

/// Weak rate by coupled Monte Carlo: per level, the mean of
/// phi(fine terminal) - phi(coarse terminal) on shared noise, averaged over
/// independent replications; the across-replication Student-t half-width
/// gates each level.
pub fn run_case2(plan: &ExperimentPlan) -> Result<RateEstimate> {
    plan.validate_monte_carlo()?;
    if plan.replications < 2 {
        return Err(Error::invalid(
            "at least two replications are needed for across-replication intervals".to_string(),
        ));
    }
    if plan.config.zeta != 0.0 {
        return Err(Error::invalid(
            "the Monte Carlo weak-rate experiment is defined for zeta = 0".to_string(),
        ));
    }
    let r = plan.replications;
    let mut per_rep: Vec<Vec<f64>> = vec![Vec::with_capacity(plan.levels.len()); r];
    for rep in 0..r {
        let seed = derive_seed(plan.seed, rep as u64);
        let out = multilevel_terminals(&plan.config, &plan.levels, plan.fine_n, plan.paths, seed)?;
        let fine_payoff: Vec<f64> = out
            .fine
            .iter()
            .map(|&x| plan.config.payoff.eval(0, x))
            .collect::<Result<_>>()?;
        for term in &out.terminals {
            let mut acc = 0.0;
            for (x, f) in term.iter().zip(&fine_payoff) {
                acc += f - plan.config.payoff.eval(0, *x)?;
            }
            per_rep[rep].push(acc / plan.paths as f64);
        }
    }
    let tq = StudentsT::new(0.0, 1.0, (r - 1) as f64)
        .map_err(|e| Error::invalid(format!("t distribution: {e}")))?
        .inverse_cdf(0.975);
    let mut points = Vec::with_capacity(plan.levels.len());
    for (idx, &n) in plan.levels.iter().enumerate() {
        let vals: Vec<f64> = per_rep.iter().map(|v| v[idx]).collect();
        let mean = vals.iter().sum::<f64>() / r as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        let ci = tq * (var / r as f64).sqrt();
        points.push(RatePoint {
            n,
            error: mean,
            ci,
            gated: mean.abs() > GATE_FACTOR * ci && mean.abs() > DEGENERATE_TOL,
        });
    }
    finish(points)
}

/// Strong rate: root-mean-square coupled gap per level from a single fine
/// pass; the delta-method half-width is reported but gating only excludes
/// structural zeros, since an rms is positive whenever paths differ at all.
pub fn run_strong(plan: &ExperimentPlan) -> Result<RateEstimate> {
    plan.validate_monte_carlo()?;
    let out = multilevel_terminals(&plan.config, &plan.levels, plan.fine_n, plan.paths, plan.seed)?;
    let mut points = Vec::with_capacity(plan.levels.len());
    for (term, &n) in out.terminals.iter().zip(&plan.levels) {
        let (rms, ci) = strong_gap(term, &out.fine)?;
        points.push(RatePoint {
            n,
            error: rms,
            ci,
            gated: rms > DEGENERATE_TOL,
        });
    }
    finish(points)
}

/// Default analytic weak-rate plan: quadratic payoff under Exponential(0.5)
/// volatility at H = 0.1, dyadic levels 8..1024. No sampling is involved, so
/// `paths`, `fine_n`, and `replications` are placeholders.
pub fn default_case1_plan() -> ExperimentPlan {
    ExperimentPlan {
        config: ModelConfig {
            x0: 0.0,
            zeta: 0.0,
            rho: -0.5,
            h: 0.1,
            t: 1.0,
            vol: VolSpec::Exponential { nu: 0.5 },
            payoff: PayoffSpec::Quadratic { a: 1.0, b: 0.0, c: 0.0 },
        },
        levels: vec![8, 16, 32, 64, 128, 256, 512, 1024],
        fine_n: 2048,
        paths: 1000,
        seed: 104_729,
        replications: 2,
    }
}

/// Default Monte Carlo weak-rate plan: cubic payoff under Exponential(0.5)
/// volatility at H = 0.2 with rho = -0.7. The cubic statistic is heavy
/// tailed on coarse grids (per-path standard deviations near 440 at n = 8),
/// so the budget of 2.4 million total paths is what it takes for the three
/// coarsest levels to clear the 3-sigma gate; a full run is about nine
/// minutes on one core.
pub fn default_case2_plan() -> ExperimentPlan {
    ExperimentPlan {
        config: ModelConfig {
            x0: 0.0,
            zeta: 0.0,
            rho: -0.7,
            h: 0.2,
            t: 1.0,
            vol: VolSpec::Exponential { nu: 0.5 },
            payoff: PayoffSpec::Monomial { n: 3 },
        },
        levels: vec![8, 16, 32, 64, 128],
        fine_n: 1024,
        paths: 150_000,
        seed: 86_028_121,
        replications: 16,
    }
}

/// Default strong-rate plan: coupled coarse/fine gaps at H = 0.2 under
/// Exponential(0.3) volatility, dyadic levels 16..512 against a 4096-step
/// reference, from one Monte Carlo pass.
pub fn default_strong_plan() -> ExperimentPlan {
    ExperimentPlan {
        config: ModelConfig {
            x0: 0.0,
            zeta: 0.0,
            rho: -0.5,
            h: 0.2,
            t: 1.0,
            vol: VolSpec::Exponential { nu: 0.3 },
            payoff: PayoffSpec::Quadratic { a: 1.0, b: 0.0, c: 0.0 },
        },
        levels: vec![16, 32, 64, 128, 256, 512],
        fine_n: 4096,
        paths: 10_000,
        seed: 512_927_377,
        replications: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn plan(config: ModelConfig) -> ExperimentPlan {
        ExperimentPlan {
            config,
            levels: vec![4, 8, 16],
            fine_n: 64,
            paths: 2000,
            seed: 31,
            replications: 4,
        }
    }

    fn quadratic_config() -> ModelConfig {
        ModelConfig {
            x0: 0.3,
            zeta: 0.0,
            rho: -0.5,
            h: 0.3,
            t: 1.0,
            vol: VolSpec::Exponential { nu: 0.5 },
            payoff: PayoffSpec::Quadratic { a: 1.0, b: 0.0, c: 0.0 },
        }
    }

    #[test]
    fn regression_recovers_exact_power_laws() {
        let pts: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0].iter().map(|&n| (n, 1.0 / n)).collect();
        let (slope, intercept, stderr) = regress_loglog(&pts).unwrap();
        assert_relative_eq!(slope, -1.0, max_relative = 1e-12);
        assert_relative_eq!(intercept, 0.0, epsilon = 1e-12);
        assert!(stderr < 1e-12);

        let pts: Vec<(f64, f64)> =
            [8.0, 16.0, 32.0].iter().map(|&n| (n, 7.0 * f64::powf(n, -0.7))).collect();
        let (slope, intercept, _) = regress_loglog(&pts).unwrap();
        assert_relative_eq!(slope, -0.7, max_relative = 1e-12);
        assert_relative_eq!(intercept, 7.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn regression_is_order_independent_and_noise_aware() {
        let mut rng = crate::rng::stream_rng(5, 0);
        let pts: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0, 128.0, 256.0]
            .iter()
            .map(|&n| {
                let eps: f64 = rng.random::<f64>() - 0.5;
                (n, 3.0 * f64::powf(n, -0.8) * (0.1 * eps).exp())
            })
            .collect();
        let (slope, intercept, stderr) = regress_loglog(&pts).unwrap();
        assert!(
            (slope + 0.8).abs() < 2.0 * stderr.max(0.02),
            "slope {slope} stderr {stderr}"
        );
        let mut shuffled = pts.clone();
        shuffled.swap(0, 5);
        shuffled.swap(1, 3);
        let (s2, i2, e2) = regress_loglog(&shuffled).unwrap();
        assert_eq!(slope.to_bits(), s2.to_bits());
        assert_eq!(intercept.to_bits(), i2.to_bits());
        assert_eq!(stderr.to_bits(), e2.to_bits());
    }

    #[test]
    fn regression_rejects_bad_input() {
        assert!(regress_loglog(&[(8.0, 1.0), (16.0, 0.5)]).is_err());
        assert!(regress_loglog(&[(8.0, 1.0), (16.0, 0.0), (32.0, 0.1)]).is_err());
        assert!(regress_loglog(&[(8.0, 1.0), (16.0, -0.5), (32.0, 0.1)]).is_err());
        assert!(regress_loglog(&[(8.0, 1.0), (8.0, 0.5), (8.0, 0.1)]).is_err());
    }

    #[test]
    fn case1_slope_is_near_minus_one() {
        let mut p = plan(quadratic_config());
        p.levels = vec![8, 16, 32, 64, 128, 256, 512, 1024];
        for &h in &[0.1, 0.3, 0.5] {
            p.config.h = h;
            let est = run_case1(&p).unwrap();
            assert_eq!(est.status, RateStatus::Estimated);
            assert!(
                est.slope > -1.1 && est.slope < -0.85,
                "H={h}: slope {}",
                est.slope
            );
            assert!(est.points.iter().all(|pt| pt.gated));
        }
    }

    #[test]
    fn case1_constant_vol_is_degenerate() {
        let mut p = plan(quadratic_config());
        p.config.vol = VolSpec::Polynomial { coefficients: vec![2.0] };
        let est = run_case1(&p).unwrap();
        assert_eq!(est.status, RateStatus::Degenerate);
        assert!(est.slope.is_nan());
    }

    #[test]
    fn case2_matches_analytic_within_ci() {
        let p = plan(quadratic_config());
        let est = run_case2(&p).unwrap();
        for pt in &est.points {
            let analytic = exact_weak_error_quadratic(&p.config, pt.n).unwrap();
            // The fine proxy replaces the exact model, so its own weak error
            // (an order of magnitude below the coarsest level here) rides
            // inside the interval.
            assert!(
                (pt.error - analytic).abs() < pt.ci + 2.0 * analytic / pt.n as f64,
                "N={}: {} vs {} (ci {})",
                pt.n,
                pt.error,
                analytic,
                pt.ci
            );
        }
    }

    #[test]
    fn case2_linear_payoff_is_inconclusive() {
        let mut p = plan(quadratic_config());
        p.config.payoff = PayoffSpec::Quadratic { a: 0.0, b: 1.0, c: 0.0 };
        let est = run_case2(&p).unwrap();
        assert_eq!(est.status, RateStatus::Inconclusive);
        for pt in &est.points {
            assert!(pt.error.abs() <= GATE_FACTOR * pt.ci, "level {} not noise", pt.n);
        }
    }

    #[test]
    fn case2_rejects_invalid_plans() {
        let mut p = plan(quadratic_config());
        p.config.zeta = -0.5;
        assert!(run_case2(&p).is_err());
        let mut p = plan(quadratic_config());
        p.fine_n = 16;
        assert!(run_case2(&p).is_err());
        let mut p = plan(quadratic_config());
        p.fine_n = 72;
        assert!(run_case2(&p).is_err());
        let mut p = plan(quadratic_config());
        p.levels = vec![4, 4, 16];
        assert!(run_case2(&p).is_err());
        let mut p = plan(quadratic_config());
        p.replications = 1;
        assert!(run_case2(&p).is_err());
        let mut p = plan(quadratic_config());
        p.paths = 50;
        assert!(run_case2(&p).is_err());
    }

    #[test]
    fn strong_rate_at_h_half_matches_classical_order() {
        let mut p = plan(quadratic_config());
        p.config.h = 0.5;
        p.config.vol = VolSpec::Polynomial { coefficients: vec![0.0, 1.0] };
        p.config.rho = 0.7;
        p.levels = vec![8, 16, 32];
        p.fine_n = 256;
        p.paths = 4000;
        let est = run_strong(&p).unwrap();
        assert_eq!(est.status, RateStatus::Estimated);
        assert!(
            (est.slope + 0.5).abs() < 0.1,
            "slope {} (expected near -0.5)",
            est.slope
        );
    }

    #[test]
    fn strong_rate_constant_vol_is_degenerate() {
        let mut p = plan(quadratic_config());
        p.config.vol = VolSpec::Polynomial { coefficients: vec![1.5] };
        p.paths = 500;
        let est = run_strong(&p).unwrap();
        assert_eq!(est.status, RateStatus::Degenerate);
    }

    #[test]
    fn plans_round_trip_through_json() {
        let p = plan(quadratic_config());
        let text = serde_json::to_string(&p).unwrap();
        let back: ExperimentPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back.levels, p.levels);
        assert_eq!(back.seed, p.seed);
        let est = run_case1(&ExperimentPlan { levels: vec![8, 16, 32, 64], ..back }).unwrap();
        let text = serde_json::to_string(&est).unwrap();
        assert!(text.contains("\"status\":\"estimated\""));
    }
}

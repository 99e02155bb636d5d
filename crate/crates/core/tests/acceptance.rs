//! Release gates: ten end-to-end checks covering every component at its
//! stated tolerance and runtime budget. Each test prints one pass line with
//! the measured runtime; a failure names the quantity that missed its band.

use std::time::Instant;

use rvlab_core::gaussian::{build_joint_covariance, sample_bundle};
use rvlab_core::model::{ModelConfig, PayoffSpec, VolSpec};
use rvlab_core::moments::{
    exact_weak_error_quadratic, trick_rate_one_check, v_expmoment, v_moment, v_variance,
};
use rvlab_core::ppde::{
    bumped_terminals, domega_u_hat, du_dx_hat, ppde_residual, simulate_conditional, Direction,
    ForwardCurve,
};
use rvlab_core::rates::{
    default_case1_plan, default_case2_plan, default_strong_plan, regress_loglog, run_case1,
    run_case2, run_strong, RateStatus,
};
use rvlab_core::telescope::telescopic_check;
use rvlab_core::{KernelSpec, UniformGrid};

fn mean_se(vals: &[f64]) -> (f64, f64) {
    let m = vals.len();
    let mean = vals.iter().sum::<f64>() / m as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

fn pass(name: &str, started: Instant, budget_seconds: f64, detail: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_seconds,
        "{name}: runtime {elapsed:.1} s exceeded the {budget_seconds:.0} s budget"
    );
    println!("PASS {name} [{elapsed:.1} s]: {detail}");
}

#[test]
fn gate_01_kernel_identities() {
    let started = Instant::now();
    let mut beta_max: f64 = 0.0;
    let mut diag_max: f64 = 0.0;
    for h in [0.05, 0.1, 0.25, 0.4] {
        let kernel = KernelSpec::new(h).unwrap();
        for t in [0.5, 1.0, 2.0] {
            for beta in [0.0, 0.5, 1.0, 2.0] {
                let value = kernel.weighted_integral(t, beta).unwrap();
                let oracle = kernel.beta_identity_oracle(t, beta).unwrap();
                let rel = ((value - oracle) / oracle).abs();
                assert!(
                    rel <= 1e-8,
                    "weighted integral at h={h}, t={t}, beta={beta}: rel err {rel:.2e}"
                );
                beta_max = beta_max.max(rel);
            }
            let value = kernel.cov_vv(t, t).unwrap();
            let oracle = t.powf(2.0 * h) / (2.0 * h);
            let gap = (value - oracle).abs();
            assert!(
                gap <= 1e-10 * oracle.max(1.0),
                "diagonal variance at h={h}, t={t}: gap {gap:.2e}"
            );
            diag_max = diag_max.max(gap / oracle.max(1.0));
        }
    }
    pass(
        "gate 01 kernel identities",
        started,
        10.0,
        &format!("beta max rel err {beta_max:.2e}, diagonal max rel err {diag_max:.2e}"),
    );
}

#[test]
fn gate_02_delta_kernel_scaling() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for h in [0.1, 0.2, 0.4] {
        let kernel = KernelSpec::new(h).unwrap();
        for alpha in [0.0, 2.0 * h] {
            let points: Vec<(f64, f64)> = (3..=9)
                .map(|k| {
                    let dt = 0.5f64.powi(k);
                    (1.0 / dt, kernel.delta_weighted_integral(2.0 * dt, dt, alpha).unwrap())
                })
                .collect();
            let (slope_n, _, _) = regress_loglog(&points).unwrap();
            let slope = -slope_n;
            let target = alpha + h + 0.5;
            let gap = (slope - target).abs();
            assert!(gap <= 0.05, "scaling at h={h}, alpha={alpha}: slope {slope:.4} vs {target}");
            worst = worst.max(gap);
        }
    }
    pass(
        "gate 02 delta-kernel scaling",
        started,
        30.0,
        &format!("6 slopes within {worst:.4} of alpha + H + 1/2"),
    );
}

#[test]
fn gate_03_sampler_moments() {
    let started = Instant::now();
    let paths = 200_000;
    let mut worst: f64 = 0.0;
    for (h, seed) in [(0.1, 31_415), (0.3, 27_182)] {
        let grid = UniformGrid::new(1.0, 16).unwrap();
        let spec = build_joint_covariance(h, &grid).unwrap();
        let bundle = sample_bundle(&spec, 0.0, paths, seed).unwrap();
        for i in 0..16 {
            let t = grid.node(i + 1);
            let column = bundle.v.column(i);
            let checks: [(&str, Vec<f64>, f64); 3] = [
                ("Var", column.iter().map(|&v| v * v).collect(), v_variance(h, t).unwrap()),
                ("E[V^4]", column.iter().map(|&v| v.powi(4)).collect(), v_moment(h, t, 4).unwrap()),
                (
                    "E[exp(V/2)]",
                    column.iter().map(|&v| (0.5 * v).exp()).collect(),
                    v_expmoment(h, t, 0.5).unwrap(),
                ),
            ];
            for (label, vals, oracle) in checks {
                let (mean, se) = mean_se(&vals);
                let sigmas = (mean - oracle).abs() / se;
                assert!(
                    sigmas <= 4.0,
                    "{label} at h={h}, t={t}: {mean:.6} vs {oracle:.6} is {sigmas:.2} SE off"
                );
                worst = worst.max(sigmas);
            }
        }
    }
    pass(
        "gate 03 sampler moments",
        started,
        120.0,
        &format!("96 node statistics within 4 SE (worst {worst:.2})"),
    );
}

#[test]
fn gate_04_analytic_weak_rate() {
    let started = Instant::now();
    let mut slopes = Vec::new();
    for h in [0.1, 0.3] {
        let mut plan = default_case1_plan();
        plan.config.h = h;
        let estimate = run_case1(&plan).unwrap();
        assert_eq!(estimate.status, RateStatus::Estimated);
        assert!(
            (-1.1..=-0.85).contains(&estimate.slope),
            "analytic slope at h={h}: {:.4}",
            estimate.slope
        );
        slopes.push(estimate.slope);
    }

    // At H = 1/2 the mean squared volatility is exp(r/2), so the weak error
    // telescopes to an explicit geometric sum.
    let mut config = default_case1_plan().config;
    config.h = 0.5;
    for n in default_case1_plan().levels {
        let value = exact_weak_error_quadratic(&config, n).unwrap();
        let dt = 1.0 / n as f64;
        let total = 0.5f64.exp() - 1.0;
        let closed = 2.0 * total - dt * total / ((0.5 * dt).exp() - 1.0);
        assert!(
            (value - closed).abs() <= 1e-10,
            "geometric closed form at n={n}: {value:.14e} vs {closed:.14e}"
        );
    }
    pass(
        "gate 04 analytic weak rate",
        started,
        10.0,
        &format!("slopes {:.4} and {:.4}, geometric cross-check to 1e-10", slopes[0], slopes[1]),
    );
}

#[test]
fn gate_05_strong_rate() {
    let started = Instant::now();
    let mut detail = String::new();
    for h in [0.2, 0.4] {
        let mut plan = default_strong_plan();
        plan.config.h = h;
        let estimate = run_strong(&plan).unwrap();
        assert_eq!(estimate.status, RateStatus::Estimated);
        let gap = (estimate.slope + h).abs();
        assert!(gap <= 0.1, "strong slope at h={h}: {:.4} vs {:.4}", estimate.slope, -h);
        detail.push_str(&format!("h={h}: slope {:.4}; ", estimate.slope));
    }
    pass("gate 05 strong rate", started, 600.0, detail.trim_end_matches("; "));
}

#[test]
fn gate_06_sampled_weak_rate() {
    let started = Instant::now();
    let plan = default_case2_plan();
    let estimate = run_case2(&plan).unwrap();
    assert_eq!(
        estimate.status,
        RateStatus::Estimated,
        "the cubic experiment must conclude; points: {:?}",
        estimate.points
    );
    assert!(
        estimate.slope <= -0.65,
        "cubic slope {:.4} misses the one-sided smooth-rate band",
        estimate.slope
    );
    let gated = estimate.points.iter().filter(|p| p.gated).count();

    // Cross-check: the same coupled estimator with a quadratic payoff must
    // reproduce the analytic per-level errors, net of the fine reference.
    let mut quadratic = plan.clone();
    quadratic.config.payoff = PayoffSpec::Quadratic { a: 1.0, b: 0.0, c: 0.0 };
    quadratic.paths = 50_000;
    quadratic.replications = 8;
    quadratic.seed = 271_828_182;
    let check = run_case2(&quadratic).unwrap();
    let fine_bias = exact_weak_error_quadratic(&quadratic.config, quadratic.fine_n).unwrap();
    for point in &check.points {
        let analytic = exact_weak_error_quadratic(&quadratic.config, point.n).unwrap() - fine_bias;
        let gap = (point.error - analytic).abs();
        assert!(
            gap <= point.ci,
            "quadratic cross-check at n={}: {:.6e} vs analytic {:.6e} (ci {:.2e})",
            point.n,
            point.error,
            analytic,
            point.ci
        );
    }
    pass(
        "gate 06 sampled weak rate",
        started,
        1200.0,
        &format!(
            "cubic slope {:.4} from {gated} gated levels; quadratic cross-check within CI",
            estimate.slope
        ),
    );
}

#[test]
fn gate_07_derivative_consistency() {
    let started = Instant::now();
    let eps = 1e-3;
    let paths = 100_000;
    for (h, seed) in [(0.3, 7_001), (0.5, 7_002)] {
        let config = ModelConfig {
            x0: 0.2,
            zeta: 0.0,
            rho: -0.5,
            h,
            t: 1.0,
            vol: VolSpec::Exponential { nu: 0.3 },
            payoff: PayoffSpec::SmoothCall { strike: 0.2, smoothing: 0.5 },
        };
        let curve = ForwardCurve::flat(0.5, 1.0, 16, 0.04).unwrap();
        let sample = simulate_conditional(0.2, &curve, &config, paths, seed).unwrap();
        let phi = |order: u32, x: f64| config.payoff.eval(order, x).unwrap();

        // Derivatives in x: the state enters the terminal value additively,
        // so shared-noise bumps shift each path by exactly eps.
        let mut gap_dx = Vec::with_capacity(paths);
        let mut gap_dxx = Vec::with_capacity(paths);
        for &x in sample.x_terminal() {
            let (up, down) = (phi(0, x + eps), phi(0, x - eps));
            gap_dx.push((up - down) / (2.0 * eps) - phi(1, x));
            gap_dxx.push((up - 2.0 * phi(0, x) + down) / (eps * eps) - phi(2, x));
        }
        let (mean, se) = mean_se(&gap_dx);
        assert!(
            mean.abs() <= 1.96 * se + 1e-7,
            "d/dx at h={h}: paired gap {mean:.3e} (se {se:.1e})"
        );
        let (mean, se) = mean_se(&gap_dxx);
        assert!(
            mean.abs() <= 1.96 * se + 1e-6,
            "d2/dx2 at h={h}: paired gap {mean:.3e} (se {se:.1e})"
        );

        // Derivatives along a bounded curve direction, against central
        // differences of re-folded terminals on the same noise.
        let eta: Vec<f64> = (0..=16).map(|j| 0.5 + curve.node(j) - curve.t()).collect();
        let up = bumped_terminals(&sample, &eta, eps).unwrap();
        let down = bumped_terminals(&sample, &eta, -eps).unwrap();
        let dt = curve.dt();
        let mut weights = Vec::with_capacity(paths);
        for p in 0..paths {
            let mut w = 0.0;
            for j in 0..16 {
                let v = sample.v_left()[(p, j)];
                let g = config.vol.eval(1, v).unwrap() * sample.db()[(p, j)]
                    + config.zeta * config.vol.sq_deriv(1, v).unwrap() * dt;
                w += g * eta[j];
            }
            weights.push(w);
        }
        let mut gap_domega = Vec::with_capacity(paths);
        let mut gap_domega_dx = Vec::with_capacity(paths);
        for p in 0..paths {
            let x = sample.x_terminal()[p];
            gap_domega.push((phi(0, up[p]) - phi(0, down[p])) / (2.0 * eps) - phi(1, x) * weights[p]);
            gap_domega_dx
                .push((phi(1, up[p]) - phi(1, down[p])) / (2.0 * eps) - phi(2, x) * weights[p]);
        }
        let (mean, se) = mean_se(&gap_domega);
        assert!(
            mean.abs() <= 1.96 * se + 1e-5,
            "curve derivative at h={h}: paired gap {mean:.3e} (se {se:.1e})"
        );
        let (mean, se) = mean_se(&gap_domega_dx);
        assert!(
            mean.abs() <= 1.96 * se + 1e-5,
            "mixed curve derivative at h={h}: paired gap {mean:.3e} (se {se:.1e})"
        );

        // The reconstructed weights are the estimator's own weights: the
        // weighted payoff mean must reproduce the estimator value.
        let estimator = domega_u_hat(&sample, &Direction::Curve(eta)).unwrap();
        let weighted: Vec<f64> = sample
            .x_terminal()
            .iter()
            .zip(&weights)
            .map(|(&x, &w)| phi(1, x) * w)
            .collect();
        let (mean, _) = mean_se(&weighted);
        assert!(
            (mean - estimator.value).abs() <= 1e-12 * estimator.value.abs().max(1.0),
            "weight reconstruction at h={h}: {mean:.14e} vs {:.14e}",
            estimator.value
        );
        let _ = du_dx_hat(&sample).unwrap();
    }
    pass(
        "gate 07 derivative consistency",
        started,
        300.0,
        "x, curve, and mixed derivatives match shared-noise central differences",
    );
}

#[test]
fn gate_08_ppde_residual() {
    let started = Instant::now();
    let paths = 200_000;

    // Degenerate constant-volatility anchor with a known closed form.
    let sigma = 0.3;
    let bs = ModelConfig {
        x0: 0.2,
        zeta: -0.5,
        rho: 0.0,
        h: 0.5,
        t: 1.0,
        vol: VolSpec::Polynomial { coefficients: vec![sigma] },
        payoff: PayoffSpec::Quadratic { a: 1.0, b: 0.0, c: 0.0 },
    };
    let curve = ForwardCurve::flat(0.25, 1.0, 64, 0.0).unwrap();
    let report = ppde_residual(0.2, &curve, &bs, paths, curve.dt(), 88_001).unwrap();
    let tau = 0.75;
    let closed = (0.2 - sigma * sigma * tau / 2.0).powi(2) + sigma * sigma * tau;
    assert!(
        (report.u_anchor.value - closed).abs() <= report.u_anchor.ci,
        "constant-vol value {:.6} vs closed form {closed:.6} (ci {:.2e})",
        report.u_anchor.value,
        report.u_anchor.ci
    );
    assert!(
        report.residual.value.abs() <= 3.0 * report.residual.ci,
        "constant-vol residual {:.3e} exceeds 3 x {:.3e}",
        report.residual.value,
        report.residual.ci
    );
    let bs_detail = format!(
        "constant-vol residual {:.2e} (3ci {:.2e})",
        report.residual.value,
        3.0 * report.residual.ci
    );

    // Rough smooth-call case: the residual must vanish within noise.
    let rough = ModelConfig {
        x0: 0.2,
        zeta: 0.0,
        rho: -0.5,
        h: 0.3,
        t: 1.0,
        vol: VolSpec::Exponential { nu: 0.3 },
        payoff: PayoffSpec::SmoothCall { strike: 0.2, smoothing: 0.5 },
    };
    let curve = ForwardCurve::flat(0.25, 1.0, 64, 0.04).unwrap();
    let report = ppde_residual(0.2, &curve, &rough, paths, curve.dt(), 88_002).unwrap();
    assert!(
        report.residual.value.abs() <= 3.0 * report.residual.ci,
        "rough residual {:.3e} exceeds 3 x {:.3e}",
        report.residual.value,
        report.residual.ci
    );
    pass(
        "gate 08 ppde residual",
        started,
        600.0,
        &format!(
            "{bs_detail}; rough residual {:.2e} (3ci {:.2e})",
            report.residual.value,
            3.0 * report.residual.ci
        ),
    );
}

#[test]
fn gate_09_telescopic_balance() {
    let started = Instant::now();
    let config = ModelConfig {
        x0: 0.2,
        zeta: 0.0,
        rho: -0.5,
        h: 0.3,
        t: 1.0,
        vol: VolSpec::Exponential { nu: 0.3 },
        payoff: PayoffSpec::Quadratic { a: 1.0, b: 0.0, c: 0.0 },
    };
    let report = telescopic_check(&config, 2, 2000, 2000, 99_001).unwrap();
    assert!(!report.inconclusive, "nested run must finish inside its budget");
    assert_eq!(report.paths_done, 2000);
    assert!(
        report.diff.value.abs() <= 3.0 * report.diff.ci,
        "telescopic gap {:.3e} exceeds 3 x {:.3e}",
        report.diff.value,
        report.diff.ci
    );
    pass(
        "gate 09 telescopic balance",
        started,
        600.0,
        &format!(
            "lhs {:.3e}, rhs {:.3e}, gap {:.2e} within 3 x {:.2e}",
            report.lhs.value,
            report.rhs.value,
            report.diff.value,
            3.0 * report.diff.ci
        ),
    );
}

#[test]
fn gate_10_rate_one_bound() {
    let started = Instant::now();
    let mut checked = 0usize;
    for gamma in [0.2, 0.5, 1.0, 2.0] {
        for t_end in [0.5, 1.0, 2.0] {
            for n in 2..=1024 {
                let (lhs, bound) = trick_rate_one_check(gamma, t_end, n).unwrap();
                assert!(
                    lhs >= 0.0 && lhs <= bound,
                    "bound fails at gamma={gamma}, T={t_end}, n={n}: {lhs:.6e} vs {bound:.6e}"
                );
                checked += 1;
            }
        }
    }
    pass(
        "gate 10 rate-one bound",
        started,
        1.0,
        &format!("{checked} (gamma, T, N) combinations satisfy the defect bound"),
    );
}

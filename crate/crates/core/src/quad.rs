//! Deterministic one-dimensional quadrature used by the kernel and moment
//! routines.
//!
//! The workhorse is a globally adaptive Gauss-Legendre scheme: panels carry an
//! error estimate (16-point rule against its bisected refinement) and the
//! worst panel is split until the summed estimate drops below the requested
//! absolute tolerance. Gauss nodes are strictly interior, so integrands may be
//! singular at panel endpoints as long as they are integrable.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

const GL_ORDER: usize = 16;
const MAX_SPLITS: usize = 100_000;
// Stand-in error for panels whose estimate is not finite. Large enough to
// dominate the heap, small enough that running sums over the panel budget
// stay finite.
const ERR_SENTINEL: f64 = 1e300;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * x * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            dp = n as f64 * (x * p1 - p2) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(GL_ORDER))
}

/// Single 16-point Gauss-Legendre panel on [a, b]. No error control; callers
/// are responsible for panel placement.
pub fn fixed_gl16<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gl16();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        acc += w * f(c + h * x);
    }
    acc * h
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    seq: u64,
}

impl Segment {
    fn new<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, seq: u64) -> Self {
        let coarse = fixed_gl16(f, a, b);
        let m = 0.5 * (a + b);
        let fine = fixed_gl16(f, a, m) + fixed_gl16(f, m, b);
        let mut err = (fine - coarse).abs();
        if !(fine.is_finite() && err.is_finite()) {
            // A node hit a non-finite integrand value; force this panel to the
            // top of the heap so refinement moves the nodes off the bad point.
            err = ERR_SENTINEL;
        }
        Segment {
            a,
            b,
            value: fine,
            err,
            seq,
        }
    }
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err && self.seq == other.seq
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Integrates `f` over [a, b] to absolute tolerance `abs_tol`.
///
/// Globally adaptive: always refines the panel with the largest error
/// estimate, so integrable endpoint singularities are resolved by geometric
/// subdivision without wasting panels elsewhere. Errors out if the estimate
/// cannot be pushed below `abs_tol` within the split budget.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::invalid(format!("bad interval [{a}, {b}]")));
    }
    if !(abs_tol > 0.0) {
        return Err(Error::invalid(format!("tolerance {abs_tol} must be > 0")));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut seq = 0u64;
    let mut heap = BinaryHeap::new();
    // Panels already at floating point resolution; their estimates are final.
    let mut pinned: Vec<Segment> = Vec::new();
    let mut pinned_err = 0.0;
    let root = Segment::new(&f, a, b, seq);
    let mut heap_err = root.err;
    heap.push(root);
    while heap_err + pinned_err > abs_tol {
        if heap.len() + pinned.len() >= MAX_SPLITS {
            return Err(Error::Quadrature(format!(
                "error estimate {:.3e} > {abs_tol:.3e} after {MAX_SPLITS} panels on [{a}, {b}]",
                heap_err + pinned_err
            )));
        }
        let stuck = match heap.peek() {
            Some(worst) => worst.err == 0.0,
            None => true,
        };
        if stuck {
            // Max-heap: every splittable panel is converged, so the true
            // remaining estimate is exactly `pinned_err` and the running
            // `heap_err` is stale rounding.
            if pinned_err <= abs_tol {
                break;
            }
            return Err(Error::Quadrature(format!(
                "error estimate {pinned_err:.3e} > {abs_tol:.3e} is irreducible at floating \
                 point resolution on [{a}, {b}]"
            )));
        }
        let worst = heap.pop().expect("peek above saw a segment");
        let m = 0.5 * (worst.a + worst.b);
        if !(worst.a < m && m < worst.b) {
            heap_err -= worst.err;
            pinned_err += worst.err;
            pinned.push(worst);
            continue;
        }
        seq += 1;
        let left = Segment::new(&f, worst.a, m, seq);
        seq += 1;
        let right = Segment::new(&f, m, worst.b, seq);
        heap_err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
    }
    // Sum in spatial order for a reproducible, well-conditioned total.
    let mut segs: Vec<Segment> = heap.into_vec();
    segs.append(&mut pinned);
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    Ok(segs.iter().map(|s| s.value).sum())
}

/// Integrates `f` over [a, b] with geometric pre-subdivision toward `a`,
/// then the same adaptive rule on each panel.
///
/// Intended for integrands that are bounded but have unbounded derivatives at
/// the left endpoint, such as t -> exp(c * t^(2H)) at t = 0.
pub fn integrate_geometric<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::invalid(format!("bad interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let len = b - a;
    const LEVELS: u32 = 48;
    let per_panel = abs_tol / (LEVELS as f64 + 1.0);
    let mut cuts = Vec::with_capacity(LEVELS as usize + 2);
    cuts.push(a);
    for k in (0..=LEVELS).rev() {
        cuts.push(a + len * 0.5f64.powi(k as i32));
    }
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        if pair[1] > pair[0] {
            total += integrate(&f, pair[0], pair[1], per_panel)?;
        }
    }
    Ok(total)
}

/// Natural log of the Beta function, via the log-Gamma route.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Beta function B(a, b) for positive arguments.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    ln_beta(a, b).exp()
}

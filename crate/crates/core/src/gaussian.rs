//! Exact joint sampling of (V at the grid nodes, W increments) plus the
//! independent and correlated Brownian increments.
//!
//! The vector (V_{t_1}, .., V_{t_N}, dW_0, .., dW_{N-1}) is centered Gaussian;
//! its covariance is assembled in closed form where possible and by
//! per-cell quadrature otherwise, factorized once, and then mapped over
//! per-path standard normal draws. Paths are tied to RNG streams by index, so
//! any contiguous block of paths can be produced independently and
//! deterministically.

use crate::error::{Error, Result};
use crate::grid::{RefineMap, UniformGrid};
use crate::kernel::KernelSpec;
use crate::linalg;
use crate::rng::stream_rng;
use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{Read, Write};
use std::path::Path;

/// Joint covariance of (V nodes, W increments) on a uniform grid, with its
/// lower Cholesky factor. Block order is V first (nodes t_1..t_N), then the
/// N increments dW_0..dW_{N-1}.
#[derive(Debug, Clone)]
pub struct JointGaussianSpec {
    grid: UniformGrid,
    h: f64,
    cov: Array2<f64>,
    chol: Array2<f64>,
    jitter: f64,
}

impl JointGaussianSpec {
    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cov(&self) -> ArrayView2<'_, f64> {
        self.cov.view()
    }

    pub fn chol(&self) -> ArrayView2<'_, f64> {
        self.chol.view()
    }

    /// Diagonal shift the factorization needed (0 for well-conditioned cases).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Covariance of V_{t_i} and V_{t_j} (1-based node indices).
    pub fn cov_vv(&self, i: usize, j: usize) -> f64 {
        self.cov[(i - 1, j - 1)]
    }

    /// Covariance of V_{t_i} (1-based) and dW_j (0-based increment index).
    pub fn cov_vw(&self, i: usize, j: usize) -> f64 {
        self.cov[(i - 1, self.grid.n() + j)]
    }
}

/// One unit-grid covariance panel
/// Q(p, q) = int_0^1 (p+1-r)^(H-1/2) (q+1-r)^(H-1/2) dr with q = p + lag.
///
/// The lag-0 panel has the closed form ((p+1)^(2H) - p^(2H))/(2H); the p = 0
/// panel is singular at r = 1 and gets the power substitution; the rest are
/// analytic well away from their singularities, where a single 16-point
/// Gauss-Legendre panel is already exact to machine precision.
pub(crate) fn unit_panel(h: f64, p: usize, lag: usize) -> Result<f64> {
    let a = h - 0.5;
    if lag == 0 {
        let pf = p as f64;
        return Ok(((pf + 1.0).powf(2.0 * h) - pf.powf(2.0 * h)) / (2.0 * h));
    }
    let lagf = lag as f64;
    if p == 0 {
        let hp = h + 0.5;
        let inv_hp = 1.0 / hp;
        let val = crate::quad::integrate(|u| (lagf + u.powf(inv_hp)).powf(a), 0.0, 1.0, 1e-13)?;
        return Ok(val / hp);
    }
    let pf = p as f64;
    Ok(crate::quad::fixed_gl16(
        |r| ((pf + 1.0 - r) * (lagf + pf + 1.0 - r)).powf(a),
        0.0,
        1.0,
    ))
}

/// Assembles the joint covariance on `grid` and factorizes it.
///
/// V-block entries come from per-lag prefix sums of unit-grid panels scaled by
/// dt^(2H); cross-block entries are the exact kernel primitive over one cell;
/// the increment block is dt times the identity.
pub fn build_joint_covariance(h: f64, grid: &UniformGrid) -> Result<JointGaussianSpec> {
    let kernel = KernelSpec::new(h)?;
    let n = grid.n();
    let delta = grid.dt();
    let dim = 2 * n;
    let mut cov = Array2::<f64>::zeros((dim, dim));
    let scale = delta.powf(2.0 * h);
    for lag in 0..n {
        let mut running = 0.0;
        for p in 0..(n - lag) {
            running += unit_panel(h, p, lag)?;
            let row = p;
            let col = p + lag;
            cov[(row, col)] = scale * running;
            cov[(col, row)] = scale * running;
        }
    }
    for i in 1..=n {
        let t_i = grid.node(i);
        for j in 0..n {
            let c = kernel.primitive(t_i, grid.node(j), grid.node(j + 1))?;
            cov[(i - 1, n + j)] = c;
            cov[(n + j, i - 1)] = c;
        }
    }
    for j in 0..n {
        cov[(n + j, n + j)] = delta;
    }
    let factor = linalg::cholesky(&cov)?;
    let jitter = factor.jitter();
    Ok(JointGaussianSpec {
        grid: *grid,
        h,
        cov,
        chol: factor.into_l(),
        jitter,
    })
}

/// Exact joint draws for a block of paths, plus the independent and
/// correlated Brownian increments.
///
/// Row p corresponds to global path index `path_start + p`; concatenating
/// blocks reproduces a single larger block bit for bit.
#[derive(Debug, Clone)]
pub struct NoiseBundle {
    /// V at nodes t_1..t_N (V_{t_0} = 0 is implicit), one row per path.
    pub v: Array2<f64>,
    /// W increments dW_0..dW_{N-1}.
    pub dw: Array2<f64>,
    /// Independent Brownian increments, N(0, dt) entries.
    pub dwbar: Array2<f64>,
    /// dB = rho dW + sqrt(1 - rho^2) dWbar.
    pub db: Array2<f64>,
    pub rho: f64,
    pub seed: u64,
    pub path_start: u64,
}

impl NoiseBundle {
    pub fn paths(&self) -> usize {
        self.v.nrows()
    }

    pub fn steps(&self) -> usize {
        self.v.ncols()
    }
}

/// Draws `m` paths with global indices starting at `path_start`.
///
/// Per path, the stream draws 2N standard normals for the correlated block,
/// then N for dWbar; the order is part of the reproducibility contract.
pub fn sample_block(
    spec: &JointGaussianSpec,
    rho: f64,
    seed: u64,
    path_start: u64,
    m: usize,
) -> Result<NoiseBundle> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::invalid(format!("correlation {rho} outside [-1, 1]")));
    }
    if m == 0 {
        return Err(Error::invalid("path count must be >= 1".to_string()));
    }
    let n = spec.grid.n();
    let dim = 2 * n;
    let sqrt_dt = spec.grid.dt().sqrt();
    let mut z = Array2::<f64>::zeros((m, dim));
    let mut dwbar = Array2::<f64>::zeros((m, n));
    Zip::indexed(z.rows_mut())
        .and(dwbar.rows_mut())
        .par_for_each(|p, mut zrow, mut wrow| {
            let mut rng = stream_rng(seed, path_start + p as u64);
            for x in zrow.iter_mut() {
                *x = rng.sample::<f64, _>(StandardNormal);
            }
            for w in wrow.iter_mut() {
                *w = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            }
        });
    let correlated = linalg::tri_mul_batch(spec.chol.view(), z.view())?;
    let v = correlated.slice(s![.., ..n]).to_owned();
    let dw = correlated.slice(s![.., n..]).to_owned();
    let rho_bar = (1.0 - rho * rho).max(0.0).sqrt();
    let mut db = &dw * rho;
    db.scaled_add(rho_bar, &dwbar);
    Ok(NoiseBundle {
        v,
        dw,
        dwbar,
        db,
        rho,
        seed,
        path_start,
    })
}

/// Single-block convenience wrapper starting at path 0.
pub fn sample_bundle(spec: &JointGaussianSpec, rho: f64, m: usize, seed: u64) -> Result<NoiseBundle> {
    sample_block(spec, rho, seed, 0, m)
}

/// Aggregates a fine-grid bundle to the coarse grid of `map`: increments are
/// summed over refinement blocks and V is read off at the shared nodes.
pub fn aggregate_to_coarse(fine: &NoiseBundle, map: &RefineMap) -> Result<NoiseBundle> {
    if fine.steps() != map.fine_n() {
        return Err(Error::Dimension(format!(
            "bundle has {} steps, refinement map expects {}",
            fine.steps(),
            map.fine_n()
        )));
    }
    let m = fine.paths();
    let nc = map.coarse_n();
    let ratio = map.ratio();
    let mut v = Array2::<f64>::zeros((m, nc));
    let mut dw = Array2::<f64>::zeros((m, nc));
    let mut dwbar = Array2::<f64>::zeros((m, nc));
    let mut db = Array2::<f64>::zeros((m, nc));
    for j in 0..nc {
        v.column_mut(j).assign(&fine.v.column(map.fine_node_index(j + 1)));
        let lo = j * ratio;
        let hi = lo + ratio;
        dw.column_mut(j).assign(&fine.dw.slice(s![.., lo..hi]).sum_axis(Axis(1)));
        dwbar
            .column_mut(j)
            .assign(&fine.dwbar.slice(s![.., lo..hi]).sum_axis(Axis(1)));
        db.column_mut(j).assign(&fine.db.slice(s![.., lo..hi]).sum_axis(Axis(1)));
    }
    Ok(NoiseBundle {
        v,
        dw,
        dwbar,
        db,
        rho: fine.rho,
        seed: fine.seed,
        path_start: fine.path_start,
    })
}

const FACTOR_MAGIC: [u8; 4] = *b"VLTC";
const FACTOR_VERSION: u8 = 1;

/// Writes a (2N)x(2N) matrix tied to grid size `n` in the binary cache
/// format: magic "VLTC", version u8, N u16 little-endian, one pad byte, then
/// row-major little-endian f64 entries.
pub fn write_matrix(path: &Path, n: u16, matrix: ArrayView2<'_, f64>) -> Result<()> {
    let dim = 2 * n as usize;
    if matrix.nrows() != dim || matrix.ncols() != dim {
        return Err(Error::Dimension(format!(
            "matrix {}x{} does not match grid size {n}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(&FACTOR_MAGIC)?;
    file.write_all(&[FACTOR_VERSION])?;
    file.write_all(&n.to_le_bytes())?;
    file.write_all(&[0u8])?;
    for row in matrix.rows() {
        for x in row {
            file.write_all(&x.to_le_bytes())?;
        }
    }
    file.flush()?;
    Ok(())
}

/// Reads a matrix written by `write_matrix`, returning (N, matrix).
pub fn read_matrix(path: &Path) -> Result<(u16, Array2<f64>)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 8];
    file.read_exact(&mut header)?;
    if header[..4] != FACTOR_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &header[..4])));
    }
    if header[4] != FACTOR_VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[4])));
    }
    let n = u16::from_le_bytes([header[5], header[6]]);
    let dim = 2 * n as usize;
    let mut data = vec![0.0f64; dim * dim];
    let mut buf = [0u8; 8];
    for x in data.iter_mut() {
        file.read_exact(&mut buf).map_err(|e| {
            Error::Format(format!("matrix body truncated for grid size {n}: {e}"))
        })?;
        *x = f64::from_le_bytes(buf);
    }
    if file.read(&mut buf)? != 0 {
        return Err(Error::Format("trailing bytes after matrix body".to_string()));
    }
    let matrix = Array2::from_shape_vec((dim, dim), data)
        .map_err(|e| Error::Format(format!("shape error: {e}")))?;
    Ok((n, matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments;
    use approx::assert_relative_eq;

    #[test]
    fn brownian_degenerate_case_has_rank_one_covariance() {
        let grid = UniformGrid::new(1.0, 1).unwrap();
        let spec = build_joint_covariance(0.5, &grid).unwrap();
        for &(i, j, want) in &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)] {
            assert_relative_eq!(spec.cov()[(i, j)], want, max_relative = 1e-14);
        }
        // V = W exactly, so the matrix is singular and a jitter rung is used.
        assert!(spec.jitter() > 0.0);
    }

    #[test]
    fn cross_block_matches_primitive_closed_form() {
        let grid = UniformGrid::new(1.0, 2).unwrap();
        let spec = build_joint_covariance(0.3, &grid).unwrap();
        let want = (1.0f64.powf(0.8) - 0.5f64.powf(0.8)) / 0.8;
        assert_relative_eq!(spec.cov_vw(2, 0), want, max_relative = 1e-14);
        // dW after the node is uncorrelated with it.
        assert_eq!(spec.cov_vw(1, 1), 0.0);
    }

    #[test]
    fn v_block_matches_adaptive_quadrature() {
        let grid = UniformGrid::new(2.0, 8).unwrap();
        for &h in &[0.1, 0.3, 0.5] {
            let spec = build_joint_covariance(h, &grid).unwrap();
            let kernel = KernelSpec::new(h).unwrap();
            for i in 1..=8usize {
                for j in i..=8usize {
                    let want = kernel.cov_vv(grid.node(i), grid.node(j)).unwrap();
                    assert_relative_eq!(
                        spec.cov_vv(i, j),
                        want,
                        epsilon = 1e-11,
                        max_relative = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn v_diagonal_is_exact_variance() {
        let grid = UniformGrid::new(1.5, 16).unwrap();
        for &h in &[0.1, 0.25, 0.5] {
            let spec = build_joint_covariance(h, &grid).unwrap();
            for i in 1..=16usize {
                let want = moments::v_variance(h, grid.node(i)).unwrap();
                assert_relative_eq!(spec.cov_vv(i, i), want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn increment_block_is_scaled_identity() {
        let grid = UniformGrid::new(1.0, 4).unwrap();
        let spec = build_joint_covariance(0.2, &grid).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { grid.dt() } else { 0.0 };
                assert_eq!(spec.cov()[(4 + i, 4 + j)], want);
            }
        }
    }

    #[test]
    fn factor_reconstructs_covariance() {
        let grid = UniformGrid::new(1.0, 12).unwrap();
        let spec = build_joint_covariance(0.15, &grid).unwrap();
        let back = spec.chol().dot(&spec.chol().t());
        let mut num = 0.0;
        let mut den = 0.0;
        for ((i, j), c) in spec.cov().indexed_iter() {
            let shifted = c + if i == j { spec.jitter() } else { 0.0 };
            num += (back[(i, j)] - shifted).powi(2);
            den += shifted * shifted;
        }
        assert!((num / den).sqrt() < 1e-9, "relative Frobenius {}", (num / den).sqrt());
    }

    #[test]
    fn sampling_is_deterministic_and_blockwise_consistent() {
        let grid = UniformGrid::new(1.0, 6).unwrap();
        let spec = build_joint_covariance(0.3, &grid).unwrap();
        let full = sample_bundle(&spec, -0.5, 5, 77).unwrap();
        let again = sample_bundle(&spec, -0.5, 5, 77).unwrap();
        assert_eq!(full.v, again.v);
        assert_eq!(full.db, again.db);
        let head = sample_block(&spec, -0.5, 77, 0, 2).unwrap();
        let tail = sample_block(&spec, -0.5, 77, 2, 3).unwrap();
        for p in 0..2 {
            assert_eq!(full.v.row(p), head.v.row(p));
            assert_eq!(full.dwbar.row(p), head.dwbar.row(p));
        }
        for p in 0..3 {
            assert_eq!(full.dw.row(2 + p), tail.dw.row(p));
        }
        let other_seed = sample_bundle(&spec, -0.5, 5, 78).unwrap();
        assert_ne!(full.v, other_seed.v);
    }

    #[test]
    fn degenerate_correlations() {
        let grid = UniformGrid::new(1.0, 4).unwrap();
        let spec = build_joint_covariance(0.25, &grid).unwrap();
        let aligned = sample_bundle(&spec, 1.0, 3, 5).unwrap();
        assert_eq!(aligned.db, aligned.dw);
        let independent = sample_bundle(&spec, 0.0, 3, 5).unwrap();
        assert_eq!(independent.db, independent.dwbar);
        assert!(sample_bundle(&spec, 1.2, 3, 5).is_err());
    }

    #[test]
    fn empirical_moments_match_analytic_oracles() {
        let grid = UniformGrid::new(1.0, 8).unwrap();
        let h = 0.3;
        let spec = build_joint_covariance(h, &grid).unwrap();
        let m = 40_000usize;
        let bundle = sample_bundle(&spec, 0.0, m, 2024).unwrap();
        let nu = 0.5;
        // E[exp(nu V_1)] with its exact standard error.
        let mean_exp = bundle
            .v
            .column(7)
            .iter()
            .map(|v| (nu * v).exp())
            .sum::<f64>()
            / m as f64;
        let want = moments::v_expmoment(h, 1.0, nu).unwrap();
        let second = moments::v_expmoment(h, 1.0, 2.0 * nu).unwrap();
        let se = ((second - want * want) / m as f64).sqrt();
        assert!(
            (mean_exp - want).abs() < 4.0 * se,
            "exp moment {mean_exp} vs {want} (se {se})"
        );
        // Terminal variance against t^(2H)/(2H); SE of the sample variance of
        // a Gaussian is var sqrt(2/m).
        let var_want = moments::v_variance(h, 1.0).unwrap();
        let mean_v = bundle.v.column(7).sum() / m as f64;
        let var_emp = bundle.v.column(7).iter().map(|v| (v - mean_v).powi(2)).sum::<f64>()
            / (m - 1) as f64;
        let var_se = var_want * (2.0 / m as f64).sqrt();
        assert!(
            (var_emp - var_want).abs() < 4.0 * var_se,
            "variance {var_emp} vs {var_want}"
        );
        // dW increments have variance dt and are independent across cells.
        let dw0 = bundle.dw.column(0);
        let var_dw = dw0.iter().map(|x| x * x).sum::<f64>() / m as f64;
        assert!((var_dw - grid.dt()).abs() < 4.0 * grid.dt() * (2.0 / m as f64).sqrt());
    }

    #[test]
    fn aggregation_couples_coarse_and_fine() {
        let coarse = UniformGrid::new(1.0, 4).unwrap();
        let fine = UniformGrid::new(1.0, 16).unwrap();
        let map = RefineMap::new(&coarse, &fine).unwrap();
        let spec = build_joint_covariance(0.2, &fine).unwrap();
        let bundle = sample_bundle(&spec, 0.3, 6, 11).unwrap();
        let agg = aggregate_to_coarse(&bundle, &map).unwrap();
        assert_eq!(agg.steps(), 4);
        for p in 0..6 {
            // Coarse dW_0 is the sum of the first four fine increments.
            let want: f64 = (0..4).map(|l| bundle.dw[(p, l)]).sum();
            assert_relative_eq!(agg.dw[(p, 0)], want, max_relative = 1e-15);
            // Shared node V values are the same draws.
            assert_eq!(agg.v[(p, 0)].to_bits(), bundle.v[(p, 3)].to_bits());
            assert_eq!(agg.v[(p, 3)].to_bits(), bundle.v[(p, 15)].to_bits());
        }
        // Identity refinement is a no-op.
        let idmap = RefineMap::new(&fine, &fine).unwrap();
        let same = aggregate_to_coarse(&bundle, &idmap).unwrap();
        assert_eq!(same.v, bundle.v);
        assert_eq!(same.db, bundle.db);
    }

    #[test]
    fn matrix_cache_round_trips() {
        let grid = UniformGrid::new(1.0, 3).unwrap();
        let spec = build_joint_covariance(0.35, &grid).unwrap();
        let dir = std::env::temp_dir().join("rvlab-factor-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("factor.vltc");
        write_matrix(&path, 3, spec.chol()).unwrap();
        let (n, back) = read_matrix(&path).unwrap();
        assert_eq!(n, 3);
        assert_eq!(back, spec.chol.to_owned());
        // Corrupted magic is rejected.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_matrix(&path).is_err());
        // Truncated body is rejected.
        write_matrix(&path, 3, spec.chol()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_matrix(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}

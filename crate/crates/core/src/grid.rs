//! Uniform time grids and coarse/fine refinement bookkeeping.

use crate::error::{Error, Result};

/// Uniform grid 0 = t_0 < t_1 < ... < t_N = T with t_i = i T / N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    t_end: f64,
    n: usize,
}

impl UniformGrid {
    pub fn new(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::invalid(format!("horizon {t_end} must be positive and finite")));
        }
        if n == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(UniformGrid { t_end, n })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of steps (the grid has n + 1 nodes).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n as f64
    }

    /// Node t_i for i in 0..=n.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n);
        self.t_end * i as f64 / self.n as f64
    }

    /// All interior and terminal nodes t_1, ..., t_N (the sampling order of
    /// the Gaussian block).
    pub fn positive_nodes(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.node(i)).collect()
    }
}

/// Mapping from a fine uniform grid onto a coarse one over the same horizon.
///
/// Coarse values are read off the fine ones: coarse increments are sums of
/// `ratio` consecutive fine increments and coarse node values are the fine
/// node values at the shared indices, so no re-simulation is involved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefineMap {
    coarse_n: usize,
    fine_n: usize,
    ratio: usize,
}

impl RefineMap {
    pub fn new(coarse: &UniformGrid, fine: &UniformGrid) -> Result<Self> {
        if coarse.t_end() != fine.t_end() {
            return Err(Error::Dimension(format!(
                "grids cover different horizons: {} vs {}",
                coarse.t_end(),
                fine.t_end()
            )));
        }
        if fine.n() % coarse.n() != 0 {
            return Err(Error::Dimension(format!(
                "fine step count {} is not a multiple of coarse {}",
                fine.n(),
                coarse.n()
            )));
        }
        Ok(RefineMap {
            coarse_n: coarse.n(),
            fine_n: fine.n(),
            ratio: fine.n() / coarse.n(),
        })
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn coarse_n(&self) -> usize {
        self.coarse_n
    }

    pub fn fine_n(&self) -> usize {
        self.fine_n
    }

    /// Sum of the fine increments making up coarse step j.
    /// `fine_increments` must hold one value per fine step.
    pub fn coarse_increment(&self, fine_increments: &[f64], j: usize) -> f64 {
        debug_assert_eq!(fine_increments.len(), self.fine_n);
        debug_assert!(j < self.coarse_n);
        fine_increments[j * self.ratio..(j + 1) * self.ratio].iter().sum()
    }

    /// Index into the fine positive-node array (t_1, ..., t_Nf) of the coarse
    /// node t_j, for j in 1..=coarse_n.
    pub fn fine_node_index(&self, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.coarse_n);
        j * self.ratio - 1
    }
}

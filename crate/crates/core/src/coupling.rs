//! Sparse `n × k²` storage for transport plans and plan-shaped matrices.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::grid::LocalCost;

/// A real matrix on the sparsity pattern of a [`LocalCost`].
///
/// Used for gradient steps `G`, linear objectives `H` and intermediate
/// iterates that need not be valid transport plans. Padding slots are kept
/// at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    cost: Arc<LocalCost>,
    values: Vec<f64>,
}

impl Block {
    pub fn zeros(cost: Arc<LocalCost>) -> Self {
        let len = cost.block_len();
        Self {
            cost,
            values: vec![0.0; len],
        }
    }

    /// Wraps a flat `n · k²` array. Padding entries must be zero.
    pub fn from_values(cost: Arc<LocalCost>, values: Vec<f64>) -> Result<Self> {
        check_len(cost.block_len(), values.len())?;
        for i in 0..cost.n() {
            for s in cost.row_len(i)..cost.stride() {
                if values[cost.flat(i, s)] != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "padding slot ({i}, {s}) holds a nonzero value"
                    )));
                }
            }
        }
        Ok(Self { cost, values })
    }

    /// Builds a block by evaluating `f(row, target)` on every valid slot.
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(cost: Arc<LocalCost>, mut f: F) -> Self {
        let mut values = vec![0.0; cost.block_len()];
        for i in 0..cost.n() {
            for (s, &j) in cost.row_targets(i).iter().enumerate() {
                values[cost.flat(i, s)] = f(i, j);
            }
        }
        Self { cost, values }
    }

    pub fn cost(&self) -> &Arc<LocalCost> {
        &self.cost
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Valid entries of row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let start = self.cost.flat(i, 0);
        &self.values[start..start + self.cost.row_len(i)]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let start = self.cost.flat(i, 0);
        let len = self.cost.row_len(i);
        &mut self.values[start..start + len]
    }

    /// Applies `f` to every valid entry; padding stays zero.
    pub fn map_valid<F: FnMut(usize, f64) -> f64>(&mut self, mut f: F) {
        for i in 0..self.cost.n() {
            let start = self.cost.flat(i, 0);
            for flat in start..start + self.cost.row_len(i) {
                self.values[flat] = f(flat, self.values[flat]);
            }
        }
    }

    /// Largest absolute stored entry, `‖vec(·)‖∞`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Block) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `⟨·, C⟩` over stored entries.
    pub fn transport_cost(&self) -> f64 {
        self.values
            .iter()
            .zip(self.cost.costs())
            .map(|(v, c)| v * c)
            .sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.cost.n())
            .map(|i| self.row(i).iter().sum())
            .collect()
    }

    /// `Πᵀ1`: the mass arriving at each pixel.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cost.n()];
        for i in 0..self.cost.n() {
            for (&j, &v) in self.cost.row_targets(i).iter().zip(self.row(i)) {
                out[j] += v;
            }
        }
        out
    }

    /// `½‖self − other‖_F²`.
    pub fn half_dist_sq(&self, other: &Block) -> f64 {
        0.5 * self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self + alpha · other`.
    pub fn add_scaled(&self, alpha: f64, other: &Block) -> Block {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Block {
            cost: self.cost.clone(),
            values,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Block {
        Block {
            cost: self.cost.clone(),
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }

    pub(crate) fn from_raw(cost: Arc<LocalCost>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), cost.block_len());
        Self { cost, values }
    }
}

/// A transport plan with `Π ≥ 0` and cached row masses and cost.
///
/// The caches are computed on construction and the block is never mutated in
/// place, so they always agree with the stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    block: Block,
    row_mass: Vec<f64>,
    transport_cost: f64,
}

impl Coupling {
    /// The identity plan carrying `x` to itself.
    pub fn identity(cost: Arc<LocalCost>, x: &[f64]) -> Result<Self> {
        check_len(cost.n(), x.len())?;
        let mut block = Block::zeros(cost);
        for (i, &xi) in x.iter().enumerate() {
            let flat = block.cost.flat(i, 0);
            block.values[flat] = xi;
        }
        Self::from_block(block)
    }

    /// Wraps a nonnegative block. Entries above `-1e-12` are clamped to zero.
    pub fn from_block(mut block: Block) -> Result<Self> {
        for v in block.values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::InvalidInput("coupling entry is not finite".into()));
            }
            if *v < 0.0 {
                if *v < -1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "coupling entry {v} is negative"
                    )));
                }
                *v = 0.0;
            }
        }
        let row_mass = block.row_sums();
        let transport_cost = block.transport_cost();
        Ok(Self {
            block,
            row_mass,
            transport_cost,
        })
    }

    pub fn block(&self) -> &Block {
        &self.block
    }

    pub fn into_block(self) -> Block {
        self.block
    }

    pub fn cost(&self) -> &Arc<LocalCost> {
        self.block.cost()
    }

    pub fn values(&self) -> &[f64] {
        self.block.values()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.block.row(i)
    }

    /// Cached `Π1`.
    pub fn row_mass(&self) -> &[f64] {
        &self.row_mass
    }

    /// Cached `⟨Π, C⟩`.
    pub fn transport_cost(&self) -> f64 {
        self.transport_cost
    }

    /// `Πᵀ1`, the image the plan transports `x` onto.
    pub fn target_image(&self) -> Vec<f64> {
        self.block.column_sums()
    }

    /// `(1 − eta) · self + eta · other`.
    pub fn combine(&self, eta: f64, other: &Coupling) -> Result<Coupling> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParameter(format!(
                "combination weight {eta} outside [0, 1]"
            )));
        }
        if !Arc::ptr_eq(self.cost(), other.cost()) && self.cost() != other.cost() {
            return Err(Error::InvalidInput(
                "combined couplings use different cost structures".into(),
            ));
        }
        let mix = |a: &f64, b: &f64| (1.0 - eta) * a + eta * b;
        // A convex combination of valid plans is valid, and both caches are
        // linear in the entries.
        let values = self
            .block
            .values
            .iter()
            .zip(&other.block.values)
            .map(|(a, b)| mix(a, b))
            .collect();
        Ok(Coupling {
            block: Block::from_raw(self.cost().clone(), values),
            row_mass: self
                .row_mass
                .iter()
                .zip(&other.row_mass)
                .map(|(a, b)| mix(a, b))
                .collect(),
            transport_cost: mix(&self.transport_cost, &other.transport_cost),
        })
    }

    /// `‖Π1 − x‖₁`.
    pub fn row_residual(&self, x: &[f64]) -> f64 {
        self.row_mass
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Recomputes the caches from the block and compares them with the
    /// stored values.
    pub fn caches_consistent(&self, rel_tol: f64) -> bool {
        let rows = self.block.row_sums();
        let scale = |a: f64, b: f64| a.abs().max(b.abs()).max(1.0);
        rows.iter()
            .zip(&self.row_mass)
            .all(|(a, b)| (a - b).abs() <= rel_tol * scale(*a, *b))
            && (self.block.transport_cost() - self.transport_cost).abs()
                <= rel_tol * scale(self.transport_cost, 0.0)
    }
}

//! Exact small-scale solvers used as ground truth: the Wasserstein distance
//! between two images and the linear minimization problem over the ball.

mod lp;
mod transport;

use std::sync::Arc;

pub use lp::{solve_lp, LinearProgram, LpSolution};
pub use transport::{min_cost_transport, TransportSolution};

use crate::ball::BallSpec;
use crate::coupling::Block;
use crate::error::{check_finite, check_len, Error, Result};
use crate::grid::{DenseCost, LocalCost, DEFAULT_DENSE_CAP};

/// Relative mass mismatch tolerated between source and target.
pub const MASS_TOL: f64 = 1e-8;

fn check_masses(x: &[f64], z: &[f64]) -> Result<(f64, f64)> {
    check_finite(x, "source")?;
    check_finite(z, "target")?;
    if x.iter().chain(z).any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("masses must be nonnegative".into()));
    }
    let sx: f64 = x.iter().sum();
    let sz: f64 = z.iter().sum();
    if (sx - sz).abs() > MASS_TOL * sx.max(sz) {
        return Err(Error::Imbalance {
            source_mass: sx,
            target_mass: sz,
        });
    }
    Ok((sx, sz))
}

/// Exact Wasserstein distance between `x` and `z` under the neighbourhood
/// cost, by min-cost flow. `z` is rescaled to the mass of `x` to absorb
/// round-off within [`MASS_TOL`].
pub fn wasserstein_exact(x: &[f64], z: &[f64], cost: &Arc<LocalCost>) -> Result<f64> {
    Ok(optimal_transport(x, z, cost)?.value)
}

/// Like [`wasserstein_exact`] but also returns the optimal plan.
pub fn optimal_transport(x: &[f64], z: &[f64], cost: &Arc<LocalCost>) -> Result<TransportSolution> {
    let n = cost.n();
    check_len(n, x.len())?;
    check_len(n, z.len())?;
    if n > DEFAULT_DENSE_CAP {
        return Err(Error::TooLarge {
            size: n,
            cap: DEFAULT_DENSE_CAP,
        });
    }
    let (sx, sz) = check_masses(x, z)?;
    if sx == 0.0 {
        return Ok(TransportSolution {
            value: 0.0,
            plan: Block::zeros(cost.clone()),
        });
    }
    let scaled: Vec<f64> = z.iter().map(|v| v * sx / sz).collect();
    min_cost_transport(cost, x, &scaled)
}

/// A balanced transport problem over a dense allowed-cost table.
#[derive(Debug, Clone)]
pub struct DenseTransportProblem {
    source: Vec<f64>,
    target: Vec<f64>,
    cost: DenseCost,
}

impl DenseTransportProblem {
    pub fn new(source: Vec<f64>, target: Vec<f64>, cost: DenseCost) -> Result<Self> {
        let n = cost.n();
        if n > DEFAULT_DENSE_CAP {
            return Err(Error::TooLarge {
                size: n,
                cap: DEFAULT_DENSE_CAP,
            });
        }
        check_len(n, source.len())?;
        check_len(n, target.len())?;
        check_masses(&source, &target)?;
        Ok(Self {
            source,
            target,
            cost,
        })
    }

    /// Solves the transport LP with the dense simplex. Returns the optimal
    /// value and the dense `n × n` plan.
    pub fn solve(&self) -> Result<(f64, Vec<f64>)> {
        let n = self.cost.n();
        let vars: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| self.cost.get(i, j).map(|c| (i, j, c)))
            .collect();
        let mut lp = LinearProgram {
            objective: vars.iter().map(|v| v.2).collect(),
            ..Default::default()
        };
        for i in 0..n {
            let row = vars.iter().map(|v| (v.0 == i) as u8 as f64).collect();
            lp.equalities.push((row, self.source[i]));
        }
        for j in 0..n {
            let col = vars.iter().map(|v| (v.1 == j) as u8 as f64).collect();
            lp.equalities.push((col, self.target[j]));
        }
        let sol = solve_lp(&lp)?;
        let mut plan = vec![0.0; n * n];
        for (v, &(i, j, _)) in sol.point.iter().zip(&vars) {
            plan[i * n + j] = *v;
        }
        Ok((sol.value, plan))
    }
}

/// Exact linear minimization `min ⟨Π, H⟩` over the ball, by the dense
/// simplex. Returns the optimal value and plan.
pub fn lmo_exact(h: &Block, ball: &BallSpec) -> Result<(f64, Block)> {
    let cost = ball.cost();
    let n = cost.n();
    if n > DEFAULT_DENSE_CAP {
        return Err(Error::TooLarge {
            size: n,
            cap: DEFAULT_DENSE_CAP,
        });
    }
    if !(Arc::ptr_eq(h.cost(), cost) || h.cost() == cost) {
        return Err(Error::InvalidInput(
            "objective and ball use different cost structures".into(),
        ));
    }
    if !h.is_finite() {
        return Err(Error::InvalidInput("objective is not finite".into()));
    }
    let delta = ball.radius();
    if delta < 0.0 {
        return Err(Error::Infeasible(format!("negative budget {delta}")));
    }
    let flats: Vec<usize> = (0..n)
        .flat_map(|i| (0..cost.row_len(i)).map(move |s| (i, s)))
        .map(|(i, s)| cost.flat(i, s))
        .collect();
    let mut lp = LinearProgram {
        objective: flats.iter().map(|&f| h.values()[f]).collect(),
        ..Default::default()
    };
    for i in 0..n {
        let row = flats
            .iter()
            .map(|&f| (f / cost.stride() == i) as u8 as f64)
            .collect();
        lp.equalities.push((row, ball.center()[i]));
    }
    lp.inequalities
        .push((flats.iter().map(|&f| cost.cost_of(f)).collect(), delta));
    let sol = solve_lp(&lp)?;
    let mut values = vec![0.0; cost.block_len()];
    for (v, &f) in sol.point.iter().zip(&flats) {
        values[f] = *v;
    }
    Ok((sol.value, Block::from_values(cost.clone(), values)?))
}

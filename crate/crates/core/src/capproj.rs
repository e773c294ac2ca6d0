//! Capacity-constrained projection onto
//! `{Π ≥ 0, Π1 = x, Πᵀ1 ≤ caps, ⟨Π, C⟩ ≤ δ}`.
//!
//! The dual has one budget multiplier `λ` and a capacity multiplier `μ_j ≥ 0`
//! per target pixel. For fixed `(λ, μ)` the inner minimizer is the row-wise
//! simplex projection of `G − λC − 1μᵀ`. We alternate bisection on `λ` with a
//! few accelerated projected-gradient steps on `μ`.

use crate::ball::BallSpec;
use crate::bisection::maximize;
use crate::coupling::{Block, Coupling};
use crate::dualproj::dual_upper_bound;
use crate::error::{check_finite, check_len, Error, Result};
use crate::simplex::{project_shifted_rows, shifted_rows_cost};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityConfig {
    pub outer_iters: usize,
    /// Accelerated ascent steps on `μ` per outer iteration.
    pub k_inner: usize,
    /// Bisection tolerance for the `λ` updates. The objective error scales
    /// with it, so the default is much tighter than the plain projection's.
    pub tol: f64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            outer_iters: 300,
            k_inner: 15,
            tol: 1e-9,
        }
    }
}

/// Dual iterate of the capacity projection.
#[derive(Debug, Clone)]
pub struct CapacityDualState {
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub k_inner: usize,
    /// Previous `μ` for the momentum term.
    pub mu_prev: Vec<f64>,
    /// Current ascent step size.
    pub step: f64,
    /// Dual value after each outer iteration.
    pub dual_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CapacityProjection {
    pub coupling: Coupling,
    pub state: CapacityDualState,
}

/// Column sums minus caps: the supergradient of the dual in `μ`.
pub fn mu_gradient(pi: &Block, caps: &[f64]) -> Result<Vec<f64>> {
    check_len(pi.cost().n(), caps.len())?;
    Ok(pi
        .column_sums()
        .iter()
        .zip(caps)
        .map(|(s, c)| s - c)
        .collect())
}

fn shift_columns(g: &Block, mu: &[f64]) -> Block {
    let cost = g.cost().clone();
    let mut out = g.clone();
    out.map_valid(|flat, v| v - mu[cost.target_of(flat).unwrap()]);
    out
}

/// Dual value `g(λ, μ)` and the inner minimizer.
pub fn capacity_dual_value(
    g: &Block,
    ball: &BallSpec,
    caps: &[f64],
    lambda: f64,
    mu: &[f64],
) -> Result<(f64, Block)> {
    check_len(ball.cost().n(), caps.len())?;
    check_len(ball.cost().n(), mu.len())?;
    let shifted = shift_columns(g, mu);
    let plan = project_shifted_rows(&shifted, lambda, ball.center());
    Ok((dual_at(g, ball, caps, lambda, mu, &plan), plan))
}

fn dual_at(g: &Block, ball: &BallSpec, caps: &[f64], lambda: f64, mu: &[f64], plan: &Block) -> f64 {
    let cap_term: f64 = plan
        .column_sums()
        .iter()
        .zip(caps)
        .zip(mu)
        .map(|((s, c), m)| m * (s - c))
        .sum();
    plan.half_dist_sq(g) + lambda * (plan.transport_cost() - ball.radius()) + cap_term
}

/// Bisection on `λ` with `μ` fixed. Returns the multiplier and the
/// budget-feasible plan recovered at it.
fn solve_lambda(g_mu: &Block, ball: &BallSpec, tol: f64) -> Result<(f64, Block)> {
    let x = ball.center();
    let delta = ball.radius();
    let upper = dual_upper_bound(g_mu, x, ball.cost())?;
    let lambda = maximize(upper, tol, |lambda| {
        Ok(shifted_rows_cost(g_mu, lambda, x).0 - delta)
    })?
    .lambda;
    Ok((lambda, project_shifted_rows(g_mu, lambda, x)))
}

fn clamp_step(base: &[f64], dir: &[f64], scale: f64) -> Vec<f64> {
    base.iter()
        .zip(dir)
        .map(|(b, d)| (b + scale * d).max(0.0))
        .collect()
}

/// Projection onto the coupling ball with column-sum caps.
///
/// Every outer iteration re-solves `λ` by bisection, then runs `k_inner`
/// Nesterov steps on `μ` with momentum restarted. Updates that would lower
/// the dual are rejected, so the dual value never decreases. The returned
/// plan is the one recovered by a final `λ` bisection at the last `μ`.
pub fn capacity_project(
    g: &Block,
    ball: &BallSpec,
    caps: &[f64],
    config: &CapacityConfig,
) -> Result<CapacityProjection> {
    let cost = ball.cost().clone();
    let n = cost.n();
    check_len(n, caps.len())?;
    check_finite(caps, "capacities")?;
    if caps.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::InvalidParameter(
            "capacities must be positive".into(),
        ));
    }
    if config.outer_iters == 0 {
        return Err(Error::InvalidParameter(
            "outer_iters must be at least 1".into(),
        ));
    }
    if !(std::sync::Arc::ptr_eq(g.cost(), &cost) || g.cost() == &cost) {
        return Err(Error::InvalidInput(
            "block and ball use different cost structures".into(),
        ));
    }
    if !g.is_finite() {
        return Err(Error::InvalidInput("projection input is not finite".into()));
    }
    let supply = ball.mass();
    let capacity: f64 = caps.iter().sum();
    if supply > capacity * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "total mass {supply} exceeds total capacity {capacity}"
        )));
    }

    let mut state = CapacityDualState {
        lambda: 0.0,
        mu: vec![0.0; n],
        k_inner: config.k_inner,
        mu_prev: vec![0.0; n],
        // Lipschitz constant of the μ-gradient is at most the longest column.
        step: 1.0 / cost.max_column_len().max(1) as f64,
        dual_trace: Vec::with_capacity(config.outer_iters),
    };
    let (mut current, _) = capacity_dual_value(g, ball, caps, 0.0, &state.mu)?;

    for _ in 0..config.outer_iters {
        let g_mu = shift_columns(g, &state.mu);
        let (lambda, _) = solve_lambda(&g_mu, ball, config.tol)?;
        let (value, _) = capacity_dual_value(g, ball, caps, lambda, &state.mu)?;
        if value >= current {
            state.lambda = lambda;
            current = value;
        }

        state.mu_prev.clone_from(&state.mu);
        let mut t = 1.0f64;
        for _ in 0..config.k_inner {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let momentum: Vec<f64> = state
                .mu
                .iter()
                .zip(&state.mu_prev)
                .map(|(m, p)| m - p)
                .collect();
            let look = clamp_step(&state.mu, &momentum, beta);
            let (_, plan) = capacity_dual_value(g, ball, caps, state.lambda, &look)?;
            let grad = mu_gradient(&plan, caps)?;
            let candidate = clamp_step(&look, &grad, state.step);
            let (value, _) = capacity_dual_value(g, ball, caps, state.lambda, &candidate)?;
            if value >= current {
                state.mu_prev = std::mem::replace(&mut state.mu, candidate);
                current = value;
                t = t_next;
            } else {
                if beta == 0.0 {
                    state.step *= 0.5;
                }
                state.mu_prev.clone_from(&state.mu);
                t = 1.0;
            }
        }
        state.dual_trace.push(current);
    }

    let g_mu = shift_columns(g, &state.mu);
    let (lambda, plan) = solve_lambda(&g_mu, ball, config.tol)?;
    state.lambda = lambda;
    Ok(CapacityProjection {
        coupling: Coupling::from_block(plan)?,
        state,
    })
}

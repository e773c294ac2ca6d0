//! Dykstra's alternating projection onto `C_s ∩ C_h`.
//!
//! `C_s = {Π ≥ 0, Π1 = x}` (row simplices) and `C_h = {⟨Π, C⟩ ≤ δ}` (a
//! halfspace). Convergence is slow, so this is a baseline and a
//! high-precision reference for the dual projection, not something to call
//! inside an attack loop.

use crate::ball::BallSpec;
use crate::coupling::{Block, Coupling};
use crate::error::{check_len, Error, Result};
use crate::grid::LocalCost;
use crate::simplex::project_rows_unchecked;

/// Closed-form projection onto `{⟨Π, C⟩ ≤ δ}`:
/// `Π − max(⟨Π, C⟩ − δ, 0) / ‖C‖_F² · C`.
///
/// Only the halfspace is enforced; the output may have negative entries.
pub fn project_halfspace(pi: &Block, cost: &LocalCost, delta: f64) -> Result<Block> {
    let norm_sq = cost.frobenius_sq();
    if !(norm_sq > 0.0) {
        return Err(Error::DegenerateCost(
            "cost matrix is identically zero".into(),
        ));
    }
    Ok(halfspace_step(pi, cost, delta, norm_sq))
}

fn halfspace_step(pi: &Block, cost: &LocalCost, delta: f64, norm_sq: f64) -> Block {
    let excess = pi.transport_cost() - delta;
    if excess <= 0.0 {
        return pi.clone();
    }
    let step = excess / norm_sq;
    let mut out = pi.clone();
    out.map_valid(|flat, v| v - step * cost.cost_of(flat));
    out
}

/// Residuals of one Dykstra iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub iteration: usize,
    /// `‖Π_h 1 − x‖₁`.
    pub simplex: f64,
    /// `[⟨Π_s, C⟩ − δ]₊`.
    pub halfspace: f64,
}

/// Iterates and increments of Dykstra's algorithm.
#[derive(Debug, Clone)]
pub struct DykstraState {
    pub pi_s: Block,
    pub pi_h: Block,
    pub inc_s: Block,
    pub inc_h: Block,
    pub iterations: usize,
    pub log: Vec<Residuals>,
}

impl DykstraState {
    /// `Π_h = G`, both increments zero.
    pub fn new(g: &Block) -> Self {
        let zero = Block::zeros(g.cost().clone());
        Self {
            pi_s: zero.clone(),
            pi_h: g.clone(),
            inc_s: zero.clone(),
            inc_h: zero,
            iterations: 0,
            log: Vec::new(),
        }
    }

    /// One pass: project onto `C_s`, then onto `C_h`, updating increments.
    pub fn step(&mut self, ball: &BallSpec, norm_sq: f64) -> Residuals {
        let cost = ball.cost();
        let x = ball.center();

        let shifted = self.pi_h.add_scaled(-1.0, &self.inc_s);
        let pi_s = project_rows_unchecked(&shifted, x);
        self.inc_s = pi_s.add_scaled(-1.0, &shifted);

        let shifted = pi_s.add_scaled(-1.0, &self.inc_h);
        let pi_h = halfspace_step(&shifted, cost, ball.radius(), norm_sq);
        self.inc_h = pi_h.add_scaled(-1.0, &shifted);

        self.pi_s = pi_s;
        self.pi_h = pi_h;
        self.iterations += 1;

        let simplex = self
            .pi_h
            .row_sums()
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .sum();
        let halfspace = (self.pi_s.transport_cost() - ball.radius()).max(0.0);
        let r = Residuals {
            iteration: self.iterations,
            simplex,
            halfspace,
        };
        self.log.push(r);
        r
    }
}

#[derive(Debug, Clone)]
pub struct DykstraOutcome {
    /// The last `C_s` iterate.
    pub coupling: Coupling,
    pub state: DykstraState,
}

/// Runs Dykstra's algorithm from `G` for at most `max_iter` passes.
///
/// With `tol > 0` it stops early once both residuals are at most `tol`;
/// with `tol ≤ 0` it always runs `max_iter` passes.
pub fn dykstra_project(
    g: &Block,
    ball: &BallSpec,
    max_iter: usize,
    tol: f64,
) -> Result<DykstraOutcome> {
    if max_iter == 0 {
        return Err(Error::InvalidParameter(
            "max_iter must be at least 1".into(),
        ));
    }
    if !g.is_finite() {
        return Err(Error::InvalidInput("projection input is not finite".into()));
    }
    let norm_sq = ball.cost().frobenius_sq();
    if !(norm_sq > 0.0) {
        return Err(Error::DegenerateCost(
            "cost matrix is identically zero".into(),
        ));
    }
    let mut state = DykstraState::new(g);
    for _ in 0..max_iter {
        let r = state.step(ball, norm_sq);
        if tol > 0.0 && r.simplex <= tol && r.halfspace <= tol {
            break;
        }
    }
    Ok(DykstraOutcome {
        coupling: Coupling::from_block(state.pi_s.clone())?,
        state,
    })
}

/// Projection onto `{Πᵀ1 ≤ caps}`: each over-full column gives back its
/// excess evenly across its stored entries.
pub fn project_column_caps(pi: &Block, caps: &[f64]) -> Block {
    let cost = pi.cost().clone();
    let mut out = pi.clone();
    let sums = pi.column_sums();
    let mut shift = vec![0.0; cost.n()];
    for j in 0..cost.n() {
        let excess = sums[j] - caps[j];
        if excess > 0.0 {
            shift[j] = excess / cost.column_slots(j).len() as f64;
        }
    }
    out.map_valid(|flat, v| v - shift[cost.target_of(flat).unwrap()]);
    out
}

/// Dykstra's algorithm cycling through `C_s`, `C_h` and `{Πᵀ1 ≤ caps}`.
///
/// Reference solver for the capacity-constrained projection. Returns the
/// last `C_s` iterate.
pub fn dykstra_project_capped(
    g: &Block,
    ball: &BallSpec,
    caps: &[f64],
    max_iter: usize,
) -> Result<Coupling> {
    let cost = ball.cost().clone();
    check_len(cost.n(), caps.len())?;
    if max_iter == 0 {
        return Err(Error::InvalidParameter(
            "max_iter must be at least 1".into(),
        ));
    }
    let norm_sq = cost.frobenius_sq();
    if !(norm_sq > 0.0) {
        return Err(Error::DegenerateCost(
            "cost matrix is identically zero".into(),
        ));
    }
    let x = ball.center();
    let zero = Block::zeros(cost.clone());
    let mut incs = [zero.clone(), zero.clone(), zero];
    let mut current = g.clone();
    let mut last_s = current.clone();
    for _ in 0..max_iter {
        for (set, inc) in incs.iter_mut().enumerate() {
            let shifted = current.add_scaled(-1.0, inc);
            let next = match set {
                0 => project_rows_unchecked(&shifted, x),
                1 => halfspace_step(&shifted, &cost, ball.radius(), norm_sq),
                _ => project_column_caps(&shifted, caps),
            };
            *inc = next.add_scaled(-1.0, &shifted);
            if set == 0 {
                last_s = next.clone();
            }
            current = next;
        }
    }
    Coupling::from_block(last_s)
}

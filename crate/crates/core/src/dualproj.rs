//! Exact Euclidean projection onto the coupling ball by dual bisection.
//!
//! The projection
//!
//! ```text
//! min ½‖Π − G‖²  s.t.  Π ≥ 0,  Π1 = x,  ⟨Π, C⟩ ≤ δ
//! ```
//!
//! has a one-dimensional concave dual in the multiplier `λ ≥ 0` of the budget
//! constraint. For fixed `λ` the inner minimizer is the row-wise simplex
//! projection of `G − λC`, and the dual derivative is `⟨Π̃, C⟩ − δ`, so the
//! optimal `λ` is found by bisection on the sign of that derivative.

use crate::ball::BallSpec;
use crate::bisection::{maximize_from, maximize_newton_from, DualBracket, DualSearch};
use crate::coupling::{Block, Coupling};
use crate::error::{check_len, Error, Result};
use crate::grid::LocalCost;
use crate::simplex::{project_shifted_rows, shifted_rows_into};

/// Default tolerance on both the bracket width and `|g′|`.
pub const DEFAULT_TOL: f64 = 1e-4;

/// `(2‖vec(G)‖∞ + ‖x‖∞) / min_{i≠j} C_ij`, an upper bound on the optimal
/// multiplier. The norms range over stored entries only.
pub fn dual_upper_bound(g: &Block, x: &[f64], cost: &LocalCost) -> Result<f64> {
    check_len(cost.n(), x.len())?;
    let min_c = cost.min_offdiag();
    if !(min_c > 0.0) {
        return Err(Error::DegenerateCost(
            "smallest off-diagonal cost must be positive".into(),
        ));
    }
    let x_inf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let numer = 2.0 * g.max_abs() + x_inf;
    if min_c.is_infinite() {
        // No off-diagonal entries: the budget can never bind.
        return Ok(0.0);
    }
    Ok(numer / min_c)
}

/// Dual value, derivative and inner minimizer at one multiplier.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub value: f64,
    pub derivative: f64,
    pub plan: Coupling,
}

/// Evaluates the projection dual `g(λ)` and `g′(λ)`.
pub fn eval_dual(lambda: f64, g: &Block, ball: &BallSpec) -> Result<DualEval> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "multiplier must be finite and nonnegative, got {lambda}"
        )));
    }
    validate_block(g, ball)?;
    let plan = Coupling::from_block(project_shifted_rows(g, lambda, ball.center()))?;
    let derivative = plan.transport_cost() - ball.radius();
    let value = plan.block().half_dist_sq(g) + lambda * derivative;
    Ok(DualEval {
        value,
        derivative,
        plan,
    })
}

fn validate_block(g: &Block, ball: &BallSpec) -> Result<()> {
    if !(std::sync::Arc::ptr_eq(g.cost(), ball.cost()) || g.cost() == ball.cost()) {
        return Err(Error::InvalidInput(
            "block and ball use different cost structures".into(),
        ));
    }
    if !g.is_finite() {
        return Err(Error::InvalidInput("projection input is not finite".into()));
    }
    Ok(())
}

/// Result of [`project_ball`].
#[derive(Debug, Clone)]
pub struct Projection {
    pub coupling: Coupling,
    pub bracket: DualBracket,
    /// Initial upper end of the bracket.
    pub upper_bound: f64,
}

impl Projection {
    pub fn lambda(&self) -> f64 {
        self.bracket.lambda
    }

    pub fn iterations(&self) -> usize {
        self.bracket.iterations
    }
}

/// Projects `g` onto the ball by bisection on the dual multiplier.
///
/// Stops once the bracket is narrower than `tol` or `|g′(λ)| ≤ tol`. The plan
/// is recovered at the bracket's upper end, so `⟨Π, C⟩ ≤ δ` unless the
/// derivative test fired with a positive derivative, in which case the
/// violation is at most `tol`.
pub fn project_ball(g: &Block, ball: &BallSpec, tol: f64) -> Result<Projection> {
    project_ball_from(g, ball, tol, None)
}

/// [`project_ball`] starting the search at `hint`, typically the multiplier
/// of the previous projection in an iterative method.
pub fn project_ball_from(
    g: &Block,
    ball: &BallSpec,
    tol: f64,
    hint: Option<f64>,
) -> Result<Projection> {
    project_ball_with(g, ball, tol, hint, DualSearch::Bisection)
}

/// [`project_ball_from`] with a choice of search. The derivative is
/// piecewise linear in `λ`, so Newton steps land exactly within a piece.
pub fn project_ball_with(
    g: &Block,
    ball: &BallSpec,
    tol: f64,
    hint: Option<f64>,
    search: DualSearch,
) -> Result<Projection> {
    validate_block(g, ball)?;
    let x = ball.center();
    let delta = ball.radius();
    let upper_bound = dual_upper_bound(g, x, ball.cost())?;
    // Every evaluation leaves its rows in `plan`; they are kept when the
    // search stops at the last point it evaluated.
    let mut plan = Block::zeros(g.cost().clone());
    let mut filled_at = f64::NAN;
    let mut evaluate = |lambda: f64| {
        filled_at = lambda;
        let (c, slope) = shifted_rows_into(g, lambda, x, &mut plan);
        (c - delta, slope)
    };
    let bracket = match search {
        DualSearch::Bisection => {
            maximize_from(hint, upper_bound, tol, |lambda| Ok(evaluate(lambda).0))?
        }
        DualSearch::Newton => {
            maximize_newton_from(hint, upper_bound, tol, |lambda| Ok(evaluate(lambda)))?
        }
    };
    if bracket.lambda != filled_at {
        plan = project_shifted_rows(g, bracket.lambda, x);
    }
    Ok(Projection {
        coupling: Coupling::from_block(plan)?,
        bracket,
        upper_bound,
    })
}

//! Linear minimization over the coupling ball.
//!
//! The linear program `min ⟨Π, H⟩ s.t. Π ≥ 0, Π1 = x, ⟨Π, C⟩ ≤ δ` has a
//! piecewise-linear dual
//!
//! ```text
//! g(λ) = −λδ + Σᵢ xᵢ minⱼ (Hᵢⱼ + λCᵢⱼ)
//! ```
//!
//! whose maximizer is easy to find but from which a primal plan cannot be
//! recovered reliably. Adding `γ Σ Π log Π` to the objective smooths every
//! row minimum into a softmin, makes the Lagrangian minimizer unique, and
//! gives the plan in closed form as a row-wise softmin of `H + λC` scaled by
//! `xᵢ`. The exact dual is kept as a reference for tests.

use crate::ball::BallSpec;
use crate::bisection::{maximize_from, maximize_newton_from, DualBracket, DualSearch};
use crate::coupling::{Block, Coupling};
use crate::error::{Error, Result};

/// Which dual the oracle solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmoMode {
    /// Piecewise-linear dual; yields a multiplier only.
    ExactDual,
    /// Entropy-smoothed dual with closed-form plan recovery.
    Entropic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmoConfig {
    pub gamma: f64,
    pub tol: f64,
    pub mode: LmoMode,
    pub search: DualSearch,
}

impl Default for LmoConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            tol: 1e-4,
            mode: LmoMode::Entropic,
            search: DualSearch::Bisection,
        }
    }
}

impl LmoConfig {
    pub fn entropic(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_search(mut self, search: DualSearch) -> Self {
        self.search = search;
        self
    }
}

fn check_objective(h: &Block, ball: &BallSpec) -> Result<()> {
    if !std::sync::Arc::ptr_eq(h.cost(), ball.cost()) && h.cost().as_ref() != ball.cost().as_ref() {
        return Err(Error::InvalidInput(
            "objective and ball use different cost structures".into(),
        ));
    }
    if !h.is_finite() {
        return Err(Error::InvalidInput("linear objective is not finite".into()));
    }
    Ok(())
}

/// Piecewise-linear dual `−λδ + Σᵢ xᵢ minⱼ (Hᵢⱼ + λCᵢⱼ)`.
pub fn exact_dual_value(lambda: f64, h: &Block, ball: &BallSpec) -> f64 {
    let cost = ball.cost();
    let x = ball.center();
    let mut total = -lambda * ball.radius();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let m = h
            .row(i)
            .iter()
            .zip(cost.row_costs(i))
            .map(|(hv, c)| hv + lambda * c)
            .fold(f64::INFINITY, f64::min);
        total += xi * m;
    }
    total
}

/// Right derivative of the exact dual: among tied row minima the one with
/// the smallest cost wins as `λ` grows.
fn exact_right_derivative(lambda: f64, h: &Block, ball: &BallSpec) -> f64 {
    let cost = ball.cost();
    let mut slope = -ball.radius();
    for (i, &xi) in ball.center().iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let mut best = f64::INFINITY;
        let mut best_c = 0.0;
        for (hv, &c) in h.row(i).iter().zip(cost.row_costs(i)) {
            let v = hv + lambda * c;
            let scale = v.abs().max(1.0) * 1e-12;
            if v < best - scale || ((v - best).abs() <= scale && c < best_c) {
                best = v;
                best_c = c;
            }
        }
        slope += xi * best_c;
    }
    slope
}

/// `2‖vec(H)‖∞ / min_{i≠j} Cᵢⱼ`.
pub fn exact_dual_bound(h: &Block, ball: &BallSpec) -> f64 {
    let min_c = ball.cost().min_offdiag();
    if min_c.is_infinite() {
        0.0
    } else {
        2.0 * h.max_abs() / min_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactDual {
    pub lambda: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Maximizes the piecewise-linear dual by bisection on its supergradient.
///
/// Only the multiplier and dual value are returned. A plan read off the
/// Lagrangian at `λ*` can be suboptimal or even infeasible when row minima
/// tie, so none is produced here.
pub fn exact_dual_solve(h: &Block, ball: &BallSpec, tol: f64) -> Result<ExactDual> {
    check_objective(h, ball)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut lower = 0.0;
    let mut upper = exact_dual_bound(h, ball);
    let mut iterations = 0;
    if exact_right_derivative(0.0, h, ball) <= 0.0 {
        upper = 0.0;
    }
    while upper - lower > tol {
        let mid = 0.5 * (lower + upper);
        iterations += 1;
        if exact_right_derivative(mid, h, ball) > 0.0 {
            lower = mid;
        } else {
            upper = mid;
        }
    }
    let lambda = 0.5 * (lower + upper);
    Ok(ExactDual {
        lambda,
        value: exact_dual_value(lambda, h, ball),
        iterations,
    })
}

/// `[2‖vec(H)‖∞ + γ log(xᵀC1 / δ)]₊ / min_{i≠j} Cᵢⱼ`, with `xᵀC1` taken
/// over stored neighbourhood costs.
pub fn entropic_dual_bound(h: &Block, ball: &BallSpec, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "entropic regularization must be positive, got {gamma}"
        )));
    }
    let delta = ball.radius();
    let spread = ball.cost().weighted_row_cost(ball.center());
    if !(delta > 0.0) || !(spread > 0.0) {
        return Err(Error::DegenerateInstance(format!(
            "entropic bound needs δ > 0 and xᵀC1 > 0 (δ = {delta}, xᵀC1 = {spread})"
        )));
    }
    let min_c = ball.cost().min_offdiag();
    let numer = (2.0 * h.max_abs() + gamma * (spread / delta).ln()).max(0.0);
    let bound = numer / min_c;
    if !bound.is_finite() {
        return Err(Error::DegenerateInstance(format!(
            "entropic dual bound is not finite: {bound}"
        )));
    }
    Ok(bound)
}

/// The row minimum contributes a weight of 1, so terms below `exp(−40)` are
/// lost to rounding in the row sum anyway.
const SOFTMIN_CUTOFF: f64 = 40.0;

/// Softmin weights of row `i` of `H + λC`, scaled to mass `xi`. Returns
/// `minⱼ aⱼ − γ log Σⱼ exp(−(aⱼ − min)/γ)`, the row softmin value.
fn softmin_row(
    h_row: &[f64],
    c_row: &[f64],
    lambda: f64,
    gamma: f64,
    xi: f64,
    out: &mut [f64],
) -> f64 {
    let mut m = f64::INFINITY;
    for ((o, hv), c) in out.iter_mut().zip(h_row).zip(c_row) {
        *o = hv + lambda * c;
        if *o < m {
            m = *o;
        }
    }
    let inv_gamma = 1.0 / gamma;
    let mut sum = 0.0;
    for o in out.iter_mut() {
        let e = (*o - m) * inv_gamma;
        *o = if e < SOFTMIN_CUTOFF { (-e).exp() } else { 0.0 };
        sum += *o;
    }
    let scale = xi / sum;
    for o in out.iter_mut() {
        *o *= scale;
    }
    m - gamma * sum.ln()
}

fn entropic_plan(h: &Block, ball: &BallSpec, lambda: f64, gamma: f64) -> (Block, f64) {
    let cost = ball.cost().clone();
    let mut out = Block::zeros(cost.clone());
    let mut softmin_total = 0.0;
    for (i, &xi) in ball.center().iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let s = softmin_row(
            h.row(i),
            cost.row_costs(i),
            lambda,
            gamma,
            xi,
            out.row_mut(i),
        );
        softmin_total += xi * s;
    }
    (out, softmin_total)
}

/// Entropic dual `−λδ + γ Σ xᵢ log xᵢ − γ Σ xᵢ log Σⱼ exp(−(Hᵢⱼ + λCᵢⱼ)/γ)`.
pub fn entropic_dual_value(lambda: f64, h: &Block, ball: &BallSpec, gamma: f64) -> f64 {
    let (_, softmin_total) = entropic_plan(h, ball, lambda, gamma);
    let entropy: f64 = ball
        .center()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum();
    -lambda * ball.radius() + gamma * entropy + softmin_total
}

/// Derivative of the entropic dual, `⟨Π(λ), C⟩ − δ`.
pub fn entropic_dual_derivative(lambda: f64, h: &Block, ball: &BallSpec, gamma: f64) -> f64 {
    let mut weights = Block::zeros(ball.cost().clone());
    let mut row_sums = vec![0.0; ball.center().len()];
    entropic_derivatives_with(lambda, h, ball, gamma, &mut weights, &mut row_sums).0
}

/// First and second derivatives of the entropic dual. The second is
/// `−Σᵢ xᵢ Varᵢ(C) / γ`, the variance taken under row `i`'s softmin weights.
/// The unnormalized weights are left in `weights` and their row sums in
/// `row_sums`; [`normalize_weights`] turns them into the plan at `λ`.
fn entropic_derivatives_with(
    lambda: f64,
    h: &Block,
    ball: &BallSpec,
    gamma: f64,
    weights: &mut Block,
    row_sums: &mut [f64],
) -> (f64, f64) {
    let cost = ball.cost();
    let inv_gamma = 1.0 / gamma;
    let mut first = 0.0;
    let mut second = 0.0;
    for (i, &xi) in ball.center().iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let c_row = cost.row_costs(i);
        let row = weights.row_mut(i);
        let mut m = f64::INFINITY;
        for ((o, hv), c) in row.iter_mut().zip(h.row(i)).zip(c_row) {
            *o = hv + lambda * c;
            if *o < m {
                m = *o;
            }
        }
        let mut sum = 0.0;
        let mut weighted = 0.0;
        let mut weighted_sq = 0.0;
        for (o, c) in row.iter_mut().zip(c_row) {
            let e = (*o - m) * inv_gamma;
            if e < SOFTMIN_CUTOFF {
                let w = (-e).exp();
                *o = w;
                sum += w;
                weighted += w * c;
                weighted_sq += w * c * c;
            } else {
                *o = 0.0;
            }
        }
        row_sums[i] = sum;
        let mean = weighted / sum;
        first += xi * mean;
        second -= xi * (weighted_sq / sum - mean * mean).max(0.0);
    }
    (first - ball.radius(), second * inv_gamma)
}

/// Scales each row of softmin weights to mass `xᵢ`, giving the same plan as
/// [`entropic_plan`].
fn normalize_weights(weights: &mut Block, ball: &BallSpec, row_sums: &[f64]) {
    for (i, &xi) in ball.center().iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let scale = xi / row_sums[i];
        for o in weights.row_mut(i) {
            *o *= scale;
        }
    }
}

/// Output of [`entropic_lmo`].
#[derive(Debug, Clone)]
pub struct LmoSolution {
    pub coupling: Coupling,
    pub bracket: DualBracket,
    pub upper_bound: f64,
}

impl LmoSolution {
    pub fn lambda(&self) -> f64 {
        self.bracket.lambda
    }

    pub fn iterations(&self) -> usize {
        self.bracket.iterations
    }
}

/// Entropy-smoothed linear minimization oracle.
///
/// Bisects the smooth dual over `[0, entropic_dual_bound]` with the same
/// stopping rule as the dual projection and returns the softmin plan at the
/// recovered multiplier.
pub fn entropic_lmo(h: &Block, ball: &BallSpec, config: &LmoConfig) -> Result<LmoSolution> {
    entropic_lmo_from(h, ball, config, None)
}

/// [`entropic_lmo`] starting the search at `hint`.
pub fn entropic_lmo_from(
    h: &Block,
    ball: &BallSpec,
    config: &LmoConfig,
    hint: Option<f64>,
) -> Result<LmoSolution> {
    check_objective(h, ball)?;
    if config.mode != LmoMode::Entropic {
        return Err(Error::InvalidParameter(
            "entropic_lmo needs an entropic configuration".into(),
        ));
    }
    let gamma = config.gamma;
    let upper_bound = entropic_dual_bound(h, ball, gamma)?;
    let mut weights = Block::zeros(ball.cost().clone());
    let mut row_sums = vec![0.0; ball.center().len()];
    let mut filled_at = f64::NAN;
    let mut derivatives = |lambda: f64| {
        filled_at = lambda;
        entropic_derivatives_with(lambda, h, ball, gamma, &mut weights, &mut row_sums)
    };
    let bracket = match config.search {
        DualSearch::Bisection => {
            maximize_from(hint, upper_bound, config.tol, |l| Ok(derivatives(l).0))?
        }
        DualSearch::Newton => {
            maximize_newton_from(hint, upper_bound, config.tol, |l| Ok(derivatives(l)))?
        }
    };
    let plan = if bracket.lambda == filled_at {
        normalize_weights(&mut weights, ball, &row_sums);
        weights
    } else {
        entropic_plan(h, ball, bracket.lambda, gamma).0
    };
    Ok(LmoSolution {
        coupling: Coupling::from_block(plan)?,
        bracket,
        upper_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_euclidean_cost, GridShape, LocalCost};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    /// Two pixels one unit apart, `x = (1, 0)`, `δ = 0.5`,
    /// `H = [[1, −1], [0, 0]]`.
    fn two_pixel() -> (BallSpec, Block) {
        let cost = Arc::new(build_euclidean_cost(GridShape::new(2, 1, 1).unwrap(), 3).unwrap());
        let ball = BallSpec::with_radius(cost.clone(), vec![1.0, 0.0], 0.5).unwrap();
        let h = Block::from_fn(cost, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (0, 1) => -1.0,
            _ => 0.0,
        });
        (ball, h)
    }

    fn random_instance(seed: u64) -> (BallSpec, Block) {
        let cost: Arc<LocalCost> =
            Arc::new(build_euclidean_cost(GridShape::square(3).unwrap(), 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..9).map(|_| rng.random_range(0.05..1.0)).collect();
        let h = Block::from_fn(cost.clone(), |_, _| rng.random_range(-1.0..1.0));
        (BallSpec::new(cost, x, 0.2).unwrap(), h)
    }

    #[test]
    fn two_pixel_exact_dual() {
        let (ball, h) = two_pixel();
        // g(λ) = −λ/2 + min(1, λ − 1)
        assert!((exact_dual_value(2.0, &h, &ball) - 0.0).abs() < 1e-15);
        assert!((exact_dual_value(1.0, &h, &ball) + 0.5).abs() < 1e-15);
        let sol = exact_dual_solve(&h, &ball, 1e-4).unwrap();
        assert!((sol.lambda - 2.0).abs() <= 1e-4);
    }

    #[test]
    fn exact_dual_at_zero() {
        let (ball, h) = random_instance(4);
        let expect: f64 = ball
            .center()
            .iter()
            .enumerate()
            .map(|(i, x)| x * h.row(i).iter().cloned().fold(f64::INFINITY, f64::min))
            .sum();
        assert!((exact_dual_value(0.0, &h, &ball) - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_objective() {
        let (ball, _) = random_instance(5);
        let h = Block::zeros(ball.cost().clone());
        assert!((exact_dual_value(0.7, &h, &ball) + 0.7 * ball.radius()).abs() < 1e-12);
        assert_eq!(exact_dual_solve(&h, &ball, 1e-6).unwrap().lambda, 0.0);
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        let (ball, h) = random_instance(8);
        let gamma = 0.05;
        let mut weights = Block::zeros(ball.cost().clone());
        let mut row_sums = vec![0.0; ball.center().len()];
        let step = 1e-6;
        for lambda in [0.0, 0.3, 1.0, 2.5] {
            let (_, d2) =
                entropic_derivatives_with(lambda, &h, &ball, gamma, &mut weights, &mut row_sums);
            let up = entropic_dual_derivative(lambda + step, &h, &ball, gamma);
            let down = entropic_dual_derivative((lambda - step).max(0.0), &h, &ball, gamma);
            let fd = (up - down) / (lambda + step - (lambda - step).max(0.0));
            assert!((fd - d2).abs() <= 1e-4 * d2.abs().max(1.0), "{fd} vs {d2}");
        }
    }

    #[test]
    fn newton_search_agrees() {
        for seed in 20..30 {
            let (ball, h) = random_instance(seed);
            let config = LmoConfig::entropic(1e-3).with_tol(1e-9);
            let bisected = entropic_lmo(&h, &ball, &config).unwrap();
            let newton = entropic_lmo(&h, &ball, &config.with_search(DualSearch::Newton)).unwrap();
            assert!(newton.coupling.transport_cost() <= ball.radius() + 1e-9);
            let gap = newton.coupling.block().dot(&h) - bisected.coupling.block().dot(&h);
            assert!(gap.abs() <= 1e-6, "seed {seed}: {gap}");
        }
    }

    #[test]
    fn plan_matches_softmin_at_lambda() {
        for seed in 30..36 {
            let (ball, h) = random_instance(seed);
            for search in [DualSearch::Bisection, DualSearch::Newton] {
                let config = LmoConfig::entropic(1e-2).with_search(search);
                let sol = entropic_lmo(&h, &ball, &config).unwrap();
                let (plan, _) = entropic_plan(&h, &ball, sol.lambda(), 1e-2);
                assert_eq!(sol.coupling.values(), plan.values());
            }
        }
    }

    #[test]
    fn entropic_zero_objective_is_uniform() {
        let cost = Arc::new(build_euclidean_cost(GridShape::square(3).unwrap(), 3).unwrap());
        let x: Vec<f64> = (0..9).map(|i| 0.1 + 0.05 * i as f64).collect();
        let mean_cost: f64 = (0..9)
            .map(|i| x[i] * cost.row_costs(i).iter().sum::<f64>() / cost.row_len(i) as f64)
            .sum();
        let ball = BallSpec::with_radius(cost.clone(), x.clone(), mean_cost * 1.01).unwrap();
        let h = Block::zeros(cost.clone());
        let sol = entropic_lmo(&h, &ball, &LmoConfig::default()).unwrap();
        assert_eq!(sol.lambda(), 0.0);
        for i in 0..9 {
            let share = x[i] / cost.row_len(i) as f64;
            for &v in sol.coupling.row(i) {
                assert!((v - share).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn entropic_rows_sum_to_mass() {
        for seed in 0..5 {
            let (ball, h) = random_instance(seed);
            let sol = entropic_lmo(&h, &ball, &LmoConfig::entropic(0.1)).unwrap();
            let x = ball.center();
            let l1: f64 = x.iter().sum();
            assert!(sol.coupling.row_residual(x) <= 1e-9 * l1);
            assert!(sol.coupling.transport_cost() <= ball.radius() + 1e-4);
            assert!(sol
                .coupling
                .values()
                .iter()
                .enumerate()
                .all(|(f, &v)| { ball.cost().target_of(f).is_none() || v > 0.0 }));
        }
    }

    #[test]
    fn two_pixel_entropic() {
        let (ball, h) = two_pixel();
        // The softmin plan is steep in λ at this γ (slope ~1/γ), so the
        // objective is only as accurate as the bracket is narrow.
        let config = LmoConfig::default().with_tol(1e-9);
        let sol = entropic_lmo(&h, &ball, &config).unwrap();
        assert!(sol.coupling.block().dot(&h) <= 5e-3);
        assert!(sol.coupling.transport_cost() <= 0.5 + 1e-9);
    }

    #[test]
    fn bound_limits_and_clamp() {
        let (ball, h) = random_instance(8);
        let exact = exact_dual_bound(&h, &ball);
        let tiny = entropic_dual_bound(&h, &ball, 1e-12).unwrap();
        assert!((tiny - exact).abs() < 1e-9);
        // Tiny objective and a budget larger than xᵀC1: negative log term.
        let small = h.scaled(1e-6);
        let wide = BallSpec::with_radius(
            ball.cost().clone(),
            ball.center().to_vec(),
            10.0 * ball.cost().weighted_row_cost(ball.center()),
        )
        .unwrap();
        assert_eq!(entropic_dual_bound(&small, &wide, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_without_offdiagonal() {
        let cost = Arc::new(build_euclidean_cost(GridShape::square(2).unwrap(), 1).unwrap());
        let ball = BallSpec::new(cost.clone(), vec![1.0; 4], 0.1).unwrap();
        let h = Block::zeros(cost);
        assert!(matches!(
            entropic_dual_bound(&h, &ball, 1e-3),
            Err(Error::DegenerateInstance(_))
        ));
    }

    #[test]
    fn softmin_shift_invariance() {
        let (ball, h) = random_instance(12);
        let shifted = Block::from_fn(ball.cost().clone(), {
            let cost = ball.cost().clone();
            let h = h.clone();
            move |i, j| {
                let s = cost.row_targets(i).iter().position(|&t| t == j).unwrap();
                h.row(i)[s] + 0.37 * i as f64 - 1.0
            }
        });
        let gamma = 1e-2;
        for &lambda in &[0.0, 0.3, 1.1] {
            let (a, _) = entropic_plan(&h, &ball, lambda, gamma);
            let (b, _) = entropic_plan(&shifted, &ball, lambda, gamma);
            for (u, v) in a.values().iter().zip(b.values()) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn entropic_derivative_consistent() {
        let (ball, h) = random_instance(21);
        let gamma = 1e-2;
        let step = 1e-6;
        let mut prev = f64::INFINITY;
        for s in 0..40 {
            let l = 0.05 + s as f64 * 0.1;
            let d = entropic_dual_derivative(l, &h, &ball, gamma);
            let fd = (entropic_dual_value(l + step, &h, &ball, gamma)
                - entropic_dual_value(l - step, &h, &ball, gamma))
                / (2.0 * step);
            assert!((fd - d).abs() <= 1e-5, "{fd} vs {d}");
            assert!(d <= prev + 1e-12);
            prev = d;
        }
    }
}

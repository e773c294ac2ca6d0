//! Wasserstein-constrained attacks on the coupling formulation
//! `max ℓ(Πᵀ1)  s.t.  Π ≥ 0, Π1 = x, ⟨Π, C⟩ ≤ δ`.
//!
//! Both methods start from the identity plan, which carries `x` to itself at
//! zero cost.

mod data;
mod model;

use std::sync::Arc;

pub use data::{
    generate_blobs, train_linear_model, train_toy_model, BlobSpec, Dataset, TrainConfig,
};
pub use model::{LinearSoftmaxModel, LossOracle, QuadraticLoss};

use crate::ball::BallSpec;
use crate::bisection::DualSearch;
use crate::capproj::{capacity_project, CapacityConfig};
use crate::coupling::{Block, Coupling};
use crate::dualproj::{project_ball_with, DEFAULT_TOL};
use crate::error::{check_len, Error, Result};
use crate::grid::LocalCost;
use crate::lmo::{entropic_lmo_from, LmoConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMethod {
    /// Projected gradient ascent with the dual projection.
    PgdDualProjection,
    /// Frank-Wolfe with the entropic dual LMO.
    FwDualLmo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub epsilon: f64,
    pub iterations: usize,
    /// PGD step size.
    pub step_size: f64,
    /// Entropic regularization for FW.
    pub gamma: f64,
    /// Neighbourhood size the cost was built with.
    pub k: usize,
    /// Apply the capacity projection (pixels ≤ 1) after the last iteration.
    pub post_process: bool,
    pub seed: u64,
    /// Bisection tolerance for the projection or the LMO.
    pub tol: f64,
    /// Divide the lifted gradient by its largest entry each step.
    pub normalize: bool,
    /// Start each bisection at the previous iteration's multiplier.
    pub warm_start: bool,
    /// Search for the multiplier of the projection or the LMO.
    pub search: DualSearch,
    /// Stop early once no plan entry moves by more than this in one
    /// iteration. Zero runs all iterations.
    pub stop_tol: f64,
    pub capacity: CapacityConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            method: AttackMethod::PgdDualProjection,
            epsilon: 0.1,
            iterations: 30,
            step_size: 0.1,
            gamma: 1e-3,
            k: 5,
            post_process: false,
            seed: 0,
            tol: DEFAULT_TOL,
            normalize: true,
            warm_start: false,
            search: DualSearch::Bisection,
            stop_tol: 0.0,
            capacity: CapacityConfig::default(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if self.method == AttackMethod::PgdDualProjection && !(self.step_size > 0.0) {
            return Err(Error::InvalidParameter(
                "PGD step size must be positive".into(),
            ));
        }
        if self.method == AttackMethod::FwDualLmo && !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "stop tolerance must be nonnegative".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one attack on one image.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub label: usize,
    pub clean_label: usize,
    pub adversarial_label: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `⟨Π, C⟩` of the final plan.
    pub transport_cost: f64,
    /// The budget `δ`.
    pub radius: f64,
    pub max_pixel: f64,
    /// Fraction of the total mass sitting above 1 in the adversarial image.
    pub mass_above_one: f64,
    /// Bisection steps per iteration.
    pub dual_iterations: Vec<usize>,
    /// Initial bisection bracket per iteration.
    pub dual_bounds: Vec<f64>,
    /// Loss and predicted label after each iteration.
    pub loss_trace: Vec<f64>,
    pub label_trace: Vec<usize>,
    /// `⟨Π, C⟩` of every iterate, starting with the identity plan.
    pub budget_trace: Vec<f64>,
    pub adversarial: Vec<f64>,
    pub coupling: Option<Coupling>,
}

/// `1 gᵀ` restricted to the neighbourhoods: entry `(i, j)` is `g[j]`.
pub fn lift_gradient(cost: &Arc<LocalCost>, grad: &[f64]) -> Result<Block> {
    check_len(cost.n(), grad.len())?;
    let mut out = Block::zeros(cost.clone());
    for i in 0..cost.n() {
        for (o, &j) in out.row_mut(i).iter_mut().zip(cost.row_targets(i)) {
            *o = grad[j];
        }
    }
    Ok(out)
}

/// Divides by the largest absolute entry; a zero block is returned as is.
pub fn normalize_gradient(block: &Block) -> Block {
    let m = block.max_abs();
    if m > 0.0 {
        block.scaled(1.0 / m)
    } else {
        block.clone()
    }
}

/// Fraction of the mass of `z` above 1.
pub fn mass_above_one(z: &[f64]) -> f64 {
    let total: f64 = z.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    z.iter().map(|v| (v - 1.0).max(0.0)).sum::<f64>() / total
}

fn checked_loss<M: LossOracle + ?Sized>(
    model: &M,
    z: &[f64],
    y: usize,
    iteration: usize,
) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = model.loss_and_grad(z, y)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!(
            "loss is {loss} at iteration {iteration}"
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "gradient entry {i} is {} at iteration {iteration}",
            grad[i]
        )));
    }
    Ok((loss, grad))
}

struct Run {
    dual_iterations: Vec<usize>,
    dual_bounds: Vec<f64>,
    loss_trace: Vec<f64>,
    label_trace: Vec<usize>,
    budget_trace: Vec<f64>,
}

/// Runs the configured attack method.
pub fn run_attack<M: LossOracle + ?Sized>(
    model: &M,
    cost: &Arc<LocalCost>,
    x: &[f64],
    y: usize,
    config: &AttackConfig,
) -> Result<AttackResult> {
    config.validate()?;
    check_len(cost.n(), x.len())?;
    if cost.k() != config.k {
        return Err(Error::InvalidParameter(format!(
            "cost built with k = {} but the attack asks for k = {}",
            cost.k(),
            config.k
        )));
    }
    let (initial_loss, _) = checked_loss(model, x, y, 0)?;
    let clean_label = model.classify(x);
    let mut pi = Coupling::identity(cost.clone(), x)?;
    let mut run = Run {
        dual_iterations: Vec::with_capacity(config.iterations),
        dual_bounds: Vec::with_capacity(config.iterations),
        loss_trace: Vec::with_capacity(config.iterations),
        label_trace: Vec::with_capacity(config.iterations),
        budget_trace: vec![pi.transport_cost()],
    };

    // A zero budget admits only the identity plan.
    let ball = if config.epsilon > 0.0 {
        Some(BallSpec::new(cost.clone(), x.to_vec(), config.epsilon)?)
    } else {
        None
    };
    let mut z = x.to_vec();
    let mut last_lambda = None;
    if let Some(ball) = &ball {
        for t in 1..=config.iterations {
            let (_, grad) = checked_loss(model, &z, y, t)?;
            let lifted = lift_gradient(cost, &grad)?;
            let largest = lifted.max_abs();
            let scale = if config.normalize && largest > 0.0 {
                1.0 / largest
            } else {
                1.0
            };
            let next = match config.method {
                AttackMethod::PgdDualProjection => {
                    let g = pi.block().add_scaled(config.step_size * scale, &lifted);
                    let p = project_ball_with(&g, ball, config.tol, last_lambda, config.search)?;
                    if config.warm_start {
                        last_lambda = Some(p.lambda());
                    }
                    run.dual_iterations.push(p.iterations());
                    run.dual_bounds.push(p.upper_bound);
                    p.coupling
                }
                AttackMethod::FwDualLmo => {
                    let h = lifted.scaled(-scale);
                    let lmo = LmoConfig::entropic(config.gamma)
                        .with_tol(config.tol)
                        .with_search(config.search);
                    let s = entropic_lmo_from(&h, ball, &lmo, last_lambda)?;
                    if config.warm_start {
                        last_lambda = Some(s.lambda());
                    }
                    run.dual_iterations.push(s.iterations());
                    run.dual_bounds.push(s.upper_bound);
                    let eta = 2.0 / (t as f64 + 1.0);
                    pi.combine(eta, &s.coupling)?
                }
            };
            let moved = next
                .values()
                .iter()
                .zip(pi.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            pi = next;
            z = pi.target_image();
            let (loss, _) = checked_loss(model, &z, y, t)?;
            run.loss_trace.push(loss);
            run.label_trace.push(model.classify(&z));
            run.budget_trace.push(pi.transport_cost());
            if moved <= config.stop_tol && config.stop_tol > 0.0 {
                break;
            }
        }
        if config.post_process {
            let caps = vec![1.0; cost.n()];
            pi = capacity_project(pi.block(), ball, &caps, &config.capacity)?.coupling;
            z = pi.target_image();
        }
    } else {
        for t in 1..=config.iterations {
            let (loss, _) = checked_loss(model, &z, y, t)?;
            run.loss_trace.push(loss);
            run.label_trace.push(clean_label);
            run.budget_trace.push(0.0);
        }
    }

    let (final_loss, _) = checked_loss(model, &z, y, config.iterations)?;
    Ok(AttackResult {
        label: y,
        clean_label,
        adversarial_label: model.classify(&z),
        initial_loss,
        final_loss,
        transport_cost: pi.transport_cost(),
        radius: ball.as_ref().map_or(0.0, |b| b.radius()),
        max_pixel: z.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mass_above_one: mass_above_one(&z),
        dual_iterations: run.dual_iterations,
        dual_bounds: run.dual_bounds,
        loss_trace: run.loss_trace,
        label_trace: run.label_trace,
        budget_trace: run.budget_trace,
        adversarial: z,
        coupling: Some(pi),
    })
}

/// PGD with the dual projection, whatever `config.method` says.
pub fn pgd_attack<M: LossOracle + ?Sized>(
    model: &M,
    cost: &Arc<LocalCost>,
    x: &[f64],
    y: usize,
    config: &AttackConfig,
) -> Result<AttackResult> {
    let config = AttackConfig {
        method: AttackMethod::PgdDualProjection,
        ..*config
    };
    run_attack(model, cost, x, y, &config)
}

/// Frank-Wolfe with the entropic LMO, whatever `config.method` says.
pub fn fw_attack<M: LossOracle + ?Sized>(
    model: &M,
    cost: &Arc<LocalCost>,
    x: &[f64],
    y: usize,
    config: &AttackConfig,
) -> Result<AttackResult> {
    let config = AttackConfig {
        method: AttackMethod::FwDualLmo,
        ..*config
    };
    run_attack(model, cost, x, y, &config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_euclidean_cost, GridShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cost(side: usize, k: usize) -> Arc<LocalCost> {
        Arc::new(build_euclidean_cost(GridShape::square(side).unwrap(), k).unwrap())
    }

    #[test]
    fn lift_examples() {
        let c = cost(3, 3);
        let lifted = lift_gradient(&c, &[2.5; 9]).unwrap();
        for i in 0..9 {
            assert!(lifted.row(i).iter().all(|&v| v == 2.5));
        }
        let mut e = vec![0.0; 9];
        e[4] = 1.0;
        let lifted = lift_gradient(&c, &e).unwrap();
        for i in 0..9 {
            for (&j, &v) in c.row_targets(i).iter().zip(lifted.row(i)) {
                assert_eq!(v, if j == 4 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let c = cost(3, 3);
        let b = Block::from_fn(c.clone(), |i, j| if i == 2 && j == 5 { -4.0 } else { 1.0 });
        let n = normalize_gradient(&b);
        assert_eq!(n.max_abs(), 1.0);
        assert_eq!(n.values()[c.flat(0, 0)], 0.25);
        let z = Block::zeros(c);
        assert_eq!(normalize_gradient(&z), z);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let c = cost(4, 3);
        let x: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let model = QuadraticLoss {
            target: vec![0.5; 16],
        };
        let cfg = AttackConfig {
            iterations: 0,
            k: 3,
            ..Default::default()
        };
        let r = pgd_attack(&model, &c, &x, 0, &cfg).unwrap();
        assert_eq!(r.adversarial, x);
        assert_eq!(r.transport_cost, 0.0);
    }

    #[test]
    fn fw_first_step_is_lmo() {
        let c = cost(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(0.1..1.0)).collect();
        let model = QuadraticLoss {
            target: (0..16).map(|_| rng.random_range(0.0..1.0)).collect(),
        };
        let cfg = AttackConfig {
            method: AttackMethod::FwDualLmo,
            iterations: 1,
            k: 3,
            ..Default::default()
        };
        let r = run_attack(&model, &c, &x, 0, &cfg).unwrap();
        let (_, grad) = model.loss_and_grad(&x, 0).unwrap();
        let h = normalize_gradient(&lift_gradient(&c, &grad).unwrap()).scaled(-1.0);
        let ball = BallSpec::new(c.clone(), x.clone(), cfg.epsilon).unwrap();
        let s = crate::lmo::entropic_lmo(&h, &ball, &LmoConfig::entropic(cfg.gamma)).unwrap();
        assert_eq!(r.coupling.unwrap().values(), s.coupling.values());
    }

    #[test]
    fn zero_epsilon_keeps_image() {
        let c = cost(4, 3);
        let x = vec![0.5; 16];
        let model = QuadraticLoss {
            target: vec![0.0; 16],
        };
        for method in [AttackMethod::PgdDualProjection, AttackMethod::FwDualLmo] {
            let cfg = AttackConfig {
                method,
                epsilon: 0.0,
                k: 3,
                ..Default::default()
            };
            let r = run_attack(&model, &c, &x, 0, &cfg).unwrap();
            assert_eq!(r.adversarial, x);
            assert_eq!(r.loss_trace.len(), cfg.iterations);
        }
    }

    #[test]
    fn mismatched_k_rejected() {
        let c = cost(4, 3);
        let model = QuadraticLoss {
            target: vec![0.0; 16],
        };
        let cfg = AttackConfig::default();
        assert!(run_attack(&model, &c, &[0.5; 16], 0, &cfg).is_err());
    }

    #[test]
    fn mass_above_one_fraction() {
        assert_eq!(mass_above_one(&[1.5, 0.5]), 0.25);
        assert_eq!(mass_above_one(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn softmax_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = LinearSoftmaxModel::new(3, 10, w, vec![0.1, -0.2, 0.3]).unwrap();
        let z: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
        let (_, g) = m.loss_and_grad(&z, 1).unwrap();
        for i in 0..10 {
            let h = 1e-6;
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let fd = (m.loss_and_grad(&zp, 1).unwrap().0 - m.loss_and_grad(&zm, 1).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-3));
        }
    }

    #[test]
    fn zero_model_loss_is_log_classes() {
        let m = LinearSoftmaxModel::zeros(2, 4).unwrap();
        let (loss, grad) = m.loss_and_grad(&[0.3; 4], 0).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert!(grad.iter().all(|&g| g == 0.0));
    }
}

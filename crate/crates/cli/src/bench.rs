//! Dual projection against Dykstra's algorithm on random instances.

use std::sync::Arc;
use std::time::Instant;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wassball::dualproj::project_ball;
use wassball::dykstra::{dykstra_project, Residuals};
use wassball::{build_euclidean_cost, BallSpec, Block, GridShape, LocalCost};

use crate::schema::{BenchReport, BenchRow, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub instances: usize,
    pub side: usize,
    pub k: usize,
    pub epsilon: f64,
    pub dykstra_iterations: usize,
    /// Bisection tolerance of the dual projection. The objective error
    /// scales with it, so comparisons need far less than the attack default.
    pub tol: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 50,
            side: 6,
            k: 5,
            epsilon: 0.05,
            dykstra_iterations: 100_000,
            tol: 1e-8,
        }
    }
}

/// Clean image `x ∈ U[0, 1]ⁿ` and a perturbed identity plan
/// `G = diag(x) + U[−½, ½]` on the stored entries.
pub fn random_instance(cost: &Arc<LocalCost>, rng: &mut ChaCha8Rng) -> (Vec<f64>, Block) {
    let x: Vec<f64> = (0..cost.n()).map(|_| rng.random_range(0.0..1.0)).collect();
    let g = Block::from_fn(cost.clone(), |i, j| {
        let base = if i == j { x[i] } else { 0.0 };
        base + rng.random_range(-0.5..0.5)
    });
    (x, g)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub iteration: usize,
    pub simplex: f64,
    pub halfspace: f64,
}

impl From<&Residuals> for ResidualRow {
    fn from(r: &Residuals) -> Self {
        Self {
            iteration: r.iteration,
            simplex: r.simplex,
            halfspace: r.halfspace,
        }
    }
}

/// Runs the benchmark. The second value is the Dykstra residual history of
/// the first instance.
pub fn run_dykstra_bench(config: &BenchConfig) -> Result<(BenchReport, Vec<ResidualRow>)> {
    let cost = Arc::new(build_euclidean_cost(
        GridShape::square(config.side)?,
        config.k,
    )?);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::with_capacity(config.instances);
    let mut history = Vec::new();
    for instance in 0..config.instances {
        let (x, g) = random_instance(&cost, &mut rng);
        let ball = BallSpec::new(cost.clone(), x.clone(), config.epsilon)?;

        let start = Instant::now();
        let p = project_ball(&g, &ball, config.tol)?;
        let dual_seconds = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let d = dykstra_project(&g, &ball, config.dykstra_iterations, 0.0)?;
        let dykstra_seconds = start.elapsed().as_secs_f64();

        let dual_objective = p.coupling.block().half_dist_sq(&g);
        let dykstra_objective = d.coupling.block().half_dist_sq(&g);
        let row = BenchRow {
            instance,
            mass: x.iter().sum(),
            dual_objective,
            dykstra_objective,
            relative_gap: (dual_objective - dykstra_objective).abs()
                / dykstra_objective.abs().max(f64::MIN_POSITIVE),
            dual_iterations: p.iterations(),
            dykstra_iterations: d.state.iterations,
            dual_row_residual: p.coupling.row_residual(&x),
            dual_budget_excess: (p.coupling.transport_cost() - ball.radius()).max(0.0),
            dual_seconds,
            dykstra_seconds,
        };
        log::info!(
            "instance {instance}: relative gap {:.2e}, {} bisection steps",
            row.relative_gap,
            row.dual_iterations
        );
        if instance == 0 {
            history = d.state.log.iter().map(ResidualRow::from).collect();
        }
        rows.push(row);
    }
    let max_gap = rows.iter().map(|r| r.relative_gap).fold(0.0, f64::max);
    Ok((
        BenchReport {
            schema: SCHEMA_VERSION,
            kind: "dykstra-bench".to_string(),
            side: config.side,
            k: config.k,
            epsilon: config.epsilon,
            dykstra_iterations: config.dykstra_iterations,
            rows,
            max_relative_gap: max_gap,
        },
        history,
    ))
}

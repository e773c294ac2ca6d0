//! Projection of a target image onto the ball around a source image, done
//! as an attack on the loss `−½‖z − b‖²`.

use std::sync::Arc;

use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wassball::attack::{run_attack, AttackConfig, AttackMethod, QuadraticLoss};
use wassball::bisection::DualSearch;
use wassball::oracle::wasserstein_exact;
use wassball::{build_euclidean_cost, GridShape, LocalCost};

use crate::schema::{ProjectReport, ProjectionRow, Table1Report, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectMethod {
    /// Projected gradient with the dual projection.
    Dual,
    /// Frank-Wolfe with the entropic LMO.
    Entropic,
}

impl ProjectMethod {
    pub fn name(self) -> &'static str {
        match self {
            ProjectMethod::Dual => "project-dual",
            ProjectMethod::Entropic => "project-entropic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectSettings {
    pub epsilon: f64,
    pub k: usize,
    pub dual_iterations: usize,
    /// Frank-Wolfe error falls roughly like `1/t`, so it gets more
    /// iterations than PGD.
    pub entropic_iterations: usize,
    /// Step on the raw gradient for the dual method.
    pub step_size: f64,
    pub gamma: f64,
    pub dual_tol: f64,
    pub entropic_tol: f64,
    /// Early exit once no plan entry moves by more than this.
    pub stop_tol: f64,
}

impl Default for ProjectSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            k: 5,
            dual_iterations: 30_000,
            entropic_iterations: 60_000,
            step_size: 0.05,
            gamma: 1e-3,
            dual_tol: 1e-9,
            entropic_tol: 1e-6,
            stop_tol: 1e-10,
        }
    }
}

impl ProjectSettings {
    pub fn attack_config(&self, method: ProjectMethod) -> AttackConfig {
        let (attack, tol, iterations) = match method {
            ProjectMethod::Dual => (
                AttackMethod::PgdDualProjection,
                self.dual_tol,
                self.dual_iterations,
            ),
            ProjectMethod::Entropic => (
                AttackMethod::FwDualLmo,
                self.entropic_tol,
                self.entropic_iterations,
            ),
        };
        AttackConfig {
            method: attack,
            epsilon: self.epsilon,
            iterations,
            step_size: self.step_size,
            gamma: self.gamma,
            k: self.k,
            tol,
            // The quadratic's gradient is already on the pixel scale; only
            // the LMO direction is normalized.
            normalize: method == ProjectMethod::Entropic,
            warm_start: true,
            search: DualSearch::Newton,
            stop_tol: self.stop_tol,
            ..AttackConfig::default()
        }
    }
}

/// Projects `target` onto the ball of radius `ε · 1ᵀsource` around
/// `source`. `w_target` is `W(source, target)`.
pub fn project_pair(
    source: &[f64],
    target: &[f64],
    w_target: f64,
    cost: &Arc<LocalCost>,
    method: ProjectMethod,
    settings: &ProjectSettings,
) -> Result<(ProjectionRow, Vec<f64>)> {
    ensure!(settings.k == cost.k(), "cost built with a different k");
    let loss = QuadraticLoss {
        target: target.to_vec(),
    };
    let config = settings.attack_config(method);
    let r = run_attack(&loss, cost, source, 0, &config)?;
    let w = wasserstein_exact(source, &r.adversarial, cost)?;
    let expected = w_target.min(r.radius);
    let dual = &r.dual_iterations;
    let row = ProjectionRow {
        method: method.name().to_string(),
        epsilon: settings.epsilon,
        expected,
        wasserstein: w,
        error: (w - expected).abs(),
        transport_cost: r.transport_cost,
        iterations_run: r.loss_trace.len(),
        mean_dual_iterations: dual.iter().sum::<usize>() as f64 / dual.len().max(1) as f64,
    };
    log::info!(
        "{} ε = {}: W = {:.6}, expected {:.6}, {} iterations",
        row.method,
        row.epsilon,
        row.wasserstein,
        row.expected,
        row.iterations_run
    );
    Ok((row, r.adversarial))
}

/// Two independent uniform images on a `side × side` grid, each scaled to
/// unit mass.
pub fn random_pair(seed: u64, side: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let v: Vec<f64> = (0..side * side)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let total: f64 = v.iter().sum();
        v.into_iter().map(|a| a / total).collect::<Vec<f64>>()
    };
    let a = draw();
    let b = draw();
    (a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Config {
    pub seed: u64,
    pub side: usize,
    pub epsilons: Vec<f64>,
    pub settings: ProjectSettings,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            seed: 0,
            side: 20,
            epsilons: vec![0.5, 1.0],
            settings: ProjectSettings::default(),
        }
    }
}

/// Projects a random unit-mass image onto the ball around another with both
/// methods and every `ε`, and compares the exact distance of the result with
/// `min(ε, W(a, b))`.
pub fn run_table1(config: &Table1Config) -> Result<Table1Report> {
    let shape = GridShape::square(config.side)?;
    let cost = Arc::new(build_euclidean_cost(shape, config.settings.k)?);
    let (a, b) = random_pair(config.seed, config.side);
    let w_ab = wasserstein_exact(&a, &b, &cost)?;
    log::info!("W(a, b) = {w_ab:.6}");
    let mut rows = Vec::new();
    let mut max_gap: f64 = 0.0;
    for &epsilon in &config.epsilons {
        let settings = ProjectSettings {
            epsilon,
            ..config.settings
        };
        let (dual, _) = project_pair(&a, &b, w_ab, &cost, ProjectMethod::Dual, &settings)?;
        let (entropic, _) = project_pair(&a, &b, w_ab, &cost, ProjectMethod::Entropic, &settings)?;
        max_gap = max_gap.max((dual.wasserstein - entropic.wasserstein).abs());
        rows.push(dual);
        rows.push(entropic);
    }
    Ok(Table1Report {
        schema: SCHEMA_VERSION,
        kind: "table1".to_string(),
        seed: config.seed,
        side: config.side,
        k: config.settings.k,
        wasserstein_ab: w_ab,
        rows,
        max_method_gap: max_gap,
    })
}

/// Projects `target` onto the ball around `source` with one method.
pub fn run_project(
    shape: GridShape,
    source: &[f64],
    target: &[f64],
    method: ProjectMethod,
    settings: &ProjectSettings,
) -> Result<ProjectReport> {
    let (ms, mt): (f64, f64) = (source.iter().sum(), target.iter().sum());
    ensure!(
        (ms - mt).abs() <= 1e-6 * ms.max(mt),
        "source and target must carry the same mass ({ms} vs {mt})"
    );
    let cost = Arc::new(build_euclidean_cost(shape, settings.k)?);
    let w = wasserstein_exact(source, target, &cost)?;
    let (row, projected) = project_pair(source, target, w, &cost, method, settings)?;
    Ok(ProjectReport {
        schema: SCHEMA_VERSION,
        kind: "project".to_string(),
        shape: shape.into(),
        k: settings.k,
        wasserstein_xb: w,
        row,
        projected,
    })
}

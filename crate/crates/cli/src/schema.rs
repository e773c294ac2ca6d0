//! JSON documents written and read by the CLI. Every document carries
//! `"schema": 1` and a `kind` tag; readers reject any other version.

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};
use wassball::GridShape;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeHeader {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ShapeHeader {
    pub fn to_shape(self) -> Result<GridShape> {
        Ok(GridShape::new(self.width, self.height, self.channels)?)
    }
}

impl From<GridShape> for ShapeHeader {
    fn from(s: GridShape) -> Self {
        Self {
            channels: s.channels(),
            height: s.height(),
            width: s.width(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSettings {
    pub method: String,
    pub epsilon: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub gamma: f64,
    pub k: usize,
    pub post_process: bool,
    pub seed: u64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub samples: usize,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
    pub mean_initial_loss: f64,
    pub mean_final_loss: f64,
    pub mean_dual_iterations: f64,
    pub max_dual_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub label: usize,
    pub clean_label: usize,
    pub adversarial_label: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub transport_cost: f64,
    pub radius: f64,
    pub max_pixel: f64,
    pub mass_above_one: f64,
    pub mean_dual_iterations: f64,
    pub max_dual_iterations: usize,
    pub original: Vec<f64>,
    pub adversarial: Vec<f64>,
    /// Flat `n × k²` plan in the local layout; absent when not stored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Vec<f64>>,
    /// Loss after each iteration; only written with `--trace`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_trace: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackFile {
    pub schema: u32,
    pub kind: String,
    pub settings: AttackSettings,
    pub shape: ShapeHeader,
    pub summary: AttackSummary,
    pub samples: Vec<SampleRecord>,
}

impl AttackFile {
    pub const KIND: &'static str = "attack";

    pub fn parse(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let version = probe.get("schema").and_then(|v| v.as_u64());
        ensure!(
            version == Some(SCHEMA_VERSION as u64),
            "unsupported schema version {version:?}, expected {SCHEMA_VERSION}"
        );
        let kind = probe.get("kind").and_then(|v| v.as_str());
        ensure!(
            kind == Some(Self::KIND),
            "expected an attack result file, found kind {kind:?}"
        );
        Ok(serde_json::from_value(probe)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub index: usize,
    /// Exact transport distance between original and adversarial image;
    /// absent when no plan inside the neighbourhoods reaches the target.
    pub wasserstein: Option<f64>,
    pub radius: f64,
    pub budget_ok: bool,
    pub max_pixel: f64,
    pub mass_above_one_percent: f64,
    pub hypercube_ok: bool,
    pub coupling_checked: bool,
    /// `‖Π1 − x‖₁`, when a plan was stored.
    pub row_residual: Option<f64>,
    /// `‖Πᵀ1 − z‖₁`, when a plan was stored.
    pub column_residual: Option<f64>,
    pub coupling_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub samples: usize,
    pub budget_violations: usize,
    pub hypercube_violations: usize,
    pub coupling_violations: usize,
    pub max_wasserstein_excess: f64,
    pub max_pixel: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: u32,
    pub kind: String,
    pub summary: VerifySummary,
    pub samples: Vec<VerifyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub method: String,
    pub epsilon: f64,
    /// `min(ε, W(x, b))`.
    pub expected: f64,
    pub wasserstein: f64,
    pub error: f64,
    pub transport_cost: f64,
    pub iterations_run: usize,
    pub mean_dual_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub schema: u32,
    pub kind: String,
    pub seed: u64,
    pub side: usize,
    pub k: usize,
    pub wasserstein_ab: f64,
    pub rows: Vec<ProjectionRow>,
    /// Largest gap between the two methods at the same `ε`.
    pub max_method_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectReport {
    pub schema: u32,
    pub kind: String,
    pub shape: ShapeHeader,
    pub k: usize,
    pub wasserstein_xb: f64,
    pub row: ProjectionRow,
    pub projected: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: usize,
    /// `‖x‖₁` of the instance.
    pub mass: f64,
    pub dual_objective: f64,
    pub dykstra_objective: f64,
    pub relative_gap: f64,
    pub dual_iterations: usize,
    pub dykstra_iterations: usize,
    pub dual_row_residual: f64,
    pub dual_budget_excess: f64,
    pub dual_seconds: f64,
    pub dykstra_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub kind: String,
    pub side: usize,
    pub k: usize,
    pub epsilon: f64,
    pub dykstra_iterations: usize,
    pub rows: Vec<BenchRow>,
    pub max_relative_gap: f64,
}

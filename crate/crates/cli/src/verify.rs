use std::sync::Arc;

use anyhow::{ensure, Result};
use rayon::prelude::*;
use wassball::attack::mass_above_one;
use wassball::oracle::wasserstein_exact;
use wassball::{build_euclidean_cost, Block, Coupling, LocalCost};

use crate::schema::{
    AttackFile, SampleRecord, VerifyRecord, VerifyReport, VerifySummary, SCHEMA_VERSION,
};

/// Slack on `W(x, z) ≤ δ`, matching the bisection tolerance.
pub const BUDGET_TOL: f64 = 1e-4;
/// Slack on pixel values above 1.
pub const HYPERCUBE_TOL: f64 = 1e-3;
/// Relative slack on the marginals of a stored plan.
pub const MARGINAL_TOL: f64 = 1e-6;

fn check_sample(
    s: &SampleRecord,
    cost: &Arc<LocalCost>,
    warnings: &mut Vec<String>,
) -> VerifyRecord {
    let n = cost.n();
    let wasserstein = if s.original.len() != n || s.adversarial.len() != n {
        warnings.push(format!(
            "sample {}: image length does not match the shape",
            s.index
        ));
        None
    } else {
        match wasserstein_exact(&s.original, &s.adversarial, cost) {
            Ok(w) => Some(w),
            Err(e) => {
                warnings.push(format!(
                    "sample {}: transport distance unavailable: {e}",
                    s.index
                ));
                None
            }
        }
    };
    let budget_ok = wasserstein.is_some_and(|w| w <= s.radius + BUDGET_TOL);
    let max_pixel = s
        .adversarial
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);

    let mut record = VerifyRecord {
        index: s.index,
        wasserstein,
        radius: s.radius,
        budget_ok,
        max_pixel,
        mass_above_one_percent: 100.0 * mass_above_one(&s.adversarial),
        hypercube_ok: max_pixel <= 1.0 + HYPERCUBE_TOL,
        coupling_checked: false,
        row_residual: None,
        column_residual: None,
        coupling_cost: None,
    };
    match &s.coupling {
        None => warnings.push(format!(
            "sample {}: no stored plan, only the transport distance was checked",
            s.index
        )),
        Some(values) => match Block::from_values(cost.clone(), values.clone())
            .and_then(Coupling::from_block)
        {
            Err(e) => warnings.push(format!("sample {}: stored plan is unusable: {e}", s.index)),
            Ok(plan) if s.original.len() == n && s.adversarial.len() == n => {
                let column: f64 = plan
                    .target_image()
                    .iter()
                    .zip(&s.adversarial)
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                record.coupling_checked = true;
                record.row_residual = Some(plan.row_residual(&s.original));
                record.column_residual = Some(column);
                record.coupling_cost = Some(plan.transport_cost());
            }
            Ok(_) => {}
        },
    }
    record
}

fn coupling_ok(r: &VerifyRecord, mass: f64) -> bool {
    let slack = MARGINAL_TOL * mass.max(1.0);
    r.row_residual.is_none_or(|v| v <= slack)
        && r.column_residual.is_none_or(|v| v <= slack)
        && r.coupling_cost.is_none_or(|c| c <= r.radius + BUDGET_TOL)
}

/// Recomputes distances, pixel bounds and plan marginals of every sample.
pub fn verify(file: &AttackFile) -> Result<VerifyReport> {
    ensure!(
        file.schema == SCHEMA_VERSION,
        "unsupported schema version {}",
        file.schema
    );
    let shape = file.shape.to_shape()?;
    let cost = Arc::new(build_euclidean_cost(shape, file.settings.k)?);
    let checked: Vec<(VerifyRecord, Vec<String>, f64)> = file
        .samples
        .par_iter()
        .map(|s| {
            let mut warnings = Vec::new();
            let r = check_sample(s, &cost, &mut warnings);
            (r, warnings, s.original.iter().sum())
        })
        .collect();

    let mut summary = VerifySummary {
        samples: checked.len(),
        budget_violations: 0,
        hypercube_violations: 0,
        coupling_violations: 0,
        max_wasserstein_excess: f64::NEG_INFINITY,
        max_pixel: f64::NEG_INFINITY,
        warnings: Vec::new(),
    };
    let mut samples = Vec::with_capacity(checked.len());
    for (r, warnings, mass) in checked {
        summary.budget_violations += usize::from(!r.budget_ok);
        summary.hypercube_violations += usize::from(!r.hypercube_ok);
        summary.coupling_violations += usize::from(!coupling_ok(&r, mass));
        if let Some(w) = r.wasserstein {
            summary.max_wasserstein_excess = summary.max_wasserstein_excess.max(w - r.radius);
        }
        summary.max_pixel = summary.max_pixel.max(r.max_pixel);
        summary.warnings.extend(warnings);
        samples.push(r);
    }
    // JSON has no infinities; an empty or unmeasurable batch reports zeros.
    for v in [&mut summary.max_wasserstein_excess, &mut summary.max_pixel] {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    Ok(VerifyReport {
        schema: SCHEMA_VERSION,
        kind: "verify".to_string(),
        summary,
        samples,
    })
}

impl VerifyReport {
    /// Violations that make `verify` fail. Pixels above 1 only count when
    /// the run claimed to post-process its images into the unit cube.
    pub fn violations(&self, post_processed: bool) -> usize {
        let cube = if post_processed {
            self.summary.hypercube_violations
        } else {
            0
        };
        self.summary.budget_violations + self.summary.coupling_violations + cube
    }
}

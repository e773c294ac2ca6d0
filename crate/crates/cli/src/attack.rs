use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use wassball::attack::{
    generate_blobs, run_attack, train_toy_model, AttackConfig, AttackMethod, AttackResult,
    BlobSpec, LinearSoftmaxModel, LossOracle,
};
use wassball::{build_euclidean_cost, GridShape, LocalCost};

use crate::schema::{AttackFile, AttackSettings, AttackSummary, SampleRecord, SCHEMA_VERSION};
use crate::wadv;

pub fn method_name(method: AttackMethod) -> &'static str {
    match method {
        AttackMethod::PgdDualProjection => "pgd-dual-projection",
        AttackMethod::FwDualLmo => "fw-dual-lmo",
    }
}

pub fn parse_method(name: &str) -> Result<AttackMethod> {
    match name {
        "pgd-dual-projection" => Ok(AttackMethod::PgdDualProjection),
        "fw-dual-lmo" => Ok(AttackMethod::FwDualLmo),
        other => bail!("unknown attack method {other:?}"),
    }
}

/// Clean images to attack, with the labels the loss is taken against.
#[derive(Debug, Clone)]
pub struct Batch {
    pub shape: GridShape,
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// The seeded toy classifier: trained on blobs drawn with `seed`.
pub fn toy_model(seed: u64) -> Result<LinearSoftmaxModel> {
    let (model, _) = train_toy_model(&BlobSpec::default(), seed)?;
    Ok(model)
}

/// Held-out blob images for the toy model, drawn with `seed + 1`.
pub fn toy_batch(seed: u64, samples: usize) -> Result<Batch> {
    let spec = BlobSpec {
        samples,
        ..BlobSpec::default()
    };
    let data = generate_blobs(&spec, seed.wrapping_add(1))?;
    Ok(Batch {
        shape: data.shape,
        images: data.images,
        labels: data.labels,
    })
}

/// Reads a `[count, channels, height, width]` WADV array. Images are
/// labelled with the model's clean prediction.
pub fn load_batch<M: LossOracle + ?Sized>(path: &Path, model: &M) -> Result<Batch> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let array = wadv::read(std::io::BufReader::new(file))?;
    ensure!(
        array.dims.len() == 4,
        "expected dimensions [count, channels, height, width], got {:?}",
        array.dims
    );
    let [count, channels, height, width] = [0, 1, 2, 3].map(|i| array.dims[i] as usize);
    let shape = GridShape::new(width, height, channels)?;
    let n = shape.len();
    ensure!(count > 0, "input contains no images");
    if let Some(v) = array.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        bail!("image masses must be finite and nonnegative, found {v}");
    }
    let images: Vec<Vec<f64>> = array.data.chunks(n).map(<[f64]>::to_vec).collect();
    let labels = images.iter().map(|z| model.classify(z)).collect();
    Ok(Batch {
        shape,
        images,
        labels,
    })
}

pub fn settings_of(config: &AttackConfig) -> AttackSettings {
    AttackSettings {
        method: method_name(config.method).to_string(),
        epsilon: config.epsilon,
        iterations: config.iterations,
        step_size: config.step_size,
        gamma: config.gamma,
        k: config.k,
        post_process: config.post_process,
        seed: config.seed,
        tol: config.tol,
    }
}

fn record(index: usize, x: &[f64], r: AttackResult, keep_trace: bool) -> SampleRecord {
    let iters = &r.dual_iterations;
    SampleRecord {
        index,
        label: r.label,
        clean_label: r.clean_label,
        adversarial_label: r.adversarial_label,
        initial_loss: r.initial_loss,
        final_loss: r.final_loss,
        transport_cost: r.transport_cost,
        radius: r.radius,
        max_pixel: r.max_pixel,
        mass_above_one: r.mass_above_one,
        mean_dual_iterations: mean(iters.iter().map(|&v| v as f64)),
        max_dual_iterations: iters.iter().copied().max().unwrap_or(0),
        original: x.to_vec(),
        adversarial: r.adversarial,
        coupling: r.coupling.map(|c| c.values().to_vec()),
        loss_trace: if keep_trace { r.loss_trace } else { Vec::new() },
        label_trace: if keep_trace {
            r.label_trace
        } else {
            Vec::new()
        },
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Attacks every image of `batch` on the current rayon pool. Results are
/// in input order.
pub fn attack_batch<M: LossOracle + ?Sized>(
    model: &M,
    batch: &Batch,
    config: &AttackConfig,
    keep_trace: bool,
) -> Result<AttackFile> {
    config.validate()?;
    ensure!(
        batch.images.len() == batch.labels.len(),
        "{} images but {} labels",
        batch.images.len(),
        batch.labels.len()
    );
    let cost: Arc<LocalCost> = Arc::new(build_euclidean_cost(batch.shape, config.k)?);
    let samples = batch
        .images
        .par_iter()
        .zip(batch.labels.par_iter())
        .enumerate()
        .map(|(index, (x, &y))| {
            log::debug!("attacking sample {index}");
            let r = run_attack(model, &cost, x, y, config)
                .with_context(|| format!("attack on sample {index} failed"))?;
            Ok(record(index, x, r, keep_trace))
        })
        .collect::<Result<Vec<_>>>()?;
    let total = samples.len().max(1) as f64;
    let hits = |f: fn(&SampleRecord) -> usize| {
        samples.iter().filter(|s| f(s) == s.label).count() as f64 / total
    };
    let summary = AttackSummary {
        samples: samples.len(),
        clean_accuracy: hits(|s| s.clean_label),
        adversarial_accuracy: hits(|s| s.adversarial_label),
        mean_initial_loss: mean(samples.iter().map(|s| s.initial_loss)),
        mean_final_loss: mean(samples.iter().map(|s| s.final_loss)),
        mean_dual_iterations: mean(samples.iter().map(|s| s.mean_dual_iterations)),
        max_dual_iterations: samples
            .iter()
            .map(|s| s.max_dual_iterations)
            .max()
            .unwrap_or(0),
    };
    log::info!(
        "clean accuracy {:.3}, adversarial accuracy {:.3}",
        summary.clean_accuracy,
        summary.adversarial_accuracy
    );
    Ok(AttackFile {
        schema: SCHEMA_VERSION,
        kind: AttackFile::KIND.to_string(),
        settings: settings_of(config),
        shape: batch.shape.into(),
        summary,
        samples,
    })
}

/// One line of the convergence curve: mean loss and accuracy over all
/// samples after `iteration` steps (0 is the clean image).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Convergence curve of an attack file written with traces. Samples that
/// stopped early hold their last value.
pub fn trace_rows(file: &AttackFile) -> Vec<TraceRow> {
    let len = file
        .samples
        .iter()
        .map(|s| s.loss_trace.len())
        .max()
        .unwrap_or(0);
    let total = file.samples.len().max(1) as f64;
    (0..=len)
        .map(|t| {
            let mut loss = 0.0;
            let mut correct = 0usize;
            for s in &file.samples {
                let (l, y) = if t == 0 || s.loss_trace.is_empty() {
                    (s.initial_loss, s.clean_label)
                } else {
                    let i = (t - 1).min(s.loss_trace.len() - 1);
                    (s.loss_trace[i], s.label_trace[i])
                };
                loss += l;
                correct += usize::from(y == s.label);
            }
            TraceRow {
                iteration: t,
                mean_loss: loss / total,
                accuracy: correct as f64 / total,
            }
        })
        .collect()
}

/// Flat per-sample line for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRow {
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
}

pub fn sample_rows(file: &AttackFile) -> Vec<SampleRow> {
    file.samples
        .iter()
        .map(|s| SampleRow {
            index: s.index,
            label: s.label,
            clean_label: s.clean_label,
            adversarial_label: s.adversarial_label,
            initial_loss: s.initial_loss,
            final_loss: s.final_loss,
            transport_cost: s.transport_cost,
            radius: s.radius,
            max_pixel: s.max_pixel,
            mass_above_one: s.mass_above_one,
            mean_dual_iterations: s.mean_dual_iterations,
            max_dual_iterations: s.max_dual_iterations,
        })
        .collect()
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::model::{LinearSoftmaxModel, LossOracle};
use crate::error::{Error, Result};
use crate::grid::GridShape;

/// Synthetic two-class images: one Gaussian blob per image whose horizontal
/// position depends on the class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub side: usize,
    pub samples: usize,
    /// Blob centre column for class 0; class 1 sits `separation` further right.
    pub base_column: f64,
    pub separation: f64,
    /// Half-width of the uniform jitter on the centre column.
    pub column_jitter: f64,
    pub row_jitter: f64,
    pub min_width: f64,
    pub max_width: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            side: 8,
            samples: 1000,
            base_column: 3.0,
            separation: 0.6,
            column_jitter: 0.2,
            row_jitter: 0.8,
            min_width: 1.0,
            max_width: 1.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: GridShape,
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn accuracy<M: LossOracle + ?Sized>(&self, model: &M) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let hits = self
            .images
            .iter()
            .zip(&self.labels)
            .filter(|(z, &y)| model.classify(z) == y)
            .count();
        hits as f64 / self.len() as f64
    }
}

/// Draws a blob dataset. Labels alternate so both classes are balanced;
/// every image is scaled so its brightest pixel is 1.
pub fn generate_blobs(spec: &BlobSpec, seed: u64) -> Result<Dataset> {
    if spec.side == 0 || spec.samples == 0 {
        return Err(Error::InvalidParameter("empty blob dataset".into()));
    }
    if !(spec.min_width > 0.0 && spec.max_width >= spec.min_width) {
        return Err(Error::InvalidParameter("invalid blob widths".into()));
    }
    let shape = GridShape::square(spec.side)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let mid = (spec.side as f64 - 1.0) / 2.0;
    let mut images = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for s in 0..spec.samples {
        let label = s % 2;
        let col = spec.base_column
            + label as f64 * spec.separation
            + spec.column_jitter * unit.sample(&mut rng);
        let row = mid + spec.row_jitter * unit.sample(&mut rng);
        let width = rng.random_range(spec.min_width..=spec.max_width);
        let mut img: Vec<f64> = (0..shape.len())
            .map(|i| {
                let (_, r, c) = shape.position(i);
                let d2 = (r as f64 - row).powi(2) + (c as f64 - col).powi(2);
                (-d2 / (2.0 * width * width)).exp()
            })
            .collect();
        let peak = img.iter().cloned().fold(0.0, f64::max);
        for v in img.iter_mut() {
            *v /= peak;
        }
        images.push(img);
        labels.push(label);
    }
    Ok(Dataset {
        shape,
        images,
        labels,
    })
}

/// Full-batch gradient descent settings for [`train_linear_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub min_accuracy: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            learning_rate: 0.5,
            weight_decay: 1e-4,
            min_accuracy: 0.95,
        }
    }
}

/// Trains a linear softmax model from zero weights. Errors if the training
/// accuracy stays below `config.min_accuracy`.
pub fn train_linear_model(
    data: &Dataset,
    classes: usize,
    config: &TrainConfig,
) -> Result<LinearSoftmaxModel> {
    let inputs = data.shape.len();
    let mut model = LinearSoftmaxModel::zeros(classes, inputs)?;
    let scale = 1.0 / data.len() as f64;
    for _ in 0..config.epochs {
        let mut gw = vec![0.0; classes * inputs];
        let mut gb = vec![0.0; classes];
        for (z, &y) in data.images.iter().zip(&data.labels) {
            let p = model.probabilities(z);
            for c in 0..classes {
                let coef = p[c] - if c == y { 1.0 } else { 0.0 };
                gb[c] += coef;
                for (g, v) in gw[c * inputs..(c + 1) * inputs].iter_mut().zip(z) {
                    *g += coef * v;
                }
            }
        }
        let (w, b) = model.weights_mut();
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= config.learning_rate * (g * scale + config.weight_decay * *wi);
        }
        for (bi, g) in b.iter_mut().zip(&gb) {
            *bi -= config.learning_rate * g * scale;
        }
    }
    let acc = data.accuracy(&model);
    if acc < config.min_accuracy {
        return Err(Error::Training(format!(
            "training accuracy {acc:.3} below {:.3} after {} epochs",
            config.min_accuracy, config.epochs
        )));
    }
    Ok(model)
}

/// The toy classifier used by the examples and the CLI: a linear model on
/// the default blob dataset drawn with `seed`.
pub fn train_toy_model(spec: &BlobSpec, seed: u64) -> Result<(LinearSoftmaxModel, Dataset)> {
    let data = generate_blobs(spec, seed)?;
    let model = train_linear_model(&data, 2, &TrainConfig::default())?;
    Ok((model, data))
}

use crate::error::{check_finite, check_len, Error, Result};

/// A differentiable loss the attacks maximize.
///
/// Implementations must be deterministic and safe to call from several
/// threads at once.
pub trait LossOracle: Sync {
    /// Predicted label of image `z`.
    fn classify(&self, z: &[f64]) -> usize;

    /// Loss at `z` for true label `y` and its gradient in `z`.
    fn loss_and_grad(&self, z: &[f64], y: usize) -> Result<(f64, Vec<f64>)>;
}

/// Multiclass linear model `softmax(Wz + b)` with cross-entropy loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel {
    classes: usize,
    inputs: usize,
    /// Row-major `classes × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearSoftmaxModel {
    pub fn new(classes: usize, inputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidParameter("need at least two classes".into()));
        }
        check_len(classes * inputs, weights.len())?;
        check_len(classes, bias.len())?;
        check_finite(&weights, "weights")?;
        check_finite(&bias, "bias")?;
        Ok(Self {
            classes,
            inputs,
            weights,
            bias,
        })
    }

    pub fn zeros(classes: usize, inputs: usize) -> Result<Self> {
        Self::new(
            classes,
            inputs,
            vec![0.0; classes * inputs],
            vec![0.0; classes],
        )
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn weights_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.inputs)
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(z).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }

    /// Softmax probabilities, computed with the max-logit shift.
    pub fn probabilities(&self, z: &[f64]) -> Vec<f64> {
        let logits = self.logits(z);
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = exps.iter().sum();
        exps.iter().map(|e| e / s).collect()
    }
}

impl LossOracle for LinearSoftmaxModel {
    fn classify(&self, z: &[f64]) -> usize {
        let logits = self.logits(z);
        let mut best = 0;
        for (c, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = c;
            }
        }
        best
    }

    fn loss_and_grad(&self, z: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        check_len(self.inputs, z.len())?;
        if y >= self.classes {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {} classes",
                self.classes
            )));
        }
        let logits = self.logits(z);
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        let loss = lse - logits[y];
        let mut grad = vec![0.0; self.inputs];
        for (c, w) in self.weights.chunks(self.inputs).enumerate() {
            let coef = (logits[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
            for (g, a) in grad.iter_mut().zip(w) {
                *g += coef * a;
            }
        }
        Ok((loss, grad))
    }
}

/// `−½‖z − b‖²`: maximizing it over the ball projects `b` onto the ball in
/// image space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    pub target: Vec<f64>,
}

impl LossOracle for QuadraticLoss {
    fn classify(&self, _z: &[f64]) -> usize {
        0
    }

    fn loss_and_grad(&self, z: &[f64], _y: usize) -> Result<(f64, Vec<f64>)> {
        check_len(self.target.len(), z.len())?;
        let grad: Vec<f64> = self.target.iter().zip(z).map(|(b, v)| b - v).collect();
        let loss = -0.5 * grad.iter().map(|g| g * g).sum::<f64>();
        Ok((loss, grad))
    }
}

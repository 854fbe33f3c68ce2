//! Linear softmax classifier with cross-entropy loss on a Gaussian-mixture
//! data generator. Labels are zero-based.

use rand::distr::{Distribution, weighted::WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;

use super::LocalObjective;
use crate::error::{Error, Result};
use crate::vector;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = s.iter().sum();
    s.iter_mut().for_each(|v| *v /= total);
    s
}

/// `log sum exp(z)`, stable.
fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Weights `W` (`classes x dim`, row-major) and biases `b` of a linear
/// classifier. Flattened as `[W..., b...]` when handed to the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxParams {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl SoftmaxParams {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn new(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != classes * dim {
            return Err(Error::DimensionMismatch {
                expected: classes * dim,
                got: weights.len(),
            });
        }
        if bias.len() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                got: bias.len(),
            });
        }
        if !vector::all_finite(&weights) || !vector::all_finite(&bias) {
            return Err(Error::validation("params", "entries must be finite"));
        }
        Ok(Self {
            classes,
            dim,
            weights,
            bias,
        })
    }

    pub fn from_flat(classes: usize, dim: usize, flat: &[f64]) -> Result<Self> {
        let split = classes * dim;
        if flat.len() != split + classes {
            return Err(Error::DimensionMismatch {
                expected: split + classes,
                got: flat.len(),
            });
        }
        Self::new(classes, dim, flat[..split].to_vec(), flat[split..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn flat_len(classes: usize, dim: usize) -> usize {
        classes * (dim + 1)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        logits_flat(self.classes, self.dim, &self.to_flat(), x)
    }
}

fn logits_flat(classes: usize, dim: usize, flat: &[f64], x: &[f64]) -> Vec<f64> {
    let bias = &flat[classes * dim..];
    (0..classes)
        .map(|r| vector::dot(&flat[r * dim..(r + 1) * dim], x) + bias[r])
        .collect()
}

/// `-log s_y(x)` with logits `W x + b`.
pub fn cross_entropy_loss(params: &SoftmaxParams, x: &[f64], y: usize) -> f64 {
    let z = params.logits(x);
    log_sum_exp(&z) - z[y]
}

/// Gaussian-mixture generator: class `r` draws `x ~ N(mean_r, sigma_x^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTask {
    class_means: Vec<Vec<f64>>,
    sigma_x: f64,
    n_samples: usize,
}

impl SoftmaxTask {
    pub fn new(class_means: Vec<Vec<f64>>, sigma_x: f64, n_samples: usize) -> Result<Self> {
        if class_means.len() < 2 {
            return Err(Error::validation("task.classes", "need at least 2 classes"));
        }
        let d = class_means[0].len();
        if d == 0 || class_means.iter().any(|m| m.len() != d) {
            return Err(Error::validation("task.d", "class means must share a nonzero dimension"));
        }
        for i in 0..class_means.len() {
            for j in i + 1..class_means.len() {
                if class_means[i] == class_means[j] {
                    return Err(Error::validation(
                        "task.class_means",
                        format!("classes {i} and {j} share a mean"),
                    ));
                }
            }
        }
        if !(sigma_x > 0.0 && sigma_x.is_finite()) {
            return Err(Error::validation("task.sigma_x", "must be positive"));
        }
        Ok(Self {
            class_means,
            sigma_x,
            n_samples,
        })
    }

    /// Class means drawn as `N(0, separation^2 I)`.
    pub fn with_random_means<R: Rng + ?Sized>(
        classes: usize,
        dim: usize,
        separation: f64,
        sigma_x: f64,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let means = (0..classes)
            .map(|_| {
                (0..dim)
                    .map(|_| separation * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Self::new(means, sigma_x, n_samples)
    }

    pub fn classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn dim(&self) -> usize {
        self.class_means[0].len()
    }

    pub fn class_means(&self) -> &[Vec<f64>] {
        &self.class_means
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSamples {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledSamples {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &[f64], y: usize) {
        debug_assert_eq!(x.len(), self.dim);
        self.features.extend_from_slice(x);
        self.labels.push(y);
    }

    pub fn extend(&mut self, other: &LabeledSamples) {
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.features[k * self.dim..(k + 1) * self.dim]
    }

    pub fn y(&self, k: usize) -> usize {
        self.labels[k]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

pub fn generate_classification_data<R: Rng + ?Sized>(
    task: &SoftmaxTask,
    class_proportions: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<LabeledSamples> {
    if class_proportions.len() != task.classes() {
        return Err(Error::DimensionMismatch {
            expected: task.classes(),
            got: class_proportions.len(),
        });
    }
    let total: f64 = class_proportions.iter().sum();
    if (total - 1.0).abs() > 1e-9 || class_proportions.iter().any(|&p| p < 0.0) {
        return Err(Error::validation(
            "task.class_proportions",
            format!("must be a probability vector (sum = {total})"),
        ));
    }
    let picker = WeightedIndex::new(class_proportions)
        .map_err(|e| Error::validation("task.class_proportions", e.to_string()))?;
    let d = task.dim();
    let mut out = LabeledSamples::new(d);
    let mut x = vec![0.0; d];
    for _ in 0..n_samples {
        let y = picker.sample(rng);
        for (xi, mi) in x.iter_mut().zip(&task.class_means[y]) {
            *xi = mi + task.sigma_x * rng.sample::<f64, _>(StandardNormal);
        }
        out.push(&x, y);
    }
    Ok(out)
}

/// Mean over the batch of `d loss / d (W, b)`, flattened like the parameters:
/// `dW = (s - e_y) x^T`, `db = s - e_y`.
pub fn softmax_minibatch_grad(params: &SoftmaxParams, data: &LabeledSamples, batch: &[usize]) -> Result<Vec<f64>> {
    minibatch_grad_flat(params.classes, params.dim, &params.to_flat(), data, batch)
}

fn minibatch_grad_flat(
    classes: usize,
    dim: usize,
    flat: &[f64],
    data: &LabeledSamples,
    batch: &[usize],
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if flat.len() != classes * (dim + 1) {
        return Err(Error::DimensionMismatch {
            expected: classes * (dim + 1),
            got: flat.len(),
        });
    }
    let mut g = vec![0.0; flat.len()];
    for &k in batch {
        let x = data.x(k);
        let mut s = softmax(&logits_flat(classes, dim, flat, x));
        s[data.y(k)] -= 1.0;
        for (r, coef) in s.iter().enumerate() {
            vector::axpy(*coef, x, &mut g[r * dim..(r + 1) * dim]);
            g[classes * dim + r] += coef;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    Ok(g)
}

/// Mean cross-entropy and accuracy over a sample set, optionally restricted
/// to one class. Returns `None` when no sample qualifies.
pub fn evaluate(params: &SoftmaxParams, data: &LabeledSamples, only_class: Option<usize>) -> Option<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut count = 0usize;
    for k in 0..data.len() {
        let y = data.y(k);
        if only_class.is_some_and(|c| c != y) {
            continue;
        }
        let z = params.logits(data.x(k));
        loss += log_sum_exp(&z) - z[y];
        let pred = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (r, &v)| if v > best.1 { (r, v) } else { best })
            .0;
        if pred == y {
            correct += 1;
        }
        count += 1;
    }
    (count > 0).then(|| (loss / count as f64, correct as f64 / count as f64))
}

/// A classification client holding its local labeled samples.
#[derive(Debug, Clone)]
pub struct SoftmaxClient {
    pub classes: usize,
    pub data: LabeledSamples,
}

impl LocalObjective for SoftmaxClient {
    fn dim(&self) -> usize {
        SoftmaxParams::flat_len(self.classes, self.data.dim())
    }

    fn n_samples(&self) -> usize {
        self.data.len()
    }

    fn minibatch_grad(&self, w: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
        minibatch_grad_flat(self.classes, self.data.dim(), w, &self.data, batch)
    }
}

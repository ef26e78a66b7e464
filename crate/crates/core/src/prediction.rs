//! Discriminative classifiers trained on soft labels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::inference::MarginalTable;
use crate::numeric::{log_sigmoid, sigmoid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("feature vector has {found} entries, classifier expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("posterior table covers {found} instances, dataset has {expected}")]
    PosteriorLength { expected: usize, found: usize },
    #[error("invalid model file: {0}")]
    InvalidModel(String),
    #[error("invalid training options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ClassifierKind {
    Logreg,
    Mlp1 { hidden: usize },
}

/// Sigmoid-headed classifier over a fixed feature dimension.
///
/// Parameter layout: logreg `[w (d), b]`; mlp1
/// `[W1 (hidden x d, row-major), b1 (hidden), w2 (hidden), b2]` with a tanh
/// hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    kind: ClassifierKind,
    d: usize,
    params: Vec<f64>,
    seed: u64,
    trained_epochs: usize,
}

fn param_count(kind: ClassifierKind, d: usize) -> usize {
    match kind {
        ClassifierKind::Logreg => d + 1,
        ClassifierKind::Mlp1 { hidden } => hidden * d + 2 * hidden + 1,
    }
}

impl Classifier {
    /// Logreg starts at zero; mlp1 draws hidden weights uniformly from
    /// `[-1/sqrt(d), 1/sqrt(d)]` and zeroes the output layer, so every fresh
    /// classifier predicts 0.5 everywhere.
    pub fn new(kind: ClassifierKind, d: usize, seed: u64) -> Self {
        let mut params = vec![0.0; param_count(kind, d)];
        if let ClassifierKind::Mlp1 { hidden } = kind {
            let bound = 1.0 / (d.max(1) as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in &mut params[..hidden * d] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        Classifier { kind, d, params, seed, trained_epochs: 0 }
    }

    pub fn from_params(kind: ClassifierKind, d: usize, params: Vec<f64>) -> Result<Self, PredictError> {
        let expected = param_count(kind, d);
        if params.len() != expected {
            return Err(PredictError::InvalidModel(format!("expected {expected} parameters, found {}", params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(PredictError::InvalidModel("non-finite parameter".into()));
        }
        Ok(Classifier { kind, d, params, seed: 0, trained_epochs: 0 })
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn trained_epochs(&self) -> usize {
        self.trained_epochs
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), PredictError> {
        if x.len() != self.d {
            return Err(PredictError::Dimension { expected: self.d, found: x.len() });
        }
        Ok(())
    }

    /// Pre-sigmoid score; `x` must have length `d`.
    fn score_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.d;
        match self.kind {
            ClassifierKind::Logreg => dot(&self.params[..d], x) + self.params[d],
            ClassifierKind::Mlp1 { hidden } => {
                let (w1, rest) = self.params.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut s = b2[0];
                for k in 0..hidden {
                    s += w2[k] * (dot(&w1[k * d..(k + 1) * d], x) + b1[k]).tanh();
                }
                s
            }
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, PredictError> {
        self.check_dim(x)?;
        Ok(self.score_unchecked(x))
    }

    /// `(p0, p1)` with `p1 = sigmoid(score)`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64), PredictError> {
        let p1 = sigmoid(self.score(x)?);
        Ok((1.0 - p1, p1))
    }

    /// `[ln p0, ln p1]` for each instance of `ds`.
    pub fn log_probs(&self, ds: &Dataset) -> Result<Vec<[f64; 2]>, PredictError> {
        ds.instances()
            .iter()
            .map(|inst| {
                let s = self.score(&inst.features)?;
                Ok([log_sigmoid(-s), log_sigmoid(s)])
            })
            .collect()
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>, PredictError> {
        ds.instances().iter().map(|inst| Ok(sigmoid(self.score(&inst.features)?))).collect()
    }

    /// Accumulate `scale * d score / d params` into `grad`.
    fn accumulate_score_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        let d = self.d;
        match self.kind {
            ClassifierKind::Logreg => {
                for (g, xi) in grad[..d].iter_mut().zip(x) {
                    *g += scale * xi;
                }
                grad[d] += scale;
            }
            ClassifierKind::Mlp1 { hidden } => {
                let (w1, rest) = self.params.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let w2 = &rest[..hidden];
                let (gw1, grest) = grad.split_at_mut(hidden * d);
                let (gb1, grest) = grest.split_at_mut(hidden);
                let (gw2, gb2) = grest.split_at_mut(hidden);
                gb2[0] += scale;
                for k in 0..hidden {
                    let a = (dot(&w1[k * d..(k + 1) * d], x) + b1[k]).tanh();
                    gw2[k] += scale * a;
                    let back = scale * w2[k] * (1.0 - a * a);
                    gb1[k] += back;
                    for (g, xi) in gw1[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *g += back * xi;
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cross-entropy `H(q, p)` of one soft target against a score.
fn cross_entropy(score: f64, q1: f64) -> f64 {
    -(q1 * log_sigmoid(score) + (1.0 - q1) * log_sigmoid(-score))
}

/// Distillation objective on a batch: mean `H(q_i, p(.|x_i))` plus
/// `l2 * ||params||^2`.
pub fn loss(c: &Classifier, xs: &[&[f64]], q1: &[f64], l2: f64) -> Result<f64, PredictError> {
    let mut total = 0.0;
    for (x, &q) in xs.iter().zip(q1) {
        total += cross_entropy(c.score(x)?, q);
    }
    let penalty: f64 = c.params.iter().map(|p| p * p).sum();
    Ok(total / xs.len().max(1) as f64 + l2 * penalty)
}

/// Analytic gradient of [`loss`] with respect to the flat parameter vector.
pub fn gradient(c: &Classifier, xs: &[&[f64]], q1: &[f64], l2: f64) -> Result<Vec<f64>, PredictError> {
    let mut grad = vec![0.0; c.params.len()];
    let inv = 1.0 / xs.len().max(1) as f64;
    for (x, &q) in xs.iter().zip(q1) {
        let p = sigmoid(c.score(x)?);
        c.accumulate_score_grad(x, (p - q) * inv, &mut grad);
    }
    for (g, p) in grad.iter_mut().zip(&c.params) {
        *g += 2.0 * l2 * p;
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 10, learning_rate: 0.01, batch_size: 64, seed: 0, l2: 1e-4 }
    }
}

impl TrainOptions {
    fn validate(&self) -> Result<(), PredictError> {
        if self.batch_size == 0 {
            return Err(PredictError::InvalidOptions("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) {
            return Err(PredictError::InvalidOptions("learning rate must be positive and l2 non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainReport {
    /// Mean cross-entropy over each epoch's batches, measured before each update.
    pub epoch_losses: Vec<f64>,
    /// Mean cross-entropy of the returned classifier over the whole dataset.
    pub final_loss: f64,
}

/// Mean cross-entropy `H(q_i, p(.|x_i))` over a dataset.
pub fn mean_cross_entropy(c: &Classifier, ds: &Dataset, q: &MarginalTable) -> Result<f64, PredictError> {
    if q.len() != ds.len() {
        return Err(PredictError::PosteriorLength { expected: ds.len(), found: q.len() });
    }
    let mut total = 0.0;
    for (i, inst) in ds.instances().iter().enumerate() {
        total += cross_entropy(c.score(&inst.features)?, q.q1(i));
    }
    Ok(total / ds.len().max(1) as f64)
}

/// Fit `c` to the soft labels `q` by mini-batch gradient descent. The batch
/// order is reshuffled every epoch from `opts.seed`.
pub fn train_distill(
    c: &Classifier,
    ds: &Dataset,
    q: &MarginalTable,
    opts: &TrainOptions,
) -> Result<(Classifier, TrainReport), PredictError> {
    opts.validate()?;
    if q.len() != ds.len() {
        return Err(PredictError::PosteriorLength { expected: ds.len(), found: q.len() });
    }
    if ds.dim() != c.d && !ds.is_empty() {
        return Err(PredictError::Dimension { expected: c.d, found: ds.dim() });
    }
    let mut model = c.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let instances = ds.instances();
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = &instances[i].features;
                let s = model.score_unchecked(x);
                let q1 = q.q1(i);
                epoch_loss += cross_entropy(s, q1);
                model.accumulate_score_grad(x, (sigmoid(s) - q1) * inv, &mut grad);
            }
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= opts.learning_rate * (g + 2.0 * opts.l2 * *p);
            }
        }
        epoch_losses.push(epoch_loss / ds.len().max(1) as f64);
        model.trained_epochs += 1;
    }
    let final_loss = mean_cross_entropy(&model, ds, q)?;
    Ok((model, TrainReport { epoch_losses, final_loss }))
}

/// Label 1 iff `p1 >= threshold`.
pub fn decide(p1: f64, threshold: f64) -> u8 {
    u8::from(p1 >= threshold)
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelFile {
    pub kind: String,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    pub params: Vec<f64>,
    pub seed: u64,
    pub trained_epochs: usize,
}

impl From<&Classifier> for ModelFile {
    fn from(c: &Classifier) -> Self {
        let (kind, hidden) = match c.kind {
            ClassifierKind::Logreg => ("logreg", None),
            ClassifierKind::Mlp1 { hidden } => ("mlp1", Some(hidden)),
        };
        ModelFile {
            kind: kind.to_string(),
            d: c.d,
            hidden,
            params: c.params.clone(),
            seed: c.seed,
            trained_epochs: c.trained_epochs,
        }
    }
}

impl TryFrom<ModelFile> for Classifier {
    type Error = PredictError;

    fn try_from(m: ModelFile) -> Result<Self, PredictError> {
        let kind = match (m.kind.as_str(), m.hidden) {
            ("logreg", _) => ClassifierKind::Logreg,
            ("mlp1", Some(hidden)) => ClassifierKind::Mlp1 { hidden },
            ("mlp1", None) => return Err(PredictError::InvalidModel("mlp1 requires 'hidden'".into())),
            (other, _) => return Err(PredictError::InvalidModel(format!("unknown kind '{other}'"))),
        };
        let mut c = Classifier::from_params(kind, m.d, m.params)?;
        c.seed = m.seed;
        c.trained_epochs = m.trained_epochs;
        Ok(c)
    }
}

//! Linear softmax classifier over concatenated feature and label blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{GroundTruth, Split, SplitAssignment};
use crate::matrix::Matrix;
use crate::propagation::PropagatedTensor;

/// Raw target-node features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Matrix,
}

impl FeatureMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::Numeric("feature matrix has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Feature,
    Label,
}

/// One column block of the encoder input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBlock {
    pub values: Matrix,
    pub kind: BlockKind,
}

impl InputBlock {
    /// Label columns of a propagated tensor; the retention column is dropped.
    pub fn label(tensor: &PropagatedTensor) -> Self {
        Self {
            values: tensor.label_part(),
            kind: BlockKind::Label,
        }
    }

    pub fn feature(features: &FeatureMatrix) -> Self {
        Self {
            values: features.values().clone(),
            kind: BlockKind::Feature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Inverted dropout on every input column.
    pub dropout_in: f64,
    /// Inverted dropout on label-block columns only.
    pub dropout_label: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping and restoring
    /// the best parameters. 0 trains for every epoch and keeps the last.
    pub patience: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            dropout_in: 0.0,
            dropout_label: 0.0,
            seed: 0,
            patience: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [("dropout_in", self.dropout_in), ("dropout_label", self.dropout_label)] {
            if !(0.0..=0.9).contains(&rate) {
                return Err(Error::Config(format!("{name} {rate} outside [0, 0.9]")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// `softmax(x W + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    /// `D x C`, row-major.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Row-stochastic class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub probs: Matrix,
}

impl PredictionMatrix {
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.probs.rows())
            .map(|i| {
                let row = self.probs.row(i);
                let mut best = 0;
                for (c, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in z.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    z.iter_mut().for_each(|x| *x /= sum);
}

impl SoftmaxModel {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            weights: Matrix::zeros(dim, classes),
            bias: vec![0.0; classes],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (d, &xd) in x.iter().enumerate() {
            if xd != 0.0 {
                for (zc, w) in z.iter_mut().zip(self.weights.row(d)) {
                    *zc += xd * w;
                }
            }
        }
        z
    }

    pub fn predict(&self, x: &Matrix) -> PredictionMatrix {
        let mut probs = Matrix::zeros(x.rows(), self.num_classes());
        for i in 0..x.rows() {
            let mut z = self.logits(x.row(i));
            softmax_in_place(&mut z);
            probs.row_mut(i).copy_from_slice(&z);
        }
        PredictionMatrix { probs }
    }

    /// Mean cross-entropy over `rows` and its gradient with respect to the
    /// weights and bias.
    pub fn loss_and_grad(&self, x: &Matrix, rows: &[usize], targets: &[usize]) -> (f64, Matrix, Vec<f64>) {
        let c = self.num_classes();
        let mut gw = Matrix::zeros(self.dim(), c);
        let mut gb = vec![0.0; c];
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for (&i, &t) in rows.iter().zip(targets) {
            let xi = x.row(i);
            let mut p = self.logits(xi);
            let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + p.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            loss += lse - p[t];
            softmax_in_place(&mut p);
            p[t] -= 1.0;
            for (g, dz) in gb.iter_mut().zip(&p) {
                *g += dz * scale;
            }
            for (d, &xd) in xi.iter().enumerate() {
                if xd != 0.0 {
                    for (g, dz) in gw.row_mut(d).iter_mut().zip(&p) {
                        *g += xd * dz * scale;
                    }
                }
            }
        }
        (loss * scale, gw, gb)
    }
}

/// Concatenates blocks column-wise and records which columns are labels.
pub fn concat_blocks(blocks: &[InputBlock]) -> Result<(Matrix, Vec<bool>)> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::Config("encoder needs at least one input block".into()))?;
    let n = first.values.rows();
    if let Some(b) = blocks.iter().find(|b| b.values.rows() != n) {
        return Err(Error::Shape(format!(
            "input blocks have {} and {} rows",
            n,
            b.values.rows()
        )));
    }
    let dim: usize = blocks.iter().map(|b| b.values.cols()).sum();
    let mut x = Matrix::zeros(n, dim);
    let mut is_label = Vec::with_capacity(dim);
    for b in blocks {
        is_label.extend(std::iter::repeat_n(b.kind == BlockKind::Label, b.values.cols()));
    }
    for i in 0..n {
        let row = x.row_mut(i);
        let mut off = 0;
        for b in blocks {
            let w = b.values.cols();
            row[off..off + w].copy_from_slice(b.values.row(i));
            off += w;
        }
    }
    if !x.is_finite() {
        return Err(Error::Numeric("encoder input has non-finite entries".into()));
    }
    Ok((x, is_label))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Equals accuracy for single-label classification.
    pub micro_f1: f64,
    pub count: usize,
}

/// Macro-F1 averages over classes present in either the truth or the
/// predictions.
pub fn classification_metrics(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Metrics> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Split(format!(
            "cannot score {} predictions against {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let accuracy = correct as f64 / pred.len() as f64;
    let mut f1_sum = 0.0;
    let mut present = 0;
    for c in 0..num_classes {
        if tp[c] + fp[c] + fn_[c] == 0 {
            continue;
        }
        present += 1;
        f1_sum += 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64;
    }
    Ok(Metrics {
        accuracy,
        macro_f1: f1_sum / present as f64,
        micro_f1: accuracy,
        count: pred.len(),
    })
}

fn labeled_nodes(truth: &GroundTruth, split: &SplitAssignment, part: Split) -> (Vec<usize>, Vec<usize>) {
    split
        .nodes(part)
        .into_iter()
        .filter_map(|v| truth.classes[v].map(|c| (v, c)))
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub final_loss: f64,
    pub best_valid_accuracy: Option<f64>,
}

/// Full-batch gradient descent on mean cross-entropy over training nodes,
/// from zero-initialized parameters. With a nonzero patience, keeps the
/// parameters with the best validation accuracy.
pub fn train_encoder(
    blocks: &[InputBlock],
    truth: &GroundTruth,
    split: &SplitAssignment,
    cfg: &EncoderConfig,
) -> Result<(SoftmaxModel, TrainReport)> {
    cfg.validate()?;
    let (x, is_label) = concat_blocks(blocks)?;
    if x.rows() != split.len() || truth.len() != split.len() {
        return Err(Error::Shape(format!(
            "{} input rows, {} labels, {} split entries",
            x.rows(),
            truth.len(),
            split.len()
        )));
    }
    let (train_rows, train_targets) = labeled_nodes(truth, split, Split::Train);
    if train_rows.is_empty() {
        return Err(Error::Split("no labeled training nodes".into()));
    }
    let (valid_rows, valid_targets) = labeled_nodes(truth, split, Split::Valid);
    let c = truth.num_classes;
    let mut model = SoftmaxModel::zeros(x.cols(), c);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dropping = cfg.dropout_in > 0.0 || cfg.dropout_label > 0.0;

    let valid_acc = |m: &SoftmaxModel| -> Option<f64> {
        if valid_rows.is_empty() {
            return None;
        }
        let hits = valid_rows
            .iter()
            .zip(&valid_targets)
            .filter(|(&v, &t)| argmax(&m.logits(x.row(v))) == t)
            .count();
        Some(hits as f64 / valid_rows.len() as f64)
    };

    let mut best = (model.clone(), valid_acc(&model), 0usize);
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut loss = f64::NAN;
    for epoch in 1..=cfg.epochs {
        let input = if dropping {
            dropped(&x, &train_rows, &is_label, cfg, &mut rng)
        } else {
            x.clone()
        };
        let (l, gw, gb) = model.loss_and_grad(&input, &train_rows, &train_targets);
        if !l.is_finite() {
            return Err(Error::Numeric(format!("training loss became {l} at epoch {epoch}")));
        }
        loss = l;
        model.weights.axpy(-cfg.learning_rate, &gw);
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= cfg.learning_rate * g;
        }
        if !model.weights.is_finite() || model.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric(format!("parameters diverged at epoch {epoch}")));
        }
        epochs_run = epoch;
        if cfg.patience == 0 {
            continue;
        }
        match valid_acc(&model) {
            Some(acc) if best.1.is_none_or(|b| acc > b) => {
                best = (model.clone(), Some(acc), epoch);
                since_best = 0;
            }
            Some(_) => {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
            None => best = (model.clone(), None, epoch),
        }
    }
    if cfg.patience == 0 {
        best = (model.clone(), valid_acc(&model), epochs_run);
    }
    let (model, best_valid_accuracy, best_epoch) = best;
    Ok((
        model,
        TrainReport {
            epochs_run,
            best_epoch,
            final_loss: loss,
            best_valid_accuracy,
        },
    ))
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = c;
        }
    }
    best
}

fn dropped(x: &Matrix, rows: &[usize], is_label: &[bool], cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let keep_in = 1.0 - cfg.dropout_in;
    let keep_label = 1.0 - cfg.dropout_label;
    for &i in rows {
        let src = x.row(i);
        let dst = out.row_mut(i);
        for (d, (&v, &lab)) in src.iter().zip(is_label).enumerate() {
            let mut val = v;
            if cfg.dropout_in > 0.0 {
                val = if rng.gen::<f64>() < keep_in { val / keep_in } else { 0.0 };
            }
            if lab && cfg.dropout_label > 0.0 {
                val = if rng.gen::<f64>() < keep_label {
                    val / keep_label
                } else {
                    0.0
                };
            }
            dst[d] = val;
        }
    }
    out
}

/// Scores the model on one split part.
pub fn evaluate(
    model: &SoftmaxModel,
    blocks: &[InputBlock],
    truth: &GroundTruth,
    split: &SplitAssignment,
    part: Split,
) -> Result<Metrics> {
    let (x, _) = concat_blocks(blocks)?;
    if x.cols() != model.dim() {
        return Err(Error::Shape(format!(
            "model expects {} columns, input has {}",
            model.dim(),
            x.cols()
        )));
    }
    let (rows, targets) = labeled_nodes(truth, split, part);
    if rows.is_empty() {
        return Err(Error::Split(format!("no labeled {} nodes", part.as_str())));
    }
    let pred: Vec<usize> = rows.iter().map(|&v| argmax(&model.logits(x.row(v)))).collect();
    classification_metrics(&pred, &targets, model.num_classes())
}

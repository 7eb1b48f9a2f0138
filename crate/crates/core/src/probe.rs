//! Linear probes: softmax regression on frozen (optionally projected) features.
//!
//! The probe minimizes mean cross-entropy of `softmax(W h + b)` over
//! mini-batches. A variant trains the projection map jointly with the head,
//! starting from a frozen Gaussian map.

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::optim::{BatchSchedule, Optimizer, ParamState, TrainConfig};
use crate::projections::{project, ProjectionMatrix, ProjectionMethod};

/// Cross-entropy of `softmax(logits)` against `label`, and its gradient
/// `softmax(logits) - onehot(label)` with respect to the logits.
pub fn softmax_ce(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Input(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    probs.iter_mut().for_each(|p| *p /= sum);
    probs[label] -= 1.0;
    Ok((loss, probs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `C x k`.
    weights: Matrix,
    bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape {
                op: "classifier",
                left: weights.shape(),
                right: (bias.len(), 1),
            });
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("bias"));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(num_classes: usize, dim: usize) -> Result<Self> {
        Self::new(Matrix::zeros(num_classes, dim)?, vec![0.0; num_classes])
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        self.weights
            .row_iter()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, h) + b)
            .collect()
    }

    /// Argmax of the logits; ties go to the lowest class index.
    pub fn predict(&self, h: &[f64]) -> usize {
        argmax(&self.logits(h))
    }

    fn is_finite(&self) -> bool {
        self.weights
            .data()
            .iter()
            .chain(&self.bias)
            .all(|v| v.is_finite())
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub num_samples: usize,
    pub correct: usize,
    pub predictions: Vec<usize>,
}

impl EvalResult {
    pub(crate) fn from_parts(predictions: Vec<usize>, labels: &[usize], total_loss: f64) -> Self {
        let correct = predictions
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
        let n = labels.len();
        Self {
            accuracy: correct as f64 / n as f64,
            mean_loss: total_loss / n as f64,
            num_samples: n,
            correct,
            predictions,
        }
    }
}

pub fn evaluate(clf: &LinearClassifier, data: &LabeledDataset) -> Result<EvalResult> {
    if data.dim() != clf.dim() {
        return Err(Error::Shape {
            op: "evaluate",
            left: clf.weights.shape(),
            right: data.features().shape(),
        });
    }
    if data.num_classes() != clf.num_classes() {
        return Err(Error::Input(format!(
            "classifier has {} classes, data has {}",
            clf.num_classes(),
            data.num_classes()
        )));
    }
    let mut predictions = Vec::with_capacity(data.len());
    let mut total = 0.0;
    for (h, &y) in data.features().row_iter().zip(data.labels()) {
        let logits = clf.logits(h);
        total += softmax_ce(&logits, y)?.0;
        predictions.push(argmax(&logits));
    }
    Ok(EvalResult::from_parts(predictions, data.labels(), total))
}

/// Mean loss over a batch and its gradients with respect to `W` and `b`.
#[derive(Debug, Clone)]
pub struct ProbeGrad {
    pub loss: f64,
    /// Row-major `C x k`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn probe_loss_grad(clf: &LinearClassifier, x: &Matrix, labels: &[usize]) -> Result<ProbeGrad> {
    let rows: Vec<usize> = (0..x.rows()).collect();
    batch_grad(clf, x, labels, &rows)
}

fn batch_grad(
    clf: &LinearClassifier,
    x: &Matrix,
    labels: &[usize],
    rows: &[usize],
) -> Result<ProbeGrad> {
    let k = clf.dim();
    let mut gw = vec![0.0; clf.num_classes() * k];
    let mut gb = vec![0.0; clf.num_classes()];
    let mut loss = 0.0;
    for &i in rows {
        let h = x.row(i);
        let (l, g) = softmax_ce(&clf.logits(h), labels[i])?;
        loss += l;
        for (c, &gc) in g.iter().enumerate() {
            gb[c] += gc;
            for (w, &hj) in gw[c * k..(c + 1) * k].iter_mut().zip(h) {
                *w += gc * hj;
            }
        }
    }
    let n = rows.len() as f64;
    gw.iter_mut().for_each(|v| *v /= n);
    gb.iter_mut().for_each(|v| *v /= n);
    Ok(ProbeGrad {
        loss: loss / n,
        weights: gw,
        bias: gb,
    })
}

fn check_train_input(train: &LabeledDataset, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    Ok(())
}

fn diverged(step: usize, loss: f64) -> Error {
    Error::Divergence { step, loss }
}

/// Trains a zero-initialized probe on `train`.
///
/// Weight decay applies to `W` only; it is added to the gradient for SGD and
/// decoupled for AdamW. Output is a deterministic function of the data and
/// config.
pub fn train_probe(train: &LabeledDataset, config: &TrainConfig) -> Result<LinearClassifier> {
    check_train_input(train, config)?;
    let (c, k) = (train.num_classes(), train.dim());
    let mut weights = vec![0.0; c * k];
    let mut bias = vec![0.0; c];
    let mut w_state = ParamState::new(weights.len(), true);
    let mut b_state = ParamState::new(c, false);
    let mut opt = Optimizer::new(config);
    let mut schedule = BatchSchedule::new(train.len(), config);
    let mut step = 0;

    for _ in 0..config.epochs {
        for batch in schedule.next_epoch() {
            let clf = LinearClassifier {
                weights: Matrix::new(c, k, weights.clone())?,
                bias: bias.clone(),
            };
            let grad = batch_grad(&clf, train.features(), train.labels(), batch)
                .map_err(|_| diverged(step, f64::NAN))?;
            if !grad.loss.is_finite() {
                return Err(diverged(step, grad.loss));
            }
            opt.begin_step();
            opt.update(&mut weights, &grad.weights, &mut w_state);
            opt.update(&mut bias, &grad.bias, &mut b_state);
            if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
                return Err(diverged(step, grad.loss));
            }
            step += 1;
        }
    }
    LinearClassifier::new(Matrix::new(c, k, weights)?, bias)
}

/// Gradients of the composed loss `CE(softmax(W (M h) + b))` with respect to
/// the projection map `M`, `W` and `b`, averaged over the rows of `x`.
#[derive(Debug, Clone)]
pub struct LearnedGrad {
    pub loss: f64,
    /// Row-major `k x d`.
    pub map: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn learned_loss_grad(
    map: &Matrix,
    clf: &LinearClassifier,
    x: &Matrix,
    labels: &[usize],
) -> Result<LearnedGrad> {
    let rows: Vec<usize> = (0..x.rows()).collect();
    learned_batch_grad(map, clf, x, labels, &rows)
}

fn learned_batch_grad(
    map: &Matrix,
    clf: &LinearClassifier,
    x: &Matrix,
    labels: &[usize],
    rows: &[usize],
) -> Result<LearnedGrad> {
    let (k, d) = map.shape();
    if x.cols() != d || clf.dim() != k {
        return Err(Error::Shape {
            op: "learned projection",
            left: map.shape(),
            right: x.shape(),
        });
    }
    let c = clf.num_classes();
    let mut g_map = vec![0.0; k * d];
    let mut g_w = vec![0.0; c * k];
    let mut g_b = vec![0.0; c];
    let mut g_z = vec![0.0; k];
    let mut loss = 0.0;
    for &i in rows {
        let h = x.row(i);
        let z: Vec<f64> = map.row_iter().map(|m| dot(m, h)).collect();
        let (l, g) = softmax_ce(&clf.logits(&z), labels[i])?;
        loss += l;
        g_z.iter_mut().for_each(|v| *v = 0.0);
        for (cls, &gc) in g.iter().enumerate() {
            g_b[cls] += gc;
            let w_row = clf.weights.row(cls);
            for j in 0..k {
                g_w[cls * k + j] += gc * z[j];
                g_z[j] += gc * w_row[j];
            }
        }
        for (j, &gz) in g_z.iter().enumerate() {
            if gz == 0.0 {
                continue;
            }
            for (m, &hj) in g_map[j * d..(j + 1) * d].iter_mut().zip(h) {
                *m += gz * hj;
            }
        }
    }
    let n = rows.len() as f64;
    for v in g_map.iter_mut().chain(&mut g_w).chain(&mut g_b) {
        *v /= n;
    }
    Ok(LearnedGrad {
        loss: loss / n,
        map: g_map,
        weights: g_w,
        bias: g_b,
    })
}

/// Trains the projection map end-to-end with a zero-initialized head,
/// starting from the frozen Gaussian map `init`.
///
/// With zero epochs the returned map equals `init` bitwise and the head is
/// zero, so its logits match a fresh frozen-map probe exactly.
pub fn train_learned_projection(
    train: &LabeledDataset,
    init: &ProjectionMatrix,
    config: &TrainConfig,
) -> Result<(ProjectionMatrix, LinearClassifier)> {
    check_train_input(train, config)?;
    if init.method() != ProjectionMethod::Jl {
        return Err(Error::Input(format!(
            "learned projection must start from a JL map, got {}",
            init.method()
        )));
    }
    if train.dim() != init.source_dim() {
        return Err(Error::Shape {
            op: "learned projection",
            left: init.map().shape(),
            right: train.features().shape(),
        });
    }
    let (k, d) = init.map().shape();
    let c = train.num_classes();
    let mut map = init.map().data().to_vec();
    let mut weights = vec![0.0; c * k];
    let mut bias = vec![0.0; c];
    let mut m_state = ParamState::new(map.len(), true);
    let mut w_state = ParamState::new(weights.len(), true);
    let mut b_state = ParamState::new(c, false);
    let mut opt = Optimizer::new(config);
    let mut schedule = BatchSchedule::new(train.len(), config);
    let mut step = 0;

    for _ in 0..config.epochs {
        for batch in schedule.next_epoch() {
            let map_m = Matrix::new(k, d, map.clone()).map_err(|_| diverged(step, f64::NAN))?;
            let clf = LinearClassifier {
                weights: Matrix::new(c, k, weights.clone())?,
                bias: bias.clone(),
            };
            let grad = learned_batch_grad(&map_m, &clf, train.features(), train.labels(), batch)
                .map_err(|_| diverged(step, f64::NAN))?;
            if !grad.loss.is_finite() {
                return Err(diverged(step, grad.loss));
            }
            opt.begin_step();
            opt.update(&mut map, &grad.map, &mut m_state);
            opt.update(&mut weights, &grad.weights, &mut w_state);
            opt.update(&mut bias, &grad.bias, &mut b_state);
            if map
                .iter()
                .chain(&weights)
                .chain(&bias)
                .any(|v| !v.is_finite())
            {
                return Err(diverged(step, grad.loss));
            }
            step += 1;
        }
    }
    let clf = LinearClassifier::new(Matrix::new(c, k, weights)?, bias)?;
    debug_assert!(clf.is_finite());
    let learned = init.clone().into_learned(Matrix::new(k, d, map)?);
    Ok((learned, clf))
}

/// Projects both splits through `p` and trains/evaluates a probe on the result.
pub fn probe_projected(
    p: &ProjectionMatrix,
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(LinearClassifier, EvalResult)> {
    let train_p = train.with_features(project(p, train.features())?)?;
    let test_p = test.with_features(project(p, test.features())?)?;
    let clf = train_probe(&train_p, config)?;
    let eval = evaluate(&clf, &test_p)?;
    Ok((clf, eval))
}

/// A subspace is valid when its probe loss is within `epsilon` of the
/// full-dimensional probe loss on the same split.
pub fn check_subspace_validity(full: &EvalResult, projected: &EvalResult, epsilon: f64) -> bool {
    projected.mean_loss <= full.mean_loss + epsilon
}

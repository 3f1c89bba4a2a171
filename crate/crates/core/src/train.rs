//! Full-batch trainer for a small frozen network with one adapted layer.
//!
//! The network is `input → hidden → hidden → classes`:
//!
//! ```text
//! logits = ReLU(ReLU(X·W_in + b_in)·(W_hidden + ΔW) + b_hidden)·W_out + b_out
//! ```
//!
//! `W_in`, `b_in`, `W_hidden` and `b_hidden` are frozen. Only the adapter on
//! `W_hidden` and the classifier head (`W_out`, `b_out`) are trained. The loss
//! is mean softmax cross-entropy; gradients are computed by hand and the
//! hidden-weight gradient is handed to [`Adapter::grad`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapters::{Adapter, AdapterConfig, AdapterGrad};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Layer widths of the toy network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            input: 2,
            hidden: 64,
            classes: 8,
        }
    }
}

/// How the frozen base is drawn.
///
/// Weights are zero-mean normal with the Kaiming standard deviation
/// `√(2/fan_in)` times the given gain; biases are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseInit {
    pub input_gain: f64,
    pub hidden_gain: f64,
}

impl Default for BaseInit {
    fn default() -> Self {
        Self {
            input_gain: 1.0,
            hidden_gain: 1.0,
        }
    }
}

/// Two frozen layers, one adapter slot and a trainable head.
#[derive(Debug, Clone)]
pub struct ToyNetwork<T> {
    pub w_in: Matrix<T>,
    pub b_in: Vec<T>,
    pub w_hidden: Matrix<T>,
    pub b_hidden: Vec<T>,
    pub adapter: Option<Adapter<T>>,
    pub w_out: Matrix<T>,
    pub b_out: Vec<T>,
}

impl<T: Scalar> ToyNetwork<T> {
    /// Seeded frozen base and head without an adapter. Every method in one
    /// comparison builds from the same seed, so they share base and head
    /// bit for bit.
    pub fn new_base(shape: NetworkShape, init: BaseInit, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kaiming = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let w_in = Matrix::random_normal(shape.input, shape.hidden, init.input_gain * kaiming(shape.input), &mut rng);
        let w_hidden = Matrix::random_normal(
            shape.hidden,
            shape.hidden,
            init.hidden_gain * kaiming(shape.hidden),
            &mut rng,
        );
        // Head: Glorot-scaled, since no ReLU follows it.
        let head_std = (2.0 / (shape.hidden + shape.classes) as f64).sqrt();
        let w_out = Matrix::random_normal(shape.hidden, shape.classes, head_std, &mut rng);
        Self {
            w_in,
            b_in: vec![T::zero(); shape.hidden],
            w_hidden,
            b_hidden: vec![T::zero(); shape.hidden],
            adapter: None,
            w_out,
            b_out: vec![T::zero(); shape.classes],
        }
    }

    /// Initializes an adapter on the hidden weight.
    pub fn attach(&mut self, cfg: &AdapterConfig) -> Result<()> {
        self.adapter = Some(Adapter::init(&self.w_hidden, cfg)?);
        Ok(())
    }

    pub fn shape(&self) -> NetworkShape {
        NetworkShape {
            input: self.w_in.rows(),
            hidden: self.w_hidden.rows(),
            classes: self.w_out.cols(),
        }
    }

    pub fn head_param_count(&self) -> usize {
        self.w_out.as_slice().len() + self.b_out.len()
    }

    pub fn adapter_param_count(&self) -> usize {
        self.adapter.as_ref().map_or(0, Adapter::param_count)
    }

    /// Adapter parameters plus head parameters.
    pub fn trainable_param_count(&self) -> usize {
        self.adapter_param_count() + self.head_param_count()
    }

    /// `W_hidden + ΔW`.
    pub fn effective_hidden(&self) -> Result<Matrix<T>> {
        match &self.adapter {
            Some(a) => a.merged_weight(&self.w_hidden),
            None => Ok(self.w_hidden.clone()),
        }
    }

    /// Trainable values in optimizer order: adapter groups, `W_out`, `b_out`.
    pub fn param_groups_mut(&mut self) -> Vec<&mut [T]> {
        let mut groups = self.adapter.as_mut().map(Adapter::param_groups_mut).unwrap_or_default();
        groups.push(self.w_out.as_mut_slice());
        groups.push(&mut self.b_out);
        groups
    }

    /// Trainable values flattened in optimizer order.
    pub fn params(&self) -> Vec<T> {
        let mut out = self.adapter.as_ref().map(Adapter::params).unwrap_or_default();
        out.extend_from_slice(self.w_out.as_slice());
        out.extend_from_slice(&self.b_out);
        out
    }

    pub fn set_params(&mut self, values: &[T]) -> Result<()> {
        let total: usize = self.param_groups_mut().iter().map(|g| g.len()).sum();
        if values.len() != total {
            return Err(Error::ShapeMismatch {
                expected: format!("{total} parameters"),
                actual: format!("{}", values.len()),
            });
        }
        let mut rest = values;
        for group in self.param_groups_mut() {
            let (head, tail) = rest.split_at(group.len());
            group.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn forward_cached(&self, inputs: &Matrix<T>) -> Result<ForwardCache<T>> {
        let shape = self.shape();
        if inputs.cols() != shape.input {
            return Err(Error::ShapeMismatch {
                expected: format!("inputs with {} columns", shape.input),
                actual: format!("{}x{}", inputs.rows(), inputs.cols()),
            });
        }
        let mut z1 = inputs.matmul(&self.w_in)?;
        z1.add_row_vector(&self.b_in)?;
        let h1 = z1.map(relu);
        let mut z2 = h1.matmul(&self.effective_hidden()?)?;
        z2.add_row_vector(&self.b_hidden)?;
        let h2 = z2.map(relu);
        let mut logits = h2.matmul(&self.w_out)?;
        logits.add_row_vector(&self.b_out)?;
        if logits.check_finite().is_err() {
            return Err(Error::NonFiniteActivation { stage: "logits" });
        }
        Ok(ForwardCache { h1, z2, h2, logits })
    }

    /// Logits for every row of `inputs`.
    pub fn forward(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward_cached(inputs)?.logits)
    }

    /// Mean cross-entropy, accuracy and exact gradients of the trainable values.
    pub fn loss_and_grads(&self, inputs: &Matrix<T>, labels: &[usize]) -> Result<(T, T, Gradients<T>)> {
        let classes = self.shape().classes;
        if labels.len() != inputs.rows() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", inputs.rows()),
                actual: format!("{}", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidConfig(format!("label {bad} outside 0..{classes}")));
        }
        let cache = self.forward_cached(inputs)?;
        let batch = T::of_usize(inputs.rows());
        let (loss, correct, mut dlogits) = softmax_cross_entropy(&cache.logits, labels);
        if !loss.is_finite() {
            return Err(Error::NonFiniteActivation { stage: "loss" });
        }
        for x in dlogits.as_mut_slice() {
            *x /= batch;
        }

        let w_out = cache.h2.t_matmul(&dlogits)?;
        let b_out = dlogits.sum_rows();
        let mut dz2 = dlogits.matmul_t(&self.w_out)?;
        for (d, &z) in dz2.as_mut_slice().iter_mut().zip(cache.z2.as_slice()) {
            if z <= T::zero() {
                *d = T::zero();
            }
        }
        let adapter = match &self.adapter {
            Some(a) => Some(a.grad(&cache.h1.t_matmul(&dz2)?)?),
            None => None,
        };
        let accuracy = T::of_usize(correct) / batch;
        Ok((loss / batch, accuracy, Gradients { adapter, w_out, b_out }))
    }

    /// Fraction of rows whose arg-max logit equals the label.
    pub fn accuracy(&self, inputs: &Matrix<T>, labels: &[usize]) -> Result<T> {
        let logits = self.forward(inputs)?;
        let correct = (0..logits.rows()).filter(|&i| argmax(logits.row(i)) == labels[i]).count();
        Ok(T::of_usize(correct) / T::of_usize(labels.len()))
    }
}

struct ForwardCache<T> {
    h1: Matrix<T>,
    z2: Matrix<T>,
    h2: Matrix<T>,
    logits: Matrix<T>,
}

/// Gradients of the mean loss over the trainable values.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub adapter: Option<AdapterGrad<T>>,
    pub w_out: Matrix<T>,
    pub b_out: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    /// Same grouping as [`ToyNetwork::param_groups_mut`].
    pub fn groups(&self) -> Vec<&[T]> {
        let mut groups = self.adapter.as_ref().map(AdapterGrad::groups).unwrap_or_default();
        groups.push(self.w_out.as_slice());
        groups.push(&self.b_out);
        groups
    }

    pub fn flatten(&self) -> Vec<T> {
        self.groups().concat()
    }
}

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (k, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = k;
        }
    }
    best
}

/// Summed loss, number of correct arg-max predictions and `softmax - onehot`
/// per row, with log-sum-exp stabilization.
fn softmax_cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> (T, usize, Matrix<T>) {
    let mut grad = logits.clone();
    let mut loss = T::zero();
    let mut correct = 0;
    for (i, &label) in labels.iter().enumerate() {
        let row = grad.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        let log_z = max + sum.ln();
        loss += log_z - logits[(i, label)];
        for x in row.iter_mut() {
            *x /= sum;
        }
        row[label] -= T::one();
        if argmax(logits.row(i)) == label {
            correct += 1;
        }
    }
    (loss, correct, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidConfig(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Full-batch training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// SGD or Adam over a fixed list of parameter groups.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: T,
    step: i32,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            lr: T::of(learning_rate),
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// One update of every group from its gradient.
    pub fn step(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient groups differ");
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (x, &d) in p.iter_mut().zip(g) {
                        *x -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
                    self.second = self.first.clone();
                }
                let (b1, b2, eps) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2), T::of(ADAM_EPS));
                let c1 = T::one() - b1.powi(self.step);
                let c2 = T::one() - b2.powi(self.step);
                for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.first[k], &mut self.second[k]);
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                        v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Metrics of one epoch, measured on the parameters the epoch started with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Runs `cfg.epochs` full-batch steps and returns one record per epoch.
/// Epochs are numbered from 1.
pub fn train<T: Scalar>(
    net: &mut ToyNetwork<T>,
    inputs: &Matrix<T>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (loss, accuracy, grads) = net.loss_and_grads(inputs, labels).map_err(|e| match e {
            Error::NonFiniteActivation { stage } => Error::Diverged {
                epoch,
                reason: format!("non-finite {stage}"),
            },
            other => other,
        })?;
        records.push(EpochRecord {
            epoch,
            loss: loss.as_f64(),
            accuracy: accuracy.as_f64(),
        });
        opt.step(net.param_groups_mut(), grads.groups());
    }
    Ok(records)
}

/// First epoch whose accuracy reaches `threshold`.
pub fn epochs_to_threshold(records: &[EpochRecord], threshold: f64) -> Option<usize> {
    records.iter().find(|r| r.accuracy >= threshold).map(|r| r.epoch)
}

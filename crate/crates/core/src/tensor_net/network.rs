//! The fixed grid-classifier topology:
//!
//! ```text
//! input [3, H, W]
//!   conv 9×9 (32) → ReLU → batch-norm → max-pool 2×2
//!   conv 5×5 (64) → ReLU → batch-norm → max-pool 2×2
//!   flatten → dense fc1 → ReLU → dropout
//!           → dense fc2 → ReLU → dropout
//!           → dense 5   → softmax
//! ```
//!
//! Convolutions use valid padding and stride 1. For a 125×125 input the
//! feature maps are 117 → 58 → 54 → 27, so fc1 sees 64·27·27 = 46 656
//! inputs; for 64×64 it is 56 → 28 → 24 → 12 and 9 216 inputs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, BatchNormCache};
use super::optim::OptimizerKind;
use super::tensor::Tensor;
use super::NetError;
use crate::scenario_sim::ContextClass;

pub const CONV1_KERNEL: usize = 9;
pub const CONV2_KERNEL: usize = 5;
pub const NUM_CLASSES: usize = 5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CategoricalCrossentropy,
    MeanSquaredError,
}

impl LossKind {
    pub const ALL: [LossKind; 2] = [LossKind::CategoricalCrossentropy, LossKind::MeanSquaredError];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::CategoricalCrossentropy => "categorical_crossentropy",
            LossKind::MeanSquaredError => "mean_squared_error",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            LossKind::CategoricalCrossentropy => 0,
            LossKind::MeanSquaredError => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "categorical_crossentropy" | "crossentropy" | "ce" => {
                Ok(LossKind::CategoricalCrossentropy)
            }
            "mean_squared_error" | "mse" => Ok(LossKind::MeanSquaredError),
            _ => Err(NetError::UnknownName(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub fc1_width: usize,
    pub fc2_width: usize,
    pub dropout_rate: f64,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            input_channels: 3,
            input_height: 125,
            input_width: 125,
            conv1_filters: 32,
            conv2_filters: 64,
            fc1_width: 64,
            fc2_width: 32,
            dropout_rate: 0.5,
            loss: LossKind::CategoricalCrossentropy,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl NetworkSpec {
    pub fn with_input(mut self, height: usize, width: usize) -> Self {
        self.input_height = height;
        self.input_width = width;
        self
    }

    /// Spatial size after conv1 → pool → conv2 → pool, if the input is
    /// large enough.
    pub fn feature_dims(&self) -> Option<(usize, usize)> {
        let stage = |s: usize| -> Option<usize> {
            let c1 = s.checked_sub(CONV1_KERNEL - 1)?;
            let c2 = (c1 / 2).checked_sub(CONV2_KERNEL - 1)?;
            let p2 = c2 / 2;
            (p2 > 0).then_some(p2)
        };
        Some((stage(self.input_height)?, stage(self.input_width)?))
    }

    pub fn flat_features(&self) -> usize {
        self.feature_dims()
            .map(|(h, w)| h * w * self.conv2_filters)
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let ok = self.input_channels > 0
            && self.conv1_filters > 0
            && self.conv2_filters > 0
            && self.fc1_width > 0
            && self.fc2_width > 0
            && (0.0..1.0).contains(&self.dropout_rate)
            && self.feature_dims().is_some();
        if ok {
            Ok(())
        } else {
            Err(NetError::InvalidSpec(format!("{self:?}")))
        }
    }

    /// Trainable tensor shapes in canonical order (see [`slot`]).
    pub fn parameter_shapes(&self) -> Vec<Vec<usize>> {
        let (c, f1, f2) = (self.input_channels, self.conv1_filters, self.conv2_filters);
        vec![
            vec![f1, c, CONV1_KERNEL, CONV1_KERNEL],
            vec![f1],
            vec![f1],
            vec![f1],
            vec![f2, f1, CONV2_KERNEL, CONV2_KERNEL],
            vec![f2],
            vec![f2],
            vec![f2],
            vec![self.fc1_width, self.flat_features()],
            vec![self.fc1_width],
            vec![self.fc2_width, self.fc1_width],
            vec![self.fc2_width],
            vec![NUM_CLASSES, self.fc2_width],
            vec![NUM_CLASSES],
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// Indices of the trainable tensors in [`Parameters::trainable`].
pub mod slot {
    pub const CONV1_W: usize = 0;
    pub const CONV1_B: usize = 1;
    pub const BN1_GAMMA: usize = 2;
    pub const BN1_BETA: usize = 3;
    pub const CONV2_W: usize = 4;
    pub const CONV2_B: usize = 5;
    pub const BN2_GAMMA: usize = 6;
    pub const BN2_BETA: usize = 7;
    pub const FC1_W: usize = 8;
    pub const FC1_B: usize = 9;
    pub const FC2_W: usize = 10;
    pub const FC2_B: usize = 11;
    pub const FC3_W: usize = 12;
    pub const FC3_B: usize = 13;
    pub const COUNT: usize = 14;

    /// Order of [`super::Parameters::running`].
    pub const BN1_MEAN: usize = 0;
    pub const BN1_VAR: usize = 1;
    pub const BN2_MEAN: usize = 2;
    pub const BN2_VAR: usize = 3;
}

/// Network weights: 14 trainable tensors plus the batch-norm running
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub trainable: Vec<Tensor>,
    pub running: Vec<Tensor>,
}

impl Parameters {
    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        Self {
            trainable: spec.parameter_shapes().iter().map(|s| Tensor::zeros(s)).collect(),
            running: vec![
                Tensor::zeros(&[spec.conv1_filters]),
                Tensor::filled(&[spec.conv1_filters], 1.0),
                Tensor::zeros(&[spec.conv2_filters]),
                Tensor::filled(&[spec.conv2_filters], 1.0),
            ],
        }
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<(), NetError> {
        let shapes = spec.parameter_shapes();
        for (t, s) in self.trainable.iter().zip(&shapes) {
            if t.shape() != s.as_slice() {
                return Err(NetError::ShapeMismatch {
                    expected: s.clone(),
                    actual: t.shape().to_vec(),
                });
            }
        }
        if self.trainable.len() != shapes.len() || self.running.len() != 4 {
            return Err(NetError::InvalidSpec("parameter count mismatch".into()));
        }
        Ok(())
    }

    /// Folds batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &BatchStats, momentum: f64) {
        let pairs = [
            (slot::BN1_MEAN, &stats.bn1_mean),
            (slot::BN1_VAR, &stats.bn1_var),
            (slot::BN2_MEAN, &stats.bn2_mean),
            (slot::BN2_VAR, &stats.bn2_var),
        ];
        for (idx, batch) in pairs {
            for (r, b) in self.running[idx].data_mut().iter_mut().zip(batch) {
                *r = momentum * *r + (1.0 - momentum) * b;
            }
        }
    }
}

/// Fan-in scaled uniform weights (`U(−√(6/fan_in), √(6/fan_in))`, variance
/// `2/fan_in`), zero biases, unit scale and zero shift.
pub fn init_parameters(spec: &NetworkSpec, seed: u64) -> Result<Parameters, NetError> {
    spec.validate()?;
    let mut rng = crate::rng::stream(seed, &[]);
    let mut params = Parameters::zeros_like(spec);
    for idx in [slot::CONV1_W, slot::CONV2_W, slot::FC1_W, slot::FC2_W, slot::FC3_W] {
        let t = &mut params.trainable[idx];
        let fan_in: usize = t.shape()[1..].iter().product();
        let bound = (6.0 / fan_in as f64).sqrt();
        t.data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-bound..bound));
    }
    for idx in [slot::BN1_GAMMA, slot::BN2_GAMMA] {
        params.trainable[idx].data_mut().fill(1.0);
    }
    Ok(params)
}

/// Batch statistics observed in a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub bn1_mean: Vec<f64>,
    pub bn1_var: Vec<f64>,
    pub bn2_mean: Vec<f64>,
    pub bn2_var: Vec<f64>,
}

/// Intermediates kept for backpropagation.
pub struct ForwardCache {
    conv1_out: Tensor,
    bn1: Option<BatchNormCache>,
    pool1_in_shape: Vec<usize>,
    pool1_arg: Vec<usize>,
    pool1_out: Tensor,
    conv2_out: Tensor,
    bn2: Option<BatchNormCache>,
    pool2_in_shape: Vec<usize>,
    pool2_arg: Vec<usize>,
    flat: Tensor,
    z1: Tensor,
    mask1: Option<Vec<f64>>,
    a1: Tensor,
    z2: Tensor,
    mask2: Option<Vec<f64>>,
    a2: Tensor,
    pub logits: Tensor,
}

impl ForwardCache {
    pub fn batch_stats(&self) -> Option<BatchStats> {
        let (b1, b2) = (self.bn1.as_ref()?, self.bn2.as_ref()?);
        Some(BatchStats {
            bn1_mean: b1.mean.clone(),
            bn1_var: b1.var.clone(),
            bn2_mean: b2.mean.clone(),
            bn2_var: b2.var.clone(),
        })
    }
}

fn check_input(spec: &NetworkSpec, batch: &Tensor) -> Result<usize, NetError> {
    let expected = [spec.input_channels, spec.input_height, spec.input_width];
    match batch.shape() {
        [n, rest @ ..] if *n > 0 && rest == expected => Ok(*n),
        _ => Err(NetError::ShapeMismatch {
            expected: expected.to_vec(),
            actual: batch.shape().to_vec(),
        }),
    }
}

/// Runs the network on `[N, C, H, W]` and returns `[N, 5]` class
/// probabilities. Dropout and batch statistics are used only when
/// `training` is set.
pub fn forward<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &Parameters,
    batch: &Tensor,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, ForwardCache), NetError> {
    let n = check_input(spec, batch)?;
    params.check(spec)?;
    let p = &params.trainable;
    let r = &params.running;

    let conv_block = |x: &Tensor,
                      w: usize,
                      gamma: usize,
                      mean: usize|
     -> Result<(Tensor, Option<BatchNormCache>, Tensor), NetError> {
        let conv = layers::conv2d_forward(x, &p[w], &p[w + 1])?;
        let act = layers::relu_forward(&conv);
        if training {
            let (y, cache) = layers::batchnorm_forward_train(&act, &p[gamma], &p[gamma + 1])?;
            Ok((conv, Some(cache), y))
        } else {
            let y = layers::batchnorm_forward_eval(
                &act,
                &p[gamma],
                &p[gamma + 1],
                &r[mean],
                &r[mean + 1],
            )?;
            Ok((conv, None, y))
        }
    };

    let (conv1_out, bn1, norm1) = conv_block(batch, slot::CONV1_W, slot::BN1_GAMMA, slot::BN1_MEAN)?;
    let (pool1_out, pool1_arg) = layers::maxpool_forward(&norm1)?;
    let pool1_in_shape = norm1.shape().to_vec();
    drop(norm1);

    let (conv2_out, bn2, norm2) =
        conv_block(&pool1_out, slot::CONV2_W, slot::BN2_GAMMA, slot::BN2_MEAN)?;
    let (pool2_out, pool2_arg) = layers::maxpool_forward(&norm2)?;
    let pool2_in_shape = norm2.shape().to_vec();
    drop(norm2);

    let flat = pool2_out.reshape(&[n, spec.flat_features()])?;
    let rate = if training { spec.dropout_rate } else { 0.0 };
    let z1 = layers::dense_forward(&flat, &p[slot::FC1_W], &p[slot::FC1_B])?;
    let (a1, mask1) = layers::dropout_forward(&layers::relu_forward(&z1), rate, rng);
    let z2 = layers::dense_forward(&a1, &p[slot::FC2_W], &p[slot::FC2_B])?;
    let (a2, mask2) = layers::dropout_forward(&layers::relu_forward(&z2), rate, rng);
    let logits = layers::dense_forward(&a2, &p[slot::FC3_W], &p[slot::FC3_B])?;
    let probs = layers::softmax(&logits)?;

    Ok((
        probs,
        ForwardCache {
            conv1_out,
            bn1,
            pool1_in_shape,
            pool1_arg,
            pool1_out,
            conv2_out,
            bn2,
            pool2_in_shape,
            pool2_arg,
            flat,
            z1,
            mask1,
            a1,
            z2,
            mask2,
            a2,
            logits,
        },
    ))
}

/// Loss value for logits under the chosen loss, with d(loss)/d(logits).
pub fn loss_from_logits(
    loss: LossKind,
    logits: &Tensor,
    labels: &[usize],
) -> Result<(f64, Tensor), NetError> {
    match loss {
        LossKind::CategoricalCrossentropy => layers::cross_entropy_with_logits(logits, labels),
        LossKind::MeanSquaredError => layers::mse_with_logits(logits, labels),
    }
}

pub struct LossAndGrad {
    pub loss: f64,
    /// Same order and shapes as [`Parameters::trainable`].
    pub grads: Vec<Tensor>,
    pub stats: BatchStats,
}

/// Training-mode forward pass plus full backpropagation.
pub fn loss_and_grad<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &Parameters,
    batch: &Tensor,
    labels: &[usize],
    rng: &mut R,
) -> Result<LossAndGrad, NetError> {
    let (_, cache) = forward(spec, params, batch, true, rng)?;
    let (loss, dlogits) = loss_from_logits(spec.loss, &cache.logits, labels)?;
    let grads = backward(params, batch, &cache, &dlogits)?;
    let stats = cache.batch_stats().expect("training pass records statistics");
    Ok(LossAndGrad { loss, grads, stats })
}

fn backward(
    params: &Parameters,
    batch: &Tensor,
    cache: &ForwardCache,
    dlogits: &Tensor,
) -> Result<Vec<Tensor>, NetError> {
    let p = &params.trainable;
    let mut grads: Vec<Option<Tensor>> = vec![None; slot::COUNT];

    let (da2, dw3, db3) = layers::dense_backward(&cache.a2, &p[slot::FC3_W], dlogits)?;
    grads[slot::FC3_W] = Some(dw3);
    grads[slot::FC3_B] = Some(db3);
    let dz2 = layers::relu_backward(
        &cache.z2,
        &layers::dropout_backward(&da2, cache.mask2.as_deref()),
    );

    let (da1, dw2, db2) = layers::dense_backward(&cache.a1, &p[slot::FC2_W], &dz2)?;
    grads[slot::FC2_W] = Some(dw2);
    grads[slot::FC2_B] = Some(db2);
    let dz1 = layers::relu_backward(
        &cache.z1,
        &layers::dropout_backward(&da1, cache.mask1.as_deref()),
    );

    let (dflat, dw1, db1) = layers::dense_backward(&cache.flat, &p[slot::FC1_W], &dz1)?;
    grads[slot::FC1_W] = Some(dw1);
    grads[slot::FC1_B] = Some(db1);

    let n = batch.shape()[0];
    let mut pool2_shape = vec![n];
    pool2_shape.extend_from_slice(&cache.pool2_in_shape[1..2]);
    pool2_shape.extend(cache.pool2_in_shape[2..].iter().map(|s| s / 2));
    let dpool2 = dflat.reshape(&pool2_shape)?;
    let dnorm2 = layers::maxpool_backward(&dpool2, &cache.pool2_arg, &cache.pool2_in_shape);
    let bn2 = cache.bn2.as_ref().ok_or(NetError::NotTraining)?;
    let (dact2, dg2, dbeta2) = layers::batchnorm_backward(&dnorm2, bn2, &p[slot::BN2_GAMMA])?;
    grads[slot::BN2_GAMMA] = Some(dg2);
    grads[slot::BN2_BETA] = Some(dbeta2);
    let dconv2 = layers::relu_backward(&cache.conv2_out, &dact2);
    let g2 = layers::conv2d_backward(&cache.pool1_out, &p[slot::CONV2_W], &dconv2, true)?;
    grads[slot::CONV2_W] = Some(g2.weight);
    grads[slot::CONV2_B] = Some(g2.bias);

    let dpool1 = g2.input.expect("requested input gradient");
    let dnorm1 = layers::maxpool_backward(&dpool1, &cache.pool1_arg, &cache.pool1_in_shape);
    let bn1 = cache.bn1.as_ref().ok_or(NetError::NotTraining)?;
    let (dact1, dg1, dbeta1) = layers::batchnorm_backward(&dnorm1, bn1, &p[slot::BN1_GAMMA])?;
    grads[slot::BN1_GAMMA] = Some(dg1);
    grads[slot::BN1_BETA] = Some(dbeta1);
    let dconv1 = layers::relu_backward(&cache.conv1_out, &dact1);
    let g1 = layers::conv2d_backward(batch, &p[slot::CONV1_W], &dconv1, false)?;
    grads[slot::CONV1_W] = Some(g1.weight);
    grads[slot::CONV1_B] = Some(g1.bias);

    Ok(grads.into_iter().map(|g| g.expect("every slot filled")).collect())
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best })
}

/// Inference-mode classification of a single `[C, H, W]` grid tensor.
pub fn predict(
    spec: &NetworkSpec,
    params: &Parameters,
    grid_tensor: &Tensor,
) -> Result<(ContextClass, [f64; NUM_CLASSES]), NetError> {
    let mut shape = vec![1];
    shape.extend_from_slice(grid_tensor.shape());
    let batch = grid_tensor.clone().reshape(&shape)?;
    let probs = predict_batch(spec, params, &batch)?;
    let mut out = [0.0; NUM_CLASSES];
    out.copy_from_slice(&probs.data()[..NUM_CLASSES]);
    let class = ContextClass::from_index(argmax(&out)).expect("argmax below NUM_CLASSES");
    Ok((class, out))
}

/// Inference-mode probabilities for a `[N, C, H, W]` batch.
pub fn predict_batch(
    spec: &NetworkSpec,
    params: &Parameters,
    batch: &Tensor,
) -> Result<Tensor, NetError> {
    // Inference draws no random numbers; any generator will do.
    let mut rng = crate::rng::stream(0, &[]);
    Ok(forward(spec, params, batch, false, &mut rng)?.0)
}

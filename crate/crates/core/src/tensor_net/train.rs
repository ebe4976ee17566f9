use rand::seq::SliceRandom;
use rand::Rng;

use super::network::{self, NetworkSpec, Parameters, BN_MOMENTUM};
use super::optim::OptimizerState;
use super::tensor::Tensor;
use super::NetError;

/// Inputs (`[C, H, W]` each) with integer class labels.
#[derive(Debug, Clone, Default)]
pub struct LabelledSet {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl LabelledSet {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<usize>) -> Result<Self, NetError> {
        if inputs.len() != labels.len() {
            return Err(NetError::ShapeMismatch {
                expected: vec![inputs.len()],
                actual: vec![labels.len()],
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>), NetError> {
        let items: Vec<&Tensor> = indices.iter().map(|&i| &self.inputs[i]).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((Tensor::stack(&items)?, labels))
    }
}

/// One pass over `set` in a shuffled order with one optimizer step per
/// mini-batch. Returns the sample-weighted mean training loss.
pub fn train_epoch<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &mut Parameters,
    opt: &mut OptimizerState,
    set: &LabelledSet,
    batch_size: usize,
    rng: &mut R,
) -> Result<f64, NetError> {
    if set.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for chunk in order.chunks(batch_size) {
        let (batch, labels) = set.batch(chunk)?;
        let out = network::loss_and_grad(spec, params, &batch, &labels, rng)?;
        if !out.loss.is_finite() {
            return Err(NetError::NonFinite);
        }
        opt.apply(&mut params.trainable, &out.grads)?;
        params.update_running_stats(&out.stats, BN_MOMENTUM);
        total += out.loss * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

/// Inference-mode class predictions for every sample, batched in chunks.
pub fn predict_all(
    spec: &NetworkSpec,
    params: &Parameters,
    set: &LabelledSet,
    chunk: usize,
) -> Result<Vec<usize>, NetError> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut preds = Vec::with_capacity(set.len());
    for c in idx.chunks(chunk.max(1)) {
        let (batch, _) = set.batch(c)?;
        let probs = network::predict_batch(spec, params, &batch)?;
        preds.extend(probs.data().chunks(network::NUM_CLASSES).map(network::argmax));
    }
    Ok(preds)
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

//! Layer kernels with explicit forward and backward passes.
//!
//! Feature maps are `[N, C, H, W]`, dense activations `[N, D]`. Every
//! backward function takes the upstream gradient and whatever the forward
//! pass cached, and returns gradients for inputs and parameters.

use rand::Rng;

use super::tensor::{gemm, gemm_strided, Tensor};
use super::NetError;

pub const BN_EPS: f64 = 1e-5;

fn dims4(t: &Tensor) -> Result<(usize, usize, usize, usize), NetError> {
    match *t.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(NetError::ShapeMismatch {
            expected: vec![0, 0, 0, 0],
            actual: t.shape().to_vec(),
        }),
    }
}

fn dims2(t: &Tensor) -> Result<(usize, usize), NetError> {
    match *t.shape() {
        [n, d] => Ok((n, d)),
        _ => Err(NetError::ShapeMismatch {
            expected: vec![0, 0],
            actual: t.shape().to_vec(),
        }),
    }
}

/// Unfolds output rows `oy0..oy1` of one `[C, H, W]` image into a
/// `[C·kh·kw, (oy1−oy0)·OW]` patch matrix (valid padding, stride 1).
#[allow(clippy::too_many_arguments)]
fn im2col(x: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize, oy0: usize, oy1: usize, cols: &mut [f64]) {
    let ow = w - kw + 1;
    let pc = (oy1 - oy0) * ow;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let dst = &mut cols[row * pc..(row + 1) * pc];
                for oy in oy0..oy1 {
                    let src = (ci * h + oy + ki) * w + kj;
                    let o = (oy - oy0) * ow;
                    dst[o..o + ow].copy_from_slice(&x[src..src + ow]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back onto the image.
#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize, oy0: usize, oy1: usize, x: &mut [f64]) {
    let ow = w - kw + 1;
    let pc = (oy1 - oy0) * ow;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let src = &cols[row * pc..(row + 1) * pc];
                for oy in oy0..oy1 {
                    let dst = (ci * h + oy + ki) * w + kj;
                    let o = (oy - oy0) * ow;
                    for (d, s) in x[dst..dst + ow].iter_mut().zip(&src[o..o + ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Output positions unfolded at a time; keeps the patch matrix cache-sized.
const CHUNK_POSITIONS: usize = 256;

fn chunk_capacity(oh: usize, ow: usize) -> usize {
    row_chunks(oh, ow).map(|(a, b)| (b - a) * ow).max().unwrap_or(0)
}

/// Output-row ranges covering `0..oh`; large maps are split into
/// cache-sized chunks, small ones are done in one piece.
fn row_chunks(oh: usize, ow: usize) -> impl Iterator<Item = (usize, usize)> {
    let step = if oh * ow <= 4 * CHUNK_POSITIONS {
        oh
    } else {
        (CHUNK_POSITIONS / ow).max(1)
    };
    (0..oh).step_by(step).map(move |r| (r, (r + step).min(oh)))
}

struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn conv_dims(x: &Tensor, weight: &Tensor) -> Result<ConvDims, NetError> {
    let (n, c, h, w) = dims4(x)?;
    let (f, wc, kh, kw) = dims4(weight)?;
    if wc != c || kh > h || kw > w {
        return Err(NetError::ShapeMismatch {
            expected: vec![f, c, kh, kw],
            actual: x.shape().to_vec(),
        });
    }
    Ok(ConvDims {
        n,
        c,
        h,
        w,
        f,
        kh,
        kw,
        oh: h - kh + 1,
        ow: w - kw + 1,
    })
}

/// Cross-correlation with valid padding and stride 1, lowered to GEMM.
pub fn conv2d_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, NetError> {
    let d = conv_dims(x, weight)?;
    if bias.len() != d.f {
        return Err(NetError::ShapeMismatch {
            expected: vec![d.f],
            actual: bias.shape().to_vec(),
        });
    }
    let k = d.c * d.kh * d.kw;
    let p = d.oh * d.ow;
    let mut out = Tensor::zeros(&[d.n, d.f, d.oh, d.ow]);
    let mut cols = vec![0.0; k * chunk_capacity(d.oh, d.ow)];
    for i in 0..d.n {
        let y = &mut out.data_mut()[i * d.f * p..(i + 1) * d.f * p];
        for (fi, row) in y.chunks_mut(p).enumerate() {
            row.fill(bias.data()[fi]);
        }
        for (oy0, oy1) in row_chunks(d.oh, d.ow) {
            let pc = (oy1 - oy0) * d.ow;
            im2col(x.item(i), d.c, d.h, d.w, d.kh, d.kw, oy0, oy1, &mut cols);
            gemm_strided(
                d.f,
                k,
                pc,
                1.0,
                (weight.data(), k, false),
                (&cols, pc, false),
                1.0,
                (&mut y[oy0 * d.ow..], p),
            );
        }
    }
    Ok(out)
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Gradients of a [`conv2d_forward`] call. The input gradient is skipped
/// when `need_input_grad` is false (first layer).
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<ConvGrads, NetError> {
    let d = conv_dims(x, weight)?;
    if grad_out.shape() != [d.n, d.f, d.oh, d.ow] {
        return Err(NetError::ShapeMismatch {
            expected: vec![d.n, d.f, d.oh, d.ow],
            actual: grad_out.shape().to_vec(),
        });
    }
    let k = d.c * d.kh * d.kw;
    let p = d.oh * d.ow;
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[d.f]);
    let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    let chunk = chunk_capacity(d.oh, d.ow);
    let mut cols = vec![0.0; k * chunk];
    let mut dcols = vec![0.0; if need_input_grad { k * chunk } else { 0 }];
    let img = d.c * d.h * d.w;
    for i in 0..d.n {
        let dy = grad_out.item(i);
        for (fi, row) in dy.chunks(p).enumerate() {
            db.data_mut()[fi] += row.iter().sum::<f64>();
        }
        for (oy0, oy1) in row_chunks(d.oh, d.ow) {
            let pc = (oy1 - oy0) * d.ow;
            let dy_chunk = &dy[oy0 * d.ow..];
            im2col(x.item(i), d.c, d.h, d.w, d.kh, d.kw, oy0, oy1, &mut cols);
            gemm_strided(
                d.f,
                pc,
                k,
                1.0,
                (dy_chunk, p, false),
                (&cols, pc, true),
                1.0,
                (dw.data_mut(), k),
            );
            if let Some(dx) = dx.as_mut() {
                gemm_strided(
                    k,
                    d.f,
                    pc,
                    1.0,
                    (weight.data(), k, true),
                    (dy_chunk, p, false),
                    0.0,
                    (&mut dcols, pc),
                );
                let dxi = &mut dx.data_mut()[i * img..(i + 1) * img];
                col2im(&dcols, d.c, d.h, d.w, d.kh, d.kw, oy0, oy1, dxi);
            }
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// `x` is the forward input.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut dx = grad_out.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

/// Intermediates of a training-mode batch-norm pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub x_hat: Tensor,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-channel normalisation over `N·H·W` with batch statistics
/// (biased variance).
pub fn batchnorm_forward_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(Tensor, BatchNormCache), NetError> {
    let (n, c, h, w) = dims4(x)?;
    let hw = h * w;
    let m = (n * hw) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for i in 0..n {
        for ch in 0..c {
            let s = &x.data()[(i * c + ch) * hw..(i * c + ch + 1) * hw];
            mean[ch] += s.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    for i in 0..n {
        for ch in 0..c {
            let s = &x.data()[(i * c + ch) * hw..(i * c + ch + 1) * hw];
            var[ch] += s.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    let mut x_hat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for i in 0..n {
        for ch in 0..c {
            let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            for ((xh, yv), &xv) in x_hat.data_mut()[r.clone()]
                .iter_mut()
                .zip(&mut y.data_mut()[r.clone()])
                .zip(&x.data()[r])
            {
                *xh = (xv - mean[ch]) * inv_std[ch];
                *yv = g * *xh + b;
            }
        }
    }
    Ok((
        y,
        BatchNormCache {
            x_hat,
            inv_std,
            mean,
            var,
        },
    ))
}

/// Inference-mode normalisation with fixed statistics.
pub fn batchnorm_forward_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
) -> Result<Tensor, NetError> {
    let (n, c, h, w) = dims4(x)?;
    let hw = h * w;
    let mut y = x.clone();
    for i in 0..n {
        for ch in 0..c {
            let scale = gamma.data()[ch] / (var.data()[ch] + BN_EPS).sqrt();
            let shift = beta.data()[ch] - mean.data()[ch] * scale;
            y.data_mut()[(i * c + ch) * hw..(i * c + ch + 1) * hw]
                .iter_mut()
                .for_each(|v| *v = *v * scale + shift);
        }
    }
    Ok(y)
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward(
    grad_out: &Tensor,
    cache: &BatchNormCache,
    gamma: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NetError> {
    let (n, c, h, w) = dims4(grad_out)?;
    let hw = h * w;
    let m = (n * hw) as f64;
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for i in 0..n {
        for ch in 0..c {
            let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
            for (&dy, &xh) in grad_out.data()[r.clone()].iter().zip(&cache.x_hat.data()[r]) {
                dbeta.data_mut()[ch] += dy;
                dgamma.data_mut()[ch] += dy * xh;
            }
        }
    }
    // dx = γ·inv_std/m · (m·dy − Σdy − x̂·Σ(dy·x̂))
    let mut dx = Tensor::zeros(grad_out.shape());
    for i in 0..n {
        for ch in 0..c {
            let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
            let k = gamma.data()[ch] * cache.inv_std[ch] / m;
            let (sum_dy, sum_dy_xh) = (dbeta.data()[ch], dgamma.data()[ch]);
            for ((d, &dy), &xh) in dx.data_mut()[r.clone()]
                .iter_mut()
                .zip(&grad_out.data()[r.clone()])
                .zip(&cache.x_hat.data()[r])
            {
                *d = k * (m * dy - sum_dy - xh * sum_dy_xh);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// 2×2 max pooling with stride 2 (odd trailing rows/columns are dropped).
/// Returns the pooled map and, per output, the flat input index of the
/// winning element (first maximum in row-major window order).
pub fn maxpool_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>), NetError> {
    let (n, c, h, w) = dims4(x)?;
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0; n * c * oh * ow];
    let xd = x.data();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for idx in [best + 1, best + w, best + w + 1] {
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                y.data_mut()[o] = xd[best];
                argmax[o] = best;
                o += 1;
            }
        }
    }
    Ok((y, argmax))
}

pub fn maxpool_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        dx.data_mut()[idx] += g;
    }
    dx
}

/// `y = x·Wᵀ + b` with `W` stored `[out, in]`.
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, NetError> {
    let (n, din) = dims2(x)?;
    let (dout, win) = dims2(weight)?;
    if win != din || bias.len() != dout {
        return Err(NetError::ShapeMismatch {
            expected: vec![dout, din],
            actual: weight.shape().to_vec(),
        });
    }
    let mut y = Tensor::zeros(&[n, dout]);
    for row in y.data_mut().chunks_mut(dout) {
        row.copy_from_slice(bias.data());
    }
    gemm(n, din, dout, 1.0, x.data(), false, weight.data(), true, 1.0, y.data_mut());
    Ok(y)
}

/// Returns `(dx, dW, db)`.
pub fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NetError> {
    let (n, din) = dims2(x)?;
    let (dout, _) = dims2(weight)?;
    if grad_out.shape() != [n, dout] {
        return Err(NetError::ShapeMismatch {
            expected: vec![n, dout],
            actual: grad_out.shape().to_vec(),
        });
    }
    let mut dw = Tensor::zeros(&[dout, din]);
    gemm(dout, n, din, 1.0, grad_out.data(), true, x.data(), false, 0.0, dw.data_mut());
    let mut db = Tensor::zeros(&[dout]);
    for row in grad_out.data().chunks(dout) {
        for (b, g) in db.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    let mut dx = Tensor::zeros(&[n, din]);
    gemm(n, dout, din, 1.0, grad_out.data(), false, weight.data(), false, 0.0, dx.data_mut());
    Ok((dx, dw, db))
}

/// Inverted dropout. Returns the output and the scaling mask (`None` when
/// `rate` is zero, in which case the layer is the identity).
pub fn dropout_forward<R: Rng + ?Sized>(
    x: &Tensor,
    rate: f64,
    rng: &mut R,
) -> (Tensor, Option<Vec<f64>>) {
    if rate <= 0.0 {
        return (x.clone(), None);
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mut y = x.clone();
    y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    (y, Some(mask))
}

pub fn dropout_backward(grad_out: &Tensor, mask: Option<&[f64]>) -> Tensor {
    let mut dx = grad_out.clone();
    if let Some(mask) = mask {
        dx.data_mut().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
    }
    dx
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NetError> {
    let (_, k) = dims2(logits)?;
    let mut p = logits.clone();
    for row in p.data_mut().chunks_mut(k) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(p)
}

fn check_labels(n: usize, k: usize, labels: &[usize]) -> Result<(), NetError> {
    if labels.len() != n {
        return Err(NetError::ShapeMismatch {
            expected: vec![n],
            actual: vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NetError::InvalidLabel(bad));
    }
    Ok(())
}

/// Mean categorical cross-entropy of softmax(logits) and its gradient with
/// respect to the logits.
pub fn cross_entropy_with_logits(
    logits: &Tensor,
    labels: &[usize],
) -> Result<(f64, Tensor), NetError> {
    let (n, k) = dims2(logits)?;
    check_labels(n, k, labels)?;
    let probs = softmax(logits)?;
    let mut loss = 0.0;
    for (row, &y) in logits.data().chunks(k).zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
    }
    let mut grad = probs;
    for (row, &y) in grad.data_mut().chunks_mut(k).zip(labels) {
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok((loss / n as f64, grad))
}

/// Mean over samples of the mean squared difference between softmax(logits)
/// and the one-hot target, with its gradient with respect to the logits.
pub fn mse_with_logits(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NetError> {
    let (n, k) = dims2(logits)?;
    check_labels(n, k, labels)?;
    let probs = softmax(logits)?;
    let scale = 1.0 / (n * k) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.shape());
    for ((p, g), &y) in probs.data().chunks(k).zip(grad.data_mut().chunks_mut(k)).zip(labels) {
        let dp: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                let diff = pj - if j == y { 1.0 } else { 0.0 };
                loss += diff * diff;
                2.0 * diff * scale
            })
            .collect();
        let dot: f64 = dp.iter().zip(p).map(|(a, b)| a * b).sum();
        for j in 0..k {
            g[j] = p[j] * (dp[j] - dot);
        }
    }
    Ok((loss * scale, grad))
}

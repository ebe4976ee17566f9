//! Independent reference implementations shared by the integration tests
//! and the acceptance harness.

#![allow(dead_code)]

use dgn::ds_fusion::{ds_combine, FusionError, MassAssignment, SensorPose};
use dgn::dataset_io::{confusion, metrics, ConfusionMatrix, GridRecord};
use dgn::ds_fusion::{GridSpec, OccupancyGrid};
use dgn::scenario_sim::{Aabb, ContextClass, Scene, Segment};
use dgn::tensor_net::layers;
use dgn::tensor_net::{network, LossKind, NetworkSpec, OptimizerKind, OptimizerState, Parameters, Tensor};
use rand::Rng;

pub fn rng(seed: u64) -> dgn::rng::Rng {
    dgn::rng::stream(seed, &[])
}

// ---------------------------------------------------------------------------
// Dempster's rule by explicit focal-set enumeration.

const F: u8 = 0b01;
const O: u8 = 0b10;
const OMEGA: u8 = 0b11;

fn focal(m: &MassAssignment) -> [(u8, f64); 3] {
    [(F, m.m_free()), (O, m.m_occ()), (OMEGA, m.m_unknown())]
}

/// Combination and conflict computed by summing over every pair of focal
/// sets, `None` for the combination when the normaliser vanishes.
pub fn combine_oracle(a: &MassAssignment, b: &MassAssignment) -> (Option<[f64; 3]>, f64) {
    let mut joint = [0.0; 4];
    for (sa, ma) in focal(a) {
        for (sb, mb) in focal(b) {
            joint[(sa & sb) as usize] += ma * mb;
        }
    }
    let k = joint[0];
    let norm = 1.0 - k;
    if norm < 1e-9 {
        return (None, k);
    }
    (
        Some([joint[F as usize] / norm, joint[O as usize] / norm, joint[OMEGA as usize] / norm]),
        k,
    )
}

pub fn random_mass<R: Rng>(r: &mut R) -> MassAssignment {
    let f: f64 = r.gen();
    let o: f64 = r.gen::<f64>() * (1.0 - f);
    MassAssignment::from_evidence(f, o).unwrap()
}

pub fn triple(m: &MassAssignment) -> [f64; 3] {
    [m.m_free(), m.m_occ(), m.m_unknown()]
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Outcome of the Dempster's-rule checks over `pairs` random inputs.
#[derive(Debug, Default)]
pub struct DsReport {
    pub oracle_err: f64,
    pub commutative: bool,
    pub identity_err: f64,
    pub assoc_err: f64,
    pub conflict_flag_ok: bool,
}

pub fn ds_algebra(pairs: usize, seed: u64) -> DsReport {
    let mut r = rng(seed);
    let mut rep = DsReport {
        commutative: true,
        conflict_flag_ok: true,
        ..DsReport::default()
    };
    for _ in 0..pairs {
        let (a, b, c) = (random_mass(&mut r), random_mass(&mut r), random_mass(&mut r));
        let (expected, _) = combine_oracle(&a, &b);
        let ab = ds_combine(&a, &b).unwrap();
        rep.oracle_err = rep.oracle_err.max(max_diff(&triple(&ab), &expected.unwrap()));
        let ba = ds_combine(&b, &a).unwrap();
        rep.commutative &= triple(&ab) == triple(&ba);
        let id = ds_combine(&a, &MassAssignment::VACUOUS).unwrap();
        rep.identity_err = rep.identity_err.max(max_diff(&triple(&id), &triple(&a)));
        let left = ds_combine(&ab, &c).unwrap();
        let right = ds_combine(&a, &ds_combine(&b, &c).unwrap()).unwrap();
        rep.assoc_err = rep.assoc_err.max(max_diff(&triple(&left), &triple(&right)));
    }
    // Near-certain opposite evidence around the total-conflict threshold.
    for _ in 0..pairs {
        let e: f64 = 10f64.powf(r.gen_range(-14.0..-3.0));
        let split: f64 = r.gen();
        let a = MassAssignment::new(1.0 - e, 0.0, e).unwrap();
        let b = MassAssignment::new(0.0, 1.0 - e * split, e * split).unwrap();
        let (expected, _) = combine_oracle(&a, &b);
        let got = ds_combine(&a, &b);
        let flagged = matches!(got, Err(FusionError::TotalConflict { .. }));
        rep.conflict_flag_ok &= flagged == expected.is_none();
    }
    rep
}

// ---------------------------------------------------------------------------
// Ray casting against every primitive.

fn line_hit(o: (f64, f64), d: (f64, f64), a: (f64, f64), b: (f64, f64)) -> Option<f64> {
    // Supporting line n·p = c of the segment, then a range check by
    // projection onto the segment.
    let e = (b.0 - a.0, b.1 - a.1);
    let n = (-e.1, e.0);
    let nd = n.0 * d.0 + n.1 * d.1;
    if nd.abs() < 1e-15 {
        return None;
    }
    let t = ((a.0 - o.0) * n.0 + (a.1 - o.1) * n.1) / nd;
    if t <= 1e-12 {
        return None;
    }
    let p = (o.0 + t * d.0, o.1 + t * d.1);
    let s = ((p.0 - a.0) * e.0 + (p.1 - a.1) * e.1) / (e.0 * e.0 + e.1 * e.1);
    (-1e-12..=1.0 + 1e-12).contains(&s).then_some(t)
}

pub fn box_edges(b: &Aabb) -> [((f64, f64), (f64, f64)); 4] {
    let (x0, y0, x1, y1) = (b.min.0, b.min.1, b.max.0, b.max.1);
    [
        ((x0, y0), (x1, y0)),
        ((x1, y0), (x1, y1)),
        ((x1, y1), (x0, y1)),
        ((x0, y1), (x0, y0)),
    ]
}

pub fn range_oracle(scene: &Scene, pose: &SensorPose, angle: f64, max_range: f64) -> f64 {
    let o = (pose.x, pose.y);
    let d = (angle.cos(), angle.sin());
    let mut best = max_range;
    for s in &scene.segments {
        if let Some(t) = line_hit(o, d, s.a, s.b) {
            best = best.min(t);
        }
    }
    for b in &scene.boxes {
        for (p, q) in box_edges(b) {
            if let Some(t) = line_hit(o, d, p, q) {
                best = best.min(t);
            }
        }
    }
    best
}

/// Angle of beam `i` of `n` spread over `fov`, centred on `heading`.
pub fn beam_angle(heading: f64, fov: f64, i: usize, n: usize) -> f64 {
    heading - fov / 2.0 + (i as f64 + 0.5) * fov / n as f64
}

pub fn random_scene<R: Rng>(r: &mut R) -> Scene {
    let mut scene = dgn::scenario_sim::build_scene(
        dgn::scenario_sim::ContextClass::ALL[r.gen_range(0..5)],
        r.gen(),
    );
    for _ in 0..r.gen_range(0..6) {
        let a = (r.gen_range(-30.0..30.0), r.gen_range(-30.0..30.0));
        let b = (r.gen_range(-30.0..30.0), r.gen_range(-30.0..30.0));
        scene.segments.push(Segment::new(a, b));
    }
    for _ in 0..r.gen_range(0..6) {
        scene.boxes.push(Aabb::centered(
            r.gen_range(-25.0..25.0),
            r.gen_range(-25.0..25.0),
            r.gen_range(0.5..6.0),
            r.gen_range(0.5..6.0),
        ));
    }
    scene
}

/// Largest |cast − oracle| over `scenes × beams_per_scene` random beams.
pub fn raycast_error(scenes: usize, beams_per_scene: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..scenes {
        let scene = random_scene(&mut r);
        let pose = SensorPose::new(
            r.gen_range(-10.0..10.0),
            r.gen_range(-10.0..10.0),
            r.gen_range(-4.0..4.0),
        );
        let fov = r.gen_range(0.1..std::f64::consts::TAU);
        let max_range = r.gen_range(5.0..60.0);
        let scan = dgn::scenario_sim::cast_rays(&scene, &pose, beams_per_scene, fov, max_range);
        for (i, &got) in scan.ranges.iter().enumerate() {
            let want = range_oracle(&scene, &pose, beam_angle(pose.heading, fov, i, beams_per_scene), max_range);
            worst = worst.max((got - want).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Direct convolution.

pub fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let [n, c, h, wd] = x.shape()[..] else { panic!("rank") };
    let [f, _, kh, kw] = w.shape()[..] else { panic!("rank") };
    let (oh, ow) = (h - kh + 1, wd - kw + 1);
    let mut y = Tensor::zeros(&[n, f, oh, ow]);
    let (xd, wdat) = (x.data(), w.data());
    for ni in 0..n {
        for fi in 0..f {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b.data()[fi];
                    for ci in 0..c {
                        for u in 0..kh {
                            for v in 0..kw {
                                acc += xd[((ni * c + ci) * h + i + u) * wd + j + v]
                                    * wdat[((fi * c + ci) * kh + u) * kw + v];
                            }
                        }
                    }
                    y.data_mut()[((ni * f + fi) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    y
}

pub fn random_tensor<R: Rng>(r: &mut R, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Largest deviation between the library and direct convolution over
/// `shapes` random shapes (the first one fixed at 1×3×12×12, 9×9 kernel).
pub fn conv_oracle_error(shapes: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for s in 0..shapes {
        let (n, c, f, kh, kw, h, w) = if s == 0 {
            (1, 3, 4, 9, 9, 12, 12)
        } else {
            let kh = r.gen_range(1..=9);
            let kw = r.gen_range(1..=9);
            (
                r.gen_range(1..=3),
                r.gen_range(1..=4),
                r.gen_range(1..=6),
                kh,
                kw,
                kh + r.gen_range(0..12),
                kw + r.gen_range(0..12),
            )
        };
        let x = random_tensor(&mut r, &[n, c, h, w]);
        let wt = random_tensor(&mut r, &[f, c, kh, kw]);
        let b = random_tensor(&mut r, &[f]);
        let got = layers::conv2d_forward(&x, &wt, &b).unwrap();
        let want = naive_conv(&x, &wt, &b);
        assert_eq!(got.shape(), want.shape());
        worst = worst.max(max_diff(got.data(), want.data()));
    }
    worst
}

// ---------------------------------------------------------------------------
// Finite differences.

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so coordinates whose true
/// gradient is zero are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let v = probe.data()[i];
            probe.data_mut()[i] = v + FD_STEP;
            let up = f(&probe);
            probe.data_mut()[i] = v - FD_STEP;
            let down = f(&probe);
            probe.data_mut()[i] = v;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Values bounded away from zero, so ReLU kinks are out of reach of the
/// finite-difference step.
fn away_from_zero<R: Rng>(r: &mut R, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let m = r.gen_range(0.05..1.0);
            if r.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

/// Distinct values on a 0.01 lattice, so no pooling window has a near tie.
fn distinct_values<R: Rng>(r: &mut R, shape: &[usize]) -> Tensor {
    use rand::seq::SliceRandom;
    let len: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..len).map(|i| i as f64 * 0.01 - len as f64 * 0.005).collect();
    v.shuffle(r);
    Tensor::from_vec(shape.to_vec(), v).unwrap()
}

/// Worst relative gradient error of each layer, checked through the scalar
/// objective `⟨layer(x), r⟩` with a random projection `r`.
pub fn layer_gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();

    for (name, k) in [("conv 9x9", 9), ("conv 5x5", 5)] {
        let x = random_tensor(&mut r, &[2, 3, k + 3, k + 4]);
        let w = random_tensor(&mut r, &[4, 3, k, k]);
        let b = random_tensor(&mut r, &[4]);
        let y = layers::conv2d_forward(&x, &w, &b).unwrap();
        let proj = random_tensor(&mut r, y.shape());
        let g = layers::conv2d_backward(&x, &w, &proj, true).unwrap();
        let e_x = max_rel_err(
            g.input.unwrap().data(),
            &numeric_grad(&x, |x| dot(&layers::conv2d_forward(x, &w, &b).unwrap(), &proj)),
        );
        let e_w = max_rel_err(
            g.weight.data(),
            &numeric_grad(&w, |w| dot(&layers::conv2d_forward(&x, w, &b).unwrap(), &proj)),
        );
        let e_b = max_rel_err(
            g.bias.data(),
            &numeric_grad(&b, |b| dot(&layers::conv2d_forward(&x, &w, b).unwrap(), &proj)),
        );
        out.push((name, e_x.max(e_w).max(e_b)));
    }

    {
        let x = away_from_zero(&mut r, &[2, 3, 5, 5]);
        let proj = random_tensor(&mut r, x.shape());
        let a = layers::relu_backward(&x, &proj);
        let n = numeric_grad(&x, |x| dot(&layers::relu_forward(x), &proj));
        out.push(("relu", max_rel_err(a.data(), &n)));
    }

    {
        let x = random_tensor(&mut r, &[3, 2, 4, 4]);
        let gamma = random_tensor(&mut r, &[2]);
        let beta = random_tensor(&mut r, &[2]);
        let proj = random_tensor(&mut r, x.shape());
        let (_, cache) = layers::batchnorm_forward_train(&x, &gamma, &beta).unwrap();
        let (dx, dg, db) = layers::batchnorm_backward(&proj, &cache, &gamma).unwrap();
        let f = |x: &Tensor, g: &Tensor, b: &Tensor| {
            dot(&layers::batchnorm_forward_train(x, g, b).unwrap().0, &proj)
        };
        let e = max_rel_err(dx.data(), &numeric_grad(&x, |x| f(x, &gamma, &beta)))
            .max(max_rel_err(dg.data(), &numeric_grad(&gamma, |g| f(&x, g, &beta))))
            .max(max_rel_err(db.data(), &numeric_grad(&beta, |b| f(&x, &gamma, b))));
        out.push(("batch-norm", e));
    }

    {
        let x = distinct_values(&mut r, &[2, 3, 6, 7]);
        let (y, arg) = layers::maxpool_forward(&x).unwrap();
        let proj = random_tensor(&mut r, y.shape());
        let a = layers::maxpool_backward(&proj, &arg, x.shape());
        let n = numeric_grad(&x, |x| dot(&layers::maxpool_forward(x).unwrap().0, &proj));
        out.push(("max-pool", max_rel_err(a.data(), &n)));
    }

    {
        let x = random_tensor(&mut r, &[4, 7]);
        let w = random_tensor(&mut r, &[5, 7]);
        let b = random_tensor(&mut r, &[5]);
        let proj = random_tensor(&mut r, &[4, 5]);
        let (dx, dw, db) = layers::dense_backward(&x, &w, &proj).unwrap();
        let f = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&layers::dense_forward(x, w, b).unwrap(), &proj);
        let e = max_rel_err(dx.data(), &numeric_grad(&x, |x| f(x, &w, &b)))
            .max(max_rel_err(dw.data(), &numeric_grad(&w, |w| f(&x, w, &b))))
            .max(max_rel_err(db.data(), &numeric_grad(&b, |b| f(&x, &w, b))));
        out.push(("dense", e));
    }

    {
        let x = random_tensor(&mut r, &[3, 6]);
        let proj = random_tensor(&mut r, x.shape());
        let mut drop_rng = rng(1);
        let (_, mask) = layers::dropout_forward(&x, 0.0, &mut drop_rng);
        let a = layers::dropout_backward(&proj, mask.as_deref());
        let n = numeric_grad(&x, |x| dot(&layers::dropout_forward(x, 0.0, &mut rng(1)).0, &proj));
        out.push(("dropout (rate 0)", max_rel_err(a.data(), &n)));
    }

    for (name, loss) in [
        ("softmax + crossentropy", LossKind::CategoricalCrossentropy),
        ("softmax + mse", LossKind::MeanSquaredError),
    ] {
        let logits = random_tensor(&mut r, &[4, 5]);
        let labels: Vec<usize> = (0..4).map(|_| r.gen_range(0..5)).collect();
        let (_, a) = network::loss_from_logits(loss, &logits, &labels).unwrap();
        let n = numeric_grad(&logits, |l| network::loss_from_logits(loss, l, &labels).unwrap().0);
        out.push((name, max_rel_err(a.data(), &n)));
    }
    out
}

/// The smallest spec the fixed 9×9 / 5×5 valid convolutions accept.
pub fn tiny_spec(loss: LossKind, dropout_rate: f64) -> NetworkSpec {
    NetworkSpec {
        input_channels: 3,
        input_height: 20,
        input_width: 20,
        conv1_filters: 2,
        conv2_filters: 3,
        fc1_width: 2,
        fc2_width: 2,
        dropout_rate,
        loss,
        optimizer: OptimizerKind::Adam,
    }
}

/// Worst relative error over every trainable parameter of the composed
/// network, with dropout masks held fixed by reseeding.
pub fn network_gradient_error(spec: &NetworkSpec, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut params = network::init_parameters(spec, seed).unwrap();
    // Random biases keep pre-activations off the ReLU kink even when a
    // whole layer below is inactive; random scale and shift exercise the
    // batch-norm gradients.
    use network::slot::*;
    for idx in [CONV1_B, BN1_GAMMA, BN1_BETA, CONV2_B, BN2_GAMMA, BN2_BETA, FC1_B, FC2_B, FC3_B] {
        params.trainable[idx] = random_tensor(&mut r, params.trainable[idx].shape());
    }
    let batch = random_tensor(&mut r, &[4, spec.input_channels, spec.input_height, spec.input_width]);
    let labels: Vec<usize> = (0..4).map(|i| (i * 2 + 1) % 5).collect();
    let drop_seed = r.gen::<u64>();

    let analytic = network::loss_and_grad(spec, &params, &batch, &labels, &mut rng(drop_seed)).unwrap();
    let loss_at = |p: &Parameters| {
        let (_, cache) = network::forward(spec, p, &batch, true, &mut rng(drop_seed)).unwrap();
        network::loss_from_logits(spec.loss, &cache.logits, &labels).unwrap().0
    };
    let mut worst = 0.0f64;
    for i in 0..params.trainable.len() {
        let mut probe = params.clone();
        let n = numeric_grad(&params.trainable[i], |t| {
            probe.trainable[i] = t.clone();
            loss_at(&probe)
        });
        worst = worst.max(max_rel_err(analytic.grads[i].data(), &n));
    }
    worst
}

// ---------------------------------------------------------------------------
// Optimizer sanity on a fixed convex quadratic.

pub const QUAD_CURVATURE: [f64; 5] = [1.0, 4.0, 10.0, 0.5, 2.0];
pub const QUAD_MINIMUM: [f64; 5] = [1.0, -2.0, 3.0, 0.5, -1.0];

/// Step sizes used for the quadratic; adadelta's value is the multiplier of
/// its self-scaled update.
pub fn quadratic_step_size(kind: OptimizerKind) -> f64 {
    match kind {
        OptimizerKind::Sgd => 0.1,
        OptimizerKind::Rmsprop => 0.01,
        OptimizerKind::Adam => 0.05,
        OptimizerKind::Adagrad => 0.5,
        OptimizerKind::Adadelta => 1.0,
        OptimizerKind::Adamax => 0.05,
        OptimizerKind::Nadam => 0.05,
    }
}

pub fn quadratic(theta: &[f64]) -> f64 {
    theta
        .iter()
        .zip(QUAD_CURVATURE.iter().zip(&QUAD_MINIMUM))
        .map(|(t, (a, c))| 0.5 * a * (t - c).powi(2))
        .sum()
}

/// Fractional reduction of the quadratic after `steps` updates from zero.
pub fn quadratic_reduction(kind: OptimizerKind, steps: usize) -> f64 {
    let mut theta = vec![Tensor::zeros(&[5])];
    let start = quadratic(theta[0].data());
    let mut opt = OptimizerState::new(kind, quadratic_step_size(kind), &theta);
    for _ in 0..steps {
        let g: Vec<f64> = theta[0]
            .data()
            .iter()
            .zip(QUAD_CURVATURE.iter().zip(&QUAD_MINIMUM))
            .map(|(t, (a, c))| a * (t - c))
            .collect();
        opt.apply(&mut theta, &[Tensor::from_vec(vec![5], g).unwrap()]).unwrap();
    }
    1.0 - quadratic(theta[0].data()) / start
}

// ---------------------------------------------------------------------------
// Records and metrics.

pub fn random_record(seed: u64, width: usize, height: usize) -> GridRecord {
    let mut r = rng(seed);
    let spec = GridSpec::centered(width, height, r.gen_range(0.05..1.0));
    let cells = (0..width * height)
        .map(|_| match r.gen_range(0..4) {
            0 => MassAssignment::VACUOUS,
            _ => random_mass(&mut r),
        })
        .collect();
    let grid = OccupancyGrid::from_cells(spec, cells).unwrap();
    GridRecord::quantized(&grid, ContextClass::ALL[r.gen_range(0..5)])
}

/// Counts `[predicted][actual]` and the hand-evaluated metrics.
pub fn hand_matrix() -> (ConfusionMatrix, [f64; 4]) {
    let counts = [
        [50, 2, 0, 1, 0],
        [3, 40, 5, 0, 0],
        [0, 4, 45, 0, 2],
        [1, 0, 0, 30, 6],
        [0, 0, 0, 9, 20],
    ];
    // Column sums 54, 46, 50, 40, 28; row sums 53, 48, 51, 37, 29; total 218.
    let accuracy = 185.0 / 218.0;
    let recall = (50.0 / 54.0 + 40.0 / 46.0 + 45.0 / 50.0 + 30.0 / 40.0 + 20.0 / 28.0) / 5.0;
    let precision = (50.0 / 53.0 + 40.0 / 48.0 + 45.0 / 51.0 + 30.0 / 37.0 + 20.0 / 29.0) / 5.0;
    let f = 2.0 * precision * recall / (precision + recall);
    (ConfusionMatrix { counts }, [accuracy, recall, precision, f])
}

/// Accuracy of uniformly random guesses on `n` class-balanced labels.
pub fn uniform_guess_accuracy(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let labels: Vec<ContextClass> = (0..n).map(|i| ContextClass::ALL[i % 5]).collect();
    let preds: Vec<ContextClass> = (0..n).map(|_| ContextClass::ALL[r.gen_range(0..5)]).collect();
    metrics(&confusion(&preds, &labels).unwrap()).accuracy
}

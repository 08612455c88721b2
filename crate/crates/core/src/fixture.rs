//! Seeded synthetic models and datasets used by the tests, the examples in
//! the README and `po2forge fixture`.
//!
//! Labels come from the model itself (a "teacher" pass) with a fraction of
//! them flipped, so the baseline accuracy is high but not perfect and weight
//! perturbations show up as accuracy drops. Samples whose top-two scores are
//! too close are resampled, which keeps high-precision substitutions (e.g.
//! 16-bit PTQ) from flipping predictions by rounding noise alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::infer::{argmax, infer};
use crate::dse::DesignSpace;
use crate::store::{CostCalibration, Dataset, FeatureShape, LayerKind, LayerSpec, ModelGraph, Padding, Tensor};

/// Rounds through f32 so fixtures survive the archive format unchanged.
fn f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = (3.0 / fan_in as f64).sqrt() * 1.4;
    let n = shape.iter().product();
    let data = (0..n).map(|_| f32_exact(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("consistent fixture shape")
}

fn small_bias(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| f32_exact(rng.gen_range(-0.05..0.05))).collect()
}

#[allow(clippy::too_many_arguments)]
fn conv(
    rng: &mut ChaCha8Rng,
    name: &str,
    kind: LayerKind,
    k: (usize, usize),
    stride: (usize, usize),
    padding: Padding,
    ci: usize,
    co: usize,
) -> LayerSpec {
    let (shape, fan_in) = match kind {
        LayerKind::DepthwiseConv2d => (vec![k.0, k.1, ci, co / ci], k.0 * k.1),
        _ => (vec![k.0, k.1, ci, co], k.0 * k.1 * ci),
    };
    let w = uniform_tensor(rng, shape, fan_in);
    let b = small_bias(rng, co);
    LayerSpec::weighted(name, kind, k, stride, padding, (ci, co), w, Some(b))
}

fn dense(rng: &mut ChaCha8Rng, name: &str, ci: usize, co: usize) -> LayerSpec {
    let w = uniform_tensor(rng, vec![ci, co], ci);
    LayerSpec::weighted(name, LayerKind::Dense, (1, 1), (1, 1), Padding::Valid, (ci, co), w, Some(vec![0.0; co]))
}

fn relu(name: &str, c: usize) -> LayerSpec {
    LayerSpec::elementwise(name, LayerKind::Relu, c)
}

/// Three-class CNN on 8x8x2 inputs with four decomposable layers
/// (conv, pointwise conv, conv, dense).
pub fn toy_model(seed: u64) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        conv(&mut rng, "conv1", LayerKind::Conv2d, (3, 3), (1, 1), Padding::Same, 2, 8),
        relu("relu1", 8),
        conv(&mut rng, "pw1", LayerKind::PointwiseConv2d, (1, 1), (1, 1), Padding::Valid, 8, 8),
        relu("relu2", 8),
        LayerSpec::pool("pool1", LayerKind::MaxPool, 8, (2, 2), (2, 2), Padding::Valid),
        conv(&mut rng, "conv2", LayerKind::Conv2d, (3, 3), (1, 1), Padding::Valid, 8, 8),
        relu("relu3", 8),
        dense(&mut rng, "fc", 32, 3),
        LayerSpec::elementwise("softmax", LayerKind::Softmax, 3),
    ];
    let model = ModelGraph::new("toy3", FeatureShape::new(8, 8, 2), layers).expect("valid toy model");
    center_classes(model, &mut rng)
}

/// DS-CNN-style keyword-spotting network: a strided stem, four depthwise
/// separable blocks whose pointwise convolutions are the decomposable layers,
/// global average pooling and a 12-way classifier.
pub fn dscnn_model(seed: u64) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stem = conv(&mut rng, "stem", LayerKind::Conv2d, (10, 4), (2, 2), Padding::Same, 1, 64);
    stem.decomposable = false;
    let mut layers = vec![stem, relu("stem_relu", 64)];
    for i in 1..=4 {
        layers.push(conv(&mut rng, &format!("dw{i}"), LayerKind::DepthwiseConv2d, (3, 3), (1, 1), Padding::Same, 64, 64));
        layers.push(relu(&format!("dw{i}_relu"), 64));
        layers.push(conv(&mut rng, &format!("pw{i}"), LayerKind::PointwiseConv2d, (1, 1), (1, 1), Padding::Valid, 64, 64));
        layers.push(relu(&format!("pw{i}_relu"), 64));
    }
    layers.push(LayerSpec::pool("avgpool", LayerKind::AvgPool, 64, (25, 5), (25, 5), Padding::Valid));
    let mut fc = dense(&mut rng, "fc", 64, 12);
    fc.decomposable = false;
    layers.push(fc);
    layers.push(LayerSpec::elementwise("softmax", LayerKind::Softmax, 12));
    let model = ModelGraph::new("dscnn", FeatureShape::new(49, 10, 1), layers).expect("valid DS-CNN model");
    center_classes(model, &mut rng)
}

/// Index of the last dense layer (the classifier).
fn classifier(model: &ModelGraph) -> usize {
    model
        .layers()
        .iter()
        .rposition(|l| l.kind == LayerKind::Dense)
        .expect("fixture ends in a dense layer")
}

fn random_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| f32_exact(rng.gen_range(-1.0..1.0))).collect()
}

/// Shifts the classifier bias so that the mean logit of every class is zero
/// over random inputs, balancing the teacher's class frequencies.
fn center_classes(model: ModelGraph, rng: &mut ChaCha8Rng) -> ModelGraph {
    let fc = classifier(&model);
    let classes = model.layers()[fc].channels.1;
    let n_in = model.input_shape().len();
    let probes = 64;
    let mut mean = vec![0.0; classes];
    let mut pre = model.clone();
    // logits are the classifier output: truncate the graph there
    let (name, shape, mut layers) = pre.into_parts();
    layers.truncate(fc + 1);
    pre = ModelGraph::new(name, shape, layers).expect("prefix of a valid model");
    for _ in 0..probes {
        let y = infer(&pre, &random_input(rng, n_in)).expect("fixture input");
        for (m, v) in mean.iter_mut().zip(y) {
            *m += v / probes as f64;
        }
    }
    let (name, shape, mut layers) = model.into_parts();
    let bias = layers[fc].bias.get_or_insert_with(|| vec![0.0; classes]);
    for (b, m) in bias.iter_mut().zip(&mean) {
        *b = f32_exact(*b - m);
    }
    ModelGraph::new(name, shape, layers).expect("bias update keeps shapes")
}

/// Teacher-labelled dataset for `model`: `n` samples, a `noise` fraction of
/// labels flipped to another class, samples with a top-two logit gap below
/// `min_margin` resampled.
pub fn teacher_dataset(model: &ModelGraph, n: usize, noise: f64, min_margin: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fc = classifier(model);
    let (name, shape, mut layers) = model.clone().into_parts();
    layers.truncate(fc + 1);
    let logits_model = ModelGraph::new(name, shape, layers)?;
    let classes = model.num_classes();
    let n_in = model.input_shape().len();
    let mut inputs = Vec::with_capacity(n * n_in);
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let x = random_input(&mut rng, n_in);
        let y = infer(&logits_model, &x)?;
        let top = argmax(&y);
        let second = y
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != top)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if y[top] - second < min_margin {
            continue;
        }
        let label = if rng.gen_bool(noise) {
            (top + rng.gen_range(1..classes)) % classes
        } else {
            top
        };
        inputs.extend(x);
        labels.push(label as u32);
    }
    Dataset::new(model.input_shape(), classes, inputs, labels, crate::store::DEFAULT_SEARCH_FRACTION)
}

pub const TOY_SEED: u64 = 7;
pub const TOY_SAMPLES: usize = 1000;
/// Minimum teacher top-two logit gap of toy samples.
pub const TOY_MARGIN: f64 = 0.4;

/// Search split of the toy dataset. Larger than the usual 10% so that
/// accuracy drops resolve below one percentage point.
pub const TOY_SEARCH_FRACTION: f64 = 0.5;
/// LUT budget of the toy device.
pub const TOY_LUT_MAX: u64 = 6000;

/// The toy model with its 1000-sample dataset.
pub fn toy_fixture() -> Result<(ModelGraph, Dataset)> {
    let model = toy_model(TOY_SEED);
    let ds = teacher_dataset(&model, TOY_SAMPLES, 0.05, TOY_MARGIN, TOY_SEED + 1)?.with_split_fraction(TOY_SEARCH_FRACTION)?;
    Ok((model, ds))
}

/// Default cost functions with the toy LUT budget.
pub fn toy_calibration() -> CostCalibration {
    CostCalibration::with_lut_max(TOY_LUT_MAX)
}

/// 1944-point design space over the toy model's decomposable layers.
pub fn toy_space(model: &ModelGraph) -> Result<DesignSpace> {
    DesignSpace::for_model(model, vec![1, 2, 3], vec![2, 3], vec![4, 8], vec![2, 4], vec![1, 2, 3])
}

/// The DS-CNN-style model with a small dataset.
pub fn dscnn_fixture(samples: usize) -> Result<(ModelGraph, Dataset)> {
    let model = dscnn_model(11);
    let ds = teacher_dataset(&model, samples, 0.05, 0.05, 12)?;
    Ok((model, ds))
}

//! Shared generators and independent reference computations for the
//! integration tests.
#![allow(dead_code)]

use po2forge::store::{FeatureShape, LayerKind, LayerSpec, ModelGraph, Padding, Tensor};
use po2forge::wmd::{apply_integer, layout_for, DecomposedLayer, Matrix, MatrixMode, WmdConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid `{P, Z, E, M, S_W}` with `M` from `rows` and P in `stages`.
pub fn random_config(r: &mut ChaCha8Rng, rows: &[usize], stages: std::ops::RangeInclusive<usize>) -> WmdConfig {
    let m = *rows.choose(r).unwrap();
    let sw = r.gen_range(1..=m);
    let e = r.gen_range(2..=m.max(2));
    let z = r.gen_range(1..=4);
    WmdConfig::new(r.gen_range(stages), z, e, m, sw).unwrap()
}

/// `rows x cols` uniform in [-1, 1], scaled so that max |w| = 1.
pub fn normalized_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect();
    let peak = data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Matrix::from_vec(rows, cols, data.iter().map(|v| v / peak).collect()).unwrap()
}

/// A single-layer model around a randomly shaped conv, pointwise, depthwise
/// or dense layer with uniform weights.
pub fn random_layer_model(r: &mut ChaCha8Rng, decomposable_only: bool) -> ModelGraph {
    let kinds: &[LayerKind] = if decomposable_only {
        &[LayerKind::Conv2d, LayerKind::PointwiseConv2d, LayerKind::Dense]
    } else {
        &[LayerKind::Conv2d, LayerKind::PointwiseConv2d, LayerKind::Dense, LayerKind::DepthwiseConv2d]
    };
    let kind = *kinds.choose(r).unwrap();
    let ci = r.gen_range(1..=12);
    let co = match kind {
        LayerKind::DepthwiseConv2d => ci * r.gen_range(1..=2),
        _ => r.gen_range(1..=12),
    };
    let (h, w) = (r.gen_range(3..=7), r.gen_range(3..=7));
    let (k, stride, padding, input) = match kind {
        LayerKind::Dense => ((1, 1), (1, 1), Padding::Valid, FeatureShape::new(1, 1, ci)),
        LayerKind::PointwiseConv2d => ((1, 1), (1, 1), Padding::Valid, FeatureShape::new(h, w, ci)),
        _ => {
            let k = (r.gen_range(1..=3), r.gen_range(1..=3));
            let s = (r.gen_range(1..=2), r.gen_range(1..=2));
            let p = if r.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
            (k, s, p, FeatureShape::new(h, w, ci))
        }
    };
    let shape = match kind {
        LayerKind::DepthwiseConv2d => vec![k.0, k.1, ci, co / ci],
        LayerKind::Dense => vec![ci, co],
        _ => vec![k.0, k.1, ci, co],
    };
    let n = shape.iter().product();
    let weights = Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let layer = LayerSpec::weighted("l0", kind, k, stride, padding, (ci, co), weights, None);
    ModelGraph::new("single", input, vec![layer]).unwrap()
}

/// Matrix of the given layer layout whose entries are 0 or `±2^-z` with
/// `z < shifts`, with at least one entry of magnitude 1.
pub fn po2_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, shifts: usize) -> Matrix {
    let mut data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            if r.gen_bool(0.3) {
                0.0
            } else {
                let mag = (-(r.gen_range(0..shifts) as f64)).exp2();
                if r.gen_bool(0.5) { -mag } else { mag }
            }
        })
        .collect();
    let i = r.gen_range(0..data.len());
    data[i] = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Layer rows/cols in accelerator layout without materializing weights.
pub fn accelerator_shape(layer: &LayerSpec) -> (usize, usize) {
    let l = layout_for(layer, MatrixMode::Accelerator).unwrap();
    (l.rows, l.cols)
}

/// `Lat_F * K_xy * O_xy * ceil(C_in / (S_W PE_x)) * ceil(C_out / (M PE_y))`
/// with `Lat_F = max(1, P - 1)`.
#[allow(clippy::too_many_arguments)]
pub fn eq4_cycles(kxy: u64, oxy: u64, ci: u64, co: u64, sw: u64, m: u64, pe_x: u64, pe_y: u64, p: u64) -> u64 {
    let lat_f = if p > 1 { p - 1 } else { 1 };
    lat_f * kxy * oxy * ci.div_ceil(sw * pe_x) * co.div_ceil(m * pe_y)
}

/// Integer output of a decomposed conv/dense layer computed pixel by pixel
/// from [`apply_integer`] on the input vector seen at each kernel position.
pub fn per_pixel_reference(model: &ModelGraph, dl: &DecomposedLayer, input: &[i32]) -> Vec<i32> {
    let layer = &model.layers()[0];
    let geo = model.geometry(0);
    let (ci, co) = layer.channels;
    if layer.kind == LayerKind::Dense {
        return apply_integer(dl, input).unwrap();
    }
    let (kx, ky) = layer.kernel;
    let (sx, sy) = layer.stride;
    let (oh, ow) = (geo.output.h, geo.output.w);
    let mut out = vec![0_i32; oh * ow * co];
    for oy in 0..oh {
        for ox in 0..ow {
            for a in 0..kx {
                for b in 0..ky {
                    let iy = (oy * sx + a) as isize - geo.pad_top as isize;
                    let ix = (ox * sy + b) as isize - geo.pad_left as isize;
                    let inside = iy >= 0 && ix >= 0 && (iy as usize) < geo.input.h && (ix as usize) < geo.input.w;
                    let x: Vec<i32> = if inside {
                        let base = ((iy as usize) * geo.input.w + ix as usize) * ci;
                        input[base..base + ci].to_vec()
                    } else {
                        vec![0; ci]
                    };
                    let y = apply_integer(dl, &x).unwrap();
                    let k = a * ky + b;
                    for o in 0..co {
                        out[(oy * ow + ox) * co + o] += y[k * co + o];
                    }
                }
            }
        }
    }
    out
}

/// `Ŵ x` with exact power-of-two weights: every product is an integer when
/// `x` is a multiple of `2^(Z-1)`.
pub fn exact_po2_product(w: &Matrix, x: &[i32]) -> Vec<i32> {
    (0..w.rows())
        .map(|r| {
            let s: f64 = w.row(r).iter().zip(x).map(|(g, &v)| g * v as f64).sum();
            assert_eq!(s.fract(), 0.0, "non-integer reference product");
            s as i32
        })
        .collect()
}

//! Real-valued reference executor. Feature maps are flat HWC buffers.

use crate::error::{Error, Result};
use crate::store::{FeatureShape, LayerGeometry, LayerKind, LayerSpec, ModelGraph, SkipSource};

/// Runs one parameterised or pooling layer on `input`.
/// Residual additions need the skip operand and go through [`forward_with`].
pub fn run_layer(layer: &LayerSpec, geo: &LayerGeometry, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != geo.input.len() {
        return Err(Error::Shape(format!(
            "layer `{}` expects {} values, got {}",
            layer.name,
            geo.input.len(),
            input.len()
        )));
    }
    Ok(match layer.kind {
        LayerKind::Conv2d | LayerKind::PointwiseConv2d => conv(layer, geo, input, false),
        LayerKind::DepthwiseConv2d => conv(layer, geo, input, true),
        LayerKind::Dense => dense(layer, input),
        LayerKind::MaxPool | LayerKind::AvgPool => pool(layer, geo, input),
        LayerKind::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
        LayerKind::Softmax => softmax(input, geo.input.c),
        LayerKind::AddResidual => {
            return Err(Error::Internal("residual add needs its skip operand".into()))
        }
    })
}

/// Input position of kernel tap `k` for output position `o`, or `None` when
/// it falls into padding.
#[inline]
fn tap(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    (o * stride + k).checked_sub(pad).filter(|&p| p < extent)
}

fn conv(layer: &LayerSpec, geo: &LayerGeometry, input: &[f64], depthwise: bool) -> Vec<f64> {
    let w = &layer.weights.as_ref().expect("validated weighted layer").data;
    let (kx, ky) = layer.kernel;
    let (sx, sy) = layer.stride;
    let (ci, co) = layer.channels;
    let (is, os) = (geo.input, geo.output);
    let mult = co / ci;
    let mut out = vec![0.0; os.len()];
    for oy in 0..os.h {
        for ox in 0..os.w {
            let acc = &mut out[os.index(oy, ox, 0)..os.index(oy, ox, 0) + co];
            if let Some(b) = &layer.bias {
                acc.copy_from_slice(b);
            }
            for a in 0..kx {
                let Some(iy) = tap(oy, a, sx, geo.pad_top, is.h) else { continue };
                for b in 0..ky {
                    let Some(ix) = tap(ox, b, sy, geo.pad_left, is.w) else { continue };
                    let px = &input[is.index(iy, ix, 0)..is.index(iy, ix, 0) + ci];
                    let base = (a * ky + b) * ci;
                    if depthwise {
                        for (c, &x) in px.iter().enumerate() {
                            for m in 0..mult {
                                acc[c * mult + m] += x * w[(base + c) * mult + m];
                            }
                        }
                    } else {
                        for (i, &x) in px.iter().enumerate() {
                            let row = &w[(base + i) * co..(base + i + 1) * co];
                            for (o, &wv) in row.iter().enumerate() {
                                acc[o] += x * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn dense(layer: &LayerSpec, input: &[f64]) -> Vec<f64> {
    let w = &layer.weights.as_ref().expect("validated weighted layer").data;
    let co = layer.channels.1;
    let mut out = layer.bias.clone().unwrap_or_else(|| vec![0.0; co]);
    for (i, &x) in input.iter().enumerate() {
        for (o, &wv) in w[i * co..(i + 1) * co].iter().enumerate() {
            out[o] += x * wv;
        }
    }
    out
}

/// Max/average pooling; padded positions are excluded from both.
fn pool(layer: &LayerSpec, geo: &LayerGeometry, input: &[f64]) -> Vec<f64> {
    let (kx, ky) = layer.kernel;
    let (sx, sy) = layer.stride;
    let (is, os) = (geo.input, geo.output);
    let is_max = layer.kind == LayerKind::MaxPool;
    let mut out = vec![0.0; os.len()];
    for oy in 0..os.h {
        for ox in 0..os.w {
            for c in 0..os.c {
                let mut acc = if is_max { f64::NEG_INFINITY } else { 0.0 };
                let mut n = 0usize;
                for a in 0..kx {
                    let Some(iy) = tap(oy, a, sx, geo.pad_top, is.h) else { continue };
                    for b in 0..ky {
                        let Some(ix) = tap(ox, b, sy, geo.pad_left, is.w) else { continue };
                        let v = input[is.index(iy, ix, c)];
                        acc = if is_max { acc.max(v) } else { acc + v };
                        n += 1;
                    }
                }
                out[os.index(oy, ox, c)] = if is_max { acc } else { acc / n as f64 };
            }
        }
    }
    out
}

/// Softmax over the channel axis of every pixel.
fn softmax(input: &[f64], c: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(input.len());
    for px in input.chunks(c) {
        let peak = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = px.iter().map(|&v| (v - peak).exp()).collect();
        let sum: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / sum));
    }
    out
}

/// Forward pass where `hook` may compute a layer itself: it is called before
/// every layer and its `Some` result replaces the reference computation.
pub fn forward_with<F>(model: &ModelGraph, input: &[f64], mut hook: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[f64]) -> Result<Option<Vec<f64>>>,
{
    let shape: FeatureShape = model.input_shape();
    if input.len() != shape.len() {
        return Err(Error::Shape(format!(
            "input has {} values, model `{}` expects {}",
            input.len(),
            model.name(),
            shape.len()
        )));
    }
    let layers = model.layers();
    let mut keep = vec![false; layers.len()];
    let mut keep_input = false;
    for l in layers {
        match l.residual_from {
            Some(SkipSource::Layer(i)) => keep[i] = true,
            Some(SkipSource::Input) => keep_input = true,
            None => {}
        }
    }
    let mut saved: Vec<Option<Vec<f64>>> = vec![None; layers.len()];
    let model_input = keep_input.then(|| input.to_vec());
    let mut x = input.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let geo = model.geometry(i);
        x = match hook(i, &x)? {
            Some(y) => {
                if y.len() != geo.output.len() {
                    return Err(Error::Shape(format!(
                        "layer {i} produced {} values, expected {}",
                        y.len(),
                        geo.output.len()
                    )));
                }
                y
            }
            None if layer.kind == LayerKind::AddResidual => {
                let skip = match layer.residual_from {
                    Some(SkipSource::Input) => model_input.as_deref(),
                    Some(SkipSource::Layer(s)) => saved[s].as_deref(),
                    None => None,
                }
                .ok_or_else(|| Error::Internal("residual operand missing".into()))?;
                x.iter().zip(skip).map(|(a, b)| a + b).collect()
            }
            None => run_layer(layer, &geo, &x)?,
        };
        if keep[i] {
            saved[i] = Some(x.clone());
        }
    }
    Ok(x)
}

/// Deterministic forward pass returning the final layer's output.
pub fn infer(model: &ModelGraph, input: &[f64]) -> Result<Vec<f64>> {
    forward_with(model, input, |_, _| Ok(None))
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

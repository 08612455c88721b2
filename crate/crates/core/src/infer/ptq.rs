use crate::error::{Error, Result};
use crate::store::{ModelGraph, Tensor};

/// Symmetric per-tensor quantize-dequantize of `values` to `bits`.
/// `W_q = clamp(round(W / s)) * s` with `s = max|W| / (2^(b-1) - 1)`; halves
/// round away from zero.
pub fn quantize_symmetric(values: &[f64], bits: u32) -> Vec<f64> {
    let qmax = ((1_i64 << (bits - 1)) - 1) as f64;
    let peak = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return values.to_vec();
    }
    let s = peak / qmax;
    // W * qmax / peak instead of W / s: exact for values on the grid
    values
        .iter()
        .map(|&w| (w * qmax / peak).round().clamp(-qmax, qmax) * s)
        .collect()
}

/// Weight-only PTQ of every weight tensor; biases and activations untouched.
pub fn quantize_ptq(model: &ModelGraph, weight_bits: u32) -> Result<ModelGraph> {
    if !(2..=16).contains(&weight_bits) {
        return Err(Error::InvalidConfig(format!(
            "PTQ bit-width {weight_bits} outside 2..=16"
        )));
    }
    let (name, input, mut layers) = model.clone().into_parts();
    for l in &mut layers {
        if let Some(w) = &l.weights {
            l.weights = Some(Tensor::new(w.shape.clone(), quantize_symmetric(&w.data, weight_bits))?);
        }
    }
    ModelGraph::new(name, input, layers)
}

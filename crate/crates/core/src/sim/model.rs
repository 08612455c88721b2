use crate::error::{Error, Result};
use crate::hw::AcceleratorConfig;
use crate::infer::forward_with;
use crate::store::{CostCalibration, ModelGraph};
use crate::wmd::DecomposedLayer;

use super::layer::{simulate_layer, SimOptions, SimReport};

/// Symmetric per-tensor requantization of real activations to `bits`:
/// returns the integers and the scale, `x ≈ q * scale`. Halves round to even.
pub fn requantize(x: &[f64], bits: u32) -> (Vec<i32>, f64) {
    let qmax = ((1_i64 << (bits - 1)) - 1) as f64;
    let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { peak / qmax } else { 1.0 };
    let q = x
        .iter()
        .map(|&v| (v / scale).round_ties_even().clamp(-qmax - 1.0, qmax) as i32)
        .collect();
    (q, scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSimReport {
    /// Final-layer output in the real domain.
    pub scores: Vec<f64>,
    /// Per decomposed layer, in execution order.
    pub layers: Vec<(usize, SimReport)>,
    /// Counters summed over `layers` (no output).
    pub totals: SimReport,
}

/// Runs `model` with every layer in `dls` executed on the simulated array and
/// the remaining layers on the reference executor.
pub fn simulate_model(
    model: &ModelGraph,
    dls: &[DecomposedLayer],
    acc: &AcceleratorConfig,
    cal: &CostCalibration,
    input: &[f64],
    opts: &SimOptions,
) -> Result<ModelSimReport> {
    for (i, dl) in dls.iter().enumerate() {
        model.layer(dl.layer_index)?;
        if dls[..i].iter().any(|d| d.layer_index == dl.layer_index) {
            return Err(Error::InvalidConfig(format!("layer {} decomposed twice", dl.layer_index)));
        }
    }
    let mut layers = Vec::new();
    let mut totals = SimReport::default();
    let scores = forward_with(model, input, |i, x| {
        let Some(dl) = dls.iter().find(|d| d.layer_index == i) else {
            return Ok(None);
        };
        let layer = &model.layers()[i];
        let (q, in_scale) = requantize(x, cal.activation_bw);
        let rep = simulate_layer(layer, &model.geometry(i), dl, acc, cal, &q, opts)?;
        let co = layer.channels.1;
        let s = in_scale * dl.scale;
        let y = rep
            .output
            .iter()
            .enumerate()
            .map(|(j, &v)| v as f64 * s + layer.bias.as_ref().map_or(0.0, |b| b[j % co]))
            .collect();
        totals.absorb(&rep);
        layers.push((i, rep));
        Ok(Some(y))
    })?;
    Ok(ModelSimReport { scores, layers, totals })
}

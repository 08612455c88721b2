use crate::error::{Error, Result};
use crate::store::{LayerKind, ModelGraph};
use crate::wmd::DecomposedLayer;

use super::resources::AcceleratorConfig;

/// The loop bounds of one conv/dense layer as seen by the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerWork {
    /// K_x·K_y
    pub kernel_area: usize,
    /// O_x·O_y
    pub output_area: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl LayerWork {
    pub fn of(model: &ModelGraph, index: usize) -> Result<Self> {
        let layer = model.layer(index)?;
        if !layer.kind.can_decompose() {
            return Err(Error::NotDecomposable(layer.name.clone()));
        }
        let geo = model.geometry(index);
        let (c_in, c_out) = layer.channels;
        Ok(match layer.kind {
            LayerKind::Dense => Self { kernel_area: 1, output_area: 1, c_in, c_out },
            _ => Self {
                kernel_area: geo.kernel_area(layer),
                output_area: geo.output_area(),
                c_in,
                c_out,
            },
        })
    }

    /// Tiles per kernel position: `ceil(C_in/(S_W PE_x)) ceil(C_out/(M PE_y))`.
    pub fn folds(&self, slice_width: usize, rows: usize, pe_x: usize, pe_y: usize) -> (u64, u64) {
        (
            self.c_in.div_ceil(slice_width * pe_x) as u64,
            self.c_out.div_ceil(rows * pe_y) as u64,
        )
    }
}

/// Cycles per tile for a layer decomposed into `stages` matrices.
pub fn lat_f(stages: usize) -> u64 {
    stages.saturating_sub(1).max(1) as u64
}

/// Stall-free compute cycles of one decomposed layer.
pub fn latency_layer(work: &LayerWork, acc: &AcceleratorConfig, stages: usize) -> Result<u64> {
    if stages == 0 || stages > acc.hard.f_max {
        return Err(Error::InvalidConfig(format!(
            "layer uses {stages} stages, hardware supports 1..={}",
            acc.hard.f_max
        )));
    }
    Ok(work_cycles(work, acc.hard.slice_width, acc.hard.rows, acc.pe_x, acc.pe_y, lat_f(stages)))
}

/// The shared latency skeleton `Lat_F K_xy O_xy ceil(..) ceil(..)`.
pub fn work_cycles(w: &LayerWork, slice_width: usize, rows: usize, pe_x: usize, pe_y: usize, lat_f: u64) -> u64 {
    let (fx, fy) = w.folds(slice_width, rows, pe_x, pe_y);
    lat_f * (w.kernel_area * w.output_area) as u64 * fx * fy
}

/// One decomposed layer's place in a model: which layer and how many stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StagePlan {
    pub layer_index: usize,
    pub stages: usize,
}

pub fn plan_of(dls: &[DecomposedLayer]) -> Vec<StagePlan> {
    dls.iter()
        .map(|d| StagePlan { layer_index: d.layer_index, stages: d.config.stages })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyEstimate {
    /// Sum over the decomposed layers.
    pub cycles_total: u64,
    pub layer_indices: Vec<usize>,
    pub per_layer_cycles: Vec<u64>,
    pub lat_f_per_layer: Vec<u64>,
    /// Conv/dense layers left undecomposed, charged on a co-resident MAC array
    /// share when one is configured (0 otherwise). Not part of `cycles_total`.
    pub undecomposed_cycles: u64,
}

/// Latency of the decomposed layers in `plan`; undecomposed conv/dense layers
/// are charged to `mac_share` when given.
pub fn latency_accl(
    model: &ModelGraph,
    plan: &[StagePlan],
    acc: &AcceleratorConfig,
    mac_share: Option<(usize, usize)>,
) -> Result<LatencyEstimate> {
    let mut est = LatencyEstimate {
        cycles_total: 0,
        layer_indices: Vec::with_capacity(plan.len()),
        per_layer_cycles: Vec::with_capacity(plan.len()),
        lat_f_per_layer: Vec::with_capacity(plan.len()),
        undecomposed_cycles: 0,
    };
    for p in plan {
        let c = latency_layer(&LayerWork::of(model, p.layer_index)?, acc, p.stages)?;
        est.layer_indices.push(p.layer_index);
        est.per_layer_cycles.push(c);
        est.lat_f_per_layer.push(lat_f(p.stages));
        est.cycles_total += c;
    }
    let rest: Vec<usize> = model
        .layers()
        .iter()
        .enumerate()
        .filter(|(i, l)| l.kind.can_decompose() && !plan.iter().any(|p| p.layer_index == *i))
        .map(|(i, _)| i)
        .collect();
    match mac_share {
        Some((px, py)) => est.undecomposed_cycles = baseline_sa_latency(model, &rest, px, py)?,
        None if !rest.is_empty() => log::warn!(
            "{} conv/dense layers are not decomposed and are charged 0 cycles",
            rest.len()
        ),
        None => {}
    }
    Ok(est)
}

/// Cycles of `layers` on a `pe_x x pe_y` array of 8-bit MAC units
/// (`S_W = M = 1`, one cycle per tile).
pub fn baseline_sa_latency(model: &ModelGraph, layers: &[usize], pe_x: usize, pe_y: usize) -> Result<u64> {
    if pe_x == 0 || pe_y == 0 {
        return Err(Error::InvalidConfig("empty MAC array".into()));
    }
    layers.iter().try_fold(0u64, |acc, &i| {
        Ok(acc + work_cycles(&LayerWork::of(model, i)?, 1, 1, pe_x, pe_y, 1))
    })
}

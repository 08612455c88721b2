//! PE-grid mapping: grow the row width `PE_x` while one row of PEs fits the
//! LUT budget, fill the remaining budget with rows, keep the fastest grid.

use crate::error::{Error, Result};
use crate::store::{CostCalibration, ModelGraph};

use super::latency::{latency_layer, work_cycles, LayerWork, StagePlan};
use super::resources::{pe_cost, AcceleratorConfig, HardParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mapping {
    pub pe_x: usize,
    pub pe_y: usize,
    pub cycles: u64,
}

/// The mapping loop over abstract costs. `row_cost(PE_x)` is the LUT cost of
/// one row; `latency(PE_x, PE_y)` the cycles of the grid. Only a strictly
/// better latency replaces the incumbent, so the first grid found wins ties.
/// `PE_x` stops at `max_pe_x`.
pub fn alg1(
    lut_max: u64,
    max_pe_x: usize,
    row_cost: impl Fn(usize) -> u64,
    mut latency: impl FnMut(usize, usize) -> Result<u64>,
) -> Result<Mapping> {
    let mut best: Option<Mapping> = None;
    let mut pe_x = 1;
    while pe_x <= max_pe_x {
        let r = row_cost(pe_x);
        if r == 0 || r > lut_max {
            break;
        }
        let pe_y = (lut_max / r) as usize;
        let cycles = latency(pe_x, pe_y)?;
        if best.is_none_or(|b| cycles < b.cycles) {
            best = Some(Mapping { pe_x, pe_y, cycles });
        }
        pe_x += 1;
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no feasible grid: one PE costs {} LUTs, LUT_max is {lut_max}",
            row_cost(1)
        ))
    })
}

/// Beyond this width every C_in fits in one fold, so wider rows cannot help:
/// the row count only shrinks.
fn saturation(works: &[LayerWork], slice_width: usize) -> usize {
    works
        .iter()
        .map(|w| w.c_in.div_ceil(slice_width))
        .max()
        .unwrap_or(1)
        .max(1)
}

/// Fastest grid for the decomposed layers in `plan` under `LUT_max`.
pub fn map_pes(
    model: &ModelGraph,
    plan: &[StagePlan],
    hard: &HardParams,
    cal: &CostCalibration,
) -> Result<Mapping> {
    let works = plan
        .iter()
        .map(|p| LayerWork::of(model, p.layer_index).map(|w| (w, p.stages)))
        .collect::<Result<Vec<_>>>()?;
    map_works(&works, hard, cal)
}

/// [`map_pes`] over precomputed layer bounds.
pub fn map_works(works: &[(LayerWork, usize)], hard: &HardParams, cal: &CostCalibration) -> Result<Mapping> {
    let pe = pe_cost(hard, cal);
    let only: Vec<LayerWork> = works.iter().map(|w| w.0).collect();
    alg1(
        cal.lut_max,
        saturation(&only, hard.slice_width),
        |px| px as u64 * pe,
        |pe_x, pe_y| {
            let acc = AcceleratorConfig { hard: *hard, pe_x, pe_y };
            works
                .iter()
                .try_fold(0u64, |s, (w, p)| Ok(s + latency_layer(w, &acc, *p)?))
        },
    )
}

/// Mapping of the 8-bit MAC baseline array; its cycles are `Lat_std`.
pub fn map_baseline(model: &ModelGraph, layers: &[usize], cal: &CostCalibration) -> Result<Mapping> {
    let works = layers
        .iter()
        .map(|&i| LayerWork::of(model, i))
        .collect::<Result<Vec<_>>>()?;
    let mac = cal.r_mac.eval(cal.weight_bw, cal.activation_bw);
    alg1(
        cal.lut_max,
        saturation(&works, 1),
        |px| px as u64 * mac,
        |pe_x, pe_y| Ok(works.iter().map(|w| work_cycles(w, 1, 1, pe_x, pe_y, 1)).sum()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_trace() {
        // R_PE_x = 30 PE_x, LUT_max = 100, C_in = C_out = 8, S_W = M = 4
        let w = LayerWork { kernel_area: 1, output_area: 1, c_in: 8, c_out: 8 };
        let mut seen = Vec::new();
        let m = alg1(100, usize::MAX, |px| 30 * px as u64, |px, py| {
            let c = work_cycles(&w, 4, 4, px, py, 1);
            seen.push((px, py, c));
            Ok(c)
        })
        .unwrap();
        assert_eq!(seen, vec![(1, 3, 2), (2, 1, 2), (3, 1, 2)]);
        assert_eq!(m, Mapping { pe_x: 1, pe_y: 3, cycles: 2 });
    }

    #[test]
    fn infeasible_budget() {
        let r = alg1(10, usize::MAX, |px| 30 * px as u64, |_, _| Ok(1));
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }
}

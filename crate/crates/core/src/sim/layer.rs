//! Cycle-level model of one layer on the PE grid.
//!
//! Loop order (weight-stationary):
//!
//! ```text
//! for co_fold in 0..ceil(C_out / (M PE_y))        // output-channel tile
//!   for k in 0..K_x K_y                           // kernel position
//!     for ci_fold in 0..ceil(C_in / (S_W PE_x))   // input-channel tile
//!       load F elements into every PE
//!       for pixel in 0..O_x O_y                   // Lat_F cycles each
//!         PE(px, py): S_W inputs -> M partial sums (F0 + F_gen passes)
//!         x-axis adders reduce px, output buffer accumulates
//! ```

use crate::error::{Error, Result};
use crate::hw::{lat_f, AcceleratorConfig, LayerWork};
use crate::store::{CostCalibration, FeatureShape, LayerGeometry, LayerKind, LayerSpec};
use crate::wmd::{slice_product_i32, DecomposedLayer, MatrixMode, OverflowPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Wrap and count 32-bit overflows instead of failing.
    pub count_overflow: bool,
    /// Fail when a layer's working set exceeds the BRAM buffers.
    pub check_capacity: bool,
    /// Record one event line per cycle group.
    pub trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { count_overflow: false, check_capacity: true, trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimReport {
    /// Raw 32-bit accumulators, HWC.
    pub output: Vec<i32>,
    pub output_shape: (usize, usize, usize),
    pub compute_cycles: u64,
    pub load_cycles: u64,
    /// x-axis adder pipeline fill/drain, one register per hop.
    pub fill_drain_cycles: u64,
    /// Input elements read from the column buffers (padding is generated in
    /// the PEs and not read).
    pub buffer_reads: u64,
    /// Outputs committed to the output buffer.
    pub buffer_writes: u64,
    pub overflow_events: u64,
    pub trace: Vec<String>,
}

impl SimReport {
    pub fn total_cycles(&self) -> u64 {
        self.compute_cycles + self.load_cycles + self.fill_drain_cycles
    }

    /// Adds another layer's counters (outputs are not merged).
    pub fn absorb(&mut self, other: &SimReport) {
        self.compute_cycles += other.compute_cycles;
        self.load_cycles += other.load_cycles;
        self.fill_drain_cycles += other.fill_drain_cycles;
        self.buffer_reads += other.buffer_reads;
        self.buffer_writes += other.buffer_writes;
        self.overflow_events += other.overflow_events;
    }
}

fn check_match(layer: &LayerSpec, dl: &DecomposedLayer, acc: &AcceleratorConfig) -> Result<()> {
    if !layer.kind.can_decompose() {
        return Err(Error::NotDecomposable(layer.name.clone()));
    }
    if dl.mode != MatrixMode::Accelerator {
        return Err(Error::InvalidConfig(format!(
            "layer `{}` was decomposed in {} mode; the array needs accelerator mode",
            layer.name, dl.mode
        )));
    }
    if !acc.hard.supports(&dl.config) {
        return Err(Error::InvalidConfig(format!(
            "decomposition {} does not fit hardware {}",
            dl.config, acc.hard
        )));
    }
    if acc.pe_x == 0 || acc.pe_y == 0 {
        return Err(Error::InvalidConfig("empty PE grid".into()));
    }
    let (ci, co) = layer.channels;
    let kxy = match layer.kind {
        LayerKind::Dense => 1,
        _ => layer.kernel.0 * layer.kernel.1,
    };
    if (dl.layout.cols, dl.layout.groups, dl.layout.group_rows) != (ci, kxy, co) {
        return Err(Error::Shape(format!(
            "decomposition of layer {} does not match layer `{}`",
            dl.layer_index, layer.name
        )));
    }
    Ok(())
}

fn check_capacity(
    acc: &AcceleratorConfig,
    cal: &CostCalibration,
    input: FeatureShape,
    output: FeatureShape,
) -> Result<()> {
    let cap = cal.bram_capacity_bits;
    let h = &acc.hard;
    // each column buffer holds the channels of the slices mapped to it
    let col_channels = input.c.div_ceil(h.slice_width * acc.pe_x) * h.slice_width;
    let in_bits = (input.h * input.w * col_channels) as u64 * cal.activation_bw as u64;
    if in_bits > cap {
        return Err(Error::BufferCapacity(format!(
            "input column buffer needs {in_bits} bits, one BRAM holds {cap}"
        )));
    }
    let brams_out = (acc.pe_y as u64 * h.rows as u64 * cal.out_bw as u64).div_ceil(cal.bram_bits_per_block);
    let out_bits = (output.h * output.w * acc.pe_y * h.rows) as u64 * cal.out_bw as u64;
    if out_bits > brams_out * cap {
        return Err(Error::BufferCapacity(format!(
            "output tile needs {out_bits} bits, {brams_out} BRAMs hold {}",
            brams_out * cap
        )));
    }
    Ok(())
}

/// Runs one decomposed layer on `input` (integer activations, HWC).
pub fn simulate_layer(
    layer: &LayerSpec,
    geo: &LayerGeometry,
    dl: &DecomposedLayer,
    acc: &AcceleratorConfig,
    cal: &CostCalibration,
    input: &[i32],
    opts: &SimOptions,
) -> Result<SimReport> {
    check_match(layer, dl, acc)?;
    if input.len() != geo.input.len() {
        return Err(Error::Shape(format!(
            "layer `{}` expects {} inputs, got {}",
            layer.name,
            geo.input.len(),
            input.len()
        )));
    }
    let lim = 1_i64 << (cal.activation_bw - 1);
    if let Some(v) = input.iter().find(|&&v| (v as i64) < -lim || (v as i64) >= lim) {
        return Err(Error::InvalidConfig(format!(
            "input value {v} exceeds {} bits",
            cal.activation_bw
        )));
    }
    // dense layers see their flattened input as one pixel of C_in channels
    let (ins, outs, (kx, ky), (sx, sy), (pt, pl)) = match layer.kind {
        LayerKind::Dense => (
            FeatureShape::new(1, 1, geo.input.len()),
            FeatureShape::new(1, 1, layer.channels.1),
            (1, 1),
            (1, 1),
            (0, 0),
        ),
        _ => (geo.input, geo.output, layer.kernel, layer.stride, (geo.pad_top, geo.pad_left)),
    };
    if opts.check_capacity {
        check_capacity(acc, cal, ins, outs)?;
    }

    let h = &acc.hard;
    let (m, sw) = (h.rows, h.slice_width);
    let (pe_x, pe_y) = (acc.pe_x, acc.pe_y);
    let (ci, co) = layer.channels;
    let work = LayerWork { kernel_area: kx * ky, output_area: outs.h * outs.w, c_in: ci, c_out: co };
    let (ci_folds, co_folds) = work.folds(sw, m, pe_x, pe_y);
    let blocks_per_group = dl.layout.blocks_per_group(m);
    let n_slices = dl.slice_count();
    let passes = lat_f(dl.config.stages);
    let policy = if opts.count_overflow { OverflowPolicy::Count } else { OverflowPolicy::Error };

    let mut rep = SimReport {
        output: vec![0; outs.len()],
        output_shape: (outs.h, outs.w, outs.c),
        ..SimReport::default()
    };
    let mut cycle = 0u64;
    let load_per_tile = (pe_y * h.f_max * h.terms * m) as u64;
    let mut x = vec![0_i32; sw];
    let mut row_sum = vec![0_i32; m];

    for cf in 0..co_folds as usize {
        for a in 0..kx {
            for b in 0..ky {
                let k = a * ky + b;
                for xf in 0..ci_folds as usize {
                    rep.load_cycles += load_per_tile;
                    rep.fill_drain_cycles += (pe_x - 1) as u64;
                    if opts.trace {
                        rep.trace.push(format!(
                            "cycle {cycle} load co_fold={cf} k={k} ci_fold={xf} words={}",
                            load_per_tile * pe_x as u64
                        ));
                    }
                    for oy in 0..outs.h {
                        let iy = (oy * sx + a).checked_sub(pt).filter(|&v| v < ins.h);
                        for ox in 0..outs.w {
                            let ix = (ox * sy + b).checked_sub(pl).filter(|&v| v < ins.w);
                            if opts.trace {
                                rep.trace.push(format!(
                                    "cycle {cycle} compute pixel=({oy},{ox}) f0+fgen pass=1/{passes}"
                                ));
                                for p in 2..=passes {
                                    rep.trace.push(format!(
                                        "cycle {} compute pixel=({oy},{ox}) fgen pass={p}/{passes}",
                                        cycle + p - 1
                                    ));
                                }
                            }
                            cycle += passes;
                            rep.compute_cycles += passes;
                            for py in 0..pe_y {
                                let rb = cf * pe_y + py;
                                if rb >= blocks_per_group {
                                    continue;
                                }
                                let block = k * blocks_per_group + rb;
                                row_sum.iter_mut().for_each(|v| *v = 0);
                                for px in 0..pe_x {
                                    let s = xf * pe_x + px;
                                    if s >= n_slices {
                                        continue;
                                    }
                                    let c0 = s * sw;
                                    let width = sw.min(ci - c0);
                                    match (iy, ix) {
                                        (Some(iy), Some(ix)) => {
                                            let base = ins.index(iy, ix, c0);
                                            x[..width].copy_from_slice(&input[base..base + width]);
                                            rep.buffer_reads += width as u64;
                                        }
                                        _ => x[..width].iter_mut().for_each(|v| *v = 0),
                                    }
                                    let part = slice_product_i32(
                                        dl.slice(block, s),
                                        m,
                                        &x[..width],
                                        policy,
                                        &mut rep.overflow_events,
                                    )?;
                                    for (acc_v, p) in row_sum.iter_mut().zip(&part) {
                                        *acc_v = add(*acc_v, *p, policy, &mut rep.overflow_events)?;
                                    }
                                }
                                for (i, &v) in row_sum.iter().enumerate() {
                                    let o = rb * m + i;
                                    if o < co {
                                        let idx = outs.index(oy, ox, o);
                                        rep.output[idx] = add(rep.output[idx], v, policy, &mut rep.overflow_events)?;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.buffer_writes = rep.output.len() as u64;
    if opts.trace {
        rep.trace.push(format!("cycle {cycle} done writes={}", rep.buffer_writes));
    }
    Ok(rep)
}

fn add(a: i32, b: i32, policy: OverflowPolicy, events: &mut u64) -> Result<i32> {
    match a.checked_add(b) {
        Some(v) => Ok(v),
        None if policy == OverflowPolicy::Count => {
            *events += 1;
            Ok(a.wrapping_add(b))
        }
        None => Err(Error::Overflow(format!("output accumulation: {a} + {b}"))),
    }
}

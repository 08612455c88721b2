use std::fmt;

use crate::error::{Error, Result};
use crate::store::CostCalibration;
use crate::wmd::WmdConfig;

/// Parameters fixed when the accelerator is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HardParams {
    pub shifts: usize,
    pub terms: usize,
    pub rows: usize,
    pub slice_width: usize,
    /// Largest stage count any layer may use.
    pub f_max: usize,
}

impl HardParams {
    pub fn new(shifts: usize, terms: usize, rows: usize, slice_width: usize, f_max: usize) -> Result<Self> {
        let h = Self { shifts, terms, rows, slice_width, f_max };
        h.validate()?;
        Ok(h)
    }

    /// Hard parameters of `cfg` with room for `f_max` stages.
    pub fn from_config(cfg: &WmdConfig, f_max: usize) -> Result<Self> {
        Self::new(cfg.shifts, cfg.terms, cfg.rows, cfg.slice_width, f_max)
    }

    pub fn validate(&self) -> Result<()> {
        // reuse the WMD invariants (E >= 2, S_W <= M, ...)
        WmdConfig::new(1, self.shifts, self.terms, self.rows, self.slice_width)?;
        if self.f_max < 2 {
            return Err(Error::InvalidConfig(format!(
                "F_max = {} (the hardware hosts the F0 block and at least one generic stage)",
                self.f_max
            )));
        }
        Ok(())
    }

    /// True when a decomposition was produced for this hardware.
    pub fn supports(&self, cfg: &WmdConfig) -> bool {
        cfg.shifts == self.shifts
            && cfg.terms == self.terms
            && cfg.rows == self.rows
            && cfg.slice_width == self.slice_width
            && cfg.stages <= self.f_max
    }
}

impl fmt::Display for HardParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Z={} E={} M={} S_W={} F_max={}",
            self.shifts, self.terms, self.rows, self.slice_width, self.f_max
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AcceleratorConfig {
    pub hard: HardParams,
    pub pe_x: usize,
    pub pe_y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceEstimate {
    pub luts_total: u64,
    /// LUTs of one row of `PE_x` processing elements.
    pub luts_per_pe_row: u64,
    pub brams_input: u64,
    pub brams_output: u64,
    pub f_elements_fetched: u64,
    /// `luts_total <= LUT_max`
    pub fits: bool,
}

impl ResourceEstimate {
    pub fn brams_total(&self) -> u64 {
        self.brams_input + self.brams_output
    }
}

fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

/// Datapath width for the cost functions: activations plus shift, adder-tree
/// and per-stage growth, capped at the output width.
pub fn datapath_bw(hard: &HardParams, cal: &CostCalibration) -> u32 {
    let growth = (hard.shifts - 1) + hard.f_max * ceil_log2(hard.terms);
    (cal.activation_bw as u64 + growth as u64).min(cal.out_bw as u64) as u32
}

/// `M((E-1)(R_mul + R_mux) + R_add(E))`
pub fn resource_fgen(hard: &HardParams, cal: &CostCalibration) -> u64 {
    let bw = datapath_bw(hard, cal);
    let z = hard.shifts as u32;
    let free = (hard.terms - 1) as u64;
    let per_row = free * (cal.r_mul.eval(z, bw) + cal.r_mux.eval(hard.rows as u32, bw))
        + cal.r_add.eval(hard.terms as u32, bw);
    hard.rows as u64 * per_row
}

/// `M(S_W R_mul + R_add(S_W))`
pub fn resource_f0(hard: &HardParams, cal: &CostCalibration) -> u64 {
    let bw = datapath_bw(hard, cal);
    let z = hard.shifts as u32;
    let per_row = hard.slice_width as u64 * cal.r_mul.eval(z, bw)
        + cal.r_add.eval(hard.slice_width as u32, bw);
    hard.rows as u64 * per_row
}

/// The `M` two-input adders reducing partial sums along the x axis.
pub fn resource_x_adders(hard: &HardParams, cal: &CostCalibration) -> u64 {
    hard.rows as u64 * cal.r_add.eval(2, datapath_bw(hard, cal))
}

/// LUTs of one processing element.
pub fn pe_cost(hard: &HardParams, cal: &CostCalibration) -> u64 {
    resource_f0(hard, cal) + resource_fgen(hard, cal) + resource_x_adders(hard, cal)
}

pub fn resource_accl(acc: &AcceleratorConfig, cal: &CostCalibration) -> ResourceEstimate {
    let h = &acc.hard;
    let (px, py) = (acc.pe_x as u64, acc.pe_y as u64);
    let luts_per_pe_row = px * pe_cost(h, cal);
    let luts_total = py * luts_per_pe_row;
    ResourceEstimate {
        luts_total,
        luts_per_pe_row,
        brams_input: px,
        brams_output: (py * h.rows as u64 * cal.out_bw as u64).div_ceil(cal.bram_bits_per_block),
        f_elements_fetched: px * py * (h.f_max * h.terms * h.rows) as u64,
        fits: luts_total <= cal.lut_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitwidth_growth_and_cap() {
        let cal = CostCalibration::with_lut_max(1000);
        let h = HardParams::new(3, 3, 4, 4, 2).unwrap();
        // 8 + 2 + 2 * 2
        assert_eq!(datapath_bw(&h, &cal), 14);
        let h = HardParams::new(16, 8, 8, 4, 6).unwrap();
        assert_eq!(datapath_bw(&h, &cal), 32);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
    }

    #[test]
    fn rejects_single_stage_hardware() {
        assert!(HardParams::new(3, 3, 4, 4, 1).is_err());
        assert!(HardParams::new(3, 3, 4, 8, 2).is_err());
    }
}

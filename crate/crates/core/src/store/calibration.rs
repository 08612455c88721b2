//! Per-primitive LUT cost table for the resource model.
//!
//! Each primitive cost is `constant + coeff * bw * shape(x)` where `shape`
//! is fixed per primitive, with optional per-point overrides
//! `r_add[n,bw] = value`. Defaults are first-order estimates:
//!
//! | primitive | argument            | default                 |
//! |-----------|---------------------|-------------------------|
//! | `r_mul`   | shift count `Z`     | `bw * ceil(log2(Z+1))`  |
//! | `r_mux`   | fan-in `f`          | `bw * ceil(f/2)`        |
//! | `r_add`   | operand count `n`   | `(n-1) * bw`            |
//! | `r_mac`   | weight bit-width    | `32 + wbw * abw`        |

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{self, Document};

use super::archive::read_text;

pub const DEFAULT_LUT_MAX: u64 = 63_400;
pub const DEFAULT_BRAM_PORT_BITS: u64 = 72;
pub const DEFAULT_BRAM_CAPACITY_BITS: u64 = 36_864;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostShape {
    /// ceil(log2(x + 1))
    Log2Ceil,
    /// ceil(x / 2)
    HalfCeil,
    /// x - 1
    MinusOne,
    /// x
    Linear,
}

impl CostShape {
    fn eval(self, x: u32) -> u64 {
        let x = x as u64;
        match self {
            CostShape::Log2Ceil => 64 - x.leading_zeros() as u64,
            CostShape::HalfCeil => x.div_ceil(2),
            CostShape::MinusOne => x.saturating_sub(1),
            CostShape::Linear => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostFn {
    pub shape: CostShape,
    pub constant: u64,
    pub coeff: u64,
    pub points: BTreeMap<(u32, u32), u64>,
    /// Smallest meaningful first argument.
    pub min_arg: u32,
}

impl CostFn {
    fn new(shape: CostShape, constant: u64, coeff: u64, min_arg: u32) -> Self {
        Self {
            shape,
            constant,
            coeff,
            points: BTreeMap::new(),
            min_arg,
        }
    }

    /// Fixed cost regardless of arguments.
    pub fn constant(shape: CostShape, value: u64, min_arg: u32) -> Self {
        Self::new(shape, value, 0, min_arg)
    }

    pub fn eval(&self, x: u32, bw: u32) -> u64 {
        let x = x.max(self.min_arg);
        if let Some(&v) = self.points.get(&(x, bw)) {
            return v;
        }
        self.constant + self.coeff * bw as u64 * self.shape.eval(x)
    }

    fn validate(&self, name: &str) -> Result<()> {
        for (&(x, bw), &v) in &self.points {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name}[{x},{bw}] = 0 is not a positive cost")));
            }
            if x < self.min_arg || bw == 0 {
                return Err(Error::InvalidConfig(format!("{name}[{x},{bw}] is outside the domain")));
            }
        }
        let max_x = self.points.keys().map(|k| k.0).max().unwrap_or(0).max(64);
        let max_bw = self.points.keys().map(|k| k.1).max().unwrap_or(0).max(64);
        for x in self.min_arg..=max_x {
            for bw in 1..=max_bw {
                let v = self.eval(x, bw);
                if v == 0 {
                    return Err(Error::InvalidConfig(format!("{name}({x},{bw}) = 0 is not a positive cost")));
                }
                if x > self.min_arg && self.eval(x - 1, bw) > v {
                    return Err(Error::InvalidConfig(format!("{name} decreases at ({x},{bw})")));
                }
                if bw > 1 && self.eval(x, bw - 1) > v {
                    return Err(Error::InvalidConfig(format!("{name} decreases at ({x},{bw})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostCalibration {
    /// Po2 shift unit: (Z, bw).
    pub r_mul: CostFn,
    /// Input multiplexer: (fan_in, bw).
    pub r_mux: CostFn,
    /// Adder tree: (operand_count, bw).
    pub r_add: CostFn,
    /// Baseline multiply-accumulate PE: (weight_bw, activation_bw).
    pub r_mac: CostFn,
    pub lut_max: u64,
    /// Summed port width of one BRAM (b_ports).
    pub bram_bits_per_block: u64,
    pub bram_capacity_bits: u64,
    pub out_bw: u32,
    pub activation_bw: u32,
    pub weight_bw: u32,
}

impl CostCalibration {
    pub fn with_lut_max(lut_max: u64) -> Self {
        Self {
            r_mul: CostFn::new(CostShape::Log2Ceil, 0, 1, 1),
            r_mux: CostFn::new(CostShape::HalfCeil, 0, 1, 1),
            r_add: CostFn::new(CostShape::MinusOne, 0, 1, 2),
            r_mac: CostFn::new(CostShape::Linear, 32, 1, 1),
            lut_max,
            bram_bits_per_block: DEFAULT_BRAM_PORT_BITS,
            bram_capacity_bits: DEFAULT_BRAM_CAPACITY_BITS,
            out_bw: 32,
            activation_bw: 8,
            weight_bw: 8,
        }
    }

    /// Calibration with argument-independent primitive costs.
    pub fn constant(r_mul: u64, r_mux: u64, r_add: u64, lut_max: u64) -> Self {
        Self {
            r_mul: CostFn::constant(CostShape::Log2Ceil, r_mul, 1),
            r_mux: CostFn::constant(CostShape::HalfCeil, r_mux, 1),
            r_add: CostFn::constant(CostShape::MinusOne, r_add, 2),
            ..Self::with_lut_max(lut_max)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lut_max == 0 {
            return Err(Error::InvalidConfig("lut_max must be positive".into()));
        }
        if self.bram_bits_per_block == 0 || self.bram_capacity_bits == 0 {
            return Err(Error::InvalidConfig("BRAM widths must be positive".into()));
        }
        if self.out_bw == 0 || self.activation_bw == 0 || self.weight_bw == 0 {
            return Err(Error::InvalidConfig("bit-widths must be positive".into()));
        }
        if self.activation_bw > 16 {
            return Err(Error::InvalidConfig("activation_bw above 16 is unsupported".into()));
        }
        self.r_mul.validate("r_mul")?;
        self.r_mux.validate("r_mux")?;
        self.r_add.validate("r_add")?;
        self.r_mac.validate("r_mac")
    }

    pub fn to_text(&self) -> String {
        let mut w = kv::Writer::new();
        w.comment("po2forge cost calibration")
            .kv("lut_max", self.lut_max)
            .kv("bram_bits_per_block", self.bram_bits_per_block)
            .kv("bram_capacity_bits", self.bram_capacity_bits)
            .kv("out_bw", self.out_bw)
            .kv("activation_bw", self.activation_bw)
            .kv("weight_bw", self.weight_bw);
        for (name, f) in self.cost_fns() {
            w.kv(&format!("{name}.const"), f.constant)
                .kv(&format!("{name}.coeff"), f.coeff);
            for (&(x, bw), v) in &f.points {
                w.kv(&format!("{name}[{x},{bw}]"), v);
            }
        }
        w.finish()
    }

    fn cost_fns(&self) -> [(&'static str, &CostFn); 4] {
        [
            ("r_mul", &self.r_mul),
            ("r_mux", &self.r_mux),
            ("r_add", &self.r_add),
            ("r_mac", &self.r_mac),
        ]
    }
}

/// Parses calibration text. An empty document selects every default
/// (including the default LUT budget); a non-empty one must set `lut_max`.
pub fn parse_calibration(name: &str, text: &str) -> Result<CostCalibration> {
    let doc = Document::parse(name, text, false)?;
    let v = doc.view(doc.root());
    if doc.sections.len() > 1 {
        return Err(v.err(doc.sections[1].line, "calibration files have no sections"));
    }
    let mut cal = CostCalibration::with_lut_max(DEFAULT_LUT_MAX);
    if v.entries().is_empty() {
        return Ok(cal);
    }
    for e in v.entries() {
        let known = matches!(
            e.key.as_str(),
            "lut_max" | "bram_bits_per_block" | "bram_capacity_bits" | "out_bw" | "activation_bw" | "weight_bw"
        ) || ["r_mul", "r_mux", "r_add", "r_mac"]
            .iter()
            .any(|p| e.key.starts_with(p));
        if !known {
            return Err(v.err(e.line, format!("unknown key `{}`", e.key)));
        }
    }
    let lut_max: i64 = v
        .get_opt("lut_max")?
        .ok_or_else(|| Error::InvalidConfig(format!("{name}: missing lut_max")))?;
    cal.lut_max = positive(lut_max, "lut_max")?;
    if let Some(x) = v.get_opt::<i64>("bram_bits_per_block")? {
        cal.bram_bits_per_block = positive(x, "bram_bits_per_block")?;
    }
    if let Some(x) = v.get_opt::<i64>("bram_capacity_bits")? {
        cal.bram_capacity_bits = positive(x, "bram_capacity_bits")?;
    }
    if let Some(x) = v.get_opt::<i64>("out_bw")? {
        cal.out_bw = positive(x, "out_bw")? as u32;
    }
    if let Some(x) = v.get_opt::<i64>("activation_bw")? {
        cal.activation_bw = positive(x, "activation_bw")? as u32;
    }
    if let Some(x) = v.get_opt::<i64>("weight_bw")? {
        cal.weight_bw = positive(x, "weight_bw")? as u32;
    }
    for (prefix, f) in [
        ("r_mul", &mut cal.r_mul),
        ("r_mux", &mut cal.r_mux),
        ("r_add", &mut cal.r_add),
        ("r_mac", &mut cal.r_mac),
    ] {
        if let Some(c) = v.get_opt::<i64>(&format!("{prefix}.const"))? {
            f.constant = non_negative(c, prefix)?;
        }
        if let Some(c) = v.get_opt::<i64>(&format!("{prefix}.coeff"))? {
            f.coeff = non_negative(c, prefix)?;
        }
        for ((x, bw), val) in kv::indexed_pairs(&v, prefix)? {
            if val <= 0 {
                return Err(Error::InvalidConfig(format!(
                    "{prefix}[{x},{bw}] = {val} is not a positive cost"
                )));
            }
            f.points.insert((x, bw), val as u64);
        }
    }
    cal.validate()?;
    Ok(cal)
}

fn positive(v: i64, what: &str) -> Result<u64> {
    if v <= 0 {
        Err(Error::InvalidConfig(format!("{what} must be positive, got {v}")))
    } else {
        Ok(v as u64)
    }
}

fn non_negative(v: i64, what: &str) -> Result<u64> {
    if v < 0 {
        Err(Error::InvalidConfig(format!("{what} coefficients must be non-negative")))
    } else {
        Ok(v as u64)
    }
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<CostCalibration> {
    let path = path.as_ref();
    parse_calibration(&path.display().to_string(), &read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_documented_formulas() {
        let cal = CostCalibration::with_lut_max(100);
        assert_eq!(cal.r_mul.eval(3, 16), 16 * 2);
        assert_eq!(cal.r_mul.eval(4, 16), 16 * 3);
        assert_eq!(cal.r_mux.eval(5, 8), 8 * 3);
        assert_eq!(cal.r_add.eval(3, 32), 64);
        assert_eq!(cal.r_mac.eval(8, 8), 96);
        cal.validate().unwrap();
    }

    #[test]
    fn lut_max_from_file() {
        let cal = parse_calibration("c", "lut_max = 63400\n").unwrap();
        assert_eq!(cal.lut_max, 63400);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let cal = parse_calibration("c", "# nothing\n").unwrap();
        assert_eq!(cal, CostCalibration::with_lut_max(DEFAULT_LUT_MAX));
    }

    #[test]
    fn zero_adder_point_rejected() {
        let err = parse_calibration("c", "lut_max = 1000\nr_add[2,32] = 0\n").unwrap_err();
        assert!(err.to_string().contains("not a positive cost"), "{err}");
    }

    #[test]
    fn partial_file_needs_lut_max() {
        let err = parse_calibration("c", "out_bw = 16\n").unwrap_err();
        assert!(err.to_string().contains("missing lut_max"));
        assert!(parse_calibration("c", "lut_max = 0\n").is_err());
    }

    #[test]
    fn non_monotone_override_rejected() {
        assert!(parse_calibration("c", "lut_max = 10\nr_add[3,32] = 5\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cal = CostCalibration::constant(10, 5, 20, 5000);
        cal.r_mul.points.insert((70, 1), 10);
        let back = parse_calibration("c", &cal.to_text()).unwrap();
        assert_eq!(back, cal);
    }
}

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Decomposition parameters `{P, Z, E, M, S_W}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WmdConfig {
    /// Number of stage matrices (P).
    pub stages: usize,
    /// Number of supported right-shift amounts (Z): exponents 0..Z-1.
    pub shifts: usize,
    /// Nonzero terms per row of a generic stage, diagonal included (E).
    pub terms: usize,
    /// Row-block height (M).
    pub rows: usize,
    /// Slice width (S_W).
    pub slice_width: usize,
}

impl WmdConfig {
    pub fn new(stages: usize, shifts: usize, terms: usize, rows: usize, slice_width: usize) -> Result<Self> {
        let cfg = Self {
            stages,
            shifts,
            terms,
            rows,
            slice_width,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("{self}: {m}")));
        if self.stages == 0 || self.shifts == 0 || self.rows == 0 || self.slice_width == 0 {
            return bad("P, Z, M and S_W must be positive");
        }
        if self.terms < 2 {
            return bad("E must be at least 2");
        }
        if self.slice_width > self.rows {
            return bad("S_W must not exceed M");
        }
        if self.terms > self.rows {
            return bad("E must not exceed M");
        }
        if self.shifts > 31 {
            return bad("Z above 31 cannot be realized as a 32-bit shift");
        }
        Ok(())
    }

    pub fn with_stages(self, stages: usize) -> Self {
        Self { stages, ..self }
    }
}

impl fmt::Display for WmdConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.stages, self.shifts, self.terms, self.rows, self.slice_width
        )
    }
}

/// Parses `P,Z,E,M,SW`.
impl FromStr for WmdConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = crate::kv::parse_list(s).map_err(Error::InvalidConfig)?;
        match parts[..] {
            [p, z, e, m, sw] => WmdConfig::new(p, z, e, m, sw),
            _ => Err(Error::InvalidConfig(format!("expected P,Z,E,M,SW, got `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        let c: WmdConfig = "2,3,3,4,4".parse().unwrap();
        assert_eq!(c, WmdConfig::new(2, 3, 3, 4, 4).unwrap());
        assert_eq!(c.to_string(), "2,3,3,4,4");
        assert!("2,3,3,4,8".parse::<WmdConfig>().is_err());
        assert!("2,3,5,4,4".parse::<WmdConfig>().is_err());
        assert!("2,3,1,4,4".parse::<WmdConfig>().is_err());
        assert!("2,3,3,4".parse::<WmdConfig>().is_err());
    }
}

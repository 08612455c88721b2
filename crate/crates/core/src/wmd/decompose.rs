//! Greedy matching-pursuit decomposition of one `M x S_W` slice into a
//! product of sparse power-of-two stage matrices.
//!
//! The running approximation is `G_p = F_p ... F_1 G_0` with
//! `G_0 = [I_{S_W}; 0]`. Row `m` of a stage is built term by term: each
//! term adds `±2^-z * g_j` (a row of `G_{p-1}`) and is accepted only if it
//! strictly lowers `||w_m - row||`. Stage 1 has no diagonal, draws from
//! the first `S_W` rows of `G_0` with each column used at most once, and
//! takes up to `S_W` terms. Later stages start from the fixed diagonal `g_m`
//! and add up to `E - 1` terms. Candidates are scanned in `(j, z, +/-)`
//! order and only a strictly better one replaces the incumbent.

use crate::error::{Error, Result};

use super::config::WmdConfig;
use super::matrix::Matrix;

/// One shift-and-add term: `±2^-shift` times input `col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tap {
    pub col: usize,
    pub shift: u32,
    pub negative: bool,
}

impl Tap {
    pub fn coeff(&self) -> f64 {
        let mag = (-(self.shift as f64)).exp2();
        if self.negative {
            -mag
        } else {
            mag
        }
    }
}

/// Sparse `M x M` Po2 stage. For `diagonal_fixed` stages each row also
/// carries an implicit `+1` at `(r, r)` that is not listed in `taps`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMatrix {
    /// 1-based position in the product.
    pub stage_index: usize,
    pub diagonal_fixed: bool,
    pub taps: Vec<Vec<Tap>>,
}

impl StageMatrix {
    pub fn rows(&self) -> usize {
        self.taps.len()
    }

    /// All `(row, col, coeff)` terms, diagonal first in each row.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (r, taps) in self.taps.iter().enumerate() {
            if self.diagonal_fixed {
                out.push((r, r, 1.0));
            }
            out.extend(taps.iter().map(|t| (r, t.col, t.coeff())));
        }
        out
    }

    /// Dense `M x M` form; repeated columns in a row are summed.
    pub fn to_dense(&self) -> Matrix {
        let m = self.rows();
        let mut d = Matrix::zeros(m, m);
        for (r, c, v) in self.entries() {
            d.set(r, c, d.get(r, c) + v);
        }
        d
    }

    /// Checks the structural constraints the hardware relies on.
    pub fn validate(&self, cfg: &WmdConfig) -> Result<()> {
        let bad = |m: String| Err(Error::Internal(format!("stage {}: {m}", self.stage_index)));
        if self.rows() != cfg.rows {
            return bad(format!("{} rows, expected {}", self.rows(), cfg.rows));
        }
        for (r, taps) in self.taps.iter().enumerate() {
            for t in taps {
                if t.shift as usize >= cfg.shifts {
                    return bad(format!("row {r}: shift {} outside 0..{}", t.shift, cfg.shifts));
                }
                if t.col >= cfg.rows {
                    return bad(format!("row {r}: column {} out of range", t.col));
                }
            }
            if self.stage_index == 1 {
                if self.diagonal_fixed {
                    return bad("first stage has no fixed diagonal".into());
                }
                if taps.len() > cfg.slice_width {
                    return bad(format!("row {r}: {} terms exceed S_W", taps.len()));
                }
                let mut cols: Vec<usize> = taps.iter().map(|t| t.col).collect();
                if cols.iter().any(|&c| c >= cfg.slice_width) {
                    return bad(format!("row {r}: first-stage column outside S_W"));
                }
                cols.sort_unstable();
                if cols.windows(2).any(|w| w[0] == w[1]) {
                    return bad(format!("row {r}: first-stage column repeated"));
                }
            } else {
                if !self.diagonal_fixed {
                    return bad("generic stage without fixed diagonal".into());
                }
                if taps.len() + 1 > cfg.terms {
                    return bad(format!("row {r}: {} terms exceed E", taps.len() + 1));
                }
            }
        }
        Ok(())
    }

    /// Applies the stage to the rows of `prev` (an `M x k` matrix).
    pub fn apply_rows(&self, prev: &Matrix) -> Matrix {
        let mut next = Matrix::zeros(prev.rows(), prev.cols());
        for (r, taps) in self.taps.iter().enumerate() {
            let row = next.row_mut(r);
            if self.diagonal_fixed {
                row.copy_from_slice(prev.row(r));
            }
            for t in taps {
                add_scaled(row, t.coeff(), prev.row(t.col));
            }
        }
        next
    }
}

#[inline]
fn add_scaled(row: &mut [f64], c: f64, src: &[f64]) {
    for (a, b) in row.iter_mut().zip(src) {
        *a += c * b;
    }
}

#[inline]
fn sq_err(target: &[f64], row: &[f64]) -> f64 {
    target
        .iter()
        .zip(row)
        .map(|(w, g)| (w - g) * (w - g))
        .sum()
}

/// Stage list for one slice plus the residual it leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceDecomposition {
    pub stages: Vec<StageMatrix>,
    /// `||W_s - G_P||_F` on the normalized slice.
    pub residual_norm: f64,
}

/// `[I_{S_W}; 0]`
pub fn initial_basis(m: usize, slice_width: usize) -> Matrix {
    let mut g = Matrix::zeros(m, slice_width);
    for i in 0..slice_width.min(m) {
        g.set(i, i, 1.0);
    }
    g
}

impl SliceDecomposition {
    /// The approximation `G_P`.
    pub fn approximation(&self, m: usize, slice_width: usize) -> Matrix {
        self.stages
            .iter()
            .fold(initial_basis(m, slice_width), |g, st| st.apply_rows(&g))
    }
}

/// Best improving term for `target` given the current `row`.
fn best_term(
    target: &[f64],
    row: &[f64],
    current_err: f64,
    basis: &Matrix,
    candidates: impl Iterator<Item = usize>,
    shifts: usize,
    scratch: &mut [f64],
) -> Option<(Tap, f64)> {
    let mut best: Option<(Tap, f64)> = None;
    let mut best_err = current_err;
    for j in candidates {
        let g = basis.row(j);
        for z in 0..shifts {
            for negative in [false, true] {
                let tap = Tap {
                    col: j,
                    shift: z as u32,
                    negative,
                };
                let c = tap.coeff();
                for ((s, r), gv) in scratch.iter_mut().zip(row).zip(g) {
                    *s = *r + c * gv;
                }
                let err = sq_err(target, scratch);
                if err < best_err {
                    best_err = err;
                    best = Some((tap, err));
                }
            }
        }
    }
    best
}

/// Decomposes a normalized slice (`max |w| <= 1`) into `cfg.stages` stages.
pub fn decompose_slice(ws: &Matrix, cfg: &WmdConfig) -> Result<SliceDecomposition> {
    cfg.validate()?;
    let (m, sw) = (cfg.rows, cfg.slice_width);
    if (ws.rows(), ws.cols()) != (m, sw) {
        return Err(Error::Shape(format!(
            "slice is {}x{}, config needs {m}x{sw}",
            ws.rows(),
            ws.cols()
        )));
    }
    let peak = ws.max_abs();
    // NaN fails too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(peak <= 1.0 + 1e-12) {
        return Err(Error::NotNormalized(peak));
    }

    let mut basis = initial_basis(m, sw);
    let mut stages = Vec::with_capacity(cfg.stages);
    let mut scratch = vec![0.0; sw];

    for p in 1..=cfg.stages {
        let first = p == 1;
        let mut next = Matrix::zeros(m, sw);
        let mut taps = Vec::with_capacity(m);
        for r in 0..m {
            let target = ws.row(r);
            let mut row = if first {
                vec![0.0; sw]
            } else {
                basis.row(r).to_vec()
            };
            let mut err = sq_err(target, &row);
            let mut chosen: Vec<Tap> = Vec::new();
            let budget = if first { sw } else { cfg.terms - 1 };
            while chosen.len() < budget {
                let pick = if first {
                    let used = &chosen;
                    best_term(
                        target,
                        &row,
                        err,
                        &basis,
                        (0..sw).filter(|j| used.iter().all(|t| t.col != *j)),
                        cfg.shifts,
                        &mut scratch,
                    )
                } else {
                    best_term(target, &row, err, &basis, 0..m, cfg.shifts, &mut scratch)
                };
                let Some((tap, new_err)) = pick else { break };
                add_scaled(&mut row, tap.coeff(), basis.row(tap.col));
                err = new_err;
                chosen.push(tap);
            }
            next.row_mut(r).copy_from_slice(&row);
            taps.push(chosen);
        }
        stages.push(StageMatrix {
            stage_index: p,
            diagonal_fixed: !first,
            taps,
        });
        basis = next;
    }

    let residual_norm = (0..m)
        .map(|r| sq_err(ws.row(r), basis.row(r)))
        .sum::<f64>()
        .sqrt();
    Ok(SliceDecomposition {
        stages,
        residual_norm,
    })
}

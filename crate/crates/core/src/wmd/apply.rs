//! Decomposed matrix-vector products: slice inputs pass through
//! `F_P ... F_1 G_0` and the per-slice partial sums accumulate into the
//! `M_total` outputs.

use crate::error::{Error, Result};

use super::decompose::SliceDecomposition;
use super::layer::DecomposedLayer;

/// `sgn * floor(x / 2^z)`: an arithmetic right shift with the sign applied
/// after shifting.
#[inline]
pub fn shift_apply(x: i32, shift: u32, negative: bool) -> i32 {
    let shifted = x >> shift;
    if negative {
        // floor(x / 2^z) >= -2^31 / 2^z, so negation only overflows for z = 0
        shifted.wrapping_neg()
    } else {
        shifted
    }
}

fn check_len(dl: &DecomposedLayer, n: usize) -> Result<()> {
    if n != dl.layout.cols {
        return Err(Error::Shape(format!(
            "input has {n} elements, decomposed matrix has {} columns",
            dl.layout.cols
        )));
    }
    Ok(())
}

/// Real-valued `G_P * In` (without the layer scale).
pub fn apply_real(dl: &DecomposedLayer, input: &[f64]) -> Result<Vec<f64>> {
    check_len(dl, input.len())?;
    let (m, sw) = (dl.config.rows, dl.config.slice_width);
    let mut out = vec![0.0; dl.layout.rows];
    let mut v = vec![0.0; m];
    let mut next = vec![0.0; m];
    for b in 0..dl.row_blocks() {
        for s in 0..dl.slice_count() {
            v.iter_mut().for_each(|x| *x = 0.0);
            for (dst, &x) in v.iter_mut().zip(input.iter().skip(s * sw).take(sw)) {
                *dst = x;
            }
            for st in &dl.slice(b, s).stages {
                for (r, taps) in st.taps.iter().enumerate() {
                    let mut acc = if st.diagonal_fixed { v[r] } else { 0.0 };
                    for t in taps {
                        acc += t.coeff() * v[t.col];
                    }
                    next[r] = acc;
                }
                std::mem::swap(&mut v, &mut next);
            }
            for (i, &val) in v.iter().enumerate() {
                if let Some(row) = dl.layout.block_row(m, b, i) {
                    out[row] += val;
                }
            }
        }
    }
    Ok(out)
}

/// How [`slice_product_i32`] treats a 32-bit overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverflowPolicy {
    Error,
    /// Wrap around and count the event.
    Count,
}

#[inline]
fn add_i32(a: i32, b: i32, policy: OverflowPolicy, events: &mut u64, what: &str) -> Result<i32> {
    match a.checked_add(b) {
        Some(v) => Ok(v),
        None if policy == OverflowPolicy::Count => {
            *events += 1;
            Ok(a.wrapping_add(b))
        }
        None => Err(Error::Overflow(format!("{what}: {a} + {b}"))),
    }
}

/// `F_P ... F_1 G_0 x` for one slice in integer arithmetic. `x` holds the
/// slice's inputs (at most `S_W`, missing ones are zero); returns `M` values.
pub fn slice_product_i32(
    slice: &SliceDecomposition,
    m: usize,
    x: &[i32],
    policy: OverflowPolicy,
    events: &mut u64,
) -> Result<Vec<i32>> {
    let mut v = vec![0_i32; m];
    v[..x.len()].copy_from_slice(x);
    let mut next = vec![0_i32; m];
    for st in &slice.stages {
        for (r, taps) in st.taps.iter().enumerate() {
            let mut acc = if st.diagonal_fixed { v[r] } else { 0 };
            for t in taps {
                let term = if t.shift == 0 && t.negative && v[t.col] == i32::MIN {
                    if policy == OverflowPolicy::Error {
                        return Err(Error::Overflow("negating i32::MIN".into()));
                    }
                    *events += 1;
                    i32::MIN
                } else {
                    shift_apply(v[t.col], t.shift, t.negative)
                };
                acc = add_i32(acc, term, policy, events, "stage sum")?;
            }
            next[r] = acc;
        }
        std::mem::swap(&mut v, &mut next);
    }
    Ok(v)
}

/// Integer shift-and-add `G_P * In` with floor shifts and checked 32-bit
/// accumulation.
pub fn apply_integer(dl: &DecomposedLayer, input: &[i32]) -> Result<Vec<i32>> {
    check_len(dl, input.len())?;
    let (m, sw) = (dl.config.rows, dl.config.slice_width);
    let mut out = vec![0_i32; dl.layout.rows];
    let mut events = 0;
    for b in 0..dl.row_blocks() {
        for s in 0..dl.slice_count() {
            let x = &input[s * sw..((s + 1) * sw).min(input.len())];
            let v = slice_product_i32(dl.slice(b, s), m, x, OverflowPolicy::Error, &mut events)?;
            for (i, &val) in v.iter().enumerate() {
                if let Some(row) = dl.layout.block_row(m, b, i) {
                    out[row] = add_i32(out[row], val, OverflowPolicy::Error, &mut events, "slice accumulation")?;
                }
            }
        }
    }
    Ok(out)
}

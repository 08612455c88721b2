use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::store::{LayerKind, LayerSpec, Tensor};

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// How a weight tensor is flattened into an `M_total x N` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixMode {
    /// N = K_x*K_y; row `co*C_in + ci` holds the flattened kernel of one
    /// (output, input) channel pair.
    Kernel,
    /// N = C_in; row `(kx*K_y + ky)*C_out + co`. Each kernel position forms
    /// its own group of C_out rows, matching the systolic-array mapping.
    Accelerator,
}

impl MatrixMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixMode::Kernel => "kernel",
            MatrixMode::Accelerator => "accelerator",
        }
    }
}

impl fmt::Display for MatrixMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatrixMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernel" => Ok(MatrixMode::Kernel),
            "accelerator" => Ok(MatrixMode::Accelerator),
            _ => Err(Error::InvalidConfig(format!("unknown matrix mode `{s}`"))),
        }
    }
}

/// Row organisation of a transformed weight matrix. Rows come in `groups`
/// consecutive groups of `group_rows`; row blocks of height M never cross
/// a group boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatrixLayout {
    pub rows: usize,
    pub cols: usize,
    pub groups: usize,
    pub group_rows: usize,
}

impl MatrixLayout {
    pub fn blocks_per_group(&self, m: usize) -> usize {
        self.group_rows.div_ceil(m)
    }

    pub fn row_blocks(&self, m: usize) -> usize {
        self.groups * self.blocks_per_group(m)
    }

    pub fn slices(&self, slice_width: usize) -> usize {
        self.cols.div_ceil(slice_width)
    }

    /// Matrix row of local row `i` in row block `block`, or `None` for padding.
    pub fn block_row(&self, m: usize, block: usize, i: usize) -> Option<usize> {
        let per = self.blocks_per_group(m);
        let (g, b) = (block / per, block % per);
        let local = b * m + i;
        (local < self.group_rows).then_some(g * self.group_rows + local)
    }
}

fn conv_dims(layer: &LayerSpec) -> Result<(usize, usize, usize, usize)> {
    if !layer.kind.can_decompose() {
        return Err(Error::NotDecomposable(layer.name.clone()));
    }
    let (ci, co) = layer.channels;
    Ok(match layer.kind {
        LayerKind::Dense => (1, 1, ci, co),
        _ => (layer.kernel.0, layer.kernel.1, ci, co),
    })
}

pub fn layout_for(layer: &LayerSpec, mode: MatrixMode) -> Result<MatrixLayout> {
    let (kx, ky, ci, co) = conv_dims(layer)?;
    Ok(match mode {
        MatrixMode::Kernel => MatrixLayout {
            rows: co * ci,
            cols: kx * ky,
            groups: 1,
            group_rows: co * ci,
        },
        MatrixMode::Accelerator => MatrixLayout {
            rows: kx * ky * co,
            cols: ci,
            groups: kx * ky,
            group_rows: co,
        },
    })
}

/// Flattens a conv/dense weight tensor into its `M_total x N` matrix.
pub fn weight_to_mn(layer: &LayerSpec, mode: MatrixMode) -> Result<(Matrix, MatrixLayout)> {
    let (kx, ky, ci, co) = conv_dims(layer)?;
    let layout = layout_for(layer, mode)?;
    let w = layer
        .weights
        .as_ref()
        .ok_or_else(|| Error::Shape(format!("layer `{}` has no weights", layer.name)))?;
    let mut m = Matrix::zeros(layout.rows, layout.cols);
    for a in 0..kx {
        for b in 0..ky {
            for i in 0..ci {
                for o in 0..co {
                    let v = w.data[((a * ky + b) * ci + i) * co + o];
                    let k = a * ky + b;
                    match mode {
                        MatrixMode::Kernel => m.set(o * ci + i, k, v),
                        MatrixMode::Accelerator => m.set(k * co + o, i, v),
                    }
                }
            }
        }
    }
    Ok((m, layout))
}

/// Inverse of [`weight_to_mn`]: rebuilds a weight tensor shaped for `layer`.
pub fn mn_to_weight(matrix: &Matrix, layer: &LayerSpec, mode: MatrixMode) -> Result<Tensor> {
    let (kx, ky, ci, co) = conv_dims(layer)?;
    let layout = layout_for(layer, mode)?;
    if (matrix.rows(), matrix.cols()) != (layout.rows, layout.cols) {
        return Err(Error::Shape(format!(
            "matrix is {}x{}, layer `{}` needs {}x{}",
            matrix.rows(),
            matrix.cols(),
            layer.name,
            layout.rows,
            layout.cols
        )));
    }
    let shape = layer.weight_shape().expect("decomposable kinds carry weights");
    let mut data = vec![0.0; shape.iter().product()];
    for a in 0..kx {
        for b in 0..ky {
            for i in 0..ci {
                for o in 0..co {
                    let k = a * ky + b;
                    data[((a * ky + b) * ci + i) * co + o] = match mode {
                        MatrixMode::Kernel => matrix.get(o * ci + i, k),
                        MatrixMode::Accelerator => matrix.get(k * co + o, i),
                    };
                }
            }
        }
    }
    Tensor::new(shape, data)
}

/// Cuts `w` into `M x S_W` slices, zero-padding the last slice column-wise and
/// each group's last row block row-wise. Result is indexed `[block][slice]`.
pub fn slice_matrix(w: &Matrix, layout: &MatrixLayout, m: usize, slice_width: usize) -> Vec<Vec<Matrix>> {
    let blocks = layout.row_blocks(m);
    let slices = layout.slices(slice_width);
    (0..blocks)
        .map(|b| {
            (0..slices)
                .map(|s| {
                    let mut out = Matrix::zeros(m, slice_width);
                    for i in 0..m {
                        let Some(r) = layout.block_row(m, b, i) else {
                            continue;
                        };
                        for j in 0..slice_width {
                            let c = s * slice_width + j;
                            if c < w.cols() {
                                out.set(i, j, w.get(r, c));
                            }
                        }
                    }
                    out
                })
                .collect()
        })
        .collect()
}

/// Plain layout with a single row group, for matrices not derived from a layer.
pub fn plain_layout(w: &Matrix) -> MatrixLayout {
    MatrixLayout {
        rows: w.rows(),
        cols: w.cols(),
        groups: 1,
        group_rows: w.rows(),
    }
}

/// Reassembles slices produced by [`slice_matrix`], dropping padding.
pub fn unslice(slices: &[Vec<Matrix>], layout: &MatrixLayout, m: usize, slice_width: usize) -> Matrix {
    let mut out = Matrix::zeros(layout.rows, layout.cols);
    for (b, row) in slices.iter().enumerate() {
        for (s, sl) in row.iter().enumerate() {
            for i in 0..m {
                let Some(r) = layout.block_row(m, b, i) else {
                    continue;
                };
                for j in 0..slice_width {
                    let c = s * slice_width + j;
                    if c < layout.cols {
                        out.set(r, c, sl.get(i, j));
                    }
                }
            }
        }
    }
    out
}

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::LayerSpec;

use super::config::WmdConfig;
use super::decompose::{decompose_slice, SliceDecomposition};
use super::matrix::{slice_matrix, unslice, weight_to_mn, Matrix, MatrixLayout, MatrixMode};

/// A layer's weights as per-slice Po2 stage products.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedLayer {
    pub config: WmdConfig,
    pub layer_index: usize,
    pub mode: MatrixMode,
    /// De-normalization factor: `W ≈ scale * G`.
    pub scale: f64,
    pub layout: MatrixLayout,
    /// Row-major over `[block][slice]`.
    pub slices: Vec<SliceDecomposition>,
}

impl DecomposedLayer {
    pub fn row_blocks(&self) -> usize {
        self.layout.row_blocks(self.config.rows)
    }

    pub fn slice_count(&self) -> usize {
        self.layout.slices(self.config.slice_width)
    }

    pub fn slice(&self, block: usize, slice: usize) -> &SliceDecomposition {
        &self.slices[block * self.slice_count() + slice]
    }

    /// `scale * sqrt(sum of squared slice residuals)`, i.e. `||W - Ŵ||_F`.
    pub fn residual_norm(&self) -> f64 {
        self.scale
            * self
                .slices
                .iter()
                .map(|s| s.residual_norm * s.residual_norm)
                .sum::<f64>()
                .sqrt()
    }

    /// Checks slice count and every stage's structural constraints.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Internal(format!("layer scale {} is not positive", self.scale)));
        }
        let expected = self.row_blocks() * self.slice_count();
        if self.slices.len() != expected {
            return Err(Error::Internal(format!(
                "{} slices, layout needs {expected}",
                self.slices.len()
            )));
        }
        for s in &self.slices {
            if s.stages.len() != self.config.stages {
                return Err(Error::Internal(format!(
                    "slice has {} stages, config says {}",
                    s.stages.len(),
                    self.config.stages
                )));
            }
            for (p, st) in s.stages.iter().enumerate() {
                if st.stage_index != p + 1 {
                    return Err(Error::Internal("stage indices out of order".into()));
                }
                st.validate(&self.config)?;
            }
        }
        Ok(())
    }
}

/// Decomposes a normalized matrix slice by slice.
pub fn decompose_matrix(
    w: &Matrix,
    layout: MatrixLayout,
    cfg: &WmdConfig,
    layer_index: usize,
    mode: MatrixMode,
) -> Result<DecomposedLayer> {
    cfg.validate()?;
    let peak = w.max_abs();
    let scale = if peak > 0.0 { peak } else { 1.0 };
    let normalized = w.scaled(1.0 / scale);
    let parts = slice_matrix(&normalized, &layout, cfg.rows, cfg.slice_width);
    let flat: Vec<&Matrix> = parts.iter().flatten().collect();
    let slices = flat
        .par_iter()
        .map(|ws| decompose_slice(ws, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecomposedLayer {
        config: *cfg,
        layer_index,
        mode,
        scale,
        layout,
        slices,
    })
}

/// Decomposes one conv/dense layer.
pub fn decompose_layer(
    layer: &LayerSpec,
    layer_index: usize,
    cfg: &WmdConfig,
    mode: MatrixMode,
) -> Result<DecomposedLayer> {
    let (w, layout) = weight_to_mn(layer, mode)?;
    decompose_matrix(&w, layout, cfg, layer_index, mode)
}

/// Approximate weight matrix `Ŵ = scale * G_P`, padding stripped.
pub fn reconstruct(dl: &DecomposedLayer) -> Matrix {
    let (m, sw) = (dl.config.rows, dl.config.slice_width);
    let n_slices = dl.slice_count();
    let parts: Vec<Vec<Matrix>> = dl
        .slices
        .chunks(n_slices)
        .map(|row| row.iter().map(|s| s.approximation(m, sw)).collect())
        .collect();
    unslice(&parts, &dl.layout, m, sw).scaled(dl.scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{LayerKind, Padding, Tensor};
    use crate::wmd::matrix::plain_layout;

    #[test]
    fn all_zero_layer() {
        let w = Matrix::zeros(5, 3);
        let cfg = WmdConfig::new(2, 2, 2, 4, 2).unwrap();
        let dl = decompose_matrix(&w, plain_layout(&w), &cfg, 0, MatrixMode::Kernel).unwrap();
        assert_eq!(dl.scale, 1.0);
        assert_eq!(dl.residual_norm(), 0.0);
        assert_eq!(reconstruct(&dl), w);
        dl.validate().unwrap();
    }

    #[test]
    fn slice_count_follows_c_in() {
        let l = LayerSpec::weighted(
            "pw",
            LayerKind::PointwiseConv2d,
            (1, 1),
            (1, 1),
            Padding::Valid,
            (8, 4),
            Tensor::new(vec![1, 1, 8, 4], (0..32).map(|v| (v as f64 - 16.0) / 16.0).collect())
                .unwrap(),
            None,
        );
        let cfg = WmdConfig::new(2, 3, 3, 4, 4).unwrap();
        let dl = decompose_layer(&l, 0, &cfg, MatrixMode::Accelerator).unwrap();
        assert_eq!(dl.row_blocks(), 1);
        assert_eq!(dl.slice_count(), 2);
        assert!(dl.slices.iter().all(|s| s.stages.len() == 2));
        dl.validate().unwrap();
    }

    #[test]
    fn exact_layer_reconstructs_exactly() {
        let w = Matrix::from_rows(&[vec![2.0, 0.0, -1.0], vec![0.0, 0.5, 0.0]]).unwrap();
        let cfg = WmdConfig::new(1, 3, 2, 2, 2).unwrap();
        let dl = decompose_matrix(&w, plain_layout(&w), &cfg, 0, MatrixMode::Kernel).unwrap();
        assert_eq!(dl.scale, 2.0);
        assert_eq!(reconstruct(&dl), w);
        assert_eq!(dl.residual_norm(), 0.0);
    }
}

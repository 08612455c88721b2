//! Power-of-two weight matrix decomposition.

mod apply;
mod config;
mod decompose;
mod io;
mod layer;
mod matrix;

pub use apply::{apply_integer, apply_real, shift_apply, slice_product_i32, OverflowPolicy};
pub use config::WmdConfig;
pub use decompose::{decompose_slice, initial_basis, SliceDecomposition, StageMatrix, Tap};
pub use io::{
    decomposed_from_text, decomposed_to_text, layer_file_name, load_decomposed, load_decomposed_set,
    save_decomposed, save_decomposed_set, WMD_FORMAT,
};
pub use layer::{decompose_layer, decompose_matrix, reconstruct, DecomposedLayer};
pub use matrix::{
    layout_for, mn_to_weight, plain_layout, slice_matrix, unslice, weight_to_mn, Matrix,
    MatrixLayout, MatrixMode,
};

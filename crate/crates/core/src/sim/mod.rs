//! Cycle-level, bit-exact simulator of the shift-and-add systolic array.

mod layer;
mod model;

pub use layer::{simulate_layer, SimOptions, SimReport};
pub use model::{requantize, simulate_model, ModelSimReport};

//! Reference inference, weight substitution, accuracy scoring and PTQ.

mod eval;
mod exec;
mod ptq;
mod substitute;

pub use eval::{evaluate_accuracy, predict, EvalResult};
pub use exec::{argmax, forward_with, infer, run_layer};
pub use ptq::{quantize_ptq, quantize_symmetric};
pub use substitute::{substitute_decomposed, substitute_weights};

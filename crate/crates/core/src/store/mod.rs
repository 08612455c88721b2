//! Model, dataset and cost-calibration persistence.

mod archive;
mod calibration;
mod dataset;
mod model;

pub use archive::{load_model, model_manifest, save_model, MODEL_FORMAT};
pub use calibration::{
    load_calibration, parse_calibration, CostCalibration, CostFn, CostShape, DEFAULT_LUT_MAX,
};
pub use dataset::{load_dataset, save_dataset, Dataset, Subset, DATASET_FORMAT, DEFAULT_SEARCH_FRACTION};
pub use model::{
    FeatureShape, LayerGeometry, LayerKind, LayerSpec, ModelGraph, Padding, SkipSource, Tensor,
};

pub(crate) use archive::{read_text, write_bytes};

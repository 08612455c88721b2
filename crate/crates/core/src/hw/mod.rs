//! Analytical LUT/BRAM and latency models of the shift-and-add systolic
//! array, and the PE-grid mapping search.

mod latency;
mod mapping;
mod resources;

pub use latency::{
    baseline_sa_latency, lat_f, latency_accl, latency_layer, plan_of, work_cycles, LatencyEstimate,
    LayerWork, StagePlan,
};
pub use mapping::{alg1, map_baseline, map_pes, map_works, Mapping};
pub use resources::{
    datapath_bw, pe_cost, resource_accl, resource_f0, resource_fgen, resource_x_adders,
    AcceleratorConfig, HardParams, ResourceEstimate,
};

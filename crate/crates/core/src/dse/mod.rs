//! Constrained two-objective search (accuracy drop vs. latency) over WMD
//! accelerator and decomposition parameters.

mod fitness;
mod nsga;
mod pareto;
mod space;

pub use fitness::{Fitness, WmdFitness};
pub use nsga::{
    exhaustive_front, explore, load_ga_config, parse_ga_config, Crossover, ExploreResult, GaParams,
    GenerationStats,
};
pub use pareto::{
    dominates, front_hypervolume, hypervolume_2d, pareto_filter, pareto_filter_pairs, Constraints,
    Objectives, ParetoPoint, UNMAPPABLE_VIOLATION,
};
pub use space::{design_space_size, load_space, parse_space, Decoded, DesignSpace, HARD_GENES};

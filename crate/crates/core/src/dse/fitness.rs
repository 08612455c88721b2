use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::hw::{map_works, resource_accl, AcceleratorConfig, HardParams, LayerWork};
use crate::infer::{evaluate_accuracy, substitute_decomposed, EvalResult};
use crate::store::{CostCalibration, Dataset, ModelGraph, Subset};
use crate::wmd::{decompose_layer, DecomposedLayer, MatrixMode, WmdConfig};

use super::pareto::Objectives;
use super::space::{Decoded, DesignSpace};

/// Objective evaluation of one decoded genome.
pub trait Fitness: Sync {
    fn evaluate(&self, decoded: &Decoded) -> Result<Objectives>;
}

type DecompKey = (usize, WmdConfig);

/// Decompose, reconstruct and score on the search split; map with the PE
/// mapping search and take its latency.
pub struct WmdFitness<'a> {
    pub model: &'a ModelGraph,
    pub dataset: &'a Dataset,
    pub calibration: &'a CostCalibration,
    pub baseline: EvalResult,
    pub subset: Subset,
    works: HashMap<usize, LayerWork>,
    cache: Mutex<HashMap<DecompKey, Arc<DecomposedLayer>>>,
}

impl<'a> WmdFitness<'a> {
    pub fn new(
        model: &'a ModelGraph,
        dataset: &'a Dataset,
        calibration: &'a CostCalibration,
        space: &DesignSpace,
    ) -> Result<Self> {
        space.check_model(model)?;
        let subset = Subset::Search;
        let baseline = evaluate_accuracy(model, dataset, subset, None)?;
        let works = space
            .layers
            .iter()
            .map(|&i| LayerWork::of(model, i).map(|w| (i, w)))
            .collect::<Result<_>>()?;
        Ok(Self {
            model,
            dataset,
            calibration,
            baseline,
            subset,
            works,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Decomposition of `layer` under `cfg`, computed once.
    pub fn decomposition(&self, layer: usize, cfg: WmdConfig) -> Result<Arc<DecomposedLayer>> {
        if let Some(d) = self.cache.lock().expect("cache lock").get(&(layer, cfg)) {
            return Ok(d.clone());
        }
        let d = Arc::new(decompose_layer(self.model.layer(layer)?, layer, &cfg, MatrixMode::Accelerator)?);
        self.cache
            .lock()
            .expect("cache lock")
            .entry((layer, cfg))
            .or_insert(d.clone());
        Ok(d)
    }

    pub fn cached_decompositions(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// The decomposed layers of `d`.
    pub fn decompose(&self, d: &Decoded) -> Result<Vec<DecomposedLayer>> {
        d.stages
            .iter()
            .map(|&(l, p)| Ok((*self.decomposition(l, d.config_for(p)?)?).clone()))
            .collect()
    }
}

impl Fitness for WmdFitness<'_> {
    fn evaluate(&self, d: &Decoded) -> Result<Objectives> {
        let hard = HardParams::new(d.shifts, d.terms, d.rows, d.slice_width, d.f_max());
        let hard = match hard {
            Ok(h) => h,
            // combinations violating E <= M or S_W <= M cannot be built
            Err(Error::InvalidConfig(_)) => {
                return Ok(Objectives { accuracy_drop: 100.0, cycles: None, pe_x: 0, pe_y: 0, luts: 0, brams: 0 })
            }
            Err(e) => return Err(e),
        };
        let dls = self.decompose(d)?;
        let approx = substitute_decomposed(self.model, &dls)?;
        let eval = evaluate_accuracy(&approx, self.dataset, self.subset, Some(&self.baseline))?;
        let works: Vec<(LayerWork, usize)> = d.stages.iter().map(|&(l, p)| (self.works[&l], p)).collect();
        Ok(match map_works(&works, &hard, self.calibration) {
            Ok(m) => {
                let r = resource_accl(&AcceleratorConfig { hard, pe_x: m.pe_x, pe_y: m.pe_y }, self.calibration);
                Objectives {
                    accuracy_drop: eval.accuracy_drop,
                    cycles: Some(m.cycles),
                    pe_x: m.pe_x,
                    pe_y: m.pe_y,
                    luts: r.luts_total,
                    brams: r.brams_total(),
                }
            }
            Err(Error::Infeasible(_)) => Objectives {
                accuracy_drop: eval.accuracy_drop,
                cycles: None,
                pe_x: 0,
                pe_y: 0,
                luts: 0,
                brams: 0,
            },
            Err(e) => return Err(e),
        })
    }
}

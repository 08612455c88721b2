//! C ABI for po2forge.
//!
//! Objects cross the boundary as opaque handles created by `*_load` /
//! `po2_decompose` and released with the matching `*_free`. Every fallible
//! function returns a [`po2_status`]; on failure `po2_last_error` holds a
//! message for the calling thread until its next call into the library.
//!
//! # Safety
//!
//! Pointer arguments must be NULL or valid for the access the function
//! documents; handles must come from this library and not be freed twice.
//! NULL is always detected and reported as `PO2_STATUS_NULL_POINTER`.
#![allow(non_camel_case_types)]
#![allow(clippy::missing_safety_doc)]

use std::ffi::{c_char, CStr};
use std::path::PathBuf;

use po2forge::dse::{design_space_size, DesignSpace};
use po2forge::hw::{latency_layer, map_pes, resource_accl, AcceleratorConfig, HardParams, LayerWork, StagePlan};
use po2forge::infer::{evaluate_accuracy, substitute_decomposed};
use po2forge::store::{
    load_calibration, load_dataset, load_model, CostCalibration, Dataset, ModelGraph, Subset, DEFAULT_LUT_MAX,
};
use po2forge::wmd::{apply_integer, decompose_layer, DecomposedLayer, MatrixMode, WmdConfig};

mod status;

pub use status::po2_status;
use status::{guard, invalid, last_error_ptr, null, Failure};

pub struct po2_model(ModelGraph);
pub struct po2_dataset(Dataset);
pub struct po2_calibration(CostCalibration);
pub struct po2_decomposed(DecomposedLayer);

/// `{P, Z, E, M, S_W}`
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct po2_wmd_config {
    pub stages: u32,
    pub shifts: u32,
    pub terms: u32,
    pub rows: u32,
    pub slice_width: u32,
}

/// Parameters fixed in hardware; `f_max` is the largest stage count.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct po2_hard_params {
    pub shifts: u32,
    pub terms: u32,
    pub rows: u32,
    pub slice_width: u32,
    pub f_max: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct po2_resource_estimate {
    pub luts_total: u64,
    pub luts_per_pe_row: u64,
    pub brams_input: u64,
    pub brams_output: u64,
    pub f_elements_fetched: u64,
    /// LUTs within the calibration's budget
    pub fits: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct po2_mapping {
    pub pe_x: u32,
    pub pe_y: u32,
    pub cycles: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct po2_eval_result {
    pub samples: u64,
    pub correct: u64,
    pub top1_accuracy: f64,
    /// Percentage points below the unmodified model; 0 without substitutions.
    pub accuracy_drop: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct po2_decomposed_info {
    pub layer_index: usize,
    /// Matrix rows (outputs) and columns (inputs) the layer multiplies by.
    pub rows: usize,
    pub cols: usize,
    pub slices: usize,
    pub residual_norm: f64,
    pub scale: f64,
}

/// Number of choices per design parameter and decomposed layers.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct po2_design_space {
    pub shift_choices: usize,
    pub term_choices: usize,
    pub row_choices: usize,
    pub slice_width_choices: usize,
    pub stage_choices: usize,
    pub layers: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum po2_subset {
    Search = 0,
    Final = 1,
    All = 2,
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    match (p.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(null(what)),
        (false, _) => Ok(std::slice::from_raw_parts(p, len)),
    }
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn hard_of(h: &po2_hard_params) -> Result<HardParams, Failure> {
    Ok(HardParams::new(
        h.shifts as usize,
        h.terms as usize,
        h.rows as usize,
        h.slice_width as usize,
        h.f_max as usize,
    )?)
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn po2_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn po2_last_error() -> *const c_char {
    last_error_ptr()
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn po2_status_name(status: po2_status) -> *const c_char {
    let s: &'static str = match status {
        po2_status::Ok => "ok\0",
        po2_status::NullPointer => "null pointer\0",
        po2_status::InvalidArgument => "invalid argument\0",
        po2_status::Io => "i/o error\0",
        po2_status::Format => "malformed input\0",
        po2_status::Overflow => "accumulator overflow\0",
        po2_status::BufferCapacity => "buffer capacity exceeded\0",
        po2_status::Infeasible => "infeasible\0",
        po2_status::Internal => "internal error\0",
        po2_status::Panic => "panic\0",
    };
    s.as_ptr().cast()
}

// ---- models, datasets, calibrations ----

#[no_mangle]
pub unsafe extern "C" fn po2_model_load(path: *const c_char, model: *mut *mut po2_model) -> po2_status {
    guard(|| {
        let slot = out(model, "model")?;
        *slot = std::ptr::null_mut();
        *slot = boxed(po2_model(load_model(path_arg(path, "path")?)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn po2_model_free(model: *mut po2_model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn po2_model_layer_count(model: *const po2_model, count: *mut usize) -> po2_status {
    guard(|| {
        *out(count, "count")? = as_ref(model, "model")?.0.layers().len();
        Ok(())
    })
}

/// Writes up to `capacity` decomposable layer indices to `indices` and the
/// total number to `count`. Pass `indices = NULL, capacity = 0` to query.
#[no_mangle]
pub unsafe extern "C" fn po2_model_decomposable_layers(
    model: *const po2_model,
    indices: *mut usize,
    capacity: usize,
    count: *mut usize,
) -> po2_status {
    guard(|| {
        let layers = as_ref(model, "model")?.0.decomposable_layers();
        *out(count, "count")? = layers.len();
        if capacity > 0 {
            if indices.is_null() {
                return Err(null("indices"));
            }
            let n = capacity.min(layers.len());
            std::ptr::copy_nonoverlapping(layers.as_ptr(), indices, n);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn po2_dataset_load(path: *const c_char, dataset: *mut *mut po2_dataset) -> po2_status {
    guard(|| {
        let slot = out(dataset, "dataset")?;
        *slot = std::ptr::null_mut();
        *slot = boxed(po2_dataset(load_dataset(path_arg(path, "path")?)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn po2_dataset_free(dataset: *mut po2_dataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub unsafe extern "C" fn po2_dataset_len(dataset: *const po2_dataset, len: *mut usize) -> po2_status {
    guard(|| {
        *out(len, "len")? = as_ref(dataset, "dataset")?.0.len();
        Ok(())
    })
}

/// Loads a calibration file; `path = NULL` gives the built-in defaults.
#[no_mangle]
pub unsafe extern "C" fn po2_calibration_load(path: *const c_char, cal: *mut *mut po2_calibration) -> po2_status {
    guard(|| {
        let slot = out(cal, "cal")?;
        *slot = std::ptr::null_mut();
        let c = if path.is_null() {
            CostCalibration::with_lut_max(DEFAULT_LUT_MAX)
        } else {
            load_calibration(path_arg(path, "path")?)?
        };
        *slot = boxed(po2_calibration(c));
        Ok(())
    })
}

/// Default cost functions with the given LUT budget.
#[no_mangle]
pub unsafe extern "C" fn po2_calibration_with_lut_max(lut_max: u64, cal: *mut *mut po2_calibration) -> po2_status {
    guard(|| {
        let slot = out(cal, "cal")?;
        *slot = std::ptr::null_mut();
        let c = CostCalibration::with_lut_max(lut_max);
        c.validate()?;
        *slot = boxed(po2_calibration(c));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn po2_calibration_free(cal: *mut po2_calibration) {
    if !cal.is_null() {
        drop(Box::from_raw(cal));
    }
}

// ---- decomposition ----

/// Decomposes layer `layer` of `model` in the array's matrix layout.
#[no_mangle]
pub unsafe extern "C" fn po2_decompose(
    model: *const po2_model,
    layer: usize,
    config: *const po2_wmd_config,
    decomposed: *mut *mut po2_decomposed,
) -> po2_status {
    guard(|| {
        let slot = out(decomposed, "decomposed")?;
        *slot = std::ptr::null_mut();
        let m = &as_ref(model, "model")?.0;
        let c = as_ref(config, "config")?;
        let cfg = WmdConfig::new(
            c.stages as usize,
            c.shifts as usize,
            c.terms as usize,
            c.rows as usize,
            c.slice_width as usize,
        )?;
        let l = m.layer(layer)?;
        if !l.decomposable {
            return Err(Failure::from(po2forge::error::Error::NotDecomposable(l.name.clone())));
        }
        *slot = boxed(po2_decomposed(decompose_layer(l, layer, &cfg, MatrixMode::Accelerator)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn po2_decomposed_free(decomposed: *mut po2_decomposed) {
    if !decomposed.is_null() {
        drop(Box::from_raw(decomposed));
    }
}

#[no_mangle]
pub unsafe extern "C" fn po2_decomposed_describe(
    decomposed: *const po2_decomposed,
    info: *mut po2_decomposed_info,
) -> po2_status {
    guard(|| {
        let d = &as_ref(decomposed, "decomposed")?.0;
        *out(info, "info")? = po2_decomposed_info {
            layer_index: d.layer_index,
            rows: d.layout.rows,
            cols: d.layout.cols,
            slices: d.slices.len(),
            residual_norm: d.residual_norm(),
            scale: d.scale,
        };
        Ok(())
    })
}

/// Integer shift-and-add product: `input` has `cols` entries, `output`
/// room for `rows` (see `po2_decomposed_info`). Overflow fails the call.
#[no_mangle]
pub unsafe extern "C" fn po2_apply_i32(
    decomposed: *const po2_decomposed,
    input: *const i32,
    input_len: usize,
    output: *mut i32,
    output_len: usize,
) -> po2_status {
    guard(|| {
        let d = &as_ref(decomposed, "decomposed")?.0;
        let x = slice_arg(input, input_len, "input")?;
        if output_len != d.layout.rows {
            return Err(invalid(format!("output has {output_len} entries, the layer produces {}", d.layout.rows)));
        }
        let y = apply_integer(d, x)?;
        if !y.is_empty() {
            if output.is_null() {
                return Err(null("output"));
            }
            std::ptr::copy_nonoverlapping(y.as_ptr(), output, y.len());
        }
        Ok(())
    })
}

// ---- hardware models ----

#[no_mangle]
pub unsafe extern "C" fn po2_resource(
    hard: *const po2_hard_params,
    pe_x: u32,
    pe_y: u32,
    cal: *const po2_calibration,
    estimate: *mut po2_resource_estimate,
) -> po2_status {
    guard(|| {
        let hard = hard_of(as_ref(hard, "hard")?)?;
        let cal = &as_ref(cal, "cal")?.0;
        if pe_x == 0 || pe_y == 0 {
            return Err(invalid("empty PE grid"));
        }
        let r = resource_accl(&AcceleratorConfig { hard, pe_x: pe_x as usize, pe_y: pe_y as usize }, cal);
        *out(estimate, "estimate")? = po2_resource_estimate {
            luts_total: r.luts_total,
            luts_per_pe_row: r.luts_per_pe_row,
            brams_input: r.brams_input,
            brams_output: r.brams_output,
            f_elements_fetched: r.f_elements_fetched,
            fits: r.fits,
        };
        Ok(())
    })
}

/// Compute cycles of one layer decomposed into `stages` matrices.
#[no_mangle]
pub unsafe extern "C" fn po2_latency_layer(
    model: *const po2_model,
    layer: usize,
    hard: *const po2_hard_params,
    pe_x: u32,
    pe_y: u32,
    stages: u32,
    cycles: *mut u64,
) -> po2_status {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let hard = hard_of(as_ref(hard, "hard")?)?;
        if pe_x == 0 || pe_y == 0 {
            return Err(invalid("empty PE grid"));
        }
        let acc = AcceleratorConfig { hard, pe_x: pe_x as usize, pe_y: pe_y as usize };
        *out(cycles, "cycles")? = latency_layer(&LayerWork::of(m, layer)?, &acc, stages as usize)?;
        Ok(())
    })
}

/// Fastest PE grid for `count` layers (`layers[i]` decomposed into
/// `stages[i]` matrices) within the calibration's LUT budget.
#[no_mangle]
pub unsafe extern "C" fn po2_map_pes(
    model: *const po2_model,
    layers: *const usize,
    stages: *const u32,
    count: usize,
    hard: *const po2_hard_params,
    cal: *const po2_calibration,
    mapping: *mut po2_mapping,
) -> po2_status {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let hard = hard_of(as_ref(hard, "hard")?)?;
        let cal = &as_ref(cal, "cal")?.0;
        let plan: Vec<StagePlan> = slice_arg(layers, count, "layers")?
            .iter()
            .zip(slice_arg(stages, count, "stages")?)
            .map(|(&layer_index, &p)| StagePlan { layer_index, stages: p as usize })
            .collect();
        let r = map_pes(m, &plan, &hard, cal)?;
        *out(mapping, "mapping")? = po2_mapping { pe_x: r.pe_x as u32, pe_y: r.pe_y as u32, cycles: r.cycles };
        Ok(())
    })
}

// ---- accuracy and search space ----

/// Top-1 accuracy of `model` with the `count` decomposed layers substituted
/// (none when `count = 0`).
#[no_mangle]
pub unsafe extern "C" fn po2_evaluate(
    model: *const po2_model,
    dataset: *const po2_dataset,
    subset: po2_subset,
    decomposed: *const *const po2_decomposed,
    count: usize,
    result: *mut po2_eval_result,
) -> po2_status {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let ds = &as_ref(dataset, "dataset")?.0;
        let subset = match subset {
            po2_subset::Search => Subset::Search,
            po2_subset::Final => Subset::Final,
            po2_subset::All => Subset::All,
        };
        let dls = slice_arg(decomposed, count, "decomposed")?
            .iter()
            .map(|&p| as_ref(p, "decomposed[i]").map(|d| d.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let base = evaluate_accuracy(m, ds, subset, None)?;
        let r = if dls.is_empty() {
            base
        } else {
            evaluate_accuracy(&substitute_decomposed(m, &dls)?, ds, subset, Some(&base))?
        };
        *out(result, "result")? = po2_eval_result {
            samples: r.samples_evaluated as u64,
            correct: r.correct as u64,
            top1_accuracy: r.top1_accuracy,
            accuracy_drop: r.accuracy_drop,
        };
        Ok(())
    })
}

/// Number of designs in a search space; fails with
/// `PO2_STATUS_OVERFLOW` beyond 64 bits.
#[no_mangle]
pub unsafe extern "C" fn po2_design_space_size(space: *const po2_design_space, size: *mut u64) -> po2_status {
    guard(|| {
        let s = as_ref(space, "space")?;
        // only the number of choices matters
        let list = |n: usize| (1..=n).collect::<Vec<usize>>();
        let ds = DesignSpace::new(
            list(s.shift_choices),
            list(s.term_choices),
            list(s.row_choices),
            list(s.slice_width_choices),
            list(s.stage_choices),
            (0..s.layers).collect(),
        )?;
        let n = design_space_size(&ds)
            .and_then(|n| u64::try_from(n).ok())
            .ok_or_else(|| Failure(po2_status::Overflow, "design space size exceeds 64 bits".into()))?;
        *out(size, "size")? = n;
        Ok(())
    })
}

use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use po2forge::fixture::{toy_fixture, toy_model, TOY_SEED};
use po2forge::hw::{map_pes, HardParams, StagePlan};
use po2forge::infer::evaluate_accuracy;
use po2forge::store::{
    save_dataset, save_model, CostCalibration, FeatureShape, LayerKind, LayerSpec, ModelGraph, Padding, Subset, Tensor,
};
use po2forge::wmd::{apply_integer, decompose_layer, MatrixMode};
use po2forge_ffi::*;

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = po2_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn load(model: &ModelGraph) -> (tempfile::TempDir, *mut po2_model) {
    let dir = tempfile::tempdir().unwrap();
    save_model(model, dir.path()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { po2_model_load(cpath(dir.path()).as_ptr(), &mut m) }, po2_status::Ok);
    (dir, m)
}

const WMD: po2_wmd_config = po2_wmd_config { stages: 2, shifts: 3, terms: 2, rows: 4, slice_width: 2 };

#[test]
fn version_and_status_names() {
    let v = unsafe { CStr::from_ptr(po2_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    let name = unsafe { CStr::from_ptr(po2_status_name(po2_status::BufferCapacity)) };
    assert_eq!(name.to_str().unwrap(), "buffer capacity exceeded");
}

#[test]
fn null_pointers_are_reported() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { po2_model_load(ptr::null(), &mut m) }, po2_status::NullPointer);
    assert!(m.is_null());
    assert!(last_error().contains("path"));
    let mut n = 0usize;
    assert_eq!(unsafe { po2_model_layer_count(ptr::null(), &mut n) }, po2_status::NullPointer);
    assert_eq!(unsafe { po2_resource(ptr::null(), 1, 1, ptr::null(), ptr::null_mut()) }, po2_status::NullPointer);
    // a successful call clears the message
    assert_eq!(unsafe { po2_calibration_load(ptr::null(), &mut ptr::null_mut()) }, po2_status::Ok);
    assert!(po2_last_error().is_null());
    unsafe { po2_model_free(ptr::null_mut()) };
}

#[test]
fn loader_errors_map_to_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = ptr::null_mut();
    let missing = dir.path().join("none");
    assert_eq!(unsafe { po2_model_load(cpath(&missing).as_ptr(), &mut m) }, po2_status::Io);
    std::fs::write(dir.path().join("manifest"), "format = other/1\n").unwrap();
    assert_eq!(unsafe { po2_model_load(cpath(dir.path()).as_ptr(), &mut m) }, po2_status::Format);
    assert!(m.is_null());

    let cal = dir.path().join("cal.txt");
    std::fs::write(&cal, "lut_max = 10\nbogus = 1\n").unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { po2_calibration_load(cpath(&cal).as_ptr(), &mut c) }, po2_status::Format);
}

#[test]
fn decomposition_matches_the_library() {
    let model = toy_model(TOY_SEED);
    let (_dir, m) = load(&model);
    unsafe {
        let mut n = 0usize;
        assert_eq!(po2_model_layer_count(m, &mut n), po2_status::Ok);
        assert_eq!(n, model.layers().len());

        let mut total = 0usize;
        assert_eq!(po2_model_decomposable_layers(m, ptr::null_mut(), 0, &mut total), po2_status::Ok);
        let mut idx = vec![usize::MAX; total];
        assert_eq!(po2_model_decomposable_layers(m, idx.as_mut_ptr(), total, &mut total), po2_status::Ok);
        assert_eq!(idx, model.decomposable_layers());

        let layer = idx[0];
        let mut d = ptr::null_mut();
        assert_eq!(po2_decompose(m, layer, &WMD, &mut d), po2_status::Ok);
        let lib = decompose_layer(&model.layers()[layer], layer, &WMD_LIB.parse().unwrap(), MatrixMode::Accelerator).unwrap();
        let mut info = po2_decomposed_info::default();
        assert_eq!(po2_decomposed_describe(d, &mut info), po2_status::Ok);
        assert_eq!((info.layer_index, info.rows, info.cols), (layer, lib.layout.rows, lib.layout.cols));
        assert_eq!((info.slices, info.residual_norm), (lib.slices.len(), lib.residual_norm()));

        let x: Vec<i32> = (0..info.cols as i32).map(|i| (i * 37) % 255 - 127).collect();
        let mut y = vec![0i32; info.rows];
        assert_eq!(po2_apply_i32(d, x.as_ptr(), x.len(), y.as_mut_ptr(), y.len()), po2_status::Ok);
        assert_eq!(y, apply_integer(&lib, &x).unwrap());
        // wrong output length
        assert_eq!(po2_apply_i32(d, x.as_ptr(), x.len(), y.as_mut_ptr(), y.len() - 1), po2_status::InvalidArgument);

        let non = (0..n).find(|i| !idx.contains(i)).unwrap();
        let mut bad = ptr::null_mut();
        assert_eq!(po2_decompose(m, non, &WMD, &mut bad), po2_status::InvalidArgument);
        assert_eq!(po2_decompose(m, n, &WMD, &mut bad), po2_status::InvalidArgument);
        let zero = po2_wmd_config { stages: 0, ..WMD };
        assert_eq!(po2_decompose(m, layer, &zero, &mut bad), po2_status::InvalidArgument);
        assert!(bad.is_null());

        po2_decomposed_free(d);
        po2_model_free(m);
    }
}

const WMD_LIB: &str = "2,3,2,4,2";

#[test]
fn resources_and_latency_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.txt");
    std::fs::write(&path, CostCalibration::constant(10, 5, 20, 1 << 20).to_text()).unwrap();
    let mut cal = ptr::null_mut();
    assert_eq!(unsafe { po2_calibration_load(cpath(&path).as_ptr(), &mut cal) }, po2_status::Ok);

    // per PE: F0 240 + F-gen 200 + x-adders 4 * 20
    let hard = po2_hard_params { shifts: 3, terms: 3, rows: 4, slice_width: 4, f_max: 2 };
    let mut r = po2_resource_estimate::default();
    assert_eq!(unsafe { po2_resource(&hard, 2, 2, cal, &mut r) }, po2_status::Ok);
    assert_eq!((r.luts_total, r.luts_per_pe_row, r.f_elements_fetched), (2080, 1040, 96));
    assert!(r.fits);
    assert_eq!(unsafe { po2_resource(&hard, 0, 2, cal, &mut r) }, po2_status::InvalidArgument);

    let w = Tensor::zeros(vec![3, 3, 64, 64]);
    let l = LayerSpec::weighted("c", LayerKind::Conv2d, (3, 3), (1, 1), Padding::Same, (64, 64), w, None);
    let model = ModelGraph::new("c64", FeatureShape::new(16, 16, 64), vec![l]).unwrap();
    let (_m_dir, m) = load(&model);
    // 9 positions * 256 pixels * 8 row tiles * 2 column tiles * (P - 1)
    let hard = po2_hard_params { shifts: 3, terms: 3, rows: 8, slice_width: 4, f_max: 3 };
    let mut cycles = 0u64;
    assert_eq!(unsafe { po2_latency_layer(m, 0, &hard, 2, 4, 2, &mut cycles) }, po2_status::Ok);
    assert_eq!(cycles, 36_864);
    assert_eq!(unsafe { po2_latency_layer(m, 0, &hard, 2, 4, 3, &mut cycles) }, po2_status::Ok);
    assert_eq!(cycles, 73_728);
    assert_eq!(unsafe { po2_latency_layer(m, 0, &hard, 2, 4, 4, &mut cycles) }, po2_status::InvalidArgument);

    unsafe {
        po2_model_free(m);
        po2_calibration_free(cal);
    }
}

#[test]
fn mapping_agrees_and_reports_infeasible() {
    let model = toy_model(TOY_SEED);
    let (_dir, m) = load(&model);
    let layers = model.decomposable_layers();
    let stages = vec![2u32; layers.len()];
    let hard = po2_hard_params { shifts: 3, terms: 2, rows: 4, slice_width: 2, f_max: 2 };
    let mut cal = ptr::null_mut();
    unsafe {
        assert_eq!(po2_calibration_with_lut_max(63_400, &mut cal), po2_status::Ok);
        let mut got = po2_mapping::default();
        assert_eq!(po2_map_pes(m, layers.as_ptr(), stages.as_ptr(), layers.len(), &hard, cal, &mut got), po2_status::Ok);
        let plan: Vec<StagePlan> = layers.iter().map(|&layer_index| StagePlan { layer_index, stages: 2 }).collect();
        let want = map_pes(&model, &plan, &HardParams::new(3, 2, 4, 2, 2).unwrap(), &CostCalibration::with_lut_max(63_400)).unwrap();
        assert_eq!((got.pe_x as usize, got.pe_y as usize, got.cycles), (want.pe_x, want.pe_y, want.cycles));
        po2_calibration_free(cal);

        assert_eq!(po2_calibration_with_lut_max(1, &mut cal), po2_status::Ok);
        assert_eq!(po2_map_pes(m, layers.as_ptr(), stages.as_ptr(), layers.len(), &hard, cal, &mut got), po2_status::Infeasible);
        assert!(!last_error().is_empty());
        po2_calibration_free(cal);
        po2_model_free(m);
    }
}

#[test]
fn evaluation_with_substitutions() {
    let (model, ds) = toy_fixture().unwrap();
    let (_dir, m) = load(&model);
    let ds_dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, ds_dir.path()).unwrap();
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(po2_dataset_load(cpath(ds_dir.path()).as_ptr(), &mut d), po2_status::Ok);
        let mut len = 0usize;
        assert_eq!(po2_dataset_len(d, &mut len), po2_status::Ok);
        assert_eq!(len, ds.len());

        let mut base = po2_eval_result::default();
        assert_eq!(po2_evaluate(m, d, po2_subset::Final, ptr::null(), 0, &mut base), po2_status::Ok);
        let want = evaluate_accuracy(&model, &ds, Subset::Final, None).unwrap();
        assert_eq!((base.samples, base.correct), (want.samples_evaluated as u64, want.correct as u64));
        assert_eq!((base.top1_accuracy, base.accuracy_drop), (want.top1_accuracy, 0.0));

        let dls: Vec<*mut po2_decomposed> = model
            .decomposable_layers()
            .into_iter()
            .map(|i| {
                let mut h = ptr::null_mut();
                assert_eq!(po2_decompose(m, i, &WMD, &mut h), po2_status::Ok);
                h
            })
            .collect();
        let consts: Vec<*const po2_decomposed> = dls.iter().map(|&p| p as *const _).collect();
        let mut sub = po2_eval_result::default();
        assert_eq!(po2_evaluate(m, d, po2_subset::Final, consts.as_ptr(), consts.len(), &mut sub), po2_status::Ok);
        let drop = 100.0 * (base.top1_accuracy - sub.top1_accuracy);
        assert!((sub.accuracy_drop - drop).abs() < 1e-9, "{} vs {drop}", sub.accuracy_drop);

        let with_null = [consts[0], ptr::null()];
        assert_eq!(po2_evaluate(m, d, po2_subset::All, with_null.as_ptr(), 2, &mut sub), po2_status::NullPointer);

        dls.into_iter().for_each(|h| po2_decomposed_free(h));
        po2_dataset_free(d);
        po2_model_free(m);
    }
}

#[test]
fn design_space_sizes() {
    let mut n = 0u64;
    let paper = po2_design_space {
        shift_choices: 3,
        term_choices: 3,
        row_choices: 3,
        slice_width_choices: 2,
        stage_choices: 2,
        layers: 12,
    };
    assert_eq!(unsafe { po2_design_space_size(&paper, &mut n) }, po2_status::Ok);
    assert_eq!(n, 54 * 4096);
    let huge = po2_design_space { stage_choices: 9, layers: 40, ..paper };
    assert_eq!(unsafe { po2_design_space_size(&huge, &mut n) }, po2_status::Overflow);
    let empty = po2_design_space { row_choices: 0, ..paper };
    assert_eq!(unsafe { po2_design_space_size(&empty, &mut n) }, po2_status::InvalidArgument);
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/po2forge.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for decl in ["po2_status po2_model_load(", "PO2_STATUS_NULL_POINTER = 1", "typedef struct po2_model po2_model;"] {
        assert!(text.contains(decl), "missing `{decl}`");
    }
    // compile-check when a C compiler is around
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

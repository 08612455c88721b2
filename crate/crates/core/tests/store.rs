use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use po2forge::error::Error;
use po2forge::fixture::{dscnn_model, toy_fixture, toy_model, TOY_SEED};
use po2forge::store::{
    load_calibration, load_dataset, load_model, parse_calibration, save_dataset, save_model, CostCalibration,
    Dataset, FeatureShape, LayerKind,
};

const ONE_CONV: &str = "\
format = po2forge-model/1
name = one
input_shape = 4,4,1
layer_count = 1

[layer 0]
name = conv
kind = conv2d
kernel = 3,3
stride = 1,1
padding = same
channels = 1,2
decomposable = true
weights = conv.w.bin
weights_shape = 3,3,1,2
";

fn write_one_conv(dir: &Path, blob_len: usize) {
    fs::create_dir_all(dir.join("tensors")).unwrap();
    fs::write(dir.join("manifest"), ONE_CONV).unwrap();
    let blob: Vec<u8> = (0..18).flat_map(|i| (i as f32 / 8.0).to_le_bytes()).take(blob_len).collect();
    fs::write(dir.join("tensors/conv.w.bin"), blob).unwrap();
}

/// Every file under `dir` with its bytes.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn minimal_archive() {
    let dir = tempfile::tempdir().unwrap();
    write_one_conv(dir.path(), 72);
    let m = load_model(dir.path()).unwrap();
    assert_eq!(m.layers().len(), 1);
    let w = m.layers()[0].weights.as_ref().unwrap();
    assert_eq!(w.shape, vec![3, 3, 1, 2]);
    assert_eq!(w.data[17], 17.0 / 8.0);
    assert!(m.layers()[0].decomposable);
}

#[test]
fn short_blob_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_one_conv(dir.path(), 71);
    let e = load_model(dir.path()).unwrap_err();
    assert!(matches!(e, Error::TensorLength { expected: 72, found: 71, .. }));
    assert!(e.to_string().contains("tensor length mismatch"));
}

#[test]
fn malformed_manifests_are_rejected() {
    let cases = [
        ONE_CONV.replace("kind = conv2d", "kind = deconv"),
        ONE_CONV.replace("weights_shape = 3,3,1,2", "weights_shape = 3,3,2,1"),
        ONE_CONV.replace("channels = 1,2", "channels = 2,2"),
        ONE_CONV.replace("layer_count = 1", "layer_count = 2"),
        ONE_CONV.replace("format = po2forge-model/1", "format = other/9"),
        // only conv, pointwise and dense layers may be decomposed
        ONE_CONV.replace("kind = conv2d", "kind = depthwise_conv2d"),
    ];
    for text in cases {
        let dir = tempfile::tempdir().unwrap();
        write_one_conv(dir.path(), 72);
        fs::write(dir.path().join("manifest"), &text).unwrap();
        assert!(load_model(dir.path()).is_err(), "accepted:\n{text}");
    }
}

#[test]
fn dscnn_manifest_marks_four_pointwise_layers() {
    let dir = tempfile::tempdir().unwrap();
    save_model(&dscnn_model(3), dir.path()).unwrap();
    let m = load_model(dir.path()).unwrap();
    let d = m.decomposable_layers();
    assert_eq!(d.len(), 4);
    assert!(d.iter().all(|&i| m.layers()[i].kind == LayerKind::PointwiseConv2d && m.layers()[i].decomposable));
}

#[test]
fn archives_round_trip_byte_identical() {
    for model in [toy_model(TOY_SEED), dscnn_model(5)] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        save_model(&model, a.path()).unwrap();
        let back = load_model(a.path()).unwrap();
        assert_eq!(back, model);
        save_model(&back, b.path()).unwrap();
        assert_eq!(tree(a.path()), tree(b.path()));
    }
}

#[test]
fn dataset_round_trip() {
    let (_, ds) = toy_fixture().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_dataset(&ds, a.path()).unwrap();
    let back = load_dataset(a.path()).unwrap();
    assert_eq!(back, ds);
    save_dataset(&back, b.path()).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));
    assert!(Dataset::new(FeatureShape::new(1, 1, 1), 2, vec![0.0], vec![2], 0.1).is_err());
    assert!(Dataset::new(FeatureShape::new(1, 1, 2), 2, vec![0.0], vec![0], 0.1).is_err());
}

#[test]
fn calibration_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cal.txt");
    fs::write(&p, "lut_max = 63400\n").unwrap();
    let cal = load_calibration(&p).unwrap();
    assert_eq!(cal.lut_max, 63_400);
    assert_eq!(cal, CostCalibration::with_lut_max(63_400));

    assert_eq!(parse_calibration("empty", "").unwrap(), CostCalibration::with_lut_max(63_400));
    assert!(parse_calibration("zero", "lut_max = 100\nr_add[2,32] = 0\n").is_err());
    assert!(parse_calibration("missing", "out_bw = 16\n").is_err());
    assert!(parse_calibration("negative", "lut_max = -5\n").is_err());
    assert!(parse_calibration("unknown", "lut_max = 5\nfoo = 1\n").is_err());
    // a point override that makes the adder cheaper with more operands
    assert!(parse_calibration("decreasing", "lut_max = 5\nr_add[3,8] = 1\n").is_err());

    let custom = parse_calibration("c", "lut_max = 900\nr_mul.const = 4\nr_mul.coeff = 0\nr_add[2,16] = 17\n").unwrap();
    assert_eq!(custom.r_mul.eval(3, 12), 4);
    assert_eq!(custom.r_add.eval(2, 16), 17);
    assert_eq!(custom.r_add.eval(2, 8), 8);
    assert_eq!(parse_calibration("again", &custom.to_text()).unwrap(), custom);
}

#[test]
fn default_cost_formulas() {
    let c = CostCalibration::with_lut_max(1);
    // bw * ceil(log2(Z + 1)), bw * ceil(f / 2), (n - 1) * bw
    assert_eq!(c.r_mul.eval(3, 10), 20);
    assert_eq!(c.r_mul.eval(4, 10), 30);
    assert_eq!(c.r_mux.eval(5, 8), 24);
    assert_eq!(c.r_add.eval(4, 16), 48);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use po2forge::cli::tables::{
    read_eval, read_front, read_history, read_plot, read_residuals, write_eval, write_front, write_history,
    write_plot, write_residuals,
};
use po2forge::cli::{run, select_design, EvalRow, FrontRow, PlotRow, ResidualRow, RunManifest};
use po2forge::dse::GenerationStats;
use po2forge::store::{load_model, save_model, FeatureShape, LayerKind, LayerSpec, ModelGraph, Padding, Tensor};
use po2forge::wmd::{decompose_layer, MatrixMode};
use proptest::prelude::*;

const BIN: &str = env!("CARGO_BIN_EXE_po2forge");

fn po2forge(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).env("SOURCE_DATE_EPOCH", "0").output().unwrap()
}

fn cli(args: &[&str]) -> po2forge::error::Result<String> {
    let mut out = Vec::new();
    run(std::iter::once("po2forge").chain(args.iter().copied()), &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn front_row(drop: f64, cycles: u64, feasible: bool) -> FrontRow {
    FrontRow {
        genes: vec![0, 1, 0, 1, 2],
        shifts: 3,
        terms: 3,
        rows: 4,
        slice_width: 4,
        stages: vec![(2, 3)],
        accuracy_drop: drop,
        cycles,
        speedup: 1000.0 / cycles as f64,
        pe_x: 2,
        pe_y: 3,
        luts: 5000,
        brams: 7,
        feasible,
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6, Just(0.0), Just(1.0 / 3.0), Just(f64::MIN_POSITIVE)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn front_and_plot_round_trip(
        rows in prop::collection::vec(
            (prop::collection::vec(0usize..9, 5..9), finite(), any::<u64>(), finite(), any::<bool>(),
             prop::collection::vec((0usize..30, 1usize..5), 1..5)),
            0..6,
        )
    ) {
        let front: Vec<FrontRow> = rows
            .iter()
            .map(|(g, d, c, sp, f, st)| FrontRow {
                genes: g.clone(), accuracy_drop: *d, cycles: *c, speedup: *sp, feasible: *f, stages: st.clone(),
                ..front_row(0.0, 1, true)
            })
            .collect();
        let text = write_front("# po2forge test\n", &front).unwrap();
        prop_assert_eq!(read_front(&text).unwrap(), front.clone());
        let plot: Vec<PlotRow> = front.iter().map(|r| PlotRow { accuracy_drop: r.accuracy_drop, speedup: r.speedup, cycles: r.cycles }).collect();
        prop_assert_eq!(read_plot(&write_plot("", &plot).unwrap()).unwrap(), plot);
    }

    #[test]
    fn eval_residual_history_round_trip(name in "[a-z, \"]{1,8}", a in finite(), b in finite(), n in 0usize..5000, opt in any::<bool>()) {
        let eval = vec![EvalRow { variant: name.clone(), subset: "final".into(), samples: n, correct: n / 2, top1_accuracy: a, accuracy_drop: b }];
        prop_assert_eq!(read_eval(&write_eval("# x\n", &eval).unwrap()).unwrap(), eval);
        let res = vec![ResidualRow { layer: n, name: name.clone(), config: "2,3,3,4,4".into(), slices: n + 1, residual_norm: a.abs(), max_slice_residual: b.abs() }];
        prop_assert_eq!(read_residuals(&write_residuals("", &res).unwrap()).unwrap(), res);
        let hist = vec![GenerationStats {
            generation: n, evaluations: n * 3, front_size: n % 7,
            best_drop: opt.then_some(a), best_cycles: opt.then_some(n as u64), hypervolume: b.abs(),
        }];
        prop_assert_eq!(read_history(&write_history("", &hist).unwrap()).unwrap(), hist);
    }
}

#[test]
fn selection_on_a_hand_front() {
    let rows = [front_row(0.5, 300, true), front_row(1.8, 200, true), front_row(2.5, 100, true)];
    assert_eq!(select_design(&rows, 2.0).unwrap().cycles, 200);
    assert_eq!(select_design(&rows[..1], 2.0).unwrap().cycles, 300);
    assert_eq!(select_design(&rows, 0.1).unwrap_err().exit_code(), 3);
    assert_eq!(select_design(&[], 2.0).unwrap_err().exit_code(), 2);
    // an infeasible row is never selected even within the drop budget
    let rows = [front_row(0.5, 300, true), front_row(0.1, 50, false)];
    assert_eq!(select_design(&rows, 2.0).unwrap().cycles, 300);
}

#[test]
fn report_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pareto.csv");
    let rows = [front_row(0.5, 300, true), front_row(1.8, 200, true), front_row(2.5, 100, true)];
    fs::write(&csv, write_front("", &rows).unwrap()).unwrap();

    let ok = po2forge(&["report", s(&csv)]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(text.contains("latency       200 cycles"), "{text}");
    assert!(RunManifest::parse(&text).is_ok());

    assert_eq!(po2forge(&["report", s(&csv), "--ad-max", "0.1"]).status.code(), Some(3));
    fs::write(&csv, write_front("", &[]).unwrap()).unwrap();
    assert_eq!(po2forge(&["report", s(&csv)]).status.code(), Some(2));
    assert_eq!(po2forge(&["report", "/nonexistent/pareto.csv"]).status.code(), Some(2));
    assert_eq!(po2forge(&["decompose", "--wmd", "1,2,3"]).status.code(), Some(2));
}

#[test]
fn identity_layer_decomposes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let eye: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
    let w = Tensor::new(vec![1, 1, 4, 4], eye).unwrap();
    let l = LayerSpec::weighted("pw", LayerKind::PointwiseConv2d, (1, 1), (1, 1), Padding::Valid, (4, 4), w, None);
    let model = ModelGraph::new("eye", FeatureShape::new(2, 2, 4), vec![l]).unwrap();
    save_model(&model, dir.path().join("model")).unwrap();
    let out = dir.path().join("dec");
    cli(&["decompose", "--model", s(&dir.path().join("model")), "--wmd", "1,2,2,4,4", "--out", s(&out)]).unwrap();
    let rows = read_residuals(&fs::read_to_string(out.join("residuals.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].residual_norm, rows[0].max_slice_residual), (0.0, 0.0));
}

#[test]
fn dscnn_decomposition_report() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    cli(&["fixture", "dscnn", "--out", s(&fx), "--samples", "20"]).unwrap();
    let model_dir = fx.join("model");
    let out = dir.path().join("dec");
    cli(&["decompose", "--model", s(&model_dir), "--wmd", "2,3,3,4,4", "--out", s(&out)]).unwrap();
    let rows = read_residuals(&fs::read_to_string(out.join("residuals.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    let model = load_model(&model_dir).unwrap();
    for r in &rows {
        assert_eq!(r.config, "2,3,3,4,4");
        let dl = decompose_layer(&model.layers()[r.layer], r.layer, &r.config.parse().unwrap(), MatrixMode::Accelerator).unwrap();
        assert_eq!(r.residual_norm, dl.residual_norm());
        assert_eq!(r.slices, dl.slices.len());
    }
}

/// Every file written by the pipeline commands (model and dataset archives
/// aside) starts with a parseable run manifest.
#[test]
fn every_output_carries_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| -> PathBuf { dir.path().join(n) };
    let fx = p("fx");
    cli(&["fixture", "toy", "--out", s(&fx)]).unwrap();
    let (model, ds, cal, space) = (fx.join("model"), fx.join("dataset"), fx.join("calibration.txt"), fx.join("space.txt"));
    fs::write(p("ga.txt"), "population = 8\ngenerations = 2\n").unwrap();
    cli(&["decompose", "--model", s(&model), "--wmd", "2,3,2,4,2", "--out", s(&p("dec"))]).unwrap();
    let dec = p("dec");
    cli(&["eval", "--model", s(&model), "--dataset", s(&ds), "--decomposed", s(&dec), "--out", s(&p("eval.csv"))]).unwrap();
    cli(&["eval", "--model", s(&model), "--dataset", s(&ds), "--ptq-bits", "4", "--out", s(&p("ptq.csv"))]).unwrap();
    cli(&["map", "--model", s(&model), "--decomposed", s(&dec), "--calibration", s(&cal), "--out", s(&p("map.txt"))]).unwrap();
    cli(&["simulate", "--model", s(&model), "--decomposed", s(&dec), "--calibration", s(&cal), "--dataset", s(&ds), "--out", s(&p("sim.txt"))]).unwrap();
    cli(&["explore", "--model", s(&model), "--dataset", s(&ds), "--space", s(&space), "--ga", s(&p("ga.txt")),
        "--calibration", s(&cal), "--ad-max", "100", "--seed", "3", "--out", s(&p("exp"))]).unwrap();
    cli(&["report", s(&p("exp").join("pareto.csv")), "--ad-max", "100", "--out", s(&p("report.txt"))]).unwrap();

    let mut files = vec![cal, space, fx.join("ga.txt"), p("eval.csv"), p("ptq.csv"), p("map.txt"), p("sim.txt"), p("report.txt")];
    for d in [dec, p("exp")] {
        for e in fs::read_dir(d).unwrap() {
            files.push(e.unwrap().path());
        }
    }
    assert!(files.len() >= 14);
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        let m = RunManifest::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        assert!(text.starts_with("# po2forge "), "{}", f.display());
        assert_eq!(m.timestamp, "1970-01-01T00:00:00Z");
        assert_eq!(m.config_hash.len(), 64);
    }
    let eval = read_eval(&fs::read_to_string(p("ptq.csv")).unwrap()).unwrap();
    assert_eq!(eval.iter().map(|r| r.variant.as_str()).collect::<Vec<_>>(), ["baseline", "ptq4"]);
}

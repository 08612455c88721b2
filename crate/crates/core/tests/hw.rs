mod common;

use po2forge::error::Error;
use po2forge::fixture::{toy_calibration, toy_model, TOY_SEED};
use po2forge::hw::{
    baseline_sa_latency, latency_accl, latency_layer, map_works, pe_cost, resource_accl, resource_f0,
    resource_fgen, resource_x_adders, AcceleratorConfig, HardParams, LayerWork, StagePlan,
};
use po2forge::store::{CostCalibration, FeatureShape, LayerKind, LayerSpec, ModelGraph, Padding, Tensor};
use proptest::prelude::*;

use common::*;

fn grid(hard: HardParams, pe_x: usize, pe_y: usize) -> AcceleratorConfig {
    AcceleratorConfig { hard, pe_x, pe_y }
}

/// R_mul = 10, R_mux = 5, R_add = 20 regardless of arguments.
fn flat() -> CostCalibration {
    CostCalibration::constant(10, 5, 20, 1 << 20)
}

#[test]
fn fgen_hand_values() {
    let cal = flat();
    let h = HardParams::new(3, 3, 4, 4, 2).unwrap();
    assert_eq!(resource_fgen(&h, &cal), 4 * (2 * 15 + 20));
    let h8 = HardParams::new(3, 3, 8, 4, 2).unwrap();
    assert_eq!(resource_fgen(&h8, &cal), 2 * resource_fgen(&h, &cal));
}

#[test]
fn f0_hand_values() {
    let cal = flat();
    assert_eq!(resource_f0(&HardParams::new(3, 3, 4, 4, 2).unwrap(), &cal), 240);
    assert_eq!(resource_f0(&HardParams::new(3, 3, 4, 1, 2).unwrap(), &cal), 120);
    let by_e: Vec<u64> = (2..=4).map(|e| resource_f0(&HardParams::new(3, e, 4, 4, 2).unwrap(), &cal)).collect();
    assert!(by_e.iter().all(|&v| v == 240));
}

#[test]
fn accelerator_hand_values() {
    let cal = flat();
    let h = HardParams::new(3, 3, 4, 4, 2).unwrap();
    let r = resource_accl(&grid(h, 2, 2), &cal);
    assert_eq!(r.luts_total, 4 * (240 + 200 + 80));
    assert_eq!(r.luts_per_pe_row, 2 * 520);
    assert_eq!(r.brams_input, 2);
    assert_eq!(r.f_elements_fetched, 96);

    // 4 * 8 * 32 bits over 72-bit ports
    let h = HardParams::new(3, 3, 8, 4, 2).unwrap();
    assert_eq!(resource_accl(&grid(h, 1, 4), &CostCalibration::with_lut_max(1)).brams_output, 15);
    assert!(!resource_accl(&grid(h, 1, 4), &CostCalibration::with_lut_max(1)).fits);
}

fn conv_64() -> LayerWork {
    LayerWork { kernel_area: 9, output_area: 256, c_in: 64, c_out: 64 }
}

#[test]
fn layer_latency_hand_values() {
    let h = HardParams::new(3, 3, 8, 4, 3).unwrap();
    let acc = grid(h, 2, 4);
    assert_eq!(latency_layer(&conv_64(), &acc, 2).unwrap(), 9 * 256 * 8 * 2);
    assert_eq!(latency_layer(&conv_64(), &acc, 2).unwrap(), 36_864);
    assert_eq!(latency_layer(&conv_64(), &acc, 3).unwrap(), 73_728);
    // a single tile per kernel position
    let small = LayerWork { c_in: 8, c_out: 32, ..conv_64() };
    assert_eq!(latency_layer(&small, &acc, 3).unwrap(), 2 * 9 * 256);
    assert!(matches!(latency_layer(&conv_64(), &acc, 4), Err(Error::InvalidConfig(_))));
}

fn conv_64_model() -> ModelGraph {
    let w = Tensor::zeros(vec![3, 3, 64, 64]);
    let l = LayerSpec::weighted("c", LayerKind::Conv2d, (3, 3), (1, 1), Padding::Same, (64, 64), w, None);
    ModelGraph::new("c64", FeatureShape::new(16, 16, 64), vec![l]).unwrap()
}

#[test]
fn baseline_and_speedup() {
    let model = conv_64_model();
    let std = baseline_sa_latency(&model, &[0], 8, 8).unwrap();
    assert_eq!(std, 147_456);
    let acc = grid(HardParams::new(3, 3, 8, 4, 2).unwrap(), 2, 4);
    let plan = [StagePlan { layer_index: 0, stages: 2 }];
    let wmd = latency_accl(&model, &plan, &acc, None).unwrap().cycles_total;
    assert_eq!(std as f64 / wmd as f64, 4.0);
    assert_eq!(baseline_sa_latency(&model, &[], 8, 8).unwrap(), 0);
}

#[test]
fn model_latency_is_the_layer_sum() {
    let model = toy_model(TOY_SEED);
    let acc = grid(HardParams::new(3, 3, 4, 2, 3).unwrap(), 2, 3);
    let layers = model.decomposable_layers();
    let plan: Vec<StagePlan> = layers
        .iter()
        .enumerate()
        .map(|(k, &i)| StagePlan { layer_index: i, stages: 1 + k % 3 })
        .collect();
    let est = latency_accl(&model, &plan, &acc, None).unwrap();
    assert_eq!(est.cycles_total, est.per_layer_cycles.iter().sum::<u64>());
    for (p, c) in plan.iter().zip(&est.per_layer_cycles) {
        let l = &model.layers()[p.layer_index];
        let g = model.geometry(p.layer_index);
        let (kxy, oxy) = if l.kind == LayerKind::Dense { (1, 1) } else { (g.kernel_area(l), g.output_area()) };
        let expect = eq4_cycles(kxy as u64, oxy as u64, l.channels.0 as u64, l.channels.1 as u64, 2, 4, 2, 3, p.stages as u64);
        assert_eq!(*c, expect);
    }
    // dropping a layer from the plan moves it to the MAC share
    let est = latency_accl(&model, &plan[1..], &acc, Some((2, 2))).unwrap();
    let rest = baseline_sa_latency(&model, &layers[..1], 2, 2).unwrap();
    assert_eq!(est.undecomposed_cycles, rest);
}

#[test]
fn no_feasible_grid() {
    let h = HardParams::new(3, 3, 4, 4, 2).unwrap();
    let cal = CostCalibration::constant(10, 5, 20, 519);
    assert_eq!(pe_cost(&h, &cal), 520);
    let r = map_works(&[(conv_64(), 2)], &h, &cal);
    assert!(matches!(r, Err(Error::Infeasible(_))));
}

fn arb_hard() -> impl Strategy<Value = HardParams> {
    (1usize..=4, prop::sample::select(vec![2usize, 4, 8]), 2usize..=5)
        .prop_flat_map(|(z, m, f)| (Just(z), 2..=m, Just(m), 1..=m, Just(f)))
        .prop_map(|(z, e, m, sw, f)| HardParams::new(z, e, m, sw, f).unwrap())
}

fn arb_work() -> impl Strategy<Value = LayerWork> {
    (1usize..=9, 1usize..=64, 1usize..=96, 1usize..=96)
        .prop_map(|(kernel_area, output_area, c_in, c_out)| LayerWork { kernel_area, output_area, c_in, c_out })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn eq1_structure(h in arb_hard(), px in 1usize..=8, py in 1usize..=8) {
        let cal = CostCalibration::with_lut_max(50_000);
        let r = resource_accl(&grid(h, px, py), &cal);
        let per_pe = resource_f0(&h, &cal) + resource_fgen(&h, &cal) + resource_x_adders(&h, &cal);
        prop_assert_eq!(r.luts_total, (px * py) as u64 * per_pe);
        prop_assert_eq!(r.luts_total, py as u64 * r.luts_per_pe_row);
        prop_assert_eq!(r.fits, r.luts_total <= 50_000);
    }

    #[test]
    fn latency_monotone(h in arb_hard(), w in arb_work(), px in 1usize..=6, py in 1usize..=6, p in 1usize..=4) {
        let p = p.min(h.f_max);
        let at = |h: HardParams, w: &LayerWork, px, py, p| latency_layer(w, &grid(h, px, py), p).unwrap();
        let base = at(h, &w, px, py, p);
        prop_assert_eq!(base, eq4_cycles(w.kernel_area as u64, w.output_area as u64, w.c_in as u64, w.c_out as u64,
            h.slice_width as u64, h.rows as u64, px as u64, py as u64, p as u64));
        prop_assert!(at(h, &w, px + 1, py, p) <= base);
        prop_assert!(at(h, &w, px, py + 1, p) <= base);
        if h.slice_width < h.rows {
            let wider = HardParams { slice_width: h.slice_width + 1, ..h };
            prop_assert!(at(wider, &w, px, py, p) <= base);
        }
        let taller = HardParams { rows: h.rows * 2, ..h };
        prop_assert!(at(taller, &w, px, py, p) <= base);
        if p < h.f_max {
            prop_assert!(at(h, &w, px, py, p + 1) >= base);
        }
        for bigger in [
            LayerWork { c_in: w.c_in + 1, ..w },
            LayerWork { c_out: w.c_out + 1, ..w },
            LayerWork { output_area: w.output_area + 1, ..w },
            LayerWork { kernel_area: w.kernel_area + 1, ..w },
        ] {
            prop_assert!(at(h, &bigger, px, py, p) >= base);
        }
    }

    #[test]
    fn mapping_matches_exhaustive(
        h in arb_hard(),
        works in prop::collection::vec((arb_work(), 1usize..=5), 1..4),
        lut_max in 200u64..=10_000,
    ) {
        let works: Vec<(LayerWork, usize)> = works.into_iter().map(|(w, p)| (w, p.min(h.f_max))).collect();
        let cal = CostCalibration::with_lut_max(lut_max);
        let pe = pe_cost(&h, &cal);
        // every width whose single row fits, in increasing order
        let mut best: Option<(usize, usize, u64)> = None;
        let mut px = 1;
        while px as u64 * pe <= lut_max {
            let py = (lut_max / (px as u64 * pe)) as usize;
            let c: u64 = works
                .iter()
                .map(|(w, p)| eq4_cycles(w.kernel_area as u64, w.output_area as u64, w.c_in as u64, w.c_out as u64,
                    h.slice_width as u64, h.rows as u64, px as u64, py as u64, *p as u64))
                .sum();
            if best.is_none_or(|b| c < b.2) {
                best = Some((px, py, c));
            }
            px += 1;
        }
        match (best, map_works(&works, &h, &cal)) {
            (None, Err(Error::Infeasible(_))) => {}
            (Some((x, y, c)), Ok(m)) => prop_assert_eq!((m.pe_x, m.pe_y, m.cycles), (x, y, c)),
            (b, m) => prop_assert!(false, "oracle {:?} vs {:?}", b, m),
        }
    }
}

#[test]
fn toy_calibration_admits_a_grid() {
    let model = toy_model(TOY_SEED);
    let h = HardParams::new(3, 3, 4, 2, 3).unwrap();
    let works: Vec<(LayerWork, usize)> =
        model.decomposable_layers().into_iter().map(|i| (LayerWork::of(&model, i).unwrap(), 2)).collect();
    let m = map_works(&works, &h, &toy_calibration()).unwrap();
    assert!(resource_accl(&grid(h, m.pe_x, m.pe_y), &toy_calibration()).fits);
}

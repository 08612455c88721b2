//! The `po2forge` command-line tool. Every file it writes starts with a
//! [`RunManifest`] header; tabular outputs are CSV.

mod manifest;
pub mod tables;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dse::{explore, load_ga_config, load_space, Constraints, Fitness, GaParams, WmdFitness};
use crate::error::{Error, Result};
use crate::fixture;
use crate::hw::{
    latency_accl, map_baseline, map_pes, plan_of, resource_accl, AcceleratorConfig, HardParams,
};
use crate::infer::{evaluate_accuracy, infer, argmax, quantize_ptq, substitute_decomposed};
use crate::store::{
    load_calibration, load_dataset, load_model, save_dataset, save_model, CostCalibration, Dataset,
    ModelGraph, Subset, DEFAULT_LUT_MAX,
};
use crate::sim::{simulate_model, SimOptions};
use crate::wmd::{decompose_layer, decomposed_to_text, layer_file_name, load_decomposed_set, DecomposedLayer, MatrixMode, WmdConfig};

pub use manifest::RunManifest;
pub use tables::{EvalRow, FrontRow, PlotRow, ResidualRow};

/// Default accuracy-drop budget in percentage points.
pub const DEFAULT_AD_MAX: f64 = 2.0;

#[derive(Debug, Parser)]
#[command(name = "po2forge", version, about = "Power-of-two weight decomposition and accelerator co-design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic model, dataset and search settings.
    Fixture(FixtureArgs),
    /// Decompose conv/dense layers and report residuals.
    Decompose(DecomposeArgs),
    /// Top-1 accuracy of the baseline and an approximated model.
    Eval(EvalArgs),
    /// PE grid, latency and resources of a decomposed model.
    Map(MapArgs),
    /// Run one dataset sample through the simulated array.
    Simulate(SimulateArgs),
    /// NSGA-II search over decomposition and accelerator parameters.
    Explore(ExploreArgs),
    /// Pick the fastest design within the accuracy budget from a front.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FixtureKind {
    Toy,
    Dscnn,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(value_enum)]
    pub kind: FixtureKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset size (default 1000 for toy, 200 for dscnn).
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `P,Z,E,M,SW`
    #[arg(long)]
    pub wmd: WmdConfig,
    /// Layer indices; defaults to every decomposable layer.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    /// Use the per-kernel matrix layout instead of the accelerator's.
    #[arg(long)]
    pub kernel_layout: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory of decomposed layers to substitute.
    #[arg(long, conflicts_with = "ptq_bits")]
    pub decomposed: Option<PathBuf>,
    /// Quantize all weights to this many bits instead.
    #[arg(long)]
    pub ptq_bits: Option<u32>,
    #[arg(long, default_value = "final")]
    pub subset: Subset,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub decomposed: PathBuf,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub lat_std: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub decomposed: PathBuf,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    /// Grid to simulate; the mapping search picks one when absent.
    #[arg(long, requires = "pe_y")]
    pub pe_x: Option<usize>,
    #[arg(long, requires = "pe_x")]
    pub pe_y: Option<usize>,
    /// Count accumulator overflows instead of failing on the first.
    #[arg(long)]
    pub count_overflow: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub ga: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub ad_max: Option<f64>,
    #[arg(long)]
    pub lat_std: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fitness-evaluation threads (0: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Front CSV written by `explore`.
    pub pareto: PathBuf,
    #[arg(long, default_value_t = DEFAULT_AD_MAX)]
    pub ad_max: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command; text meant for
/// the terminal goes to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    execute(&cli.command, stdout)
}

pub fn execute(cmd: &Command, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Fixture(a) => cmd_fixture(a, stdout),
        Command::Decompose(a) => cmd_decompose(a, stdout),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Map(a) => cmd_map(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Explore(a) => cmd_explore(a, stdout),
        Command::Report(a) => cmd_report(a, stdout),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn say(stdout: &mut dyn Write, text: String) -> Result<()> {
    writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn calibration(path: Option<&Path>) -> Result<CostCalibration> {
    match path {
        Some(p) => load_calibration(p),
        None => Ok(CostCalibration::with_lut_max(DEFAULT_LUT_MAX)),
    }
}

fn model_and_dataset(model: &Path, dataset: &Path) -> Result<(ModelGraph, Dataset)> {
    let m = load_model(model)?;
    let ds = load_dataset(dataset)?;
    ds.check_compatible(&m)?;
    Ok((m, ds))
}

/// Shared hard parameters of a decomposed set; `F_max` is its largest P.
pub fn hard_params_of(dls: &[DecomposedLayer]) -> Result<HardParams> {
    let first = dls
        .first()
        .ok_or_else(|| Error::InvalidConfig("no decomposed layers".into()))?;
    let c = first.config;
    if let Some(d) = dls.iter().find(|d| {
        (d.config.shifts, d.config.terms, d.config.rows, d.config.slice_width)
            != (c.shifts, c.terms, c.rows, c.slice_width)
    }) {
        return Err(Error::InvalidConfig(format!(
            "layers {} and {} use different hardware parameters ({} vs {})",
            first.layer_index, d.layer_index, c, d.config
        )));
    }
    let f_max = dls.iter().map(|d| d.config.stages).max().unwrap_or(2);
    HardParams::from_config(&c, f_max.max(2))
}

fn load_decomposed_for(model: &ModelGraph, dir: &Path) -> Result<Vec<DecomposedLayer>> {
    let dls = load_decomposed_set(dir)?;
    if dls.is_empty() {
        return Err(Error::InvalidConfig(format!("no decomposed layers in {}", dir.display())));
    }
    // rejects out-of-range layers and layout mismatches
    substitute_decomposed(model, &dls)?;
    Ok(dls)
}

fn cmd_fixture(a: &FixtureArgs, stdout: &mut dyn Write) -> Result<()> {
    let (model, ds, space, ga, cal) = match a.kind {
        FixtureKind::Toy => {
            let model = fixture::toy_model(fixture::TOY_SEED);
            let n = a.samples.unwrap_or(fixture::TOY_SAMPLES);
            let ds = fixture::teacher_dataset(&model, n, 0.05, fixture::TOY_MARGIN, fixture::TOY_SEED + 1)?
                .with_split_fraction(fixture::TOY_SEARCH_FRACTION)?;
            let space = fixture::toy_space(&model)?;
            let ga = GaParams { population: 40, generations: 20, ..GaParams::default() };
            (model, ds, space, ga, fixture::toy_calibration())
        }
        FixtureKind::Dscnn => {
            let (model, ds) = fixture::dscnn_fixture(a.samples.unwrap_or(200))?;
            let space = crate::dse::DesignSpace::for_model(
                &model,
                vec![2, 3],
                vec![2, 3],
                vec![8, 16],
                vec![4, 8],
                vec![1, 2, 3],
            )?;
            let ga = GaParams { population: 40, generations: 10, ..GaParams::default() };
            (model, ds, space, ga, CostCalibration::with_lut_max(DEFAULT_LUT_MAX))
        }
    };
    save_model(&model, a.out.join("model"))?;
    save_dataset(&ds, a.out.join("dataset"))?;
    let kind = format!("{:?}", a.kind).to_lowercase();
    let m = RunManifest::new("fixture", vec![], &kind, None);
    write_file(&a.out.join("calibration.txt"), &(m.header() + &cal.to_text()))?;
    write_file(&a.out.join("space.txt"), &(m.header() + &space.to_text()))?;
    write_file(&a.out.join("ga.txt"), &(m.header() + &ga.to_text()))?;
    say(stdout, format!("wrote {kind} fixture ({} samples) to {}", ds.len(), a.out.display()))
}

fn cmd_decompose(a: &DecomposeArgs, stdout: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let layers = a.layers.clone().unwrap_or_else(|| model.decomposable_layers());
    if layers.is_empty() {
        return Err(Error::InvalidConfig("model has no decomposable layers".into()));
    }
    let mode = if a.kernel_layout { MatrixMode::Kernel } else { MatrixMode::Accelerator };
    let config = format!("wmd = {}\nmode = {mode}\nlayers = {:?}\n", a.wmd, layers);
    let man = RunManifest::new("decompose", vec![("model".into(), path_str(&a.model))], &config, None);
    let mut rows = Vec::with_capacity(layers.len());
    for &i in &layers {
        let layer = model.layer(i)?;
        if !layer.decomposable {
            return Err(Error::NotDecomposable(layer.name.clone()));
        }
        let dl = decompose_layer(layer, i, &a.wmd, mode)?;
        write_file(&a.out.join(layer_file_name(i)), &(man.header() + &decomposed_to_text(&dl)))?;
        rows.push(ResidualRow {
            layer: i,
            name: layer.name.clone(),
            config: a.wmd.to_string(),
            slices: dl.slices.len(),
            residual_norm: dl.residual_norm(),
            max_slice_residual: dl.slices.iter().map(|s| s.residual_norm).fold(0.0, f64::max),
        });
    }
    write_file(&a.out.join("residuals.csv"), &tables::write_residuals(&man.header(), &rows)?)?;
    for r in &rows {
        say(stdout, format!("layer {:>3} {:<12} residual {:.6}", r.layer, r.name, r.residual_norm))?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let (model, ds) = model_and_dataset(&a.model, &a.dataset)?;
    let mut inputs = vec![("model".into(), path_str(&a.model)), ("dataset".into(), path_str(&a.dataset))];
    let base = evaluate_accuracy(&model, &ds, a.subset, None)?;
    let mut rows = vec![EvalRow::new("baseline", a.subset.as_str(), &base)];
    let variant = if let Some(dir) = &a.decomposed {
        inputs.push(("decomposed".into(), path_str(dir)));
        let dls = load_decomposed_for(&model, dir)?;
        Some(("wmd".to_string(), substitute_decomposed(&model, &dls)?))
    } else if let Some(bits) = a.ptq_bits {
        Some((format!("ptq{bits}"), quantize_ptq(&model, bits)?))
    } else {
        None
    };
    if let Some((name, m)) = &variant {
        let r = evaluate_accuracy(m, &ds, a.subset, Some(&base))?;
        rows.push(EvalRow::new(name, a.subset.as_str(), &r));
    }
    let config = format!("subset = {}\nptq_bits = {:?}\n", a.subset.as_str(), a.ptq_bits);
    let man = RunManifest::new("eval", inputs, &config, None);
    emit(a.out.as_deref(), &tables::write_eval(&man.header(), &rows)?, stdout)
}

fn cmd_map(a: &MapArgs, stdout: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let cal = calibration(a.calibration.as_deref())?;
    let dls = load_decomposed_for(&model, &a.decomposed)?;
    let hard = hard_params_of(&dls)?;
    let plan = plan_of(&dls);
    let layers: Vec<usize> = plan.iter().map(|p| p.layer_index).collect();
    let mapping = map_pes(&model, &plan, &hard, &cal)?;
    let acc = AcceleratorConfig { hard, pe_x: mapping.pe_x, pe_y: mapping.pe_y };
    let res = resource_accl(&acc, &cal);
    let lat = latency_accl(&model, &plan, &acc, None)?;
    let (lat_std, baseline_grid) = match a.lat_std {
        Some(l) => (l, None),
        None => {
            let b = map_baseline(&model, &layers, &cal)?;
            (b.cycles, Some((b.pe_x, b.pe_y)))
        }
    };
    let mut inputs = vec![("model".into(), path_str(&a.model)), ("decomposed".into(), path_str(&a.decomposed))];
    if let Some(c) = &a.calibration {
        inputs.push(("calibration".into(), path_str(c)));
    }
    let man = RunManifest::new("map", inputs, &format!("{}lat_std = {:?}\n", cal.to_text(), a.lat_std), None);
    let mut s = man.header();
    s += &format!("hardware = {hard}\n");
    s += &format!("pe_x = {}\npe_y = {}\ncycles = {}\n", mapping.pe_x, mapping.pe_y, mapping.cycles);
    s += &format!("luts = {}\nlut_max = {}\n", res.luts_total, cal.lut_max);
    s += &format!("brams_input = {}\nbrams_output = {}\n", res.brams_input, res.brams_output);
    s += &format!("f_elements_fetched = {}\n", res.f_elements_fetched);
    s += &format!("lat_std = {lat_std}\n");
    if let Some((px, py)) = baseline_grid {
        s += &format!("baseline_grid = {px}x{py}\n");
    }
    s += &format!("speedup = {}\n", lat_std as f64 / mapping.cycles.max(1) as f64);
    for ((l, c), f) in lat.layer_indices.iter().zip(&lat.per_layer_cycles).zip(&lat.lat_f_per_layer) {
        s += &format!("layer.{l} = {c} cycles, lat_f {f}\n");
    }
    emit(a.out.as_deref(), &s, stdout)
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let (model, ds) = model_and_dataset(&a.model, &a.dataset)?;
    let cal = calibration(a.calibration.as_deref())?;
    let dls = load_decomposed_for(&model, &a.decomposed)?;
    let hard = hard_params_of(&dls)?;
    let (pe_x, pe_y) = match (a.pe_x, a.pe_y) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            let m = map_pes(&model, &plan_of(&dls), &hard, &cal)?;
            (m.pe_x, m.pe_y)
        }
    };
    if pe_x == 0 || pe_y == 0 {
        return Err(Error::InvalidConfig("PE grid dimensions must be positive".into()));
    }
    if a.sample >= ds.len() {
        return Err(Error::InvalidConfig(format!("sample {} outside dataset of {}", a.sample, ds.len())));
    }
    let acc = AcceleratorConfig { hard, pe_x, pe_y };
    let opts = SimOptions { count_overflow: a.count_overflow, ..SimOptions::default() };
    let rep = simulate_model(&model, &dls, &acc, &cal, ds.sample(a.sample), &opts)?;
    let reference = infer(&substitute_decomposed(&model, &dls)?, ds.sample(a.sample))?;
    let analytic = latency_accl(&model, &plan_of(&dls), &acc, None)?;
    let inputs = vec![
        ("model".into(), path_str(&a.model)),
        ("decomposed".into(), path_str(&a.decomposed)),
        ("dataset".into(), path_str(&a.dataset)),
    ];
    let config = format!("{}grid = {pe_x}x{pe_y}\nsample = {}\ncount_overflow = {}\n", cal.to_text(), a.sample, a.count_overflow);
    let man = RunManifest::new("simulate", inputs, &config, None);
    let t = &rep.totals;
    let mut s = man.header();
    s += &format!("grid = {pe_x}x{pe_y}\nsample = {}\nlabel = {}\n", a.sample, ds.label(a.sample));
    s += &format!("predicted = {}\nreference_predicted = {}\n", argmax(&rep.scores), argmax(&reference));
    s += &format!("compute_cycles = {}\nanalytic_cycles = {}\n", t.compute_cycles, analytic.cycles_total);
    s += &format!("load_cycles = {}\nfill_drain_cycles = {}\ntotal_cycles = {}\n", t.load_cycles, t.fill_drain_cycles, t.total_cycles());
    s += &format!("buffer_reads = {}\nbuffer_writes = {}\noverflow_events = {}\n", t.buffer_reads, t.buffer_writes, t.overflow_events);
    for (l, r) in &rep.layers {
        s += &format!(
            "layer.{l} = compute {} load {} fill_drain {} reads {} writes {}\n",
            r.compute_cycles, r.load_cycles, r.fill_drain_cycles, r.buffer_reads, r.buffer_writes
        );
    }
    emit(a.out.as_deref(), &s, stdout)
}

fn cmd_explore(a: &ExploreArgs, stdout: &mut dyn Write) -> Result<()> {
    let (model, ds) = model_and_dataset(&a.model, &a.dataset)?;
    let cal = calibration(a.calibration.as_deref())?;
    let space = load_space(&a.space, &model)?;
    let (mut ga, file_ad, file_lat) = match &a.ga {
        Some(p) => load_ga_config(p)?,
        None => (GaParams::default(), None, None),
    };
    if let Some(s) = a.seed {
        ga.seed = s;
    }
    if let Some(j) = a.jobs {
        ga.jobs = j;
    }
    let ad_max = a.ad_max.or(file_ad).unwrap_or(DEFAULT_AD_MAX);
    let lat_std = match a.lat_std.or(file_lat) {
        Some(l) => l,
        None => map_baseline(&model, &space.layers, &cal)?.cycles,
    };
    let constraints = Constraints { ad_max, lat_std };
    let fitness = WmdFitness::new(&model, &ds, &cal, &space)?;
    let result = explore(&space, &fitness as &dyn Fitness, constraints, &ga)?;

    let mut inputs = vec![
        ("model".into(), path_str(&a.model)),
        ("dataset".into(), path_str(&a.dataset)),
        ("space".into(), path_str(&a.space)),
    ];
    for (role, p) in [("ga", &a.ga), ("calibration", &a.calibration)] {
        if let Some(p) = p {
            inputs.push((role.into(), path_str(p)));
        }
    }
    let config = format!(
        "{}{}{}ad_max = {ad_max}\nlat_std = {lat_std}\n",
        space.to_text(),
        ga.to_text(),
        cal.to_text()
    );
    let man = RunManifest::new("explore", inputs, &config, Some(ga.seed));
    let rows: Vec<FrontRow> = result.front.iter().map(FrontRow::from).collect();
    let plot: Vec<PlotRow> = rows
        .iter()
        .map(|r| PlotRow { accuracy_drop: r.accuracy_drop, speedup: r.speedup, cycles: r.cycles })
        .collect();
    write_file(&a.out.join("pareto.csv"), &tables::write_front(&man.header(), &rows)?)?;
    write_file(&a.out.join("plot.csv"), &tables::write_plot(&man.header(), &plot)?)?;
    write_file(&a.out.join("history.csv"), &tables::write_history(&man.header(), &result.history)?)?;
    if rows.is_empty() {
        log::warn!("no feasible design found; the front is empty");
    }
    say(
        stdout,
        format!(
            "{} front points after {} generations ({} designs evaluated), Lat_std = {lat_std}, Ad_max = {ad_max}",
            rows.len(),
            result.generations_run,
            result.evaluations
        ),
    )
}

/// Fastest design with `accuracy_drop <= ad_max`; ties go to the smaller
/// drop, then to the earlier row.
pub fn select_design(rows: &[FrontRow], ad_max: f64) -> Result<&FrontRow> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("front is empty".into()));
    }
    rows.iter()
        .filter(|r| r.feasible && r.accuracy_drop <= ad_max)
        .min_by(|a, b| a.cycles.cmp(&b.cycles).then(a.accuracy_drop.total_cmp(&b.accuracy_drop)))
        .ok_or_else(|| {
            Error::Infeasible(format!("none of the {} designs keeps the accuracy drop within {ad_max} pp", rows.len()))
        })
}

fn cmd_report(a: &ReportArgs, stdout: &mut dyn Write) -> Result<()> {
    let rows = tables::read_front(&tables::read_file(&a.pareto)?)?;
    let best = select_design(&rows, a.ad_max)?;
    let stages: Vec<String> = best.stages.iter().map(|(l, p)| format!("layer {l}: P={p}")).collect();
    let man = RunManifest::new(
        "report",
        vec![("pareto".into(), path_str(&a.pareto))],
        &format!("ad_max = {}\n", a.ad_max),
        None,
    );
    let mut s = man.header();
    s += &format!("selected design (fastest with accuracy drop <= {} pp, {} candidates)\n", a.ad_max, rows.len());
    s += &format!("  hardware      Z={} E={} M={} S_W={}\n", best.shifts, best.terms, best.rows, best.slice_width);
    s += &format!("  stages        {}\n", stages.join(", "));
    s += &format!("  accuracy drop {} pp\n", best.accuracy_drop);
    s += &format!("  latency       {} cycles\n", best.cycles);
    s += &format!("  speed-up      {:.4}\n", best.speedup);
    s += &format!("  PE grid       {} x {}\n", best.pe_x, best.pe_y);
    s += &format!("  resources     {} LUTs, {} BRAMs\n", best.luts, best.brams);
    emit(a.out.as_deref(), &s, stdout)
}

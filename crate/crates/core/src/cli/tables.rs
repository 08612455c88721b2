//! CSV tables written by the commands, each with a reader that recovers the
//! rows exactly (floats are printed in shortest round-trip form).

use std::path::Path;

use crate::dse::{GenerationStats, ParetoPoint};
use crate::error::{Error, Result};
use crate::infer::EvalResult;

fn csv_err(e: csv::Error) -> Error {
    Error::format("csv", e.to_string())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::format("csv", format!("missing column `{name}`")))?;
    raw.parse()
        .map_err(|_| Error::format("csv", format!("bad `{name}` value `{raw}`")))
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<Option<T>> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rec, i, name).map(Some),
    }
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `header` followed by `rows` as CSV after the comment `preamble`.
fn render(preamble: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?;
    Ok(preamble.to_string() + &String::from_utf8(body).expect("csv of utf-8 fields"))
}

/// Rows of `text` after skipping `#` comments, checking the header.
fn records(text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let got = r.headers().map_err(csv_err)?;
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::format("csv", format!("unexpected header {:?}", got.iter().collect::<Vec<_>>())));
    }
    r.records().map(|x| x.map_err(csv_err)).collect()
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One Pareto-front design.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontRow {
    pub genes: Vec<usize>,
    pub shifts: usize,
    pub terms: usize,
    pub rows: usize,
    pub slice_width: usize,
    /// `(layer, P_l)`
    pub stages: Vec<(usize, usize)>,
    pub accuracy_drop: f64,
    pub cycles: u64,
    pub speedup: f64,
    pub pe_x: usize,
    pub pe_y: usize,
    pub luts: u64,
    pub brams: u64,
    pub feasible: bool,
}

impl From<&ParetoPoint> for FrontRow {
    fn from(p: &ParetoPoint) -> Self {
        Self {
            genes: p.genes.clone(),
            shifts: p.decoded.shifts,
            terms: p.decoded.terms,
            rows: p.decoded.rows,
            slice_width: p.decoded.slice_width,
            stages: p.decoded.stages.clone(),
            accuracy_drop: p.accuracy_drop,
            cycles: p.cycles,
            speedup: p.speedup,
            pe_x: p.pe_x,
            pe_y: p.pe_y,
            luts: p.luts,
            brams: p.brams,
            feasible: p.feasible,
        }
    }
}

const FRONT_HEADER: [&str; 14] = [
    "genome", "z", "e", "m", "sw", "stages", "accuracy_drop", "cycles", "speedup", "pe_x", "pe_y", "luts",
    "brams", "feasible",
];

fn join_with<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

pub fn write_front(preamble: &str, rows: &[FrontRow]) -> Result<String> {
    render(
        preamble,
        &FRONT_HEADER,
        rows.iter().map(|r| {
            vec![
                join_with(&r.genes, " "),
                r.shifts.to_string(),
                r.terms.to_string(),
                r.rows.to_string(),
                r.slice_width.to_string(),
                r.stages.iter().map(|(l, p)| format!("{l}:{p}")).collect::<Vec<_>>().join(" "),
                r.accuracy_drop.to_string(),
                r.cycles.to_string(),
                r.speedup.to_string(),
                r.pe_x.to_string(),
                r.pe_y.to_string(),
                r.luts.to_string(),
                r.brams.to_string(),
                r.feasible.to_string(),
            ]
        }),
    )
}

pub fn read_front(text: &str) -> Result<Vec<FrontRow>> {
    let bad = |what: &str| Error::format("csv", format!("bad `{what}` value"));
    records(text, &FRONT_HEADER)?
        .iter()
        .map(|rec| {
            let genes = rec[0]
                .split_whitespace()
                .map(|g| g.parse().map_err(|_| bad("genome")))
                .collect::<Result<_>>()?;
            let stages = rec[5]
                .split_whitespace()
                .map(|s| {
                    let (l, p) = s.split_once(':').ok_or_else(|| bad("stages"))?;
                    Ok((l.parse().map_err(|_| bad("stages"))?, p.parse().map_err(|_| bad("stages"))?))
                })
                .collect::<Result<_>>()?;
            Ok(FrontRow {
                genes,
                shifts: field(rec, 1, "z")?,
                terms: field(rec, 2, "e")?,
                rows: field(rec, 3, "m")?,
                slice_width: field(rec, 4, "sw")?,
                stages,
                accuracy_drop: field(rec, 6, "accuracy_drop")?,
                cycles: field(rec, 7, "cycles")?,
                speedup: field(rec, 8, "speedup")?,
                pe_x: field(rec, 9, "pe_x")?,
                pe_y: field(rec, 10, "pe_y")?,
                luts: field(rec, 11, "luts")?,
                brams: field(rec, 12, "brams")?,
                feasible: field(rec, 13, "feasible")?,
            })
        })
        .collect()
}

/// Accuracy-drop vs. speed-up pairs of a front, for plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRow {
    pub accuracy_drop: f64,
    pub speedup: f64,
    pub cycles: u64,
}

const PLOT_HEADER: [&str; 3] = ["accuracy_drop", "speedup", "cycles"];

pub fn write_plot(preamble: &str, rows: &[PlotRow]) -> Result<String> {
    render(
        preamble,
        &PLOT_HEADER,
        rows.iter()
            .map(|r| vec![r.accuracy_drop.to_string(), r.speedup.to_string(), r.cycles.to_string()]),
    )
}

pub fn read_plot(text: &str) -> Result<Vec<PlotRow>> {
    records(text, &PLOT_HEADER)?
        .iter()
        .map(|rec| {
            Ok(PlotRow {
                accuracy_drop: field(rec, 0, "accuracy_drop")?,
                speedup: field(rec, 1, "speedup")?,
                cycles: field(rec, 2, "cycles")?,
            })
        })
        .collect()
}

/// One evaluated model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub variant: String,
    pub subset: String,
    pub samples: usize,
    pub correct: usize,
    pub top1_accuracy: f64,
    pub accuracy_drop: f64,
}

impl EvalRow {
    pub fn new(variant: &str, subset: &str, r: &EvalResult) -> Self {
        Self {
            variant: variant.to_string(),
            subset: subset.to_string(),
            samples: r.samples_evaluated,
            correct: r.correct,
            top1_accuracy: r.top1_accuracy,
            accuracy_drop: r.accuracy_drop,
        }
    }
}

const EVAL_HEADER: [&str; 6] = ["variant", "subset", "samples", "correct", "top1_accuracy", "accuracy_drop"];

pub fn write_eval(preamble: &str, rows: &[EvalRow]) -> Result<String> {
    render(
        preamble,
        &EVAL_HEADER,
        rows.iter().map(|r| {
            vec![
                r.variant.clone(),
                r.subset.clone(),
                r.samples.to_string(),
                r.correct.to_string(),
                r.top1_accuracy.to_string(),
                r.accuracy_drop.to_string(),
            ]
        }),
    )
}

pub fn read_eval(text: &str) -> Result<Vec<EvalRow>> {
    records(text, &EVAL_HEADER)?
        .iter()
        .map(|rec| {
            Ok(EvalRow {
                variant: rec[0].to_string(),
                subset: field(rec, 1, "subset")?,
                samples: field(rec, 2, "samples")?,
                correct: field(rec, 3, "correct")?,
                top1_accuracy: field(rec, 4, "top1_accuracy")?,
                accuracy_drop: field(rec, 5, "accuracy_drop")?,
            })
        })
        .collect()
}

/// Per-layer decomposition error.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub layer: usize,
    pub name: String,
    pub config: String,
    pub slices: usize,
    /// Frobenius residual over all normalized slices.
    pub residual_norm: f64,
    pub max_slice_residual: f64,
}

const RESIDUAL_HEADER: [&str; 6] = ["layer", "name", "config", "slices", "residual_norm", "max_slice_residual"];

pub fn write_residuals(preamble: &str, rows: &[ResidualRow]) -> Result<String> {
    render(
        preamble,
        &RESIDUAL_HEADER,
        rows.iter().map(|r| {
            vec![
                r.layer.to_string(),
                r.name.clone(),
                r.config.clone(),
                r.slices.to_string(),
                r.residual_norm.to_string(),
                r.max_slice_residual.to_string(),
            ]
        }),
    )
}

pub fn read_residuals(text: &str) -> Result<Vec<ResidualRow>> {
    records(text, &RESIDUAL_HEADER)?
        .iter()
        .map(|rec| {
            Ok(ResidualRow {
                layer: field(rec, 0, "layer")?,
                name: rec[1].to_string(),
                config: rec[2].to_string(),
                slices: field(rec, 3, "slices")?,
                residual_norm: field(rec, 4, "residual_norm")?,
                max_slice_residual: field(rec, 5, "max_slice_residual")?,
            })
        })
        .collect()
}

const HISTORY_HEADER: [&str; 6] = ["generation", "evaluations", "front_size", "best_drop", "best_cycles", "hypervolume"];

pub fn write_history(preamble: &str, rows: &[GenerationStats]) -> Result<String> {
    render(
        preamble,
        &HISTORY_HEADER,
        rows.iter().map(|g| {
            vec![
                g.generation.to_string(),
                g.evaluations.to_string(),
                g.front_size.to_string(),
                opt_str(g.best_drop),
                opt_str(g.best_cycles),
                g.hypervolume.to_string(),
            ]
        }),
    )
}

pub fn read_history(text: &str) -> Result<Vec<GenerationStats>> {
    records(text, &HISTORY_HEADER)?
        .iter()
        .map(|rec| {
            Ok(GenerationStats {
                generation: field(rec, 0, "generation")?,
                evaluations: field(rec, 1, "evaluations")?,
                front_size: field(rec, 2, "front_size")?,
                best_drop: opt_field(rec, 3, "best_drop")?,
                best_cycles: opt_field(rec, 4, "best_cycles")?,
                hypervolume: field(rec, 5, "hypervolume")?,
            })
        })
        .collect()
}

//! Text form of a [`DecomposedLayer`]: a header of `key = value` lines, one
//! `[slice b s]` section per slice carrying its residual, and one
//! `[stage b s p]` section per stage whose body lists `row col shift sign`
//! terms in row order. Generic stages state `diagonal = fixed`; the implicit
//! `+1` diagonal is not listed.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kv::{self, Document};
use crate::store::{read_text, write_bytes};

use super::config::WmdConfig;
use super::decompose::{SliceDecomposition, StageMatrix, Tap};
use super::layer::DecomposedLayer;
use super::matrix::MatrixLayout;

pub const WMD_FORMAT: &str = "po2forge-wmd/1";

pub fn decomposed_to_text(dl: &DecomposedLayer) -> String {
    let mut w = kv::Writer::new();
    w.comment("po2forge decomposed layer")
        .kv("format", WMD_FORMAT)
        .kv("layer_index", dl.layer_index)
        .kv("mode", dl.mode)
        .kv("config", dl.config)
        .kv("scale", format!("{:?}", dl.scale))
        .kv("rows", dl.layout.rows)
        .kv("cols", dl.layout.cols)
        .kv("groups", dl.layout.groups)
        .kv("group_rows", dl.layout.group_rows);
    let n = dl.slice_count();
    for (idx, s) in dl.slices.iter().enumerate() {
        let (b, sl) = (idx / n, idx % n);
        w.section(&format!("slice {b} {sl}"))
            .kv("residual", format!("{:?}", s.residual_norm));
        for st in &s.stages {
            w.section(&format!("stage {b} {sl} {}", st.stage_index)).kv(
                "diagonal",
                if st.diagonal_fixed { "fixed" } else { "none" },
            );
            for (r, taps) in st.taps.iter().enumerate() {
                for t in taps {
                    w.line(&format!(
                        "{r} {} {} {}",
                        t.col,
                        t.shift,
                        if t.negative { '-' } else { '+' }
                    ));
                }
            }
        }
    }
    w.finish()
}

fn header_ints(header: &str, tag: &str, n: usize) -> Option<Vec<usize>> {
    let mut it = header.split_whitespace();
    if it.next()? != tag {
        return None;
    }
    let v: Vec<usize> = it.map(|s| s.parse().ok()).collect::<Option<_>>()?;
    (v.len() == n).then_some(v)
}

pub fn decomposed_from_text(file: &str, text: &str) -> Result<DecomposedLayer> {
    let doc = Document::parse(file, text, true)?;
    let root = doc.view(doc.root());
    if root.str("format")? != WMD_FORMAT {
        return Err(Error::format("decomposed layer", "unsupported format"));
    }
    let config: WmdConfig = root.str("config")?.parse()?;
    let layout = MatrixLayout {
        rows: root.get("rows")?,
        cols: root.get("cols")?,
        groups: root.get("groups")?,
        group_rows: root.get("group_rows")?,
    };
    if layout.groups * layout.group_rows != layout.rows {
        return Err(Error::format("decomposed layer", "groups * group_rows != rows"));
    }
    let mut dl = DecomposedLayer {
        config,
        layer_index: root.get("layer_index")?,
        mode: root.str("mode")?.parse()?,
        scale: root.get("scale")?,
        layout,
        slices: Vec::new(),
    };
    let n = dl.slice_count();
    let m = config.rows;
    for section in &doc.sections[1..] {
        let v = doc.view(section);
        if let Some(ids) = header_ints(&section.header, "slice", 2) {
            if ids[0] * n + ids[1] != dl.slices.len() {
                return Err(v.err(section.line, "slice sections out of order"));
            }
            dl.slices.push(SliceDecomposition {
                stages: Vec::new(),
                residual_norm: v.get("residual")?,
            });
        } else if let Some(ids) = header_ints(&section.header, "stage", 3) {
            let count = dl.slices.len();
            let current = dl
                .slices
                .last_mut()
                .ok_or_else(|| v.err(section.line, "stage before any slice"))?;
            if ids[0] * n + ids[1] + 1 != count || ids[2] != current.stages.len() + 1 {
                return Err(v.err(section.line, "stage section out of order"));
            }
            let diagonal_fixed = match v.str("diagonal")? {
                "fixed" => true,
                "none" => false,
                other => return Err(v.err(section.line, format!("bad diagonal `{other}`"))),
            };
            let mut taps = vec![Vec::new(); m];
            for (line, body) in &section.body {
                let f: Vec<&str> = body.split_whitespace().collect();
                let parsed = match f[..] {
                    [r, c, z, s] => (|| {
                        let r: usize = r.parse().ok()?;
                        let tap = Tap {
                            col: c.parse().ok()?,
                            shift: z.parse().ok()?,
                            negative: match s {
                                "+" => false,
                                "-" => true,
                                _ => return None,
                            },
                        };
                        Some((r, tap))
                    })(),
                    _ => None,
                };
                let (r, tap) = parsed
                    .ok_or_else(|| v.err(*line, format!("expected `row col shift sign`, got `{body}`")))?;
                if r >= m {
                    return Err(v.err(*line, format!("row {r} outside M = {m}")));
                }
                taps[r].push(tap);
            }
            current.stages.push(StageMatrix {
                stage_index: ids[2],
                diagonal_fixed,
                taps,
            });
        } else {
            return Err(v.err(section.line, format!("unexpected section [{}]", section.header)));
        }
    }
    dl.validate()
        .map_err(|e| Error::format("decomposed layer", format!("{file}: {e}")))?;
    Ok(dl)
}

pub fn layer_file_name(layer_index: usize) -> String {
    format!("layer_{layer_index}.wmd")
}

pub fn save_decomposed(dl: &DecomposedLayer, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), decomposed_to_text(dl).as_bytes())
}

pub fn load_decomposed(path: impl AsRef<Path>) -> Result<DecomposedLayer> {
    let path = path.as_ref();
    decomposed_from_text(&path.display().to_string(), &read_text(path)?)
}

/// Writes each layer to `dir/layer_<index>.wmd`.
pub fn save_decomposed_set(dls: &[DecomposedLayer], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    dls.iter()
        .map(|dl| {
            let p = dir.join(layer_file_name(dl.layer_index));
            save_decomposed(dl, &p).map(|_| p)
        })
        .collect()
}

/// Loads every `*.wmd` file in `dir`, ordered by layer index.
pub fn load_decomposed_set(dir: impl AsRef<Path>) -> Result<Vec<DecomposedLayer>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wmd"))
        .collect();
    paths.sort();
    let mut out = paths
        .iter()
        .map(load_decomposed)
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|d| d.layer_index);
    if out.windows(2).any(|w| w[0].layer_index == w[1].layer_index) {
        return Err(Error::format("decomposed set", "duplicate layer index"));
    }
    Ok(out)
}

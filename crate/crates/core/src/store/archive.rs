//! Directory archive: a `manifest` text file plus `tensors/<name>.bin`
//! blobs of little-endian float32 values, row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{self, Document};

use super::model::{FeatureShape, LayerKind, LayerSpec, ModelGraph, Padding, SkipSource, Tensor};

pub const MODEL_FORMAT: &str = "po2forge-model/1";

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn f32_blob(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub(crate) fn read_f32_blob(path: &Path, name: &str, count: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != count * 4 {
        return Err(Error::TensorLength {
            name: name.to_string(),
            expected: count * 4,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::format(
            "model manifest",
            format!("layer name `{name}` must be non-empty [A-Za-z0-9_.-]"),
        ))
    }
}

fn pair(v: &[usize], key: &str) -> Result<(usize, usize)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::format("model manifest", format!("`{key}` needs two values"))),
    }
}

/// Loads and validates a model archive directory.
pub fn load_model(dir: impl AsRef<Path>) -> Result<ModelGraph> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest");
    let text = read_text(&manifest_path)?;
    let doc = Document::parse(&manifest_path.display().to_string(), &text, false)?;
    let root = doc.view(doc.root());
    root.deny_unknown(&["format", "name", "input_shape", "layer_count"])?;
    let format = root.str("format")?;
    if format != MODEL_FORMAT {
        return Err(Error::format("model manifest", format!("unsupported format `{format}`")));
    }
    let name = root.str("name")?.to_string();
    let input: Vec<usize> = root.list("input_shape")?;
    let [h, w, c] = input[..] else {
        return Err(Error::format("model manifest", "input_shape needs H,W,C"));
    };
    let count: usize = root.get("layer_count")?;
    let sections = &doc.sections[1..];
    if sections.len() != count {
        return Err(Error::format(
            "model manifest",
            format!("layer_count = {count} but {} layer sections", sections.len()),
        ));
    }

    let mut layers = Vec::with_capacity(count);
    for (i, section) in sections.iter().enumerate() {
        if section.header != format!("layer {i}") {
            return Err(Error::format(
                "model manifest",
                format!("expected section [layer {i}], found [{}]", section.header),
            ));
        }
        let v = doc.view(section);
        v.deny_unknown(&[
            "name",
            "kind",
            "kernel",
            "stride",
            "padding",
            "channels",
            "decomposable",
            "weights",
            "weights_shape",
            "bias",
            "residual_from",
        ])?;
        let name = v.str("name")?.to_string();
        check_name(&name)?;
        let kind: LayerKind = v.str("kind")?.parse()?;
        let padding: Padding = v.str("padding")?.parse()?;
        let kernel = pair(&v.list::<usize>("kernel")?, "kernel")?;
        let stride = pair(&v.list::<usize>("stride")?, "stride")?;
        let channels = pair(&v.list::<usize>("channels")?, "channels")?;
        let decomposable: bool = v.get("decomposable")?;
        let residual_from = match v.entry("residual_from") {
            Some(e) => Some(e.value.parse::<SkipSource>()?),
            None => None,
        };
        let weights = match v.entry("weights") {
            Some(e) => {
                let shape: Vec<usize> = v.list("weights_shape")?;
                let count = shape.iter().product();
                let data = read_f32_blob(&dir.join("tensors").join(&e.value), &e.value, count)?;
                Some(Tensor::new(shape, data)?)
            }
            None => None,
        };
        let bias = match v.entry("bias") {
            Some(e) => Some(read_f32_blob(
                &dir.join("tensors").join(&e.value),
                &e.value,
                channels.1,
            )?),
            None => None,
        };
        layers.push(LayerSpec {
            name,
            kind,
            kernel,
            stride,
            padding,
            channels,
            weights,
            bias,
            decomposable,
            residual_from,
        });
    }
    let mut names: Vec<&str> = layers.iter().map(|l| l.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::format("model manifest", "layer names must be unique"));
    }
    ModelGraph::new(name, FeatureShape::new(h, w, c), layers)
}

/// Canonical manifest text for `model`.
pub fn model_manifest(model: &ModelGraph) -> String {
    let mut w = kv::Writer::new();
    w.comment("po2forge model archive")
        .kv("format", MODEL_FORMAT)
        .kv("name", model.name())
        .kv("input_shape", model.input_shape())
        .kv("layer_count", model.layers().len());
    for (i, l) in model.layers().iter().enumerate() {
        w.section(&format!("layer {i}"))
            .kv("name", &l.name)
            .kv("kind", l.kind)
            .kv("kernel", format!("{},{}", l.kernel.0, l.kernel.1))
            .kv("stride", format!("{},{}", l.stride.0, l.stride.1))
            .kv("padding", l.padding.as_str())
            .kv("channels", format!("{},{}", l.channels.0, l.channels.1))
            .kv("decomposable", l.decomposable);
        if let Some(t) = &l.weights {
            w.kv("weights", format!("{}.weight.bin", l.name))
                .kv("weights_shape", kv::join(&t.shape));
        }
        if l.bias.is_some() {
            w.kv("bias", format!("{}.bias.bin", l.name));
        }
        if let Some(src) = l.residual_from {
            w.kv("residual_from", src);
        }
    }
    w.finish()
}

/// Writes `model` as a canonical archive under `dir`.
pub fn save_model(model: &ModelGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for l in model.layers() {
        check_name(&l.name)?;
        if let Some(t) = &l.weights {
            write_bytes(
                &dir.join("tensors").join(format!("{}.weight.bin", l.name)),
                &f32_blob(&t.data),
            )?;
        }
        if let Some(b) = &l.bias {
            write_bytes(
                &dir.join("tensors").join(format!("{}.bias.bin", l.name)),
                &f32_blob(b),
            )?;
        }
    }
    write_bytes(&dir.join("manifest"), model_manifest(model).as_bytes())
}

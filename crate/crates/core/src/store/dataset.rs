use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::{self, Document};

use super::archive::{f32_blob, read_f32_blob, read_text, write_bytes};
use super::model::{FeatureShape, ModelGraph};

pub const DATASET_FORMAT: &str = "po2forge-dataset/1";
pub const DEFAULT_SEARCH_FRACTION: f64 = 0.10;

/// Which part of a dataset an evaluation runs on. The search split is the
/// first `floor(f * N)` samples, the final split the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Search,
    Final,
    All,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Search => "search",
            Subset::Final => "final",
            Subset::All => "all",
        }
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "search" => Ok(Subset::Search),
            "final" => Ok(Subset::Final),
            "all" => Ok(Subset::All),
            _ => Err(Error::InvalidConfig(format!("unknown subset `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_shape: FeatureShape,
    num_classes: usize,
    inputs: Vec<f64>,
    labels: Vec<u32>,
    split_fraction_search: f64,
}

impl Dataset {
    pub fn new(
        input_shape: FeatureShape,
        num_classes: usize,
        inputs: Vec<f64>,
        labels: Vec<u32>,
        split_fraction_search: f64,
    ) -> Result<Self> {
        if input_shape.is_empty() || num_classes == 0 {
            return Err(Error::Shape("dataset shape and class count must be positive".into()));
        }
        if inputs.len() != labels.len() * input_shape.len() {
            return Err(Error::Shape(format!(
                "{} input values for {} samples of {} values",
                inputs.len(),
                labels.len(),
                input_shape.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Shape(format!("label {bad} >= class count {num_classes}")));
        }
        if !(split_fraction_search > 0.0 && split_fraction_search <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "split_fraction_search {split_fraction_search} not in (0, 1]"
            )));
        }
        Ok(Self {
            input_shape,
            num_classes,
            inputs,
            labels,
            split_fraction_search,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_shape(&self) -> FeatureShape {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split_fraction_search(&self) -> f64 {
        self.split_fraction_search
    }

    pub fn with_split_fraction(mut self, f: f64) -> Result<Self> {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidConfig(format!("split fraction {f} not in (0, 1]")));
        }
        self.split_fraction_search = f;
        Ok(self)
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.input_shape.len();
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn range(&self, subset: Subset) -> Range<usize> {
        let cut = (self.split_fraction_search * self.len() as f64).floor() as usize;
        match subset {
            Subset::Search => 0..cut,
            Subset::Final => cut..self.len(),
            Subset::All => 0..self.len(),
        }
    }

    /// Checks that samples fit `model`'s input and class count.
    pub fn check_compatible(&self, model: &ModelGraph) -> Result<()> {
        if self.input_shape != model.input_shape() {
            return Err(Error::Shape(format!(
                "dataset inputs {} do not match model input {}",
                self.input_shape,
                model.input_shape()
            )));
        }
        if self.num_classes > model.num_classes() {
            return Err(Error::Shape(format!(
                "dataset has {} classes, model emits {} scores",
                self.num_classes,
                model.num_classes()
            )));
        }
        Ok(())
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join("manifest");
    let text = read_text(&path)?;
    let doc = Document::parse(&path.display().to_string(), &text, false)?;
    let root = doc.view(doc.root());
    root.deny_unknown(&["format", "samples", "input_shape", "classes", "split_fraction_search"])?;
    if root.str("format")? != DATASET_FORMAT {
        return Err(Error::format("dataset manifest", "unsupported format"));
    }
    let samples: usize = root.get("samples")?;
    let shape: Vec<usize> = root.list("input_shape")?;
    let [h, w, c] = shape[..] else {
        return Err(Error::format("dataset manifest", "input_shape needs H,W,C"));
    };
    let classes: usize = root.get("classes")?;
    let split = root
        .get_opt("split_fraction_search")?
        .unwrap_or(DEFAULT_SEARCH_FRACTION);
    let input_shape = FeatureShape::new(h, w, c);
    let inputs = read_f32_blob(&dir.join("data.bin"), "data.bin", samples * input_shape.len())?;
    let label_path = dir.join("labels.bin");
    let bytes = fs::read(&label_path).map_err(|e| Error::io(&label_path, e))?;
    if bytes.len() != samples * 4 {
        return Err(Error::TensorLength {
            name: "labels.bin".into(),
            expected: samples * 4,
            found: bytes.len(),
        });
    }
    let labels = bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Dataset::new(input_shape, classes, inputs, labels, split)
}

pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mut w = kv::Writer::new();
    w.comment("po2forge dataset")
        .kv("format", DATASET_FORMAT)
        .kv("samples", ds.len())
        .kv("input_shape", ds.input_shape)
        .kv("classes", ds.num_classes)
        .kv("split_fraction_search", ds.split_fraction_search);
    write_bytes(&dir.join("data.bin"), &f32_blob(&ds.inputs))?;
    let labels: Vec<u8> = ds.labels.iter().flat_map(|l| l.to_le_bytes()).collect();
    write_bytes(&dir.join("labels.bin"), &labels)?;
    write_bytes(&dir.join("manifest"), w.finish().as_bytes())
}

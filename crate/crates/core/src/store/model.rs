use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    DepthwiseConv2d,
    PointwiseConv2d,
    Dense,
    MaxPool,
    AvgPool,
    Relu,
    Softmax,
    AddResidual,
}

impl LayerKind {
    pub const ALL: [LayerKind; 9] = [
        LayerKind::Conv2d,
        LayerKind::DepthwiseConv2d,
        LayerKind::PointwiseConv2d,
        LayerKind::Dense,
        LayerKind::MaxPool,
        LayerKind::AvgPool,
        LayerKind::Relu,
        LayerKind::Softmax,
        LayerKind::AddResidual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::DepthwiseConv2d => "depthwise_conv2d",
            LayerKind::PointwiseConv2d => "pointwise_conv2d",
            LayerKind::Dense => "dense",
            LayerKind::MaxPool => "maxpool",
            LayerKind::AvgPool => "avgpool",
            LayerKind::Relu => "relu",
            LayerKind::Softmax => "softmax",
            LayerKind::AddResidual => "add_residual",
        }
    }

    /// Kinds whose weights may be replaced by a shift-and-add decomposition.
    pub fn can_decompose(self) -> bool {
        matches!(
            self,
            LayerKind::Conv2d | LayerKind::PointwiseConv2d | LayerKind::Dense
        )
    }

    pub fn has_weights(self) -> bool {
        matches!(
            self,
            LayerKind::Conv2d
                | LayerKind::DepthwiseConv2d
                | LayerKind::PointwiseConv2d
                | LayerKind::Dense
        )
    }

    fn is_windowed(self) -> bool {
        matches!(
            self,
            LayerKind::Conv2d
                | LayerKind::DepthwiseConv2d
                | LayerKind::PointwiseConv2d
                | LayerKind::MaxPool
                | LayerKind::AvgPool
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::format("model manifest", format!("unknown layer kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    Same,
    Valid,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Same => "same",
            Padding::Valid => "valid",
        }
    }
}

impl FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same" => Ok(Padding::Same),
            "valid" => Ok(Padding::Valid),
            _ => Err(Error::format("model manifest", format!("unknown padding `{s}`"))),
        }
    }
}

/// Height, width, channels of an activation tensor (row-major HWC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureShape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl FeatureShape {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.w + x) * self.c + c
    }
}

impl fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.h, self.w, self.c)
    }
}

/// Dense real tensor, row-major over `shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "tensor of shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Where a residual addition takes its second operand from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkipSource {
    Input,
    Layer(usize),
}

impl fmt::Display for SkipSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipSource::Input => f.write_str("input"),
            SkipSource::Layer(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for SkipSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "input" {
            return Ok(SkipSource::Input);
        }
        s.parse()
            .map(SkipSource::Layer)
            .map_err(|_| Error::format("model manifest", format!("bad residual source `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// (K_x, K_y); K_x runs along the input height.
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
    /// (C_in, C_out). For dense layers C_in is the flattened input length.
    pub channels: (usize, usize),
    pub weights: Option<Tensor>,
    pub bias: Option<Vec<f64>>,
    pub decomposable: bool,
    pub residual_from: Option<SkipSource>,
}

impl LayerSpec {
    /// A shape-preserving layer (relu, softmax) over `c` channels.
    pub fn elementwise(name: impl Into<String>, kind: LayerKind, c: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            kernel: (1, 1),
            stride: (1, 1),
            padding: Padding::Valid,
            channels: (c, c),
            weights: None,
            bias: None,
            decomposable: false,
            residual_from: None,
        }
    }

    pub fn pool(
        name: impl Into<String>,
        kind: LayerKind,
        c: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    ) -> Self {
        Self {
            kernel,
            stride,
            padding,
            ..Self::elementwise(name, kind, c)
        }
    }

    pub fn residual(name: impl Into<String>, c: usize, from: SkipSource) -> Self {
        Self {
            residual_from: Some(from),
            ..Self::elementwise(name, LayerKind::AddResidual, c)
        }
    }

    /// A weighted layer. The weight shape must follow [`LayerSpec::weight_shape`].
    #[allow(clippy::too_many_arguments)]
    pub fn weighted(
        name: impl Into<String>,
        kind: LayerKind,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
        channels: (usize, usize),
        weights: Tensor,
        bias: Option<Vec<f64>>,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            kernel,
            stride,
            padding,
            channels,
            weights: Some(weights),
            bias,
            decomposable: kind.can_decompose(),
            residual_from: None,
        }
    }

    /// Expected weight tensor dimensions, or `None` for parameter-free kinds.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        let (kx, ky) = self.kernel;
        let (ci, co) = self.channels;
        match self.kind {
            LayerKind::Conv2d | LayerKind::PointwiseConv2d => Some(vec![kx, ky, ci, co]),
            LayerKind::DepthwiseConv2d => Some(vec![kx, ky, ci, co / ci.max(1)]),
            LayerKind::Dense => Some(vec![ci, co]),
            _ => None,
        }
    }

    fn check_static(&self, index: usize) -> Result<()> {
        let bad = |msg: String| Error::Shape(format!("layer {index} ({}): {msg}", self.name));
        let (kx, ky) = self.kernel;
        let (sx, sy) = self.stride;
        let (ci, co) = self.channels;
        if kx == 0 || ky == 0 || sx == 0 || sy == 0 || ci == 0 || co == 0 {
            return Err(bad("kernel, stride and channels must be positive".into()));
        }
        if self.kind == LayerKind::PointwiseConv2d && (kx, ky) != (1, 1) {
            return Err(bad("pointwise convolution needs a 1x1 kernel".into()));
        }
        if self.kind == LayerKind::DepthwiseConv2d && co % ci != 0 {
            return Err(bad(format!("depthwise C_out {co} is not a multiple of C_in {ci}")));
        }
        if self.decomposable && !self.kind.can_decompose() {
            return Err(bad(format!("{} layers cannot be decomposable", self.kind)));
        }
        if !self.kind.is_windowed() && ((kx, ky) != (1, 1) || (sx, sy) != (1, 1)) {
            return Err(bad(format!("{} layers take no kernel or stride", self.kind)));
        }
        if self.kind.has_weights() {
            let shape = self.weight_shape().expect("weighted kind");
            match &self.weights {
                None => return Err(bad("missing weights".into())),
                Some(w) if w.shape != shape => {
                    return Err(bad(format!(
                        "weight tensor {:?} does not match expected {:?}",
                        w.shape, shape
                    )))
                }
                Some(w) if w.data.len() != shape.iter().product::<usize>() => {
                    return Err(bad("weight data length does not match its shape".into()))
                }
                _ => {}
            }
            if let Some(b) = &self.bias {
                if b.len() != co {
                    return Err(bad(format!("bias has {} entries, expected {co}", b.len())));
                }
            }
        } else {
            if self.weights.is_some() || self.bias.is_some() {
                return Err(bad(format!("{} layers take no parameters", self.kind)));
            }
            if ci != co {
                return Err(bad(format!("{} layers preserve channels", self.kind)));
            }
        }
        if (self.kind == LayerKind::AddResidual) != self.residual_from.is_some() {
            return Err(bad("residual source is required exactly for add_residual".into()));
        }
        Ok(())
    }
}

/// Resolved spatial geometry of a layer within its model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerGeometry {
    pub input: FeatureShape,
    pub output: FeatureShape,
    /// Zero rows/columns added before the first input row/column.
    pub pad_top: usize,
    pub pad_left: usize,
}

impl LayerGeometry {
    /// K_x·K_y
    pub fn kernel_area(&self, layer: &LayerSpec) -> usize {
        layer.kernel.0 * layer.kernel.1
    }

    /// O_x·O_y
    pub fn output_area(&self) -> usize {
        self.output.h * self.output.w
    }
}

fn window_out(input: usize, k: usize, s: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if input < k {
                None
            } else {
                Some(((input - k) / s + 1, 0))
            }
        }
        Padding::Same => {
            let out = input.div_ceil(s);
            let total = ((out - 1) * s + k).saturating_sub(input);
            Some((out, total / 2))
        }
    }
}

/// A validated CNN: every layer's declared shapes chain from the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    name: String,
    input_shape: FeatureShape,
    layers: Vec<LayerSpec>,
    geometry: Vec<LayerGeometry>,
}

impl ModelGraph {
    pub fn new(
        name: impl Into<String>,
        input_shape: FeatureShape,
        layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        if input_shape.is_empty() {
            return Err(Error::Shape("input shape must be positive".into()));
        }
        let mut geometry: Vec<LayerGeometry> = Vec::with_capacity(layers.len());
        let mut current = input_shape;
        for (i, layer) in layers.iter().enumerate() {
            layer.check_static(i)?;
            let bad = |msg: String| Error::Shape(format!("layer {i} ({}): {msg}", layer.name));
            let (ci, co) = layer.channels;
            let mut geo = LayerGeometry {
                input: current,
                output: current,
                pad_top: 0,
                pad_left: 0,
            };
            match layer.kind {
                LayerKind::Dense => {
                    if current.len() != ci {
                        return Err(bad(format!(
                            "dense C_in {ci} does not match flattened input {}",
                            current.len()
                        )));
                    }
                    geo.output = FeatureShape::new(1, 1, co);
                }
                LayerKind::Relu | LayerKind::Softmax | LayerKind::AddResidual => {
                    if current.c != ci {
                        return Err(bad(format!("expects {ci} channels, input has {}", current.c)));
                    }
                    if let Some(SkipSource::Layer(src)) = layer.residual_from {
                        if src >= i {
                            return Err(bad(format!("residual source {src} is not an earlier layer")));
                        }
                        if geometry[src].output != current {
                            return Err(bad("residual operand shapes differ".into()));
                        }
                    }
                    if layer.residual_from == Some(SkipSource::Input) && input_shape != current {
                        return Err(bad("residual operand shapes differ".into()));
                    }
                }
                _ => {
                    if current.c != ci {
                        return Err(bad(format!("expects {ci} channels, input has {}", current.c)));
                    }
                    let (kx, ky) = layer.kernel;
                    let (sx, sy) = layer.stride;
                    let (oh, pt) = window_out(current.h, kx, sx, layer.padding)
                        .ok_or_else(|| bad("kernel larger than input".into()))?;
                    let (ow, pl) = window_out(current.w, ky, sy, layer.padding)
                        .ok_or_else(|| bad("kernel larger than input".into()))?;
                    geo.output = FeatureShape::new(oh, ow, co);
                    geo.pad_top = pt;
                    geo.pad_left = pl;
                }
            }
            current = geo.output;
            geometry.push(geo);
        }
        Ok(Self {
            name: name.into(),
            input_shape,
            layers,
            geometry,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> FeatureShape {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> Result<&LayerSpec> {
        self.layers
            .get(index)
            .ok_or_else(|| Error::InvalidConfig(format!("no layer {index}")))
    }

    pub fn geometry(&self, index: usize) -> LayerGeometry {
        self.geometry[index]
    }

    pub fn output_shape(&self) -> FeatureShape {
        self.geometry
            .last()
            .map(|g| g.output)
            .unwrap_or(self.input_shape)
    }

    pub fn num_classes(&self) -> usize {
        self.output_shape().len()
    }

    /// Indices of layers flagged decomposable.
    pub fn decomposable_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.decomposable)
            .map(|(i, _)| i)
            .collect()
    }

    /// Returns a copy with `layer`'s weights replaced; the result is revalidated.
    pub fn with_weights(&self, index: usize, weights: Tensor) -> Result<Self> {
        let mut layers = self.layers.clone();
        let layer = layers
            .get_mut(index)
            .ok_or_else(|| Error::InvalidConfig(format!("no layer {index}")))?;
        layer.weights = Some(weights);
        ModelGraph::new(self.name.clone(), self.input_shape, layers)
    }

    pub fn into_parts(self) -> (String, FeatureShape, Vec<LayerSpec>) {
        (self.name, self.input_shape, self.layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(ci: usize, co: usize, k: usize, padding: Padding) -> LayerSpec {
        LayerSpec::weighted(
            "c",
            LayerKind::Conv2d,
            (k, k),
            (1, 1),
            padding,
            (ci, co),
            Tensor::zeros(vec![k, k, ci, co]),
            None,
        )
    }

    #[test]
    fn same_and_valid_geometry() {
        let m = ModelGraph::new(
            "m",
            FeatureShape::new(5, 5, 1),
            vec![conv(1, 2, 3, Padding::Same), conv(2, 3, 3, Padding::Valid)],
        )
        .unwrap();
        assert_eq!(m.geometry(0).output, FeatureShape::new(5, 5, 2));
        assert_eq!(m.geometry(0).pad_top, 1);
        assert_eq!(m.geometry(1).output, FeatureShape::new(3, 3, 3));
        assert_eq!(m.num_classes(), 27);
    }

    #[test]
    fn channel_chain_is_checked() {
        let err = ModelGraph::new(
            "m",
            FeatureShape::new(5, 5, 1),
            vec![conv(1, 2, 3, Padding::Same), conv(3, 3, 3, Padding::Same)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn pointwise_needs_unit_kernel() {
        let mut l = conv(2, 2, 3, Padding::Same);
        l.kind = LayerKind::PointwiseConv2d;
        assert!(ModelGraph::new("m", FeatureShape::new(4, 4, 2), vec![l]).is_err());
    }

    #[test]
    fn depthwise_multiplier_and_decomposable_flag() {
        let dw = LayerSpec::weighted(
            "dw",
            LayerKind::DepthwiseConv2d,
            (3, 3),
            (1, 1),
            Padding::Same,
            (2, 4),
            Tensor::zeros(vec![3, 3, 2, 2]),
            None,
        );
        assert!(!dw.decomposable);
        let ok = ModelGraph::new("m", FeatureShape::new(4, 4, 2), vec![dw.clone()]);
        assert!(ok.is_ok());
        let mut flagged = dw;
        flagged.decomposable = true;
        assert!(ModelGraph::new("m", FeatureShape::new(4, 4, 2), vec![flagged]).is_err());
    }

    #[test]
    fn residual_source_must_match() {
        let layers = vec![
            conv(1, 1, 3, Padding::Same),
            LayerSpec::residual("add", 1, SkipSource::Input),
        ];
        assert!(ModelGraph::new("m", FeatureShape::new(4, 4, 1), layers).is_ok());
        let layers = vec![
            conv(1, 1, 3, Padding::Valid),
            LayerSpec::residual("add", 1, SkipSource::Input),
        ];
        assert!(ModelGraph::new("m", FeatureShape::new(4, 4, 1), layers).is_err());
    }
}

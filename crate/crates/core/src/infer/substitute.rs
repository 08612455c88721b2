use crate::error::{Error, Result};
use crate::store::ModelGraph;
use crate::wmd::{mn_to_weight, reconstruct, DecomposedLayer, Matrix, MatrixMode};

/// Copy of `model` whose layer `layer_index` takes the weights given in
/// `M x N` form.
pub fn substitute_weights(
    model: &ModelGraph,
    layer_index: usize,
    matrix: &Matrix,
    mode: MatrixMode,
) -> Result<ModelGraph> {
    let layer = model.layer(layer_index)?;
    if !layer.kind.can_decompose() {
        return Err(Error::NotDecomposable(layer.name.clone()));
    }
    let w = mn_to_weight(matrix, layer, mode)?;
    model.with_weights(layer_index, w)
}

/// Replaces every decomposed layer by its reconstruction.
pub fn substitute_decomposed(model: &ModelGraph, dls: &[DecomposedLayer]) -> Result<ModelGraph> {
    let (name, input, mut layers) = model.clone().into_parts();
    for dl in dls {
        let layer = layers
            .get_mut(dl.layer_index)
            .ok_or_else(|| Error::InvalidConfig(format!("no layer {}", dl.layer_index)))?;
        if !layer.kind.can_decompose() {
            return Err(Error::NotDecomposable(layer.name.clone()));
        }
        layer.weights = Some(mn_to_weight(&reconstruct(dl), layer, dl.mode)?);
    }
    ModelGraph::new(name, input, layers)
}

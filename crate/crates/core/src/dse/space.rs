use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{join, Document, Writer};
use crate::store::{read_text, ModelGraph};
use crate::wmd::WmdConfig;

/// Choice lists of the search: hard parameters (Z, E, M, S_W) are shared by
/// all layers, the stage count P is chosen per decomposed layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignSpace {
    pub shifts: Vec<usize>,
    pub terms: Vec<usize>,
    pub rows: Vec<usize>,
    pub slice_widths: Vec<usize>,
    pub stages: Vec<usize>,
    /// Model layers the genome's P genes refer to.
    pub layers: Vec<usize>,
}

/// A genome decoded into accelerator and per-layer decomposition settings.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decoded {
    pub shifts: usize,
    pub terms: usize,
    pub rows: usize,
    pub slice_width: usize,
    /// `(layer index, P_l)`
    pub stages: Vec<(usize, usize)>,
}

impl Decoded {
    pub fn config_for(&self, stages: usize) -> Result<WmdConfig> {
        WmdConfig::new(stages, self.shifts, self.terms, self.rows, self.slice_width)
    }

    /// `F_max`: the most stages any layer uses, at least 2.
    pub fn f_max(&self) -> usize {
        self.stages.iter().map(|s| s.1).max().unwrap_or(2).max(2)
    }
}

pub const HARD_GENES: usize = 4;

impl DesignSpace {
    pub fn new(
        shifts: Vec<usize>,
        terms: Vec<usize>,
        rows: Vec<usize>,
        slice_widths: Vec<usize>,
        stages: Vec<usize>,
        layers: Vec<usize>,
    ) -> Result<Self> {
        let s = Self { shifts, terms, rows, slice_widths, stages, layers };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("z", &self.shifts),
            ("e", &self.terms),
            ("m", &self.rows),
            ("sw", &self.slice_widths),
            ("p", &self.stages),
        ] {
            if list.is_empty() {
                return Err(Error::InvalidConfig(format!("design space: `{name}` has no choices")));
            }
            if list.contains(&0) {
                return Err(Error::InvalidConfig(format!("design space: `{name}` contains 0")));
            }
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("design space targets no layers".into()));
        }
        Ok(())
    }

    /// Targets `model`'s decomposable layers.
    pub fn for_model(
        model: &ModelGraph,
        shifts: Vec<usize>,
        terms: Vec<usize>,
        rows: Vec<usize>,
        slice_widths: Vec<usize>,
        stages: Vec<usize>,
    ) -> Result<Self> {
        Self::new(shifts, terms, rows, slice_widths, stages, model.decomposable_layers())
    }

    /// Checks that every targeted layer exists and is decomposable.
    pub fn check_model(&self, model: &ModelGraph) -> Result<()> {
        for &i in &self.layers {
            let l = model.layer(i)?;
            if !l.decomposable || !l.kind.can_decompose() {
                return Err(Error::NotDecomposable(l.name.clone()));
            }
        }
        Ok(())
    }

    pub fn genome_len(&self) -> usize {
        HARD_GENES + self.layers.len()
    }

    /// Number of choices for each gene.
    pub fn gene_bounds(&self) -> Vec<usize> {
        let mut b = vec![
            self.shifts.len(),
            self.terms.len(),
            self.rows.len(),
            self.slice_widths.len(),
        ];
        b.extend(std::iter::repeat_n(self.stages.len(), self.layers.len()));
        b
    }

    pub fn decode(&self, genes: &[usize]) -> Result<Decoded> {
        let bounds = self.gene_bounds();
        if genes.len() != bounds.len() || genes.iter().zip(&bounds).any(|(g, b)| g >= b) {
            return Err(Error::InvalidConfig(format!("genome {genes:?} outside space {bounds:?}")));
        }
        Ok(Decoded {
            shifts: self.shifts[genes[0]],
            terms: self.terms[genes[1]],
            rows: self.rows[genes[2]],
            slice_width: self.slice_widths[genes[3]],
            stages: self
                .layers
                .iter()
                .zip(&genes[HARD_GENES..])
                .map(|(&l, &g)| (l, self.stages[g]))
                .collect(),
        })
    }

    /// Genome of a given setting, if every value is among the choices.
    pub fn encode(&self, d: &Decoded) -> Option<Vec<usize>> {
        let pos = |list: &[usize], v| list.iter().position(|&x| x == v);
        let mut g = vec![
            pos(&self.shifts, d.shifts)?,
            pos(&self.terms, d.terms)?,
            pos(&self.rows, d.rows)?,
            pos(&self.slice_widths, d.slice_width)?,
        ];
        if d.stages.len() != self.layers.len() {
            return None;
        }
        for (&l, &(dl, p)) in self.layers.iter().zip(&d.stages) {
            if l != dl {
                return None;
            }
            g.push(pos(&self.stages, p)?);
        }
        Some(g)
    }

    /// Every genome in mixed-radix order (last gene fastest).
    pub fn enumerate(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let bounds = self.gene_bounds();
        let total = design_space_size(self).unwrap_or(u128::MAX);
        let mut next = Some(vec![0; bounds.len()]);
        (0..total).map_while(move |_| {
            let cur = next.take()?;
            let mut succ = cur.clone();
            let mut i = succ.len();
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                succ[i] += 1;
                if succ[i] < bounds[i] {
                    next = Some(succ);
                    break;
                }
                succ[i] = 0;
            }
            Some(cur)
        })
    }

    pub fn to_text(&self) -> String {
        let mut w = Writer::new();
        w.kv("z", join(&self.shifts))
            .kv("e", join(&self.terms))
            .kv("m", join(&self.rows))
            .kv("sw", join(&self.slice_widths))
            .kv("p", join(&self.stages))
            .kv("layers", join(&self.layers));
        w.finish()
    }
}

/// `|P|^L * |Z| |E| |M| |S_W|`; `None` on overflow.
pub fn design_space_size(space: &DesignSpace) -> Option<u128> {
    let hard = [&space.shifts, &space.terms, &space.rows, &space.slice_widths]
        .iter()
        .try_fold(1u128, |acc, l| acc.checked_mul(l.len() as u128))?;
    let soft = (space.stages.len() as u128).checked_pow(space.layers.len() as u32)?;
    hard.checked_mul(soft)
}

/// Parses a design-space file (`z`, `e`, `m`, `sw`, `p` lists and an
/// optional `layers` list defaulting to `model`'s decomposable layers).
pub fn parse_space(name: &str, text: &str, model: &ModelGraph) -> Result<DesignSpace> {
    let doc = Document::parse(name, text, false)?;
    if doc.sections.len() > 1 {
        return Err(Error::format("design space", "sections are not allowed"));
    }
    let v = doc.view(doc.root());
    v.deny_unknown(&["z", "e", "m", "sw", "p", "layers"])?;
    let space = DesignSpace::new(
        v.list("z")?,
        v.list("e")?,
        v.list("m")?,
        v.list("sw")?,
        v.list("p")?,
        v.list_opt("layers")?.unwrap_or_else(|| model.decomposable_layers()),
    )?;
    space.check_model(model)?;
    Ok(space)
}

pub fn load_space(path: impl AsRef<Path>, model: &ModelGraph) -> Result<DesignSpace> {
    let path = path.as_ref();
    parse_space(&path.display().to_string(), &read_text(path)?, model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(p: usize, l: usize) -> DesignSpace {
        DesignSpace::new(vec![1, 2], vec![2], vec![4], vec![2], (1..=p).collect(), (0..l).collect()).unwrap()
    }

    #[test]
    fn sizes() {
        // one layer, two stage choices, two hard choices
        assert_eq!(design_space_size(&space(2, 1)), Some(4));
        let s = space(3, 2);
        assert_eq!(design_space_size(&s), Some(18));
        let all: Vec<_> = s.enumerate().collect();
        assert_eq!(all.len(), 18);
        assert_eq!(all[0], vec![0, 0, 0, 0, 0, 0]);
        assert_eq!(all[1], vec![0, 0, 0, 0, 0, 1]);
        assert_eq!(all[17], vec![1, 0, 0, 0, 2, 2]);
    }

    #[test]
    fn decode_encode() {
        let s = space(3, 2);
        let d = s.decode(&[1, 0, 0, 0, 2, 0]).unwrap();
        assert_eq!((d.shifts, d.stages.clone()), (2, vec![(0, 3), (1, 1)]));
        assert_eq!(d.f_max(), 3);
        assert_eq!(s.encode(&d).unwrap(), vec![1, 0, 0, 0, 2, 0]);
        assert!(s.decode(&[2, 0, 0, 0, 0, 0]).is_err());
        assert!(s.decode(&[0, 0, 0, 0, 0]).is_err());
    }
}

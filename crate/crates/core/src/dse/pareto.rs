use super::space::Decoded;

/// Objective values and mapping of one evaluated genome.
#[derive(Debug, Clone, PartialEq)]
pub struct Objectives {
    /// Percentage points.
    pub accuracy_drop: f64,
    /// `None` when no PE grid fits the LUT budget.
    pub cycles: Option<u64>,
    pub pe_x: usize,
    pub pe_y: usize,
    pub luts: u64,
    pub brams: u64,
}

/// The two constraints of the search: maximum accuracy drop and the
/// baseline latency every design must beat or match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraints {
    pub ad_max: f64,
    pub lat_std: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub genes: Vec<usize>,
    pub decoded: Decoded,
    pub accuracy_drop: f64,
    /// `u64::MAX` for unmappable designs.
    pub cycles: u64,
    /// `Lat_std / cycles`
    pub speedup: f64,
    pub pe_x: usize,
    pub pe_y: usize,
    pub luts: u64,
    pub brams: u64,
    pub feasible: bool,
    /// Normalized total constraint violation, 0 for feasible points.
    pub violation: f64,
}

/// Violation charged to designs that do not fit the device at all.
pub const UNMAPPABLE_VIOLATION: f64 = 1e9;

impl ParetoPoint {
    pub fn new(genes: Vec<usize>, decoded: Decoded, obj: Objectives, c: &Constraints) -> Self {
        let cycles = obj.cycles.unwrap_or(u64::MAX);
        let violation = match obj.cycles {
            None => UNMAPPABLE_VIOLATION,
            Some(cy) => {
                (obj.accuracy_drop - c.ad_max).max(0.0) / c.ad_max.max(1e-9)
                    + cy.saturating_sub(c.lat_std) as f64 / c.lat_std.max(1) as f64
            }
        };
        Self {
            genes,
            decoded,
            accuracy_drop: obj.accuracy_drop,
            cycles,
            speedup: if obj.cycles.is_some() && cycles > 0 { c.lat_std as f64 / cycles as f64 } else { 0.0 },
            pe_x: obj.pe_x,
            pe_y: obj.pe_y,
            luts: obj.luts,
            brams: obj.brams,
            feasible: violation == 0.0,
            violation,
        }
    }

    /// Plain Pareto domination on (accuracy drop, cycles), both minimized.
    pub fn dominates(&self, other: &Self) -> bool {
        dominates((self.accuracy_drop, self.cycles), (other.accuracy_drop, other.cycles))
    }

    /// Constraint domination: feasible beats infeasible, smaller violation
    /// beats larger, and among feasible points plain domination applies.
    pub fn constrained_dominates(&self, other: &Self) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            (false, false) => self.violation < other.violation,
            (true, true) => self.dominates(other),
        }
    }
}

pub fn dominates(a: (f64, u64), b: (f64, u64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Points not dominated by any other, in input order.
pub fn pareto_filter(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| q.dominates(p)))
        .cloned()
        .collect()
}

/// Non-dominated subset of raw objective pairs, in input order.
pub fn pareto_filter_pairs(points: &[(f64, u64)]) -> Vec<(f64, u64)> {
    points
        .iter()
        .filter(|&&p| !points.iter().any(|&q| dominates(q, p)))
        .cloned()
        .collect()
}

/// Area dominated by `points` (both objectives minimized) inside the box
/// bounded by `reference`. Points outside the box contribute nothing.
pub fn hypervolume_2d(points: &[(f64, f64)], reference: (f64, f64)) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .cloned()
        .filter(|p| p.0 < reference.0 && p.1 < reference.1)
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hv = 0.0;
    let mut ceiling = reference.1;
    for (x, y) in pts {
        if y < ceiling {
            hv += (reference.0 - x) * (ceiling - y);
            ceiling = y;
        }
    }
    hv
}

/// Hypervolume of feasible points in objectives normalized by the
/// constraints, `(drop / Ad_max, cycles / Lat_std)`, against `(1.1, 1.1)`.
pub fn front_hypervolume(points: &[ParetoPoint], c: &Constraints) -> f64 {
    let norm: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.feasible)
        .map(|p| (p.accuracy_drop / c.ad_max, p.cycles as f64 / c.lat_std as f64))
        .collect();
    hypervolume_2d(&norm, (1.1, 1.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_filter() {
        let pts = [(0.0, 10), (1.0, 5), (2.0, 20)];
        assert_eq!(pareto_filter_pairs(&pts), vec![(0.0, 10), (1.0, 5)]);
        assert_eq!(pareto_filter_pairs(&pareto_filter_pairs(&pts)), vec![(0.0, 10), (1.0, 5)]);
        assert_eq!(pareto_filter_pairs(&[(3.0, 3)]), vec![(3.0, 3)]);
    }

    #[test]
    fn hypervolume_of_staircase() {
        // two boxes: (4-1)*(4-3) + (4-2)*(3-1)
        let hv = hypervolume_2d(&[(1.0, 3.0), (2.0, 1.0), (3.0, 3.5)], (4.0, 4.0));
        assert_eq!(hv, 3.0 + 4.0);
        assert_eq!(hypervolume_2d(&[], (1.0, 1.0)), 0.0);
        assert_eq!(hypervolume_2d(&[(5.0, 0.0)], (4.0, 4.0)), 0.0);
    }
}

//! Constrained NSGA-II over integer genomes.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kv::{Document, Writer};
use crate::store::read_text;

use super::fitness::Fitness;
use super::pareto::{front_hypervolume, Constraints, ParetoPoint};
use super::space::DesignSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossover {
    /// Each gene taken from either parent with probability `uniform_rate`.
    Uniform,
    /// Simulated binary crossover on the gene indices, rounded.
    Sbx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub crossover: Crossover,
    pub crossover_prob: f64,
    pub uniform_rate: f64,
    pub eta_c: f64,
    pub eta_m: f64,
    /// Per-gene mutation probability; `None` means `1 / genome length`.
    pub mutation_prob: Option<f64>,
    /// Stop after this many generations without a change of the front.
    pub patience: usize,
    pub seed: u64,
    /// Worker threads for fitness evaluation; 0 uses rayon's default.
    pub jobs: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 250,
            generations: 20,
            crossover: Crossover::Uniform,
            crossover_prob: 0.9,
            uniform_rate: 0.5,
            eta_c: 15.0,
            eta_m: 5.0,
            mutation_prob: None,
            patience: 5,
            seed: 1,
            jobs: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {p} is not a probability")))
            }
        };
        if self.population < 2 {
            return Err(Error::InvalidConfig("population must be at least 2".into()));
        }
        if self.generations == 0 {
            return Err(Error::InvalidConfig("generations must be positive".into()));
        }
        prob("crossover_prob", self.crossover_prob)?;
        prob("uniform_rate", self.uniform_rate)?;
        if let Some(p) = self.mutation_prob {
            prob("mutation_prob", p)?;
        }
        if !(self.eta_c >= 0.0 && self.eta_m >= 0.0) {
            return Err(Error::InvalidConfig("distribution indices must be non-negative".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut w = Writer::new();
        w.kv("population", self.population)
            .kv("generations", self.generations)
            .kv("crossover", match self.crossover {
                Crossover::Uniform => "uniform",
                Crossover::Sbx => "sbx",
            })
            .kv("crossover_prob", self.crossover_prob)
            .kv("uniform_rate", self.uniform_rate)
            .kv("eta_c", self.eta_c)
            .kv("eta_m", self.eta_m);
        if let Some(p) = self.mutation_prob {
            w.kv("mutation_prob", p);
        }
        w.kv("patience", self.patience).kv("seed", self.seed);
        w.finish()
    }
}

/// GA settings file. Besides the [`GaParams`] keys it may carry `ad_max` and
/// `lat_std`, returned separately.
pub fn parse_ga_config(name: &str, text: &str) -> Result<(GaParams, Option<f64>, Option<u64>)> {
    let doc = Document::parse(name, text, false)?;
    let v = doc.view(doc.root());
    v.deny_unknown(&[
        "population",
        "generations",
        "crossover",
        "crossover_prob",
        "uniform_rate",
        "eta_c",
        "eta_m",
        "mutation_prob",
        "patience",
        "seed",
        "jobs",
        "ad_max",
        "lat_std",
    ])?;
    let d = GaParams::default();
    let crossover = match v.get_opt::<String>("crossover")?.as_deref() {
        None | Some("uniform") => Crossover::Uniform,
        Some("sbx") => Crossover::Sbx,
        Some(other) => return Err(Error::InvalidConfig(format!("unknown crossover `{other}`"))),
    };
    let p = GaParams {
        population: v.get_opt("population")?.unwrap_or(d.population),
        generations: v.get_opt("generations")?.unwrap_or(d.generations),
        crossover,
        crossover_prob: v.get_opt("crossover_prob")?.unwrap_or(d.crossover_prob),
        uniform_rate: v.get_opt("uniform_rate")?.unwrap_or(d.uniform_rate),
        eta_c: v.get_opt("eta_c")?.unwrap_or(d.eta_c),
        eta_m: v.get_opt("eta_m")?.unwrap_or(d.eta_m),
        mutation_prob: v.get_opt("mutation_prob")?,
        patience: v.get_opt("patience")?.unwrap_or(d.patience),
        seed: v.get_opt("seed")?.unwrap_or(d.seed),
        jobs: v.get_opt("jobs")?.unwrap_or(d.jobs),
    };
    p.validate()?;
    Ok((p, v.get_opt("ad_max")?, v.get_opt("lat_std")?))
}

pub fn load_ga_config(path: impl AsRef<Path>) -> Result<(GaParams, Option<f64>, Option<u64>)> {
    let path = path.as_ref();
    parse_ga_config(&path.display().to_string(), &read_text(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub evaluations: usize,
    pub front_size: usize,
    pub best_drop: Option<f64>,
    pub best_cycles: Option<u64>,
    pub hypervolume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreResult {
    /// Feasible, mutually non-dominated points sorted by cycles.
    pub front: Vec<ParetoPoint>,
    pub history: Vec<GenerationStats>,
    /// Distinct genomes evaluated.
    pub evaluations: usize,
    pub generations_run: usize,
}

struct Evaluator<'a> {
    space: &'a DesignSpace,
    fitness: &'a dyn Fitness,
    constraints: Constraints,
    cache: HashMap<Vec<usize>, ParetoPoint>,
}

impl Evaluator<'_> {
    fn evaluate_all(&mut self, genomes: &[Vec<usize>]) -> Result<()> {
        let mut fresh: Vec<&Vec<usize>> = genomes.iter().filter(|g| !self.cache.contains_key(*g)).collect();
        fresh.sort();
        fresh.dedup();
        let (space, fitness, c) = (self.space, self.fitness, self.constraints);
        let done = fresh
            .par_iter()
            .map(|g| {
                let d = space.decode(g)?;
                let obj = fitness.evaluate(&d)?;
                Ok(ParetoPoint::new((*g).clone(), d, obj, &c))
            })
            .collect::<Result<Vec<_>>>()?;
        for p in done {
            self.cache.insert(p.genes.clone(), p);
        }
        Ok(())
    }

    fn point(&self, g: &[usize]) -> &ParetoPoint {
        &self.cache[g]
    }
}

/// Fast non-dominated sort under constraint domination; returns fronts of
/// indices into `pts`.
fn nondominated_sort(pts: &[&ParetoPoint]) -> Vec<Vec<usize>> {
    let n = pts.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if pts[i].constrained_dominates(pts[j]) {
                dominates[i].push(j);
                dominated_by[j] += 1;
            } else if pts[j].constrained_dominates(pts[i]) {
                dominates[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (same order).
fn crowding(pts: &[&ParetoPoint], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let objectives: [fn(&ParetoPoint) -> f64; 2] = [
        |p| if p.feasible { p.accuracy_drop } else { p.violation },
        |p| if p.feasible { p.cycles as f64 } else { p.violation },
    ];
    for f in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| f(pts[front[a]]).total_cmp(&f(pts[front[b]])).then(a.cmp(&b)));
        let lo = f(pts[front[order[0]]]);
        let hi = f(pts[front[order[n - 1]]]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..n - 1 {
                let gap = f(pts[front[order[k + 1]]]) - f(pts[front[order[k - 1]]]);
                dist[order[k]] += gap / (hi - lo);
            }
        }
    }
    dist
}

/// Rank and crowding distance of every genome in `pop`.
fn rank_population(pts: &[&ParetoPoint]) -> (Vec<usize>, Vec<f64>, Vec<Vec<usize>>) {
    let fronts = nondominated_sort(pts);
    let mut rank = vec![0; pts.len()];
    let mut crowd = vec![0.0; pts.len()];
    for (r, f) in fronts.iter().enumerate() {
        for (&i, d) in f.iter().zip(crowding(pts, f)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (rank, crowd, fronts)
}

fn tournament(rng: &mut ChaCha8Rng, rank: &[usize], crowd: &[f64]) -> usize {
    let a = rng.gen_range(0..rank.len());
    let b = rng.gen_range(0..rank.len());
    if rank[a] != rank[b] {
        return if rank[a] < rank[b] { a } else { b };
    }
    if crowd[b] > crowd[a] {
        b
    } else {
        a
    }
}

/// Polynomial perturbation `delta` in [-1, 1] for distribution index `eta`.
fn poly_delta(rng: &mut ChaCha8Rng, eta: f64) -> f64 {
    let u: f64 = rng.gen();
    if u < 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0)) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta + 1.0))
    }
}

/// Index genes live on `[-0.5, n - 0.5]` so every choice is reachable after
/// rounding.
fn round_gene(x: f64, n: usize) -> usize {
    x.round().clamp(0.0, (n - 1) as f64) as usize
}

fn mutate(rng: &mut ChaCha8Rng, g: &mut [usize], bounds: &[usize], prob: f64, eta: f64) {
    for (gene, &n) in g.iter_mut().zip(bounds) {
        if n > 1 && rng.gen::<f64>() < prob {
            let x = *gene as f64 + poly_delta(rng, eta) * n as f64;
            *gene = round_gene(x, n);
        }
    }
}

fn sbx_pair(rng: &mut ChaCha8Rng, a: usize, b: usize, n: usize, eta: f64) -> (usize, usize) {
    let u: f64 = rng.gen();
    let beta = if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    };
    let (x, y) = (a as f64, b as f64);
    let c1 = 0.5 * ((1.0 + beta) * x + (1.0 - beta) * y);
    let c2 = 0.5 * ((1.0 - beta) * x + (1.0 + beta) * y);
    (round_gene(c1, n), round_gene(c2, n))
}

fn crossover(
    rng: &mut ChaCha8Rng,
    p: &GaParams,
    a: &[usize],
    b: &[usize],
    bounds: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let (mut c1, mut c2) = (a.to_vec(), b.to_vec());
    if rng.gen::<f64>() >= p.crossover_prob {
        return (c1, c2);
    }
    for i in 0..c1.len() {
        match p.crossover {
            Crossover::Uniform => {
                if rng.gen::<f64>() < p.uniform_rate {
                    std::mem::swap(&mut c1[i], &mut c2[i]);
                }
            }
            Crossover::Sbx => {
                if a[i] != b[i] && rng.gen::<f64>() < 0.5 {
                    (c1[i], c2[i]) = sbx_pair(rng, a[i], b[i], bounds[i], p.eta_c);
                }
            }
        }
    }
    (c1, c2)
}

/// Feasible, mutually non-dominated, distinct-objective points of `pts`,
/// sorted by cycles then drop then genome.
fn feasible_front<'p>(pts: impl Iterator<Item = &'p ParetoPoint>) -> Vec<ParetoPoint> {
    let feasible: Vec<&ParetoPoint> = pts.filter(|p| p.feasible).collect();
    let mut front: Vec<ParetoPoint> = feasible
        .iter()
        .filter(|p| !feasible.iter().any(|q| q.dominates(p)))
        .map(|p| (*p).clone())
        .collect();
    front.sort_by(|a, b| {
        a.cycles
            .cmp(&b.cycles)
            .then(a.accuracy_drop.total_cmp(&b.accuracy_drop))
            .then(a.genes.cmp(&b.genes))
    });
    front.dedup_by(|b, a| a.cycles == b.cycles && a.accuracy_drop == b.accuracy_drop);
    front
}

fn run_in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// NSGA-II with constraint domination and (μ+λ) survival. Deterministic for
/// a given seed regardless of `jobs`.
pub fn explore(
    space: &DesignSpace,
    fitness: &dyn Fitness,
    constraints: Constraints,
    params: &GaParams,
) -> Result<ExploreResult> {
    params.validate()?;
    if space.layers.is_empty() {
        return Err(Error::InvalidConfig("degenerate design space".into()));
    }
    run_in_pool(params.jobs, || explore_inner(space, fitness, constraints, params))?
}

fn explore_inner(
    space: &DesignSpace,
    fitness: &dyn Fitness,
    constraints: Constraints,
    params: &GaParams,
) -> Result<ExploreResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let bounds = space.gene_bounds();
    let mutation_prob = params.mutation_prob.unwrap_or(1.0 / bounds.len() as f64);
    let mut ev = Evaluator { space, fitness, constraints, cache: HashMap::new() };

    let mut pop: Vec<Vec<usize>> = (0..params.population)
        .map(|_| bounds.iter().map(|&n| rng.gen_range(0..n)).collect())
        .collect();
    pop.sort();
    pop.dedup();
    pop.shuffle(&mut rng);
    ev.evaluate_all(&pop)?;

    let mut history = Vec::new();
    let mut last_front: Option<BTreeSet<Vec<usize>>> = None;
    let mut unchanged = 0;
    let mut generations_run = 0;
    for gen in 0..params.generations {
        generations_run = gen + 1;
        let pts: Vec<&ParetoPoint> = pop.iter().map(|g| ev.point(g)).collect();
        let (rank, crowd, _) = rank_population(&pts);

        let mut offspring = Vec::with_capacity(params.population);
        while offspring.len() < params.population {
            let a = tournament(&mut rng, &rank, &crowd);
            let b = tournament(&mut rng, &rank, &crowd);
            let (mut c1, mut c2) = crossover(&mut rng, params, &pop[a], &pop[b], &bounds);
            mutate(&mut rng, &mut c1, &bounds, mutation_prob, params.eta_m);
            mutate(&mut rng, &mut c2, &bounds, mutation_prob, params.eta_m);
            offspring.push(c1);
            if offspring.len() < params.population {
                offspring.push(c2);
            }
        }
        ev.evaluate_all(&offspring)?;

        // (mu + lambda) survival over distinct genomes
        let mut union: Vec<Vec<usize>> = pop.iter().chain(&offspring).cloned().collect();
        union.sort();
        union.dedup();
        let pts: Vec<&ParetoPoint> = union.iter().map(|g| ev.point(g)).collect();
        let (_, crowd, fronts) = rank_population(&pts);
        let mut next: Vec<usize> = Vec::with_capacity(params.population);
        for f in &fronts {
            if next.len() + f.len() <= params.population {
                next.extend(f);
            } else {
                let mut rest = f.clone();
                rest.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]).then(a.cmp(&b)));
                next.extend(rest.into_iter().take(params.population - next.len()));
                break;
            }
        }
        pop = next.into_iter().map(|i| union[i].clone()).collect();

        let front = feasible_front(pop.iter().map(|g| ev.point(g)));
        let stats = GenerationStats {
            generation: gen + 1,
            evaluations: ev.cache.len(),
            front_size: front.len(),
            best_drop: front.iter().map(|p| p.accuracy_drop).min_by(f64::total_cmp),
            best_cycles: front.iter().map(|p| p.cycles).min(),
            hypervolume: front_hypervolume(&front, &constraints),
        };
        log::info!(
            "generation {}: {} evaluations, front {} points, hypervolume {:.4}",
            stats.generation,
            stats.evaluations,
            stats.front_size,
            stats.hypervolume
        );
        history.push(stats);
        let genomes: BTreeSet<Vec<usize>> = front.iter().map(|p| p.genes.clone()).collect();
        if last_front.as_ref() == Some(&genomes) {
            unchanged += 1;
            if unchanged >= params.patience && params.patience > 0 {
                break;
            }
        } else {
            unchanged = 0;
        }
        last_front = Some(genomes);
    }

    let front = feasible_front(pop.iter().map(|g| ev.point(g)));
    if front.is_empty() {
        log::warn!(
            "no feasible design after {generations_run} generations (Ad_max {}, Lat_std {})",
            constraints.ad_max,
            constraints.lat_std
        );
    }
    Ok(ExploreResult { front, history, evaluations: ev.cache.len(), generations_run })
}

/// Evaluates every genome of `space` and returns the feasible Pareto front,
/// sorted like [`explore`]'s.
pub fn exhaustive_front(space: &DesignSpace, fitness: &dyn Fitness, constraints: Constraints) -> Result<Vec<ParetoPoint>> {
    let all: Vec<Vec<usize>> = space.enumerate().collect();
    let mut ev = Evaluator { space, fitness, constraints, cache: HashMap::new() };
    ev.evaluate_all(&all)?;
    Ok(feasible_front(all.iter().map(|g| ev.point(g))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dse::pareto::Objectives;
    use crate::dse::space::Decoded;

    struct Sum;
    impl Fitness for Sum {
        fn evaluate(&self, d: &Decoded) -> Result<Objectives> {
            let p: usize = d.stages.iter().map(|s| s.1).sum();
            Ok(Objectives {
                accuracy_drop: 1.0 / p as f64,
                cycles: Some((p * d.shifts) as u64),
                pe_x: 1,
                pe_y: 1,
                luts: 0,
                brams: 0,
            })
        }
    }

    #[test]
    fn single_point_space() {
        let s = DesignSpace::new(vec![1], vec![2], vec![2], vec![2], vec![1], vec![0]).unwrap();
        let c = Constraints { ad_max: 2.0, lat_std: 10 };
        let r = explore(&s, &Sum, c, &GaParams { population: 4, generations: 3, ..GaParams::default() }).unwrap();
        assert_eq!(r.front.len(), 1);
        assert_eq!(r.front[0].genes, vec![0, 0, 0, 0, 0]);
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn mutation_reaches_every_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [false; 4];
        for _ in 0..500 {
            let mut g = vec![0];
            mutate(&mut rng, &mut g, &[4], 1.0, 5.0);
            seen[g[0]] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn ga_config_round_trip() {
        let p = GaParams { crossover: Crossover::Sbx, mutation_prob: Some(0.25), seed: 9, ..GaParams::default() };
        let (q, ad, lat) = parse_ga_config("ga", &p.to_text()).unwrap();
        assert_eq!((q, ad, lat), (p, None, None));
        assert!(parse_ga_config("ga", "crossover_prob = 1.5").is_err());
        assert!(parse_ga_config("ga", "bogus = 1").is_err());
    }
}

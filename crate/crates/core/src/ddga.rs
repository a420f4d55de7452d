//! Genetic search over the physical parameter plus three predictor genes
//! (temporal neighbors, spatial neighbors, truncation order). Fitness comes
//! from the barycentric predictor, never from a high-fidelity solve.

use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::barycentric::{interpolate_reduced, reconstruct_field, FixedPointConfig, InterpolationRequest};
use crate::error::{ensure_arg, Error, Result};
use crate::objective::{cost, fitness, Target};
use crate::pod::RomDatabase;

/// Cost assigned to chromosomes whose prediction fails.
pub const PENALTY_COST: f64 = f64::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chromosome {
    pub delta: f64,
    pub ne_t: usize,
    pub ne_x: usize,
    pub m: usize,
}

impl Chromosome {
    pub fn request(&self) -> InterpolationRequest {
        InterpolationRequest {
            delta_new: self.delta,
            ne_x: self.ne_x,
            ne_t: self.ne_t,
            m: self.m,
        }
    }
}

/// Box constraints on the genes. Both neighbor genes share one range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub delta: (f64, f64),
    pub ne: (usize, usize),
    pub m: (usize, usize),
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        ensure_arg!(
            self.delta.0.is_finite() && self.delta.1.is_finite() && self.delta.0 <= self.delta.1,
            "delta bounds {:?} are not an interval",
            self.delta
        );
        ensure_arg!(self.ne.0 >= 2 && self.ne.0 <= self.ne.1, "neighbor bounds {:?} invalid", self.ne);
        ensure_arg!(self.m.0 >= 1 && self.m.0 <= self.m.1, "order bounds {:?} invalid", self.m);
        Ok(())
    }

    /// Checks the bounds against the training hull, `N_p` and `q`.
    pub fn validate_for(&self, db: &RomDatabase) -> Result<()> {
        self.validate()?;
        let (lo, hi) = db.hull();
        ensure_arg!(
            self.delta.0 >= lo && self.delta.1 <= hi,
            "delta bounds {:?} leave the training hull [{lo}, {hi}]",
            self.delta
        );
        ensure_arg!(
            self.ne.1 <= db.n_params(),
            "neighbor bound {} exceeds the {} training samples",
            self.ne.1,
            db.n_params()
        );
        ensure_arg!(self.m.1 <= db.q, "order bound {} exceeds q = {}", self.m.1, db.q);
        Ok(())
    }

    pub fn contains(&self, c: &Chromosome) -> bool {
        c.delta >= self.delta.0
            && c.delta <= self.delta.1
            && (self.ne.0..=self.ne.1).contains(&c.ne_t)
            && (self.ne.0..=self.ne.1).contains(&c.ne_x)
            && (self.m.0..=self.m.1).contains(&c.m)
    }

    pub fn clamp(&self, c: Chromosome) -> Chromosome {
        Chromosome {
            delta: c.delta.clamp(self.delta.0, self.delta.1),
            ne_t: c.ne_t.clamp(self.ne.0, self.ne.1),
            ne_x: c.ne_x.clamp(self.ne.0, self.ne.1),
            m: c.m.clamp(self.m.0, self.m.1),
        }
    }

    fn sample_gene(&self, c: &mut Chromosome, gene: usize, rng: &mut impl Rng) {
        match gene {
            0 => c.delta = rng.random_range(self.delta.0..=self.delta.1),
            1 => c.ne_t = rng.random_range(self.ne.0..=self.ne.1),
            2 => c.ne_x = rng.random_range(self.ne.0..=self.ne.1),
            _ => c.m = rng.random_range(self.m.0..=self.m.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elite_count: usize,
    pub seed: u64,
    pub fixed_point: FixedPointConfig,
    pub space: SearchSpace,
}

impl GaConfig {
    /// Population 20, 30 generations, `P_c = 0.8`, `P_m = 0.1`, one elite.
    pub fn new(space: SearchSpace) -> Self {
        GaConfig {
            population_size: 20,
            generations: 30,
            crossover_prob: 0.8,
            mutation_prob: 0.1,
            elite_count: 1,
            seed: 0,
            fixed_point: FixedPointConfig::default(),
            space,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_arg!(self.population_size >= 2, "population size must be at least 2");
        ensure_arg!(
            (0.0..=1.0).contains(&self.crossover_prob),
            "crossover probability {} outside [0, 1]",
            self.crossover_prob
        );
        ensure_arg!(
            (0.0..=1.0).contains(&self.mutation_prob),
            "mutation probability {} outside [0, 1]",
            self.mutation_prob
        );
        ensure_arg!(
            self.elite_count < self.population_size,
            "elite count {} must be below the population size {}",
            self.elite_count,
            self.population_size
        );
        self.fixed_point.validate()?;
        self.space.validate()
    }
}

/// Generator used by [`run`]; exposed so callers can drive the operators.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn init_population(cfg: &GaConfig, rng: &mut impl Rng) -> Vec<Chromosome> {
    let s = &cfg.space;
    (0..cfg.population_size)
        .map(|_| {
            let mut c = Chromosome {
                delta: s.delta.0,
                ne_t: s.ne.0,
                ne_x: s.ne.0,
                m: s.m.0,
            };
            for gene in 0..4 {
                s.sample_gene(&mut c, gene, rng);
            }
            c
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub costs: Vec<f64>,
    pub fitness: Vec<f64>,
}

/// Cost of one chromosome, or the penalty if the prediction is rejected.
pub fn chromosome_cost(c: &Chromosome, db: &RomDatabase, target: &Target, fp: &FixedPointConfig) -> f64 {
    let cols: Vec<usize> = (0..db.n_time()).collect();
    interpolate_reduced(db, &c.request(), fp)
        .and_then(|res| reconstruct_field(db, &res.y_reduced, target.mask().indices(), &cols))
        .and_then(|theta| cost(&theta, target))
        .unwrap_or(PENALTY_COST)
}

/// Evaluates every chromosome concurrently; consumes no randomness.
pub fn evaluate(pop: &[Chromosome], db: &RomDatabase, target: &Target, cfg: &GaConfig) -> Result<Evaluation> {
    ensure_arg!(
        target.times().n_steps() == db.n_time(),
        "target has {} instants, database {}",
        target.times().n_steps(),
        db.n_time()
    );
    ensure_arg!(
        target.mask().indices().iter().all(|&j| j < db.n_space()),
        "target mask indexes cells outside the database grid"
    );
    let costs: Vec<f64> = pop
        .par_iter()
        .map(|c| chromosome_cost(c, db, target, &cfg.fixed_point))
        .collect();
    let fitness = costs.iter().map(|&j| fitness(j)).collect::<Result<_>>()?;
    Ok(Evaluation { costs, fitness })
}

/// `P_j = f_j / Σ f_i`.
pub fn selection_probabilities(fitness: &[f64]) -> Result<Vec<f64>> {
    check_fitness(fitness)?;
    let total: f64 = fitness.iter().sum();
    Ok(fitness.iter().map(|f| f / total).collect())
}

fn check_fitness(fitness: &[f64]) -> Result<()> {
    ensure_arg!(!fitness.is_empty(), "no fitness values to select from");
    ensure_arg!(
        fitness.iter().all(|f| f.is_finite() && *f > 0.0),
        "roulette selection needs finite positive fitness"
    );
    Ok(())
}

/// `count` independent draws with probability proportional to fitness.
pub fn roulette_select(fitness: &[f64], count: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    check_fitness(fitness)?;
    let wheel = WeightedIndex::new(fitness).map_err(|e| Error::Argument(format!("roulette wheel: {e}")))?;
    Ok((0..count).map(|_| wheel.sample(rng)).collect())
}

/// Blend of `δ` with weight `beta` and exchange of the integer genes
/// `[ne_t, ne_x, m]` after position `cut` (1 or 2).
pub fn recombine(p1: &Chromosome, p2: &Chromosome, beta: f64, cut: usize, space: &SearchSpace) -> (Chromosome, Chromosome) {
    let g1 = [p1.ne_t, p1.ne_x, p1.m];
    let g2 = [p2.ne_t, p2.ne_x, p2.m];
    let mut c1 = g1;
    let mut c2 = g2;
    c1[cut..].copy_from_slice(&g2[cut..]);
    c2[cut..].copy_from_slice(&g1[cut..]);
    let child = |d: f64, g: [usize; 3]| {
        space.clamp(Chromosome {
            delta: d,
            ne_t: g[0],
            ne_x: g[1],
            m: g[2],
        })
    };
    (
        child(beta * p1.delta + (1.0 - beta) * p2.delta, c1),
        child((1.0 - beta) * p1.delta + beta * p2.delta, c2),
    )
}

pub fn crossover(p1: &Chromosome, p2: &Chromosome, rng: &mut impl Rng, cfg: &GaConfig) -> (Chromosome, Chromosome) {
    if rng.random::<f64>() >= cfg.crossover_prob {
        return (*p1, *p2);
    }
    let beta = rng.random::<f64>();
    let cut = rng.random_range(1..=2);
    recombine(p1, p2, beta, cut, &cfg.space)
}

pub fn mutate(c: &Chromosome, rng: &mut impl Rng, cfg: &GaConfig) -> Chromosome {
    let mut out = *c;
    if rng.random::<f64>() < cfg.mutation_prob {
        let gene = rng.random_range(0..4);
        cfg.space.sample_gene(&mut out, gene, rng);
    }
    out
}

/// Indices sorted by increasing cost; ties keep population order.
fn ranking(costs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..costs.len()).collect();
    idx.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    idx
}

pub fn step_generation(
    pop: &[Chromosome],
    eval: &Evaluation,
    rng: &mut impl Rng,
    cfg: &GaConfig,
) -> Result<Vec<Chromosome>> {
    ensure_arg!(
        eval.costs.len() == pop.len() && eval.fitness.len() == pop.len(),
        "evaluation does not match the population"
    );
    let n = cfg.population_size;
    let mut next: Vec<Chromosome> = ranking(&eval.costs)
        .into_iter()
        .take(cfg.elite_count)
        .map(|i| pop[i])
        .collect();
    let pairs = (n - next.len()).div_ceil(2);
    let parents = roulette_select(&eval.fitness, 2 * pairs, rng)?;
    for pair in parents.chunks_exact(2) {
        let (a, b) = crossover(&pop[pair[0]], &pop[pair[1]], rng, cfg);
        next.push(mutate(&a, rng, cfg));
        next.push(mutate(&b, rng, cfg));
    }
    next.truncate(n);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    /// 1-based; generation 1 is the initial population.
    pub generation: usize,
    pub best: Chromosome,
    pub best_cost: f64,
    pub avg_cost: f64,
    /// FNV-1a over the genes of the whole population.
    pub digest: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaHistory {
    pub records: Vec<GenerationRecord>,
}

pub const HISTORY_HEADER: &str = "generation,best_delta,best_ne_t,best_ne_x,best_m,best_cost,avg_cost";

impl GaHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.generation, r.best.delta, r.best.ne_t, r.best.ne_x, r.best.m, r.best_cost, r.avg_cost
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv()).map_err(|e| Error::io(path.as_ref(), e))
    }

    /// Parses the CSV form. Digests are not stored and come back as zero.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HISTORY_HEADER) {
            return Err(Error::Format(format!("history CSV must start with `{HISTORY_HEADER}`")));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::Format(format!("history line {}: malformed row", i + 2));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
            records.push(GenerationRecord {
                generation: int(f[0])?,
                best: Chromosome {
                    delta: real(f[1])?,
                    ne_t: int(f[2])?,
                    ne_x: int(f[3])?,
                    m: int(f[4])?,
                },
                best_cost: real(f[5])?,
                avg_cost: real(f[6])?,
                digest: 0,
            });
        }
        Ok(GaHistory { records })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::parse_csv(&text)
    }
}

pub fn population_digest(pop: &[Chromosome]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for c in pop {
        feed(c.delta.to_bits());
        feed(c.ne_t as u64);
        feed(c.ne_x as u64);
        feed(c.m as u64);
    }
    h
}

fn record(generation: usize, pop: &[Chromosome], eval: &Evaluation) -> GenerationRecord {
    let best = ranking(&eval.costs)[0];
    let n = eval.costs.len() as f64;
    GenerationRecord {
        generation,
        best: pop[best],
        best_cost: eval.costs[best],
        avg_cost: eval.costs.iter().map(|c| c / n).sum(),
        digest: population_digest(pop),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: Chromosome,
    pub best_cost: f64,
    pub history: GaHistory,
}

/// Runs `max(generations, 1)` generations, the first being the initial
/// population, and returns the best chromosome seen.
pub fn run(cfg: &GaConfig, db: &RomDatabase, target: &Target) -> Result<GaOutcome> {
    cfg.validate()?;
    cfg.space.validate_for(db)?;
    let mut rng = seeded_rng(cfg.seed);
    let mut pop = init_population(cfg, &mut rng);
    let mut eval = evaluate(&pop, db, target, cfg)?;
    let mut history = GaHistory::default();
    history.records.push(record(1, &pop, &eval));
    for generation in 2..=cfg.generations {
        pop = step_generation(&pop, &eval, &mut rng, cfg)?;
        eval = evaluate(&pop, db, target, cfg)?;
        history.records.push(record(generation, &pop, &eval));
    }
    let best = history
        .records
        .iter()
        .min_by(|a, b| a.best_cost.total_cmp(&b.best_cost))
        .expect("history is never empty");
    Ok(GaOutcome {
        best: best.best,
        best_cost: best.best_cost,
        history,
    })
}

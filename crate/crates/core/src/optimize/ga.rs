//! Real-coded genetic algorithm over `(upper, lower)` transition-bound pairs.
//!
//! Tournament selection, one-point crossover (which for two genes swaps the
//! lower bounds), Gaussian mutation and elitism. Fitness is minimised. All
//! randomness comes from one seeded generator consumed sequentially; fitness
//! evaluations run in parallel but are collected in population order, so the
//! result does not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::error::{param, Result};
use crate::masks::TransitionBounds;

/// Smallest gap kept between the two bounds by the repair step.
const MIN_GAP: f64 = 1e-3;

/// Closed ranges for each gene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub upper: (f64, f64),
    pub lower: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        SearchBox {
            upper: (0.5 + MIN_GAP, 1.0),
            lower: (0.5, 1.0 - MIN_GAP),
        }
    }
}

impl SearchBox {
    /// A box holding a single pair.
    pub fn point(bounds: TransitionBounds) -> Self {
        SearchBox {
            upper: (bounds.upper(), bounds.upper()),
            lower: (bounds.lower(), bounds.lower()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (u0, u1) = self.upper;
        let (l0, l1) = self.lower;
        if !(u0 <= u1 && l0 <= l1) {
            return Err(param("search box ranges must be ordered"));
        }
        if !(l0 >= 0.5 && u1 <= 1.0) {
            return Err(param("search box must lie inside [0.5, 1]²"));
        }
        if l0 >= u1 {
            return Err(param("search box holds no pair with lower < upper"));
        }
        Ok(())
    }

    /// Clamps a pair into the box and restores `lower < upper`.
    pub fn repair(&self, upper: f64, lower: f64) -> TransitionBounds {
        let mut u = upper.clamp(self.upper.0, self.upper.1);
        let mut l = lower.clamp(self.lower.0, self.lower.1);
        if l >= u {
            l = (u - MIN_GAP).clamp(self.lower.0, self.lower.1);
            if l >= u {
                u = (l + MIN_GAP).clamp(self.upper.0, self.upper.1);
            }
            if l >= u {
                // box corner where only l0 < u1 is feasible
                u = self.upper.1;
                l = self.lower.0;
            }
        }
        TransitionBounds::new(u, l).expect("validated box always yields valid bounds")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub mutation_sigma: f64,
    pub tournament_size: usize,
    pub elitism: usize,
    pub seed: u64,
    pub search_box: SearchBox,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            generations: 100,
            mutation_rate: 0.2,
            crossover_rate: 0.8,
            mutation_sigma: 0.02,
            tournament_size: 3,
            elitism: 2,
            seed: 0,
            search_box: SearchBox::default(),
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(param("population must be at least 4"));
        }
        for (name, p) in [
            ("mutation rate", self.mutation_rate),
            ("crossover rate", self.crossover_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(param(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return Err(param("mutation sigma must be non-negative"));
        }
        if self.tournament_size == 0 || self.elitism >= self.population {
            return Err(param("tournament size must be >= 1 and elitism < population"));
        }
        self.search_box.validate()
    }
}

/// Best individual after each generation; generation 0 is the initial
/// population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub best: TransitionBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub history: Vec<GenerationRecord>,
    pub best: (TransitionBounds, f64),
    /// Every distinct pair evaluated during the run, ascending fitness.
    pub evaluated: Vec<(TransitionBounds, f64)>,
}

impl GaOutcome {
    /// Distinct pairs whose fitness is within `rel` of the best.
    pub fn within(&self, rel: f64) -> Vec<(TransitionBounds, f64)> {
        let limit = self.best.1 * (1.0 + rel);
        self.evaluated
            .iter()
            .copied()
            .filter(|(_, f)| *f <= limit)
            .collect()
    }
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// Minimises `fitness` over the configured search box.
pub fn run_ga<F>(cfg: &GaConfig, fitness: F) -> Result<GaOutcome>
where
    F: Fn(TransitionBounds) -> f64 + Sync,
{
    cfg.validate()?;
    let bx = cfg.search_box;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mutation = Normal::new(0.0, cfg.mutation_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| param(e.to_string()))?;
    let mut seen: BTreeMap<(u64, u64), (TransitionBounds, f64)> = BTreeMap::new();

    let evaluate = |genes: Vec<TransitionBounds>,
                    seen: &mut BTreeMap<(u64, u64), (TransitionBounds, f64)>|
     -> Vec<(TransitionBounds, f64)> {
        let scores: Vec<f64> = genes
            .par_iter()
            .map(|b| {
                let key = (b.upper().to_bits(), b.lower().to_bits());
                match seen.get(&key) {
                    Some(&(_, f)) => f,
                    None => sanitize(fitness(*b)),
                }
            })
            .collect();
        genes
            .into_iter()
            .zip(scores)
            .map(|(b, f)| {
                seen.insert((b.upper().to_bits(), b.lower().to_bits()), (b, f));
                (b, f)
            })
            .collect()
    };

    let sample = |rng: &mut ChaCha8Rng, range: (f64, f64)| {
        if range.0 == range.1 {
            range.0
        } else {
            rng.gen_range(range.0..=range.1)
        }
    };
    let initial: Vec<TransitionBounds> = (0..cfg.population)
        .map(|_| {
            let u = sample(&mut rng, bx.upper);
            let l = sample(&mut rng, bx.lower);
            bx.repair(u, l)
        })
        .collect();
    let mut pop = evaluate(initial, &mut seen);
    // stable sort keeps earlier individuals ahead on ties
    pop.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut history = vec![GenerationRecord {
        generation: 0,
        best_fitness: pop[0].1,
        best: pop[0].0,
    }];

    for generation in 1..=cfg.generations {
        let tournament = |rng: &mut ChaCha8Rng| -> TransitionBounds {
            let mut winner = rng.gen_range(0..pop.len());
            for _ in 1..cfg.tournament_size {
                let c = rng.gen_range(0..pop.len());
                if pop[c].1 < pop[winner].1 {
                    winner = c;
                }
            }
            pop[winner].0
        };

        let mut children = Vec::with_capacity(cfg.population - cfg.elitism);
        while children.len() < cfg.population - cfg.elitism {
            let a = tournament(&mut rng);
            let b = tournament(&mut rng);
            let (mut c1, mut c2) = ((a.upper(), a.lower()), (b.upper(), b.lower()));
            if rng.gen_bool(cfg.crossover_rate) {
                std::mem::swap(&mut c1.1, &mut c2.1);
            }
            for child in [c1, c2] {
                if children.len() == cfg.population - cfg.elitism {
                    break;
                }
                let (mut u, mut l) = child;
                if rng.gen_bool(cfg.mutation_rate) {
                    u += mutation.sample(&mut rng);
                }
                if rng.gen_bool(cfg.mutation_rate) {
                    l += mutation.sample(&mut rng);
                }
                children.push(bx.repair(u, l));
            }
        }

        let mut next: Vec<(TransitionBounds, f64)> = pop[..cfg.elitism].to_vec();
        next.extend(evaluate(children, &mut seen));
        next.sort_by(|a, b| a.1.total_cmp(&b.1));
        pop = next;
        history.push(GenerationRecord {
            generation,
            best_fitness: pop[0].1,
            best: pop[0].0,
        });
    }

    let mut evaluated: Vec<(TransitionBounds, f64)> = seen.into_values().collect();
    evaluated.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(GaOutcome {
        best: pop[0],
        history,
        evaluated,
    })
}

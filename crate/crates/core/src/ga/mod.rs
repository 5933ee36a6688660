//! Truncation-selection genetic algorithm with Gaussian mutation and a
//! single re-evaluated elite.

mod checkpoint;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use thiserror::Error;

use crate::error::Error;
use crate::fixedpoint::{quantize_raw, QFormat};
use crate::network::{Genome, GenomeId, Lineage, NetworkSpec};
use crate::rng::{self, derive, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub truncation: usize,
    pub elites: usize,
    pub sigma: f64,
    pub reevals: usize,
    pub generations: u32,
    pub master_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 1001,
            truncation: 20,
            elites: 1,
            sigma: 0.002,
            reevals: 5,
            generations: 1,
            master_seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |field: &str, why: &str| Err(Error::config(format!("ga.{field}: {why}")));
        if self.population < 2 {
            return bad("population", "must be at least 2");
        }
        if self.truncation == 0 || self.truncation >= self.population {
            return bad("truncation", "must satisfy 0 < truncation < population");
        }
        if self.elites != 1 {
            return bad("elites", "exactly one elite is supported");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma", "must be positive and finite");
        }
        if self.reevals == 0 {
            return bad("reevals", "must be at least 1");
        }
        Ok(())
    }
}

/// Genome id for individual `i` of generation `g`.
pub fn genome_id(generation: u32, index: usize) -> GenomeId {
    (u64::from(generation) << 32) | index as u64
}

/// Xavier-uniform weights, bound `sqrt(6 / (fan_in + fan_out))` per layer
/// with `fan = kh * kw * channels` for convolutions. Layer `l` draws from its
/// own keyed stream.
pub fn xavier_init(spec: &NetworkSpec, seed: u64, id: GenomeId) -> Genome {
    let mut weights = Vec::with_capacity(spec.total_params());
    for (l, layer) in spec.layers().iter().enumerate() {
        let bound = xavier_bound(layer.fan_in(), layer.fan_out());
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut rng = rng::stream(seed, Domain::Xavier, l as u64);
        weights.extend(
            (0..layer.weight_count()).map(|_| quantize_raw(dist.sample(&mut rng), QFormat::WEIGHTS) as i16),
        );
    }
    Genome::from_raw(id, weights)
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `parent + sigma * N(0, 1)` in real space, requantized to the weight
/// format. The child's lineage is the parent's plus `(parent id, seed)`.
pub fn mutate(parent: &Genome, seed: u64, sigma: f64, child_id: GenomeId) -> Genome {
    let step = QFormat::WEIGHTS.step();
    let mut rng = rng::stream(seed, Domain::Mutation, 0);
    let weights = parent
        .raw()
        .iter()
        .map(|&w| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            quantize_raw(f64::from(w) * step + sigma * eps, QFormat::WEIGHTS) as i16
        })
        .collect();
    let mut lineage = parent.lineage().to_vec();
    lineage.push(Lineage { parent_id: parent.id(), mutation_seed: seed });
    Genome::from_raw(child_id, weights).with_lineage(lineage)
}

/// Parent ranks (0-based into the previous ordered population) for the
/// `count` children of generation `g`.
pub fn select_parents(master_seed: u64, generation: u32, count: usize, truncation: usize) -> Vec<usize> {
    let mut rng = rng::stream(master_seed, Domain::Parent, u64::from(generation));
    (0..count).map(|_| rng.random_range(0..truncation)).collect()
}

#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub genome: Arc<Genome>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub frames: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("evaluation failed: {0}")]
pub struct EvalError(pub String);

/// Fitness function handle. Results must come back in request order and
/// depend only on `(genome, seed)`.
pub trait Evaluator {
    fn evaluate(&mut self, requests: &[EvalRequest]) -> Result<Vec<Evaluation>, EvalError>;
}

impl<F: FnMut(&Genome, u64) -> Evaluation> Evaluator for F {
    fn evaluate(&mut self, requests: &[EvalRequest]) -> Result<Vec<Evaluation>, EvalError> {
        Ok(requests.iter().map(|r| self(&r.genome, r.seed)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: u32,
    pub elite_mean: f64,
    pub top_mean: f64,
    pub pop_mean: f64,
    pub frames: u64,
    pub wall_seconds: f64,
    pub elite_id: GenomeId,
}

/// An individual of an ordered population with its sort key.
#[derive(Debug, Clone)]
pub struct Ranked {
    pub genome: Arc<Genome>,
    pub fitness: f64,
}

/// State after a generation, handed to the observer.
pub struct GenerationState<'a> {
    pub stats: &'a GenerationStats,
    /// Ordered population, elite first.
    pub population: &'a [Ranked],
    pub elite_mean: f64,
    pub truncation: usize,
}

impl GenerationState<'_> {
    pub fn elite(&self) -> &Arc<Genome> {
        &self.population[0].genome
    }

    /// Everything needed to continue from this generation.
    pub fn checkpoint(&self, master_seed: u64) -> Checkpoint {
        Checkpoint {
            generation: self.stats.generation,
            master_seed,
            elite_mean: self.elite_mean,
            parents: self.population[..self.truncation.min(self.population.len())]
                .iter()
                .map(|r| (*r.genome).clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    /// `None` only when no generation ran.
    pub elite: Option<Arc<Genome>>,
    pub elite_mean: f64,
    pub stats: Vec<GenerationStats>,
    /// Final ordered population (ids and sort keys), elite first.
    pub population: Vec<(GenomeId, f64)>,
    pub stopped: bool,
}

#[derive(Debug, Error)]
#[error("generation {generation} aborted: {source}")]
pub struct EvolveError {
    pub generation: u32,
    /// Stats of the generations that completed.
    pub stats: Vec<GenerationStats>,
    #[source]
    pub source: EvalError,
}

/// Runs the algorithm for `cfg.generations` generations.
pub fn evolve(
    cfg: &GaConfig,
    spec: &NetworkSpec,
    evaluator: &mut dyn Evaluator,
) -> Result<EvolveOutcome, EvolveError> {
    evolve_with(cfg, spec, evaluator, None, |_| Control::Continue)
}

/// [`evolve`] with an optional resume point and a per-generation observer
/// that may stop the run after any generation.
pub fn evolve_with(
    cfg: &GaConfig,
    spec: &NetworkSpec,
    evaluator: &mut dyn Evaluator,
    resume: Option<Checkpoint>,
    mut observer: impl FnMut(&GenerationState<'_>) -> Control,
) -> Result<EvolveOutcome, EvolveError> {
    let seed = cfg.master_seed;
    let (first, mut prev, mut elite_mean) = match resume {
        Some(ck) => {
            let pop = ck
                .parents
                .into_iter()
                .enumerate()
                .map(|(i, g)| Ranked {
                    genome: Arc::new(g),
                    fitness: if i == 0 { ck.elite_mean } else { f64::NAN },
                })
                .collect();
            (ck.generation + 1, pop, ck.elite_mean)
        }
        None => (1, Vec::new(), f64::NAN),
    };
    let mut stats = Vec::new();
    let mut stopped = false;
    for g in first..=cfg.generations {
        let started = Instant::now();
        let fail = |source, stats: &Vec<GenerationStats>| EvolveError { generation: g, stats: stats.clone(), source };

        // offspring
        let n_new = cfg.population - 1;
        let children: Vec<Arc<Genome>> = if g == 1 {
            (0..n_new)
                .map(|i| Arc::new(xavier_init(spec, derive(seed, Domain::InitSeed, 0, i as u64), genome_id(g, i))))
                .collect()
        } else {
            let pool = cfg.truncation.min(prev.len());
            select_parents(seed, g, n_new, pool)
                .into_iter()
                .enumerate()
                .map(|(i, k)| {
                    let mseed = derive(seed, Domain::MutationSeed, u64::from(g), i as u64);
                    Arc::new(mutate(&prev[k].genome, mseed, cfg.sigma, genome_id(g, i)))
                })
                .collect()
        };
        let requests: Vec<EvalRequest> = children
            .iter()
            .enumerate()
            .map(|(i, c)| EvalRequest { genome: Arc::clone(c), seed: derive(seed, Domain::EvalSeed, u64::from(g), i as u64) })
            .collect();
        let evals = evaluator.evaluate(&requests).map_err(|e| fail(e, &stats))?;
        let mut frames: u64 = evals.iter().map(|e| e.frames).sum();
        let mut ranked: Vec<Ranked> = children
            .into_iter()
            .zip(&evals)
            .map(|(genome, e)| Ranked { genome, fitness: e.fitness })
            .collect();
        sort_ranked(&mut ranked);
        let top = cfg.truncation.min(ranked.len());
        let top_mean = mean(ranked[..top].iter().map(|r| r.fitness));
        let pop_mean = mean(ranked.iter().map(|r| r.fitness));

        // elite candidates, re-evaluated on common fresh seeds
        let mut candidates: Vec<Arc<Genome>> = ranked[..top].iter().map(|r| Arc::clone(&r.genome)).collect();
        let prev_elite = prev.first().map(|r| Arc::clone(&r.genome));
        if let Some(e) = &prev_elite {
            candidates.push(Arc::clone(e));
        }
        let reeval_seeds: Vec<u64> = (0..cfg.reevals).map(|j| derive(seed, Domain::Reeval, u64::from(g), j as u64)).collect();
        let requests: Vec<EvalRequest> = candidates
            .iter()
            .flat_map(|c| reeval_seeds.iter().map(|&s| EvalRequest { genome: Arc::clone(c), seed: s }))
            .collect();
        let evals = evaluator.evaluate(&requests).map_err(|e| fail(e, &stats))?;
        frames += evals.iter().map(|e| e.frames).sum::<u64>();
        let means: Vec<f64> = evals.chunks(cfg.reevals).map(|c| mean(c.iter().map(|e| e.fitness))).collect();
        let best = (0..candidates.len())
            .max_by(|&a, &b| {
                means[a]
                    .total_cmp(&means[b])
                    .then_with(|| candidates[b].id().cmp(&candidates[a].id()))
            })
            .expect("at least one candidate");
        let elite = Arc::clone(&candidates[best]);
        elite_mean = means[best];

        // [elite] ++ the rest; a dethroned previous elite stays, keyed by its mean
        let mut rest: Vec<Ranked> = ranked.into_iter().filter(|r| r.genome.id() != elite.id()).collect();
        if let Some(pe) = prev_elite.filter(|pe| pe.id() != elite.id()) {
            let k = candidates.len() - 1;
            rest.push(Ranked { genome: pe, fitness: means[k] });
            sort_ranked(&mut rest);
        }
        let mut population = Vec::with_capacity(rest.len() + 1);
        population.push(Ranked { genome: Arc::clone(&elite), fitness: elite_mean });
        population.extend(rest);

        let st = GenerationStats {
            generation: g,
            elite_mean,
            top_mean,
            pop_mean,
            frames,
            wall_seconds: started.elapsed().as_secs_f64(),
            elite_id: elite.id(),
        };
        log::info!(
            "generation {g}: elite {:.3} top {:.3} pop {:.3} frames {}",
            st.elite_mean,
            st.top_mean,
            st.pop_mean,
            st.frames
        );
        let control = observer(&GenerationState { stats: &st, population: &population, elite_mean, truncation: cfg.truncation });
        stats.push(st);
        prev = population;
        if control == Control::Stop && g < cfg.generations {
            stopped = true;
            break;
        }
    }
    Ok(EvolveOutcome {
        elite: prev.first().map(|r| Arc::clone(&r.genome)),
        elite_mean,
        stats,
        population: prev.iter().map(|r| (r.genome.id(), r.fitness)).collect(),
        stopped,
    })
}

/// Stable sort by (fitness desc, id asc).
fn sort_ranked(v: &mut [Ranked]) {
    v.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then_with(|| a.genome.id().cmp(&b.genome.id())));
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::default_spec;

    fn small_cfg(n: usize, t: usize, g: u32) -> GaConfig {
        GaConfig { population: n, truncation: t, generations: g, master_seed: 17, ..GaConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        for bad in [
            GaConfig { truncation: 1001, ..GaConfig::default() },
            GaConfig { elites: 2, ..GaConfig::default() },
            GaConfig { reevals: 0, ..GaConfig::default() },
            GaConfig { sigma: 0.0, ..GaConfig::default() },
            GaConfig { population: 1, ..GaConfig::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        let msg = GaConfig { reevals: 0, ..GaConfig::default() }.validate().unwrap_err().to_string();
        assert!(msg.contains("reevals"));
    }

    #[test]
    fn xavier_is_deterministic_and_bounded() {
        let spec = default_spec();
        let a = xavier_init(&spec, 5, 0);
        assert_eq!(a, xavier_init(&spec, 5, 0));
        assert_ne!(a.raw(), xavier_init(&spec, 6, 0).raw());
        let l1 = &a.raw()[..8192];
        let bound = xavier_bound(8 * 8 * 4, 8 * 8 * 32);
        let qb = quantize_raw(bound, QFormat::WEIGHTS);
        assert!(l1.iter().all(|&w| i32::from(w).abs() <= qb));
    }

    #[test]
    fn mutation_zero_sigma_limit_and_lineage() {
        let spec = default_spec();
        let p = xavier_init(&spec, 1, 9);
        let c = mutate(&p, 3, 1e-9, 10);
        assert_eq!(c.raw(), p.raw());
        assert_eq!(c.lineage(), &[Lineage { parent_id: 9, mutation_seed: 3 }]);
        assert_eq!(mutate(&p, 3, 0.002, 10), mutate(&p, 3, 0.002, 10));
        let cc = mutate(&c, 4, 1e-9, 11);
        assert_eq!(cc.lineage().len(), 2);
    }

    #[test]
    fn constant_fitness_keeps_first_candidate() {
        let spec = default_spec();
        let mut eval = |_: &Genome, _: u64| Evaluation { fitness: 1.0, frames: 1 };
        let out = evolve(&small_cfg(6, 2, 3), &spec, &mut eval).unwrap();
        assert_eq!(out.elite.unwrap().id(), genome_id(1, 0));
        for s in &out.stats {
            assert_eq!((s.elite_mean, s.top_mean, s.pop_mean), (1.0, 1.0, 1.0));
        }
        assert_eq!(out.population.len(), 6);
    }

    #[test]
    fn smallest_instance() {
        let spec = default_spec();
        let mut eval = |g: &Genome, _: u64| Evaluation { fitness: -g.norm_sq(), frames: 0 };
        let one = evolve(&small_cfg(2, 1, 1), &spec, &mut eval).unwrap();
        assert_eq!(one.population.len(), 1);
        let two = evolve(&small_cfg(2, 1, 2), &spec, &mut eval).unwrap();
        assert_eq!(two.population.len(), 2);
        assert_eq!(two.population[0].0, genome_id(1, 0));
        assert_eq!(two.population[1].0, genome_id(2, 0));
    }

    #[test]
    fn population_size_and_single_elite() {
        let spec = default_spec();
        let mut eval = |g: &Genome, s: u64| Evaluation { fitness: -g.norm_sq() + (s % 7) as f64, frames: 2 };
        let cfg = small_cfg(9, 3, 4);
        let mut sizes = Vec::new();
        evolve_with(&cfg, &spec, &mut eval, None, |st| {
            let ids: std::collections::HashSet<_> = st.population.iter().map(|r| r.genome.id()).collect();
            assert_eq!(ids.len(), st.population.len());
            sizes.push(st.population.len());
            // children plus reevals of top T (+ previous elite)
            let cands = if st.stats.generation == 1 { 3 } else { 4 };
            assert_eq!(st.stats.frames, 2 * (8 + 5 * cands));
            Control::Continue
        })
        .unwrap();
        assert_eq!(sizes, vec![8, 9, 9, 9]);
    }

    #[test]
    fn zero_generations() {
        let spec = default_spec();
        let mut eval = |_: &Genome, _: u64| Evaluation { fitness: 0.0, frames: 0 };
        let out = evolve(&small_cfg(5, 2, 0), &spec, &mut eval).unwrap();
        assert!(out.stats.is_empty());
        assert!(out.elite.is_none());
    }

    #[test]
    fn failure_keeps_partial_stats() {
        struct Flaky(usize);
        impl Evaluator for Flaky {
            fn evaluate(&mut self, r: &[EvalRequest]) -> Result<Vec<Evaluation>, EvalError> {
                self.0 += 1;
                if self.0 > 3 {
                    return Err(EvalError("worker gone".into()));
                }
                Ok(r.iter().map(|_| Evaluation { fitness: 0.0, frames: 1 }).collect())
            }
        }
        let err = evolve(&small_cfg(4, 2, 5), &default_spec(), &mut Flaky(0)).unwrap_err();
        assert_eq!(err.generation, 2);
        assert_eq!(err.stats.len(), 1);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let spec = default_spec();
        let mut eval = |g: &Genome, s: u64| Evaluation { fitness: -g.norm_sq() - (s % 5) as f64 * 1e-3, frames: 1 };
        let cfg = small_cfg(7, 3, 4);
        let full = evolve(&cfg, &spec, &mut eval).unwrap();
        let mut ck = None;
        let part = evolve_with(&cfg, &spec, &mut eval, None, |st| {
            if st.stats.generation == 2 {
                ck = Some(st.checkpoint(cfg.master_seed));
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!(part.stopped);
        let ck = Checkpoint::from_bytes(&ck.unwrap().to_bytes()).unwrap();
        let rest = evolve_with(&cfg, &spec, &mut eval, Some(ck), |_| Control::Continue).unwrap();
        let mut joined = part.stats.clone();
        joined.extend(rest.stats.clone());
        let strip = |v: &[GenerationStats]| v.iter().map(|s| (s.generation, s.elite_mean, s.top_mean, s.pop_mean, s.elite_id)).collect::<Vec<_>>();
        assert_eq!(strip(&joined), strip(&full.stats));
        assert_eq!(rest.elite.unwrap().raw(), full.elite.unwrap().raw());
    }
}

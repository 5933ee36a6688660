use std::path::Path;

use anyhow::Context;
use neurofarm_core::evalmod::{run_episode_with, FitnessRecord, Flow};
use neurofarm_core::network::PreparedNetwork;
use neurofarm_core::Genome;

use crate::config::RunConfig;

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub records: Vec<FitnessRecord>,
    pub mean: f64,
    /// Sample variance (n - 1 denominator); zero for a single episode.
    pub variance: f64,
}

/// Plays `episodes` episodes of a saved genome; episode `k` uses seed `seed + k`.
pub fn eval(cfg: &RunConfig, genome: &Path, episodes: u32, seed: u64) -> anyhow::Result<EvalSummary> {
    cfg.validate()?;
    let ctx = cfg.eval_context()?;
    let g = Genome::load(genome, 0).with_context(|| format!("cannot load genome {}", genome.display()))?;
    let net = PreparedNetwork::new(&ctx.spec, &g)?;
    let records = (0..u64::from(episodes))
        .map(|k| {
            let s = seed.wrapping_add(k);
            run_episode_with(&ctx, &net, g.id(), &cfg.env, s, None, |_, _| Flow::Continue).map(|r| r.record)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let scores: Vec<f64> = records.iter().map(|r| f64::from(r.score)).collect();
    let n = scores.len() as f64;
    let mean = if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / n };
    let variance =
        if scores.len() < 2 { 0.0 } else { scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0) };
    Ok(EvalSummary { records, mean, variance })
}

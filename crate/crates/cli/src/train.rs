use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use neurofarm_core::default_spec;
use neurofarm_core::farm::{Dispatcher, EpisodeEvaluator, Gateway, GatewayOptions, InProcessPool};
use neurofarm_core::ga::{evolve_with, Checkpoint, Control};

use crate::config::RunConfig;
use crate::stats::{self, StatsRow, StatsWriter};

pub const STATS_FILE: &str = "stats.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.nfck";
pub const ELITE_FILE: &str = "elite.gnom";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStatus {
    Completed,
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub status: TrainStatus,
    pub generations: u32,
    pub elite_mean: Option<f64>,
    pub out: PathBuf,
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Manifest text: provenance comments followed by the full resolved config,
/// which `train --config` accepts unchanged.
pub fn manifest(cfg: &RunConfig) -> String {
    format!(
        "# neurofarm run manifest\n# version: {}\n# git: {}\n# stats_schema: {}\n{}",
        env!("CARGO_PKG_VERSION"),
        git_describe(),
        stats::SCHEMA_VERSION,
        cfg.to_text()
    )
}

pub fn build_dispatcher(cfg: &RunConfig) -> anyhow::Result<Box<dyn Dispatcher>> {
    if cfg.farm.workers.is_empty() {
        let ctx = Arc::new(cfg.eval_context()?);
        return Ok(Box::new(InProcessPool::new(cfg.farm.threads, ctx)));
    }
    log::info!("connecting to {} worker(s)", cfg.farm.workers.len());
    let opts = GatewayOptions { mode: cfg.farm.mode, ..GatewayOptions::default() };
    let gw = Gateway::connect(&cfg.farm.workers, opts).map_err(|e| anyhow!("farm.workers: {e}"))?;
    Ok(Box::new(gw))
}

/// Last cumulative frame count of an existing stats file.
fn resume_frames(path: &Path) -> anyhow::Result<u64> {
    if !path.exists() {
        return Ok(0);
    }
    Ok(stats::read(path)?.last().map_or(0, |r| r.frames_total))
}

/// Runs a whole training job. `interrupt` is polled after every generation;
/// when set, a checkpoint is written and the run stops.
pub fn train(cfg: &RunConfig, resume: Option<&Path>, interrupt: &AtomicBool) -> anyhow::Result<TrainSummary> {
    cfg.validate()?;
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let checkpoint = match resume {
        Some(p) => {
            let ck = Checkpoint::load(p).with_context(|| format!("cannot load checkpoint {}", p.display()))?;
            if ck.master_seed != cfg.ga.master_seed {
                return Err(anyhow!("ga.master_seed: checkpoint was written with seed {}", ck.master_seed));
            }
            Some(ck)
        }
        None => None,
    };
    let dispatcher = build_dispatcher(cfg)?;
    std::fs::write(out.join(MANIFEST_FILE), manifest(cfg))?;

    let stats_path = out.join(STATS_FILE);
    let mut frames_total = if checkpoint.is_some() { resume_frames(&stats_path)? } else { 0 };
    let mut writer = StatsWriter::open(&stats_path, checkpoint.is_some())?;
    let timing_path = out.join(TIMING_FILE);
    if checkpoint.is_none() && timing_path.exists() {
        std::fs::remove_file(&timing_path)?;
    }

    let spec = default_spec();
    let mut evaluator = EpisodeEvaluator::new(dispatcher, cfg.env);
    let mut io_error: Option<anyhow::Error> = None;
    let mut interrupted = false;
    let outcome = evolve_with(&cfg.ga, &spec, &mut evaluator, checkpoint, |state| {
        let s = state.stats;
        frames_total += s.frames;
        let row = StatsRow {
            generation: s.generation,
            elite_mean: s.elite_mean,
            top_mean: s.top_mean,
            pop_mean: s.pop_mean,
            frames_total,
            wall_seconds: cfg.record_wall_time.then_some(s.wall_seconds),
        };
        let fps = if s.wall_seconds > 0.0 { s.frames as f64 / s.wall_seconds } else { 0.0 };
        let timing = format!("{},{:.3},{},{:.1}", s.generation, s.wall_seconds, s.frames, fps);
        let written = writer
            .write(&row)
            .and_then(|_| Ok(stats::append_line(&timing_path, "generation,wall_seconds,frames,frames_per_sec", &timing)?));
        let stop = interrupt.load(Ordering::SeqCst);
        let due = cfg.checkpoint_interval > 0 && s.generation % cfg.checkpoint_interval == 0;
        let last = s.generation == cfg.ga.generations;
        let saved = if stop || due || last {
            state.checkpoint(cfg.ga.master_seed).save(&out.join(CHECKPOINT_FILE)).map_err(anyhow::Error::from)
        } else {
            Ok(())
        };
        if let Err(e) = written.and(saved) {
            io_error = Some(e);
            return Control::Stop;
        }
        if stop {
            log::warn!("interrupted: checkpoint written after generation {}", s.generation);
            interrupted = true;
            return Control::Stop;
        }
        Control::Continue
    })
    .map_err(|e| anyhow!("{e}"))?;
    if let Some(e) = io_error {
        return Err(e);
    }
    if let Some(elite) = &outcome.elite {
        elite.save(&out.join(ELITE_FILE))?;
    }
    let stats = evaluator.dispatcher.stats();
    log::info!("{} frames at {:.0} frames/s", stats.frames, stats.frames_per_sec);
    Ok(TrainSummary {
        status: if interrupted { TrainStatus::Interrupted } else { TrainStatus::Completed },
        generations: outcome.stats.last().map_or(0, |s| s.generation),
        elite_mean: outcome.elite.as_ref().map(|_| outcome.elite_mean),
        out,
    })
}

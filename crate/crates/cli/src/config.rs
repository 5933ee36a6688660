//! Run configuration: flat `section.key = value` text.
//!
//! The same format serves as input file, override syntax (`--set key=value`)
//! and run manifest, so a manifest can be fed straight back to `train`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use neurofarm_core::env::{CatchParams, EnvConfig, EnvDescriptor, ReplayFixture, GAME_CATCH, GAME_REPLAY};
use neurofarm_core::evalmod::EvalContext;
use neurofarm_core::farm::NotifyMode;
use neurofarm_core::ga::GaConfig;
use neurofarm_core::policy::DEFAULT_STICKINESS;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("{key}: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("{key}: {why}")]
    Invalid { key: String, why: String },
    #[error("cannot read {path}: {why}")]
    Io { path: String, why: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmConfig {
    /// In-process evaluation threads, used when `workers` is empty.
    pub threads: usize,
    /// Worker addresses; non-empty selects the networked gateway.
    pub workers: Vec<String>,
    pub mode: NotifyMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ga: GaConfig,
    pub env: EnvDescriptor,
    pub catch: CatchParams,
    pub replay_fixture: Option<PathBuf>,
    pub stickiness: f64,
    pub farm: FarmConfig,
    pub out: PathBuf,
    /// Checkpoint every this many generations; 0 writes only the final one.
    pub checkpoint_interval: u32,
    /// Fill the wall_seconds column of the stats CSV. Off by default so that
    /// reruns produce byte-identical files.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ga: GaConfig::default(),
            env: EnvDescriptor::default(),
            catch: CatchParams::default(),
            replay_fixture: None,
            stickiness: DEFAULT_STICKINESS,
            farm: FarmConfig { threads: 1, workers: Vec::new(), mode: NotifyMode::Push },
            out: PathBuf::from("run"),
            checkpoint_interval: 10,
            record_wall_time: false,
        }
    }
}

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "ga.population",
    "ga.truncation",
    "ga.elites",
    "ga.sigma",
    "ga.reevals",
    "ga.generations",
    "ga.master_seed",
    "env.game",
    "env.frame_cap",
    "env.replay_fixture",
    "env.stickiness",
    "catch.paddle_width",
    "catch.paddle_height",
    "catch.paddle_y",
    "catch.paddle_speed",
    "catch.object_width",
    "catch.object_height",
    "catch.spawn_y",
    "catch.fall_speed",
    "catch.max_misses",
    "catch.background",
    "catch.paddle_color",
    "catch.object_color",
    "farm.threads",
    "farm.workers",
    "farm.mode",
    "run.out",
    "run.checkpoint_interval",
    "run.record_wall_time",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })
}

fn game_name(id: u32) -> String {
    match id {
        GAME_CATCH => "catch".into(),
        GAME_REPLAY => "replay".into(),
        other => other.to_string(),
    }
}

pub fn parse_game(value: &str) -> Option<u32> {
    match value {
        "catch" => Some(GAME_CATCH),
        "replay" => Some(GAME_REPLAY),
        other => other.parse().ok(),
    }
}

pub fn parse_mode(value: &str) -> Option<NotifyMode> {
    match value {
        "push" => Some(NotifyMode::Push),
        "polling" => Some(NotifyMode::Polling),
        _ => None,
    }
}

fn mode_name(m: NotifyMode) -> &'static str {
    match m {
        NotifyMode::Push => "push",
        NotifyMode::Polling => "polling",
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), why: e.to_string() })?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Parses config text on top of the defaults. `#` starts a comment.
    pub fn parse_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { path: origin.into(), line: n + 1 })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate(key.into()));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    /// Applies `key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or(ConfigError::Syntax { path: "--set".into(), line: 1 })?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let c = &mut self.catch;
        match key {
            "ga.population" => self.ga.population = parse(key, v)?,
            "ga.truncation" => self.ga.truncation = parse(key, v)?,
            "ga.elites" => self.ga.elites = parse(key, v)?,
            "ga.sigma" => self.ga.sigma = parse(key, v)?,
            "ga.reevals" => self.ga.reevals = parse(key, v)?,
            "ga.generations" => self.ga.generations = parse(key, v)?,
            "ga.master_seed" => self.ga.master_seed = parse(key, v)?,
            "env.game" => {
                self.env.game_id =
                    parse_game(v).ok_or_else(|| ConfigError::BadValue { key: key.into(), value: v.into() })?
            }
            "env.frame_cap" => self.env.frame_cap = parse(key, v)?,
            "env.replay_fixture" => self.replay_fixture = (!v.is_empty()).then(|| PathBuf::from(v)),
            "env.stickiness" => self.stickiness = parse(key, v)?,
            "catch.paddle_width" => c.paddle_width = parse(key, v)?,
            "catch.paddle_height" => c.paddle_height = parse(key, v)?,
            "catch.paddle_y" => c.paddle_y = parse(key, v)?,
            "catch.paddle_speed" => c.paddle_speed = parse(key, v)?,
            "catch.object_width" => c.object_width = parse(key, v)?,
            "catch.object_height" => c.object_height = parse(key, v)?,
            "catch.spawn_y" => c.spawn_y = parse(key, v)?,
            "catch.fall_speed" => c.fall_speed = parse(key, v)?,
            "catch.max_misses" => c.max_misses = parse(key, v)?,
            "catch.background" => c.background = parse(key, v)?,
            "catch.paddle_color" => c.paddle_color = parse(key, v)?,
            "catch.object_color" => c.object_color = parse(key, v)?,
            "farm.threads" => self.farm.threads = parse(key, v)?,
            "farm.workers" => {
                self.farm.workers = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "farm.mode" => {
                self.farm.mode =
                    parse_mode(v).ok_or_else(|| ConfigError::BadValue { key: key.into(), value: v.into() })?
            }
            "run.out" => self.out = PathBuf::from(v),
            "run.checkpoint_interval" => self.checkpoint_interval = parse(key, v)?,
            "run.record_wall_time" => self.record_wall_time = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Checks everything before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, why: &str| Err(ConfigError::Invalid { key: key.into(), why: why.into() });
        match self.ga.validate() {
            Ok(()) => {}
            Err(neurofarm_core::Error::Config(msg)) => {
                let (key, why) = msg.split_once(": ").unwrap_or(("ga", &msg));
                return invalid(key, why);
            }
            Err(e) => return invalid("ga", &e.to_string()),
        }
        if self.env.frame_cap == 0 {
            return invalid("env.frame_cap", "must be at least 1");
        }
        match self.env.game_id {
            GAME_CATCH => {}
            GAME_REPLAY if self.replay_fixture.is_none() => {
                return invalid("env.replay_fixture", "required for the replay game")
            }
            GAME_REPLAY => {}
            _ => return invalid("env.game", "unknown game (expected catch or replay)"),
        }
        if !(0.0..1.0).contains(&self.stickiness) {
            return invalid("env.stickiness", "must be in [0, 1)");
        }
        let c = &self.catch;
        if c.paddle_width <= 0 || c.paddle_height <= 0 || c.object_width <= 0 || c.object_height <= 0 {
            return invalid("catch", "sprite sizes must be positive");
        }
        if c.fall_speed <= 0 {
            return invalid("catch.fall_speed", "must be positive");
        }
        if c.max_misses == 0 {
            return invalid("catch.max_misses", "must be at least 1");
        }
        if c.background > 127 || c.paddle_color > 127 || c.object_color > 127 {
            return invalid("catch", "colors are 7-bit palette indices");
        }
        if self.farm.threads == 0 {
            return invalid("farm.threads", "must be at least 1");
        }
        Ok(())
    }

    /// Canonical text: every key, one per line, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let c = &self.catch;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("ga.population", self.ga.population.to_string());
        put("ga.truncation", self.ga.truncation.to_string());
        put("ga.elites", self.ga.elites.to_string());
        put("ga.sigma", self.ga.sigma.to_string());
        put("ga.reevals", self.ga.reevals.to_string());
        put("ga.generations", self.ga.generations.to_string());
        put("ga.master_seed", self.ga.master_seed.to_string());
        put("env.game", game_name(self.env.game_id));
        put("env.frame_cap", self.env.frame_cap.to_string());
        put("env.replay_fixture", self.replay_fixture.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        put("env.stickiness", self.stickiness.to_string());
        put("catch.paddle_width", c.paddle_width.to_string());
        put("catch.paddle_height", c.paddle_height.to_string());
        put("catch.paddle_y", c.paddle_y.to_string());
        put("catch.paddle_speed", c.paddle_speed.to_string());
        put("catch.object_width", c.object_width.to_string());
        put("catch.object_height", c.object_height.to_string());
        put("catch.spawn_y", c.spawn_y.to_string());
        put("catch.fall_speed", c.fall_speed.to_string());
        put("catch.max_misses", c.max_misses.to_string());
        put("catch.background", c.background.to_string());
        put("catch.paddle_color", c.paddle_color.to_string());
        put("catch.object_color", c.object_color.to_string());
        put("farm.threads", self.farm.threads.to_string());
        put("farm.workers", self.farm.workers.join(","));
        put("farm.mode", mode_name(self.farm.mode).into());
        put("run.out", self.out.display().to_string());
        put("run.checkpoint_interval", self.checkpoint_interval.to_string());
        put("run.record_wall_time", self.record_wall_time.to_string());
        s
    }

    /// Evaluation context for in-process episodes (or a worker).
    pub fn eval_context(&self) -> Result<EvalContext, ConfigError> {
        let replay = match &self.replay_fixture {
            Some(p) => Some(Arc::new(ReplayFixture::load(p).map_err(|e| ConfigError::Invalid {
                key: "env.replay_fixture".into(),
                why: e.to_string(),
            })?)),
            None => None,
        };
        Ok(EvalContext {
            env: EnvConfig { catch: self.catch.clone(), replay },
            stickiness: self.stickiness,
            ..EvalContext::default()
        })
    }
}

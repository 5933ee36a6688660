use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use neurofarm_cli::bench::{self, BenchMode, BenchOptions};
use neurofarm_cli::config::{parse_game, ConfigError, RunConfig};
use neurofarm_cli::train::{self, TrainStatus};
use neurofarm_cli::{eval, interrupt, plot, stats};
use neurofarm_core::farm::{Worker, WorkerConfig, DEFAULT_MODULES};

#[derive(Parser)]
#[command(name = "neurofarm", version, about = "Fixed-point neuroevolution with a distributed evaluation farm")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve a population and write stats, checkpoints and the elite genome.
    Train {
        /// Run configuration (or a previous run's manifest.txt).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides ga.master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated worker addresses; overrides farm.workers.
        #[arg(long)]
        workers: Option<String>,
        /// Overrides farm.threads.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides run.out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Any other `key=value` override; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Play a saved genome and print per-episode scores with mean and variance.
    Eval {
        #[arg(long)]
        genome: PathBuf,
        /// catch or replay.
        #[arg(long, default_value = "catch")]
        env: String,
        #[arg(long, default_value_t = 5)]
        episodes: u32,
        /// Episode k uses seed + k.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        frame_cap: Option<u32>,
        /// Environment parameters (catch.*, env.*) from a run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replay fixture for --env replay.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Measure aggregate frames per second for one dispatch mode.
    Bench {
        #[arg(long, default_value = "push")]
        mode: BenchMode,
        /// Seconds to keep dispatching.
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Remote workers; loopback workers are started when omitted.
        #[arg(long)]
        workers: Option<String>,
        #[arg(long, default_value_t = 1)]
        local_workers: usize,
        #[arg(long, default_value_t = DEFAULT_MODULES)]
        modules: usize,
        /// Delay injected before every POLL in polling mode.
        #[arg(long, default_value_t = 0.0)]
        poll_latency_ms: f64,
        #[arg(long, default_value_t = 1000)]
        frame_cap: u32,
    },
    /// Render learning curves from one or more stats CSVs.
    Plot {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "elite mean score")]
        title: String,
        #[arg(required = true)]
        stats: Vec<PathBuf>,
    },
    /// Serve evaluation modules over TCP.
    Worker {
        #[arg(long, default_value = "127.0.0.1:7700")]
        bind: String,
        #[arg(long, default_value_t = DEFAULT_MODULES)]
        modules: usize,
        /// Run configuration supplying catch.*, env.stickiness and
        /// env.replay_fixture.
        #[arg(long)]
        env_config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, ConfigError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Cmd::Train { config, seed, workers, threads, out, resume, sets } => {
            let mut cfg = load_config(config.as_ref())?;
            for s in &sets {
                cfg.apply_override(s)?;
            }
            if let Some(s) = seed {
                cfg.ga.master_seed = s;
            }
            if let Some(w) = workers {
                cfg.set("farm.workers", &w)?;
            }
            if let Some(t) = threads {
                cfg.farm.threads = t;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            cfg.validate()?;
            interrupt::install();
            let summary = train::train(&cfg, resume.as_deref(), interrupt::flag())?;
            match summary.elite_mean {
                Some(m) => println!(
                    "{} generation(s), elite mean {m}, output in {}",
                    summary.generations,
                    summary.out.display()
                ),
                None => println!("no generations run, output in {}", summary.out.display()),
            }
            Ok(match summary.status {
                TrainStatus::Completed => ExitCode::SUCCESS,
                TrainStatus::Interrupted => ExitCode::from(130),
            })
        }
        Cmd::Eval { genome, env, episodes, seed, frame_cap, config, fixture } => {
            let mut cfg = load_config(config.as_ref())?;
            cfg.env.game_id = parse_game(&env)
                .ok_or_else(|| ConfigError::BadValue { key: "--env".into(), value: env.clone() })?;
            if let Some(c) = frame_cap {
                cfg.env.frame_cap = c;
            }
            if fixture.is_some() {
                cfg.replay_fixture = fixture;
            }
            let summary = eval::eval(&cfg, &genome, episodes, seed)?;
            for r in &summary.records {
                println!(
                    "seed {} score {} frames {} end {:?}",
                    r.eval_seed, r.score, r.frames, r.termination
                );
            }
            println!("mean {} variance {}", summary.mean, summary.variance);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench { mode, duration, threads, workers, local_workers, modules, poll_latency_ms, frame_cap } => {
            let opts = BenchOptions {
                mode,
                duration: Duration::from_secs_f64(duration.max(0.0)),
                threads,
                workers: workers
                    .map(|w| w.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
                    .unwrap_or_default(),
                local_workers,
                modules,
                poll_latency: Duration::from_secs_f64(poll_latency_ms.max(0.0) / 1000.0),
                desc: RunConfig::default().env.with_frame_cap(frame_cap),
                ..BenchOptions::default()
            };
            let stats = bench::run(&opts, Arc::new(RunConfig::default().eval_context()?))?;
            print!("{}", bench::report(mode, &stats));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Plot { out, title, stats: files } => {
            let runs = files.iter().map(|f| stats::read(f)).collect::<anyhow::Result<Vec<_>>>()?;
            std::fs::write(&out, plot::render(&runs, &title)?)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Worker { bind, modules, env_config } => {
            let cfg = load_config(env_config.as_ref())?;
            cfg.validate()?;
            let wcfg = WorkerConfig { modules, ctx: Arc::new(cfg.eval_context()?), ..WorkerConfig::default() };
            let worker = Worker::bind(bind.as_str(), wcfg)?;
            println!("listening on {} with {} module(s)", worker.local_addr()?, worker.module_count());
            worker.run()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

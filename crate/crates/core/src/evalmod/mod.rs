//! The fitness evaluation module: the closed loop environment, pre-processing,
//! network and policy, plus the register file that controls it.

mod module;
mod registers;

pub use module::{EvalModule, Notifier};
pub use registers::*;

use std::sync::Arc;

use crate::env::{self, EnvConfig, EnvDescriptor, ReplayFixture};
use crate::error::Error;
use crate::network::{default_spec, Genome, GenomeId, Kernel, NetworkSpec, PreparedNetwork};
use crate::policy::{Lfsr41, PolicyState, DEFAULT_STICKINESS};
use crate::preproc::{Palette, Pipeline, STACK_DEPTH};
use crate::rng::{derive, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Termination {
    Dead,
    Timeout,
    Stopped,
}

impl Termination {
    pub fn status(self) -> Status {
        match self {
            Termination::Dead => Status::DoneDead,
            Termination::Timeout => Status::DoneTimeout,
            Termination::Stopped => Status::DoneStopped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FitnessRecord {
    pub genome_id: GenomeId,
    pub score: i32,
    pub frames: u32,
    pub termination: Termination,
    pub eval_seed: u64,
}

/// Everything an episode needs besides the genome and descriptor.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub spec: NetworkSpec,
    pub palette: Palette,
    pub env: EnvConfig,
    pub stickiness: f64,
    pub kernel: Kernel,
}

impl Default for EvalContext {
    fn default() -> Self {
        EvalContext {
            spec: default_spec(),
            palette: Palette::reference_ntsc(),
            env: EnvConfig::default(),
            stickiness: DEFAULT_STICKINESS,
            kernel: Kernel::Auto,
        }
    }
}

/// Returned by a frame hook to keep going or stop at this frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeReport {
    pub record: FitnessRecord,
    pub inferences: u32,
}

/// Runs one episode with the default context.
pub fn run_episode(genome: &Genome, desc: &EnvDescriptor, seed: u64) -> Result<FitnessRecord, Error> {
    let ctx = EvalContext::default();
    let net = PreparedNetwork::new(&ctx.spec, genome)?;
    Ok(run_episode_with(&ctx, &net, genome.id(), desc, seed, None, |_, _| Flow::Continue)?.record)
}

/// The evaluation loop. Per frame: sticky emission, environment step,
/// luma, pooling, rescale into the window. Every fourth frame the window is
/// stacked and the network picks the next pending action.
///
/// `hook(frame_count, score)` is called at every frame boundary, including
/// before the first frame; returning [`Flow::Stop`] ends the episode there.
pub fn run_episode_with(
    ctx: &EvalContext,
    net: &PreparedNetwork,
    genome_id: GenomeId,
    desc: &EnvDescriptor,
    seed: u64,
    fixture: Option<Arc<ReplayFixture>>,
    mut hook: impl FnMut(u32, i32) -> Flow,
) -> Result<EpisodeReport, Error> {
    let mut env = env::reset(desc, derive(seed, Domain::EnvSpawn, 0, 0), &ctx.env, fixture)?;
    let mut pipeline = Pipeline::new(&ctx.palette);
    let mut policy = PolicyState::new(ctx.stickiness, Lfsr41::from_seed(derive(seed, Domain::Lfsr, 0, 0)));
    let mut frames = 0u32;
    let mut inferences = 0u32;
    let termination = loop {
        if !env.alive() {
            break Termination::Dead;
        }
        if frames >= desc.frame_cap {
            break Termination::Timeout;
        }
        if hook(frames, env.score()) == Flow::Stop {
            break Termination::Stopped;
        }
        let action = policy.apply_sticky();
        pipeline.push_frame(env.step(action)?);
        frames += 1;
        if frames % STACK_DEPTH as u32 == 0 {
            let x = pipeline.activations().expect("window is non-empty after a frame");
            let q = net.forward_with(&x, ctx.kernel)?;
            policy.select_action(&to_qvalues(&q));
            inferences += 1;
        }
    };
    hook(frames, env.score());
    assert_eq!(inferences, frames / STACK_DEPTH as u32, "one inference per four frames");
    let record = FitnessRecord { genome_id, score: env.score(), frames, termination, eval_seed: seed };
    Ok(EpisodeReport { record, inferences })
}

fn to_qvalues(raw: &[i16]) -> Vec<crate::fixedpoint::QValue> {
    use crate::fixedpoint::{QFormat, QValue};
    raw.iter().map(|&r| QValue::new(i64::from(r), QFormat::ACTIVATIONS).expect("i16 fits")).collect()
}

//! Fixed-point deep neuroevolution: a bit-exact quantized CNN, console-style
//! frame pre-processing, a sticky-action policy, a truncation-selection
//! genetic algorithm and a gateway/worker farm that evaluates fitness
//! through a register-level protocol.

pub mod env;
pub mod error;
pub mod evalmod;
pub mod farm;
pub mod fixedpoint;
pub mod ga;
pub mod network;
pub mod policy;
pub mod preproc;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use evalmod::{run_episode, EvalContext, FitnessRecord, Termination};
pub use fixedpoint::{QFormat, QValue};
pub use network::{default_spec, Genome, GenomeId, NetworkSpec};

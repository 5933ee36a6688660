//! The fixed-point CNN: three valid convolutions and one dense layer, no
//! biases, 18 action values out.

mod float;
mod genome;
mod kernels;
mod spec;

pub use float::{conv2d_float, dense_float, forward_float};
pub use genome::{Genome, GenomeId, Lineage, GENOME_HEADER_LEN, GENOME_MAGIC, GENOME_VERSION};
pub use kernels::{forward, Kernel, PreparedNetwork};
pub use spec::{default_spec, param_shapes, Activation, LayerKind, LayerSpec, NetworkSpec, Shape};

/// Number of network outputs (console joystick actions).
pub const ACTION_COUNT: usize = 18;

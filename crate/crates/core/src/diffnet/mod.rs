//! A small dense-tensor reverse-mode engine and the networks trained with it.
//!
//! A [`Tape`] owns every value computed during one forward pass. Parameters enter as
//! leaves, each op appends a node, and [`Tape::backward`] walks the nodes in reverse,
//! summing gradient contributions from all consumers.

mod conv;
mod network;
mod ops;
mod params;
mod tape;
mod tensor;

pub use conv::Padding;
pub use network::{
    build_discriminator, build_generator, build_nonlinear_block, discriminator_spec, generator_spec,
    nonlinear_block_spec, BoundNetwork, GeneratorShape, Identity, ImageMap, Layer, Network, NetworkSpec,
    DEFAULT_DISCRIMINATOR_FILTERS, INIT_STD, INSTANCE_NORM_EPS, LEAKY_SLOPE,
};
pub use params::{AdamConfig, ModelParams};
pub use tape::{Activation, Reduction, Tape, Var};
pub use tensor::Tensor;

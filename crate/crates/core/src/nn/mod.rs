//! Minimal neural-network engine: flat parameter vectors, layer stacks
//! with hand-written backward passes, and optimizers.

pub mod ops;
pub mod optim;
pub mod params;
pub mod stack;

pub use optim::{Adam, Momentum};
pub use params::{cast_params, Init, NamedBlock, ParamBlock, ParamLayout};
pub use stack::{Layer, Stack, StackBuilder, Tape};

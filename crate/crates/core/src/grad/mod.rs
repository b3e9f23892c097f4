//! Dense arrays, a reverse-mode tape, named parameters and the Adam optimizer.

mod array;
mod optim;
mod params;
mod tape;

pub use array::Array;
pub use optim::{adam_step, clip_global_norm, global_norm, AdamConfig, OptimizerState};
pub use params::{NamedParam, ParamId, ParameterStore};
pub use tape::{sigmoid, Activation, Binding, Grads, Tape, Var, LOG_FLOOR};

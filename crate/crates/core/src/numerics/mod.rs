//! Dense tensors, reverse-mode differentiation, network layers, Adam and
//! polynomial learning-rate decay.

mod kernels;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
mod replay;
pub mod tape;
pub mod tensor;

pub use gradcheck::{check_gradients, CoordCheck, GradCheck};
pub use layers::{adain_apply, gan_terms, instance_stats, GanTerms};
pub use optim::{AdamConfig, AdamState, PolySchedule};
pub use params::ParamSet;
pub use tape::{Activation, Grads, Tape, Target, Var, INSTANCE_EPS, LEAKY_SLOPE};
pub use tensor::Tensor;

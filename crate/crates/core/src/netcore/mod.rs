//! Small fully connected networks and the reverse-mode tape that trains them.

mod mlp;
mod optim;
mod tape;

pub use mlp::{Activation, Layer, Mlp, MlpGrads, MlpVars, LEAKY_SLOPE};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tape::{Gradients, Tape, Var};

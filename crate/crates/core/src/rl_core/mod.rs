//! Small-network building blocks for DDPG.

mod mlp;
mod noise;
mod optim;
mod replay;

pub use mlp::{Activation, Mlp, MlpCheckpoint, Trace};
pub use noise::{NoiseConfig, NoiseKind, NoiseProcess};
pub use optim::{soft_update, Adam};
pub use replay::{ReplayBuffer, Transition};

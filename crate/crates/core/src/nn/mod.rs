//! Dense networks with hand-written backprop, plus the pieces every trainer
//! shares: Adam with norm clipping, running observation statistics, and a
//! binary checkpoint format.

pub mod checkpoint;
pub mod mlp;
pub mod normalize;
pub mod optim;

pub use checkpoint::{Checkpoint, Tensor};
pub use mlp::{batch_from_rows, Mlp, MlpCache, MlpSpec};
pub use normalize::{ReturnScaler, RunningMeanStd};
pub use optim::{clip_grad_norm, Adam, AdamConfig};

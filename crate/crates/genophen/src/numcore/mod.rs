//! Minimal dense-tensor numeric core: layer primitives, a recorded
//! computation graph with reverse-mode gradients, Adam, and seeded
//! labeled random streams. Everything is `f64` and bit-reproducible
//! under a fixed `(seed, label)` pair.

pub mod ops;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use ops::{conv1d_valid, dense, dropout, maxpool_over_time, mse_loss, relu, softmax};
pub use optim::{AdamConfig, OptimizerState};
pub use rng::RngStream;
pub use tape::{Gradients, Tape, ValueId};
pub use tensor::{bitwise_eq, Tensor};

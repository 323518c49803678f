//! A small reverse-mode tensor engine covering exactly the layers the CRNN
//! uses. Layers cache what they need in `forward` and consume it in
//! `backward`; gradients accumulate into each parameter's `grad` buffer.
//!
//! Everything is generic over [`Real`] so that training runs in `f32` and
//! gradient checks in `f64` share one implementation.

mod checkpoint;
mod conv;
mod dense;
mod gradcheck;
mod gru;
mod init;
mod loss;
mod network;
mod ops;
mod optim;
mod pool;
mod tensor;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use conv::Conv2d;
pub use dense::Dense;
pub use gradcheck::{gradcheck_network, relative_error, GradCheckConfig, Objective, TensorCheck};
pub use gru::{BiGru, GruCell};
pub use init::glorot_uniform;
pub use loss::{one_hot, softmax, softmax_cross_entropy, SoftmaxCe, LABEL_SUM_TOL, LOG_EPS};
pub use network::{Layer, LayerSpec, Network};
pub use ops::{Relu, TimeMean, ToSequence};
pub use optim::{LrSchedule, SgdNesterov};
pub use pool::MaxPool2d;
pub use tensor::{gemm, MatRef, Real, Tensor};

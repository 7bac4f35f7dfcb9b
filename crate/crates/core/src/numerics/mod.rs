//! Dense tensors, reverse-mode differentiation, parameters and Adam.

pub mod checkpoint;
mod gemm;
pub mod params;
pub mod sparse;
pub mod tape;
pub mod tensor;

pub use params::{AdamConfig, ParamId, ParamStore};
pub use sparse::Csr;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

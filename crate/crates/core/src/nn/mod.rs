//! Minimal neural-network toolkit: matrices, reverse-mode autodiff, layers, Adam.

pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{segments_from_lengths, single_segment, softmax_rows_in_place, Graph, Segments, Var};
pub use optim::{clip_grad_norm, Adam, WarmupLinear};
pub use params::{Grads, ParamId, ParamStore};
pub use tensor::Mat;

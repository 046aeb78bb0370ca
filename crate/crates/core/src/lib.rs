pub mod alvpredictor;
pub mod augment;
pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod features;
pub mod mdplbert;
pub mod nn;
pub mod pipeline;
pub mod quantizer;

pub use error::{Error, Result};

pub mod checkpoint;
pub mod config;
pub mod diffusion;
pub mod experiment;
pub mod error;
pub mod losses;
pub mod masking;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod plot;
pub mod pipeline;
pub mod schedule;
pub mod seed;
pub mod synthdata;

pub use error::{Error, Result};
pub use numerics::Matrix;

pub mod dataset;
pub mod error;
pub mod features;
pub mod hyperopt;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod solar;
pub mod synth;

pub use error::{Error, Result};

pub mod data;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod raster;
pub mod task;
pub mod tensorfile;
pub mod xai;

pub use error::{Error, Result};
pub use task::Task;

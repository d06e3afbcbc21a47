pub mod equibasis;
pub mod error;
pub mod group;
pub mod linalg;
pub mod net;
pub mod regularize;
pub mod rep;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};

pub mod channels;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod fitting;
pub mod groups;
pub mod liouville;
pub mod matchgate;
pub mod rb_engine;
pub mod reptheory;

pub use error::{CharbError, Result};

pub mod cli;
pub mod convexity;
pub mod error;
pub mod field;
pub mod flow;
pub mod linalg;
pub mod loops;
pub mod models;
pub mod report;
pub mod symplectic;

pub use error::{Error, Result};

pub mod error;
pub mod gef;
pub mod metrics;
pub mod models;
pub mod text;

pub use error::{GefError, Result};

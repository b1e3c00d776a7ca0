pub mod error;
pub mod eval;
pub mod linsvm;
pub mod pipeline;
pub mod qp;
pub mod scenario;
pub mod tasvm;
pub mod trend;
pub mod types;

pub use error::{Result, SctError};

pub mod arch;
pub mod data;
pub mod error;
pub mod eval;
pub mod hpo;
pub mod ops;
pub mod seed;
pub mod sys;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};

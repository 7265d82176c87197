//! Multiple-systems estimation for three overlapping lists.

pub mod coverage;
pub mod error;
pub mod estimate;
pub mod estimators;
pub mod loglinear;
pub mod manifest;
pub mod mtb;
pub mod optimize;
pub mod simgen;
pub mod stochastics;
pub mod table;
pub mod thbm;
pub mod uncertainty;

pub use error::{MseError, Result};
pub use estimate::{EstimateResult, Method};
pub use table::TrsTable;

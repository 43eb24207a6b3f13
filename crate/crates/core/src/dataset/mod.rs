//! Loading, validating, transforming and lag-aligning time-series data.

mod date;
mod design;
mod frame;
pub mod transform;

pub use date::{parse_bound, Frequency, Stamp};
pub use design::{build_designs, HorizonDesign, LpSpec, SamplePolicy};
pub use frame::{load_csv, read_csv, TimeSeriesFrame};
pub use transform::Transform;

//! File formats: model files, PNG pictures, Y4M streams, and dataset-prep
//! command generation.

pub mod dataset;
pub mod picture;
pub mod weights;
pub mod y4m;

pub use dataset::{CommandLine, DatasetPrep};
pub use picture::{read_png, write_png, Matrix, Picture};
pub use weights::{read_manifest, read_model, write_model};
pub use y4m::Y4m;

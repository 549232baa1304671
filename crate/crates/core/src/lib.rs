//! Reflection-group harmonic analysis on grids.

pub mod aoi;
pub mod calderon;
pub mod corpus;
pub mod cz;
pub mod error;
pub mod grid;
pub mod norms;
pub mod operator;
pub mod reflection;
pub mod report;
pub mod singular;
pub mod stats;
pub mod suite;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, NormKind};
pub use operator::OperatorMatrix;
pub use reflection::{OrbitSet, ReflectionGroup, RootSystem};
pub use report::{Metric, ReportFormat, VerificationReport};

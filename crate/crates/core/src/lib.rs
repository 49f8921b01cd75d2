//! Numerical laboratory for formal deformation quantization over tori:
//! spectral scalar and tensor fields, formal Laurent series, compatible
//! almost complex structures and their Hermitian geometry, a fiberwise Weyl
//! calculus, the flat-connection star-product construction, trace densities
//! and formal moment maps, plus a declarative verification registry.

pub mod error;
pub mod fedosov;
pub mod fields;
pub mod formal;
pub mod geometry;
pub mod moment;
pub mod tensor;
pub mod verify;
pub mod weyl;

pub use error::{Error, Result};
pub use fields::{random_trig_field, Grid, PeriodicField};
pub use formal::{Coefficient, FormalSeries};
pub use tensor::{Slot, TensorField};
pub use verify::{run_check, run_suite, registry, CheckResult, CheckSpec, RunConfig};

//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use aeppli_core::complex::{build_complex, FormComplex};
use aeppli_core::energy::AeppliPoint;
use aeppli_core::metric::{potential_from_entries, HermitianStructure};
use aeppli_core::model::parse_model;

pub use aeppli_core::model::builtin;

pub fn complex(text: &str) -> Arc<FormComplex> {
    Arc::new(build_complex(&parse_model(text).unwrap().model).unwrap())
}

/// Base metric and file potential of a model text.
pub fn point(text: &str) -> AeppliPoint {
    let file = parse_model(text).unwrap();
    let c = Arc::new(build_complex(&file.model).unwrap());
    let base = Arc::new(HermitianStructure::from_entries(c.clone(), &file.metric).unwrap());
    let u = potential_from_entries(&c, &file.potential).unwrap();
    AeppliPoint::new(base, u).unwrap()
}

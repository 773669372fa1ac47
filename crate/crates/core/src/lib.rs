//! Operator calculus for Hermitian metrics on finite-dimensional form complexes.
//!
//! Two backends supply the complex: left-invariant forms on a Lie-algebra model
//! given by structure constants, and Fourier-truncated forms on a flat torus.
//! On top of either one sit Gram inner products, Hodge stars and adjoints,
//! Laplacians with their Green operators, cohomology dimensions, the (2,0)-torsion
//! form of a Hermitian-symplectic metric, the energy `F(ω) = ‖ρ^{2,0}_ω‖²` with its
//! differential and a descent flow, and minimal-norm solution operators.
//!
//! ```
//! use std::sync::Arc;
//! use aeppli_core::{build_complex, parse_model, classify, HermitianStructure};
//!
//! let file = parse_model(aeppli_core::model::builtin::IWASAWA).unwrap();
//! let complex = Arc::new(build_complex(&file.model).unwrap());
//! let h = HermitianStructure::from_entries(complex, &file.metric).unwrap();
//! let cl = classify(&h).unwrap();
//! assert!(cl.balanced && !cl.hermitian_symplectic);
//! ```

pub mod complex;
pub mod error;
pub mod forms;
pub mod grid;
pub mod linalg;
pub mod metric;
pub mod model;
pub mod positivity;
pub mod cohomology;
pub mod torsion;
pub mod energy;
pub mod deform;
pub mod report;

pub use cohomology::{cohomology_dims, CohomologyTable, Laplacian, OperatorBundle};
pub use complex::{build_complex, FormComplex};
pub use deform::{family_diagnostics, kahler_in_class, min_ddbar_solution, neumann_dbar_solution};
pub use energy::{differential, differential_special, energy, gradient_descent, AeppliPoint, FlowOptions};
pub use error::{Error, Result};
pub use forms::{Bidegree, Form, Mode, C64};
pub use metric::HermitianStructure;
pub use model::{parse_model, parse_template, Model, ModelFile};
pub use torsion::{classify, hs_feasible, torsion_form};

//! Abelian Ginzburg-Landau theory on a lattice torus.
//!
//! The crate discretizes a flat torus carrying a degree-`d` Hermitian line
//! bundle and provides the energy, its derivatives, the magnetic Laplacian
//! spectrum, minimizers and saddle points, bifurcating branches of
//! irreducible solutions off the normal phase, and stability diagnostics.

pub mod bifurcation;
pub mod bundle;
pub mod energy;
pub mod error;
pub mod glf;
pub mod lattice;
pub mod linalg;
pub mod poisson;
pub mod solvers;
pub mod spectral;
pub mod stability;
pub mod tangent;

pub use bundle::{Configuration, Coupling, Links, ReferenceConnection};
pub use error::{GlError, Result};
pub use lattice::{LatticeTorus, OneForm, ScalarField, TwoForm};
pub use tangent::Tangent;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

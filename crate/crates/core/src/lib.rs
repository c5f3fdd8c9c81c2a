//! Adiabatic switching for degenerate eigenvalue problems on finite-dimensional
//! Hermitian pairs `(H0, V)`.
//!
//! The coupling is switched on as `H(t) = H0 + f(t)V` for `t ≤ 0` with a slow
//! time scale `ε`. Starting from the right basis of the degenerate eigenspace
//! of `H0`, the Gell-Mann–Low ratio of the switched state converges to an
//! eigenvector of `H0 + V` as `ε → 0`.
//!
//! ```
//! use adiaswitch::{degeneracy, gml, io, switching::SwitchingProfile};
//!
//! let problem = io::parse_problem(include_str!("../data/canonical.json")).unwrap();
//! let basis = degeneracy::build_initial_basis(&problem);
//! let state = gml::geometric_eigenstate(&problem, &SwitchingProfile::Exponential, &basis, 0).unwrap();
//! assert!(state.eigen_residual < 1e-6);
//! ```

pub mod degeneracy;
pub mod error;
pub mod gml;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod propagation;
pub mod switching;

pub use error::{Error, Result};
pub use operator::{HermitianOperator, PerturbationProblem};
pub use propagation::EvolutionKind;
pub use switching::{Schedule, SwitchingProfile};

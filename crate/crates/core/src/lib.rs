//! Casimir-Polder potentials of an atom near a multilayer-coated surface,
//! superposed with a partially reflected optical-lattice potential; per-site
//! bound states, observable predictions, and spectrum fitting.
//!
//! Modules:
//! - [`atomdata`]: atomic line lists and the imaginary-frequency
//!   polarizability tensor.
//! - [`multilayer`]: transfer-matrix reflection (real and imaginary
//!   frequency) and the Kramers-Kronig transform of tabulated dispersion.
//! - [`cpcore`]: the surface potential itself (full QED, short-range and
//!   long-range limits).
//! - [`trap`]: lattice + surface potential, shooting-method bound states,
//!   predicted transition shift, trap observables.
//! - [`specfit`]: Voigt profiles, damped least-squares fits, bootstrap
//!   confidence intervals, calibration fits.
//! - [`cli`]: configuration files, fixtures, subcommand entry points.

pub mod atomdata;
pub mod cli;
pub mod constants;
pub mod cpcore;
pub mod error;
pub mod multilayer;
pub mod quadrature;
pub mod specfit;
pub mod spline;
pub mod trap;

mod lm;

pub use error::{Error, Result};

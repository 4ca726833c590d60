//! Rate estimation for hierarchical multi-type branching processes observed
//! through noisy barcode read counts.
//!
//! The model is a continuous-time branching process over one self-renewing
//! stem compartment, a layer of progenitors fed by the stem compartment, and
//! mature cell types produced by their parent progenitor. Lineages (barcodes)
//! evolve independently; at each observation time a hypergeometric read
//! sampling step maps latent cell counts to observed read counts.
//!
//! The crate provides:
//! - exact first and second moments of the latent and observed counts as
//!   closed-form exponential polynomials in time ([`moments`]),
//! - an independent Runge-Kutta oracle for those moments ([`moments::oracle`]),
//! - a Gillespie simulator of the full read-count pipeline ([`simulator`]),
//! - generalized-method-of-moments fitting of the rate parameters by matching
//!   model to empirical pairwise read-count correlations ([`estimator`]),
//! - bootstrap confidence intervals, cross-validated model selection and
//!   parameter-recovery studies ([`validation`]),
//! - file formats and a CLI entry point ([`io`]).
//!
//! Everything randomized takes explicit seeds and uses per-work-item RNG
//! streams, so results are reproducible bit-for-bit regardless of thread
//! count. The `parallel` feature (on by default) distributes lineages,
//! restarts and replicates with rayon; disabling it yields a dependency-free
//! sequential build with identical outputs.

pub mod error;
pub mod expsum;
pub mod model;
pub mod moments;
pub mod par;
pub mod presets;
pub mod simulator;

pub mod estimator;
pub mod io;
pub mod validation;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

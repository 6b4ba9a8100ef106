//! Integer moments `E[u_t(x)^n]` of one-dimensional super-Brownian motion.
//!
//! The crate is split along the computation:
//!
//! - [`index`] enumerates the combinatorial labels `(alpha, beta, tau)` of the
//!   summands in the exact moment expansion.
//! - [`kernel`] turns one summand at fixed branch times into a Gaussian network
//!   of heat kernels and integrates out the spatial variables in closed form.
//! - [`quadrature`] integrates the remaining function of the branch times over
//!   the ordered simplex `0 < s_n' < ... < s_1 < t`.
//! - [`moment`] assembles the full moment with error bars.
//! - [`particles`] is an independent branching-particle Monte Carlo oracle.
//! - [`analysis`] turns moments and tail frequencies into envelope, slope and
//!   tail-bound diagnostics.

pub mod analysis;
pub mod error;
pub mod index;
pub mod kernel;
pub mod moment;
pub mod particles;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
pub use index::{IndexTriple, MomentIndexPair, PairingMap};
pub use kernel::{heat_kernel, initial_potential, InitialCondition, KernelGraph};
pub use moment::{moment, MomentRequest, MomentResult};
pub use quadrature::{QuadMethod, QuadSettings, QuadratureResult};

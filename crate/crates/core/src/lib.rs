//! Simulation and verification core for the stochastic discrete
//! long-wave/short-wave resonance lattice
//!
//! ```text
//! i du_m = (2u_m - u_{m+1} - u_{m-1}) dt - i alpha u_m dt + u_m v_m dt + f_m dt
//!          + eps * sum_k (b_{k,m} + h_{k,m}(u_m)) dW_k
//!   dv_m = -beta v_m dt - lambda (|u_{m+1}|^2 - |u_m|^2) dt + g_m dt
//!          + eps * sum_k (gamma_{k,m} + sigma_{k,m}(v_m)) dW_k
//! ```
//!
//! truncated to the sites `-M..=M`.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the whole numerical
//! engine: lattice operators, the coupled model and its derived constants,
//! diffusion families and counter-based Wiener streams, cutoff truncations,
//! time steppers, ensemble estimators and closed-form linear references.
//! Parallel execution plugs in through [`estimators::PathExecutor`].
//!
//! # Modules
//!
//! - [`lattice`]: sequences over `-M..=M`, the difference operators `A`, `B`, `B*`
//! - [`system`]: parameters, the couplings `F` and `G`, drift, derived constants
//! - [`noise`]: diffusion families, the `delta` bound sequence, Wiener increments
//! - [`truncation`]: radial cutoffs, truncated maps, stopping times
//! - [`integrator`]: Euler-Maruyama and exponential Euler-Maruyama path simulation
//! - [`estimators`]: moments, tails, occupation measures, noise-intensity studies
//! - [`oracle`]: closed-form linear references
//! - [`dense`]: small dense complex matrices and the matrix exponential

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dense;
pub mod error;
pub mod estimators;
pub mod integrator;
pub mod lattice;
pub mod noise;
pub mod oracle;
pub mod stats;
pub mod system;
pub mod truncation;

#[doc(inline)]
pub use self::{
    error::{Error, Result},
    lattice::{Boundary, Complex, ComplexSeq, LatticeState, RealSeq},
    system::{DerivedConstants, SystemParams},
};

//! Symbolic and numerical machinery for the 1/N² expansion of
//! `E[tr_N f(P(U^N, Z^N))]` when `U^N` are independent Haar unitary matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`ncalg`]: noncommutative polynomials, exponential atoms, the derivations
//!   `δ_i`, `𝒟_i` and their Duhamel variant.
//! * [`indexsets`]: the recursive index families `J_n` and their depth map.
//! * [`freetrace`]: traces on free products of Haar unitaries, free unitary
//!   Brownian motions and a matrix algebra.
//! * [`fubm`]: the spectral density of the free unitary Brownian motion.
//! * [`rmt`]: finite-N samplers and Monte Carlo estimators.
//! * [`weingarten`]: exact Haar integrals, used as an independent oracle.
//! * [`expansion`]: the operators `L` and the coefficients `α₀`, `α₁`.
//! * [`harness`]: the expression parser, configs and experiment runners.

pub mod expansion;
pub mod freetrace;
pub mod fubm;
pub mod harness;
pub mod indexsets;
pub mod ncalg;
pub mod numeric;
pub mod rmt;
pub mod weingarten;

pub use num_complex::Complex64;

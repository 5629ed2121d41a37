//! Local-time-scheme dynamical maps for finite-dimensional quantum systems.
//!
//! The evolution time is replaced by a Gaussian-distributed final instant
//! `t0` with concentration `λ`. Averaging the unitary conjugation over that
//! distribution gives a block-coefficient ("Schur") map on the eigenblocks
//! `P_m ρ P_n` of the Hamiltonian:
//!
//! ```text
//! ρ ↦ Σ_{m,n} exp(−i t0 (E_m − E_n)) exp(−(E_m − E_n)² / 4λ) P_m ρ P_n
//! ```
//!
//! The crate builds these maps for closed systems ([`ltsmap`]), coarse-grained
//! approximations of them ([`coarse`]) and reduced maps of a subsystem coupled
//! to an environment by a pure-decoherence interaction ([`opensys`]). The
//! diagnostics in [`markov`] decide complete positivity and divisibility, and
//! [`classify`] sorts initial states into Markovianity domains.
//!
//! Units have ħ = 1. Maps are stored as `N × N` coefficient matrices over the
//! distinct levels, so spin ensembles with `2^N`-dimensional state spaces are
//! handled without materializing superoperators.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;

pub mod classify;
pub mod coarse;
pub mod error;
pub mod linalg;
pub mod ltsmap;
pub mod markov;
pub mod opensys;
pub mod random;
pub mod spectra;
pub mod states;

pub use error::{Error, Result};
pub use ltsmap::{BlockCoefficientMap, KrausSet, LocalTimeParams};
pub use spectra::{Blocks, SpectralDecomposition};
pub use states::DensityMatrix;

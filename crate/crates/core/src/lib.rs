//! Classical emulation of the Hamiltonian-variational VQE for the spin-1/2
//! Heisenberg antiferromagnet on chains and kagome patches.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: interaction graphs, edge colorings, dimer coverings and the
//!   square-grid embedding with swapping-station qubits.
//! - [`ansatz`]: cyclic HVA circuits built from those graphs.
//! - [`simulator`]: exact statevector simulation and adjoint gradients.
//! - [`spectra`]: matrix-free Hamiltonian, Lanczos and dense reference spectra.
//! - [`optimizer`]: BFGS with a strong-Wolfe line search and seeded multistart.
//! - [`compiler`]: translation to the fSim + RZ native gate set.
//! - [`runner`]: experiment configs, JSON-lines records, summaries, verification.

pub mod ansatz;
pub mod compiler;
pub mod error;
pub mod lattice;
pub mod optimizer;
pub mod runner;
pub mod simulator;
pub mod spectra;

pub use error::{Error, Result};

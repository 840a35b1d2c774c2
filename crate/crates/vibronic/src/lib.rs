//! Numerical engine for open-quantum-system dynamics of an exciton-vibration
//! dimer: Lindblad propagation, mode-displacement synchronisation analysis,
//! Fourier spectra, eigenbasis coherence tracking and Liouvillian eigenmode
//! analysis.
//!
//! All core types are generic over the real scalar (`f32` or `f64`) through
//! [`scalar::Scalar`]; the `f64` instantiation is aliased at the crate root.
//! Energies are in cm⁻¹, times in ps, rates in ps⁻¹; the cm⁻¹ → rad/ps
//! conversion [`KAPPA`] is applied exactly once, inside commutators and
//! coherent phase factors.

// Force the BLAS/LAPACK backend to be linked into downstream binaries.
pub extern crate openblas_src;

pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod liouville;
pub mod observables;
pub mod scalar;
pub mod scenario;
pub mod syncanalysis;
pub(crate) mod sparse;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// 2πc in rad·cm/ps: multiplies cm⁻¹ energies into rad/ps angular frequencies.
pub const KAPPA: f64 = 0.18836515673088532;

/// c in cm·ps: divides cycles/ps frequencies into cm⁻¹ wavenumbers.
pub const CM_PS: f64 = 0.0299792458;

/// Double-precision instantiations used by the CLI and most callers.
pub type DimerParams = hilbert::DimerParams<f64>;
pub type Operator = hilbert::Operator<f64>;
pub type OperatorSet = hilbert::OperatorSet<f64>;
pub type EigenSystem = hilbert::EigenSystem<f64>;

//! Scalar abstraction: all numerics are generic over the real scalar type.
//!
//! The trait bundles the arithmetic bounds used throughout the crate with the
//! dense eigensolver hooks that have per-precision LAPACK bindings. Concrete
//! aliases for the `f64` instantiation live at the crate root.

use std::fmt;
use std::iter::Sum;

use ndarray::{Array1, Array2, ScalarOperand};
use ndarray_linalg::{Eig, Eigh, EigValsh, Inverse, UPLO};
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, Signed};

use crate::error::{Error, Result};

/// Real scalar the engine is instantiated over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Signed
    + Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + ScalarOperand
    + rustfft::FftNum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or reference constant.
    fn of(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues
    /// and orthonormal eigenvectors as columns.
    fn eigh(a: &Array2<Complex<Self>>) -> Result<(Array1<Self>, Array2<Complex<Self>>)>;

    /// Eigenvalues only, for Hermitian matrices (positivity audits).
    fn eigvalsh(a: &Array2<Complex<Self>>) -> Result<Array1<Self>>;

    /// Eigendecomposition of a general complex matrix (right eigenvectors).
    fn eig(a: &Array2<Complex<Self>>) -> Result<(Array1<Complex<Self>>, Array2<Complex<Self>>)>;

    /// Dense inverse of a complex matrix.
    fn inv(a: &Array2<Complex<Self>>) -> Result<Array2<Complex<Self>>>;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            fn eigh(a: &Array2<Complex<Self>>) -> Result<(Array1<Self>, Array2<Complex<Self>>)> {
                a.eigh(UPLO::Lower).map_err(|e| Error::Solver(e.to_string()))
            }

            fn eigvalsh(a: &Array2<Complex<Self>>) -> Result<Array1<Self>> {
                a.eigvalsh(UPLO::Lower).map_err(|e| Error::Solver(e.to_string()))
            }

            fn eig(
                a: &Array2<Complex<Self>>,
            ) -> Result<(Array1<Complex<Self>>, Array2<Complex<Self>>)> {
                a.eig().map_err(|e| Error::Solver(e.to_string()))
            }

            fn inv(a: &Array2<Complex<Self>>) -> Result<Array2<Complex<Self>>> {
                a.inv().map_err(|e| Error::Solver(e.to_string()))
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// cm⁻¹ → rad/ps conversion, 2πc. Applied exactly once, inside commutators
/// and coherent phase factors.
pub fn kappa<R: Scalar>() -> R {
    R::of(crate::KAPPA)
}

/// cm⁻¹ → cycles/ps conversion, c in cm/ps.
pub fn cm_per_ps<R: Scalar>() -> R {
    R::of(crate::CM_PS)
}

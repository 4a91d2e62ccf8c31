//! Polarized paraxial light transport in weakly inhomogeneous media.
//!
//! The crate is organised bottom-up:
//!
//! * [`clifford`]: the 4×4 Dirac-like matrix algebra of the Maxwell operator,
//!   the Riemann–Silberstein spinor and the z-evolution generator.
//! * [`fw`]: the exact Foldy–Wouthuysen transform of the homogeneous
//!   generator, the matrix-valued and projected Berry connections and the
//!   monopole-like Berry curvature.
//! * [`medium`]: refractive-index models `n = n0 + ζ(x)`.
//! * [`transport`]: semiclassical ray tracing with the anomalous (Berry)
//!   velocity, spin-Hall deflection, Berry phase and Rytov quadratures.
//! * [`wave`]: a split-step Fourier integrator of the full four-component
//!   z-evolution, used as an independent oracle for the geometric
//!   predictions.
//! * [`container`]: the self-describing binary grid container shared by
//!   gridded media and field snapshots.

pub mod clifford;
pub mod container;
pub mod error;
pub mod fw;
pub mod medium;
pub mod transport;
pub mod wave;

mod linalg;

pub use error::{Error, ErrorKind, Result};
pub use linalg::{CVec3, Mat4, Vec2, Vec3};

/// Circular polarization label of a forward paraxial beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Helicity {
    Plus,
    Minus,
}

impl Helicity {
    pub fn sign(self) -> f64 {
        match self {
            Helicity::Plus => 1.0,
            Helicity::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Helicity::Plus => Helicity::Minus,
            Helicity::Minus => Helicity::Plus,
        }
    }
}

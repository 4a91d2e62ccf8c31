//! Small dense-algebra aliases and helpers shared across modules.

use nalgebra::{Matrix4, Vector2, Vector3};
use num_complex::Complex64;

pub type Mat4 = Matrix4<Complex64>;
pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type CVec3 = Vector3<Complex64>;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest entry modulus of a complex matrix.
pub(crate) fn max_abs(m: &Mat4) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// 2×2 block view: largest modulus among the off-diagonal blocks.
pub(crate) fn max_abs_off_blocks(m: &Mat4) -> f64 {
    let mut worst = 0.0_f64;
    for r in 0..4 {
        for col in 0..4 {
            if (r < 2) != (col < 2) {
                worst = worst.max(m[(r, col)].norm());
            }
        }
    }
    worst
}

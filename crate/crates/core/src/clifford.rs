//! Dirac-like form of the monochromatic Maxwell equations.
//!
//! The field is packed into the four-component spinor
//! `Ψ = (−F_x + iF_y, F_z, F_z, F_x + iF_y)` built from the
//! Riemann–Silberstein vector `F = nE + icB`. The matrices `M_x, M_y, M_z = β`
//! obey the Dirac algebra, and the z-evolution `ik⁻¹∂_zΨ = HΨ` is generated by
//! `H = −(n0 + ζ)β + βM⊥·p⊥`, which is β-pseudo-Hermitian rather than
//! Hermitian.

use nalgebra::Vector4;
use num_complex::Complex64;

use crate::linalg::{c, max_abs, I};
use crate::{CVec3, Error, Helicity, Mat4, Result, Vec2, Vec3};

/// Which of the two matrix sets a computation uses.
///
/// The conjugate set `{M_x, −M_y, M_z}` evolves the conjugate
/// Riemann–Silberstein vector. It is the y-mirror image of the standard set
/// and is how forward left-circular beams are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MatrixSet {
    #[default]
    Standard,
    Conjugate,
}

impl MatrixSet {
    pub fn is_conjugate(self) -> bool {
        matches!(self, MatrixSet::Conjugate)
    }

    /// Sign multiplying `p_y` wherever the set enters through `M⊥·p⊥`.
    pub fn y_sign(self) -> f64 {
        match self {
            MatrixSet::Standard => 1.0,
            MatrixSet::Conjugate => -1.0,
        }
    }

    /// Representation used for a forward beam of the given helicity.
    pub fn for_helicity(h: Helicity) -> Self {
        match h {
            Helicity::Plus => MatrixSet::Standard,
            Helicity::Minus => MatrixSet::Conjugate,
        }
    }
}

/// Orientation of the cyclic products `M_iM_j = ±iM_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CyclicOrientation {
    /// `M_iM_j = +iM_k`
    RightHanded,
    /// `M_iM_j = −iM_k`
    LeftHanded,
}

impl CyclicOrientation {
    pub fn sign(self) -> f64 {
        match self {
            CyclicOrientation::RightHanded => 1.0,
            CyclicOrientation::LeftHanded => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiracMatrixSet {
    pub m_x: Mat4,
    pub m_y: Mat4,
    pub m_z: Mat4,
    pub conjugated: bool,
}

/// Builds `M_x`, `M_y`, `M_z = β`; with `conjugated` the sign of `M_y` is flipped.
pub fn build_matrices(conjugated: bool) -> DiracMatrixSet {
    let o = c(0.0);
    let l = c(1.0);
    #[rustfmt::skip]
    let m_x = Mat4::new(
        o, o, l, o,
        o, o, o, l,
        l, o, o, o,
        o, l, o, o,
    );
    #[rustfmt::skip]
    let m_y = Mat4::new(
        o, o, -I, o,
        o, o, o, -I,
        I, o, o, o,
        o, I, o, o,
    );
    let m_z = Mat4::from_diagonal(&Vector4::new(l, l, -l, -l));
    DiracMatrixSet {
        m_x,
        m_y: if conjugated { -m_y } else { m_y },
        m_z,
        conjugated,
    }
}

impl DiracMatrixSet {
    pub fn new(set: MatrixSet) -> Self {
        build_matrices(set.is_conjugate())
    }

    pub fn kind(&self) -> MatrixSet {
        if self.conjugated {
            MatrixSet::Conjugate
        } else {
            MatrixSet::Standard
        }
    }

    pub fn beta(&self) -> &Mat4 {
        &self.m_z
    }

    pub fn matrices(&self) -> [&Mat4; 3] {
        [&self.m_x, &self.m_y, &self.m_z]
    }

    /// `M⊥·p⊥`
    pub fn m_perp_dot(&self, p: Vec2) -> Mat4 {
        self.m_x * c(p.x) + self.m_y * c(p.y)
    }

    /// `M·p`
    pub fn m_dot(&self, p: Vec3) -> Mat4 {
        self.m_x * c(p.x) + self.m_y * c(p.y) + self.m_z * c(p.z)
    }

    /// Orientation of the cyclic products that holds for this set.
    pub fn orientation(&self) -> CyclicOrientation {
        if self.conjugated {
            CyclicOrientation::LeftHanded
        } else {
            CyclicOrientation::RightHanded
        }
    }
}

/// Largest deviations from the Dirac algebra, one entry per identity family.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffordReport {
    /// `max |M_i² − 1|`
    pub square: f64,
    /// `max |M_iM_j + M_jM_i|`, i ≠ j
    pub anticommutation: f64,
    /// `max |M_iM_j − s·iM_k|` over cyclic (i,j,k), for the better orientation `s`
    pub cyclic: f64,
    /// `max |M_i − M_i†|`
    pub hermiticity: f64,
    /// Orientation under which `cyclic` was measured.
    pub orientation: CyclicOrientation,
}

impl CliffordReport {
    pub fn max_residual(&self) -> f64 {
        self.square
            .max(self.anticommutation)
            .max(self.cyclic)
            .max(self.hermiticity)
    }
}

pub fn verify_clifford(set: &DiracMatrixSet) -> CliffordReport {
    let ms = set.matrices();
    let id = Mat4::identity();
    let mut square = 0.0_f64;
    let mut anti = 0.0_f64;
    let mut herm = 0.0_f64;
    for (i, a) in ms.iter().enumerate() {
        square = square.max(max_abs(&(*a * *a - id)));
        herm = herm.max(max_abs(&(*a - a.adjoint())));
        for b in ms.iter().skip(i + 1) {
            anti = anti.max(max_abs(&(*a * *b + *b * *a)));
        }
    }
    let cyclic_residual = |s: f64| {
        [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
            .iter()
            .map(|&(i, j, k)| max_abs(&(ms[i] * ms[j] - ms[k] * (I * s))))
            .fold(0.0_f64, f64::max)
    };
    let right = cyclic_residual(1.0);
    let left = cyclic_residual(-1.0);
    let (cyclic, orientation) = if right <= left {
        (right, CyclicOrientation::RightHanded)
    } else {
        (left, CyclicOrientation::LeftHanded)
    };
    CliffordReport {
        square,
        anticommutation: anti,
        cyclic,
        hermiticity: herm,
        orientation,
    }
}

/// Four complex amplitudes; `c[0]` carries ψ₊ and `c[3]` carries ψ₋.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spinor4(pub [Complex64; 4]);

impl Spinor4 {
    pub fn zero() -> Self {
        Spinor4([c(0.0); 4])
    }

    pub fn as_vector(&self) -> Vector4<Complex64> {
        Vector4::from_column_slice(&self.0)
    }

    pub fn from_vector(v: &Vector4<Complex64>) -> Self {
        Spinor4([v[0], v[1], v[2], v[3]])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `|c1|² + |c2|² − |c3|² − |c4|²`
    pub fn beta_norm(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr() - self.0[2].norm_sqr() - self.0[3].norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Rebuilds `F` from the spinor: `F_x = (c4 − c1)/2`, `F_y = (c4 + c1)/(2i)`, `F_z = c2`.
    pub fn rs_vector(&self) -> CVec3 {
        let [c1, c2, _, c4] = self.0;
        CVec3::new((c4 - c1) * 0.5, (c4 + c1) / (I * 2.0), c2)
    }
}

/// Packs `F = nE + icB` into the spinor `(−F_x + iF_y, F_z, F_z, F_x + iF_y)`.
pub fn assemble_spinor(e: &CVec3, b: &CVec3, n: f64, speed: f64) -> Result<Spinor4> {
    let finite = |v: &CVec3| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    if !finite(e) || !finite(b) || !n.is_finite() || !speed.is_finite() {
        return Err(Error::NonFinite("assemble_spinor input"));
    }
    if n <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "refractive index must be positive, got {n}"
        )));
    }
    let f = e * c(n) + b * (I * speed);
    Ok(spinor_from_rs(&f))
}

pub fn spinor_from_rs(f: &CVec3) -> Spinor4 {
    Spinor4([-f.x + I * f.y, f.z, f.z, f.x + I * f.y])
}

/// Local symbol of the z-evolution generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianSymbol {
    pub n0: f64,
    pub zeta: f64,
    pub p_perp: Vec2,
}

/// `H = −(n0 + ζ)β + βM⊥·p⊥`.
pub fn hamiltonian_matrix(sym: &HamiltonianSymbol, set: &DiracMatrixSet) -> Result<Mat4> {
    let n = sym.n0 + sym.zeta;
    let p = sym.p_perp.norm();
    if !(p < n) {
        return Err(Error::NonParaxial {
            what: "|p_perp| must be below the local index",
            value: p,
            limit: n,
        });
    }
    Ok(set.beta() * c(-n) + set.beta() * set.m_perp_dot(sym.p_perp))
}

/// The odd part written as `s·iM⊥·(ẑ×p⊥)`, `s` the set's cyclic orientation.
///
/// For the standard set this equals `βM⊥·p⊥` identically; the conjugate set
/// flips the orientation and with it the sign.
pub fn odd_part_rotated_form(p_perp: Vec2, set: &DiracMatrixSet) -> Mat4 {
    let zxp = Vec2::new(-p_perp.y, p_perp.x);
    set.m_perp_dot(zxp) * (I * set.orientation().sign())
}

/// `max |βH†β − H|`
pub fn pseudo_hermiticity_residual(h: &Mat4, set: &DiracMatrixSet) -> f64 {
    let b = set.beta();
    max_abs(&(b * h.adjoint() * b - h))
}

/// Splits a matrix into block-diagonal (even) and block-off-diagonal (odd) parts.
pub fn split_even_odd(m: &Mat4) -> (Mat4, Mat4) {
    let mut even = *m;
    let mut odd = *m;
    for r in 0..4 {
        for col in 0..4 {
            if (r < 2) == (col < 2) {
                odd[(r, col)] = c(0.0);
            } else {
                even[(r, col)] = c(0.0);
            }
        }
    }
    (even, odd)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenCheck {
    /// `‖(M·p)Ψ₀ − nΨ₀‖ / ‖Ψ₀‖`
    Residual(f64),
    /// The analytic-signal spinor of this helicity vanishes for this
    /// direction; the beam must be carried by the conjugate matrix set.
    ConjugateRepresentationRequired,
}

/// Checks that a forward circular plane wave solves `(M·p)Ψ₀ = nΨ₀` in a
/// homogeneous medium of index `n`.
pub fn plane_wave_eigencheck(direction: Vec3, helicity: Helicity, n: f64) -> Result<EigenCheck> {
    if !direction.iter().all(|v| v.is_finite()) || !n.is_finite() {
        return Err(Error::NonFinite("plane_wave_eigencheck input"));
    }
    if (direction.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "direction must be a unit vector, |d| = {}",
            direction.norm()
        )));
    }
    if n <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "refractive index must be positive, got {n}"
        )));
    }
    let (e1, e2) = transverse_frame(&direction);
    let sigma = helicity.sign();
    let e: CVec3 = e1.map(c) + e2.map(|v| I * (sigma * v));
    // Plane wave e^{ik n d·x}: ∇×E = iωB gives cB = n d×E.
    let d = direction.map(c);
    let b = d.cross(&e) * c(n);
    let psi = assemble_spinor(&e, &b, n, 1.0)?;
    let norm = psi.norm();
    if norm <= 1e-12 * n {
        return Ok(EigenCheck::ConjugateRepresentationRequired);
    }
    let set = build_matrices(false);
    let m = set.m_dot(direction * n);
    let v = psi.as_vector();
    let r = m * v - v * c(n);
    Ok(EigenCheck::Residual(r.norm() / norm))
}

/// Right-handed transverse basis `(e1, e2)` with `e1 × e2 = d`.
fn transverse_frame(d: &Vec3) -> (Vec3, Vec3) {
    let helper = if d.y.abs() < 0.9 {
        Vec3::y()
    } else {
        Vec3::x()
    };
    let e1 = helper.cross(d).normalize();
    let e2 = d.cross(&e1);
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(x: Complex64, y: Complex64, z: Complex64) -> CVec3 {
        CVec3::new(x, y, z)
    }

    #[test]
    fn m_z_is_beta() {
        let s = build_matrices(false);
        let expect = Mat4::from_diagonal(&Vector4::new(c(1.0), c(1.0), c(-1.0), c(-1.0)));
        assert_eq!(s.m_z, expect);
    }

    #[test]
    fn cyclic_products_exact() {
        let s = build_matrices(false);
        assert_eq!(s.m_x * s.m_y, s.m_z * I);
        assert_eq!(s.m_y * s.m_z, s.m_x * I);
        assert_eq!(s.m_z * s.m_x, s.m_y * I);
    }

    #[test]
    fn conjugate_set_negates_m_y() {
        let s = build_matrices(false);
        let t = build_matrices(true);
        assert_eq!(t.m_y, -s.m_y);
        assert_eq!(t.m_x, s.m_x);
        assert_eq!(t.m_z, s.m_z);
    }

    #[test]
    fn both_sets_satisfy_the_algebra() {
        let std = verify_clifford(&build_matrices(false));
        assert_eq!(std.max_residual(), 0.0);
        assert_eq!(std.orientation, CyclicOrientation::RightHanded);
        let conj = verify_clifford(&build_matrices(true));
        assert_eq!(conj.max_residual(), 0.0);
        assert_eq!(conj.orientation, CyclicOrientation::LeftHanded);
    }

    #[test]
    fn corrupted_set_is_detected() {
        let mut s = build_matrices(false);
        s.m_x[(0, 2)] += c(1e-3);
        assert!(verify_clifford(&s).max_residual() > 0.9e-3);
    }

    #[test]
    fn spinor_helicity_channels() {
        let zero = CVec3::zeros();
        let o = c(0.0);
        let psi = assemble_spinor(&cv(c(1.0), I, o), &zero, 1.0, 1.0).unwrap();
        assert_eq!(psi.0, [c(-2.0), o, o, o]);
        let psi = assemble_spinor(&cv(c(1.0), -I, o), &zero, 1.0, 1.0).unwrap();
        assert_eq!(psi.0, [o, o, o, c(2.0)]);
        let psi = assemble_spinor(&cv(o, o, c(1.0)), &zero, 1.0, 1.0).unwrap();
        assert_eq!(psi.0, [o, c(1.0), c(1.0), o]);
    }

    #[test]
    fn spinor_through_magnetic_part() {
        // n = 2, c = 3: F = 2E + 3iB; pick E = 0, B = (−i/3, 1/3, 0) → F = (1, i, 0).
        let b = cv(-I / 3.0, c(1.0 / 3.0), c(0.0));
        let psi = assemble_spinor(&CVec3::zeros(), &b, 2.0, 3.0).unwrap();
        assert!((psi.0[0] - c(-2.0)).norm() < 1e-15);
        assert!(psi.0[3].norm() < 1e-15);
    }

    #[test]
    fn spinor_rejects_bad_input() {
        let z = CVec3::zeros();
        let nan = cv(c(f64::NAN), c(0.0), c(0.0));
        assert!(matches!(
            assemble_spinor(&nan, &z, 1.0, 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(assemble_spinor(&z, &z, 0.0, 1.0).is_err());
        assert!(assemble_spinor(&z, &z, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn rs_vector_inverts_assembly() {
        let f = cv(
            Complex64::new(0.3, -0.1),
            Complex64::new(-1.2, 0.4),
            Complex64::new(0.5, 0.5),
        );
        let back = spinor_from_rs(&f).rs_vector();
        assert!((back - f).norm() < 1e-15);
    }

    #[test]
    fn hamiltonian_on_axis_is_minus_beta() {
        let set = build_matrices(false);
        let sym = HamiltonianSymbol {
            n0: 1.0,
            zeta: 0.0,
            p_perp: Vec2::zeros(),
        };
        assert_eq!(hamiltonian_matrix(&sym, &set).unwrap(), -set.m_z);
    }

    #[test]
    fn odd_term_two_forms_agree() {
        for conj in [false, true] {
            let set = build_matrices(conj);
            let p = Vec2::new(0.2, 0.1);
            let direct = set.beta() * set.m_perp_dot(p);
            let rotated = odd_part_rotated_form(p, &set);
            assert!(max_abs(&(direct - rotated)) <= 1e-15);
        }
    }

    #[test]
    fn odd_part_anticommutes_with_beta() {
        let set = build_matrices(false);
        let sym = HamiltonianSymbol {
            n0: 1.3,
            zeta: 0.02,
            p_perp: Vec2::new(0.1, -0.3),
        };
        let h = hamiltonian_matrix(&sym, &set).unwrap();
        let (even, odd) = split_even_odd(&h);
        assert_eq!(even + odd, h);
        let b = set.beta();
        assert!(max_abs(&(b * odd + odd * b)) == 0.0);
        assert!(max_abs(&(b * even - even * b)) == 0.0);
    }

    #[test]
    fn hamiltonian_domain_guard() {
        let set = build_matrices(false);
        let sym = HamiltonianSymbol {
            n0: 1.0,
            zeta: 0.0,
            p_perp: Vec2::new(1.0, 0.0),
        };
        assert!(matches!(
            hamiltonian_matrix(&sym, &set),
            Err(Error::NonParaxial { .. })
        ));
    }

    #[test]
    fn on_axis_positive_helicity_is_exact_eigenvector() {
        let n = 1.5;
        let (e1, e2) = transverse_frame(&Vec3::z());
        assert_eq!(e1, Vec3::x());
        assert_eq!(e2, Vec3::y());
        assert_eq!(
            plane_wave_eigencheck(Vec3::z(), Helicity::Plus, n).unwrap(),
            EigenCheck::Residual(0.0)
        );
        // The spinor itself is (−4n, 0, 0, 0).
        let e = cv(c(1.0), I, c(0.0));
        let b = Vec3::z().map(c).cross(&e) * c(n);
        let psi = assemble_spinor(&e, &b, n, 1.0).unwrap();
        assert_eq!(psi.0[0], c(-4.0 * n));
        assert!(psi.0[1..].iter().all(|z| *z == c(0.0)));
    }

    #[test]
    fn on_axis_negative_helicity_needs_conjugate_representation() {
        assert_eq!(
            plane_wave_eigencheck(Vec3::z(), Helicity::Minus, 1.0).unwrap(),
            EigenCheck::ConjugateRepresentationRequired
        );
    }

    #[test]
    fn tilted_plane_wave_residual() {
        let th = 0.01_f64;
        let d = Vec3::new(th.sin(), 0.0, th.cos());
        match plane_wave_eigencheck(d, Helicity::Plus, 1.2).unwrap() {
            EigenCheck::Residual(r) => assert!(r <= 1e-12, "residual {r}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eigencheck_rejects_non_unit_direction() {
        assert!(plane_wave_eigencheck(Vec3::new(0.0, 0.0, 2.0), Helicity::Plus, 1.0).is_err());
    }
}

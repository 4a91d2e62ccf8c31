//! Exact Foldy–Wouthuysen diagonalization of the homogeneous generator and
//! the Berry geometry it induces in momentum space.
//!
//! `U(p⊥) = (n0 + E + M⊥·p⊥)/√(2E(n0 + E))` with `E = √(n0² − p⊥²)` brings
//! `H0 = −n0β + βM⊥·p⊥` to `−Eβ`. `U` is Hermitian but not unitary; it is
//! β-pseudo-unitary, which is what keeps the β-weighted norm invariant.
//! The connection `A⊥ = iU⁻¹∇_{p⊥}U` projected onto the helicity subspace
//! gives `𝒜⊥ = ẑ×p/(4p_z²)` and the curvature `B = ∇_p×𝒜⊥ = p/(2p_z³)`.

use num_complex::Complex64;

use crate::clifford::DiracMatrixSet;
use crate::linalg::{c, max_abs, max_abs_off_blocks, I};
use crate::{Error, Mat4, Result, Vec2, Vec3};

/// `E = √(n0² − p⊥²)`, defined for `p⊥ < n0`.
pub fn fw_energy(p_perp: Vec2, n0: f64) -> Result<f64> {
    let p = p_perp.norm();
    if !p.is_finite() || !n0.is_finite() {
        return Err(Error::NonFinite("fw_energy input"));
    }
    if !(p < n0) {
        return Err(Error::NonParaxial {
            what: "transverse momentum must satisfy |p_perp| < n0",
            value: p,
            limit: n0,
        });
    }
    Ok((n0 * n0 - p * p).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwTransform {
    pub n0: f64,
    pub p_perp: Vec2,
    pub energy: f64,
    /// FW angle, `tanh(2p⊥θ) = p⊥/n0`; the `p⊥ → 0` limit `1/(2n0)` is used on axis.
    pub theta: f64,
    /// `U`
    pub matrix: Mat4,
    /// `U⁻¹ = (n0 + E − M⊥·p⊥)/√(2E(n0 + E))`
    pub inverse: Mat4,
}

pub fn fw_matrix(p_perp: Vec2, n0: f64, set: &DiracMatrixSet) -> Result<FwTransform> {
    let energy = fw_energy(p_perp, n0)?;
    let p = p_perp.norm();
    let theta = if p > 0.0 {
        (p / n0).atanh() / (2.0 * p)
    } else {
        0.5 / n0
    };
    let norm = (2.0 * energy * (n0 + energy)).sqrt();
    let kin = set.m_perp_dot(p_perp);
    let scalar = Mat4::identity() * c(n0 + energy);
    Ok(FwTransform {
        n0,
        p_perp,
        energy,
        theta,
        matrix: (scalar + kin) / c(norm),
        inverse: (scalar - kin) / c(norm),
    })
}

impl FwTransform {
    /// `U⁻¹H0U`
    pub fn transformed_generator(&self, set: &DiracMatrixSet) -> Mat4 {
        let h0 = set.beta() * c(-self.n0) + set.beta() * set.m_perp_dot(self.p_perp);
        self.inverse * h0 * self.matrix
    }

    /// `max |U⁻¹H0U + Eβ|` over all entries.
    pub fn diagonalization_residual(&self, set: &DiracMatrixSet) -> f64 {
        max_abs(&(self.transformed_generator(set) + set.beta() * c(self.energy)))
    }

    /// Largest entry of the 2×2 off-diagonal blocks of `U⁻¹H0U + Eβ`.
    pub fn off_block_residual(&self, set: &DiracMatrixSet) -> f64 {
        max_abs_off_blocks(&(self.transformed_generator(set) + set.beta() * c(self.energy)))
    }

    /// `cosh(p⊥θ) + (M⊥·p⊥/p⊥) sinh(p⊥θ)`: the exponential form of `U`.
    pub fn exponential_form(&self, set: &DiracMatrixSet) -> Mat4 {
        let p = self.p_perp.norm();
        let x = p * self.theta;
        let mut u = Mat4::identity() * c(x.cosh());
        if p > 0.0 {
            u += set.m_perp_dot(self.p_perp) * c(x.sinh() / p);
        }
        u
    }
}

/// Exact matrix-valued connection `A⊥ = iU⁻¹∇_{p⊥}U`, returned as `[A_x, A_y, A_z]`.
///
/// `U` does not depend on `p_z`, so `A_z` is the zero matrix.
pub fn berry_connection_exact(p_perp: Vec2, n0: f64, set: &DiracMatrixSet) -> Result<[Mat4; 3]> {
    let e = fw_energy(p_perp, n0)?;
    Ok(connection_terms(
        p_perp,
        set,
        2.0 * e * (n0 + e),
        2.0 * e * e * (n0 + e),
        2.0 * e,
    ))
}

/// Paraxial connection, `E ≈ n0 ≈ p_z`:
/// `βẑ×p⊥/(4p_z²) + i(M⊥·p⊥)p⊥/(4p_z³) + iM⊥/(2p_z)`.
pub fn berry_connection_paraxial(
    p_perp: Vec2,
    p_z: f64,
    set: &DiracMatrixSet,
) -> Result<[Mat4; 3]> {
    if !(p_z > 0.0) || !p_z.is_finite() {
        return Err(Error::NonParaxial {
            what: "p_z must be positive",
            value: p_z,
            limit: 0.0,
        });
    }
    if !(p_perp.norm() < p_z) {
        return Err(Error::NonParaxial {
            what: "paraxial connection needs |p_perp| < p_z",
            value: p_perp.norm(),
            limit: p_z,
        });
    }
    Ok(connection_terms(
        p_perp,
        set,
        4.0 * p_z * p_z,
        4.0 * p_z * p_z * p_z,
        2.0 * p_z,
    ))
}

fn connection_terms(p: Vec2, set: &DiracMatrixSet, d1: f64, d2: f64, d3: f64) -> [Mat4; 3] {
    // The β term carries the cyclic orientation; it flips for the conjugate set.
    let s = set.orientation().sign();
    let zxp = [-p.y, p.x];
    let kin = set.m_perp_dot(p);
    let mperp = [&set.m_x, &set.m_y];
    let comp = |i: usize| -> Mat4 {
        set.beta() * c(s * zxp[i] / d1) + kin * (I * (p[i] / d2)) + mperp[i] * (I / d3)
    };
    [comp(0), comp(1), Mat4::zeros()]
}

fn require_forward(p: &Vec3) -> Result<()> {
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("momentum"));
    }
    if !(p.z > 0.0) {
        return Err(Error::NonParaxial {
            what: "p_z must be positive",
            value: p.z,
            limit: 0.0,
        });
    }
    Ok(())
}

/// `σ ẑ×p / (4p_z²)`, the connection left after projecting onto the helicity
/// subspace (elements 11, 14, 41, 44).
pub fn projected_connection(p: Vec3, sigma: f64) -> Result<Vec3> {
    require_forward(&p)?;
    Ok(Vec3::new(-p.y, p.x, 0.0) * (sigma / (4.0 * p.z * p.z)))
}

/// `B = p / (2p_z³)`, with the exact `p_z`.
pub fn berry_curvature(p: Vec3) -> Result<Vec3> {
    require_forward(&p)?;
    Ok(p / (2.0 * p.z.powi(3)))
}

/// Monopole form `p / (2|p|³)`, equal to [`berry_curvature`] up to `O(p⊥²)`.
pub fn berry_curvature_monopole(p: Vec3) -> Result<Vec3> {
    require_forward(&p)?;
    Ok(p / (2.0 * p.norm().powi(3)))
}

/// Helicity-resolved Berry geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerryGeometry {
    pub sigma: f64,
}

impl BerryGeometry {
    pub fn new(sigma: f64) -> Self {
        BerryGeometry { sigma }
    }

    /// `σ𝒜⊥(p)`
    pub fn connection(&self, p: Vec3) -> Result<Vec3> {
        projected_connection(p, self.sigma)
    }

    /// `σB(p)`
    pub fn curvature(&self, p: Vec3) -> Result<Vec3> {
        Ok(berry_curvature(p)? * self.sigma)
    }

    /// Pre-projection, matrix-valued connection.
    pub fn matrix_connection(
        &self,
        p_perp: Vec2,
        n0: f64,
        set: &DiracMatrixSet,
    ) -> Result<[Mat4; 3]> {
        berry_connection_exact(p_perp, n0, set)
    }
}

/// Uniform cubic lattice in momentum space.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    pub origin: Vec3,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl MomentumGrid {
    /// Cube of `2·half_count + 1` points per axis centred on `center`.
    pub fn centered(center: Vec3, spacing: f64, half_count: usize) -> Self {
        let n = 2 * half_count + 1;
        MomentumGrid {
            origin: center - Vec3::repeat(spacing * half_count as f64),
            spacing,
            dims: [n, n, n],
        }
    }

    fn len(&self) -> usize {
        self.dims.iter().product()
    }

    fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + l
    }

    fn point(&self, i: usize, j: usize, l: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, l as f64) * self.spacing
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorReport {
    /// Max over pairs and interior points of `|([r_i, r_j] − ik⁻²σε_ijk B_k) f|` at stencil `h`.
    pub residual: f64,
    /// The same with stencil `2h` on the same lattice.
    pub residual_double_step: f64,
    /// `log2(residual_double_step / residual)`; about 2 when discretization dominates cleanly.
    pub observed_order: f64,
    /// Set when the residual is above round-off but does not follow `h²` scaling.
    pub too_coarse: bool,
    /// Per-pair residuals at stencil `h`, indexed `[i][j]`.
    pub per_pair: [[f64; 3]; 3],
}

/// Applies `r_i = ik⁻¹∂_{p_i} + k⁻¹σ𝒜_i` by central differences and compares
/// the commutators with `ik⁻²σε_ijk B_k` on a smooth test function.
pub fn position_commutator_check<F>(
    sigma: f64,
    k: f64,
    grid: &MomentumGrid,
    test_fn: F,
) -> Result<CommutatorReport>
where
    F: Fn(Vec3) -> Complex64,
{
    if !(k > 0.0) {
        return Err(Error::InvalidInput(format!("k must be positive, got {k}")));
    }
    if grid.dims.iter().any(|&d| d < 9) {
        return Err(Error::InvalidInput(
            "momentum grid needs at least 9 points per axis".into(),
        ));
    }
    let lowest = grid.origin.z;
    if !(lowest > 0.0) {
        return Err(Error::NonParaxial {
            what: "momentum grid must stay in p_z > 0",
            value: lowest,
            limit: 0.0,
        });
    }

    let n = grid.len();
    let mut f = vec![c(0.0); n];
    let mut conn = vec![Vec3::zeros(); n];
    let mut curv = vec![Vec3::zeros(); n];
    for i in 0..grid.dims[0] {
        for j in 0..grid.dims[1] {
            for l in 0..grid.dims[2] {
                let p = grid.point(i, j, l);
                let idx = grid.index(i, j, l);
                f[idx] = test_fn(p);
                conn[idx] = projected_connection(p, sigma)?;
                curv[idx] = berry_curvature(p)? * sigma;
            }
        }
    }

    let run = |stride: usize| -> [[f64; 3]; 3] {
        let rf: Vec<Vec<Complex64>> = (0..3)
            .map(|a| apply_position(grid, &f, &conn, a, stride, k))
            .collect();
        let margin = 4;
        let mut out = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                if a == b {
                    // [r_a, r_a] vanishes identically.
                    continue;
                }
                let rab = apply_position(grid, &rf[b], &conn, a, stride, k);
                let rba = apply_position(grid, &rf[a], &conn, b, stride, k);
                let cidx = 3 - a - b;
                let eps = levi_civita(a, b, cidx);
                let mut worst = 0.0_f64;
                for i in margin..grid.dims[0] - margin {
                    for j in margin..grid.dims[1] - margin {
                        for l in margin..grid.dims[2] - margin {
                            let idx = grid.index(i, j, l);
                            let expect = I * (eps * curv[idx][cidx] / (k * k)) * f[idx];
                            let got = rab[idx] - rba[idx];
                            worst = worst.max((got - expect).norm());
                        }
                    }
                }
                out[a][b] = worst;
            }
        }
        out
    };

    let per_pair = run(1);
    let coarse = run(2);
    let fold = |m: &[[f64; 3]; 3]| m.iter().flatten().fold(0.0_f64, |a, &b| a.max(b));
    let residual = fold(&per_pair);
    let residual_double_step = fold(&coarse);
    let roundoff = 1e-10 / (k * k);
    let observed_order = if residual > 0.0 && residual_double_step > 0.0 {
        (residual_double_step / residual).log2()
    } else {
        f64::NAN
    };
    let too_coarse = residual > roundoff && !(observed_order > 1.5);
    Ok(CommutatorReport {
        residual,
        residual_double_step,
        observed_order,
        too_coarse,
        per_pair,
    })
}

fn levi_civita(a: usize, b: usize, c_: usize) -> f64 {
    match (a, b, c_) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// `(r_a g)(p) = ik⁻¹ ∂_a g + k⁻¹ 𝒜_a g`; points closer than `stride` to the
/// boundary along `a` are left at zero.
fn apply_position(
    grid: &MomentumGrid,
    g: &[Complex64],
    conn: &[Vec3],
    axis: usize,
    stride: usize,
    k: f64,
) -> Vec<Complex64> {
    let mut out = vec![c(0.0); g.len()];
    let step = [grid.dims[1] * grid.dims[2], grid.dims[2], 1][axis] * stride;
    let h2 = 2.0 * grid.spacing * stride as f64;
    for i in 0..grid.dims[0] {
        for j in 0..grid.dims[1] {
            for l in 0..grid.dims[2] {
                let pos = [i, j, l][axis];
                if pos < stride || pos + stride >= grid.dims[axis] {
                    continue;
                }
                let idx = grid.index(i, j, l);
                let d = (g[idx + step] - g[idx - step]) / h2;
                out[idx] = (I * d + g[idx] * conn[idx][axis]) / k;
            }
        }
    }
    out
}

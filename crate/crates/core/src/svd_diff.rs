//! Derivatives of the signed SVD of a deformation gradient parameterized by
//! vertex coordinates: stretch gradients, rotation rates of the two SVD
//! factors, and second derivatives of the stretches.
//!
//! This is the quotient-based route. The rotation rates come from 2x2 linear
//! systems that are singular when two stretches coincide or sum to zero, so
//! [`skew_rates`] fails loudly near those configurations; production Hessians
//! use the analytic factorization in [`crate::eigsys`], which needs no rates.

use crate::smallmat::{vec3, Mat3, Svd3};
use crate::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvdDiffError {
    #[error("stretch pair ({a}, {b}) is numerically degenerate; rotation rates are undefined")]
    DegeneratePair { a: usize, b: usize },
}

/// The stretch pair feeding each packed skew component.
pub const SKEW_COMPONENT_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Rotation rates of the SVD factors along one coordinate direction, packed
/// as the three independent entries of each antisymmetric matrix.
#[derive(Clone, Copy, Debug)]
pub struct SkewRates<T> {
    pub wu: [T; 3],
    pub wv: [T; 3],
}

fn skew_from_packed<T: Real>(w: &[T; 3]) -> Mat3<T> {
    let z = T::zero();
    Mat3::from_rows([
        [z, w[0], w[1]],
        [-w[0], z, w[2]],
        [-w[1], -w[2], z],
    ])
}

impl<T: Real> SkewRates<T> {
    pub fn zero() -> Self {
        SkewRates {
            wu: [T::zero(); 3],
            wv: [T::zero(); 3],
        }
    }

    pub fn wu_matrix(&self) -> Mat3<T> {
        skew_from_packed(&self.wu)
    }

    pub fn wv_matrix(&self) -> Mat3<T> {
        skew_from_packed(&self.wv)
    }
}

/// The nine constant deformation-gradient derivatives of a P1 tetrahedron,
/// one per coordinate of vertices 0..2. Index `3 * vertex + coordinate`.
/// Vertex 3's matrices are the negated sums of the stored ones, so the
/// four-vertex sum is exactly zero.
#[derive(Clone, Copy, Debug)]
pub struct DFdx<T> {
    pub m: [Mat3<T>; 9],
}

impl<T: Real> DFdx<T> {
    /// Derivative for coordinate `c = 3 * vertex + axis`, vertices 0..2.
    pub fn coord(&self, c: usize) -> &Mat3<T> {
        &self.m[c]
    }

    /// Derivative for vertex 3, axis `p`.
    pub fn vertex3(&self, p: usize) -> Mat3<T> {
        -(self.m[p] + self.m[3 + p] + self.m[6 + p])
    }
}

/// Build the nine derivative matrices from the inverse rest-edge matrix.
///
/// The deformation gradient is linear in the vertex positions: moving vertex
/// `i >= 1` along axis `p` adds `e_p * (row i-1 of dm_inv)`, a rank-one
/// matrix, while vertex 0 carries the negated row sum.
pub fn dfdx_from_rest<T: Real>(dm_inv: &Mat3<T>) -> DFdx<T> {
    let rows = [dm_inv.row(0), dm_inv.row(1), dm_inv.row(2)];
    let neg_sum = [
        -(rows[0][0] + rows[1][0] + rows[2][0]),
        -(rows[0][1] + rows[1][1] + rows[2][1]),
        -(rows[0][2] + rows[1][2] + rows[2][2]),
    ];
    let mut m = [Mat3::zeros(); 9];
    for p in 0..3 {
        let mut e = [T::zero(); 3];
        e[p] = T::one();
        m[p] = Mat3::outer(&e, &neg_sum);
        m[3 + p] = Mat3::outer(&e, &rows[0]);
        m[6 + p] = Mat3::outer(&e, &rows[1]);
    }
    DFdx { m }
}

/// Stretch gradients: row `k`, column `c = 3 * vertex + axis` holds
/// `u_k^T (dF/dx_c) v_k`.
pub fn sigma_gradient<T: Real>(svd: &Svd3<T>, dfdx: &DFdx<T>) -> [[T; 9]; 3] {
    let mut out = [[T::zero(); 9]; 3];
    for k in 0..3 {
        let uk = svd.u.col(k);
        let vk = svd.v.col(k);
        for c in 0..9 {
            out[k][c] = vec3::dot(&uk, &dfdx.m[c].mul_vec(&vk));
        }
    }
    out
}

/// Rotation rates of `u` and `v` along the direction `df`.
///
/// Each packed component solves a 2x2 system in the corresponding stretch
/// pair; the system is singular when the stretches coincide or sum to zero,
/// reported as [`SvdDiffError::DegeneratePair`].
pub fn skew_rates<T: Real>(svd: &Svd3<T>, df: &Mat3<T>) -> Result<SkewRates<T>, SvdDiffError> {
    let mut rates = SkewRates::zero();
    for (comp, &(a, b)) in SKEW_COMPONENT_PAIRS.iter().enumerate() {
        let sa = svd.sigma[a];
        let sb = svd.sigma[b];
        let denom = sb * sb - sa * sa;
        let smax = T::one().max(sa.abs()).max(sb.abs());
        if denom.abs() <= T::cst(1e-6) * smax * smax {
            return Err(SvdDiffError::DegeneratePair { a, b });
        }
        let rhs0 = vec3::dot(&svd.u.col(a), &df.mul_vec(&svd.v.col(b)));
        let rhs1 = vec3::dot(&svd.u.col(b), &df.mul_vec(&svd.v.col(a)));
        rates.wu[comp] = (sb * rhs0 + sa * rhs1) / denom;
        rates.wv[comp] = (sa * rhs0 + sb * rhs1) / denom;
    }
    Ok(rates)
}

/// Second derivatives of the three stretches for a pair of coordinate
/// directions with known rotation rates.
///
/// The expression contains no second derivative of the deformation gradient:
/// for P1 elements the gradient is linear in the vertex positions, so that
/// term is identically zero. (Higher-order elements would need it back.)
pub fn sigma_second_derivative<T: Real>(
    svd: &Svd3<T>,
    rates_x: &SkewRates<T>,
    rates_y: &SkewRates<T>,
) -> [T; 3] {
    let s = &svd.sigma;
    // Scalar pairwise form; every term is symmetric under swapping the two
    // directions up to IEEE-commutative operations, so the swap symmetry is
    // exact in floating point.
    let samepair = |c: usize| rates_x.wu[c] * rates_y.wu[c] + rates_x.wv[c] * rates_y.wv[c];
    let crosspair = |c: usize| rates_y.wu[c] * rates_x.wv[c] + rates_x.wu[c] * rates_y.wv[c];
    let s01 = samepair(0);
    let s20 = samepair(1);
    let s12 = samepair(2);
    let t01 = crosspair(0);
    let t20 = crosspair(1);
    let t12 = crosspair(2);
    [
        (s01 + s20) * s[0] - t01 * s[1] - t20 * s[2],
        (s01 + s12) * s[1] - t01 * s[0] - t12 * s[2],
        (s12 + s20) * s[2] - t12 * s[1] - t20 * s[0],
    ]
}

/// Chain-rule element gradient: the twelve derivatives of the density with
/// respect to the tetrahedron's vertex coordinates. The last vertex's block
/// is the exact negated sum of the first three, so the per-axis block sums
/// vanish identically.
pub fn kernel_gradient<T: Real>(grad_sigma: &[T; 3], sgrad: &[[T; 9]; 3]) -> [T; 12] {
    let mut g = [T::zero(); 12];
    for c in 0..9 {
        g[c] = grad_sigma[0] * sgrad[0][c]
            + grad_sigma[1] * sgrad[1][c]
            + grad_sigma[2] * sgrad[2][c];
    }
    for p in 0..3 {
        g[9 + p] = -(g[p] + g[3 + p] + g[6 + p]);
    }
    g
}

//! Fixed-size dense linear algebra: 3x3 matrices, rotation-variant (signed)
//! SVD, a symmetric 3x3 eigensolver, and an oracle-grade NxN Jacobi
//! eigensolver for matrices up to 12x12.
//!
//! Everything here is pure and allocation-free except the Jacobi solver,
//! which is meant for verification rather than hot paths.

use crate::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmallMatError {
    #[error("jacobi eigensolver did not converge after {0} sweeps")]
    JacobiNoConvergence(usize),
}

/// 3-vector helpers over plain arrays.
pub mod vec3 {
    use crate::Real;

    pub fn dot<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    pub fn cross<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    pub fn norm<T: Real>(a: &[T; 3]) -> T {
        dot(a, a).sqrt()
    }

    pub fn scale<T: Real>(a: &[T; 3], s: T) -> [T; 3] {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    pub fn add<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    pub fn sub<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    pub fn normalize<T: Real>(a: &[T; 3]) -> [T; 3] {
        let n = norm(a);
        scale(a, T::one() / n)
    }

    pub fn inf_norm<T: Real>(a: &[T; 3]) -> T {
        a[0].abs().max(a[1].abs()).max(a[2].abs())
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn zeros() -> Self {
        Mat3 {
            m: [[T::zero(); 3]; 3],
        }
    }

    pub fn identity() -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            out.m[i][i] = T::one();
        }
        out
    }

    pub fn from_rows(rows: [[T; 3]; 3]) -> Self {
        Mat3 { m: rows }
    }

    pub fn from_cols(c0: [T; 3], c1: [T; 3], c2: [T; 3]) -> Self {
        Mat3 {
            m: [
                [c0[0], c1[0], c2[0]],
                [c0[1], c1[1], c2[1]],
                [c0[2], c1[2], c2[2]],
            ],
        }
    }

    pub fn from_diag(d: &[T; 3]) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            out.m[i][i] = d[i];
        }
        out
    }

    /// Rank-one product `col * row^T`.
    pub fn outer(col: &[T; 3], row: &[T; 3]) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = col[i] * row[j];
            }
        }
        out
    }

    pub fn row(&self, i: usize) -> [T; 3] {
        self.m[i]
    }

    pub fn col(&self, j: usize) -> [T; 3] {
        [self.m[0][j], self.m[1][j], self.m[2][j]]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[j][i];
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = out.m[i][j] * s;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T; 3]) -> [T; 3] {
        [
            vec3::dot(&self.m[0], v),
            vec3::dot(&self.m[1], v),
            vec3::dot(&self.m[2], v),
        ]
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == T::zero() || !d.is_finite() {
            return None;
        }
        let m = &self.m;
        let inv_d = T::one() / d;
        let mut out = Self::zeros();
        out.m[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_d;
        out.m[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_d;
        out.m[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_d;
        out.m[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_d;
        out.m[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_d;
        out.m[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_d;
        out.m[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_d;
        out.m[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_d;
        out.m[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_d;
        Some(out)
    }

    pub fn frob_norm(&self) -> T {
        let mut s = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                s = s + self.m[i][j] * self.m[i][j];
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> T {
        let mut s = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                s = s.max(self.m[i][j].abs());
            }
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|r| r.iter().all(|x| x.is_finite()))
    }
}

impl<T: Real> std::ops::Add for Mat3<T> {
    type Output = Mat3<T>;
    fn add(self, rhs: Mat3<T>) -> Mat3<T> {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = out.m[i][j] + rhs.m[i][j];
            }
        }
        out
    }
}

impl<T: Real> std::ops::Sub for Mat3<T> {
    type Output = Mat3<T>;
    fn sub(self, rhs: Mat3<T>) -> Mat3<T> {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = out.m[i][j] - rhs.m[i][j];
            }
        }
        out
    }
}

impl<T: Real> std::ops::Neg for Mat3<T> {
    type Output = Mat3<T>;
    fn neg(self) -> Mat3<T> {
        self.scale(-T::one())
    }
}

impl<T: Real> std::ops::Mul for Mat3<T> {
    type Output = Mat3<T>;
    fn mul(self, rhs: Mat3<T>) -> Mat3<T> {
        let mut out = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = T::zero();
                for k in 0..3 {
                    s = s + self.m[i][k] * rhs.m[k][j];
                }
                out.m[i][j] = s;
            }
        }
        out
    }
}

/// Rotation-variant SVD of a 3x3 matrix: `u * diag(sigma) * v^T`
/// reconstructs the input, `u` and `v` are proper rotations, and a
/// reflection, if present, is carried as a negative singular value.
#[derive(Clone, Copy, Debug)]
pub struct Svd3<T> {
    pub u: Mat3<T>,
    /// Descending by magnitude; only `sigma[2]` can be negative.
    pub sigma: [T; 3],
    pub v: Mat3<T>,
}

impl<T: Real> Svd3<T> {
    pub fn reconstruct(&self) -> Mat3<T> {
        self.u * Mat3::from_diag(&self.sigma) * self.v.transpose()
    }
}

/// Signed SVD with `det(u) = det(v) = +1`.
///
/// The sign convention: when `det(f) < 0` the reflection is carried by the
/// singular value of smallest magnitude (index 2 in the descending order,
/// which also breaks magnitude ties toward the largest index). Rank-deficient
/// input yields zero singular values rather than an error.
pub fn signed_svd3<T: Real>(f: &Mat3<T>) -> Svd3<T> {
    let scale = f.max_abs();
    if scale == T::zero() {
        return Svd3 {
            u: Mat3::identity(),
            sigma: [T::zero(); 3],
            v: Mat3::identity(),
        };
    }

    let eig = sym_eig3(&(f.transpose() * *f));
    // Descending singular-value order; the sort is stable so exact ties keep
    // their eigensolver order (the identity maps to the identity).
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.values[j].partial_cmp(&eig.values[i]).unwrap());
    let mut v = Mat3::from_cols(
        eig.vectors.col(order[0]),
        eig.vectors.col(order[1]),
        eig.vectors.col(order[2]),
    );
    if v.det() < T::zero() {
        for i in 0..3 {
            v.m[i][2] = -v.m[i][2];
        }
    }

    let b = *f * v; // column i = sigma_i * u_i
    let tiny = scale * T::epsilon() * T::cst(4.0);

    // sigma_0 >= ||f||_F / sqrt(3), so the leading column always normalizes.
    let u0 = vec3::normalize(&b.col(0));
    let b1 = b.col(1);
    let r1 = vec3::sub(&b1, &vec3::scale(&u0, vec3::dot(&b1, &u0)));
    let u1 = if vec3::norm(&r1) > tiny {
        vec3::normalize(&r1)
    } else {
        // Rank <= 1: complete with the axis least aligned with u0.
        let k = if u0[0].abs() <= u0[1].abs() && u0[0].abs() <= u0[2].abs() {
            0
        } else if u0[1].abs() <= u0[2].abs() {
            1
        } else {
            2
        };
        let mut e = [T::zero(); 3];
        e[k] = T::one();
        let r = vec3::sub(&e, &vec3::scale(&u0, u0[k]));
        vec3::normalize(&r)
    };
    let u2 = vec3::cross(&u0, &u1); // right-handed: det(u) = +1
    let u = Mat3::from_cols(u0, u1, u2);

    let d0 = vec3::dot(&u0, &b.col(0));
    let d1 = vec3::dot(&u1, &b.col(1));
    let d2 = vec3::dot(&u2, &b.col(2));
    // Magnitudes come from the diagonal projections (best reconstruction);
    // clamping keeps the descending-magnitude invariant exact under rounding.
    let s0 = d0.abs();
    let s1 = d1.abs().min(s0);
    let s2 = d2.abs().min(s1);
    let s2 = if f.det() < T::zero() { -s2 } else { s2 };

    Svd3 {
        u,
        sigma: [s0, s1, s2],
        v,
    }
}

/// Eigendecomposition of a symmetric 3x3 matrix.
#[derive(Clone, Copy, Debug)]
pub struct SymEig3<T> {
    /// Ascending.
    pub values: [T; 3],
    /// Orthonormal columns, `vectors.col(i)` pairs with `values[i]`.
    pub vectors: Mat3<T>,
}

/// Symmetric 3x3 eigensolver: trigonometric closed form, falling back to a
/// Jacobi sweep when the characteristic discriminant is within 1e-12 of
/// degenerate (nearly repeated eigenvalues).
pub fn sym_eig3<T: Real>(a: &Mat3<T>) -> SymEig3<T> {
    let scale = a.max_abs();
    if scale == T::zero() {
        return SymEig3 {
            values: [T::zero(); 3],
            vectors: Mat3::identity(),
        };
    }
    let b = a.scale(T::one() / scale);
    let m = &b.m;

    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    if p1 == T::zero() {
        // Already diagonal: sort entries, permute basis vectors to match.
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap());
        let mut vectors = Mat3::zeros();
        let mut values = [T::zero(); 3];
        for (slot, &i) in idx.iter().enumerate() {
            values[slot] = m[i][i] * scale;
            vectors.m[i][slot] = T::one();
        }
        return SymEig3 { values, vectors };
    }

    let third = T::one() / T::cst(3.0);
    let q = b.trace() * third;
    let p2 = (m[0][0] - q) * (m[0][0] - q)
        + (m[1][1] - q) * (m[1][1] - q)
        + (m[2][2] - q) * (m[2][2] - q)
        + T::cst(2.0) * p1;
    let p = (p2 / T::cst(6.0)).sqrt();
    let mut shifted = b;
    for i in 0..3 {
        shifted.m[i][i] = shifted.m[i][i] - q;
    }
    let r = (shifted.scale(T::one() / p).det() * T::cst(0.5))
        .max(-T::one())
        .min(T::one());
    let phi = r.acos() * third;

    let two = T::cst(2.0);
    let twopi_third = T::cst(2.0 * std::f64::consts::PI / 3.0);
    let l2 = q + two * p * phi.cos();
    let l0 = q + two * p * (phi + twopi_third).cos();
    let l1 = T::cst(3.0) * q - l0 - l2;

    let disc = {
        let g = (l1 - l0) * (l2 - l1) * (l2 - l0);
        g * g
    };
    if disc < T::cst(1e-12) {
        return jacobi_fallback3(a);
    }

    let v0 = closed_form_vector(&b, l0);
    let v2_raw = closed_form_vector(&b, l2);
    let v2 = vec3::normalize(&vec3::sub(
        &v2_raw,
        &vec3::scale(&v0, vec3::dot(&v2_raw, &v0)),
    ));
    let v1 = vec3::cross(&v2, &v0);

    SymEig3 {
        values: [l0 * scale, l1 * scale, l2 * scale],
        vectors: Mat3::from_cols(v0, v1, v2),
    }
}

fn closed_form_vector<T: Real>(b: &Mat3<T>, lambda: T) -> [T; 3] {
    let mut shifted = *b;
    for i in 0..3 {
        shifted.m[i][i] = shifted.m[i][i] - lambda;
    }
    let r0 = shifted.row(0);
    let r1 = shifted.row(1);
    let r2 = shifted.row(2);
    let c01 = vec3::cross(&r0, &r1);
    let c02 = vec3::cross(&r0, &r2);
    let c12 = vec3::cross(&r1, &r2);
    let n01 = vec3::dot(&c01, &c01);
    let n02 = vec3::dot(&c02, &c02);
    let n12 = vec3::dot(&c12, &c12);
    let best = if n01 >= n02 && n01 >= n12 {
        c01
    } else if n02 >= n12 {
        c02
    } else {
        c12
    };
    vec3::normalize(&best)
}

fn jacobi_fallback3<T: Real>(a: &Mat3<T>) -> SymEig3<T> {
    let flat: Vec<T> = a.m.iter().flatten().copied().collect();
    let eig = jacobi_eig(&flat, 3).expect("3x3 jacobi cannot fail to converge");
    let mut vectors = Mat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            vectors.m[i][j] = eig.vectors[i * 3 + j];
        }
    }
    SymEig3 {
        values: [eig.values[0], eig.values[1], eig.values[2]],
        vectors,
    }
}

/// Eigendecomposition of a small symmetric NxN matrix (intended for n <= 12).
#[derive(Clone, Debug)]
pub struct JacobiEig<T> {
    /// Ascending.
    pub values: Vec<T>,
    /// Row-major n x n; `vectors[i * n + j]` is component i of eigenvector j.
    pub vectors: Vec<T>,
    pub n: usize,
}

impl<T: Real> JacobiEig<T> {
    pub fn vector(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self.vectors[i * self.n + j]).collect()
    }

    /// `V * diag(values) * V^T`, row-major.
    pub fn reconstruct(&self) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = T::zero();
                for k in 0..n {
                    s = s + self.values[k] * self.vectors[i * n + k] * self.vectors[j * n + k];
                }
                out[i * n + j] = s;
            }
        }
        out
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for symmetric matrices, oracle-grade.
///
/// Iterates until the off-diagonal Frobenius mass drops below
/// `1e-12 * ||a||_F`; errors out after 100 sweeps.
pub fn jacobi_eig<T: Real>(a: &[T], n: usize) -> Result<JacobiEig<T>, SmallMatError> {
    assert_eq!(a.len(), n * n, "matrix storage must be n*n");
    let mut m = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }

    let norm = {
        let mut s = T::zero();
        for x in a {
            s = s + *x * *x;
        }
        s.sqrt()
    };
    let target = norm * T::cst(1e-12).max(T::epsilon() * T::cst(8.0));

    let mut converged = norm == T::zero();
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + m[p * n + q] * m[p * n + q];
            }
        }
        if (off + off).sqrt() < target {
            converged = true;
            break;
        }

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (T::cst(2.0) * apq);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (theta * theta + T::one()).sqrt())
                } else {
                    -T::one() / (-theta + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        // One final check: the last sweep may have finished the job.
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + m[p * n + q] * m[p * n + q];
            }
        }
        if (off + off).sqrt() >= target {
            return Err(SmallMatError::JacobiNoConvergence(JACOBI_MAX_SWEEPS));
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[i * n + i].partial_cmp(&m[j * n + j]).unwrap());
    let values: Vec<T> = idx.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![T::zero(); n * n];
    for (slot, &j) in idx.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + slot] = v[i * n + j];
        }
    }
    Ok(JacobiEig {
        values,
        vectors,
        n,
    })
}

/// Solve a 2x2 system by the explicit inverse; `None` when singular.
pub fn solve2<T: Real>(a: &[[T; 2]; 2], b: &[T; 2]) -> Option<[T; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    let inv = T::one() / det;
    Some([
        (a[1][1] * b[0] - a[0][1] * b[1]) * inv,
        (a[0][0] * b[1] - a[1][0] * b[0]) * inv,
    ])
}

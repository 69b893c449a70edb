//! Analytic congruent factorization of the 12x12 element Hessian.
//!
//! The Hessian of a principal-stretch density over one tetrahedron reduces,
//! after eliminating the rigid-translation null space, to a nine-coordinate
//! form that splits into a 3x3 stretch block (the density Hessian in the
//! stretches, conjugated by the stretch gradients) plus three 2x2 blocks that
//! are analytically diagonal: one twist/flip value pair per stretch pair.
//! Projecting onto the SPD cone therefore means clamping nine scalars — no
//! numerical 12x12 eigendecomposition.
//!
//! For a general rest shape the factorization is a congruence, not an
//! orthonormal eigendecomposition: the row vectors are not mutually
//! orthogonal, so the block values are not eigenvalues of the Hessian.
//! Clamping them still yields a positive semidefinite matrix (a sum of PSD
//! rank-one terms). With a unit rest shape the rows are orthonormal as
//! functionals of the deformation gradient, so the nine block values are the
//! true eigenvalues of the Hessian in that parameterization — concretely, of
//! the 9x9 sub-block over vertices 1..3 (vertex 0 held fixed), see
//! [`ElementFactorization::hessian_fixed_vertex0`].

use crate::energy::{twist_flip_from_eval, EnergyError, EnergyModel};
use crate::smallmat::{sym_eig3, vec3, Mat3, Svd3};
use crate::svd_diff::{sigma_gradient, DFdx};
use crate::Real;

pub type Mat9<T> = [[T; 9]; 9];
pub type Mat12<T> = [[T; 12]; 12];

/// Stretch pairs carrying the analytic value pairs, in fixed order.
pub const HESSIAN_PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

#[derive(Clone, Copy, Debug)]
pub struct TwistFlip<T> {
    pub twist: T,
    pub flip: T,
}

/// The factorized element Hessian: `K^T (Ktil^T D Ktil) K` with
/// `D = blockdiag(d_stretch, twist/flip pairs)` and `K` the constant
/// 9-to-12 reduction returned by [`ElementFactorization::k_reduce`].
#[derive(Clone, Debug)]
pub struct ElementFactorization<T> {
    /// Density Hessian in the stretches (symmetric 3x3).
    pub d_stretch: Mat3<T>,
    /// Stretch-gradient rows, 3x9.
    pub k_stretch: [[T; 9]; 3],
    /// Twist/flip values per stretch pair, ordered as [`HESSIAN_PAIRS`].
    pub d_pairs: [TwistFlip<T>; 3],
    /// Row pairs per stretch pair: row 0 carries the twist value (symmetric
    /// combination), row 1 the flip value (antisymmetric combination). The
    /// rows correspond to unit-Frobenius matrices in gradient space.
    pub k_pairs: [[[T; 9]; 2]; 3],
}

/// A dense, symmetric, positive semidefinite 12x12 element matrix obtained
/// by clamping the factorization's block values.
#[derive(Clone, Debug)]
pub struct ProjectedHessian<T> {
    pub matrix: Mat12<T>,
    /// Number of block values raised to the threshold; a diagnostic of local
    /// nonconvexity.
    pub clamp_count: usize,
}

/// Clamp decisions for one element at a given threshold.
#[derive(Clone, Debug)]
pub struct ClampReport<T> {
    /// `eps * max(1, largest block value)`.
    pub threshold: T,
    /// Eigenvalues of the stretch block, ascending.
    pub stretch_values: [T; 3],
    /// Matching eigenvectors (columns).
    pub stretch_vectors: Mat3<T>,
    pub pair_values: [TwistFlip<T>; 3],
    pub stretch_clamped: [bool; 3],
    /// `[twist, flip]` per pair.
    pub pair_clamped: [[bool; 2]; 3],
    pub clamp_count: usize,
}

/// Factorize one element: the stretch block, the six analytic twist/flip
/// values and all row vectors. Fails only if the stretches fall outside the
/// model's admissible domain.
pub fn factorize_element<T: Real>(
    model: &dyn EnergyModel<T>,
    svd: &Svd3<T>,
    dfdx: &DFdx<T>,
) -> Result<ElementFactorization<T>, EnergyError> {
    let eval = model.evaluate(&svd.sigma)?;
    let k_stretch = sigma_gradient(svd, dfdx);

    let inv_sqrt2 = T::cst(std::f64::consts::FRAC_1_SQRT_2);
    let mut d_pairs = [TwistFlip {
        twist: T::zero(),
        flip: T::zero(),
    }; 3];
    let mut k_pairs = [[[T::zero(); 9]; 2]; 3];

    for (idx, &(a, b)) in HESSIAN_PAIRS.iter().enumerate() {
        let (twist, flip) = twist_flip_from_eval(model, &svd.sigma, &eval, a, b)?;
        d_pairs[idx] = TwistFlip { twist, flip };

        let ua = svd.u.col(a);
        let ub = svd.u.col(b);
        let va = svd.v.col(a);
        let vb = svd.v.col(b);
        for c in 0..9 {
            let x = vec3::dot(&ua, &dfdx.m[c].mul_vec(&vb));
            let y = vec3::dot(&ub, &dfdx.m[c].mul_vec(&va));
            k_pairs[idx][0][c] = (x + y) * inv_sqrt2;
            k_pairs[idx][1][c] = (y - x) * inv_sqrt2;
        }
    }

    Ok(ElementFactorization {
        d_stretch: eval.hess,
        k_stretch,
        d_pairs,
        k_pairs,
    })
}

/// Expand a nine-coordinate Hessian to the full 12x12 form: vertex 3's
/// blocks are the negated sums of the others, which annihilates the three
/// rigid-translation modes exactly.
pub fn expand_reduced<T: Real>(h9: &Mat9<T>) -> Mat12<T> {
    let mut h = [[T::zero(); 12]; 12];
    for r in 0..9 {
        for c in r..9 {
            h[r][c] = h9[r][c];
            h[c][r] = h9[r][c];
        }
    }
    for r in 0..9 {
        for q in 0..3 {
            let s = -(h[r][q] + h[r][3 + q] + h[r][6 + q]);
            h[r][9 + q] = s;
            h[9 + q][r] = s;
        }
    }
    for p in 0..3 {
        for q in p..3 {
            let s = -(h[9 + p][q] + h[9 + p][3 + q] + h[9 + p][6 + q]);
            h[9 + p][9 + q] = s;
            h[9 + q][9 + p] = s;
        }
    }
    h
}

impl<T: Real> ElementFactorization<T> {
    /// The constant 9x12 reduction with blocks `[I 0 0 -I; 0 I 0 -I; 0 0 I -I]`.
    pub fn k_reduce() -> [[T; 12]; 9] {
        let mut k = [[T::zero(); 12]; 9];
        for i in 0..9 {
            k[i][i] = T::one();
            k[i][9 + i % 3] = -T::one();
        }
        k
    }

    /// The nine-coordinate Hessian `Ktil^T D Ktil`, exactly symmetric.
    pub fn reduced_hessian(&self) -> Mat9<T> {
        let mut h = [[T::zero(); 9]; 9];
        for c in 0..9 {
            for d in c..9 {
                let mut s = T::zero();
                for k in 0..3 {
                    for l in 0..3 {
                        s = s + self.d_stretch.m[k][l] * self.k_stretch[l][c] * self.k_stretch[k][d];
                    }
                }
                for pair in 0..3 {
                    s = s + self.d_pairs[pair].twist
                        * self.k_pairs[pair][0][c]
                        * self.k_pairs[pair][0][d];
                    s = s + self.d_pairs[pair].flip
                        * self.k_pairs[pair][1][c]
                        * self.k_pairs[pair][1][d];
                }
                h[c][d] = s;
                h[d][c] = s;
            }
        }
        h
    }

    /// The dense 12x12 element Hessian.
    pub fn element_hessian(&self) -> Mat12<T> {
        expand_reduced(&self.reduced_hessian())
    }

    /// The 9x9 sub-block over vertices 1..3 (vertex 0 held fixed). For the
    /// unit rest shape the coordinate-to-gradient map is orthonormal, so the
    /// spectrum of this block is exactly the factorization's block values.
    pub fn hessian_fixed_vertex0(&self) -> Mat9<T> {
        let h12 = self.element_hessian();
        let mut out = [[T::zero(); 9]; 9];
        for r in 0..9 {
            for c in 0..9 {
                out[r][c] = h12[3 + r][3 + c];
            }
        }
        out
    }

    /// Clamp decisions at threshold `eps * max(1, largest block value)`.
    pub fn clamp_report(&self, eps: T) -> ClampReport<T> {
        let eig = sym_eig3(&self.d_stretch);
        let mut vmax = eig.values[2];
        for pair in &self.d_pairs {
            vmax = vmax.max(pair.twist).max(pair.flip);
        }
        let threshold = eps * T::one().max(vmax);

        let mut stretch_clamped = [false; 3];
        let mut pair_clamped = [[false; 2]; 3];
        let mut clamp_count = 0;
        for k in 0..3 {
            if eig.values[k] < threshold {
                stretch_clamped[k] = true;
                clamp_count += 1;
            }
        }
        for (idx, pair) in self.d_pairs.iter().enumerate() {
            if pair.twist < threshold {
                pair_clamped[idx][0] = true;
                clamp_count += 1;
            }
            if pair.flip < threshold {
                pair_clamped[idx][1] = true;
                clamp_count += 1;
            }
        }

        ClampReport {
            threshold,
            stretch_values: eig.values,
            stretch_vectors: eig.vectors,
            pair_values: self.d_pairs,
            stretch_clamped,
            pair_clamped,
            clamp_count,
        }
    }

    /// SPD projection by clamping every block value to the report threshold.
    ///
    /// When nothing needs clamping the result is bit-for-bit the plain
    /// [`Self::element_hessian`]. Otherwise the stretch block is rebuilt from
    /// its clamped eigendecomposition and the pair values are clamped in
    /// place; the reassembled matrix is a sum of PSD rank-one terms.
    pub fn project_spd(&self, eps: T) -> ProjectedHessian<T> {
        let report = self.clamp_report(eps);
        if report.clamp_count == 0 {
            return ProjectedHessian {
                matrix: self.element_hessian(),
                clamp_count: 0,
            };
        }

        // Modal stretch rows: eigenvector-combined stretch gradients.
        let q = &report.stretch_vectors;
        let mut modal = [[T::zero(); 9]; 3];
        for k in 0..3 {
            for c in 0..9 {
                modal[k][c] = q.m[0][k] * self.k_stretch[0][c]
                    + q.m[1][k] * self.k_stretch[1][c]
                    + q.m[2][k] * self.k_stretch[2][c];
            }
        }
        let lam: Vec<T> = report
            .stretch_values
            .iter()
            .map(|l| l.max(report.threshold))
            .collect();
        let pairs: Vec<TwistFlip<T>> = self
            .d_pairs
            .iter()
            .map(|p| TwistFlip {
                twist: p.twist.max(report.threshold),
                flip: p.flip.max(report.threshold),
            })
            .collect();

        let mut h9 = [[T::zero(); 9]; 9];
        for c in 0..9 {
            for d in c..9 {
                let mut s = T::zero();
                for k in 0..3 {
                    s = s + lam[k] * modal[k][c] * modal[k][d];
                }
                for pair in 0..3 {
                    s = s + pairs[pair].twist * self.k_pairs[pair][0][c] * self.k_pairs[pair][0][d];
                    s = s + pairs[pair].flip * self.k_pairs[pair][1][c] * self.k_pairs[pair][1][d];
                }
                h9[c][d] = s;
                h9[d][c] = s;
            }
        }

        ProjectedHessian {
            matrix: expand_reduced(&h9),
            clamp_count: report.clamp_count,
        }
    }
}

//! Independent verification paths for the analytic element Hessian:
//! an entry-wise construction from stretch derivatives and rotation rates,
//! plain central finite differences of the density, and small helpers for
//! comparing dense 12x12 matrices.
//!
//! These are built and trusted first; the analytic factorization in
//! [`crate::eigsys`] is checked against them. They are deliberately slow and
//! must stay independent of the factorized assembly path: the entry-wise
//! route goes through the skew rotation rates (and therefore fails near
//! repeated stretches, where the analytic route must not).

use crate::energy::{EnergyError, EnergyModel};
use crate::eigsys::{expand_reduced, Mat12};
use crate::smallmat::{signed_svd3, vec3, Mat3, Svd3};
use crate::svd_diff::{sigma_second_derivative, skew_rates, DFdx, SvdDiffError};
use crate::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Degenerate(#[from] SvdDiffError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Central second-order finite-difference scheme.
#[derive(Clone, Copy, Debug)]
pub struct FdScheme<T> {
    pub h: T,
}

impl<T: Real> Default for FdScheme<T> {
    fn default() -> Self {
        FdScheme { h: T::cst(1e-4) }
    }
}

/// Density of one element at the given deformed vertex positions.
pub fn element_energy<T: Real>(
    model: &dyn EnergyModel<T>,
    dm_inv: &Mat3<T>,
    x: &[[T; 3]; 4],
) -> Result<T, EnergyError> {
    let dw = Mat3::from_cols(
        vec3::sub(&x[1], &x[0]),
        vec3::sub(&x[2], &x[0]),
        vec3::sub(&x[3], &x[0]),
    );
    let f = dw * *dm_inv;
    Ok(model.evaluate(&signed_svd3(&f).sigma)?.value)
}

/// Central differences of the density over the twelve vertex coordinates.
pub fn fd_gradient<T: Real>(
    model: &dyn EnergyModel<T>,
    dm_inv: &Mat3<T>,
    x: &[[T; 3]; 4],
    scheme: &FdScheme<T>,
) -> Result<[T; 12], EnergyError> {
    let h = scheme.h;
    let mut g = [T::zero(); 12];
    for c in 0..12 {
        let (v, p) = (c / 3, c % 3);
        let mut xp = *x;
        let mut xm = *x;
        xp[v][p] = xp[v][p] + h;
        xm[v][p] = xm[v][p] - h;
        g[c] = (element_energy(model, dm_inv, &xp)? - element_energy(model, dm_inv, &xm)?)
            / (T::cst(2.0) * h);
    }
    Ok(g)
}

/// Double central differences of the density; exactly symmetric by
/// construction (upper triangle mirrored).
pub fn fd_hessian<T: Real>(
    model: &dyn EnergyModel<T>,
    dm_inv: &Mat3<T>,
    x: &[[T; 3]; 4],
    scheme: &FdScheme<T>,
) -> Result<Mat12<T>, EnergyError> {
    let h = scheme.h;
    let denom = T::cst(4.0) * h * h;
    let mut out = [[T::zero(); 12]; 12];
    for c in 0..12 {
        for d in c..12 {
            let probe = |sc: T, sd: T| -> Result<T, EnergyError> {
                let mut xx = *x;
                xx[c / 3][c % 3] = xx[c / 3][c % 3] + sc * h;
                xx[d / 3][d % 3] = xx[d / 3][d % 3] + sd * h;
                element_energy(model, dm_inv, &xx)
            };
            let one = T::one();
            let v = (probe(one, one)? - probe(one, -one)? - probe(-one, one)?
                + probe(-one, -one)?)
                / denom;
            out[c][d] = v;
            out[d][c] = v;
        }
    }
    Ok(out)
}

/// Entry-wise element Hessian from the stretch derivatives: the quadratic
/// form of the density Hessian in the stretch gradients plus the density
/// gradient contracted with the stretch second derivatives, extended to the
/// fourth vertex by the negated-sum identity.
///
/// Fails with a degeneracy error near repeated stretches, where the rotation
/// rates are undefined.
pub fn hessian_entrywise<T: Real>(
    model: &dyn EnergyModel<T>,
    svd: &Svd3<T>,
    dfdx: &DFdx<T>,
) -> Result<Mat12<T>, OracleError> {
    let eval = model.evaluate(&svd.sigma)?;

    let mut dsig = [[T::zero(); 3]; 9];
    let mut rates = Vec::with_capacity(9);
    for c in 0..9 {
        for k in 0..3 {
            dsig[c][k] = vec3::dot(&svd.u.col(k), &dfdx.m[c].mul_vec(&svd.v.col(k)));
        }
        rates.push(skew_rates(svd, &dfdx.m[c])?);
    }

    let mut h9 = [[T::zero(); 9]; 9];
    for c in 0..9 {
        for d in c..9 {
            let dds = sigma_second_derivative(svd, &rates[c], &rates[d]);
            let mut s = T::zero();
            for k in 0..3 {
                for l in 0..3 {
                    s = s + eval.hess.m[k][l] * dsig[c][l] * dsig[d][k];
                }
            }
            for k in 0..3 {
                s = s + eval.grad[k] * dds[k];
            }
            h9[c][d] = s;
            h9[d][c] = s;
        }
    }
    Ok(expand_reduced(&h9))
}

pub fn frob12<T: Real>(a: &Mat12<T>) -> T {
    let mut s = T::zero();
    for row in a {
        for x in row {
            s = s + *x * *x;
        }
    }
    s.sqrt()
}

/// `||a - b||_F / max(||b||_F, 1e-30)`.
pub fn rel_frob_diff12<T: Real>(a: &Mat12<T>, b: &Mat12<T>) -> T {
    let mut d = T::zero();
    for r in 0..12 {
        for c in 0..12 {
            let e = a[r][c] - b[r][c];
            d = d + e * e;
        }
    }
    d.sqrt() / frob12(b).max(T::cst(1e-30))
}

pub fn mat12_mul_vec<T: Real>(a: &Mat12<T>, v: &[T; 12]) -> [T; 12] {
    let mut out = [T::zero(); 12];
    for r in 0..12 {
        let mut s = T::zero();
        for c in 0..12 {
            s = s + a[r][c] * v[c];
        }
        out[r] = s;
    }
    out
}

/// Wall-clock comparison of the two per-element projection routes.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionBench {
    pub elements: usize,
    pub analytic_seconds: f64,
    pub jacobi_seconds: f64,
}

impl ProjectionBench {
    pub fn speedup(&self) -> f64 {
        self.jacobi_seconds / self.analytic_seconds.max(1e-12)
    }
}

/// Time the analytic factorize-and-clamp against a numerical 12x12 Jacobi
/// eigendecomposition with the same clamping, on identical inputs. The
/// numerical side gets its Hessians for free (built outside the timed
/// region); sampling is excluded from both sides.
pub fn projection_speed_benchmark<T: Real>(
    model: &dyn EnergyModel<T>,
    elements: usize,
    seed: u64,
    eps: T,
) -> ProjectionBench {
    use crate::eigsys::factorize_element;
    use crate::smallmat::jacobi_eig;
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let opts = sampling::SampleOpts::default();
    let chunk = 4096;
    let mut remaining = elements;
    let mut analytic_seconds = 0.0;
    let mut jacobi_seconds = 0.0;
    let mut sink = T::zero();

    while remaining > 0 {
        let batch = remaining.min(chunk);
        remaining -= batch;
        let samples: Vec<sampling::SampledElement<T>> = (0..batch)
            .map(|_| sampling::sample_element(&mut rng, &opts))
            .collect();

        // Untimed: the plain Hessians handed to the numerical side.
        let hessians: Vec<Mat12<T>> = samples
            .iter()
            .map(|s| {
                factorize_element(model, &s.svd, &s.dfdx)
                    .expect("admissible sample")
                    .element_hessian()
            })
            .collect();

        let t0 = std::time::Instant::now();
        for s in &samples {
            let fact = factorize_element(model, &s.svd, &s.dfdx).expect("admissible sample");
            let projected = fact.project_spd(eps);
            sink = sink + projected.matrix[0][0];
        }
        analytic_seconds += t0.elapsed().as_secs_f64();

        let t0 = std::time::Instant::now();
        for h in &hessians {
            let flat: Vec<T> = h.iter().flatten().copied().collect();
            let eig = jacobi_eig(&flat, 12).expect("symmetric element matrix");
            let vmax = eig.values.iter().fold(T::zero(), |a, v| a.max(*v));
            let threshold = eps * T::one().max(vmax);
            let clamped: Vec<T> = eig.values.iter().map(|v| v.max(threshold)).collect();
            let mut rebuilt = [[T::zero(); 12]; 12];
            for r in 0..12 {
                for c in r..12 {
                    let mut s = T::zero();
                    for k in 0..12 {
                        s = s + clamped[k] * eig.vectors[r * 12 + k] * eig.vectors[c * 12 + k];
                    }
                    rebuilt[r][c] = s;
                    rebuilt[c][r] = s;
                }
            }
            sink = sink + rebuilt[11][11];
        }
        jacobi_seconds += t0.elapsed().as_secs_f64();
    }
    // Keep the accumulator alive so the timed loops cannot be elided.
    assert!(sink.is_finite());

    ProjectionBench {
        elements,
        analytic_seconds,
        jacobi_seconds,
    }
}

/// Seeded random element configurations for tests and the `verify` command.
pub mod sampling {
    use super::*;
    use crate::svd_diff::dfdx_from_rest;
    use rand::Rng;

    /// Ranges for the random stretch triple and the rest shape.
    #[derive(Clone, Copy, Debug)]
    pub struct SampleOpts {
        pub sigma_lo: f64,
        pub sigma_hi: f64,
        /// Minimum separation between any two stretches; keeps the quotient
        /// route well away from its singularities.
        pub min_gap: f64,
        /// Use the unit rest tetrahedron instead of a random one.
        pub identity_rest: bool,
    }

    impl Default for SampleOpts {
        fn default() -> Self {
            SampleOpts {
                sigma_lo: 0.5,
                sigma_hi: 2.2,
                min_gap: 0.2,
                identity_rest: false,
            }
        }
    }

    /// One random element: rest shape, deformed positions and the derived
    /// quantities every test needs.
    #[derive(Clone, Copy, Debug)]
    pub struct SampledElement<T> {
        pub dm: Mat3<T>,
        pub dm_inv: Mat3<T>,
        pub dfdx: DFdx<T>,
        pub f: Mat3<T>,
        pub svd: Svd3<T>,
        /// Rest vertex positions (vertex 0 at the origin).
        pub rest: [[T; 3]; 4],
        /// Deformed vertex positions.
        pub x: [[T; 3]; 4],
    }

    /// Uniform random rotation from a rejection-sampled unit quaternion.
    pub fn random_rotation<T: Real, R: Rng>(rng: &mut R) -> Mat3<T> {
        let q = loop {
            let q = [
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0f64..1.0),
            ];
            let n2 = q.iter().map(|x| x * x).sum::<f64>();
            if n2 > 1e-4 && n2 <= 1.0 {
                let n = n2.sqrt();
                break [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
            }
        };
        let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
        let m = [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ];
        let mut out = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = T::cst(m[i][j]);
            }
        }
        out
    }

    /// Random stretches in `[lo, hi]`, descending, pairwise separated by at
    /// least `min_gap`.
    pub fn random_sigma<T: Real, R: Rng>(rng: &mut R, opts: &SampleOpts) -> [T; 3] {
        loop {
            let mut s = [
                rng.gen_range(opts.sigma_lo..opts.sigma_hi),
                rng.gen_range(opts.sigma_lo..opts.sigma_hi),
                rng.gen_range(opts.sigma_lo..opts.sigma_hi),
            ];
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if s[0] - s[1] >= opts.min_gap && s[1] - s[2] >= opts.min_gap {
                return [T::cst(s[0]), T::cst(s[1]), T::cst(s[2])];
            }
        }
    }

    /// Well-conditioned positively oriented rest-edge matrix.
    fn random_rest<T: Real, R: Rng>(rng: &mut R) -> Mat3<T> {
        let r1: Mat3<T> = random_rotation(rng);
        let r2: Mat3<T> = random_rotation(rng);
        let d = Mat3::from_diag(&[
            T::cst(rng.gen_range(0.6..1.6)),
            T::cst(rng.gen_range(0.6..1.6)),
            T::cst(rng.gen_range(0.6..1.6)),
        ]);
        r1 * d * r2.transpose()
    }

    pub fn sample_element<T: Real, R: Rng>(rng: &mut R, opts: &SampleOpts) -> SampledElement<T> {
        let sigma = random_sigma(rng, opts);
        sample_element_with_sigma(rng, sigma, opts.identity_rest)
    }

    /// Build an element whose deformation gradient has the given stretches
    /// under random rotations.
    pub fn sample_element_with_sigma<T: Real, R: Rng>(
        rng: &mut R,
        sigma: [T; 3],
        identity_rest: bool,
    ) -> SampledElement<T> {
        let u: Mat3<T> = random_rotation(rng);
        let v: Mat3<T> = random_rotation(rng);
        let f = u * Mat3::from_diag(&sigma) * v.transpose();

        let dm = if identity_rest {
            Mat3::identity()
        } else {
            random_rest(rng)
        };
        let dm_inv = dm.inverse().expect("rest shape is invertible");
        let dfdx = dfdx_from_rest(&dm_inv);
        let svd = signed_svd3(&f);

        let origin = [
            T::cst(rng.gen_range(-1.0..1.0)),
            T::cst(rng.gen_range(-1.0..1.0)),
            T::cst(rng.gen_range(-1.0..1.0)),
        ];
        let dw = f * dm;
        let mut rest = [[T::zero(); 3]; 4];
        let mut x = [origin; 4];
        for i in 0..3 {
            rest[i + 1] = dm.col(i);
            x[i + 1] = vec3::add(&origin, &dw.col(i));
        }
        SampledElement {
            dm,
            dm_inv,
            dfdx,
            f,
            svd,
            rest,
            x,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigsys::factorize_element;
    use crate::energy::{Arap, NeoHookean, SymmetricDirichlet};
    use crate::svd_diff::{dfdx_from_rest, kernel_gradient, sigma_gradient};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use sampling::{sample_element, sample_element_with_sigma, SampleOpts};

    #[test]
    fn entrywise_matches_analytic_for_all_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let nh = NeoHookean {
            mu: 1.0f64,
            lambda: 1.0,
        };
        let models: [&dyn EnergyModel<f64>; 3] = [&Arap, &SymmetricDirichlet, &nh];
        for _ in 0..60 {
            let s: sampling::SampledElement<f64> = sample_element(&mut rng, &SampleOpts::default());
            for model in &models {
                let analytic = factorize_element(*model, &s.svd, &s.dfdx)
                    .unwrap()
                    .element_hessian();
                let entrywise = hessian_entrywise(*model, &s.svd, &s.dfdx).unwrap();
                let err = rel_frob_diff12(&analytic, &entrywise);
                assert!(err < 1e-8, "{}: {err}", model.id());
            }
        }
    }

    #[test]
    fn entrywise_rejects_repeated_stretches() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        // The rest configuration has all stretches equal to one.
        let s = sample_element_with_sigma(&mut rng, [1.0f64, 1.0, 1.0], true);
        match hessian_entrywise(&Arap, &s.svd, &s.dfdx) {
            Err(OracleError::Degenerate(_)) => {}
            other => panic!("expected degeneracy error, got {other:?}"),
        }
    }

    #[test]
    fn entrywise_output_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let s = sample_element_with_sigma(&mut rng, [2.0f64, 1.0, 0.5], false);
        let h = hessian_entrywise(&Arap, &s.svd, &s.dfdx).unwrap();
        for r in 0..12 {
            for c in 0..12 {
                assert!((h[r][c] - h[c][r]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fd_gradient_vanishes_at_rest() {
        let x: [[f64; 3]; 4] = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let g = fd_gradient(&Arap, &Mat3::identity(), &x, &FdScheme { h: 1e-5 }).unwrap();
        for v in g {
            assert!(v.abs() < 1e-9, "rest gradient component {v}");
        }
    }

    #[test]
    fn fd_hessian_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let s: sampling::SampledElement<f64> = sample_element(&mut rng, &SampleOpts::default());
        let h = fd_hessian(&Arap, &s.dm_inv, &s.x, &FdScheme::default()).unwrap();
        for r in 0..12 {
            for c in 0..12 {
                assert_eq!(h[r][c], h[c][r]);
            }
        }
    }

    #[test]
    fn analytic_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        let nh = NeoHookean {
            mu: 0.8f64,
            lambda: 1.2,
        };
        let models: [&dyn EnergyModel<f64>; 3] = [&Arap, &SymmetricDirichlet, &nh];
        let scheme = FdScheme { h: 1e-5 };
        for _ in 0..40 {
            let s: sampling::SampledElement<f64> = sample_element(&mut rng, &SampleOpts::default());
            for model in &models {
                let eval = model.evaluate(&s.svd.sigma).unwrap();
                let sgrad = sigma_gradient(&s.svd, &s.dfdx);
                let g = kernel_gradient(&eval.grad, &sgrad);
                let fd = fd_gradient(*model, &s.dm_inv, &s.x, &scheme).unwrap();
                for c in 0..12 {
                    assert!(
                        (g[c] - fd[c]).abs() / g[c].abs().max(1.0) < 1e-6,
                        "{} coord {c}: {} vs fd {}",
                        model.id(),
                        g[c],
                        fd[c]
                    );
                }
            }
        }
    }

    #[test]
    fn fd_matches_analytic_hessian_loosely() {
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        let s: sampling::SampledElement<f64> = sample_element(&mut rng, &SampleOpts::default());
        let analytic = factorize_element(&Arap, &s.svd, &s.dfdx)
            .unwrap()
            .element_hessian();
        let fd = fd_hessian(&Arap, &s.dm_inv, &s.x, &FdScheme::default()).unwrap();
        assert!(rel_frob_diff12(&analytic, &fd) < 1e-5);
    }

    #[test]
    fn unit_rest_sampling_uses_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(127);
        let opts = SampleOpts {
            identity_rest: true,
            ..Default::default()
        };
        let s: sampling::SampledElement<f64> = sample_element(&mut rng, &opts);
        assert_eq!(s.dm, Mat3::identity());
        let _ = dfdx_from_rest(&s.dm_inv);
    }
}

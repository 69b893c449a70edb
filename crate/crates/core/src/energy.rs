//! Principal-stretch energy models: the density `psi(sigma0, sigma1, sigma2)`,
//! its gradient and 3x3 Hessian in the stretches, the admissible stretch
//! domain, and the analytic twist/flip quotients with their limits at
//! repeated stretches.
//!
//! Shipped models:
//! * `arap` — sum of squared deviations from unit stretch; admits any
//!   configuration, inverted ones included.
//! * `symdirichlet` — symmetric Dirichlet; positive stretches only, blows up
//!   toward collapse, acting as an inversion barrier.
//! * `neohookean` — compressible neo-Hookean with a log-volume term;
//!   positive stretches only.

use crate::smallmat::Mat3;
use crate::Real;
use std::collections::BTreeMap;
use thiserror::Error;

/// Three principal stretches. No ordering is assumed at this layer.
pub type SigmaTriple<T> = [T; 3];

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("{model}: inadmissible principal stretches ({0}, {1}, {2})", .sigma[0], .sigma[1], .sigma[2])]
    Inadmissible {
        model: &'static str,
        sigma: [f64; 3],
    },
    #[error("unknown energy model id `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` does not accept parameter `{name}`")]
    UnknownParameter { model: &'static str, name: String },
}

/// Value, gradient and Hessian of the density at one stretch triple.
#[derive(Clone, Copy, Debug)]
pub struct EnergyEval<T> {
    pub value: T,
    pub grad: [T; 3],
    /// Symmetric by construction.
    pub hess: Mat3<T>,
}

/// A distortion density parameterized by principal stretches.
///
/// Implementations must be isotropic (invariant under permutations of the
/// stretches) and deterministic. `evaluate` fails exactly on stretches
/// outside the admissible domain.
pub trait EnergyModel<T: Real>: Send + Sync {
    fn id(&self) -> &'static str;
    fn is_admissible(&self, s: &SigmaTriple<T>) -> bool;
    fn evaluate(&self, s: &SigmaTriple<T>) -> Result<EnergyEval<T>, EnergyError>;
}

fn inadmissible<T: Real>(model: &'static str, s: &SigmaTriple<T>) -> EnergyError {
    EnergyError::Inadmissible {
        model,
        sigma: [
            s[0].to_f64_lossy(),
            s[1].to_f64_lossy(),
            s[2].to_f64_lossy(),
        ],
    }
}

/// Ascending copy; symmetric aggregates are accumulated in this order so the
/// density is bitwise invariant under permutation of its arguments.
fn sorted<T: Real>(s: &SigmaTriple<T>) -> [T; 3] {
    let mut t = *s;
    if t[0] > t[1] {
        t.swap(0, 1);
    }
    if t[1] > t[2] {
        t.swap(1, 2);
    }
    if t[0] > t[1] {
        t.swap(0, 1);
    }
    t
}

/// `sum (sigma_i - 1)^2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Arap;

impl<T: Real> EnergyModel<T> for Arap {
    fn id(&self) -> &'static str {
        "arap"
    }

    fn is_admissible(&self, s: &SigmaTriple<T>) -> bool {
        s.iter().all(|x| x.is_finite())
    }

    fn evaluate(&self, s: &SigmaTriple<T>) -> Result<EnergyEval<T>, EnergyError> {
        if !EnergyModel::<T>::is_admissible(self, s) {
            return Err(inadmissible(EnergyModel::<T>::id(self), s));
        }
        let one = T::one();
        let two = T::cst(2.0);
        let st = sorted(s);
        let value = st
            .iter()
            .map(|x| (*x - one) * (*x - one))
            .fold(T::zero(), |acc, t| acc + t);
        let grad = [
            two * (s[0] - one),
            two * (s[1] - one),
            two * (s[2] - one),
        ];
        Ok(EnergyEval {
            value,
            grad,
            hess: Mat3::from_diag(&[two, two, two]),
        })
    }
}

/// `sum (sigma_i^2 + sigma_i^-2)`, positive stretches only.
#[derive(Clone, Copy, Debug, Default)]
pub struct SymmetricDirichlet;

impl<T: Real> EnergyModel<T> for SymmetricDirichlet {
    fn id(&self) -> &'static str {
        "symdirichlet"
    }

    fn is_admissible(&self, s: &SigmaTriple<T>) -> bool {
        s.iter().all(|x| x.is_finite() && *x > T::zero())
    }

    fn evaluate(&self, s: &SigmaTriple<T>) -> Result<EnergyEval<T>, EnergyError> {
        if !EnergyModel::<T>::is_admissible(self, s) {
            return Err(inadmissible(EnergyModel::<T>::id(self), s));
        }
        let one = T::one();
        let two = T::cst(2.0);
        let st = sorted(s);
        let value = st
            .iter()
            .map(|x| *x * *x + one / (*x * *x))
            .fold(T::zero(), |acc, t| acc + t);
        let mut grad = [T::zero(); 3];
        let mut hess = Mat3::zeros();
        for k in 0..3 {
            let x = s[k];
            let inv2 = one / (x * x);
            grad[k] = two * x - two * inv2 / x;
            hess.m[k][k] = two + T::cst(6.0) * inv2 * inv2;
        }
        Ok(EnergyEval { value, grad, hess })
    }
}

/// `mu/2 (sum sigma_i^2 - 3) - mu log J + lambda/2 (log J)^2` with
/// `J = prod sigma_i`; positive stretches only.
#[derive(Clone, Copy, Debug)]
pub struct NeoHookean<T> {
    pub mu: T,
    pub lambda: T,
}

impl<T: Real> Default for NeoHookean<T> {
    fn default() -> Self {
        NeoHookean {
            mu: T::one(),
            lambda: T::one(),
        }
    }
}

impl<T: Real> EnergyModel<T> for NeoHookean<T> {
    fn id(&self) -> &'static str {
        "neohookean"
    }

    fn is_admissible(&self, s: &SigmaTriple<T>) -> bool {
        s.iter().all(|x| x.is_finite() && *x > T::zero())
    }

    fn evaluate(&self, s: &SigmaTriple<T>) -> Result<EnergyEval<T>, EnergyError> {
        if !self.is_admissible(s) {
            return Err(inadmissible(self.id(), s));
        }
        let one = T::one();
        let half = T::cst(0.5);
        let st = sorted(s);
        let i2 = st
            .iter()
            .map(|x| *x * *x)
            .fold(T::zero(), |acc, t| acc + t);
        let j = st[0] * st[1] * st[2];
        let log_j = j.ln();
        let value = half * self.mu * (i2 - T::cst(3.0)) - self.mu * log_j
            + half * self.lambda * log_j * log_j;

        let mut grad = [T::zero(); 3];
        let mut hess = Mat3::zeros();
        for k in 0..3 {
            let inv = one / s[k];
            grad[k] = self.mu * s[k] - self.mu * inv + self.lambda * log_j * inv;
        }
        for k in 0..3 {
            let inv_k = one / s[k];
            hess.m[k][k] =
                self.mu + (self.mu + self.lambda * (one - log_j)) * inv_k * inv_k;
            for l in (k + 1)..3 {
                let v = self.lambda / (s[k] * s[l]);
                hess.m[k][l] = v;
                hess.m[l][k] = v;
            }
        }
        Ok(EnergyEval { value, grad, hess })
    }
}

/// Look up a shipped model by id with a parameter map (CLI configuration).
pub fn by_id<T: Real>(
    id: &str,
    params: &BTreeMap<String, f64>,
) -> Result<Box<dyn EnergyModel<T>>, EnergyError> {
    match id {
        "arap" => {
            reject_params("arap", params, &[])?;
            Ok(Box::new(Arap))
        }
        "symdirichlet" => {
            reject_params("symdirichlet", params, &[])?;
            Ok(Box::new(SymmetricDirichlet))
        }
        "neohookean" => {
            reject_params("neohookean", params, &["mu", "lambda"])?;
            Ok(Box::new(NeoHookean {
                mu: T::cst(params.get("mu").copied().unwrap_or(1.0)),
                lambda: T::cst(params.get("lambda").copied().unwrap_or(1.0)),
            }))
        }
        other => Err(EnergyError::UnknownModel(other.to_string())),
    }
}

fn reject_params(
    model: &'static str,
    params: &BTreeMap<String, f64>,
    accepted: &[&str],
) -> Result<(), EnergyError> {
    for key in params.keys() {
        if !accepted.contains(&key.as_str()) {
            return Err(EnergyError::UnknownParameter {
                model,
                name: key.clone(),
            });
        }
    }
    Ok(())
}

/// Relative degeneracy threshold for the twist/flip quotients.
pub fn degeneracy_threshold<T: Real>(sa: T, sb: T) -> T {
    T::cst(1e-6) * T::one().max(sa.abs()).max(sb.abs())
}

/// The two analytically known Hessian values for the stretch pair `(a, b)`:
/// `twist = (g_a - g_b) / (sigma_a - sigma_b)` and
/// `flip = (g_a + g_b) / (sigma_a + sigma_b)` with `g = d psi / d sigma`.
///
/// Near-singular denominators (|difference| or |sum| below
/// [`degeneracy_threshold`]) switch to the analytic limits
/// `H_aa -+ H_ab`, evaluated at the projection of the stretch pair onto the
/// degenerate set so the switch is continuous to second order.
pub fn twist_flip_pair<T: Real>(
    model: &dyn EnergyModel<T>,
    s: &SigmaTriple<T>,
    a: usize,
    b: usize,
) -> Result<(T, T), EnergyError> {
    let eval = model.evaluate(s)?;
    twist_flip_from_eval(model, s, &eval, a, b)
}

pub(crate) fn twist_flip_from_eval<T: Real>(
    model: &dyn EnergyModel<T>,
    s: &SigmaTriple<T>,
    eval: &EnergyEval<T>,
    a: usize,
    b: usize,
) -> Result<(T, T), EnergyError> {
    assert_ne!(a, b, "twist/flip pair needs two distinct stretch indices");
    let half = T::cst(0.5);
    let sa = s[a];
    let sb = s[b];
    let tau = degeneracy_threshold(sa, sb);

    let twist = if (sa - sb).abs() < tau {
        let mut on_diag = *s;
        let mid = (sa + sb) * half;
        on_diag[a] = mid;
        on_diag[b] = mid;
        let h = limit_hessian(model, &on_diag, eval);
        h.m[a][a] - h.m[a][b]
    } else {
        (eval.grad[a] - eval.grad[b]) / (sa - sb)
    };

    let flip = if (sa + sb).abs() < tau {
        let mut anti = *s;
        let mid = (sa - sb) * half;
        anti[a] = mid;
        anti[b] = -mid;
        let h = limit_hessian(model, &anti, eval);
        h.m[a][a] + h.m[a][b]
    } else {
        (eval.grad[a] + eval.grad[b]) / (sa + sb)
    };

    Ok((twist, flip))
}

/// Hessian at the degenerate-set projection; falls back to the Hessian at
/// the original point when the projection leaves the admissible domain.
fn limit_hessian<T: Real>(
    model: &dyn EnergyModel<T>,
    projected: &SigmaTriple<T>,
    at_point: &EnergyEval<T>,
) -> Mat3<T> {
    match model.evaluate(projected) {
        Ok(e) => e.hess,
        Err(_) => at_point.hess,
    }
}

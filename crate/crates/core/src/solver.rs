//! Projected Newton with backtracking line search.
//!
//! Each iteration assembles the SPD-projected Hessian over the free degrees
//! of freedom, solves for the update direction (diagonal-preconditioned
//! conjugate gradient, with a dense Cholesky fallback on small systems and a
//! plain gradient direction as the last resort), and backtracks under the
//! Armijo condition. Trial steps that leave the energy's admissible domain
//! shrink the step, so positive-stretch-only models never see an inverted
//! element. Accepted energies are non-increasing by construction.

use crate::assembly::{
    assemble_projected_hessian, precompute, total_energy, total_gradient, AssemblyError,
    ConstraintSet, ElementRef, FreeDofMap, SparseSym, TetMesh,
};
use crate::energy::EnergyModel;
use crate::Real;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    /// Gradient infinity norm below tolerance.
    Converged,
    /// Iteration budget exhausted.
    MaxIters,
    /// Line search shrank the step past its budget without an acceptable pose.
    StepUnderflow,
    /// The starting pose is outside the energy's admissible domain.
    Inadmissible,
}

#[derive(Clone, Copy, Debug)]
pub enum LinearSolver<T> {
    /// Diagonal-preconditioned conjugate gradient with relative residual
    /// tolerance, capped at `10 * dofs` iterations.
    ConjugateGradient { rel_tol: T },
    /// Dense Cholesky; intended for systems up to a few thousand DOFs.
    DenseCholesky,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig<T> {
    pub max_iters: usize,
    /// Absolute gradient infinity-norm tolerance; `None` derives
    /// `1e-6 * mesh scale`.
    pub grad_tol: Option<T>,
    /// Relative clamp threshold for the SPD projection.
    pub eps: T,
    pub armijo_c1: T,
    pub shrink: T,
    pub max_halvings: usize,
    pub linear: LinearSolver<T>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            grad_tol: None,
            eps: T::cst(1e-8),
            armijo_c1: T::cst(1e-4),
            shrink: T::cst(0.5),
            max_halvings: 60,
            linear: LinearSolver::ConjugateGradient {
                rel_tol: T::cst(1e-10),
            },
        }
    }
}

/// One accepted iteration. `energy` is the value after the step, `grad_inf`
/// the gradient norm at the point the step was computed from. `ms` is wall
/// time and is excluded from the determinism contract.
#[derive(Clone, Copy, Debug)]
pub struct IterationRecord<T> {
    pub iter: usize,
    pub energy: T,
    pub grad_inf: T,
    pub step: T,
    pub clamps: usize,
    pub cg_iters: usize,
    pub ms: f64,
}

#[derive(Clone, Debug)]
pub struct SolveTrace<T> {
    pub records: Vec<IterationRecord<T>>,
    pub status: SolveStatus,
}

impl<T: Real> SolveTrace<T> {
    pub fn energies_non_increasing(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].energy <= w[0].energy)
    }

    /// Numeric-path equality: everything except wall time.
    pub fn same_numeric_path(&self, other: &Self) -> bool {
        self.status == other.status
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.iter == b.iter
                    && a.energy == b.energy
                    && a.grad_inf == b.grad_inf
                    && a.step == b.step
                    && a.clamps == b.clamps
                    && a.cg_iters == b.cg_iters
            })
    }
}

/// Diagnostics of a single direction solve.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo<T> {
    pub grad_inf: T,
    pub clamps: usize,
    pub cg_iters: usize,
    /// The linear solver broke down and the step fell back to the negated
    /// gradient.
    pub gradient_fallback: bool,
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, x| a.max(x.abs()))
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

struct CgOutcome<T> {
    x: Vec<T>,
    iters: usize,
    ok: bool,
}

fn pcg<T: Real>(a: &SparseSym<T>, b: &[T], rel_tol: T, max_iters: usize) -> CgOutcome<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        return CgOutcome {
            x,
            iters: 0,
            ok: true,
        };
    }
    let precond: Vec<T> = a
        .diagonal()
        .iter()
        .map(|d| {
            if *d > T::zero() {
                T::one() / *d
            } else {
                T::one()
            }
        })
        .collect();

    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&precond).map(|(ri, m)| *ri * *m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    for it in 1..=max_iters {
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        // NaN falls through the first comparison and is caught by the second.
        if pap <= T::zero() || !pap.is_finite() {
            return CgOutcome {
                x,
                iters: it,
                ok: false,
            };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= rel_tol * b_norm {
            return CgOutcome {
                x,
                iters: it,
                ok: true,
            };
        }
        for i in 0..n {
            z[i] = r[i] * precond[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        x,
        iters: max_iters,
        ok: false,
    }
}

/// In-place dense Cholesky solve; `None` when the matrix is not numerically
/// positive definite.
fn dense_cholesky_solve<T: Real>(a: &SparseSym<T>, b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut m = a.to_dense();
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d = d - m[j * n + k] * m[j * n + k];
        }
        if d <= T::zero() || !d.is_finite() {
            return None;
        }
        let l = d.sqrt();
        m[j * n + j] = l;
        for i in (j + 1)..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s = s - m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = s / l;
        }
    }
    // Forward then backward substitution.
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s = s - m[i * n + k] * y[k];
        }
        y[i] = s / m[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - m[k * n + i] * y[k];
        }
        y[i] = s / m[i * n + i];
    }
    Some(y)
}

const CHOLESKY_FALLBACK_MAX_DOFS: usize = 3000;

fn direction_for_gradient<T: Real>(
    mesh: &TetMesh<T>,
    model: &dyn EnergyModel<T>,
    refs: &[ElementRef<T>],
    constraints: &ConstraintSet<T>,
    cfg: &SolverConfig<T>,
    grad: &[T],
) -> Result<(Vec<T>, StepInfo<T>), AssemblyError> {
    let free = FreeDofMap::new(mesh.vertex_count(), constraints);
    let (h, clamps) = assemble_projected_hessian(mesh, model, refs, constraints, cfg.eps)?;

    let nfree = free.dof_count();
    let mut b = vec![T::zero(); nfree];
    for (fi, &v) in free.vertex_of_free.iter().enumerate() {
        for p in 0..3 {
            b[3 * fi + p] = -grad[3 * v + p];
        }
    }

    let mut cg_iters = 0;
    let mut fallback = false;
    let solution = match cfg.linear {
        LinearSolver::ConjugateGradient { rel_tol } => {
            let out = pcg(&h, &b, rel_tol, 10 * nfree.max(1));
            cg_iters = out.iters;
            if out.ok {
                Some(out.x)
            } else if nfree <= CHOLESKY_FALLBACK_MAX_DOFS {
                dense_cholesky_solve(&h, &b)
            } else {
                None
            }
        }
        LinearSolver::DenseCholesky => dense_cholesky_solve(&h, &b),
    };
    let xfree = match solution {
        Some(x) if x.iter().all(|v| v.is_finite()) => x,
        _ => {
            fallback = true;
            b.clone() // steepest descent: -grad on the free DOFs
        }
    };

    let mut p = vec![T::zero(); 3 * mesh.vertex_count()];
    for (fi, &v) in free.vertex_of_free.iter().enumerate() {
        for q in 0..3 {
            p[3 * v + q] = xfree[3 * fi + q];
        }
    }

    // The projected Hessian is SPD, so the solve must give a descent
    // direction; anything else falls back to steepest descent.
    if dot(&p, grad) >= T::zero() && inf_norm(grad) > T::zero() {
        fallback = true;
        for (i, g) in grad.iter().enumerate() {
            p[i] = -*g;
        }
    }

    Ok((
        p,
        StepInfo {
            grad_inf: inf_norm(grad),
            clamps,
            cg_iters,
            gradient_fallback: fallback,
        },
    ))
}

/// Solve the projected-Newton linear system at the current pose and return
/// the update direction over all coordinates (zero on pinned ones).
pub fn newton_step<T: Real>(
    mesh: &TetMesh<T>,
    model: &dyn EnergyModel<T>,
    refs: &[ElementRef<T>],
    constraints: &ConstraintSet<T>,
    cfg: &SolverConfig<T>,
) -> Result<(Vec<T>, StepInfo<T>), AssemblyError> {
    let grad = total_gradient(mesh, model, refs, constraints)?;
    direction_for_gradient(mesh, model, refs, constraints, cfg, &grad)
}

/// Minimize the mesh distortion energy subject to the pin constraints.
///
/// Terminates on the gradient tolerance, the iteration budget, or step-length
/// underflow; runtime domain violations never surface as errors, only as the
/// trace status. Errors are reserved for defective inputs (bad connectivity,
/// degenerate rest shapes, invalid pins).
pub fn minimize<T: Real>(
    mesh: &TetMesh<T>,
    model: &dyn EnergyModel<T>,
    constraints: &ConstraintSet<T>,
    cfg: &SolverConfig<T>,
) -> Result<(TetMesh<T>, SolveTrace<T>), AssemblyError> {
    let mut mesh = mesh.clone();
    constraints.validate(mesh.vertex_count())?;
    constraints.apply_targets(&mut mesh);
    let refs = precompute(&mesh)?;
    let grad_tol = cfg
        .grad_tol
        .unwrap_or_else(|| T::cst(1e-6) * mesh.mesh_scale());

    let mut records = Vec::new();
    let mut energy = match total_energy(&mesh, model, &refs) {
        Ok(e) => e,
        Err(AssemblyError::Element { .. }) => {
            return Ok((
                mesh,
                SolveTrace {
                    records,
                    status: SolveStatus::Inadmissible,
                },
            ));
        }
        Err(other) => return Err(other),
    };

    let status = loop {
        let grad = total_gradient(&mesh, model, &refs, constraints)?;
        let grad_inf = inf_norm(&grad);
        if grad_inf < grad_tol {
            break SolveStatus::Converged;
        }
        if records.len() >= cfg.max_iters {
            break SolveStatus::MaxIters;
        }

        let started = Instant::now();
        let (p, info) = direction_for_gradient(&mesh, model, &refs, constraints, cfg, &grad)?;
        let descent = dot(&p, &grad);

        let mut alpha = T::one();
        let mut accepted = None;
        let mut trial = mesh.clone();
        for _ in 0..=cfg.max_halvings {
            for (v, pos) in trial.deformed.iter_mut().enumerate() {
                for q in 0..3 {
                    pos[q] = mesh.deformed[v][q] + alpha * p[3 * v + q];
                }
            }
            // Admissibility backoff and Armijo in one pass: an inadmissible
            // trial pose fails energy evaluation and shrinks the step.
            if let Ok(trial_energy) = total_energy(&trial, model, &refs) {
                if trial_energy <= energy + cfg.armijo_c1 * alpha * descent {
                    accepted = Some((trial_energy, alpha));
                    break;
                }
            }
            alpha = alpha * cfg.shrink;
        }

        let Some((new_energy, step)) = accepted else {
            break SolveStatus::StepUnderflow;
        };
        std::mem::swap(&mut mesh.deformed, &mut trial.deformed);
        energy = new_energy;
        records.push(IterationRecord {
            iter: records.len() + 1,
            energy,
            grad_inf,
            step,
            clamps: info.clamps,
            cg_iters: info.cg_iters,
            ms: started.elapsed().as_secs_f64() * 1e3,
        });
    };

    Ok((mesh, SolveTrace { records, status }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{Arap, SymmetricDirichlet};
    use crate::fixtures;
    use crate::oracle::sampling::{sample_element, SampleOpts};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pinned_but_one(mesh: &TetMesh<f64>, free_vertex: usize) -> ConstraintSet<f64> {
        let mut c = ConstraintSet::new();
        for v in 0..mesh.vertex_count() {
            if v != free_vertex {
                c.pin(v, mesh.deformed[v]);
            }
        }
        c
    }

    #[test]
    fn zero_gradient_gives_zero_direction() {
        let mesh: TetMesh<f64> = fixtures::unit_tet();
        let refs = precompute(&mesh).unwrap();
        let constraints = pinned_but_one(&mesh, 1);
        let cfg = SolverConfig::default();
        let (p, info) = newton_step(&mesh, &Arap, &refs, &constraints, &cfg).unwrap();
        assert!(p.iter().all(|x| *x == 0.0));
        assert_eq!(info.cg_iters, 0);
        assert!(!info.gradient_fallback);
    }

    #[test]
    fn quadratic_single_dof_solved_in_one_step() {
        // Displacing vertex 1 along x keeps the SVD rotations constant, so
        // the energy is exactly quadratic along the Newton path and one step
        // lands on the minimizer.
        let mut mesh: TetMesh<f64> = fixtures::unit_tet();
        mesh.deformed[1][0] = 1.5;
        let constraints = pinned_but_one(&mesh, 1);
        let refs = precompute(&mesh).unwrap();
        let cfg = SolverConfig::default();
        let (p, _) = newton_step(&mesh, &Arap, &refs, &constraints, &cfg).unwrap();
        for (v, pos) in mesh.deformed.iter_mut().enumerate() {
            for q in 0..3 {
                pos[q] += p[3 * v + q];
            }
        }
        let g = total_gradient(&mesh, &Arap, &refs, &constraints).unwrap();
        assert!(inf_norm(&g) < 1e-10, "residual gradient {}", inf_norm(&g));
    }

    #[test]
    fn newton_directions_descend() {
        let mut rng = ChaCha8Rng::seed_from_u64(139);
        let cfg = SolverConfig::default();
        for _ in 0..100 {
            let s: crate::oracle::sampling::SampledElement<f64> = sample_element(&mut rng, &SampleOpts::default());
            let mesh = TetMesh {
                rest: s.rest.to_vec(),
                deformed: s.x.to_vec(),
                tets: vec![[0, 1, 2, 3]],
            };
            let refs = precompute(&mesh).unwrap();
            let constraints = pinned_but_one(&mesh, 3);
            let g = total_gradient(&mesh, &Arap, &refs, &constraints).unwrap();
            if inf_norm(&g) < 1e-12 {
                continue;
            }
            let (p, _) = newton_step(&mesh, &Arap, &refs, &constraints, &cfg).unwrap();
            assert!(dot(&p, &g) < 0.0, "not a descent direction");
        }
    }

    #[test]
    fn rest_start_converges_immediately() {
        let mesh: TetMesh<f64> = fixtures::cube_six_tets();
        let (out, trace) =
            minimize(&mesh, &Arap, &ConstraintSet::new(), &SolverConfig::default()).unwrap();
        assert_eq!(trace.status, SolveStatus::Converged);
        assert!(trace.records.is_empty());
        assert_eq!(out.deformed, mesh.deformed);
    }

    #[test]
    fn displaced_vertex_converges_and_matches_gradient_descent() {
        let mut mesh: TetMesh<f64> = fixtures::unit_tet();
        mesh.deformed[1][0] += 0.5;
        let constraints = pinned_but_one(&mesh, 1);
        let cfg = SolverConfig {
            grad_tol: Some(1e-6),
            ..Default::default()
        };
        let (newton_mesh, trace) = minimize(&mesh, &Arap, &constraints, &cfg).unwrap();
        assert_eq!(trace.status, SolveStatus::Converged);
        assert!(trace.records.len() <= 20, "{} iters", trace.records.len());
        assert!(trace.energies_non_increasing());
        let refs = precompute(&newton_mesh).unwrap();
        let newton_energy = total_energy(&newton_mesh, &Arap, &refs).unwrap();

        // Long-run backtracking gradient descent as an independent check of
        // the reached minimum.
        let mut gd = mesh.clone();
        let refs_gd = precompute(&gd).unwrap();
        let mut e = total_energy(&gd, &Arap, &refs_gd).unwrap();
        for _ in 0..5000 {
            let g = total_gradient(&gd, &Arap, &refs_gd, &constraints).unwrap();
            if inf_norm(&g) < 1e-9 {
                break;
            }
            let mut alpha = 1.0;
            loop {
                let mut trial = gd.clone();
                for (v, pos) in trial.deformed.iter_mut().enumerate() {
                    for q in 0..3 {
                        pos[q] -= alpha * g[3 * v + q];
                    }
                }
                let te = total_energy(&trial, &Arap, &refs_gd).unwrap();
                if te < e {
                    gd = trial;
                    e = te;
                    break;
                }
                alpha *= 0.5;
                assert!(alpha > 1e-18, "gradient descent stalled");
            }
        }
        assert!(
            (newton_energy - e).abs() < 1e-6,
            "newton {newton_energy} vs gradient descent {e}"
        );
    }

    #[test]
    fn twisted_cube_is_monotone_and_deterministic() {
        let (mesh, constraints) = fixtures::twisted_cube::<f64>(2, std::f64::consts::PI / 3.0);
        let cfg = SolverConfig::default();
        let (_, trace_a) = minimize(&mesh, &SymmetricDirichlet, &constraints, &cfg).unwrap();
        assert_eq!(trace_a.status, SolveStatus::Converged);
        assert!(trace_a.energies_non_increasing());
        assert!(!trace_a.records.is_empty());

        let (_, trace_b) = minimize(&mesh, &SymmetricDirichlet, &constraints, &cfg).unwrap();
        assert!(trace_a.same_numeric_path(&trace_b));
    }

    #[test]
    fn six_tet_cube_with_twisted_top_relaxes() {
        // Only the top face is pinned at its rotated position; the rest of
        // the cube is free to follow.
        let mut mesh: TetMesh<f64> = fixtures::cube_six_tets();
        let angle = std::f64::consts::PI / 3.0;
        let (sin, cos) = angle.sin_cos();
        let mut constraints = ConstraintSet::new();
        for (v, p) in mesh.rest.clone().iter().enumerate() {
            if p[2] == 1.0 {
                let dx = p[0] - 0.5;
                let dy = p[1] - 0.5;
                let target = [0.5 + cos * dx - sin * dy, 0.5 + sin * dx + cos * dy, p[2]];
                mesh.deformed[v] = target;
                constraints.pin(v, target);
            }
        }
        let (_, trace) = minimize(
            &mesh,
            &SymmetricDirichlet,
            &constraints,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(trace.status, SolveStatus::Converged);
        assert!(trace.energies_non_increasing());
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let (mesh, constraints) = fixtures::twisted_cube::<f64>(2, 0.6);
        let cg_cfg = SolverConfig::default();
        let chol_cfg = SolverConfig {
            linear: LinearSolver::DenseCholesky,
            ..Default::default()
        };
        let (mesh_cg, trace_cg) = minimize(&mesh, &Arap, &constraints, &cg_cfg).unwrap();
        let (mesh_ch, trace_ch) = minimize(&mesh, &Arap, &constraints, &chol_cfg).unwrap();
        assert_eq!(trace_cg.status, SolveStatus::Converged);
        assert_eq!(trace_ch.status, SolveStatus::Converged);
        let refs = precompute(&mesh_cg).unwrap();
        let e_cg = total_energy(&mesh_cg, &Arap, &refs).unwrap();
        let e_ch = total_energy(&mesh_ch, &Arap, &refs).unwrap();
        assert!((e_cg - e_ch).abs() < 1e-8, "cg {e_cg} vs cholesky {e_ch}");
    }

    #[test]
    fn admissibility_is_preserved_for_barrier_energies() {
        // Start strongly compressed; every accepted pose must stay valid.
        let mut mesh: TetMesh<f64> = fixtures::unit_tet();
        mesh.deformed[1] = [0.05, 0.0, 0.0];
        let constraints = pinned_but_one(&mesh, 1);
        let cfg = SolverConfig::default();
        let (out, trace) = minimize(&mesh, &SymmetricDirichlet, &constraints, &cfg).unwrap();
        assert_eq!(trace.status, SolveStatus::Converged);
        let refs = precompute(&out).unwrap();
        for t in 0..out.tet_count() {
            let svd = crate::assembly::element_svd(&out, &refs, t);
            assert!(svd.sigma.iter().all(|s| *s > 0.0));
        }
    }

    #[test]
    fn inadmissible_start_is_reported_in_status() {
        let mut mesh: TetMesh<f64> = fixtures::unit_tet();
        mesh.deformed[3][2] = -1.0; // inverted for a positive-stretch model
        let (_, trace) = minimize(
            &mesh,
            &SymmetricDirichlet,
            &ConstraintSet::new(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(trace.status, SolveStatus::Inadmissible);
        assert!(trace.records.is_empty());
    }

    #[test]
    fn random_poses_stay_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(149);
        for seed in 0..10 {
            let mut mesh: TetMesh<f64> = fixtures::cube_six_tets();
            for p in &mut mesh.deformed {
                for k in 0..3 {
                    p[k] += rng.gen_range(-0.2..0.2);
                }
            }
            let mut constraints = ConstraintSet::new();
            constraints.pin(0, mesh.deformed[0]);
            constraints.pin(6, mesh.deformed[6]);
            let cfg = SolverConfig {
                max_iters: 40,
                ..Default::default()
            };
            let (_, trace) = minimize(&mesh, &Arap, &constraints, &cfg).unwrap();
            assert!(
                trace.energies_non_increasing(),
                "seed {seed}: energy increased"
            );
        }
    }
}

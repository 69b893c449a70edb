//! Mesh-level energy, gradient and sparse SPD-projected Hessian: per-element
//! quantities weighted by rest volume and scattered into global structures,
//! with Dirichlet pins realized by eliminating the pinned degrees of freedom.
//!
//! Element factorizations are embarrassingly parallel and run through rayon;
//! every reduction (energy sum, gradient scatter, matrix scatter) is a
//! sequential pass in ascending element order, so results are bitwise
//! reproducible regardless of the worker count.

use crate::energy::{EnergyError, EnergyModel};
use crate::smallmat::{signed_svd3, vec3, Mat3, Svd3};
use crate::svd_diff::{dfdx_from_rest, kernel_gradient, sigma_gradient, DFdx};
use crate::Real;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("tetrahedron {element} references vertex {vertex}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        element: usize,
        vertex: usize,
        count: usize,
    },
    #[error("tetrahedron {element} has a numerically degenerate rest shape")]
    DegenerateRestTet { element: usize },
    #[error("tetrahedron {element} has negative rest orientation")]
    InvertedRestTet { element: usize },
    #[error("tetrahedron {element}: {source}")]
    Element {
        element: usize,
        source: EnergyError,
    },
    #[error("constraint set pins every vertex")]
    AllPinned,
    #[error("pinned vertex {vertex} is out of range")]
    PinOutOfRange { vertex: usize },
    #[error("pin target for vertex {vertex} is not finite")]
    PinNotFinite { vertex: usize },
}

/// Reference and deformed vertex positions plus connectivity; the
/// optimization state.
#[derive(Clone, Debug)]
pub struct TetMesh<T> {
    pub rest: Vec<[T; 3]>,
    pub deformed: Vec<[T; 3]>,
    pub tets: Vec<[usize; 4]>,
}

impl<T: Real> TetMesh<T> {
    pub fn vertex_count(&self) -> usize {
        self.rest.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    /// Rest edge matrix of element `t` (columns are edges from vertex 0).
    pub fn rest_edges(&self, t: usize) -> Mat3<T> {
        let tet = &self.tets[t];
        Mat3::from_cols(
            vec3::sub(&self.rest[tet[1]], &self.rest[tet[0]]),
            vec3::sub(&self.rest[tet[2]], &self.rest[tet[0]]),
            vec3::sub(&self.rest[tet[3]], &self.rest[tet[0]]),
        )
    }

    /// Deformed edge matrix of element `t`.
    pub fn deformed_edges(&self, t: usize) -> Mat3<T> {
        let tet = &self.tets[t];
        Mat3::from_cols(
            vec3::sub(&self.deformed[tet[1]], &self.deformed[tet[0]]),
            vec3::sub(&self.deformed[tet[2]], &self.deformed[tet[0]]),
            vec3::sub(&self.deformed[tet[3]], &self.deformed[tet[0]]),
        )
    }

    /// Diagonal of the rest bounding box; the length scale used for
    /// relative tolerances.
    pub fn mesh_scale(&self) -> T {
        if self.rest.is_empty() {
            return T::zero();
        }
        let mut lo = self.rest[0];
        let mut hi = self.rest[0];
        for p in &self.rest {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        vec3::norm(&vec3::sub(&hi, &lo))
    }
}

/// Per-element precomputed rest data.
#[derive(Clone, Debug)]
pub struct ElementRef<T> {
    pub dm_inv: Mat3<T>,
    /// Rest volume, strictly positive.
    pub volume: T,
    pub dfdx: DFdx<T>,
}

/// Dirichlet pins: vertex indices with target positions.
#[derive(Clone, Debug, Default)]
pub struct ConstraintSet<T> {
    pins: BTreeMap<usize, [T; 3]>,
}

impl<T: Real> ConstraintSet<T> {
    pub fn new() -> Self {
        ConstraintSet {
            pins: BTreeMap::new(),
        }
    }

    pub fn pin(&mut self, vertex: usize, target: [T; 3]) {
        self.pins.insert(vertex, target);
    }

    pub fn is_pinned(&self, vertex: usize) -> bool {
        self.pins.contains_key(&vertex)
    }

    pub fn len(&self) -> usize {
        self.pins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pins.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[T; 3])> {
        self.pins.iter().map(|(v, t)| (*v, t))
    }

    pub fn validate(&self, vertex_count: usize) -> Result<(), AssemblyError> {
        if vertex_count > 0 && self.pins.len() >= vertex_count {
            return Err(AssemblyError::AllPinned);
        }
        for (&v, t) in &self.pins {
            if v >= vertex_count {
                return Err(AssemblyError::PinOutOfRange { vertex: v });
            }
            if !t.iter().all(|x| x.is_finite()) {
                return Err(AssemblyError::PinNotFinite { vertex: v });
            }
        }
        Ok(())
    }

    /// Move pinned vertices onto their targets.
    pub fn apply_targets(&self, mesh: &mut TetMesh<T>) {
        for (&v, t) in &self.pins {
            mesh.deformed[v] = *t;
        }
    }
}

/// Mapping between mesh vertices and free (unpinned) degrees of freedom.
#[derive(Clone, Debug)]
pub struct FreeDofMap {
    pub free_of_vertex: Vec<Option<usize>>,
    pub vertex_of_free: Vec<usize>,
}

impl FreeDofMap {
    pub fn new<T: Real>(vertex_count: usize, constraints: &ConstraintSet<T>) -> Self {
        let mut free_of_vertex = vec![None; vertex_count];
        let mut vertex_of_free = Vec::new();
        for v in 0..vertex_count {
            if !constraints.is_pinned(v) {
                free_of_vertex[v] = Some(vertex_of_free.len());
                vertex_of_free.push(v);
            }
        }
        FreeDofMap {
            free_of_vertex,
            vertex_of_free,
        }
    }

    pub fn free_vertex_count(&self) -> usize {
        self.vertex_of_free.len()
    }

    pub fn dof_count(&self) -> usize {
        3 * self.vertex_of_free.len()
    }
}

/// Validate connectivity and build per-element rest data. A rest tetrahedron
/// with `|det| < 1e-12 * scale^3` is degenerate; a negative determinant is an
/// inverted rest orientation. Both are errors naming the element.
pub fn precompute<T: Real>(mesh: &TetMesh<T>) -> Result<Vec<ElementRef<T>>, AssemblyError> {
    let n = mesh.vertex_count();
    let mut refs = Vec::with_capacity(mesh.tet_count());
    for (t, tet) in mesh.tets.iter().enumerate() {
        for &v in tet {
            if v >= n {
                return Err(AssemblyError::IndexOutOfRange {
                    element: t,
                    vertex: v,
                    count: n,
                });
            }
        }
        let dm = mesh.rest_edges(t);
        let scale = (0..3)
            .map(|j| vec3::norm(&dm.col(j)))
            .fold(T::zero(), |a, b| a.max(b));
        let det = dm.det();
        if det.abs() < T::cst(1e-12) * scale * scale * scale {
            return Err(AssemblyError::DegenerateRestTet { element: t });
        }
        if det < T::zero() {
            return Err(AssemblyError::InvertedRestTet { element: t });
        }
        let dm_inv = dm.inverse().expect("checked determinant");
        refs.push(ElementRef {
            dm_inv,
            volume: det / T::cst(6.0),
            dfdx: dfdx_from_rest(&dm_inv),
        });
    }
    Ok(refs)
}

/// Signed SVD of element `t`'s deformation gradient at the current pose.
pub fn element_svd<T: Real>(mesh: &TetMesh<T>, refs: &[ElementRef<T>], t: usize) -> Svd3<T> {
    signed_svd3(&(mesh.deformed_edges(t) * refs[t].dm_inv))
}

fn element_eval<T: Real>(
    mesh: &TetMesh<T>,
    model: &dyn EnergyModel<T>,
    refs: &[ElementRef<T>],
    t: usize,
) -> Result<(Svd3<T>, crate::energy::EnergyEval<T>), AssemblyError> {
    let svd = element_svd(mesh, refs, t);
    let eval = model
        .evaluate(&svd.sigma)
        .map_err(|source| AssemblyError::Element { element: t, source })?;
    Ok((svd, eval))
}

/// Total distortion energy: the volume-weighted sum of per-element densities.
pub fn total_energy<T: Real>(
    mesh: &TetMesh<T>,
    model: &dyn EnergyModel<T>,
    refs: &[ElementRef<T>],
) -> Result<T, AssemblyError> {
    let per_element: Vec<Result<T, AssemblyError>> = (0..mesh.tet_count())
        .into_par_iter()
        .map(|t| element_eval(mesh, model, refs, t).map(|(_, eval)| refs[t].volume * eval.value))
        .collect();
    let mut sum = T::zero();
    for r in per_element {
        sum = sum + r?;
    }
    Ok(sum)
}

/// Total gradient over all vertex coordinates (length `3n`), with pinned
/// degrees of freedom zeroed. Domain errors carry the offending element id.
pub fn total_gradient<T: Real>(
    mesh: &TetMesh<T>,
    model: &dyn EnergyModel<T>,
    refs: &[ElementRef<T>],
    constraints: &ConstraintSet<T>,
) -> Result<Vec<T>, AssemblyError> {
    let per_element: Vec<Result<[T; 12], AssemblyError>> = (0..mesh.tet_count())
        .into_par_iter()
        .map(|t| {
            let (svd, eval) = element_eval(mesh, model, refs, t)?;
            let sgrad = sigma_gradient(&svd, &refs[t].dfdx);
            let mut g = kernel_gradient(&eval.grad, &sgrad);
            for v in &mut g {
                *v = *v * refs[t].volume;
            }
            Ok(g)
        })
        .collect();

    let mut grad = vec![T::zero(); 3 * mesh.vertex_count()];
    for (t, r) in per_element.into_iter().enumerate() {
        let g = r?;
        let tet = &mesh.tets[t];
        for (local, &v) in tet.iter().enumerate() {
            for p in 0..3 {
                grad[3 * v + p] = grad[3 * v + p] + g[3 * local + p];
            }
        }
    }
    for (v, _) in constraints.iter() {
        for p in 0..3 {
            grad[3 * v + p] = T::zero();
        }
    }
    Ok(grad)
}

/// Compressed sparse row symmetric matrix over the free degrees of freedom.
/// Both triangles are stored so matrix-vector products are plain row dots.
#[derive(Clone, Debug)]
pub struct SparseSym<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseSym<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![T::zero(); self.dim];
        for r in 0..self.dim {
            let mut s = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s = s + self.values[k] * x[self.col_idx[k]];
            }
            y[r] = s;
        }
        y
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|r| self.entry(r, r)).collect()
    }

    /// Entry lookup by binary search; zero for positions outside the pattern.
    pub fn entry(&self, r: usize, c: usize) -> T {
        let range = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match range.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => T::zero(),
        }
    }

    fn add_at(&mut self, r: usize, c: usize, v: T) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        let k = self.col_idx[lo..hi]
            .binary_search(&c)
            .expect("position outside assembled pattern");
        self.values[lo + k] = self.values[lo + k] + v;
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim * self.dim];
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[r * self.dim + self.col_idx[k]] = self.values[k];
            }
        }
        out
    }
}

fn build_pattern<T: Real>(mesh: &TetMesh<T>, free: &FreeDofMap) -> SparseSym<T> {
    let nfv = free.free_vertex_count();
    let mut vertex_adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nfv];
    for tet in &mesh.tets {
        for &a in tet {
            let Some(fa) = free.free_of_vertex[a] else {
                continue;
            };
            for &b in tet {
                if let Some(fb) = free.free_of_vertex[b] {
                    vertex_adj[fa].insert(fb);
                }
            }
        }
    }

    let dim = 3 * nfv;
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for fv in 0..nfv {
        for _axis in 0..3 {
            for &fw in &vertex_adj[fv] {
                for b in 0..3 {
                    col_idx.push(3 * fw + b);
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    let values = vec![T::zero(); col_idx.len()];
    SparseSym {
        dim,
        row_ptr,
        col_idx,
        values,
    }
}

/// Assemble the volume-weighted, SPD-projected global Hessian over the free
/// degrees of freedom. Returns the matrix and the total number of clamped
/// block values (the nonconvexity diagnostic reported in solver traces).
///
/// Element matrices are computed in parallel; the scatter is a sequential
/// reduction in ascending element order.
pub fn assemble_projected_hessian<T: Real>(
    mesh: &TetMesh<T>,
    model: &dyn EnergyModel<T>,
    refs: &[ElementRef<T>],
    constraints: &ConstraintSet<T>,
    eps: T,
) -> Result<(SparseSym<T>, usize), AssemblyError> {
    let free = FreeDofMap::new(mesh.vertex_count(), constraints);
    let per_element: Vec<Result<(crate::eigsys::Mat12<T>, usize), AssemblyError>> = (0..mesh
        .tet_count())
        .into_par_iter()
        .map(|t| {
            let svd = element_svd(mesh, refs, t);
            let fact = crate::eigsys::factorize_element(model, &svd, &refs[t].dfdx)
                .map_err(|source| AssemblyError::Element { element: t, source })?;
            let mut projected = fact.project_spd(eps);
            for row in &mut projected.matrix {
                for v in row {
                    *v = *v * refs[t].volume;
                }
            }
            Ok((projected.matrix, projected.clamp_count))
        })
        .collect();

    let mut matrix = build_pattern(mesh, &free);
    let mut clamps = 0;
    for (t, r) in per_element.into_iter().enumerate() {
        let (h, c) = r?;
        clamps += c;
        let tet = &mesh.tets[t];
        for (li, &a) in tet.iter().enumerate() {
            let Some(fa) = free.free_of_vertex[a] else {
                continue;
            };
            for (lj, &b) in tet.iter().enumerate() {
                let Some(fb) = free.free_of_vertex[b] else {
                    continue;
                };
                for p in 0..3 {
                    for q in 0..3 {
                        matrix.add_at(3 * fa + p, 3 * fb + q, h[3 * li + p][3 * lj + q]);
                    }
                }
            }
        }
    }
    Ok((matrix, clamps))
}

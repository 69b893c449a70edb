//! Small deterministic meshes used by tests, benchmarks and the CLI examples.

use crate::assembly::{ConstraintSet, TetMesh};
use crate::Real;

/// One positively oriented tetrahedron with unit edge matrix.
pub fn unit_tet<T: Real>() -> TetMesh<T> {
    let rest = vec![
        [T::zero(), T::zero(), T::zero()],
        [T::one(), T::zero(), T::zero()],
        [T::zero(), T::one(), T::zero()],
        [T::zero(), T::zero(), T::one()],
    ];
    TetMesh {
        deformed: rest.clone(),
        rest,
        tets: vec![[0, 1, 2, 3]],
    }
}

/// Unit cube split into six tetrahedra around the main diagonal.
pub fn cube_six_tets<T: Real>() -> TetMesh<T> {
    subdivided_cube(1)
}

/// Unit cube subdivided into `d^3` cells of six tetrahedra each. The split
/// runs along each cell's main diagonal, which is conforming across
/// translated cells.
pub fn subdivided_cube<T: Real>(divisions: usize) -> TetMesh<T> {
    assert!(divisions >= 1);
    let d = divisions;
    let np = d + 1;
    let vid = |ix: usize, iy: usize, iz: usize| ix + np * (iy + np * iz);

    let mut rest = Vec::with_capacity(np * np * np);
    for iz in 0..np {
        for iy in 0..np {
            for ix in 0..np {
                rest.push([
                    T::cst(ix as f64 / d as f64),
                    T::cst(iy as f64 / d as f64),
                    T::cst(iz as f64 / d as f64),
                ]);
            }
        }
    }

    let mut tets = Vec::with_capacity(6 * d * d * d);
    for cz in 0..d {
        for cy in 0..d {
            for cx in 0..d {
                let v000 = vid(cx, cy, cz);
                let v100 = vid(cx + 1, cy, cz);
                let v010 = vid(cx, cy + 1, cz);
                let v110 = vid(cx + 1, cy + 1, cz);
                let v001 = vid(cx, cy, cz + 1);
                let v101 = vid(cx + 1, cy, cz + 1);
                let v011 = vid(cx, cy + 1, cz + 1);
                let v111 = vid(cx + 1, cy + 1, cz + 1);
                tets.push([v000, v100, v110, v111]);
                tets.push([v000, v110, v010, v111]);
                tets.push([v000, v010, v011, v111]);
                tets.push([v000, v011, v001, v111]);
                tets.push([v000, v001, v101, v111]);
                tets.push([v000, v101, v100, v111]);
            }
        }
    }

    TetMesh {
        deformed: rest.clone(),
        rest,
        tets,
    }
}

/// Subdivided unit cube twisted about its vertical axis: every vertex rotates
/// by `angle * z`, bottom (z = 0) and top (z = 1) layers pinned at their
/// twisted positions. The linear-in-height pre-twist keeps the start pose
/// admissible for positive-stretch-only energies at moderate angles.
pub fn twisted_cube<T: Real>(divisions: usize, angle_rad: f64) -> (TetMesh<T>, ConstraintSet<T>) {
    assert!(divisions >= 2, "one division would pin every vertex");
    let mut mesh = subdivided_cube::<T>(divisions);
    let half = T::cst(0.5);

    for (v, p) in mesh.rest.iter().enumerate() {
        let z = p[2].to_f64_lossy();
        let theta = angle_rad * z;
        let (sin, cos) = (T::cst(theta.sin()), T::cst(theta.cos()));
        let dx = p[0] - half;
        let dy = p[1] - half;
        mesh.deformed[v] = [
            half + cos * dx - sin * dy,
            half + sin * dx + cos * dy,
            p[2],
        ];
    }

    let mut constraints = ConstraintSet::new();
    for (v, p) in mesh.rest.iter().enumerate() {
        let z = p[2].to_f64_lossy();
        if z == 0.0 || z == 1.0 {
            constraints.pin(v, mesh.deformed[v]);
        }
    }
    (mesh, constraints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{precompute, total_energy};
    use crate::energy::SymmetricDirichlet;

    #[test]
    fn cubes_are_positively_oriented() {
        for d in 1..=3 {
            let mesh: TetMesh<f64> = subdivided_cube(d);
            assert_eq!(mesh.tet_count(), 6 * d * d * d);
            let refs = precompute(&mesh).unwrap();
            let total: f64 = refs.iter().map(|r| r.volume).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn twisted_cube_start_is_admissible() {
        let (mesh, constraints) = twisted_cube::<f64>(2, std::f64::consts::PI / 3.0);
        let refs = precompute(&mesh).unwrap();
        // The pre-twisted pose must be valid for a barrier energy.
        assert!(total_energy(&mesh, &SymmetricDirichlet, &refs).is_ok());
        // Bottom and top layers pinned: 2 * 9 vertices at divisions = 2.
        assert_eq!(constraints.len(), 18);
        for (v, target) in constraints.iter() {
            assert_eq!(mesh.deformed[v], *target);
        }
    }
}

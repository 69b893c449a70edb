//! Generate the twisted-cube fixture as a `.node`/`.ele`/pins triple:
//!
//! ```text
//! cargo run -p stretch-hessian --example make_twisted_cube -- 2 60 cube
//! ```
//!
//! writes `cube.node`, `cube.ele` (the rest mesh) and `cube.pins` (bottom
//! layer pinned at rest, top layer pinned rotated by the given angle in
//! degrees).

use std::path::PathBuf;
use stretch_hessian::{fixtures, meshio, TetMeshD};

fn main() {
    let mut args = std::env::args().skip(1);
    let divisions: usize = args
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(2)
        .max(2);
    let angle_deg: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(60.0);
    let prefix = args.next().unwrap_or_else(|| "cube".to_string());

    let (mesh, pins) = fixtures::twisted_cube::<f64>(divisions, angle_deg.to_radians());
    let rest_only = TetMeshD {
        rest: mesh.rest.clone(),
        deformed: mesh.rest.clone(),
        tets: mesh.tets.clone(),
    };
    meshio::save_node(&rest_only, &PathBuf::from(format!("{prefix}.node"))).unwrap();
    meshio::save_ele(&rest_only, &PathBuf::from(format!("{prefix}.ele"))).unwrap();
    meshio::save_pins(&pins, &PathBuf::from(format!("{prefix}.pins"))).unwrap();
    println!(
        "wrote {prefix}.node ({} vertices), {prefix}.ele ({} tets), {prefix}.pins ({} pins, {angle_deg} degrees)",
        mesh.vertex_count(),
        mesh.tet_count(),
        pins.len()
    );
}

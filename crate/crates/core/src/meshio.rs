//! Mesh, constraint and trace I/O.
//!
//! The canonical mesh format is the TetGen-style `.node`/`.ele` pair
//! (line-oriented, 0- or 1-indexed per the first listed index). A JSON bundle
//! holding mesh, pins and solver configuration in one file is the
//! single-file alternative. All numeric output uses shortest round-trip
//! decimal formatting, so save/load cycles reproduce positions bit for bit.

use crate::assembly::{ConstraintSet, TetMesh};
use crate::solver::SolveTrace;
use crate::Real;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshIoError {
    MeshIoError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Content lines with their 1-based line numbers; blanks and `#` comments
/// skipped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize, MeshIoError> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(line, format!("invalid {what} `{tok}`")))
}

fn parse_finite(tok: &str, line: usize, what: &str) -> Result<f64, MeshIoError> {
    let v = tok
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid {what} `{tok}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite {what} `{tok}`")));
    }
    Ok(v)
}

/// Parse a `.node` file: positions plus the index base (0 or 1).
pub fn read_node_file<T: Real>(path: &Path) -> Result<(Vec<[T; 3]>, usize), MeshIoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = content_lines(&text);

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing node header"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() < 2 {
        return Err(parse_err(hline, "node header needs `<count> <dim> ...`"));
    }
    let count = parse_usize(toks[0], hline, "vertex count")?;
    let dim = parse_usize(toks[1], hline, "dimension")?;
    if dim != 3 {
        return Err(parse_err(hline, format!("expected dimension 3, got {dim}")));
    }

    let mut positions = Vec::with_capacity(count);
    let mut base = 0usize;
    let mut last_line = hline;
    for row in 0..count {
        let (line, content) = lines
            .next()
            .ok_or_else(|| parse_err(last_line + 1, format!("expected {count} vertices, file ends after {row}")))?;
        last_line = line;
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() < 4 {
            return Err(parse_err(line, "vertex line needs `<id> <x> <y> <z>`"));
        }
        let idx = parse_usize(toks[0], line, "vertex id")?;
        if row == 0 {
            if idx > 1 {
                return Err(parse_err(line, format!("first vertex id must be 0 or 1, got {idx}")));
            }
            base = idx;
        } else if idx != base + row {
            return Err(parse_err(
                line,
                format!("non-consecutive vertex id {idx}, expected {}", base + row),
            ));
        }
        positions.push([
            T::cst(parse_finite(toks[1], line, "coordinate")?),
            T::cst(parse_finite(toks[2], line, "coordinate")?),
            T::cst(parse_finite(toks[3], line, "coordinate")?),
        ]);
    }
    Ok((positions, base))
}

fn read_ele_file(path: &Path, base: usize, vertex_count: usize) -> Result<Vec<[usize; 4]>, MeshIoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = content_lines(&text);

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing element header"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.is_empty() {
        return Err(parse_err(hline, "element header needs `<count> <nodes per tet> ...`"));
    }
    let count = parse_usize(toks[0], hline, "element count")?;
    if toks.len() >= 2 {
        let per = parse_usize(toks[1], hline, "nodes per element")?;
        if per != 4 {
            return Err(parse_err(hline, format!("expected 4 nodes per element, got {per}")));
        }
    }

    let mut tets = Vec::with_capacity(count);
    let mut last_line = hline;
    for row in 0..count {
        let (line, content) = lines
            .next()
            .ok_or_else(|| parse_err(last_line + 1, format!("expected {count} elements, file ends after {row}")))?;
        last_line = line;
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() < 5 {
            return Err(parse_err(line, "element line needs `<id> <v0> <v1> <v2> <v3>`"));
        }
        let mut tet = [0usize; 4];
        for (k, slot) in tet.iter_mut().enumerate() {
            let raw = parse_usize(toks[1 + k], line, "vertex reference")?;
            if raw < base {
                return Err(parse_err(line, format!("vertex reference {raw} below index base {base}")));
            }
            let v = raw - base;
            if v >= vertex_count {
                return Err(parse_err(
                    line,
                    format!("unresolvable vertex reference {raw} (mesh has {vertex_count} vertices)"),
                ));
            }
            *slot = v;
        }
        tets.push(tet);
    }
    Ok(tets)
}

/// Load a TetGen `.node`/`.ele` pair. The deformed state starts at the rest
/// state. Negative-volume tetrahedra are repaired by swapping two vertices;
/// the second return value counts the repairs (worth a warning upstream).
pub fn load_tetgen<T: Real>(
    node_path: &Path,
    ele_path: &Path,
) -> Result<(TetMesh<T>, usize), MeshIoError> {
    let (positions, base) = read_node_file::<T>(node_path)?;
    let tets = read_ele_file(ele_path, base, positions.len())?;
    let mut mesh = TetMesh {
        rest: positions.clone(),
        deformed: positions,
        tets,
    };
    let mut reordered = 0;
    for t in 0..mesh.tet_count() {
        if mesh.rest_edges(t).det() < T::zero() {
            mesh.tets[t].swap(2, 3);
            reordered += 1;
        }
    }
    Ok((mesh, reordered))
}

/// Write the deformed positions as a 0-indexed `.node` file with full
/// round-trip precision.
pub fn save_node<T: Real>(mesh: &TetMesh<T>, path: &Path) -> Result<(), MeshIoError> {
    let mut out = String::new();
    out.push_str(&format!("{} 3 0 0\n", mesh.vertex_count()));
    for (i, p) in mesh.deformed.iter().enumerate() {
        out.push_str(&format!(
            "{} {} {} {}\n",
            i,
            p[0].to_f64_lossy(),
            p[1].to_f64_lossy(),
            p[2].to_f64_lossy()
        ));
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Write connectivity as a 0-indexed `.ele` file.
pub fn save_ele<T: Real>(mesh: &TetMesh<T>, path: &Path) -> Result<(), MeshIoError> {
    let mut out = String::new();
    out.push_str(&format!("{} 4 0\n", mesh.tet_count()));
    for (i, t) in mesh.tets.iter().enumerate() {
        out.push_str(&format!("{} {} {} {} {}\n", i, t[0], t[1], t[2], t[3]));
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Write the per-iteration trace as CSV with the fixed header
/// `iter,energy,grad_inf,step,clamps,cg_iters,ms`.
pub fn save_trace_csv<T: Real>(trace: &SolveTrace<T>, path: &Path) -> Result<(), MeshIoError> {
    let mut out = String::from("iter,energy,grad_inf,step,clamps,cg_iters,ms\n");
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iter,
            r.energy.to_f64_lossy(),
            r.grad_inf.to_f64_lossy(),
            r.step.to_f64_lossy(),
            r.clamps,
            r.cg_iters,
            r.ms
        ));
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Read a pin file: one `vertex_id tx ty tz` per line.
pub fn load_pins<T: Real>(path: &Path) -> Result<ConstraintSet<T>, MeshIoError> {
    let text = fs::read_to_string(path)?;
    let mut pins = ConstraintSet::new();
    for (line, content) in content_lines(&text) {
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(parse_err(line, "pin line needs `<vertex_id> <tx> <ty> <tz>`"));
        }
        let v = parse_usize(toks[0], line, "vertex id")?;
        pins.pin(
            v,
            [
                T::cst(parse_finite(toks[1], line, "target coordinate")?),
                T::cst(parse_finite(toks[2], line, "target coordinate")?),
                T::cst(parse_finite(toks[3], line, "target coordinate")?),
            ],
        );
    }
    Ok(pins)
}

pub fn save_pins<T: Real>(pins: &ConstraintSet<T>, path: &Path) -> Result<(), MeshIoError> {
    let mut out = String::new();
    for (v, t) in pins.iter() {
        out.push_str(&format!(
            "{} {} {} {}\n",
            v,
            t[0].to_f64_lossy(),
            t[1].to_f64_lossy(),
            t[2].to_f64_lossy()
        ));
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Single-file JSON alternative: mesh, pins and solver configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshBundle {
    pub rest: Vec<[f64; 3]>,
    #[serde(default)]
    pub deformed: Option<Vec<[f64; 3]>>,
    pub tets: Vec<[usize; 4]>,
    #[serde(default)]
    pub pins: Vec<PinEntry>,
    #[serde(default)]
    pub config: Option<BundleConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PinEntry {
    pub vertex: usize,
    pub target: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleConfig {
    pub energy: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub grad_tol: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
}

impl MeshBundle {
    pub fn from_parts<T: Real>(
        mesh: &TetMesh<T>,
        pins: &ConstraintSet<T>,
        config: Option<BundleConfig>,
    ) -> Self {
        let to64 = |p: &[T; 3]| [p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy()];
        MeshBundle {
            rest: mesh.rest.iter().map(to64).collect(),
            deformed: Some(mesh.deformed.iter().map(to64).collect()),
            tets: mesh.tets.clone(),
            pins: pins
                .iter()
                .map(|(vertex, t)| PinEntry {
                    vertex,
                    target: to64(t),
                })
                .collect(),
            config,
        }
    }

    pub fn to_parts<T: Real>(&self) -> (TetMesh<T>, ConstraintSet<T>) {
        let from64 = |p: &[f64; 3]| [T::cst(p[0]), T::cst(p[1]), T::cst(p[2])];
        let rest: Vec<[T; 3]> = self.rest.iter().map(from64).collect();
        let deformed = match &self.deformed {
            Some(d) => d.iter().map(from64).collect(),
            None => rest.clone(),
        };
        let mut pins = ConstraintSet::new();
        for p in &self.pins {
            pins.pin(p.vertex, from64(&p.target));
        }
        (
            TetMesh {
                rest,
                deformed,
                tets: self.tets.clone(),
            },
            pins,
        )
    }
}

pub fn save_bundle(bundle: &MeshBundle, path: &Path) -> Result<(), MeshIoError> {
    let json = serde_json::to_string_pretty(bundle)?;
    fs::File::create(path)?.write_all(json.as_bytes())?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<MeshBundle, MeshIoError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

//! Text file formats: `steklov-mesh v1` surface meshes and boundary-density
//! CSV files.
//!
//! Mesh files carry vertex coordinates only; a glued mesh written to disk is
//! re-read with the metric induced by the representative coordinates, which
//! approximates the quotient metric near the identified arcs.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::density::BoundaryDensity;
use crate::mesh::{MeshError, SurfaceMesh};

pub const MESH_HEADER: &str = "steklov-mesh v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh validation failed: {0}")]
    Mesh(#[from] MeshError),
    #[error("density: {0}")]
    Density(#[from] crate::density::DensityError),
}

pub type Result<T> = std::result::Result<T, IoError>;

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(IoError::Parse {
        line,
        msg: msg.into(),
    })
}

/// Serializes a mesh in the `steklov-mesh v1` format.
pub fn write_mesh(mesh: &SurfaceMesh, w: &mut impl Write) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{MESH_HEADER}").unwrap();
    writeln!(out, "V {}", mesh.vertex_count()).unwrap();
    for p in mesh.vertices() {
        writeln!(out, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2]).unwrap();
    }
    writeln!(out, "F {}", mesh.triangle_count()).unwrap();
    for t in mesh.triangles() {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(out, "B {}", mesh.boundary_loops().len()).unwrap();
    for lp in mesh.boundary_loops() {
        let items: Vec<String> = lp.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", items.join(" ")).unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Parses and validates a `steklov-mesh v1` file. The boundary section is
/// checked against the loops recomputed from the triangulation.
pub fn read_mesh(r: impl Read) -> Result<SurfaceMesh> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        for (i, l) in lines.by_ref() {
            let l = l?;
            let trimmed = l.trim().to_string();
            if !trimmed.is_empty() {
                return Ok((i + 1, trimmed));
            }
        }
        parse_err(0, format!("unexpected end of file, expected {expect}"))
    };

    let (ln, header) = next_line("header")?;
    if header != MESH_HEADER {
        return parse_err(ln, format!("bad header {header:?}, expected {MESH_HEADER:?}"));
    }
    let (ln, vline) = next_line("V <count>")?;
    let nv = parse_count(ln, &vline, "V")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next_line("vertex coordinates")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 {
            return parse_err(ln, format!("expected 3 coordinates, got {}", parts.len()));
        }
        let mut p = [0.0; 3];
        for (k, s) in parts.iter().enumerate() {
            p[k] = s
                .parse()
                .map_err(|_| IoError::Parse {
                    line: ln,
                    msg: format!("bad coordinate {s:?}"),
                })?;
        }
        vertices.push(p);
    }
    let (ln, fline) = next_line("F <count>")?;
    let nf = parse_count(ln, &fline, "F")?;
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = next_line("triangle indices")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 {
            return parse_err(ln, format!("expected 3 indices, got {}", parts.len()));
        }
        let mut t = [0usize; 3];
        for (k, s) in parts.iter().enumerate() {
            t[k] = parse_index(ln, s, nv)?;
        }
        triangles.push(t);
    }
    let (ln, bline) = next_line("B <count>")?;
    let nb = parse_count(ln, &bline, "B")?;
    let mut declared_loops = Vec::with_capacity(nb);
    let mut loop_lines = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, l) = next_line("boundary loop")?;
        let lp: Vec<usize> = l
            .split_whitespace()
            .map(|s| parse_index(ln, s, nv))
            .collect::<Result<_>>()?;
        declared_loops.push(lp);
        loop_lines.push(ln);
    }

    let mesh = SurfaceMesh::from_coordinates(vertices, triangles)?;
    // Validate the declared loops against the recomputed ones: same loops up
    // to cyclic rotation and ordering of loops.
    if mesh.boundary_loops().len() != nb {
        return parse_err(
            *loop_lines.first().unwrap_or(&ln),
            format!(
                "file declares {nb} boundary loops, triangulation has {}",
                mesh.boundary_loops().len()
            ),
        );
    }
    for (decl, &dl) in declared_loops.iter().zip(loop_lines.iter()) {
        let found = mesh.boundary_loops().iter().any(|lp| cyclic_eq(lp, decl));
        if !found {
            return parse_err(dl, "declared boundary loop does not match the triangulation");
        }
    }
    Ok(mesh)
}

fn cyclic_eq(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() || a.is_empty() {
        return a.len() == b.len();
    }
    let n = a.len();
    (0..n).any(|shift| (0..n).all(|i| a[(i + shift) % n] == b[i]))
}

fn parse_count(line: usize, l: &str, tag: &str) -> Result<usize> {
    let parts: Vec<&str> = l.split_whitespace().collect();
    if parts.len() != 2 || parts[0] != tag {
        return parse_err(line, format!("expected `{tag} <count>`, got {l:?}"));
    }
    parts[1].parse().map_err(|_| IoError::Parse {
        line,
        msg: format!("bad count {:?}", parts[1]),
    })
}

fn parse_index(line: usize, s: &str, nv: usize) -> Result<usize> {
    let v: usize = s.parse().map_err(|_| IoError::Parse {
        line,
        msg: format!("bad index {s:?}"),
    })?;
    if v >= nv {
        return parse_err(line, format!("index {v} out of range (V = {nv})"));
    }
    Ok(v)
}

/// Writes a density as `loop,edge,value` CSV, edges indexed along each loop's
/// orientation.
pub fn write_density(mesh: &SurfaceMesh, rho: &BoundaryDensity, w: &mut impl Write) -> Result<()> {
    let mut out = String::from("loop,edge,value\n");
    for (&(l, e, _, _, _), &v) in mesh.boundary_edges().iter().zip(rho.values().iter()) {
        writeln!(out, "{l},{e},{v:.17e}").unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a `loop,edge,value` density CSV for the given mesh. Every boundary
/// edge must be covered exactly once.
pub fn read_density(mesh: &SurfaceMesh, r: impl Read) -> Result<BoundaryDensity> {
    let reader = BufReader::new(r);
    let mut values: Vec<Option<f64>> = vec![None; mesh.boundary_edge_count()];
    let loop_sizes: Vec<usize> = mesh.boundary_loops().iter().map(|l| l.len()).collect();
    for (i, line) in reader.lines().enumerate() {
        let ln = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if ln == 1 {
            if trimmed != "loop,edge,value" {
                return parse_err(ln, format!("expected header `loop,edge,value`, got {trimmed:?}"));
            }
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').collect();
        if parts.len() != 3 {
            return parse_err(ln, format!("expected 3 fields, got {}", parts.len()));
        }
        let l: usize = parts[0].parse().map_err(|_| IoError::Parse {
            line: ln,
            msg: format!("bad loop index {:?}", parts[0]),
        })?;
        let e: usize = parts[1].parse().map_err(|_| IoError::Parse {
            line: ln,
            msg: format!("bad edge index {:?}", parts[1]),
        })?;
        let v: f64 = parts[2].parse().map_err(|_| IoError::Parse {
            line: ln,
            msg: format!("bad value {:?}", parts[2]),
        })?;
        if l >= loop_sizes.len() {
            return parse_err(ln, format!("loop {l} out of range"));
        }
        if e >= loop_sizes[l] {
            return parse_err(ln, format!("edge {e} out of range for loop {l}"));
        }
        let flat: usize = loop_sizes[..l].iter().sum::<usize>() + e;
        if values[flat].replace(v).is_some() {
            return parse_err(ln, format!("duplicate entry for loop {l} edge {e}"));
        }
    }
    let values: Vec<f64> = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or(IoError::Parse {
            line: 0,
            msg: format!("boundary edge {i} has no density entry"),
        }))
        .collect::<Result<_>>()?;
    Ok(BoundaryDensity::new(mesh, values)?)
}

/// Convenience file wrappers.
pub fn write_mesh_file(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_mesh(mesh, &mut f)
}

pub fn read_mesh_file(path: &Path) -> Result<SurfaceMesh> {
    read_mesh(std::fs::File::open(path)?)
}

pub fn write_density_file(mesh: &SurfaceMesh, rho: &BoundaryDensity, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_density(mesh, rho, &mut f)
}

pub fn read_density_file(mesh: &SurfaceMesh, path: &Path) -> Result<BoundaryDensity> {
    read_density(mesh, std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::uniform_density;
    use crate::mesh::{build_cylinder, build_disk};

    #[test]
    fn mesh_round_trip() {
        let m = build_cylinder(1.3, 3, 8).unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).unwrap();
        let back = read_mesh(&buf[..]).unwrap();
        assert_eq!(back.vertex_count(), m.vertex_count());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.boundary_loops().len(), 2);
        // Byte-identical re-serialization.
        let mut buf2 = Vec::new();
        write_mesh(&back, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn mesh_parse_errors_carry_line_numbers() {
        let m = build_disk(1, 3, 1.0).unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let bad_header = text.replacen("steklov-mesh v1", "not-a-mesh", 1);
        match read_mesh(bad_header.as_bytes()) {
            Err(IoError::Parse { line: 1, .. }) => {}
            other => panic!("expected header error, got {other:?}"),
        }

        // Corrupt a triangle index (line: header + V line + 4 vertices + F line + 1).
        let bad_index = text.replacen("0 1 2", "0 1 99", 1);
        match read_mesh(bad_index.as_bytes()) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("expected index error, got {other:?}"),
        }
    }

    #[test]
    fn density_round_trip_and_errors() {
        let m = build_cylinder(1.0, 2, 6).unwrap();
        let rho = uniform_density(&m).scaled(1.5).unwrap();
        let mut buf = Vec::new();
        write_density(&m, &rho, &mut buf).unwrap();
        let back = read_density(&m, &buf[..]).unwrap();
        assert_eq!(back.values(), rho.values());

        let text = String::from_utf8(buf).unwrap();
        let missing = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(read_density(&m, missing.as_bytes()).is_err());

        let bad = text.replacen("0,0,", "0,999,", 1);
        match read_density(&m, bad.as_bytes()) {
            Err(IoError::Parse { line: 2, .. }) => {}
            other => panic!("expected edge range error, got {other:?}"),
        }
    }
}

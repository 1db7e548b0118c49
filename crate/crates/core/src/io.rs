//! Text and raster I/O: field and mesh CSV, 16-bit portable graymaps, and
//! the 17-significant-digit float formatting that makes every emitted value
//! round-trip exactly.

use nalgebra::Vector2;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::field::ScalarField;
use crate::mesh::TriMesh;

#[derive(Debug, Error)]
pub enum FileFormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error in {file}, line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Field(#[from] crate::error::FieldError),
    #[error(transparent)]
    Mesh(#[from] crate::error::MeshError),
}

/// 17 significant digits: round-trips f64 exactly.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_field_csv(path: &Path, field: &ScalarField) -> Result<(), FileFormatError> {
    let mut out = String::from("node_x,node_y,value\n");
    for (p, v) in field.mesh().nodes.iter().zip(field.values()) {
        out.push_str(&format!("{},{},{}\n", fmt_g17(p.x), fmt_g17(p.y), fmt_g17(*v)));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Plain (x, y, value) rows; the mesh topology travels separately.
pub fn read_field_csv(path: &Path) -> Result<Vec<(Vector2<f64>, f64)>, FileFormatError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("node_x") || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(parse_err(path, ln + 1, "expected 3 comma-separated fields"));
        }
        let nums: Result<Vec<f64>, _> = parts.iter().map(|s| s.trim().parse()).collect();
        match nums {
            Ok(v) => rows.push((Vector2::new(v[0], v[1]), v[2])),
            Err(e) => return Err(parse_err(path, ln + 1, &e.to_string())),
        }
    }
    Ok(rows)
}

pub fn write_mesh_csv(path: &Path, mesh: &TriMesh) -> Result<(), FileFormatError> {
    let mut out = String::new();
    out.push_str(&format!("nodes,{}\n", mesh.node_count()));
    for (v, p) in mesh.nodes.iter().enumerate() {
        let b = if mesh.is_boundary_node(v) { 1 } else { 0 };
        out.push_str(&format!("{},{},{}\n", fmt_g17(p.x), fmt_g17(p.y), b));
    }
    out.push_str(&format!("triangles,{}\n", mesh.triangle_count()));
    for t in &mesh.triangles {
        out.push_str(&format!("{},{},{}\n", t[0], t[1], t[2]));
    }
    out.push_str(&format!("boundary_loop,{}\n", mesh.boundary_loop.len()));
    for v in &mesh.boundary_loop {
        out.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_mesh_csv(path: &Path) -> Result<Arc<TriMesh>, FileFormatError> {
    let text = std::fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut cursor = 0usize;
    let mut take = |expected_tag: Option<&str>| -> Result<(usize, &str), FileFormatError> {
        if cursor >= lines.len() {
            return Err(parse_err(path, cursor, "unexpected end of file"));
        }
        let ln = cursor;
        cursor += 1;
        let line = lines[ln].trim();
        if let Some(tag) = expected_tag {
            if !line.starts_with(tag) {
                return Err(parse_err(path, ln + 1, &format!("expected `{tag},<count>`")));
            }
        }
        Ok((ln + 1, line))
    };
    let count_of = |line: &str, ln: usize| -> Result<usize, FileFormatError> {
        line.split(',')
            .nth(1)
            .ok_or_else(|| parse_err(path, ln, "missing count"))?
            .parse()
            .map_err(|e: std::num::ParseIntError| parse_err(path, ln, &e.to_string()))
    };
    let (ln, header) = take(Some("nodes"))?;
    let n_nodes = count_of(header, ln)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, line) = take(None)?;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(parse_err(path, ln, "expected `x,y,boundary`"));
        }
        let x: f64 = parts[0]
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(path, ln, &e.to_string()))?;
        let y: f64 = parts[1]
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(path, ln, &e.to_string()))?;
        nodes.push(Vector2::new(x, y));
    }
    let (ln, header) = take(Some("triangles"))?;
    let n_tris = count_of(header, ln)?;
    let mut triangles = Vec::with_capacity(n_tris);
    for _ in 0..n_tris {
        let (ln, line) = take(None)?;
        let idx: Result<Vec<usize>, _> = line.split(',').map(|s| s.trim().parse()).collect();
        match idx {
            Ok(v) if v.len() == 3 => triangles.push([v[0], v[1], v[2]]),
            Ok(_) => return Err(parse_err(path, ln, "expected `i,j,k`")),
            Err(e) => return Err(parse_err(path, ln, &e.to_string())),
        }
    }
    let (ln, header) = take(Some("boundary_loop"))?;
    let n_ring = count_of(header, ln)?;
    let mut ring = Vec::with_capacity(n_ring);
    for _ in 0..n_ring {
        let (ln, line) = take(None)?;
        ring.push(
            line.parse()
                .map_err(|e: std::num::ParseIntError| parse_err(path, ln, &e.to_string()))?,
        );
    }
    Ok(Arc::new(TriMesh::new(nodes, triangles, ring)?))
}

fn parse_err(path: &Path, line: usize, message: &str) -> FileFormatError {
    FileFormatError::Parse {
        file: path.display().to_string(),
        line,
        message: message.to_string(),
    }
}

/// Rasterize a field to a 16-bit binary PGM over its bounding box. Pixels
/// outside the domain map to 0; the linear scaling is recorded in the
/// header comment.
pub fn write_field_pgm(
    path: &Path,
    field: &ScalarField,
    width: usize,
    per_triangle: Option<&[f64]>,
) -> Result<(), FileFormatError> {
    let mesh = field.mesh();
    let (mut lo, mut hi) = (
        Vector2::new(f64::INFINITY, f64::INFINITY),
        Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for p in &mesh.nodes {
        lo = Vector2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vector2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let height = ((hi.y - lo.y) / (hi.x - lo.x) * width as f64).ceil().max(1.0) as usize;
    let sample = |p: Vector2<f64>| -> Option<f64> {
        let (t, l) = mesh.locate(p)?;
        Some(match per_triangle {
            Some(vals) => vals[t],
            None => {
                let tri = mesh.triangles[t];
                field.values()[tri[0]] * l[0]
                    + field.values()[tri[1]] * l[1]
                    + field.values()[tri[2]] * l[2]
            }
        })
    };
    let mut values = vec![None; width * height];
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in 0..height {
        for col in 0..width {
            let p = Vector2::new(
                lo.x + (hi.x - lo.x) * (col as f64 + 0.5) / width as f64,
                hi.y - (hi.y - lo.y) * (row as f64 + 0.5) / height as f64,
            );
            if let Some(v) = sample(p) {
                vmin = vmin.min(v);
                vmax = vmax.max(v);
                values[row * width + col] = Some(v);
            }
        }
    }
    if vmin > vmax {
        vmin = 0.0;
        vmax = 1.0;
    }
    let span = (vmax - vmin).max(f64::MIN_POSITIVE);
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        file,
        "P5\n# linear scale: gray = (value - {}) / {} * 65535, outside-domain = 0\n{} {}\n65535\n",
        fmt_g17(vmin),
        fmt_g17(span),
        width,
        height
    )?;
    for v in values {
        let g: u16 = match v {
            None => 0,
            Some(v) => ((v - vmin) / span * 65535.0).round().clamp(0.0, 65535.0) as u16,
        };
        file.write_all(&g.to_be_bytes())?;
    }
    Ok(())
}

//! CSV field files.
//!
//! A field file has the header `x1,...,xN,u1,...,uM` and one row per interior
//! node in lexicographic node order (last axis fastest). Values are written
//! with 17 significant digits, which reads back bit for bit.

use std::io::Write;
use std::path::Path;

use coincide_core::{GridDomain, VectorField};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{IoError, IoResult};

/// A file written during a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Artifact {
    /// File name relative to the output directory.
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

pub(crate) fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header row for `dim` coordinates and `m` components.
pub fn header(dim: usize, m: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).chain((1..=m).map(|k| format!("u{k}"))).collect()
}

/// The CSV text of `u`.
pub fn field_csv(u: &VectorField) -> String {
    let grid = u.grid();
    let d = grid.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(d, u.components())).expect("writing to memory");
    let mut row = Vec::with_capacity(d + u.components());
    for (node, p) in grid.points() {
        row.clear();
        row.extend(p[..d].iter().map(|v| num(*v)));
        row.extend(u.node(node).iter().map(|v| num(*v)));
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV output is UTF-8")
}

/// Writes `text` to `dir/name` and returns its digest.
pub fn write_artifact(dir: &Path, name: &str, text: &str) -> IoResult<Artifact> {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).map_err(|e| IoError::io(&path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| IoError::io(&path, e))?;
    Ok(Artifact { name: name.to_string(), sha256: sha256_hex(text.as_bytes()), bytes: text.len() })
}

/// Writes `u` to `path`.
pub fn dump_field(u: &VectorField, path: &Path) -> IoResult<Artifact> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| IoError::schema(path, "not a file path"))?;
    write_artifact(dir, name, &field_csv(u))
}

struct Table {
    dim: usize,
    m: usize,
    coords: Vec<f64>,
    values: Vec<f64>,
}

fn read_table(path: &Path) -> IoResult<Table> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => IoError::io(path, io),
        other => IoError::schema(path, format!("{other:?}")),
    })?;
    let head: Vec<String> = r.headers().map_err(|e| IoError::schema(path, e.to_string()))?.iter().map(str::to_string).collect();
    let dim = head.iter().take_while(|h| h.starts_with('x')).count();
    let m = head.len() - dim;
    if dim == 0 || m == 0 || head != header(dim, m) {
        return Err(IoError::schema(path, format!("header {head:?} is not x1..xN,u1..uM")));
    }
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| IoError::schema(path, e.to_string()))?;
        if rec.len() != dim + m {
            return Err(IoError::schema(path, format!("row {} has {} columns, expected {}", line + 1, rec.len(), dim + m)));
        }
        for (k, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| IoError::schema(path, format!("row {}: `{cell}` is not a number", line + 1)))?;
            if k < dim {
                coords.push(v);
            } else {
                values.push(v);
            }
        }
    }
    Ok(Table { dim, m, coords, values })
}

fn check_coords(path: &Path, t: &Table, grid: &GridDomain) -> IoResult<()> {
    let tol = 1e-9 * grid.half_width();
    for (node, p) in grid.points() {
        for a in 0..t.dim {
            if (t.coords[node * t.dim + a] - p[a]).abs() > tol {
                return Err(IoError::schema(path, format!("row {} is not at grid node {:?}", node + 1, &p[..t.dim])));
            }
        }
    }
    Ok(())
}

/// Reads a field written on `grid` with `m` components.
pub fn load_field_on(path: &Path, grid: &GridDomain, m: usize) -> IoResult<VectorField> {
    let t = read_table(path)?;
    if t.dim != grid.dim() || t.m != m {
        return Err(IoError::schema(path, format!("file has N = {}, M = {}; expected N = {}, M = {m}", t.dim, t.m, grid.dim())));
    }
    if t.values.len() != grid.node_count() * m {
        return Err(IoError::schema(path, format!("file has {} rows, grid has {} nodes", t.values.len() / m, grid.node_count())));
    }
    check_coords(path, &t, grid)?;
    Ok(VectorField::from_vec(*grid, m, t.values)?)
}

/// Reads a field and reconstructs its grid from the coordinates. Needs at
/// least two nodes per axis.
pub fn load_field(path: &Path) -> IoResult<VectorField> {
    let t = read_table(path)?;
    let rows = t.values.len() / t.m;
    let n = (rows as f64).powf(1.0 / t.dim as f64).round() as usize;
    if n < 2 || n.checked_pow(t.dim as u32) != Some(rows) {
        return Err(IoError::schema(path, format!("{rows} rows do not form an n^{} grid with n >= 2", t.dim)));
    }
    // Last axis runs fastest: rows 0 and 1 differ by one step in x_N.
    let dx = t.coords[t.dim + t.dim - 1] - t.coords[t.dim - 1];
    if !(dx > 0.0) {
        return Err(IoError::schema(path, "coordinates are not increasing"));
    }
    let r = 0.5 * dx * (n + 1) as f64;
    let grid = GridDomain::new(t.dim, r, n)?;
    check_coords(path, &t, &grid)?;
    Ok(VectorField::from_vec(grid, t.m, t.values)?)
}

/// Writes a CSV table with the given header.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV output is UTF-8")
}

pub(crate) fn fmt_num(v: f64) -> String {
    num(v)
}

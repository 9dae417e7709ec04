//! Text interchange formats: TetGen `.node`/`.ele`, ASCII PLY surfaces,
//! XYZ point clouds and per-node displacement fields.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! writer/reader pair here is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::mesh::{Point3, PointCloud, SurfaceMesh, TetMesh, Vec3};
use crate::error::{Error, Result};

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with `#` comments stripped, paired with 1-based line numbers.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(n, line)| {
        let body = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = body.split_whitespace().collect();
        (!fields.is_empty()).then_some((n + 1, fields))
    })
}

pub(crate) fn num<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field.parse().map_err(|_| Error::parse(path, line, format!("cannot parse '{field}'")))
}

/// Loads a TetGen mesh. Index base (0 or 1) is taken from the first node
/// record. Nodes are reordered boundary-first; `original_index` maps back
/// to file order (0-based).
pub fn load_tet_mesh(node_path: &Path, ele_path: &Path) -> Result<TetMesh> {
    let text = read(node_path)?;
    let mut lines = data_lines(&text);
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(node_path, 0, "missing header"))?;
    let count: usize = num(node_path, hl, header[0])?;
    if header.len() < 2 || header[1] != "3" {
        return Err(Error::parse(node_path, hl, "only 3-dimensional nodes are supported"));
    }
    let mut nodes = Vec::with_capacity(count);
    let mut base = None;
    for (ln, f) in lines.by_ref().take(count) {
        if f.len() < 4 {
            return Err(Error::parse(node_path, ln, "expected 'index x y z'"));
        }
        let idx: usize = num(node_path, ln, f[0])?;
        let b = *base.get_or_insert(idx);
        if b > 1 {
            return Err(Error::parse(node_path, ln, "first node index must be 0 or 1"));
        }
        if idx != nodes.len() + b {
            return Err(Error::parse(node_path, ln, format!("node index {idx} out of sequence")));
        }
        nodes.push(Point3::new(
            num(node_path, ln, f[1])?,
            num(node_path, ln, f[2])?,
            num(node_path, ln, f[3])?,
        ));
    }
    if nodes.len() != count {
        return Err(Error::parse(node_path, 0, format!("expected {count} nodes, found {}", nodes.len())));
    }
    let base = base.unwrap_or(0);

    let text = read(ele_path)?;
    let mut lines = data_lines(&text);
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(ele_path, 0, "missing header"))?;
    let tet_count: usize = num(ele_path, hl, header[0])?;
    if header.len() < 2 || header[1] != "4" {
        return Err(Error::parse(ele_path, hl, "only 4-node tetrahedra are supported"));
    }
    let mut tets = Vec::with_capacity(tet_count);
    for (ln, f) in lines.take(tet_count) {
        if f.len() < 5 {
            return Err(Error::parse(ele_path, ln, "expected 'index n1 n2 n3 n4'"));
        }
        let mut tet = [0usize; 4];
        for k in 0..4 {
            let raw: usize = num(ele_path, ln, f[k + 1])?;
            if raw < base || raw - base >= nodes.len() {
                return Err(Error::parse(ele_path, ln, format!("dangling node index {raw}")));
            }
            tet[k] = raw - base;
        }
        tets.push(tet);
    }
    if tets.len() != tet_count {
        return Err(Error::parse(ele_path, 0, format!("expected {tet_count} tets, found {}", tets.len())));
    }
    TetMesh::from_raw(nodes, tets)
}

/// Writes the mesh in its internal (boundary-first) node order, 0-based.
pub fn save_tet_mesh(mesh: &TetMesh, node_path: &Path, ele_path: &Path) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "{} 3 0 0", mesh.nodes.len()).unwrap();
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(s, "{i} {} {} {}", p.x, p.y, p.z).unwrap();
    }
    write(node_path, &s)?;
    let mut s = String::new();
    writeln!(s, "{} 4 0", mesh.tets.len()).unwrap();
    for (i, t) in mesh.tets.iter().enumerate() {
        writeln!(s, "{i} {} {} {} {}", t[0], t[1], t[2], t[3]).unwrap();
    }
    write(ele_path, &s)
}

pub fn save_surface(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    writeln!(s, "element vertex {}", mesh.vertices.len()).unwrap();
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.normals.is_some() {
        s.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    writeln!(s, "element face {}", mesh.triangles.len()).unwrap();
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, v) in mesh.vertices.iter().enumerate() {
        write!(s, "{} {} {}", v.x, v.y, v.z).unwrap();
        if let Some(n) = &mesh.normals {
            write!(s, " {} {} {}", n[i].x, n[i].y, n[i].z).unwrap();
        }
        s.push('\n');
    }
    for t in &mesh.triangles {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    write(path, &s)
}

pub fn load_surface(path: &Path) -> Result<SurfaceMesh> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let mut nv = None;
    let mut nf = None;
    let mut vprops = Vec::new();
    let mut current = "";
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(path, 1, "missing 'ply' magic")),
    }
    loop {
        let (n, line) = lines.next().ok_or_else(|| Error::parse(path, 0, "unterminated header"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(Error::parse(path, n + 1, "only ascii PLY is supported")),
            ["comment", ..] | [] => {}
            ["element", "vertex", c] => {
                nv = Some(num::<usize>(path, n + 1, c)?);
                current = "vertex";
            }
            ["element", "face", c] => {
                nf = Some(num::<usize>(path, n + 1, c)?);
                current = "face";
            }
            ["element", ..] => current = "other",
            ["property", "list", ..] => {}
            ["property", _, name] if current == "vertex" => vprops.push(name.to_string()),
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(Error::parse(path, n + 1, format!("unexpected header line '{line}'"))),
        }
    }
    let nv = nv.ok_or_else(|| Error::parse(path, 0, "no vertex element"))?;
    let nf = nf.unwrap_or(0);
    let col = |name: &str| vprops.iter().position(|p| p == name);
    let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(path, 0, "vertex element lacks x/y/z")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    let mut vertices = Vec::with_capacity(nv);
    let mut normals = Vec::new();
    for _ in 0..nv {
        let (n, line) = body.next().ok_or_else(|| Error::parse(path, 0, "truncated vertex list"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < vprops.len() {
            return Err(Error::parse(path, n + 1, "short vertex row"));
        }
        let v = |i: usize| num::<f64>(path, n + 1, f[i]);
        vertices.push(Point3::new(v(xi)?, v(yi)?, v(zi)?));
        if let Some((a, b, c)) = normal_cols {
            normals.push(Vec3::new(v(a)?, v(b)?, v(c)?));
        }
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (n, line) = body.next().ok_or_else(|| Error::parse(path, 0, "truncated face list"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "3" {
            return Err(Error::parse(path, n + 1, "only triangle faces are supported"));
        }
        triangles.push([num(path, n + 1, f[1])?, num(path, n + 1, f[2])?, num(path, n + 1, f[3])?]);
    }
    let mut mesh = SurfaceMesh {
        vertices,
        triangles,
        normals: normal_cols.map(|_| normals),
        closed: false,
    };
    mesh.validate()?;
    mesh.closed = mesh.is_closed_manifold();
    Ok(mesh)
}

pub fn save_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    write(path, &points_text(&cloud.points))
}

pub(crate) fn points_text(points: &[Point3]) -> String {
    let mut s = String::with_capacity(points.len() * 48);
    for p in points {
        writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
    s
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let rows = read_triples(path)?;
    if rows.is_empty() {
        return Err(Error::parse(path, 0, "point cloud file is empty"));
    }
    PointCloud::new(rows.into_iter().map(|[x, y, z]| Point3::new(x, y, z)).collect())
}

fn read_triples(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = read(path)?;
    data_lines(&text)
        .map(|(ln, f)| {
            if f.len() != 3 {
                return Err(Error::parse(path, ln, format!("expected 3 values, found {}", f.len())));
            }
            Ok([num(path, ln, f[0])?, num(path, ln, f[1])?, num(path, ln, f[2])?])
        })
        .collect()
}

/// Writes a flat displacement vector as one "dx dy dz" line per node.
pub fn save_field(u: &[f64], path: &Path) -> Result<()> {
    let mut s = String::with_capacity(u.len() * 16);
    for c in u.chunks_exact(3) {
        writeln!(s, "{} {} {}", c[0], c[1], c[2]).unwrap();
    }
    write(path, &s)
}

pub fn load_field(path: &Path) -> Result<Vec<f64>> {
    Ok(read_triples(path)?.into_iter().flatten().collect())
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use super::{nearest_in, LandmarkSet, TriMesh};
use crate::error::{Error, Result};

/// Loads an OBJ or ASCII PLY mesh, chosen by file extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_ply = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        parse_ply(&text)
    } else {
        parse_obj(&text)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing coordinate"))?;
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("bad number '{tok}'")))
}

/// Parses `v` and `f` records; polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line)?;
                let y = parse_f64(toks.next(), line)?;
                let z = parse_f64(toks.next(), line)?;
                vertices.push(Vector3::new(x, y, z));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad face index '{t}'")))?;
                    let i = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if i < 0 {
                        return Err(parse_err(line, format!("face index '{t}' out of range")));
                    }
                    idx.push(i as usize);
                }
                if idx.len() < 3 {
                    return Err(parse_err(line, "face with fewer than three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

/// Minimal ASCII PLY reader: `x y z` vertex properties and triangle lists.
pub fn parse_ply(text: &str) -> Result<TriMesh> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(1, "missing 'ply' magic")),
    }
    let mut n_vertices = 0usize;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = String::new();
    for (ln, l) in lines.by_ref() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(parse_err(ln + 1, format!("unsupported PLY format '{fmt}'")))
            }
            ["element", name, count] => {
                current = name.to_string();
                let c: usize = count
                    .parse()
                    .map_err(|_| parse_err(ln + 1, "bad element count"))?;
                match *name {
                    "vertex" => n_vertices = c,
                    "face" => n_faces = c,
                    _ => {}
                }
            }
            ["property", .., name] if current == "vertex" => vertex_props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let pos = |name: &str| vertex_props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (pos("x"), pos("y"), pos("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(0, "PLY vertex element lacks x/y/z")),
    };
    let mut vertices = Vec::with_capacity(n_vertices);
    let mut faces = Vec::with_capacity(n_faces);
    for (ln, l) in lines {
        let line = ln + 1;
        if l.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if vertices.len() < n_vertices {
            let get = |i: usize| parse_f64(toks.get(i).copied(), line);
            vertices.push(Vector3::new(get(xi)?, get(yi)?, get(zi)?));
        } else if faces.len() < n_faces {
            let count: usize = toks
                .first()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(line, "bad face record"))?;
            let idx: Vec<usize> = toks[1..]
                .iter()
                .take(count)
                .map(|t| t.parse::<usize>().map_err(|_| parse_err(line, "bad face index")))
                .collect::<Result<_>>()?;
            if idx.len() != count || count < 3 {
                return Err(parse_err(line, "bad face record"));
            }
            for k in 1..count - 1 {
                faces.push([idx[0], idx[k], idx[k + 1]]);
            }
        }
    }
    if vertices.len() != n_vertices {
        return Err(parse_err(0, "truncated PLY vertex list"));
    }
    TriMesh::new(vertices, faces)
}

/// Writes an OBJ with shortest round-trip float formatting.
pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::with_capacity(mesh.num_vertices() * 48);
    for p in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    let path = path.as_ref();
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes a planar embedding as an OBJ with z = 0.
pub fn write_planar_obj(faces: &[[usize; 3]], uv: &[Vector2<f64>], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::with_capacity(uv.len() * 40);
    for p in uv {
        let _ = writeln!(s, "v {} {} 0", p.x, p.y);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    let path = path.as_ref();
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a landmark file: one `i <vertex>` or `p <x> <y> <z>` record per line.
pub fn load_landmarks(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<LandmarkSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmarks(&text, mesh)
}

pub fn parse_landmarks(text: &str, mesh: &TriMesh) -> Result<LandmarkSet> {
    let mut indices = Vec::new();
    let mut snap = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("i") => {
                let tok = toks.next().ok_or_else(|| parse_err(line, "missing vertex index"))?;
                let i: usize = tok
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad vertex index '{tok}'")))?;
                indices.push(i);
                snap.push(0.0);
            }
            Some("p") => {
                let p = Vector3::new(
                    parse_f64(toks.next(), line)?,
                    parse_f64(toks.next(), line)?,
                    parse_f64(toks.next(), line)?,
                );
                let (i, d) = nearest_in(mesh.vertices().iter().copied().enumerate(), &p);
                indices.push(i);
                snap.push(d);
            }
            Some(other) => return Err(parse_err(line, format!("unknown landmark record '{other}'"))),
            None => {}
        }
    }
    LandmarkSet::with_snap(indices, snap, mesh.num_vertices())
}

pub fn write_landmarks(lm: &LandmarkSet, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::new();
    for &i in lm.indices() {
        let _ = writeln!(s, "i {i}");
    }
    let path = path.as_ref();
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

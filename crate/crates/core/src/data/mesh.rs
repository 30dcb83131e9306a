use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::Cloud;

use super::pair::normalize_unit_sphere;

/// Indexed triangle mesh. Polygons are fan-triangulated on load.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn triangle_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].map(|i| self.vertices[i]);
        (b - a).cross(&(c - a)).norm() * 0.5
    }
}

/// Loads an ASCII OFF or PLY mesh, chosen by extension (falling back to the header).
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("ply") => parse_ply(&text, path),
        Some("off") => parse_off(&text, path),
        _ if text.trim_start().starts_with("ply") => parse_ply(&text, path),
        _ => parse_off(&text, path),
    }
}

fn err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, path: &Path, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| err(path, line, format!("missing {what}")))?
        .parse()
        .map_err(|_| err(path, line, format!("invalid {what}")))
}

fn push_polygon(faces: &mut Vec<[usize; 3]>, poly: &[usize], n_vertices: usize, path: &Path, line: usize) -> Result<()> {
    if poly.len() < 3 {
        return Err(err(path, line, format!("face with {} vertices", poly.len())));
    }
    if let Some(&bad) = poly.iter().find(|&&i| i >= n_vertices) {
        return Err(err(path, line, format!("face index {bad} out of range for {n_vertices} vertices")));
    }
    for k in 1..poly.len() - 1 {
        faces.push([poly[0], poly[k], poly[k + 1]]);
    }
    Ok(())
}

/// ASCII OFF, including the variant with counts glued to the header (`OFF490 518 0`).
pub fn parse_off(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| err(path, 1, "empty file"))?;
    let rest = header.strip_prefix("OFF").ok_or_else(|| err(path, hl, "missing OFF header"))?.trim();
    let (cl, counts) = if rest.is_empty() { lines.next().ok_or_else(|| err(path, hl, "missing counts"))? } else { (hl, rest) };
    let mut toks = counts.split_whitespace();
    let nv: usize = parse_num(toks.next(), path, cl, "vertex count")?;
    let nf: usize = parse_num(toks.next(), path, cl, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| err(path, cl, "unexpected end of vertex list"))?;
        let mut t = l.split_whitespace();
        let v = Vec3::new(parse_num(t.next(), path, ln, "x")?, parse_num(t.next(), path, ln, "y")?, parse_num(t.next(), path, ln, "z")?);
        if !v.is_finite() {
            return Err(err(path, ln, "non-finite vertex"));
        }
        vertices.push(v);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| err(path, cl, "unexpected end of face list"))?;
        let mut t = l.split_whitespace();
        let k: usize = parse_num(t.next(), path, ln, "face size")?;
        let poly = (0..k).map(|_| parse_num(t.next(), path, ln, "face index")).collect::<Result<Vec<usize>>>()?;
        push_polygon(&mut faces, &poly, nv, path, ln)?;
    }
    Ok(TriangleMesh { vertices, faces })
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProp>,
}

enum PlyProp {
    Scalar(String),
    List(String),
}

/// ASCII PLY with a `vertex` element (x, y, z among its properties) and an optional
/// `face` element carrying a `vertex_indices`/`vertex_index` list.
pub fn parse_ply(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(err(path, 1, "missing ply magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_end = 0;
    for (ln, l) in lines.by_ref() {
        let t: Vec<&str> = l.split_whitespace().collect();
        match t.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(err(path, ln, format!("unsupported PLY format {fmt}")));
                }
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| err(path, ln, "invalid element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| err(path, ln, "property before element"))?
                .props
                .push(PlyProp::List(name.to_string())),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| err(path, ln, "property before element"))?
                .props
                .push(PlyProp::Scalar(name.to_string())),
            ["end_header"] => {
                header_end = ln;
                break;
            }
            _ => return Err(err(path, ln, format!("malformed header line {l:?}"))),
        }
    }
    if header_end == 0 {
        return Err(err(path, 1, "missing end_header"));
    }
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut n_vertices = None;
    for el in &elements {
        for _ in 0..el.count {
            let (ln, l) = body.next().ok_or_else(|| err(path, header_end, format!("unexpected end of {} data", el.name)))?;
            let mut toks = l.split_whitespace();
            let mut xyz = [None; 3];
            let mut poly = None;
            for prop in &el.props {
                match prop {
                    PlyProp::Scalar(name) => {
                        let v: f64 = parse_num(toks.next(), path, ln, name)?;
                        match name.as_str() {
                            "x" => xyz[0] = Some(v),
                            "y" => xyz[1] = Some(v),
                            "z" => xyz[2] = Some(v),
                            _ => {}
                        }
                    }
                    PlyProp::List(name) => {
                        let k: usize = parse_num(toks.next(), path, ln, "list length")?;
                        let vals = (0..k).map(|_| parse_num(toks.next(), path, ln, name)).collect::<Result<Vec<usize>>>()?;
                        if name == "vertex_indices" || name == "vertex_index" {
                            poly = Some(vals);
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    let [x, y, z] = xyz;
                    let v = Vec3::new(
                        x.ok_or_else(|| err(path, ln, "vertex without x"))?,
                        y.ok_or_else(|| err(path, ln, "vertex without y"))?,
                        z.ok_or_else(|| err(path, ln, "vertex without z"))?,
                    );
                    if !v.is_finite() {
                        return Err(err(path, ln, "non-finite vertex"));
                    }
                    vertices.push(v);
                }
                "face" => {
                    let nv = *n_vertices.get_or_insert(vertices.len());
                    let poly = poly.ok_or_else(|| err(path, ln, "face without vertex_indices"))?;
                    push_polygon(&mut faces, &poly, nv, path, ln)?;
                }
                _ => {}
            }
        }
    }
    Ok(TriangleMesh { vertices, faces })
}

/// `n` area-uniform surface samples, then centered and scaled to unit max radius.
pub fn sample_surface<R: Rng + ?Sized>(mesh: &TriangleMesh, n: usize, rng: &mut R) -> Result<Cloud> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.triangle_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidInput("mesh has no face with positive area".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let points = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let f = cumulative.partition_point(|&c| c <= u).min(mesh.faces.len() - 1);
            let [a, b, c] = mesh.faces[f].map(|i| mesh.vertices[i]);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            a.scale(1.0 - s) + b.scale(s * (1.0 - r2)) + c.scale(s * r2)
        })
        .collect();
    normalize_unit_sphere(points)
}

//! OFF triangle meshes and TetGen-style `.node` / `.ele` tetrahedral meshes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::OrientedSimplicialComplex;
use crate::{Error, Real, Result};

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

fn num<F: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<F> {
    let tok = tok.ok_or_else(|| Error::Parse(format!("missing {what}")))?;
    tok.parse().map_err(|_| Error::Parse(format!("bad {what} '{tok}'")))
}

pub fn parse_off(text: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let mut lines = data_lines(text);
    let header = lines.next().ok_or_else(|| Error::Parse("empty OFF file".into()))?;
    // counts may share the header line
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::Parse(format!("expected OFF header, found '{header}'")))?
        .trim();
    let counts_line = if rest.is_empty() {
        lines.next().ok_or_else(|| Error::Parse("missing OFF counts".into()))?
    } else {
        rest
    };
    let mut c = counts_line.split_whitespace();
    let nv: usize = num(c.next(), "vertex count")?;
    let nf: usize = num(c.next(), "face count")?;
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| Error::Parse("truncated vertex list".into()))?;
        let mut t = line.split_whitespace();
        verts.push([num(t.next(), "x")?, num(t.next(), "y")?, num(t.next(), "z")?]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = lines.next().ok_or_else(|| Error::Parse("truncated face list".into()))?;
        let mut t = line.split_whitespace();
        let arity: usize = num(t.next(), "face arity")?;
        if arity != 3 {
            return Err(Error::Parse(format!("only triangles supported, found {arity}-gon")));
        }
        faces.push([num(t.next(), "face index")?, num(t.next(), "face index")?, num(t.next(), "face index")?]);
    }
    Ok((verts, faces))
}

pub fn format_off(verts: &[[f64; 3]], faces: &[[usize; 3]]) -> String {
    let mut s = format!("OFF\n{} {} 0\n", verts.len(), faces.len());
    for p in verts {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    for f in faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

/// Parses a `.node` / `.ele` pair. Indices may be 0- or 1-based; the base is the minimum node id.
pub fn parse_node_ele(node: &str, ele: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 4]>)> {
    let mut lines = data_lines(node);
    let mut head = lines.next().ok_or_else(|| Error::Parse("empty .node file".into()))?.split_whitespace();
    let nv: usize = num(head.next(), "node count")?;
    let mut ids = Vec::with_capacity(nv);
    let mut pts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| Error::Parse("truncated .node file".into()))?;
        let mut t = line.split_whitespace();
        ids.push(num::<usize>(t.next(), "node id")?);
        pts.push([num(t.next(), "x")?, num(t.next(), "y")?, num(t.next(), "z")?]);
    }
    let base = ids.iter().copied().min().unwrap_or(0);
    let mut verts = vec![[0.0; 3]; nv];
    for (&id, p) in ids.iter().zip(pts) {
        let i = id - base;
        if i >= nv {
            return Err(Error::IndexOutOfRange { index: id, len: nv });
        }
        verts[i] = p;
    }
    let mut lines = data_lines(ele);
    let mut head = lines.next().ok_or_else(|| Error::Parse("empty .ele file".into()))?.split_whitespace();
    let nt: usize = num(head.next(), "element count")?;
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let line = lines.next().ok_or_else(|| Error::Parse("truncated .ele file".into()))?;
        let mut t = line.split_whitespace();
        let _id: usize = num(t.next(), "element id")?;
        let mut tet = [0usize; 4];
        for v in &mut tet {
            let raw: usize = num(t.next(), "element vertex")?;
            *v = raw.checked_sub(base).ok_or(Error::IndexOutOfRange { index: raw, len: nv })?;
        }
        tets.push(tet);
    }
    Ok((verts, tets))
}

pub fn format_node_ele(verts: &[[f64; 3]], tets: &[[usize; 4]]) -> (String, String) {
    let mut node = format!("{} 3 0 0\n", verts.len());
    for (i, p) in verts.iter().enumerate() {
        let _ = writeln!(node, "{i} {} {} {}", p[0], p[1], p[2]);
    }
    let mut ele = format!("{} 4 0\n", tets.len());
    for (i, t) in tets.iter().enumerate() {
        let _ = writeln!(ele, "{i} {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    (node, ele)
}

/// Loads `.off`, or a `.node` / `.ele` pair given either file (or their common stem).
pub fn load_mesh<T: Real>(path: &Path) -> Result<OrientedSimplicialComplex<T>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let cast = |v: Vec<[f64; 3]>| v.into_iter().map(|p| p.map(T::of)).collect::<Vec<_>>();
    if ext.eq_ignore_ascii_case("off") {
        let (v, f) = parse_off(&std::fs::read_to_string(path)?)?;
        return OrientedSimplicialComplex::build_from_triangle_mesh(cast(v), &f);
    }
    let stem: PathBuf = if ext == "node" || ext == "ele" { path.with_extension("") } else { path.to_path_buf() };
    let node = std::fs::read_to_string(stem.with_extension("node"))?;
    let ele = std::fs::read_to_string(stem.with_extension("ele"))?;
    let (v, t) = parse_node_ele(&node, &ele)?;
    OrientedSimplicialComplex::build_from_tet_mesh(cast(v), &t)
}

/// Writes the complex as OFF (2-complexes) or `.node`/`.ele` (3-complexes); returns paths written.
pub fn save_mesh<T: Real>(complex: &OrientedSimplicialComplex<T>, stem: &Path) -> Result<Vec<PathBuf>> {
    let verts: Vec<[f64; 3]> = complex.coords().iter().map(|p| p.map(|c| c.to_f64())).collect();
    match complex.dims() {
        2 => {
            let faces: Vec<[usize; 3]> =
                complex.simplices(2).iter().map(|s| [s[0], s[1], s[2]]).collect();
            let p = stem.with_extension("off");
            std::fs::write(&p, format_off(&verts, &faces))?;
            Ok(vec![p])
        }
        3 => {
            let tets: Vec<[usize; 4]> =
                complex.simplices(3).iter().map(|s| [s[0], s[1], s[2], s[3]]).collect();
            let (node, ele) = format_node_ele(&verts, &tets);
            let (pn, pe) = (stem.with_extension("node"), stem.with_extension("ele"));
            std::fs::write(&pn, node)?;
            std::fs::write(&pe, ele)?;
            Ok(vec![pn, pe])
        }
        d => Err(Error::InvalidParameter(format!("no mesh file format for {d}-complexes"))),
    }
}

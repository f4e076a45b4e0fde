//! OBJ and OFF import/export. Coordinates are written in shortest
//! round-trip form, so an export followed by an import is bitwise exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{Immersion, SurfaceMesh};
use crate::error::{Error, Result};

/// Positions (any fixed number of coordinates per vertex) and triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMesh {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub faces: Vec<[usize; 3]>,
}

impl RawMesh {
    /// Builds the topological mesh; the imported positions serve as the reference chart.
    pub fn to_surface_mesh(&self) -> Result<SurfaceMesh> {
        let n = self.positions.len() / self.dim;
        let reference = (0..n)
            .map(|v| {
                let p = &self.positions[v * self.dim..(v + 1) * self.dim];
                std::array::from_fn(|i| p.get(i).copied().unwrap_or(0.0))
            })
            .collect();
        SurfaceMesh::new(n, self.faces.clone(), reference)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Obj,
    Off,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
            Some("obj") => Ok(Format::Obj),
            Some("off") => Ok(Format::Off),
            _ => Err(Error::UnsupportedFormat(path.display().to_string())),
        }
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse().map_err(|_| Error::Parse { line, message: format!("bad number '{tok}'") })
}

fn push_polygon(faces: &mut Vec<[usize; 3]>, poly: &[usize], line: usize) -> Result<()> {
    if poly.len() < 3 {
        return Err(Error::Parse { line, message: "face with fewer than 3 vertices".into() });
    }
    for i in 1..poly.len() - 1 {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
    Ok(())
}

fn check_dim(dim: &mut Option<usize>, got: usize, line: usize) -> Result<()> {
    match *dim {
        None => {
            *dim = Some(got);
            Ok(())
        }
        Some(d) if d == got => Ok(()),
        Some(d) => Err(Error::Parse { line, message: format!("vertex has {got} coordinates, expected {d}") }),
    }
}

pub fn parse_obj(text: &str) -> Result<RawMesh> {
    let mut dim = None;
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let coords: Vec<f64> = toks.map(|t| parse_f64(t, line)).collect::<Result<_>>()?;
                if coords.is_empty() {
                    return Err(Error::Parse { line, message: "vertex without coordinates".into() });
                }
                check_dim(&mut dim, coords.len(), line)?;
                positions.extend(coords);
            }
            Some("f") => {
                let n = positions.len() / dim.unwrap_or(1);
                let poly = toks
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let idx: i64 = head
                            .parse()
                            .map_err(|_| Error::Parse { line, message: format!("bad face index '{t}'") })?;
                        let resolved = if idx < 0 { n as i64 + idx } else { idx - 1 };
                        if resolved < 0 || resolved >= n as i64 {
                            return Err(Error::Parse { line, message: format!("face index {idx} out of range") });
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<_>>>()?;
                push_polygon(&mut faces, &poly, line)?;
            }
            _ => {}
        }
    }
    let dim = dim.ok_or(Error::Parse { line: 0, message: "no vertices".into() })?;
    Ok(RawMesh { dim, positions, faces })
}

pub fn parse_off(text: &str) -> Result<RawMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    let rest_of_header = header
        .strip_prefix("OFF")
        .ok_or(Error::Parse { line: hl, message: "missing OFF header".into() })?
        .trim();
    let counts_line = if rest_of_header.is_empty() {
        lines.next().ok_or(Error::Parse { line: hl, message: "missing counts".into() })?
    } else {
        (hl, rest_of_header)
    };
    let counts: Vec<usize> = counts_line
        .1
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse { line: counts_line.0, message: format!("bad count '{t}'") }))
        .collect::<Result<_>>()?;
    if counts.len() < 2 {
        return Err(Error::Parse { line: counts_line.0, message: "expected vertex and face counts".into() });
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut dim = None;
    let mut positions = Vec::with_capacity(3 * nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or(Error::Parse { line: 0, message: "truncated vertex list".into() })?;
        let coords: Vec<f64> = l.split_whitespace().map(|t| parse_f64(t, line)).collect::<Result<_>>()?;
        check_dim(&mut dim, coords.len(), line)?;
        positions.extend(coords);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or(Error::Parse { line: 0, message: "truncated face list".into() })?;
        let ints: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse { line, message: format!("bad index '{t}'") }))
            .collect::<Result<_>>()?;
        let k = *ints.first().ok_or(Error::Parse { line, message: "empty face".into() })?;
        if ints.len() < k + 1 {
            return Err(Error::Parse { line, message: "face shorter than declared".into() });
        }
        let poly = &ints[1..=k];
        if poly.iter().any(|&i| i >= nv) {
            return Err(Error::Parse { line, message: "face index out of range".into() });
        }
        push_polygon(&mut faces, poly, line)?;
    }
    let dim = dim.unwrap_or(3);
    Ok(RawMesh { dim, positions, faces })
}

pub fn read_raw(path: &Path) -> Result<RawMesh> {
    let format = Format::from_path(path)?;
    let text = std::fs::read_to_string(path)?;
    match format {
        Format::Obj => parse_obj(&text),
        Format::Off => parse_off(&text),
    }
}

pub fn to_obj(imm: &Immersion) -> String {
    let mut s = String::new();
    for v in 0..imm.n_vertices() {
        s.push('v');
        for x in imm.point(v) {
            write!(s, " {x:?}").unwrap();
        }
        s.push('\n');
    }
    for f in imm.mesh.faces() {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

pub fn to_off(imm: &Immersion) -> String {
    let mut s = format!("OFF\n{} {} 0\n", imm.n_vertices(), imm.mesh.faces().len());
    for v in 0..imm.n_vertices() {
        let coords: Vec<String> = imm.point(v).iter().map(|x| format!("{x:?}")).collect();
        s.push_str(&coords.join(" "));
        s.push('\n');
    }
    for f in imm.mesh.faces() {
        writeln!(s, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    s
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::from(e)
    })
}

pub fn write_mesh(path: &Path, imm: &Immersion) -> Result<()> {
    let text = match Format::from_path(path)? {
        Format::Obj => to_obj(imm),
        Format::Off => to_off(imm),
    };
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_handles_slashes_negative_indices_and_quads() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 -1\n";
        let raw = parse_obj(text).unwrap();
        assert_eq!(raw.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(raw.dim, 3);
    }

    #[test]
    fn off_parses_header_with_counts() {
        let raw = parse_off("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(raw.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn parse_errors_report_lines() {
        let err = parse_obj("v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_off("PLY\n").is_err());
    }

    #[test]
    fn unknown_extension_is_rejected() {
        assert!(matches!(Format::from_path(Path::new("a.stl")), Err(Error::UnsupportedFormat(_))));
    }
}

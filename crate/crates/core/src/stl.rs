//! STL reader and writer (binary and ASCII).
//!
//! Facet normals are ignored on read and recomputed from the winding on
//! write. Positions are stored as `f32` in the file; the loader welds
//! coincident corners into an indexed mesh.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{TriangleMesh, Vec3};
use crate::repair::{weld_soup, WELD_TOLERANCE};

const HEADER_LEN: usize = 80;
const FACET_LEN: usize = 50;
const HEADER_TAG: &[u8] = b"remixd binary STL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StlFormat {
    Ascii,
    Binary,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("truncated binary STL: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("ASCII STL parse error on line {line}: {message}")]
    Ascii { line: usize, message: String },
    #[error("STL contains no facets")]
    NoFacets,
    #[error("cannot write an empty mesh")]
    EmptyMesh,
}

/// Result of [`load_stl`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedStl {
    pub mesh: TriangleMesh,
    pub format: StlFormat,
    pub facet_count: usize,
    pub dropped_degenerate: usize,
    pub warnings: Vec<String>,
}

pub fn load_stl(bytes: &[u8]) -> Result<LoadedStl, StlError> {
    let (soup, format) = if let Some(n) = binary_facet_count(bytes) {
        (read_binary(bytes, n), StlFormat::Binary)
    } else if looks_ascii(bytes) {
        (read_ascii(bytes)?, StlFormat::Ascii)
    } else if bytes.len() < HEADER_LEN + 4 {
        return Err(StlError::Truncated {
            expected: HEADER_LEN + 4,
            actual: bytes.len(),
        });
    } else {
        let n = declared_count(bytes);
        return Err(StlError::Truncated {
            expected: HEADER_LEN + 4 + FACET_LEN * n,
            actual: bytes.len(),
        });
    };
    if soup.is_empty() {
        return Err(StlError::NoFacets);
    }
    let facet_count = soup.len();
    let (mesh, dropped) = weld_soup(&soup, WELD_TOLERANCE);
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!("dropped {dropped} degenerate facet(s) of {facet_count}"));
    }
    Ok(LoadedStl {
        mesh,
        format,
        facet_count,
        dropped_degenerate: dropped,
        warnings,
    })
}

fn declared_count(bytes: &[u8]) -> usize {
    u32::from_le_bytes(bytes[HEADER_LEN..HEADER_LEN + 4].try_into().unwrap()) as usize
}

fn binary_facet_count(bytes: &[u8]) -> Option<usize> {
    if bytes.len() < HEADER_LEN + 4 {
        return None;
    }
    let n = declared_count(bytes);
    (bytes.len() == HEADER_LEN + 4 + FACET_LEN * n).then_some(n)
}

fn looks_ascii(bytes: &[u8]) -> bool {
    let start = bytes.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(bytes.len());
    bytes[start..].starts_with(b"solid") && std::str::from_utf8(bytes).is_ok()
}

fn read_f32(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn read_binary(bytes: &[u8], n: usize) -> Vec<[Vec3; 3]> {
    (0..n)
        .map(|i| {
            // Skip the 12-byte normal.
            let base = HEADER_LEN + 4 + i * FACET_LEN + 12;
            std::array::from_fn(|k| {
                let at = base + k * 12;
                Vec3::new(
                    read_f32(bytes, at) as f64,
                    read_f32(bytes, at + 4) as f64,
                    read_f32(bytes, at + 8) as f64,
                )
            })
        })
        .collect()
}

struct Tokens<'a> {
    inner: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens {
            inner: Box::new(
                text.lines()
                    .enumerate()
                    .flat_map(|(i, l)| l.split_whitespace().map(move |w| (i + 1, w))),
            ),
            last_line: 1,
        }
    }

    fn next(&mut self) -> Option<&'a str> {
        let (line, tok) = self.inner.next()?;
        self.last_line = line;
        Some(tok)
    }

    fn err(&self, message: impl Into<String>) -> StlError {
        StlError::Ascii {
            line: self.last_line,
            message: message.into(),
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), StlError> {
        match self.next() {
            Some(t) if t.eq_ignore_ascii_case(word) => Ok(()),
            Some(t) => Err(self.err(format!("expected `{word}`, found `{t}`"))),
            None => Err(self.err(format!("expected `{word}`, found end of file"))),
        }
    }

    fn number(&mut self) -> Result<f64, StlError> {
        let tok = self.next().ok_or_else(|| self.err("expected a number, found end of file"))?;
        let v: f32 = tok
            .parse()
            .map_err(|_| self.err(format!("invalid number `{tok}`")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite number `{tok}`")));
        }
        Ok(v as f64)
    }

    /// Skips the remainder of the current line (solid names may contain spaces).
    fn skip_line(&mut self) -> Option<&'a str> {
        let line = self.last_line;
        loop {
            let (l, tok) = self.inner.next()?;
            if l != line {
                self.last_line = l;
                return Some(tok);
            }
        }
    }
}

fn read_ascii(bytes: &[u8]) -> Result<Vec<[Vec3; 3]>, StlError> {
    let text = std::str::from_utf8(bytes).map_err(|_| StlError::Ascii {
        line: 1,
        message: "not valid UTF-8".into(),
    })?;
    let mut toks = Tokens::new(text);
    let mut soup = Vec::new();
    toks.expect("solid")?;
    let mut tok = toks.skip_line();
    loop {
        match tok {
            None => return Err(toks.err("missing `endsolid`")),
            Some(t) if t.eq_ignore_ascii_case("facet") => {
                toks.expect("normal")?;
                for _ in 0..3 {
                    toks.number()?;
                }
                toks.expect("outer")?;
                toks.expect("loop")?;
                let mut corners = [Vec3::zeros(); 3];
                for corner in &mut corners {
                    toks.expect("vertex")?;
                    *corner = Vec3::new(toks.number()?, toks.number()?, toks.number()?);
                }
                toks.expect("endloop")?;
                toks.expect("endfacet")?;
                soup.push(corners);
                tok = toks.next();
            }
            Some(t) if t.eq_ignore_ascii_case("endsolid") => {
                // Multiple solids may follow one another.
                match toks.skip_line() {
                    None => break,
                    Some(t) if t.eq_ignore_ascii_case("solid") => tok = toks.skip_line(),
                    Some(t) => return Err(toks.err(format!("unexpected `{t}` after `endsolid`"))),
                }
            }
            Some(t) => return Err(toks.err(format!("expected `facet` or `endsolid`, found `{t}`"))),
        }
    }
    Ok(soup)
}

fn facet_normal(corners: &[[f32; 3]; 3]) -> [f32; 3] {
    let p = corners.map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64));
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let len = n.norm();
    if len > 0.0 {
        let n = n / len;
        [n.x as f32, n.y as f32, n.z as f32]
    } else {
        [0.0; 3]
    }
}

fn quantized_corners(mesh: &TriangleMesh, t: usize) -> [[f32; 3]; 3] {
    mesh.corners(t).map(|v| [v.x as f32, v.y as f32, v.z as f32])
}

pub fn write_stl(mesh: &TriangleMesh, format: StlFormat) -> Result<Vec<u8>, StlError> {
    if mesh.is_empty() {
        return Err(StlError::EmptyMesh);
    }
    Ok(match format {
        StlFormat::Binary => write_binary(mesh),
        StlFormat::Ascii => write_ascii(mesh).into_bytes(),
    })
}

fn write_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let n = mesh.triangle_count();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 + FACET_LEN * n);
    let mut header = [0u8; HEADER_LEN];
    header[..HEADER_TAG.len()].copy_from_slice(HEADER_TAG);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for t in 0..n {
        let corners = quantized_corners(mesh, t);
        for c in std::iter::once(facet_normal(&corners)).chain(corners) {
            for x in c {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

fn write_ascii(mesh: &TriangleMesh) -> String {
    use std::fmt::Write;
    let mut out = String::from("solid remixd\n");
    for t in 0..mesh.triangle_count() {
        let corners = quantized_corners(mesh, t);
        let n = facet_normal(&corners);
        let _ = writeln!(out, "  facet normal {:e} {:e} {:e}", n[0], n[1], n[2]);
        out.push_str("    outer loop\n");
        for c in corners {
            let _ = writeln!(out, "      vertex {:e} {:e} {:e}", c[0], c[1], c[2]);
        }
        out.push_str("    endloop\n  endfacet\n");
    }
    out.push_str("endsolid remixd\n");
    out
}

/// The mesh exactly as it survives a binary STL roundtrip: `f32` positions,
/// welded, vertices in first-use order. Applying this twice is a no-op.
pub fn stl_canonical(mesh: &TriangleMesh) -> TriangleMesh {
    if mesh.is_empty() {
        return TriangleMesh::default();
    }
    let bytes = write_binary(mesh);
    let n = mesh.triangle_count();
    let (canon, _) = weld_soup(&read_binary(&bytes, n), WELD_TOLERANCE);
    canon
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_shapes::*;

    #[test]
    fn binary_cube_is_684_bytes_and_reloads_welded() {
        let cube = unit_cube();
        let bytes = write_stl(&cube, StlFormat::Binary).unwrap();
        assert_eq!(bytes.len(), 684);
        assert!(bytes.starts_with(HEADER_TAG));
        let loaded = load_stl(&bytes).unwrap();
        assert_eq!(loaded.format, StlFormat::Binary);
        assert_eq!(loaded.mesh.vertex_count(), 8);
        assert_eq!(loaded.mesh.triangle_count(), 12);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn ascii_roundtrip_preserves_geometry() {
        let cube = box_mesh(Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.7, 2.9, 3.1));
        let text = write_stl(&cube, StlFormat::Ascii).unwrap();
        let loaded = load_stl(&text).unwrap();
        assert_eq!(loaded.format, StlFormat::Ascii);
        assert_eq!(loaded.mesh, stl_canonical(&cube));
    }

    #[test]
    fn empty_mesh_cannot_be_written() {
        assert_eq!(
            write_stl(&TriangleMesh::default(), StlFormat::Binary),
            Err(StlError::EmptyMesh)
        );
    }

    #[test]
    fn zero_area_ascii_facet_is_dropped_with_warning() {
        let text = "solid flat\n facet normal 0 0 0\n  outer loop\n   vertex 0 0 0\n   vertex 1 1 1\n   vertex 2 2 2\n  endloop\n endfacet\nendsolid flat\n";
        let loaded = load_stl(text.as_bytes()).unwrap();
        assert_eq!(loaded.mesh.triangle_count(), 0);
        assert_eq!(loaded.dropped_degenerate, 1);
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn ascii_errors_carry_line_numbers() {
        let text = "solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 0 zero\n";
        match load_stl(text.as_bytes()) {
            Err(StlError::Ascii { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ascii_is_whitespace_tolerant() {
        let text = "  solid  my part name\n\tfacet normal 0 0 1 outer loop\n vertex 0 0 0 vertex 1 0 0\n vertex 0 1 0 endloop endfacet\nendsolid my part name";
        let loaded = load_stl(text.as_bytes()).unwrap();
        assert_eq!(loaded.mesh.triangle_count(), 1);
    }

    #[test]
    fn no_facets_is_an_error() {
        assert_eq!(load_stl(b"solid empty\nendsolid empty\n"), Err(StlError::NoFacets));
        let mut bin = vec![0u8; 84];
        bin[..5].copy_from_slice(b"BIN00");
        assert_eq!(load_stl(&bin), Err(StlError::NoFacets));
    }

    #[test]
    fn truncated_binary_is_reported() {
        let bytes = write_stl(&unit_cube(), StlFormat::Binary).unwrap();
        let cut = &bytes[..600];
        assert_eq!(
            load_stl(cut),
            Err(StlError::Truncated {
                expected: 684,
                actual: 600
            })
        );
        assert!(matches!(load_stl(&bytes[..40]), Err(StlError::Truncated { .. })));
    }

    #[test]
    fn binary_header_starting_with_solid_is_still_binary() {
        let mut bytes = write_stl(&unit_cube(), StlFormat::Binary).unwrap();
        bytes[..5].copy_from_slice(b"solid");
        assert_eq!(load_stl(&bytes).unwrap().format, StlFormat::Binary);
    }

    #[test]
    fn canonical_form_is_idempotent() {
        let cube = box_mesh(Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.7, 2.9, 3.1));
        let once = stl_canonical(&cube);
        assert_eq!(stl_canonical(&once), once);
    }
}

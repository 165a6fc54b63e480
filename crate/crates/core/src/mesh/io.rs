//! Text interchange format:
//!
//! ```text
//! polymesh 1
//! vertices <n>
//! <id> <x> <y>
//! ...
//! elements <m>
//! <id> <k> <v0> ... <v{k-1}>
//! ...
//! ```
//!
//! Coordinates are written with 17 significant digits so that a save/load
//! cycle reproduces them exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::polybasis::Vec2;

use super::{MeshError, PolygonalMesh};

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject clockwise loops instead of reversing them.
    pub strict: bool,
}

pub fn write_mesh<W: Write>(mesh: &PolygonalMesh, mut out: W) -> std::io::Result<()> {
    writeln!(out, "polymesh 1")?;
    writeln!(out, "vertices {}", mesh.vertices.len())?;
    for (i, v) in mesh.vertices.iter().enumerate() {
        writeln!(out, "{i} {:.16e} {:.16e}", v.x, v.y)?;
    }
    writeln!(out, "elements {}", mesh.elements.len())?;
    for e in &mesh.elements {
        write!(out, "{} {}", e.id, e.vertex_loop.len())?;
        for v in &e.vertex_loop {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_mesh(mesh: &PolygonalMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut buf = Vec::new();
    write_mesh(mesh, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>, options: LoadOptions) -> Result<PolygonalMesh, MeshError> {
    let text = fs::read_to_string(path)?;
    parse_mesh(&text, options)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

struct Line<'a> {
    number: usize,
    text: &'a str,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<Line<'a>, MeshError> {
        for (i, text) in self.inner.by_ref() {
            if !text.trim().is_empty() {
                return Ok(Line { number: i + 1, text });
            }
        }
        Err(MeshError::Parse {
            line: 0,
            column: 0,
            message: "unexpected end of file".into(),
        })
    }
}

impl<'a> Line<'a> {
    /// Whitespace-separated tokens with their 1-based column.
    fn tokens(&self) -> Vec<(usize, &'a str)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, c) in self.text.char_indices() {
            match (c.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    out.push((s + 1, &self.text[s..i]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s + 1, &self.text[s..]));
        }
        out
    }

    fn error(&self, column: usize, message: impl Into<String>) -> MeshError {
        MeshError::Parse {
            line: self.number,
            column,
            message: message.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, tok: (usize, &str), what: &str) -> Result<T, MeshError> {
        tok.1
            .parse()
            .map_err(|_| self.error(tok.0, format!("expected {what}, found `{}`", tok.1)))
    }

    fn keyword_count(&self, keyword: &str) -> Result<usize, MeshError> {
        let toks = self.tokens();
        if toks.len() != 2 || toks[0].1 != keyword {
            return Err(self.error(1, format!("expected `{keyword} <count>`")));
        }
        self.parse(toks[1], "a count")
    }
}

pub fn parse_mesh(text: &str, options: LoadOptions) -> Result<PolygonalMesh, MeshError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let header = lines.next_line()?;
    if header.tokens().iter().map(|t| t.1).collect::<Vec<_>>() != ["polymesh", "1"] {
        return Err(header.error(1, "expected header `polymesh 1`"));
    }
    let line = lines.next_line()?;
    let nv = line.keyword_count("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for expected in 0..nv {
        let line = lines.next_line()?;
        let toks = line.tokens();
        if toks.len() != 3 {
            return Err(line.error(1, "expected `id x y`"));
        }
        let id: usize = line.parse(toks[0], "a vertex id")?;
        if id != expected {
            return Err(line.error(
                toks[0].0,
                format!("vertex ids must be dense; expected {expected}"),
            ));
        }
        let x: f64 = line.parse(toks[1], "a coordinate")?;
        let y: f64 = line.parse(toks[2], "a coordinate")?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(line.error(toks[1].0, "non-finite coordinate"));
        }
        vertices.push(Vec2::new(x, y));
    }
    let line = lines.next_line()?;
    let ne = line.keyword_count("elements")?;
    let mut loops = Vec::with_capacity(ne);
    for expected in 0..ne {
        let line = lines.next_line()?;
        let toks = line.tokens();
        if toks.len() < 2 {
            return Err(line.error(1, "expected `id k v0 ... v{k-1}`"));
        }
        let id: usize = line.parse(toks[0], "an element id")?;
        if id != expected {
            return Err(line.error(
                toks[0].0,
                format!("element ids must be dense; expected {expected}"),
            ));
        }
        let k: usize = line.parse(toks[1], "a vertex count")?;
        if toks.len() != k + 2 {
            return Err(line.error(
                toks[1].0,
                format!("declared {k} vertices, found {}", toks.len() - 2),
            ));
        }
        let mut lp = Vec::with_capacity(k);
        for tok in &toks[2..] {
            let v: usize = line.parse(*tok, "a vertex id")?;
            if v >= nv {
                return Err(line.error(tok.0, format!("vertex id {v} out of range")));
            }
            lp.push(v);
        }
        loops.push(lp);
    }
    PolygonalMesh::from_loops(vertices, loops, None, 0, !options.strict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, MeshFamily};

    fn text_of(mesh: &PolygonalMesh) -> String {
        let mut buf = Vec::new();
        write_mesh(mesh, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_single_quad() {
        let m = generate_mesh(MeshFamily::Quad, 1, None).unwrap();
        let back = parse_mesh(&text_of(&m), LoadOptions::default()).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(
            back.elements.iter().map(|e| &e.vertex_loop).collect::<Vec<_>>(),
            m.elements.iter().map(|e| &e.vertex_loop).collect::<Vec<_>>()
        );
    }

    #[test]
    fn round_trip_is_textually_stable() {
        let m = generate_mesh(MeshFamily::VoronoiCvt, 4, Some(1)).unwrap();
        let t1 = text_of(&m);
        let back = parse_mesh(&t1, LoadOptions::default()).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(text_of(&back), t1);
    }

    #[test]
    fn parse_errors_carry_position() {
        let bad = "polymesh 1\nvertices 1\n0 0.0 abc\nelements 0\n";
        match parse_mesh(bad, LoadOptions::default()) {
            Err(MeshError::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 7);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_mesh("mesh 2\n", LoadOptions::default()),
            Err(MeshError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn clockwise_file() {
        let text = "polymesh 1\nvertices 4\n0 0 0\n1 1 0\n2 1 1\n3 0 1\nelements 1\n0 4 0 3 2 1\n";
        assert!(parse_mesh(text, LoadOptions::default()).is_ok());
        assert!(matches!(
            parse_mesh(text, LoadOptions { strict: true }),
            Err(MeshError::Clockwise { element: 0 })
        ));
    }

    #[test]
    fn hanging_node_file() {
        let text = "polymesh 1\nvertices 8\n0 0 0\n1 0.5 0\n2 1 0\n3 0 0.5\n4 0.5 0.5\n5 0 1\n6 0.5 1\n7 1 1\nelements 3\n0 4 0 1 4 3\n1 4 3 4 6 5\n2 4 1 2 7 6\n";
        let err = parse_mesh(text, LoadOptions::default()).unwrap_err();
        assert!(matches!(err, MeshError::NonConforming(..)));
        assert!(err.to_string().contains("edge"));
    }
}

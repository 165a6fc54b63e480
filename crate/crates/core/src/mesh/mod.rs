//! Polygonal meshes of the unit square.
//!
//! Elements are counter-clockwise vertex loops. Local edge `i` of an element
//! joins `vertex_loop[i]` to `vertex_loop[(i + 1) % n]`.

mod generate;
mod io;
mod voronoi;

pub use generate::generate_mesh;
pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh, LoadOptions};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::polybasis::Vec2;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("unsupported mesh family `{0}`")]
    UnsupportedFamily(String),
    #[error("refinement parameter N = {n} is too small for family {family} (minimum {min})")]
    TooCoarse {
        family: MeshFamily,
        n: usize,
        min: usize,
    },
    #[error("element {element}: {reason}")]
    InvalidElement { element: usize, reason: String },
    #[error("non-conforming edge ({0}, {1}): {2}")]
    NonConforming(usize, usize, String),
    #[error("element {element} is clockwise")]
    Clockwise { element: usize },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshFamily {
    Quad,
    Triangle,
    Hexagon,
    DistortedQuad,
    VoronoiCvt,
    VoronoiRandom,
}

impl MeshFamily {
    pub const ALL: [MeshFamily; 6] = [
        MeshFamily::Quad,
        MeshFamily::Triangle,
        MeshFamily::Hexagon,
        MeshFamily::DistortedQuad,
        MeshFamily::VoronoiCvt,
        MeshFamily::VoronoiRandom,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            MeshFamily::Quad => "quad",
            MeshFamily::Triangle => "triangle",
            MeshFamily::Hexagon => "hexagon",
            MeshFamily::DistortedQuad => "distorted-quad",
            MeshFamily::VoronoiCvt => "voronoi-cvt",
            MeshFamily::VoronoiRandom => "voronoi-random",
        }
    }
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for MeshFamily {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MeshFamily::ALL
            .iter()
            .copied()
            .find(|f| f.tag() == s)
            .ok_or_else(|| MeshError::UnsupportedFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: usize,
    pub vertex_loop: Vec<usize>,
    pub area: f64,
    pub centroid: Vec2,
    pub diameter: f64,
    pub edges: Vec<usize>,
}

impl Element {
    pub fn n_vertices(&self) -> usize {
        self.vertex_loop.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints, smaller id first.
    pub vertices: [usize; 2],
    pub elements: Vec<usize>,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalMesh {
    pub vertices: Vec<Vec2>,
    pub elements: Vec<Element>,
    pub edges: Vec<Edge>,
    /// Largest element diameter.
    pub h: f64,
    pub family: Option<MeshFamily>,
    /// Elements per side of the square (0 when unknown, e.g. loaded from file).
    pub n: usize,
}

/// Shoelace area, area-weighted centroid and diameter of a polygon.
pub fn polygon_geometry(points: &[Vec2]) -> (f64, Vec2, f64) {
    let n = points.len();
    let mut a2 = 0.0;
    let mut c = Vec2::zeros();
    // shift to the first vertex to reduce cancellation
    let o = points[0];
    for i in 0..n {
        let p = points[i] - o;
        let q = points[(i + 1) % n] - o;
        let cr = p.perp(&q);
        a2 += cr;
        c += (p + q) * cr;
    }
    let area = 0.5 * a2;
    let centroid = if a2 != 0.0 { o + c / (3.0 * a2) } else { o };
    let mut diam: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            diam = diam.max((points[i] - points[j]).norm());
        }
    }
    (area, centroid, diam)
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let o1 = (b - a).perp(&(c - a));
    let o2 = (b - a).perp(&(d - a));
    let o3 = (d - c).perp(&(a - c));
    let o4 = (d - c).perp(&(b - c));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

fn is_simple(points: &[Vec2]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

impl PolygonalMesh {
    /// Build a mesh from vertex coordinates and element loops, computing
    /// geometry and edge topology. With `reorient`, clockwise loops are
    /// reversed (with a warning); otherwise they are rejected.
    pub fn from_loops(
        vertices: Vec<Vec2>,
        mut loops: Vec<Vec<usize>>,
        family: Option<MeshFamily>,
        n: usize,
        reorient: bool,
    ) -> Result<Self, MeshError> {
        for (i, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite()) {
                return Err(MeshError::InvalidElement {
                    element: usize::MAX,
                    reason: format!("vertex {i} has non-finite coordinates"),
                });
            }
        }
        let mut elements = Vec::with_capacity(loops.len());
        for (id, lp) in loops.iter_mut().enumerate() {
            if lp.len() < 3 {
                return Err(MeshError::InvalidElement {
                    element: id,
                    reason: format!("loop has {} vertices", lp.len()),
                });
            }
            if let Some(&bad) = lp.iter().find(|&&v| v >= vertices.len()) {
                return Err(MeshError::InvalidElement {
                    element: id,
                    reason: format!("vertex id {bad} out of range"),
                });
            }
            let mut sorted = lp.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != lp.len() {
                return Err(MeshError::InvalidElement {
                    element: id,
                    reason: "repeated vertex in loop".into(),
                });
            }
            let pts: Vec<Vec2> = lp.iter().map(|&v| vertices[v]).collect();
            let (mut area, centroid, diameter) = polygon_geometry(&pts);
            if area < 0.0 {
                if !reorient {
                    return Err(MeshError::Clockwise { element: id });
                }
                log::warn!("element {id} is clockwise; reversing its vertex loop");
                lp.reverse();
                area = -area;
            }
            if area <= 0.0 {
                return Err(MeshError::InvalidElement {
                    element: id,
                    reason: "zero area".into(),
                });
            }
            let pts: Vec<Vec2> = lp.iter().map(|&v| vertices[v]).collect();
            if !is_simple(&pts) {
                return Err(MeshError::InvalidElement {
                    element: id,
                    reason: "vertex loop self-intersects".into(),
                });
            }
            elements.push(Element {
                id,
                vertex_loop: lp.clone(),
                area,
                centroid,
                diameter,
                edges: Vec::with_capacity(lp.len()),
            });
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for el in elements.iter_mut() {
            let nv = el.vertex_loop.len();
            for i in 0..nv {
                let a = el.vertex_loop[i];
                let b = el.vertex_loop[(i + 1) % nv];
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        elements: Vec::new(),
                        boundary: false,
                    });
                    edges.len() - 1
                });
                edges[e].elements.push(el.id);
                el.edges.push(e);
            }
        }

        let (lo, hi) = bounding_box(&vertices);
        let tol = 1e-10 * (hi - lo).norm().max(1.0);
        for e in edges.iter_mut() {
            let [a, b] = e.vertices;
            match e.elements.len() {
                1 => {
                    let pa = vertices[a];
                    let pb = vertices[b];
                    let on_side =
                        |f: fn(&Vec2) -> f64, v: f64| (f(&pa) - v).abs() < tol && (f(&pb) - v).abs() < tol;
                    let on_boundary = on_side(|p| p.x, lo.x)
                        || on_side(|p| p.x, hi.x)
                        || on_side(|p| p.y, lo.y)
                        || on_side(|p| p.y, hi.y);
                    if !on_boundary {
                        return Err(MeshError::NonConforming(
                            a,
                            b,
                            "interior edge with a single adjacent element (hanging node?)".into(),
                        ));
                    }
                    e.boundary = true;
                }
                2 => {
                    if e.elements[0] == e.elements[1] {
                        return Err(MeshError::NonConforming(
                            a,
                            b,
                            "edge used twice by one element".into(),
                        ));
                    }
                }
                k => {
                    return Err(MeshError::NonConforming(
                        a,
                        b,
                        format!("edge shared by {k} elements"),
                    ))
                }
            }
        }
        let h = elements.iter().map(|e| e.diameter).fold(0.0, f64::max);
        Ok(PolygonalMesh {
            vertices,
            elements,
            edges,
            h,
            family,
            n,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_points(&self, e: usize) -> Vec<Vec2> {
        self.elements[e]
            .vertex_loop
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for e in self.edges.iter().filter(|e| e.boundary) {
            mask[e.vertices[0]] = true;
            mask[e.vertices[1]] = true;
        }
        mask
    }

    pub fn family_tag(&self) -> String {
        self.family
            .map(|f| f.tag().to_string())
            .unwrap_or_else(|| "custom".to_string())
    }
}

fn bounding_box(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRegularityReport {
    /// Distance from the centroid to the nearest edge line, over `h_E`.
    pub rho_star_estimate: Vec<f64>,
    /// Shortest edge over `h_E`.
    pub min_edge_ratio: Vec<f64>,
    pub floor: f64,
    /// Elements whose `rho_star_estimate` falls below `floor`.
    pub flagged: Vec<usize>,
}

impl ShapeRegularityReport {
    pub fn min_rho(&self) -> f64 {
        self.rho_star_estimate
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_edge(&self) -> f64 {
        self.min_edge_ratio.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub const DEFAULT_RHO_FLOOR: f64 = 0.01;

pub fn validate_mesh(mesh: &PolygonalMesh) -> Result<ShapeRegularityReport, MeshError> {
    validate_mesh_with_floor(mesh, DEFAULT_RHO_FLOOR)
}

/// Shape-regularity estimates per element. Star-shapedness is checked with
/// respect to the centroid.
pub fn validate_mesh_with_floor(
    mesh: &PolygonalMesh,
    floor: f64,
) -> Result<ShapeRegularityReport, MeshError> {
    for e in &mesh.edges {
        let k = e.elements.len();
        if k == 0 || k > 2 || (k == 1) != e.boundary {
            return Err(MeshError::NonConforming(
                e.vertices[0],
                e.vertices[1],
                format!("{k} adjacent elements, boundary flag {}", e.boundary),
            ));
        }
    }
    let mut rho = Vec::with_capacity(mesh.n_elements());
    let mut ratio = Vec::with_capacity(mesh.n_elements());
    let mut flagged = Vec::new();
    for el in &mesh.elements {
        let pts = mesh.element_points(el.id);
        let (area, _, _) = polygon_geometry(&pts);
        if area <= 0.0 {
            return Err(MeshError::InvalidElement {
                element: el.id,
                reason: format!("inverted element (signed area {area:e})"),
            });
        }
        let n = pts.len();
        let mut dmin = f64::INFINITY;
        let mut lmin = f64::INFINITY;
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            let len = (b - a).norm();
            let dist = (b - a).perp(&(el.centroid - a)) / len;
            if dist <= 0.0 {
                return Err(MeshError::InvalidElement {
                    element: el.id,
                    reason: format!("not star-shaped with respect to its centroid (edge {i})"),
                });
            }
            dmin = dmin.min(dist);
            lmin = lmin.min(len);
        }
        let r = dmin / el.diameter;
        if r < floor {
            flagged.push(el.id);
        }
        rho.push(r);
        ratio.push(lmin / el.diameter);
    }
    Ok(ShapeRegularityReport {
        rho_star_estimate: rho,
        min_edge_ratio: ratio,
        floor,
        flagged,
    })
}

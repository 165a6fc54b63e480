//! Element projectors for the order-2 scalar and divergence-free vector
//! virtual element spaces, computed from degrees of freedom only.
//!
//! Local DOF layout on an element with `n` vertices (local edge `i` joins
//! vertex `i` to vertex `i + 1`):
//!
//! * scalar: `[vertex values (n), edge midpoint values (n), cell average]`
//! * vector: per component `c` a block `[vertex values (n), midpoint values (n)]`
//!   at offset `2 n c`, followed by the two scaled divergence moments
//!   `h_E / |E| int_E div v m_a` for `a = (1,0), (0,1)`.
//!
//! Polynomial coefficient vectors use the graded-lexicographic monomial order;
//! vector polynomials are component-blocked (`[x-part, y-part]`) and matrix
//! polynomials store block `(c, d)` (the `d`-derivative of component `c`) at
//! offset `3 (2 c + d)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mesh::PolygonalMesh;
use crate::polybasis::{
    gauss_legendre, mixed_mass_matrix, multi_indices, poly_mass_matrix, polygon_quadrature, PolyError,
    QuadratureRule, ScaledMonomialBasis, Vec2,
};

/// Exactness of the element quadrature used for assembly.
pub const ASSEMBLY_DEGREE: usize = 6;

const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("element {element}: singular local system for {system}")]
    Singular { element: usize, system: &'static str },
    #[error("element {element}: {source}")]
    Geometry {
        element: usize,
        #[source]
        source: PolyError,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct LocalEdge {
    pub a: Vec2,
    pub b: Vec2,
    pub midpoint: Vec2,
    pub length: f64,
    pub normal: Vec2,
}

/// Geometry of one element plus its assembly quadrature.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub id: usize,
    pub points: Vec<Vec2>,
    pub centroid: Vec2,
    pub h: f64,
    pub area: f64,
    pub quad: QuadratureRule,
}

impl LocalGeometry {
    pub fn from_mesh(mesh: &PolygonalMesh, element: usize) -> Result<Self, ProjectionError> {
        let el = &mesh.elements[element];
        Self::with_data(
            element,
            mesh.element_points(element),
            el.centroid,
            el.diameter,
            el.area,
        )
    }

    /// Geometry of a standalone counter-clockwise polygon.
    pub fn from_polygon(points: Vec<Vec2>) -> Result<Self, ProjectionError> {
        let (area, centroid, h) = crate::mesh::polygon_geometry(&points);
        Self::with_data(0, points, centroid, h, area)
    }

    fn with_data(
        id: usize,
        points: Vec<Vec2>,
        centroid: Vec2,
        h: f64,
        area: f64,
    ) -> Result<Self, ProjectionError> {
        let quad = polygon_quadrature(&points, centroid, ASSEMBLY_DEGREE)
            .map_err(|source| ProjectionError::Geometry { element: id, source })?;
        Ok(LocalGeometry {
            id,
            points,
            centroid,
            h,
            area,
            quad,
        })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn edge(&self, i: usize) -> LocalEdge {
        let a = self.points[i];
        let b = self.points[(i + 1) % self.n()];
        let t = b - a;
        let length = t.norm();
        LocalEdge {
            a,
            b,
            midpoint: (a + b) * 0.5,
            length,
            normal: Vec2::new(t.y, -t.x) / length,
        }
    }

    pub fn basis(&self, degree: usize) -> ScaledMonomialBasis {
        ScaledMonomialBasis::new(self.centroid, self.h, degree)
    }

    /// Rule of a different exactness on the same fan triangulation.
    pub fn rule(&self, degree: usize) -> Result<QuadratureRule, ProjectionError> {
        polygon_quadrature(&self.points, self.centroid, degree).map_err(|source| ProjectionError::Geometry {
            element: self.id,
            source,
        })
    }

    pub fn scalar_ndofs(&self) -> usize {
        2 * self.n() + 1
    }

    pub fn vector_ndofs(&self) -> usize {
        4 * self.n() + 2
    }

    /// Point at which each point DOF of the scalar layout is taken.
    pub fn node_points(&self) -> Vec<Vec2> {
        let n = self.n();
        (0..2 * n)
            .map(|i| {
                if i < n {
                    self.points[i]
                } else {
                    self.edge(i - n).midpoint
                }
            })
            .collect()
    }
}

/// Weights `[w_a, w_m, w_b]` with `int_e v f = w_a v(a) + w_m v(m) + w_b v(b)`
/// for every quadratic trace `v`; exact while `f` has degree at most 5.
pub fn edge_trace_weights(edge: &LocalEdge, f: impl Fn(Vec2) -> f64) -> [f64; 3] {
    let (t, w) = gauss_legendre(4);
    let mut out = [0.0; 3];
    for (ti, wi) in t.iter().zip(&w) {
        let p = edge.a + (edge.b - edge.a) * *ti;
        let fw = f(p) * wi * edge.length;
        out[0] += fw * 2.0 * (ti - 0.5) * (ti - 1.0);
        out[1] += fw * -4.0 * ti * (ti - 1.0);
        out[2] += fw * 2.0 * ti * (ti - 0.5);
    }
    out
}

fn solve(
    lhs: DMatrix<f64>,
    rhs: &DMatrix<f64>,
    element: usize,
    system: &'static str,
) -> Result<DMatrix<f64>, ProjectionError> {
    let lu = lhs.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or(ProjectionError::Singular { element, system })?;
    let cond = lhs.abs().column_sum().max() * inv.abs().column_sum().max();
    if !cond.is_finite() {
        return Err(ProjectionError::Singular { element, system });
    }
    if cond > CONDITION_WARNING {
        log::warn!("element {element}: {system} system has condition estimate {cond:.2e}");
    }
    Ok(inv * rhs)
}

/// Stiffness-like matrix of the H1-seminorm projection on `P_2`, with the
/// boundary-mean normalization in the constant row.
fn nabla_system(geo: &LocalGeometry, b2: &ScaledMonomialBasis) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(6, 6);
    for (p, w) in geo.quad.points.iter().zip(&geo.quad.weights) {
        let grads = b2.eval_grad(*p);
        for a in 1..6 {
            for b in 1..6 {
                g[(a, b)] += w * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
            }
        }
    }
    for i in 0..geo.n() {
        let e = geo.edge(i);
        let vals = [b2.eval(e.a), b2.eval(e.midpoint), b2.eval(e.b)];
        for b in 0..6 {
            // Simpson is exact for quadratics on the edge
            g[(0, b)] += e.length / 6.0 * (vals[0][b] + 4.0 * vals[1][b] + vals[2][b]);
        }
    }
    g
}

/// Constant Laplacians of the degree-2 monomials.
fn laplacians(h: f64) -> [f64; 6] {
    let l = 2.0 / (h * h);
    [0.0, 0.0, 0.0, l, 0.0, l]
}

#[derive(Debug, Clone)]
pub struct ScalarLocalProjectors {
    /// `Pi^nabla_2`, 6 x ndofs.
    pub pi_nabla: DMatrix<f64>,
    /// `Pi^0_2`, 6 x ndofs.
    pub pi0: DMatrix<f64>,
    /// `Pi^0_1` of each gradient component, 3 x ndofs each.
    pub pi0_grad: [DMatrix<f64>; 2],
    /// DOFs of each monomial, ndofs x 6.
    pub dofs: DMatrix<f64>,
}

pub fn scalar_projectors(geo: &LocalGeometry) -> Result<ScalarLocalProjectors, ProjectionError> {
    let n = geo.n();
    let nd = geo.scalar_ndofs();
    let mom = 2 * n;
    let b2 = geo.basis(2);
    let b1 = geo.basis(1);
    let h = geo.h;
    let h2 = poly_mass_matrix(&b2, &geo.quad);
    let h1 = poly_mass_matrix(&b1, &geo.quad);

    // Pi^nabla
    let g = nabla_system(geo, &b2);
    let mut rhs = DMatrix::zeros(6, nd);
    let lap = laplacians(h);
    for a in 0..6 {
        rhs[(a, mom)] -= lap[a] * geo.area;
    }
    for i in 0..n {
        let e = geo.edge(i);
        let ids = [i, n + i, (i + 1) % n];
        let w = edge_trace_weights(&e, |_| 1.0);
        for k in 0..3 {
            rhs[(0, ids[k])] += w[k];
        }
        for a in 1..6 {
            let w = edge_trace_weights(&e, |p| {
                let gr = b2.eval_grad(p)[a];
                gr[0] * e.normal.x + gr[1] * e.normal.y
            });
            for k in 0..3 {
                rhs[(a, ids[k])] += w[k];
            }
        }
    }
    let pi_nabla = solve(g, &rhs, geo.id, "scalar H1 projection")?;

    // Pi^0_2: the cell average fixes the constant moment, the enhancement
    // constraint gives the remaining moments through Pi^nabla.
    let mut moments = &h2 * &pi_nabla;
    moments.row_mut(0).fill(0.0);
    moments[(0, mom)] = geo.area;
    let pi0 = solve(h2.clone(), &moments, geo.id, "scalar L2 projection")?;

    // Pi^0_1 grad, by parts
    let mut grad_rhs = [DMatrix::zeros(3, nd), DMatrix::zeros(3, nd)];
    for (c, r) in grad_rhs.iter_mut().enumerate() {
        // d/dx_c m_g is 1/h for g = e_c, zero otherwise
        r[(1 + c, mom)] -= geo.area / h;
        for i in 0..n {
            let e = geo.edge(i);
            let ids = [i, n + i, (i + 1) % n];
            let nc = e.normal[c];
            for gamma in 0..3 {
                let w = edge_trace_weights(&e, |p| b1.eval(p)[gamma] * nc);
                for k in 0..3 {
                    r[(gamma, ids[k])] += w[k];
                }
            }
        }
    }
    let pi0_grad = [
        solve(h1.clone(), &grad_rhs[0], geo.id, "scalar gradient projection")?,
        solve(h1, &grad_rhs[1], geo.id, "scalar gradient projection")?,
    ];

    Ok(ScalarLocalProjectors {
        pi_nabla,
        pi0,
        pi0_grad,
        dofs: scalar_dof_matrix(geo),
    })
}

/// DOF vector of every degree-2 monomial.
pub fn scalar_dof_matrix(geo: &LocalGeometry) -> DMatrix<f64> {
    let n = geo.n();
    let b2 = geo.basis(2);
    let mut d = DMatrix::zeros(geo.scalar_ndofs(), 6);
    for (i, p) in geo.node_points().iter().enumerate() {
        let v = b2.eval(*p);
        for a in 0..6 {
            d[(i, a)] = v[a];
        }
    }
    for a in 0..6 {
        d[(2 * n, a)] = geo.quad.integrate(|p| b2.eval(p)[a]) / geo.area;
    }
    d
}

#[derive(Debug, Clone)]
pub struct VectorLocalProjectors {
    /// Componentwise `Pi^nabla_2`, 12 x ndofs.
    pub pi_nabla: DMatrix<f64>,
    /// `Pi^0_2`, 12 x ndofs.
    pub pi0: DMatrix<f64>,
    /// `Xi^0_1` of the gradient, 12 x ndofs (4 blocks of 3).
    pub xi0: DMatrix<f64>,
    /// Coefficients of `div v` in `P_1`, 3 x ndofs.
    pub div_poly: DMatrix<f64>,
    /// DOFs of each vector monomial, ndofs x 12.
    pub dofs: DMatrix<f64>,
}

/// Row offset of the `(c, d)` block of `xi0`.
pub fn xi_block(c: usize, d: usize) -> usize {
    3 * (2 * c + d)
}

pub fn vector_projectors(geo: &LocalGeometry) -> Result<VectorLocalProjectors, ProjectionError> {
    let n = geo.n();
    let nd = geo.vector_ndofs();
    let h = geo.h;
    let area = geo.area;
    let b1 = geo.basis(1);
    let b2 = geo.basis(2);
    let b3 = geo.basis(3);
    let h1 = poly_mass_matrix(&b1, &geo.quad);
    let mom = |c: usize| 4 * n + c;
    // local DOF ids of the edge trace of component c on edge i
    let trace_ids = |c: usize, i: usize| [2 * n * c + i, 2 * n * c + n + i, 2 * n * c + (i + 1) % n];
    let edges: Vec<LocalEdge> = (0..n).map(|i| geo.edge(i)).collect();

    // int_{dE} (v . n) f, accumulated into `row` of `target`
    let add_flux = |target: &mut DMatrix<f64>, row: usize, f: &dyn Fn(Vec2) -> f64| {
        for (i, e) in edges.iter().enumerate() {
            for c in 0..2 {
                let nc = e.normal[c];
                let w = edge_trace_weights(e, |p| nc * f(p));
                for (k, id) in trace_ids(c, i).into_iter().enumerate() {
                    target[(row, id)] += w[k];
                }
            }
        }
    };
    // int_{dE} v_c f
    let add_trace = |target: &mut DMatrix<f64>, row: usize, c: usize, f: &dyn Fn(Vec2) -> f64| {
        for (i, e) in edges.iter().enumerate() {
            let w = edge_trace_weights(e, f);
            for (k, id) in trace_ids(c, i).into_iter().enumerate() {
                target[(row, id)] += w[k];
            }
        }
    };

    // divergence polynomial
    let mut div_moments = DMatrix::zeros(3, nd);
    add_flux(&mut div_moments, 0, &|_| 1.0);
    div_moments[(1, mom(0))] = area / h;
    div_moments[(2, mom(1))] = area / h;
    let div_poly = solve(h1.clone(), &div_moments, geo.id, "divergence")?;

    // int_E v_c, from int_E v . grad(x_c - x_E,c) by parts
    let mut means = DMatrix::zeros(2, nd);
    for c in 0..2 {
        means[(c, mom(c))] -= area;
        let xc = geo.centroid[c];
        add_flux(&mut means, c, &|p: Vec2| p[c] - xc);
    }

    // componentwise Pi^nabla
    let g = nabla_system(geo, &b2);
    let lap = laplacians(h);
    let mut rhs = DMatrix::zeros(12, nd);
    for c in 0..2 {
        for a in 0..6 {
            let row = 6 * c + a;
            if lap[a] != 0.0 {
                for j in 0..nd {
                    rhs[(row, j)] -= lap[a] * means[(c, j)];
                }
            }
            if a == 0 {
                add_trace(&mut rhs, row, c, &|_| 1.0);
            } else {
                for (i, e) in edges.iter().enumerate() {
                    let w = edge_trace_weights(e, |p| {
                        let gr = b2.eval_grad(p)[a];
                        gr[0] * e.normal.x + gr[1] * e.normal.y
                    });
                    for (k, id) in trace_ids(c, i).into_iter().enumerate() {
                        rhs[(row, id)] += w[k];
                    }
                }
            }
        }
    }
    let mut g2 = DMatrix::zeros(12, 12);
    g2.view_mut((0, 0), (6, 6)).copy_from(&g);
    g2.view_mut((6, 6), (6, 6)).copy_from(&g);
    let pi_nabla = solve(g2, &rhs, geo.id, "vector H1 projection")?;

    // Xi^0_1 of grad v: int m_g dv_c/dx_d = -int v_c dm_g/dx_d + int_{dE} m_g n_d v_c
    let xi_rhs = xi_moments(geo, &edges, &b1, &means);
    let mut h1_4 = DMatrix::zeros(12, 12);
    for blk in 0..4 {
        h1_4.view_mut((3 * blk, 3 * blk), (3, 3)).copy_from(&h1);
    }
    let xi0 = solve(h1_4, &xi_rhs, geo.id, "gradient projection")?;

    // Pi^0_2 through [P_2]^2 = grad P_3 (+) m_perp P_1
    let spanning = spanning_set(&b3);
    let mut span_gram = DMatrix::zeros(12, 12);
    let mut mono = vec![0.0; 6];
    for (p, w) in geo.quad.points.iter().zip(&geo.quad.weights) {
        b2.eval_into(*p, &mut mono);
        for (k, g) in spanning.iter().enumerate() {
            let gv = g(*p, &b2, &b3);
            for c in 0..2 {
                for a in 0..6 {
                    span_gram[(k, 6 * c + a)] += w * gv[c] * mono[a];
                }
            }
        }
    }
    let mut l2_rhs = DMatrix::zeros(12, nd);
    // gradient part: int v . h grad m_a = -h int div v m_a + h int_{dE} (v.n) m_a
    let h13 = mixed_mass_matrix(&b1, &b3, &geo.quad);
    for (k, alpha) in multi_indices(3).into_iter().skip(1).enumerate() {
        let pos = alpha.position();
        for j in 0..nd {
            let mut s = 0.0;
            for gamma in 0..3 {
                s += div_poly[(gamma, j)] * h13[(gamma, pos)];
            }
            l2_rhs[(k, j)] -= h * s;
        }
        add_flux(&mut l2_rhs, k, &|p: Vec2| h * b3.eval(p)[pos]);
    }
    // rotational part: enhancement replaces v by Pi^nabla v
    let rot = span_gram.rows(9, 3) * &pi_nabla;
    l2_rhs.rows_mut(9, 3).copy_from(&rot);
    let pi0 = solve(span_gram, &l2_rhs, geo.id, "vector L2 projection")?;

    Ok(VectorLocalProjectors {
        pi_nabla,
        pi0,
        xi0,
        div_poly,
        dofs: vector_dof_matrix(geo),
    })
}

fn xi_moments(
    geo: &LocalGeometry,
    edges: &[LocalEdge],
    b1: &ScaledMonomialBasis,
    means: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = geo.n();
    let nd = geo.vector_ndofs();
    let mut r = DMatrix::zeros(12, nd);
    for c in 0..2 {
        for d in 0..2 {
            let off = xi_block(c, d);
            for j in 0..nd {
                r[(off + 1 + d, j)] -= means[(c, j)] / geo.h;
            }
            for (i, e) in edges.iter().enumerate() {
                let nd = e.normal[d];
                let ids = [2 * n * c + i, 2 * n * c + n + i, 2 * n * c + (i + 1) % n];
                for gamma in 0..3 {
                    let w = edge_trace_weights(e, |p| b1.eval(p)[gamma] * nd);
                    for k in 0..3 {
                        r[(off + gamma, ids[k])] += w[k];
                    }
                }
            }
        }
    }
    r
}

type SpanFn = Box<dyn Fn(Vec2, &ScaledMonomialBasis, &ScaledMonomialBasis) -> [f64; 2]>;

/// `h grad m_a` for `1 <= |a| <= 3`, then `m_perp m_b` for `|b| <= 1`.
fn spanning_set(b3: &ScaledMonomialBasis) -> Vec<SpanFn> {
    let h = b3.scale;
    let mut out: Vec<SpanFn> = Vec::with_capacity(12);
    for alpha in multi_indices(3).into_iter().skip(1) {
        let pos = alpha.position();
        out.push(Box::new(move |p, _b2, b3| {
            let g = b3.eval_grad(p)[pos];
            [h * g[0], h * g[1]]
        }));
    }
    for beta in 0..3 {
        out.push(Box::new(move |p, b2, _b3| {
            let m = b2.eval(p);
            // m_perp = (m_(0,1), -m_(1,0))
            [m[2] * m[beta], -m[1] * m[beta]]
        }));
    }
    out
}

/// DOF vector of every vector monomial `m_a e_c`.
pub fn vector_dof_matrix(geo: &LocalGeometry) -> DMatrix<f64> {
    let n = geo.n();
    let b2 = geo.basis(2);
    let b1 = geo.basis(1);
    let mut d = DMatrix::zeros(geo.vector_ndofs(), 12);
    for (i, p) in geo.node_points().iter().enumerate() {
        let v = b2.eval(*p);
        for a in 0..6 {
            d[(i, a)] = v[a];
            d[(2 * n + i, 6 + a)] = v[a];
        }
    }
    let scale = geo.h / geo.area;
    for c in 0..2 {
        for a in 0..6 {
            for (k, gamma) in [1usize, 2].into_iter().enumerate() {
                d[(4 * n + k, 6 * c + a)] =
                    scale * geo.quad.integrate(|p| b2.eval_grad(p)[a][c] * b1.eval(p)[gamma]);
            }
        }
    }
    d
}

/// Both projector sets of one element.
#[derive(Debug, Clone)]
pub struct ElementProjectors {
    pub geometry: LocalGeometry,
    pub scalar: ScalarLocalProjectors,
    pub vector: VectorLocalProjectors,
}

impl ElementProjectors {
    pub fn build(geometry: LocalGeometry) -> Result<Self, ProjectionError> {
        let scalar = scalar_projectors(&geometry)?;
        let vector = vector_projectors(&geometry)?;
        Ok(ElementProjectors {
            geometry,
            scalar,
            vector,
        })
    }
}

/// Projectors for every element of the mesh, in element order.
pub fn build_all(mesh: &PolygonalMesh) -> Result<Vec<ElementProjectors>, ProjectionError> {
    use rayon::prelude::*;
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| ElementProjectors::build(LocalGeometry::from_mesh(mesh, e)?))
        .collect()
}

/// Evaluate the coefficient vector `c` (over `basis`) at `p`.
pub fn eval_poly(basis: &ScaledMonomialBasis, c: &[f64], p: Vec2) -> f64 {
    basis.eval(p).iter().zip(c).map(|(m, c)| m * c).sum()
}

/// Apply a projector matrix to a local DOF vector.
pub fn apply(proj: &DMatrix<f64>, dofs: &[f64]) -> Vec<f64> {
    (proj * DVector::from_column_slice(dofs)).as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shapes() -> Vec<Vec<Vec2>> {
        let hex: Vec<Vec2> = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI / 3.0 * k as f64 + 0.1;
                Vec2::new(0.3 + 0.2 * t.cos(), 0.4 + 0.17 * t.sin())
            })
            .collect();
        vec![
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ],
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.5, 1.5),
                Vec2::new(0.0, 1.0),
            ],
            vec![Vec2::new(0.1, 0.1), Vec2::new(0.3, 0.12), Vec2::new(0.15, 0.27)],
            hex,
        ]
    }

    fn identity_err(m: &DMatrix<f64>) -> f64 {
        (m - DMatrix::identity(m.nrows(), m.ncols())).abs().max()
    }

    #[test]
    fn scalar_reproduction() {
        for pts in shapes() {
            let geo = LocalGeometry::from_polygon(pts).unwrap();
            let p = scalar_projectors(&geo).unwrap();
            assert!(identity_err(&(&p.pi_nabla * &p.dofs)) < 1e-11);
            assert!(identity_err(&(&p.pi0 * &p.dofs)) < 1e-11);
            // gradient of each monomial, expressed in P_1
            let b2 = geo.basis(2);
            for a in 0..6 {
                let mut c = vec![0.0; 6];
                c[a] = 1.0;
                let poly = crate::polybasis::PolyCoeffs::new(b2, c).unwrap();
                let (gx, gy) = poly.grad();
                for (k, g) in [gx, gy].iter().enumerate() {
                    let got = &p.pi0_grad[k] * p.dofs.column(a);
                    for gamma in 0..3 {
                        assert!((got[gamma] - g.coeffs[gamma]).abs() < 1e-11);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_scalar() {
        let geo = LocalGeometry::from_polygon(shapes()[1].clone()).unwrap();
        let p = scalar_projectors(&geo).unwrap();
        let ones = vec![1.0; geo.scalar_ndofs()];
        let pn = apply(&p.pi_nabla, &ones);
        let p0 = apply(&p.pi0, &ones);
        assert!((pn[0] - 1.0).abs() < 1e-13 && pn[1..].iter().all(|v| v.abs() < 1e-12));
        assert!((p0[0] - 1.0).abs() < 1e-13 && p0[1..].iter().all(|v| v.abs() < 1e-12));
        for k in 0..2 {
            assert!(apply(&p.pi0_grad[k], &ones).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn scalar_random_dofs_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let geo = LocalGeometry::from_polygon(shapes()[1].clone()).unwrap();
        let p = scalar_projectors(&geo).unwrap();
        let b2 = geo.basis(2);
        let nd = geo.scalar_ndofs();
        for _ in 0..5 {
            let s: Vec<f64> = (0..nd).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p0 = apply(&p.pi0, &s);
            let integral = geo.quad.integrate(|x| eval_poly(&b2, &p0, x));
            assert!((integral - geo.area * s[nd - 1]).abs() < 1e-12);
            // boundary mean of S - Pi^nabla S vanishes
            let pn = apply(&p.pi_nabla, &s);
            let n = geo.n();
            let mut mean = 0.0;
            let mut perim = 0.0;
            for i in 0..n {
                let e = geo.edge(i);
                let trace = [s[i], s[n + i], s[(i + 1) % n]];
                let poly = [
                    eval_poly(&b2, &pn, e.a),
                    eval_poly(&b2, &pn, e.midpoint),
                    eval_poly(&b2, &pn, e.b),
                ];
                let d: Vec<f64> = (0..3).map(|k| trace[k] - poly[k]).collect();
                mean += e.length / 6.0 * (d[0] + 4.0 * d[1] + d[2]);
                perim += e.length;
            }
            assert!(mean.abs() < 1e-11 * perim);
            // enhancement: (S - Pi^nabla S, q) = 0 for |q| in 1..=2 holds for Pi^0
            let h2 = poly_mass_matrix(&b2, &geo.quad);
            let lhs = &h2 * DVector::from_vec(p0.clone());
            let rhs = &h2 * DVector::from_vec(pn.clone());
            for a in 1..6 {
                assert!((lhs[a] - rhs[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vector_reproduction() {
        for pts in shapes() {
            let geo = LocalGeometry::from_polygon(pts).unwrap();
            let p = vector_projectors(&geo).unwrap();
            assert!(identity_err(&(&p.pi_nabla * &p.dofs)) < 1e-11);
            assert!(identity_err(&(&p.pi0 * &p.dofs)) < 1e-11);
            let b2 = geo.basis(2);
            for col in 0..12 {
                let (c, a) = (col / 6, col % 6);
                let mut coeffs = vec![0.0; 6];
                coeffs[a] = 1.0;
                let (gx, gy) = crate::polybasis::PolyCoeffs::new(b2, coeffs).unwrap().grad();
                let xi = &p.xi0 * p.dofs.column(col);
                let div = &p.div_poly * p.dofs.column(col);
                for d in 0..2 {
                    let g = if d == 0 { &gx } else { &gy };
                    for blk_c in 0..2 {
                        let off = xi_block(blk_c, d);
                        for gamma in 0..3 {
                            let expect = if blk_c == c { g.coeffs[gamma] } else { 0.0 };
                            assert!((xi[off + gamma] - expect).abs() < 1e-11);
                        }
                    }
                }
                let dexp = if c == 0 { &gx } else { &gy };
                for gamma in 0..3 {
                    assert!((div[gamma] - dexp.coeffs[gamma]).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn rigid_rotation() {
        let geo = LocalGeometry::from_polygon(shapes()[0].clone()).unwrap();
        let p = vector_projectors(&geo).unwrap();
        // (-(y - y_E), x - x_E) / h = (-m_(0,1), m_(1,0))
        let mut coeffs = DVector::zeros(12);
        coeffs[2] = -1.0;
        coeffs[6 + 1] = 1.0;
        let dofs = &p.dofs * coeffs;
        let div = &p.div_poly * &dofs;
        assert!(div.abs().max() < 1e-13);
        let xi = &p.xi0 * &dofs;
        let h = geo.h;
        let expect = [(0, 1, -1.0 / h), (1, 0, 1.0 / h)];
        for c in 0..2 {
            for d in 0..2 {
                let off = xi_block(c, d);
                let e = expect
                    .iter()
                    .find(|t| t.0 == c && t.1 == d)
                    .map(|t| t.2)
                    .unwrap_or(0.0);
                assert!((xi[off] - e).abs() < 1e-12);
                assert!(xi[off + 1].abs() < 1e-12 && xi[off + 2].abs() < 1e-12);
            }
        }
    }

    /// Quadratic trace of component `c` on local edge `i`, evaluated at `t`.
    fn trace(dofs: &[f64], n: usize, c: usize, i: usize, t: f64) -> f64 {
        let va = dofs[2 * n * c + i];
        let vm = dofs[2 * n * c + n + i];
        let vb = dofs[2 * n * c + (i + 1) % n];
        va * 2.0 * (t - 0.5) * (t - 1.0) - vm * 4.0 * t * (t - 1.0) + vb * 2.0 * t * (t - 0.5)
    }

    #[test]
    fn xi_orthogonality_on_hexagon() {
        // For random DOFs and random q in [P_1]^{2x2}:
        // int Xi grad v : q = -int v . div q + int_{dE} (q n) . v
        // with int v recovered as -int div v (x - x_E) + int_{dE} (v.n)(x - x_E),
        // all boundary integrals by an independent 6-point Gauss rule.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geo = LocalGeometry::from_polygon(shapes()[3].clone()).unwrap();
        let p = vector_projectors(&geo).unwrap();
        let n = geo.n();
        let nd = geo.vector_ndofs();
        let b1 = geo.basis(1);
        let fine = geo.rule(12).unwrap();
        let (gt, gw) = gauss_legendre(6);
        let boundary = |v: &[f64], f: &dyn Fn(Vec2, Vec2, [f64; 2]) -> f64| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                let e = geo.edge(i);
                for (t, w) in gt.iter().zip(&gw) {
                    let x = e.a + (e.b - e.a) * *t;
                    let val = [trace(v, n, 0, i, *t), trace(v, n, 1, i, *t)];
                    s += w * e.length * f(x, e.normal, val);
                }
            }
            s
        };
        for _ in 0..5 {
            let v: Vec<f64> = (0..nd).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let div = apply(&p.div_poly, &v);
            let mean: Vec<f64> = (0..2)
                .map(|c| {
                    let xc = geo.centroid[c];
                    -fine.integrate(|x| eval_poly(&b1, &div, x) * (x[c] - xc))
                        + boundary(&v, &|x, nrm, val| (val[0] * nrm.x + val[1] * nrm.y) * (x[c] - xc))
                })
                .collect();
            let xi = apply(&p.xi0, &v);
            let lhs = fine.integrate(|x| {
                let mut s = 0.0;
                for blk in 0..4 {
                    s += eval_poly(&b1, &xi[3 * blk..3 * blk + 3], x)
                        * eval_poly(&b1, &q[3 * blk..3 * blk + 3], x);
                }
                s
            });
            // div q row c = sum_d d/dx_d q_cd, constant
            let divq: Vec<f64> = (0..2)
                .map(|c| (0..2).map(|d| q[xi_block(c, d) + 1 + d] / geo.h).sum())
                .collect();
            let volume = -(divq[0] * mean[0] + divq[1] * mean[1]);
            let bnd = boundary(&v, &|x, nrm, val| {
                let mut s = 0.0;
                for c in 0..2 {
                    for d in 0..2 {
                        let off = xi_block(c, d);
                        s += eval_poly(&b1, &q[off..off + 3], x) * nrm[d] * val[c];
                    }
                }
                s
            });
            assert!((lhs - (volume + bnd)).abs() < 1e-11, "{lhs} vs {}", volume + bnd);
        }
    }

    #[test]
    fn vector_l2_projection_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for pts in shapes() {
            let geo = LocalGeometry::from_polygon(pts).unwrap();
            let p = vector_projectors(&geo).unwrap();
            let nd = geo.vector_ndofs();
            let n = geo.n();
            let b2 = geo.basis(2);
            let b3 = geo.basis(3);
            let fine = geo.rule(12).unwrap();
            let (gt, gw) = gauss_legendre(6);
            let v: Vec<f64> = (0..nd).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p0 = apply(&p.pi0, &v);
            let pn = apply(&p.pi_nabla, &v);
            let div = apply(&p.div_poly, &v);
            let eval_vec = |c: &[f64], x: Vec2| [eval_poly(&b2, &c[..6], x), eval_poly(&b2, &c[6..], x)];
            // (Pi^0 v, grad m_a) = -(div v, m_a) + int (v.n) m_a
            for a in 1..10 {
                let lhs = fine.integrate(|x| {
                    let g = b3.eval_grad(x)[a];
                    let pv = eval_vec(&p0, x);
                    pv[0] * g[0] + pv[1] * g[1]
                });
                let mut rhs = -fine.integrate(|x| eval_poly(&geo.basis(1), &div, x) * b3.eval(x)[a]);
                for i in 0..n {
                    let e = geo.edge(i);
                    for (t, w) in gt.iter().zip(&gw) {
                        let x = e.a + (e.b - e.a) * *t;
                        let vn = trace(&v, n, 0, i, *t) * e.normal.x + trace(&v, n, 1, i, *t) * e.normal.y;
                        rhs += w * e.length * vn * b3.eval(x)[a];
                    }
                }
                assert!((lhs - rhs).abs() < 1e-10, "grad moment {a}: {lhs} vs {rhs}");
            }
            // (Pi^0 v - Pi^nabla v, m_perp m_b) = 0
            for b in 0..3 {
                let r = fine.integrate(|x| {
                    let m = b2.eval(x);
                    let pv = eval_vec(&p0, x);
                    let nv = eval_vec(&pn, x);
                    (pv[0] - nv[0]) * m[2] * m[b] - (pv[1] - nv[1]) * m[1] * m[b]
                });
                assert!(r.abs() < 1e-11);
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn reproduction_on_random_convex_polygons(
            angles in proptest::collection::vec(0.0f64..1.0, 3..9),
            stretch in 0.3f64..3.0,
            scale in 1e-3f64..10.0,
            shift in (-5.0f64..5.0, -5.0f64..5.0),
        ) {
            let mut t: Vec<f64> = angles
                .iter()
                .scan(0.0, |acc, a| {
                    *acc += 0.2 + a;
                    Some(*acc)
                })
                .collect();
            let total = t.last().copied().unwrap() + 0.2;
            t.iter_mut().for_each(|x| *x *= std::f64::consts::TAU / total);
            let pts: Vec<Vec2> = t
                .iter()
                .map(|a| Vec2::new(shift.0 + scale * stretch * a.cos(), shift.1 + scale * a.sin()))
                .collect();
            let geo = LocalGeometry::from_polygon(pts).unwrap();
            let s = scalar_projectors(&geo).unwrap();
            let v = vector_projectors(&geo).unwrap();
            proptest::prop_assert!(identity_err(&(&s.pi_nabla * &s.dofs)) < 1e-10);
            proptest::prop_assert!(identity_err(&(&s.pi0 * &s.dofs)) < 1e-10);
            proptest::prop_assert!(identity_err(&(&v.pi_nabla * &v.dofs)) < 1e-10);
            proptest::prop_assert!(identity_err(&(&v.pi0 * &v.dofs)) < 1e-10);
        }
    }
}

//! Scaled monomial bases and quadrature on polygons and edges.
//!
//! Monomials are ordered graded-lexicographically: degree by degree, and
//! within a degree by increasing power of the second coordinate, i.e.
//! `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), (3,0), ...`. Every matrix in the
//! crate that is indexed by monomials uses this order.

use nalgebra::{DMatrix, Vector2};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("operands live on different elements (centers {0:?} vs {1:?})")]
    MismatchedBasis([f64; 2], [f64; 2]),
    #[error(
        "polygon is not star-shaped with respect to its centroid (sub-triangle {triangle} has area {area:e})"
    )]
    NotStarShaped { triangle: usize, area: f64 },
    #[error("degenerate edge of length {0:e}")]
    DegenerateEdge(f64),
    #[error("coefficient vector has length {got}, basis dimension is {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    pub alpha1: usize,
    pub alpha2: usize,
}

impl MultiIndex {
    pub fn new(alpha1: usize, alpha2: usize) -> Self {
        MultiIndex { alpha1, alpha2 }
    }

    pub fn degree(&self) -> usize {
        self.alpha1 + self.alpha2
    }

    /// Position of this index in the graded-lexicographic ordering.
    pub fn position(&self) -> usize {
        let d = self.degree();
        d * (d + 1) / 2 + self.alpha2
    }
}

/// Number of monomials of degree at most `n` in two variables.
pub fn poly_dim(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// All multi-indices with `|alpha| <= n`, graded lexicographic.
pub fn multi_indices(n: usize) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(poly_dim(n));
    for d in 0..=n {
        for a2 in 0..=d {
            out.push(MultiIndex::new(d - a2, a2));
        }
    }
    out
}

/// The monomials `m_alpha(x) = ((x - x_E) / h_E)^alpha` for `|alpha| <= degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMonomialBasis {
    pub center: Vec2,
    pub scale: f64,
    pub degree: usize,
}

impl ScaledMonomialBasis {
    pub fn new(center: Vec2, scale: f64, degree: usize) -> Self {
        ScaledMonomialBasis {
            center,
            scale,
            degree,
        }
    }

    pub fn dim(&self) -> usize {
        poly_dim(self.degree)
    }

    pub fn with_degree(&self, degree: usize) -> Self {
        ScaledMonomialBasis { degree, ..*self }
    }

    pub fn same_element(&self, other: &Self) -> bool {
        self.center == other.center && self.scale == other.scale
    }

    fn local(&self, p: Vec2) -> (f64, f64) {
        (
            (p.x - self.center.x) / self.scale,
            (p.y - self.center.y) / self.scale,
        )
    }

    /// Values of every basis member at `p`.
    pub fn eval(&self, p: Vec2) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(p, &mut out);
        out
    }

    pub fn eval_into(&self, p: Vec2, out: &mut [f64]) {
        let (s, t) = self.local(p);
        let n = self.degree;
        let mut ps = [1.0; 16];
        let mut pt = [1.0; 16];
        for i in 1..=n {
            ps[i] = ps[i - 1] * s;
            pt[i] = pt[i - 1] * t;
        }
        let mut k = 0;
        for d in 0..=n {
            for a2 in 0..=d {
                out[k] = ps[d - a2] * pt[a2];
                k += 1;
            }
        }
    }

    /// Gradients of every basis member at `p`; the `1/h_E` factor is included.
    pub fn eval_grad(&self, p: Vec2) -> Vec<[f64; 2]> {
        let (s, t) = self.local(p);
        let n = self.degree;
        let mut ps = [1.0; 16];
        let mut pt = [1.0; 16];
        for i in 1..=n {
            ps[i] = ps[i - 1] * s;
            pt[i] = pt[i - 1] * t;
        }
        let h = self.scale;
        let mut out = Vec::with_capacity(self.dim());
        for d in 0..=n {
            for a2 in 0..=d {
                let a1 = d - a2;
                let dx = if a1 > 0 {
                    a1 as f64 * ps[a1 - 1] * pt[a2] / h
                } else {
                    0.0
                };
                let dy = if a2 > 0 {
                    a2 as f64 * ps[a1] * pt[a2 - 1] / h
                } else {
                    0.0
                };
                out.push([dx, dy]);
            }
        }
        out
    }
}

/// A polynomial stored as coefficients over a scaled monomial basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs {
    pub basis: ScaledMonomialBasis,
    pub coeffs: Vec<f64>,
}

impl PolyCoeffs {
    pub fn new(basis: ScaledMonomialBasis, coeffs: Vec<f64>) -> Result<Self, PolyError> {
        if coeffs.len() != basis.dim() {
            return Err(PolyError::LengthMismatch {
                expected: basis.dim(),
                got: coeffs.len(),
            });
        }
        Ok(PolyCoeffs { basis, coeffs })
    }

    pub fn zero(basis: ScaledMonomialBasis) -> Self {
        PolyCoeffs {
            basis,
            coeffs: vec![0.0; basis.dim()],
        }
    }

    /// The single monomial `m_alpha`.
    pub fn monomial(basis: ScaledMonomialBasis, alpha: MultiIndex) -> Self {
        let mut p = Self::zero(basis.with_degree(basis.degree.max(alpha.degree())));
        p.coeffs[alpha.position()] = 1.0;
        p
    }

    pub fn eval(&self, p: Vec2) -> f64 {
        self.basis
            .eval(p)
            .iter()
            .zip(&self.coeffs)
            .map(|(m, c)| m * c)
            .sum()
    }

    /// Partial derivatives as polynomials one degree lower.
    pub fn grad(&self) -> (PolyCoeffs, PolyCoeffs) {
        let n = self.basis.degree;
        let lower = self.basis.with_degree(n.saturating_sub(1));
        let mut gx = PolyCoeffs::zero(lower);
        let mut gy = PolyCoeffs::zero(lower);
        let h = self.basis.scale;
        for (k, alpha) in multi_indices(n).into_iter().enumerate() {
            let c = self.coeffs[k];
            if c == 0.0 {
                continue;
            }
            if alpha.alpha1 > 0 {
                let j = MultiIndex::new(alpha.alpha1 - 1, alpha.alpha2).position();
                gx.coeffs[j] += c * alpha.alpha1 as f64 / h;
            }
            if alpha.alpha2 > 0 {
                let j = MultiIndex::new(alpha.alpha1, alpha.alpha2 - 1).position();
                gy.coeffs[j] += c * alpha.alpha2 as f64 / h;
            }
        }
        (gx, gy)
    }

    pub fn multiply(&self, other: &PolyCoeffs) -> Result<PolyCoeffs, PolyError> {
        self.check_same(other)?;
        let ia = multi_indices(self.basis.degree);
        let ib = multi_indices(other.basis.degree);
        let mut out = PolyCoeffs::zero(self.basis.with_degree(self.basis.degree + other.basis.degree));
        for (a, ca) in ia.iter().zip(&self.coeffs) {
            for (b, cb) in ib.iter().zip(&other.coeffs) {
                let k = MultiIndex::new(a.alpha1 + b.alpha1, a.alpha2 + b.alpha2).position();
                out.coeffs[k] += ca * cb;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &PolyCoeffs) -> Result<PolyCoeffs, PolyError> {
        self.check_same(other)?;
        let deg = self.basis.degree.max(other.basis.degree);
        let mut out = PolyCoeffs::zero(self.basis.with_degree(deg));
        for (k, c) in self.coeffs.iter().enumerate() {
            out.coeffs[k] += c;
        }
        for (k, c) in other.coeffs.iter().enumerate() {
            out.coeffs[k] += c;
        }
        Ok(out)
    }

    fn check_same(&self, other: &PolyCoeffs) -> Result<(), PolyError> {
        if !self.basis.same_element(&other.basis) {
            return Err(PolyError::MismatchedBasis(
                [self.basis.center.x, self.basis.center.y],
                [other.basis.center.x, other.basis.center.y],
            ));
        }
        Ok(())
    }
}

/// Divergence of the vector polynomial `(px, py)`.
pub fn divergence(px: &PolyCoeffs, py: &PolyCoeffs) -> Result<PolyCoeffs, PolyError> {
    px.check_same(py)?;
    let (dx, _) = px.grad();
    let (_, dy) = py.grad();
    dx.add(&dy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn integrate(&self, f: impl Fn(Vec2) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Collapsed-coordinate Gauss rule on the triangle `(a, b, c)`, exact for
/// polynomials up to `degree`. Weights carry the signed area; callers check
/// orientation.
pub fn triangle_rule(a: Vec2, b: Vec2, c: Vec2, degree: usize) -> QuadratureRule {
    let n = (degree + 2).div_ceil(2).max(1);
    let (x, w) = gauss_legendre(n);
    let jac = (b - a).perp(&(c - a));
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (xi, wi) in x.iter().zip(&w) {
        for (eta, wj) in x.iter().zip(&w) {
            let s = *xi;
            let t = eta * (1.0 - s);
            points.push(a + (b - a) * s + (c - a) * t);
            weights.push(wi * wj * (1.0 - s) * jac);
        }
    }
    QuadratureRule {
        points,
        weights,
        exactness_degree: degree,
    }
}

/// Fan sub-triangulation from `center` with a Gauss rule on each triangle.
pub fn polygon_quadrature(
    vertices: &[Vec2],
    center: Vec2,
    degree: usize,
) -> Result<QuadratureRule, PolyError> {
    let nv = vertices.len();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let scale: f64 = vertices
        .iter()
        .map(|v| (v - center).norm_squared())
        .fold(0.0, f64::max);
    for i in 0..nv {
        let a = vertices[i];
        let b = vertices[(i + 1) % nv];
        let area2 = (a - center).perp(&(b - center));
        if area2 <= 1e-14 * scale {
            return Err(PolyError::NotStarShaped {
                triangle: i,
                area: 0.5 * area2,
            });
        }
        let rule = triangle_rule(center, a, b, degree);
        points.extend(rule.points);
        weights.extend(rule.weights);
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness_degree: degree,
    })
}

/// Gauss-Legendre rule mapped onto the segment `a -> b`.
pub fn edge_quadrature(a: Vec2, b: Vec2, n_points: usize) -> Result<QuadratureRule, PolyError> {
    let len = (b - a).norm();
    if len <= f64::EPSILON * (a.norm() + b.norm()).max(1.0) {
        return Err(PolyError::DegenerateEdge(len));
    }
    let (x, w) = gauss_legendre(n_points);
    Ok(QuadratureRule {
        points: x.iter().map(|t| a + (b - a) * *t).collect(),
        weights: w.iter().map(|wi| wi * len).collect(),
        exactness_degree: 2 * n_points - 1,
    })
}

/// `H_{ab} = int_E m_a m_b` for the two bases (possibly of different degree).
pub fn mixed_mass_matrix(
    left: &ScaledMonomialBasis,
    right: &ScaledMonomialBasis,
    rule: &QuadratureRule,
) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(left.dim(), right.dim());
    let mut lv = vec![0.0; left.dim()];
    let mut rv = vec![0.0; right.dim()];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        left.eval_into(*p, &mut lv);
        right.eval_into(*p, &mut rv);
        for i in 0..lv.len() {
            let wi = w * lv[i];
            for j in 0..rv.len() {
                h[(i, j)] += wi * rv[j];
            }
        }
    }
    h
}

pub fn poly_mass_matrix(basis: &ScaledMonomialBasis, rule: &QuadratureRule) -> DMatrix<f64> {
    let mut h = mixed_mass_matrix(basis, basis, rule);
    // symmetrize away round-off
    let ht = h.transpose();
    h = (h + ht) * 0.5;
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Vec<Vec2> {
        vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ]
    }

    fn pentagon() -> Vec<Vec2> {
        vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.5, 1.5),
            Vec2::new(0.0, 1.0),
        ]
    }

    fn centroid(poly: &[Vec2]) -> Vec2 {
        let mut a = 0.0;
        let mut c = Vec2::zeros();
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let cr = p.perp(&q);
            a += cr;
            c += (p + q) * cr;
        }
        c / (3.0 * a)
    }

    #[test]
    fn gauss_legendre_weights_and_cubic() {
        let (x, w) = gauss_legendre(1);
        assert!((x[0] - 0.5).abs() < 1e-15 && (w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(2);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(3)).sum();
        assert!((s - 0.25).abs() < 1e-15);
        for n in 1..12 {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn edge_rule_midpoint_and_exactness() {
        let r = edge_quadrature(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 1).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!((r.points[0].x - 0.5).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
        let r = edge_quadrature(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 2).unwrap();
        assert!((r.integrate(|p| p.x.powi(3)) - 0.25).abs() < 1e-15);
        assert_eq!(r.exactness_degree, 3);
        assert!(edge_quadrature(Vec2::new(0.3, 0.3), Vec2::new(0.3, 0.3), 2).is_err());
    }

    #[test]
    fn unit_square_integrals() {
        let sq = unit_square();
        let c = Vec2::new(0.5, 0.5);
        let r0 = polygon_quadrature(&sq, c, 0).unwrap();
        assert!((r0.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
        let r2 = polygon_quadrature(&sq, c, 2).unwrap();
        assert!((r2.integrate(|p| p.x * p.y) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn pentagon_x_squared_against_dense_rule() {
        let pent = pentagon();
        let c = centroid(&pent);
        let r = polygon_quadrature(&pent, c, 4).unwrap();
        let oracle = polygon_quadrature(&pent, c, 20).unwrap();
        let val = r.integrate(|p| p.x * p.x);
        let reference = oracle.integrate(|p| p.x * p.x);
        assert!((val - reference).abs() < 1e-12);
        // area 1.25
        assert!((r.total_weight() - 1.25).abs() < 1e-13);
    }

    #[test]
    fn rejects_non_star_shaped() {
        // L-shaped polygon, centroid outside the visible kernel of one corner
        let poly = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 0.1),
            Vec2::new(0.1, 0.1),
            Vec2::new(0.1, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        let c = centroid(&poly);
        assert!(matches!(
            polygon_quadrature(&poly, c, 2),
            Err(PolyError::NotStarShaped { .. })
        ));
    }

    #[test]
    fn monomial_ops() {
        let b = ScaledMonomialBasis::new(Vec2::new(0.2, 0.3), 0.5, 2);
        let mx = PolyCoeffs::monomial(b.with_degree(1), MultiIndex::new(1, 0));
        let my = PolyCoeffs::monomial(b.with_degree(1), MultiIndex::new(0, 1));
        let (gx, gy) = mx.grad();
        assert_eq!(gx.basis.degree, 0);
        assert!((gx.coeffs[0] - 2.0).abs() < 1e-15);
        assert_eq!(gy.coeffs[0], 0.0);
        let prod = mx.multiply(&my).unwrap();
        let mut expect = vec![0.0; 6];
        expect[MultiIndex::new(1, 1).position()] = 1.0;
        assert_eq!(prod.coeffs, expect);
        let vals = b.eval(b.center);
        assert_eq!(vals, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let other = ScaledMonomialBasis::new(Vec2::new(0.0, 0.0), 0.5, 1);
        let q = PolyCoeffs::monomial(other, MultiIndex::new(1, 0));
        assert!(matches!(mx.multiply(&q), Err(PolyError::MismatchedBasis(..))));
        assert!(divergence(&mx, &q).is_err());
    }

    #[test]
    fn divergence_of_rotation_is_zero() {
        let b = ScaledMonomialBasis::new(Vec2::new(0.0, 0.0), 1.0, 1);
        // (-y, x)
        let px = PolyCoeffs::new(b, vec![0.0, 0.0, -1.0]).unwrap();
        let py = PolyCoeffs::new(b, vec![0.0, 1.0, 0.0]).unwrap();
        let d = divergence(&px, &py).unwrap();
        assert!(d.coeffs.iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn mass_matrix_cases() {
        let sq = unit_square();
        let c = Vec2::new(0.5, 0.5);
        let r = polygon_quadrature(&sq, c, 6).unwrap();
        let b0 = ScaledMonomialBasis::new(c, 2f64.sqrt(), 0);
        let h0 = poly_mass_matrix(&b0, &r);
        assert!((h0[(0, 0)] - 1.0).abs() < 1e-14);
        let b1 = b0.with_degree(1);
        let h1 = poly_mass_matrix(&b1, &r);
        assert!(h1[(1, 2)].abs() < 1e-15);

        let pent = pentagon();
        let pc = centroid(&pent);
        let b2 = ScaledMonomialBasis::new(pc, 1.5f64.hypot(0.5).max(2f64.sqrt()), 2);
        let r6 = polygon_quadrature(&pent, pc, 6).unwrap();
        let oracle = polygon_quadrature(&pent, pc, 20).unwrap();
        let h = poly_mass_matrix(&b2, &r6);
        for i in 0..6 {
            for j in 0..6 {
                let reference = oracle.integrate(|p| {
                    let v = b2.eval(p);
                    v[i] * v[j]
                });
                assert!((h[(i, j)] - reference).abs() < 1e-12);
            }
        }
        assert!(h.clone().symmetric_eigenvalues().min() > 0.0);
    }
}

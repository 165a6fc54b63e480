//! Element matrices of the discrete forms.
//!
//! Every form is evaluated on the element's fan quadrature from tabulated
//! values of the projected basis functions; frozen fields (previous Picard
//! iterates) enter only through their local DOF vectors.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::polybasis::Vec2;
use crate::projection::{xi_block, ElementProjectors};

#[derive(Debug, thiserror::Error)]
pub enum FormsError {
    #[error("Forchheimer exponent r = {0} outside [3, 4]")]
    Exponent(f64),
    #[error("coefficient bounds must satisfy 0 < lower <= upper, got [{lower}, {upper}]")]
    Bounds { lower: f64, upper: f64 },
}

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A temperature-dependent coefficient with its derivative and the declared
/// bounds/Lipschitz constant (metadata only; not enforced pointwise).
#[derive(Clone)]
pub struct CoefficientLaw {
    value: Scalar,
    derivative: Scalar,
    pub lower: f64,
    pub upper: f64,
    pub lipschitz: f64,
}

impl CoefficientLaw {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lower: f64,
        upper: f64,
        lipschitz: f64,
    ) -> Result<Self, FormsError> {
        if !(lower > 0.0 && lower <= upper) {
            return Err(FormsError::Bounds { lower, upper });
        }
        Ok(CoefficientLaw {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            lower,
            upper,
            lipschitz,
        })
    }

    pub fn constant(c: f64) -> Result<Self, FormsError> {
        Self::new(move |_| c, |_| 0.0, c, c, 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.value)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        (self.derivative)(t)
    }

    pub fn is_constant(&self) -> bool {
        self.lipschitz == 0.0
    }
}

impl std::fmt::Debug for CoefficientLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientLaw")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientModel {
    pub nu: CoefficientLaw,
    pub kappa: CoefficientLaw,
    pub r: f64,
}

impl CoefficientModel {
    pub fn new(nu: CoefficientLaw, kappa: CoefficientLaw, r: f64) -> Result<Self, FormsError> {
        if !(3.0..=4.0).contains(&r) {
            return Err(FormsError::Exponent(r));
        }
        Ok(CoefficientModel { nu, kappa, r })
    }
}

/// Projected basis functions tabulated at the quadrature points of one
/// element. Rows are quadrature points, columns local DOFs.
#[derive(Debug, Clone)]
pub struct ElementTables {
    pub weights: DVector<f64>,
    pub points: Vec<Vec2>,
    /// `Pi^0_2` of the velocity basis, per component.
    pub vel: [DMatrix<f64>; 2],
    /// `Xi^0_1` of the velocity gradient, indexed `[c][d]`.
    pub grad_vel: [[DMatrix<f64>; 2]; 2],
    /// `Pi^0_2` of the temperature basis.
    pub temp: DMatrix<f64>,
    /// `Pi^0_1 grad` of the temperature basis, per direction.
    pub grad_temp: [DMatrix<f64>; 2],
    /// `I - D Pi^0_2` for velocity and temperature.
    pub vel_complement: DMatrix<f64>,
    pub temp_complement: DMatrix<f64>,
}

impl ElementTables {
    pub fn new(proj: &ElementProjectors) -> Self {
        let geo = &proj.geometry;
        let rule = &geo.quad;
        let b2 = geo.basis(2);
        let nq = rule.len();
        let m2 = DMatrix::from_fn(nq, 6, |q, a| b2.eval(rule.points[q])[a]);
        let m1 = m2.columns(0, 3).into_owned();
        let v = &proj.vector;
        let s = &proj.scalar;
        let block = |m: &DMatrix<f64>, p: &DMatrix<f64>, off: usize, len: usize| m * p.rows(off, len);
        let complement = |d: &DMatrix<f64>, p: &DMatrix<f64>| DMatrix::identity(d.nrows(), d.nrows()) - d * p;
        ElementTables {
            weights: DVector::from_column_slice(&rule.weights),
            points: rule.points.clone(),
            vel: [block(&m2, &v.pi0, 0, 6), block(&m2, &v.pi0, 6, 6)],
            grad_vel: [0, 1].map(|c| [0, 1].map(|d| block(&m1, &v.xi0, xi_block(c, d), 3))),
            temp: &m2 * &s.pi0,
            grad_temp: [&m1 * &s.pi0_grad[0], &m1 * &s.pi0_grad[1]],
            vel_complement: complement(&v.dofs, &v.pi0),
            temp_complement: complement(&s.dofs, &s.pi0),
        }
    }

    pub fn n_velocity(&self) -> usize {
        self.vel[0].ncols()
    }

    pub fn n_temperature(&self) -> usize {
        self.temp.ncols()
    }

    /// `Pi^0_2 T` at the quadrature points.
    pub fn temperature_at_points(&self, t_local: &[f64]) -> DVector<f64> {
        &self.temp * DVector::from_column_slice(t_local)
    }

    pub fn velocity_at_points(&self, u_local: &[f64]) -> [DVector<f64>; 2] {
        let u = DVector::from_column_slice(u_local);
        [&self.vel[0] * &u, &self.vel[1] * &u]
    }
}

/// `A^T diag(w) B`.
fn weighted(a: &DMatrix<f64>, w: &DVector<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut wb = b.clone();
    for (mut row, wi) in wb.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    a.transpose() * wb
}

fn skew(c: DMatrix<f64>) -> DMatrix<f64> {
    (&c - c.transpose()) * 0.5
}

pub fn local_a_h(tab: &ElementTables, t_local: &[f64], coeffs: &CoefficientModel) -> DMatrix<f64> {
    let t = tab.temperature_at_points(t_local);
    let w = tab.weights.zip_map(&t, |w, t| w * coeffs.nu.eval(t));
    let nd = tab.n_velocity();
    let mut m = DMatrix::zeros(nd, nd);
    for c in 0..2 {
        for d in 0..2 {
            m += weighted(&tab.grad_vel[c][d], &w, &tab.grad_vel[c][d]);
        }
    }
    let mean = t_local[t_local.len() - 1];
    m + tab.vel_complement.tr_mul(&tab.vel_complement) * coeffs.nu.eval(mean)
}

pub fn local_frak_a_h(tab: &ElementTables, t_local: &[f64], coeffs: &CoefficientModel) -> DMatrix<f64> {
    let t = tab.temperature_at_points(t_local);
    let w = tab.weights.zip_map(&t, |w, t| w * coeffs.kappa.eval(t));
    let mut m = weighted(&tab.grad_temp[0], &w, &tab.grad_temp[0])
        + weighted(&tab.grad_temp[1], &w, &tab.grad_temp[1]);
    let mean = t_local[t_local.len() - 1];
    m += tab.temp_complement.tr_mul(&tab.temp_complement) * coeffs.kappa.eval(mean);
    m
}

/// `1/2 (C - C^T)`, `C_ij = int (Xi grad phi_j Pi^0 z) . Pi^0 phi_i`.
pub fn local_c_n_skew(tab: &ElementTables, z_local: &[f64]) -> DMatrix<f64> {
    let z = tab.velocity_at_points(z_local);
    let nd = tab.n_velocity();
    let mut c = DMatrix::zeros(nd, nd);
    for comp in 0..2 {
        let mut adv = DMatrix::zeros(tab.weights.len(), nd);
        for d in 0..2 {
            let mut g = tab.grad_vel[comp][d].clone();
            for (mut row, zd) in g.row_iter_mut().zip(z[d].iter()) {
                row *= *zd;
            }
            adv += g;
        }
        c += weighted(&tab.vel[comp], &tab.weights, &adv);
    }
    skew(c)
}

pub fn local_c_f(tab: &ElementTables, z_local: &[f64], r: f64) -> DMatrix<f64> {
    let z = tab.velocity_at_points(z_local);
    let w = DVector::from_fn(tab.weights.len(), |q, _| {
        let norm = z[0][q].hypot(z[1][q]);
        let weight = if norm == 0.0 { 0.0 } else { norm.powf(r - 2.0) };
        tab.weights[q] * weight
    });
    weighted(&tab.vel[0], &w, &tab.vel[0]) + weighted(&tab.vel[1], &w, &tab.vel[1])
}

/// `1/2 (C - C^T)`, `C_ij = int (Pi^0 u . Pi^0 grad S_j) Pi^0 S_i`.
pub fn local_frak_c_skew(tab: &ElementTables, u_local: &[f64]) -> DMatrix<f64> {
    let u = tab.velocity_at_points(u_local);
    let mut adv = DMatrix::zeros(tab.weights.len(), tab.n_temperature());
    for d in 0..2 {
        let mut g = tab.grad_temp[d].clone();
        for (mut row, ud) in g.row_iter_mut().zip(u[d].iter()) {
            row *= *ud;
        }
        adv += g;
    }
    skew(weighted(&tab.temp, &tab.weights, &adv))
}

pub fn local_d_h(tab: &ElementTables) -> DMatrix<f64> {
    weighted(&tab.vel[0], &tab.weights, &tab.vel[0]) + weighted(&tab.vel[1], &tab.weights, &tab.vel[1])
}

/// Pressure rows: `B_(beta, j) = -int m_beta div phi_j`.
pub fn local_b(proj: &ElementProjectors) -> DMatrix<f64> {
    let geo = &proj.geometry;
    let h1 = crate::polybasis::poly_mass_matrix(&geo.basis(1), &geo.quad);
    -(h1 * &proj.vector.div_poly)
}

/// Load vectors `(Pi^0 f, Pi^0 phi_j)` and `(Pi^0 g, Pi^0 S_j)`.
pub fn local_rhs(
    tab: &ElementTables,
    f: impl Fn(Vec2) -> Vec2,
    g: impl Fn(Vec2) -> f64,
) -> (DVector<f64>, DVector<f64>) {
    let nq = tab.weights.len();
    let fw: [DVector<f64>; 2] =
        [0, 1].map(|c| DVector::from_fn(nq, |q, _| tab.weights[q] * f(tab.points[q])[c]));
    let gw = DVector::from_fn(nq, |q, _| tab.weights[q] * g(tab.points[q]));
    (
        tab.vel[0].tr_mul(&fw[0]) + tab.vel[1].tr_mul(&fw[1]),
        tab.temp.tr_mul(&gw),
    )
}

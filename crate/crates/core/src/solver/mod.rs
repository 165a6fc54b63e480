//! Global assembly, saddle-point solves and the Picard driver.

pub mod sparse;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::forms::{
    local_a_h, local_b, local_c_f, local_c_n_skew, local_d_h, local_frak_a_h, local_frak_c_skew, local_rhs,
    CoefficientModel, ElementTables,
};
use crate::mesh::PolygonalMesh;
use crate::polybasis::Vec2;
use crate::projection::{build_all, ElementProjectors, ProjectionError};
use crate::space::{build_dof_maps, gather, DiscreteSolution, DofLayouts, PressureDofLayout};

pub use sparse::{BandLu, CsrMatrix, FactorError, TripletBuilder};

pub type VectorField = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("factorization failed: {0}")]
    Factor(#[from] FactorError),
    #[error("pressure-mean constraint is degenerate")]
    Constraint,
    #[error(
        "residual {residual:.3e} exceeds {bound:.3e} after refinement (condition estimate {condition_estimate:.3e})"
    )]
    Residual {
        residual: f64,
        bound: f64,
        condition_estimate: f64,
    },
    #[error("Picard iteration did not converge in {iterations} iterations (last increment {:.3e})", log.last().copied().unwrap_or(f64::NAN))]
    NotConverged { iterations: usize, log: Vec<f64> },
}

/// Coefficients, sources and Dirichlet data of one problem. Missing boundary
/// data means homogeneous conditions.
#[derive(Clone)]
pub struct Problem {
    pub coeffs: CoefficientModel,
    pub f: VectorField,
    pub g: ScalarField,
    pub u_boundary: Option<VectorField>,
    pub t_boundary: Option<ScalarField>,
}

/// Switches for the lower-order and nonlinear terms (all on by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub convection: bool,
    pub forchheimer: bool,
    pub reaction: bool,
    pub heat_convection: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Terms {
            convection: true,
            forchheimer: true,
            reaction: true,
            heat_convection: true,
        }
    }
}

impl Terms {
    /// Only the viscous/diffusive and pressure terms.
    pub fn stokes() -> Self {
        Terms {
            convection: false,
            forchheimer: false,
            reaction: false,
            heat_convection: false,
        }
    }
}

/// Everything about a mesh that does not depend on the iterate.
pub struct Discretization {
    pub layouts: DofLayouts,
    pub projectors: Vec<ElementProjectors>,
    pub tables: Vec<ElementTables>,
    b: Vec<DMatrix<f64>>,
    d: Vec<DMatrix<f64>>,
    entity_points: Vec<Vec2>,
    u_free: Vec<Option<usize>>,
    t_free: Vec<Option<usize>>,
    n_u_free: usize,
    n_t_free: usize,
}

fn free_numbering(mask: &[bool]) -> (Vec<Option<usize>>, usize) {
    let mut k = 0;
    let map = mask
        .iter()
        .map(|&b| {
            if b {
                None
            } else {
                k += 1;
                Some(k - 1)
            }
        })
        .collect();
    (map, k)
}

impl Discretization {
    pub fn new(mesh: &PolygonalMesh) -> Result<Self, SolverError> {
        let layouts = build_dof_maps(mesh);
        let projectors = build_all(mesh)?;
        let (tables, (b, d)): (Vec<_>, (Vec<_>, Vec<_>)) = projectors
            .par_iter()
            .map(|p| {
                let t = ElementTables::new(p);
                let d = local_d_h(&t);
                (t, (local_b(p), d))
            })
            .unzip();
        let mut entity_points = mesh.vertices.clone();
        entity_points.extend(
            mesh.edges
                .iter()
                .map(|e| (mesh.vertices[e.vertices[0]] + mesh.vertices[e.vertices[1]]) * 0.5),
        );
        let (u_free, n_u_free) = free_numbering(layouts.velocity.boundary_mask());
        let (t_free, n_t_free) = free_numbering(layouts.temperature.boundary_mask());
        Ok(Discretization {
            layouts,
            projectors,
            tables,
            b,
            d,
            entity_points,
            u_free,
            t_free,
            n_u_free,
            n_t_free,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.projectors.len()
    }

    pub fn free_velocity_dofs(&self) -> usize {
        self.n_u_free
    }

    pub fn free_temperature_dofs(&self) -> usize {
        self.n_t_free
    }

    /// Boundary values of the velocity (zero off the boundary).
    pub fn velocity_boundary_values(&self, field: Option<&VectorField>) -> Vec<f64> {
        let v = &self.layouts.velocity;
        let mut out = vec![0.0; v.ndofs()];
        if let Some(field) = field {
            for (e, &p) in self.entity_points.iter().enumerate() {
                for c in 0..2 {
                    let i = v.entity_dof(c, e);
                    if v.boundary_mask()[i] {
                        out[i] = field(p)[c];
                    }
                }
            }
        }
        out
    }

    pub fn temperature_boundary_values(&self, field: Option<&ScalarField>) -> Vec<f64> {
        let mask = self.layouts.temperature.boundary_mask();
        let mut out = vec![0.0; mask.len()];
        if let Some(field) = field {
            for (e, &p) in self.entity_points.iter().enumerate() {
                if mask[e] {
                    out[e] = field(p);
                }
            }
        }
        out
    }

    /// Free velocity, pressure and free temperature values, in that order.
    pub fn unknowns(&self, s: &DiscreteSolution) -> Vec<f64> {
        let free = |v: &[f64], map: &[Option<usize>]| -> Vec<f64> {
            v.iter().zip(map).filter_map(|(x, m)| m.map(|_| *x)).collect()
        };
        let mut out = free(&s.u, &self.u_free);
        out.extend_from_slice(&s.p);
        out.extend(free(&s.t, &self.t_free));
        out
    }
}

/// Element load vectors for fixed sources.
pub struct Loads {
    velocity: Vec<DVector<f64>>,
    temperature: Vec<DVector<f64>>,
}

impl Loads {
    pub fn new(disc: &Discretization, f: &VectorField, g: &ScalarField) -> Self {
        let (velocity, temperature) = disc
            .tables
            .par_iter()
            .map(|t| local_rhs(t, |x| f(x), |x| g(x)))
            .unzip();
        Loads {
            velocity,
            temperature,
        }
    }
}

/// Sparse system over the free unknowns, optionally bordered by one
/// constraint row/column `[K w; w^T 0]`.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub border: Option<Vec<f64>>,
    pub n_velocity: usize,
    pub n_pressure: usize,
}

/// Merge element matrices over the free DOFs, lifting known values to the
/// right-hand side.
fn scatter_element(
    t: &mut TripletBuilder,
    rhs: &mut [f64],
    ids: &[usize],
    free: &[Option<usize>],
    known: &[f64],
    m: &DMatrix<f64>,
    load: &DVector<f64>,
) {
    for (li, &gi) in ids.iter().enumerate() {
        let Some(fi) = free[gi] else { continue };
        rhs[fi] += load[li];
        for (lj, &gj) in ids.iter().enumerate() {
            let v = m[(li, lj)];
            match free[gj] {
                Some(fj) => t.push(fi, fj, v),
                None => rhs[fi] -= v * known[gj],
            }
        }
    }
}

pub fn assemble_flow_system(
    disc: &Discretization,
    coeffs: &CoefficientModel,
    loads: &Loads,
    t_prev: &[f64],
    u_prev: &[f64],
    u_known: &[f64],
    terms: Terms,
) -> GlobalSystem {
    let lay = &disc.layouts;
    let locals: Vec<DMatrix<f64>> = (0..disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let tab = &disc.tables[e];
            let t_loc = gather(t_prev, lay.temperature.element_dofs(e));
            let u_loc = gather(u_prev, lay.velocity.element_dofs(e));
            let mut m = local_a_h(tab, &t_loc, coeffs);
            if terms.convection {
                m += local_c_n_skew(tab, &u_loc);
            }
            if terms.forchheimer {
                m += local_c_f(tab, &u_loc, coeffs.r);
            }
            if terms.reaction {
                m += &disc.d[e];
            }
            m
        })
        .collect();

    let nu = disc.n_u_free;
    let np = lay.pressure.ndofs();
    let mut t = TripletBuilder::new(nu + np, nu + np);
    let mut rhs = vec![0.0; nu + np];
    for (e, m) in locals.iter().enumerate() {
        let ids = lay.velocity.element_dofs(e);
        scatter_element(
            &mut t,
            &mut rhs,
            ids,
            &disc.u_free,
            u_known,
            m,
            &loads.velocity[e],
        );
        for (beta, row) in lay.pressure.element_dofs(e).enumerate() {
            let pr = nu + row;
            for (lj, &gj) in ids.iter().enumerate() {
                let v = disc.b[e][(beta, lj)];
                match disc.u_free[gj] {
                    Some(fj) => {
                        t.push(pr, fj, v);
                        t.push(fj, pr, v);
                    }
                    None => rhs[pr] -= v * u_known[gj],
                }
            }
        }
    }
    let mut border = vec![0.0; nu];
    border.extend_from_slice(lay.pressure.mean_row());
    GlobalSystem {
        matrix: t.to_csr(),
        rhs,
        border: Some(border),
        n_velocity: nu,
        n_pressure: np,
    }
}

pub fn assemble_temperature_system(
    disc: &Discretization,
    coeffs: &CoefficientModel,
    loads: &Loads,
    t_prev: &[f64],
    u_new: &[f64],
    t_known: &[f64],
    terms: Terms,
) -> GlobalSystem {
    let lay = &disc.layouts;
    let locals: Vec<DMatrix<f64>> = (0..disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let tab = &disc.tables[e];
            let t_loc = gather(t_prev, lay.temperature.element_dofs(e));
            let mut m = local_frak_a_h(tab, &t_loc, coeffs);
            if terms.heat_convection {
                let u_loc = gather(u_new, lay.velocity.element_dofs(e));
                m += local_frak_c_skew(tab, &u_loc);
            }
            m
        })
        .collect();
    let n = disc.n_t_free;
    let mut t = TripletBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    for (e, m) in locals.iter().enumerate() {
        let ids = lay.temperature.element_dofs(e);
        scatter_element(
            &mut t,
            &mut rhs,
            ids,
            &disc.t_free,
            t_known,
            m,
            &loads.temperature[e],
        );
    }
    GlobalSystem {
        matrix: t.to_csr(),
        rhs,
        border: None,
        n_velocity: 0,
        n_pressure: 0,
    }
}

const RESIDUAL_FACTOR: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;

/// Factorization of `[K w; w^T 0]` through `K1 = K + s e_r e_r^T`, which is
/// nonsingular when `K` is singular only along a direction seen by `w`.
struct BorderedFactor {
    lu: BandLu,
    border: Option<Border>,
}

struct Border {
    w: Vec<f64>,
    r: usize,
    s: f64,
    x_e: Vec<f64>,
    x_w: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BorderedFactor {
    fn new(system: &GlobalSystem) -> Result<Self, SolverError> {
        let Some(w) = &system.border else {
            return Ok(BorderedFactor {
                lu: BandLu::factor(&system.matrix)?,
                border: None,
            });
        };
        let r = (0..w.len())
            .max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()))
            .filter(|&r| w[r] != 0.0)
            .ok_or(SolverError::Constraint)?;
        let s = system.matrix.norm_inf().max(1.0);
        let mut t = TripletBuilder::new(system.matrix.nrows, system.matrix.ncols);
        for (i, j, v) in system.matrix.iter() {
            t.push(i, j, v);
        }
        t.push(r, r, s);
        let lu = BandLu::factor(&t.to_csr())?;
        let mut e = vec![0.0; w.len()];
        e[r] = 1.0;
        let x_e = lu.solve(&e);
        let x_w = lu.solve(w);
        Ok(BorderedFactor {
            lu,
            border: Some(Border {
                w: w.clone(),
                r,
                s,
                x_e,
                x_w,
            }),
        })
    }

    /// Solve with right-hand side `(b, c)`; returns `x` followed by the
    /// multiplier when bordered.
    fn solve(&self, b: &[f64], c: f64) -> Result<Vec<f64>, SolverError> {
        let x_b = self.lu.solve(b);
        let Some(bd) = &self.border else { return Ok(x_b) };
        // x = x_b + nu x_e - lambda x_w with s x_r = nu and w.x = c
        let a11 = bd.s * bd.x_e[bd.r] - 1.0;
        let a12 = -bd.s * bd.x_w[bd.r];
        let a21 = dot(&bd.w, &bd.x_e);
        let a22 = -dot(&bd.w, &bd.x_w);
        let (r1, r2) = (-bd.s * x_b[bd.r], c - dot(&bd.w, &x_b));
        let det = a11 * a22 - a12 * a21;
        if det == 0.0 || !det.is_finite() {
            return Err(SolverError::Constraint);
        }
        let nu = (r1 * a22 - a12 * r2) / det;
        let lambda = (a11 * r2 - a21 * r1) / det;
        let mut x: Vec<f64> = (0..x_b.len())
            .map(|i| x_b[i] + nu * bd.x_e[i] - lambda * bd.x_w[i])
            .collect();
        x.push(lambda);
        Ok(x)
    }
}

/// Residual `(b - K x - w lambda, c - w.x)` of the (bordered) system.
fn residual(system: &GlobalSystem, x: &[f64]) -> (Vec<f64>, f64) {
    let n = system.matrix.nrows;
    let kx = system.matrix.mul_vec(&x[..n]);
    let mut r: Vec<f64> = system.rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
    let mut rc = 0.0;
    if let Some(w) = &system.border {
        let lambda = x[n];
        for (ri, wi) in r.iter_mut().zip(w) {
            *ri -= wi * lambda;
        }
        rc = -dot(w, &x[..n]);
    }
    (r, rc)
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Sparse direct solve with residual verification
/// `||Ax - b|| <= 1e-10 (||A|| ||x|| + ||b||)` (infinity norms). Iterative
/// refinement continues while it keeps reducing the residual.
pub fn solve_linear(system: &GlobalSystem) -> Result<Vec<f64>, SolverError> {
    let factor = BorderedFactor::new(system)?;
    let mut x = factor.solve(&system.rhs, 0.0)?;
    let a_norm = system.matrix.norm_inf() + system.border.as_ref().map_or(0.0, |w| norm_inf(w));
    let b_norm = norm_inf(&system.rhs);
    let (mut r, mut rc) = residual(system, &x);
    let mut res = norm_inf(&r).max(rc.abs());
    for _ in 0..REFINEMENT_STEPS {
        let dx = factor.solve(&r, rc)?;
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let (r_new, rc_new) = residual(system, &candidate);
        let res_new = norm_inf(&r_new).max(rc_new.abs());
        if res_new >= 0.5 * res {
            if res_new < res {
                x = candidate;
                res = res_new;
            }
            break;
        }
        (x, r, rc, res) = (candidate, r_new, rc_new, res_new);
    }
    let bound = RESIDUAL_FACTOR * (a_norm * norm_inf(&x) + b_norm);
    if res <= bound {
        Ok(x)
    } else {
        Err(SolverError::Residual {
            residual: res,
            bound,
            condition_estimate: factor.lu.condition_estimate(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub terms: Terms,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-6,
            max_iter: 100,
            terms: Terms::default(),
        }
    }
}

/// Euclidean norm of the increment of the concatenated unknowns, one entry
/// per iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PicardLog {
    pub increments: Vec<f64>,
}

impl PicardLog {
    pub fn iterations(&self) -> usize {
        self.increments.len()
    }
}

fn expand(free: &[Option<usize>], x: &[f64], known: &[f64]) -> Vec<f64> {
    free.iter()
        .zip(known)
        .map(|(m, k)| m.map_or(*k, |i| x[i]))
        .collect()
}

/// Flow solve for `(u, p)` with coefficients frozen at `(t_prev, u_prev)`.
pub fn flow_step(
    disc: &Discretization,
    coeffs: &CoefficientModel,
    loads: &Loads,
    t_prev: &[f64],
    u_prev: &[f64],
    u_known: &[f64],
    terms: Terms,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let sys = assemble_flow_system(disc, coeffs, loads, t_prev, u_prev, u_known, terms);
    let x = solve_linear(&sys)?;
    let nu = sys.n_velocity;
    let u = expand(&disc.u_free, &x[..nu], u_known);
    Ok((u, x[nu..nu + sys.n_pressure].to_vec()))
}

pub fn temperature_step(
    disc: &Discretization,
    coeffs: &CoefficientModel,
    loads: &Loads,
    t_prev: &[f64],
    u_new: &[f64],
    t_known: &[f64],
    terms: Terms,
) -> Result<Vec<f64>, SolverError> {
    let sys = assemble_temperature_system(disc, coeffs, loads, t_prev, u_new, t_known, terms);
    let x = solve_linear(&sys)?;
    Ok(expand(&disc.t_free, &x, t_known))
}

/// Fixed-point iteration: flow solve with `(T^n, u^n)` frozen, then the
/// temperature solve with `(T^n, u^{n+1})`, from a zero initial guess.
pub fn picard_solve(
    disc: &Discretization,
    problem: &Problem,
    options: &PicardOptions,
) -> Result<(DiscreteSolution, PicardLog), SolverError> {
    let loads = Loads::new(disc, &problem.f, &problem.g);
    let u_known = disc.velocity_boundary_values(problem.u_boundary.as_ref());
    let t_known = disc.temperature_boundary_values(problem.t_boundary.as_ref());
    let mut sol = DiscreteSolution {
        u: u_known.clone(),
        p: vec![0.0; disc.layouts.pressure.ndofs()],
        t: t_known.clone(),
    };
    let mut log = PicardLog::default();
    let terms = options.terms;
    let coeffs = &problem.coeffs;
    for it in 1..=options.max_iter {
        let (u, p) = flow_step(disc, coeffs, &loads, &sol.t, &sol.u, &u_known, terms)?;
        let t = temperature_step(disc, coeffs, &loads, &sol.t, &u, &t_known, terms)?;
        let next = DiscreteSolution { u, p, t };
        let increment = disc
            .unknowns(&next)
            .iter()
            .zip(disc.unknowns(&sol))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        log::debug!("picard iteration {it}: increment {increment:.6e}");
        log.increments.push(increment);
        sol = next;
        if increment <= options.tol {
            log::info!("picard converged in {it} iterations");
            return Ok((sol, log));
        }
    }
    Err(SolverError::NotConverged {
        iterations: options.max_iter,
        log: log.increments,
    })
}

/// `sum_E int_E p_h`.
pub fn pressure_mean(layout: &PressureDofLayout, p: &[f64]) -> f64 {
    dot(layout.mean_row(), p)
}

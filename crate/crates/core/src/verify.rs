//! Manufactured solutions, discrete error norms and convergence studies.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::forms::{CoefficientLaw, CoefficientModel};
use crate::mesh::{generate_mesh, MeshError, MeshFamily};
use crate::polybasis::Vec2;
use crate::projection::{apply, eval_poly};
use crate::solver::{picard_solve, Discretization, PicardOptions, Problem, SolverError, Terms};
use crate::space::{gather, DiscreteSolution};

/// Exactness of the element rule used for error integrals.
pub const ERROR_DEGREE: usize = 16;

type Field<T> = Arc<dyn Fn(Vec2) -> T + Send + Sync>;
pub type Gradient = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestId {
    One,
    Two,
    /// Test-1 fields with constant viscosity and unit conductivity.
    Three {
        nu: f64,
    },
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestId::One => write!(f, "test1"),
            TestId::Two => write!(f, "test2"),
            TestId::Three { nu } => write!(f, "test3(nu={nu:e})"),
        }
    }
}

/// Exact fields, their derivatives, coefficients and the sources obtained by
/// applying the strong operator.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub coeffs: CoefficientModel,
    pub u: Field<Vec2>,
    /// `grad_u[c][d] = d u_c / d x_d`
    pub grad_u: Field<Gradient>,
    pub p: Field<f64>,
    pub t: Field<f64>,
    pub grad_t: Field<Vec2>,
    pub f: Field<Vec2>,
    pub g: Field<f64>,
    /// Whether `u` and `T` vanish on the boundary.
    pub homogeneous: bool,
}

impl fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("coeffs", &self.coeffs)
            .finish_non_exhaustive()
    }
}

impl ManufacturedCase {
    pub fn problem(&self) -> Problem {
        Problem {
            coeffs: self.coeffs.clone(),
            f: self.f.clone(),
            g: self.g.clone(),
            u_boundary: (!self.homogeneous).then(|| self.u.clone()),
            t_boundary: (!self.homogeneous).then(|| self.t.clone()),
        }
    }
}

/// `s^2 (s-1)^2` and its derivatives.
fn a0(s: f64) -> f64 {
    s * s * (s - 1.0) * (s - 1.0)
}
fn b0(s: f64) -> f64 {
    s * (s - 1.0) * (2.0 * s - 1.0)
}
fn b1(s: f64) -> f64 {
    6.0 * s * s - 6.0 * s + 1.0
}
fn b2(s: f64) -> f64 {
    12.0 * s - 6.0
}

/// Velocity, gradient and Laplacian of the stream-function field
/// `u = (-A(x) A'(y)/2, A(y) A'(x)/2)`.
fn bubble_velocity(x: Vec2) -> (Vec2, Gradient, Vec2) {
    let (x1, x2) = (x.x, x.y);
    let u = Vec2::new(-a0(x1) * b0(x2), a0(x2) * b0(x1));
    let grad = [
        [-2.0 * b0(x1) * b0(x2), -a0(x1) * b1(x2)],
        [a0(x2) * b1(x1), 2.0 * b0(x2) * b0(x1)],
    ];
    let lap = Vec2::new(
        -2.0 * b1(x1) * b0(x2) - a0(x1) * b2(x2),
        a0(x2) * b2(x1) + 2.0 * b1(x2) * b0(x1),
    );
    (u, grad, lap)
}

fn bubble_pressure(x: Vec2) -> (f64, Vec2) {
    let (x1, x2) = (x.x, x.y);
    (
        x1 * x2 * (1.0 - x1) * (1.0 - x2) - 1.0 / 36.0,
        Vec2::new(
            x2 * (1.0 - x2) * (1.0 - 2.0 * x1),
            x1 * (1.0 - x1) * (1.0 - 2.0 * x2),
        ),
    )
}

fn bubble_temperature(x: Vec2) -> (f64, Vec2, f64) {
    let (x1, x2) = (x.x, x.y);
    (
        a0(x1) * a0(x2),
        Vec2::new(2.0 * b0(x1) * a0(x2), 2.0 * a0(x1) * b0(x2)),
        2.0 * b1(x1) * a0(x2) + 2.0 * a0(x1) * b1(x2),
    )
}

type Local = (Vec2, Gradient, Vec2, Vec2, f64, Vec2, f64);

/// Assemble a case from pointwise exact data `(u, grad u, lap u, grad p, T,
/// grad T, lap T)`; `f` and `g` follow from the strong form.
fn assemble_case(
    name: String,
    coeffs: CoefficientModel,
    local: impl Fn(Vec2) -> Local + Send + Sync + 'static,
    p: impl Fn(Vec2) -> f64 + Send + Sync + 'static,
    homogeneous: bool,
    terms: Terms,
) -> ManufacturedCase {
    let local = Arc::new(local);
    let on = |b: bool| if b { 1.0 } else { 0.0 };
    let (conv_on, drag_on, react_on, heat_on) = (
        on(terms.convection),
        on(terms.forchheimer),
        on(terms.reaction),
        on(terms.heat_convection),
    );
    let c_f = coeffs.clone();
    let l = local.clone();
    let f = move |x: Vec2| {
        let local = &l;
        let (u, gu, lap, gp, t, gt, _) = local(x);
        let nu = c_f.nu.eval(t);
        let dnu = c_f.nu.derivative(t);
        let speed = u.norm();
        let drag = if speed == 0.0 {
            0.0
        } else {
            speed.powf(c_f.r - 2.0)
        };
        Vec2::from_fn(|c, _| {
            let conv = gu[c][0] * u.x + gu[c][1] * u.y;
            let flux = gu[c][0] * gt.x + gu[c][1] * gt.y;
            -nu * lap[c] - dnu * flux + conv_on * conv + react_on * u[c] + drag_on * drag * u[c] + gp[c]
        })
    };
    let c_g = coeffs.clone();
    let l = local.clone();
    let g = move |x: Vec2| {
        let local = &l;
        let (u, _, _, _, t, gt, lap_t) = local(x);
        -c_g.kappa.eval(t) * lap_t - c_g.kappa.derivative(t) * gt.norm_squared() + heat_on * u.dot(&gt)
    };
    ManufacturedCase {
        name,
        coeffs,
        u: {
            let l = local.clone();
            Arc::new(move |x| l(x).0)
        },
        grad_u: {
            let l = local.clone();
            Arc::new(move |x| l(x).1)
        },
        p: Arc::new(p),
        t: {
            let l = local.clone();
            Arc::new(move |x| l(x).4)
        },
        grad_t: Arc::new(move |x| local(x).5),
        f: Arc::new(f),
        g: Arc::new(g),
        homogeneous,
    }
}

fn bubble_local(x: Vec2) -> Local {
    let (u, gu, lap) = bubble_velocity(x);
    let (_, gp) = bubble_pressure(x);
    let (t, gt, lt) = bubble_temperature(x);
    (u, gu, lap, gp, t, gt, lt)
}

pub fn build_case(test: TestId) -> ManufacturedCase {
    let law = |v: fn(f64) -> f64, d: fn(f64) -> f64, lo, hi, lip| {
        CoefficientLaw::new(v, d, lo, hi, lip).expect("valid bounds")
    };
    // bounds are declared over |T| <= 1/2, which contains the exact range
    let (nu, kappa, r) = match test {
        TestId::One => (
            law(|t| 1.0 + t, |_| 1.0, 0.5, 1.5, 1.0),
            law(
                |t| 1.0 + t.sin(),
                f64::cos,
                1.0 - 0.5f64.sin(),
                1.0 + 0.5f64.sin(),
                1.0,
            ),
            3.0,
        ),
        TestId::Two => (
            law(
                |t| 1.0 + (-t).exp(),
                |t| -(-t).exp(),
                1.0 + (-0.5f64).exp(),
                1.0 + 0.5f64.exp(),
                0.5f64.exp(),
            ),
            law(
                |t| 2.0 + t.sin(),
                f64::cos,
                2.0 - 0.5f64.sin(),
                2.0 + 0.5f64.sin(),
                1.0,
            ),
            4.0,
        ),
        TestId::Three { nu } => (
            CoefficientLaw::constant(nu).expect("positive viscosity"),
            CoefficientLaw::constant(1.0).expect("positive"),
            3.0,
        ),
    };
    let coeffs = CoefficientModel::new(nu, kappa, r).expect("r in range");
    assemble_case(
        test.to_string(),
        coeffs,
        bubble_local,
        |x| bubble_pressure(x).0,
        true,
        Terms::default(),
    )
}

/// Polynomial data reproduced exactly by the scheme: divergence-free
/// quadratic velocity, zero-mean linear pressure, quadratic temperature,
/// constant coefficients and nonzero boundary values. Sources contain only
/// the active `terms`.
pub fn patch_case(nu: f64, kappa: f64, r: f64, terms: Terms) -> ManufacturedCase {
    fn local(x: Vec2) -> Local {
        let (x1, x2) = (x.x, x.y);
        let u = Vec2::new(x1 * x1 + x2 + 0.5, -2.0 * x1 * x2 + x1 - 0.25);
        let gu = [[2.0 * x1, 1.0], [-2.0 * x2 + 1.0, -2.0 * x1]];
        let t = 1.0 + x1 * x1 - x1 * x2 + 0.5 * x2 * x2;
        let gt = Vec2::new(2.0 * x1 - x2, -x1 + x2);
        (u, gu, Vec2::new(2.0, 0.0), Vec2::new(1.0, -1.0), t, gt, 3.0)
    }
    let coeffs = CoefficientModel::new(
        CoefficientLaw::constant(nu).expect("positive"),
        CoefficientLaw::constant(kappa).expect("positive"),
        r,
    )
    .expect("r in range");
    assemble_case("patch".into(), coeffs, local, |x| x.x - x.y, false, terms)
}

/// Patch data with the velocity reduced to a constant, for which every
/// projected nonlinear term is exact.
pub fn constant_flow_patch_case(nu: f64, kappa: f64, r: f64, terms: Terms) -> ManufacturedCase {
    fn local(x: Vec2) -> Local {
        let u = Vec2::new(0.75, -0.5);
        let t = 1.0 + x.x - 0.5 * x.y;
        (
            u,
            [[0.0; 2]; 2],
            Vec2::zeros(),
            Vec2::new(1.0, -1.0),
            t,
            Vec2::new(1.0, -0.5),
            0.0,
        )
    }
    let coeffs = CoefficientModel::new(
        CoefficientLaw::constant(nu).expect("positive"),
        CoefficientLaw::constant(kappa).expect("positive"),
        r,
    )
    .expect("r in range");
    assemble_case(
        "constant-flow patch".into(),
        coeffs,
        local,
        |x| x.x - x.y,
        false,
        terms,
    )
}

/// `sum c x^i y^j` over `(i, j, c)` triples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bivariate {
    pub terms: Vec<(u32, u32, f64)>,
}

impl Bivariate {
    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|t| t.2 != 0.0)
            .map(|t| t.0 + t.1)
            .max()
            .unwrap_or(0)
    }

    /// `d^(dx+dy) / dx^dx dy^dy` evaluated at `x`.
    pub fn derivative(&self, dx: u32, dy: u32, x: Vec2) -> f64 {
        let falling = |n: u32, k: u32| ((n - k + 1)..=n).product::<u32>() as f64;
        self.terms
            .iter()
            .filter(|&&(i, j, _)| i >= dx && j >= dy)
            .map(|&(i, j, c)| {
                c * falling(i, dx) * falling(j, dy) * x.x.powi((i - dx) as i32) * x.y.powi((j - dy) as i32)
            })
            .sum()
    }
}

/// Patch data from a cubic stream function `psi` (`u = curl psi`), a
/// pressure gradient (zero mean on the unit square) and a quadratic
/// temperature.
pub fn polynomial_patch_case(
    stream: Bivariate,
    pressure_gradient: Vec2,
    temperature: Bivariate,
    coeffs: (f64, f64, f64),
    terms: Terms,
) -> ManufacturedCase {
    assert!(stream.degree() <= 3 && temperature.degree() <= 2);
    let (nu, kappa, r) = coeffs;
    let model = CoefficientModel::new(
        CoefficientLaw::constant(nu).expect("positive"),
        CoefficientLaw::constant(kappa).expect("positive"),
        r,
    )
    .expect("r in range");
    let gp = pressure_gradient;
    let local = move |x: Vec2| -> Local {
        let s = |i, j| stream.derivative(i, j, x);
        let t = |i, j| temperature.derivative(i, j, x);
        (
            Vec2::new(s(0, 1), -s(1, 0)),
            [[s(1, 1), s(0, 2)], [-s(2, 0), -s(1, 1)]],
            Vec2::new(s(2, 1) + s(0, 3), -s(3, 0) - s(1, 2)),
            gp,
            t(0, 0),
            Vec2::new(t(1, 0), t(0, 1)),
            t(2, 0) + t(0, 2),
        )
    };
    let p = move |x: Vec2| gp.x * (x.x - 0.5) + gp.y * (x.y - 0.5);
    assemble_case("polynomial patch".into(), model, local, p, false, terms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub family: String,
    pub n: usize,
    pub h: f64,
    pub dofs_u: usize,
    pub dofs_p: usize,
    pub dofs_t: usize,
    pub iterations: usize,
    pub e_u_h1: f64,
    pub e_t_h1: f64,
    pub e_p_l2: f64,
    pub div_norm: f64,
    /// Broken seminorm `(sum_E |Pi^0_2 u_h|_1^2)^{1/2}`.
    pub u_h1: f64,
    /// `sum_E int_E p_h`.
    pub p_mean: f64,
    pub p_l2: f64,
}

impl ErrorReport {
    pub fn divergence_free(&self, factor: f64) -> bool {
        self.div_norm <= factor * self.u_h1
    }
}

/// Projected-gradient H1 errors, L2 pressure error and the divergence norm,
/// integrated with a degree-16 rule on each element.
pub fn compute_errors(disc: &Discretization, sol: &DiscreteSolution, case: &ManufacturedCase) -> ErrorReport {
    use rayon::prelude::*;
    let lay = &disc.layouts;
    let sums: Vec<[f64; 7]> = disc
        .projectors
        .par_iter()
        .map(|proj| {
            let geo = &proj.geometry;
            let e = geo.id;
            let rule = geo.rule(ERROR_DEGREE).expect("element admits projectors");
            let b2 = geo.basis(2);
            let b1 = geo.basis(1);
            let uc = apply(&proj.vector.pi0, &gather(&sol.u, lay.velocity.element_dofs(e)));
            let tc = apply(&proj.scalar.pi0, &gather(&sol.t, lay.temperature.element_dofs(e)));
            let div = apply(
                &proj.vector.div_poly,
                &gather(&sol.u, lay.velocity.element_dofs(e)),
            );
            let pc = &sol.p[lay.pressure.element_dofs(e)];
            let grad = |c: &[f64], x: Vec2| {
                b2.eval_grad(x)
                    .iter()
                    .zip(c)
                    .fold(Vec2::zeros(), |acc, (g, ci)| acc + Vec2::new(g[0], g[1]) * *ci)
            };
            let mut s = [0.0; 7];
            for (x, w) in rule.points.iter().zip(&rule.weights) {
                let x = *x;
                let gu = (case.grad_u)(x);
                for c in 0..2 {
                    let gh = grad(&uc[6 * c..6 * c + 6], x);
                    s[0] += w * ((gu[c][0] - gh.x).powi(2) + (gu[c][1] - gh.y).powi(2));
                    s[4] += w * gh.norm_squared();
                }
                s[1] += w * ((case.grad_t)(x) - grad(&tc, x)).norm_squared();
                let ph = eval_poly(&b1, pc, x);
                s[2] += w * ((case.p)(x) - ph).powi(2);
                s[3] += w * eval_poly(&b1, &div, x).powi(2);
                s[5] += w * ph;
                s[6] += w * ph * ph;
            }
            s
        })
        .collect();
    let mut total = [0.0; 7];
    for s in &sums {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    ErrorReport {
        family: String::new(),
        n: 0,
        h: 0.0,
        dofs_u: lay.velocity.ndofs(),
        dofs_p: lay.pressure.ndofs(),
        dofs_t: lay.temperature.ndofs(),
        iterations: 0,
        e_u_h1: total[0].sqrt(),
        e_t_h1: total[1].sqrt(),
        e_p_l2: total[2].sqrt(),
        div_norm: total[3].sqrt(),
        u_h1: total[4].sqrt(),
        p_mean: total[5],
        p_l2: total[6].sqrt(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("N = {n}: {source}")]
    Solver {
        n: usize,
        #[source]
        source: SolverError,
    },
}

/// Solve `case` on one mesh and measure the errors.
pub fn run_single(
    family: MeshFamily,
    n: usize,
    seed: Option<u64>,
    case: &ManufacturedCase,
    options: &PicardOptions,
) -> Result<(ErrorReport, crate::solver::PicardLog), StudyError> {
    let mesh = generate_mesh(family, n, seed)?;
    let disc = Discretization::new(&mesh).map_err(|source| StudyError::Solver { n, source })?;
    let (sol, log) =
        picard_solve(&disc, &case.problem(), options).map_err(|source| StudyError::Solver { n, source })?;
    let mut report = compute_errors(&disc, &sol, case);
    report.family = family.tag().to_string();
    report.n = n;
    report.h = mesh.h;
    report.iterations = log.iterations();
    Ok((report, log))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ErrorReport>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub u: f64,
    pub t: f64,
    pub p: f64,
}

impl ConvergenceTable {
    /// `log2(e(N/2) / e(N))` for each row whose predecessor has half its `N`.
    pub fn rates(&self) -> Vec<Option<Rates>> {
        let mut out = vec![None];
        for w in self.rows.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            out.push((b.n == 2 * a.n).then(|| Rates {
                u: (a.e_u_h1 / b.e_u_h1).log2(),
                t: (a.e_t_h1 / b.e_t_h1).log2(),
                p: (a.e_p_l2 / b.e_p_l2).log2(),
            }));
        }
        out.truncate(self.rows.len());
        out
    }

    pub fn finest_rates(&self) -> Option<Rates> {
        self.rates().last().copied().flatten()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "family", "N", "h", "dofs_u", "dofs_p", "dofs_T", "iters", "e_u_h1", "e_T_h1", "e_p_l2",
            "div_norm", "rate_u", "rate_T", "rate_p",
        ])?;
        for (row, rate) in self.rows.iter().zip(self.rates()) {
            let r = |f: fn(&Rates) -> f64| rate.as_ref().map_or(String::new(), |r| format!("{:.4}", f(r)));
            w.write_record([
                row.family.clone(),
                row.n.to_string(),
                format!("{:.6e}", row.h),
                row.dofs_u.to_string(),
                row.dofs_p.to_string(),
                row.dofs_t.to_string(),
                row.iterations.to_string(),
                format!("{:.6e}", row.e_u_h1),
                format!("{:.6e}", row.e_t_h1),
                format!("{:.6e}", row.e_p_l2),
                format!("{:.6e}", row.div_norm),
                r(|r| r.u),
                r(|r| r.t),
                r(|r| r.p),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One Picard solve per refinement level.
pub fn run_study(
    family: MeshFamily,
    ns: &[usize],
    seed: Option<u64>,
    case: &ManufacturedCase,
    options: &PicardOptions,
) -> Result<ConvergenceTable, StudyError> {
    let mut table = ConvergenceTable::default();
    for &n in ns {
        let (row, _) = run_single(family, n, seed, case, options)?;
        log::info!(
            "{} N={n}: iters={} e_u={:.3e} e_T={:.3e} e_p={:.3e} div={:.3e}",
            row.family,
            row.iterations,
            row.e_u_h1,
            row.e_t_h1,
            row.e_p_l2,
            row.div_norm
        );
        table.rows.push(row);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
struct CsvRow {
    family: String,
    #[serde(rename = "N")]
    n: usize,
    h: f64,
    e_u_h1: f64,
    #[serde(rename = "e_T_h1")]
    e_t_h1: f64,
    e_p_l2: f64,
}

/// Re-emit a study CSV as `family,N,log2_h,log2_e_u,log2_e_T,log2_e_p`.
pub fn plotdata<R: std::io::Read, W: Write>(input: R, output: W) -> csv::Result<()> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["family", "N", "log2_h", "log2_e_u", "log2_e_T", "log2_e_p"])?;
    for row in rdr.deserialize() {
        let row: CsvRow = row?;
        w.write_record([
            row.family,
            row.n.to_string(),
            format!("{:.6}", row.h.log2()),
            format!("{:.6}", row.e_u_h1.log2()),
            format!("{:.6}", row.e_t_h1.log2()),
            format!("{:.6}", row.e_p_l2.log2()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Manufactured problems with closed-form sources, weighted error
//! norms, convergence-rate tables, and direct numerical measurements
//! of the temporal consistency defect and the cubic-linearization
//! remainder.
//!
//! Every built-in problem has the separable exact solution
//! u(x, t) = g(x)(1 + t^alpha), for which the fractional time
//! derivative is Gamma(1+alpha) g(x) exactly, so the forcing term
//! f = Gamma(1+alpha) g - kappa^2 (1+t^alpha) Lap g - u + u^3 is
//! available in closed form.  Profiles built from |x| factors are
//! smooth on each open quadrant; their meshes keep the axes on
//! element boundaries and evaluation exactly on a kink line is
//! rejected.

use crate::error::{Error, Result};
use crate::fem::{DiscreteField, FieldRole, MixedSpace};
use crate::kernels::KernelTables;
use crate::mesh::RectMesh;
use crate::solver::{ProblemSpec, StepInfo, TfacSolver};
use crate::special::gamma;
use crate::temporal::GradedTimeMesh;
use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Spatial profile of a manufactured solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ProfileKind {
    /// 0.5 sin(x1)(1-x1) sin(x2)(1-x2): smooth on the unit square.
    SineBump,
    /// x1^2(1-|x1|) x2^2(1-|x2|): C^1 across the axes.
    QuadraticBump,
    /// |x1|^2.5(1-|x1|) |x2|^2.5(1-|x2|): C^1 with a 2.5-power cusp
    /// in the third derivative at the axes.
    PowerBump,
    /// x1(1-|x1|) x2(1-|x2|): gradient kink across the axes.
    PyramidBump,
}

/// A benchmark problem with known exact solution g(x)(1 + t^alpha).
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedCase {
    pub name: &'static str,
    /// Domain rectangle (ax, ay, bx, by).
    pub domain: [f64; 4],
    pub t_final: f64,
    pub kappa: f64,
    /// Sobolev class of the initial datum, stated descriptively.
    pub regularity: &'static str,
    profile: ProfileKind,
}

/// The four built-in benchmark problems.
pub const CASES: [ManufacturedCase; 4] = [
    ManufacturedCase {
        name: "sine-bump",
        domain: [0.0, 0.0, 1.0, 1.0],
        t_final: 1.0,
        kappa: 1.0,
        regularity: "smooth",
        profile: ProfileKind::SineBump,
    },
    ManufacturedCase {
        name: "quadratic-bump",
        domain: [-1.0, -1.0, 1.0, 1.0],
        t_final: 0.5,
        kappa: 0.5,
        regularity: "H1_0 and H3, not H4",
        profile: ProfileKind::QuadraticBump,
    },
    ManufacturedCase {
        name: "power-bump",
        domain: [-1.0, -1.0, 1.0, 1.0],
        t_final: 0.5,
        kappa: 0.5,
        regularity: "H1_0 and H3.5, not H4",
        profile: ProfileKind::PowerBump,
    },
    ManufacturedCase {
        name: "pyramid-bump",
        domain: [-1.0, -1.0, 1.0, 1.0],
        t_final: 0.5,
        kappa: 0.5,
        regularity: "H1_0, not H3",
        profile: ProfileKind::PyramidBump,
    },
];

/// One-dimensional profile factor: value and first two derivatives.
fn axis_factor(kind: ProfileKind, first_axis: bool, x: f64) -> (f64, f64, f64) {
    match kind {
        ProfileKind::SineBump => {
            let scale = if first_axis { 0.5 } else { 1.0 };
            let (s, c) = (x.sin(), x.cos());
            (
                scale * s * (1.0 - x),
                scale * (c * (1.0 - x) - s),
                scale * (-s * (1.0 - x) - 2.0 * c),
            )
        }
        ProfileKind::QuadraticBump => {
            let ax = x.abs();
            (x * x - ax * ax * ax, 2.0 * x - 3.0 * x * ax, 2.0 - 6.0 * ax)
        }
        ProfileKind::PowerBump => {
            let ax = x.abs();
            let sgn = if x >= 0.0 { 1.0 } else { -1.0 };
            (
                ax.powf(2.5) - ax.powf(3.5),
                sgn * (2.5 * ax.powf(1.5) - 3.5 * ax.powf(2.5)),
                3.75 * ax.sqrt() - 8.75 * ax * ax.sqrt(),
            )
        }
        ProfileKind::PyramidBump => {
            let ax = x.abs();
            let sgn = if x >= 0.0 { 1.0 } else { -1.0 };
            (x - x * ax, 1.0 - 2.0 * ax, -2.0 * sgn)
        }
    }
}

impl ManufacturedCase {
    pub fn by_name(name: &str) -> Option<&'static ManufacturedCase> {
        CASES.iter().find(|c| c.name == name)
    }

    /// True when the profile contains |x| factors, making the axes
    /// kink lines of the derivatives.
    pub fn has_kink(&self) -> bool {
        self.profile != ProfileKind::SineBump
    }

    fn check_kink(&self, x: f64, y: f64) -> Result<()> {
        if self.has_kink() && (x == 0.0 || y == 0.0) {
            return Err(Error::KinkLine { x, y });
        }
        Ok(())
    }

    /// Spatial profile g; the initial datum.
    pub fn g(&self, x: f64, y: f64) -> f64 {
        axis_factor(self.profile, true, x).0 * axis_factor(self.profile, false, y).0
    }

    /// Gradient of g, defined off the kink lines.
    pub fn grad_g(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        self.check_kink(x, y)?;
        let (fx, dfx, _) = axis_factor(self.profile, true, x);
        let (fy, dfy, _) = axis_factor(self.profile, false, y);
        Ok([dfx * fy, fx * dfy])
    }

    /// Laplacian of g, defined off the kink lines.
    pub fn laplacian_g(&self, x: f64, y: f64) -> Result<f64> {
        self.check_kink(x, y)?;
        let (fx, _, ddfx) = axis_factor(self.profile, true, x);
        let (fy, _, ddfy) = axis_factor(self.profile, false, y);
        Ok(ddfx * fy + fx * ddfy)
    }

    /// Exact solution g(x)(1 + t^alpha).
    pub fn exact_u(&self, alpha: f64, x: f64, y: f64, t: f64) -> f64 {
        self.g(x, y) * (1.0 + t.powf(alpha))
    }

    /// Exact flux grad u = (1 + t^alpha) grad g.
    pub fn exact_flux(&self, alpha: f64, x: f64, y: f64, t: f64) -> Result<[f64; 2]> {
        let gr = self.grad_g(x, y)?;
        let s = 1.0 + t.powf(alpha);
        Ok([s * gr[0], s * gr[1]])
    }

    /// Closed-form forcing term of the manufactured problem.
    pub fn source(&self, alpha: f64, x: f64, y: f64, t: f64) -> Result<f64> {
        let lap = self.laplacian_g(x, y)?;
        Ok(source_from_parts(alpha, self.kappa, self.g(x, y), lap, t))
    }

    /// Structured mesh of the case's domain with nx = ny subdivisions
    /// per axis (even counts enforced when the domain straddles 0).
    pub fn mesh(&self, nx: usize) -> Result<RectMesh> {
        let [ax, ay, bx, by] = self.domain;
        RectMesh::build(ax, ay, bx, by, nx, nx)
    }

    /// Subdivision count for the coupling h = 1/(2 N): nx = width*2N.
    pub fn coupled_nx(&self, n_steps: usize) -> usize {
        let width = self.domain[2] - self.domain[0];
        let nx = width * 2.0 * n_steps as f64;
        nx as usize
    }

    /// Problem data for the solver, with the reaction term enabled.
    pub fn problem(&self, alpha: f64, nu: f64) -> ProblemSpec {
        let case = *self;
        let src = move |x: f64, y: f64, t: f64| {
            case.source(alpha, x, y, t).expect("source evaluated on a kink line")
        };
        let init = move |x: f64, y: f64| case.g(x, y);
        ProblemSpec {
            kappa: self.kappa,
            alpha,
            nu,
            nonlinearity: true,
            kappa2_in_scheme: true,
            u0: Box::new(init),
            source: Some(Box::new(src)),
        }
    }
}

/// f = Gamma(1+alpha) g - kappa^2 (1+t^alpha) lap - u + u^3 with
/// u = g (1 + t^alpha).  Exposed so the pieces can be checked
/// independently; a zero profile gives zero forcing.
pub fn source_from_parts(alpha: f64, kappa: f64, g: f64, lap_g: f64, t: f64) -> f64 {
    let tau = 1.0 + t.powf(alpha);
    let u = g * tau;
    gamma(1.0 + alpha) * g - kappa * kappa * tau * lap_g - u + u * u * u
}

/// Weighted trajectory errors against arbitrary exact fields:
/// maxima over n = 1..N of t_n^(alpha/2) L2-errors.
pub fn weighted_errors_against(
    u_traj: &[Vec<f64>],
    sigma_traj: &[Vec<f64>],
    alpha: f64,
    tmesh: &GradedTimeMesh,
    space: &MixedSpace,
    exact_u: impl Fn(f64, f64, f64) -> f64,
    exact_flux: impl Fn(f64, f64, f64) -> [f64; 2],
) -> (f64, f64) {
    let (mut e_u, mut e_sigma) = (0.0_f64, 0.0_f64);
    for n in 1..=tmesh.n_steps {
        let t = tmesh.node(n);
        let w = t.powf(0.5 * alpha);
        let uf = DiscreteField { role: FieldRole::Scalar, coeffs: u_traj[n].clone() };
        let sf = DiscreteField { role: FieldRole::Flux, coeffs: sigma_traj[n].clone() };
        e_u = e_u.max(w * space.l2_error_scalar(&uf, t, &exact_u));
        e_sigma = e_sigma.max(w * space.l2_error_flux(&sf, t, &exact_flux));
    }
    (e_u, e_sigma)
}

/// Weighted trajectory errors against a manufactured case's exact
/// solution and flux.
pub fn weighted_errors(
    u_traj: &[Vec<f64>],
    sigma_traj: &[Vec<f64>],
    case: &ManufacturedCase,
    alpha: f64,
    tmesh: &GradedTimeMesh,
    space: &MixedSpace,
) -> (f64, f64) {
    weighted_errors_against(
        u_traj,
        sigma_traj,
        alpha,
        tmesh,
        space,
        |x, y, t| case.exact_u(alpha, x, y, t),
        |x, y, t| case.exact_flux(alpha, x, y, t).expect("flux evaluated on a kink line"),
    )
}

/// Streaming version of the weighted error protocol, fed one step at
/// a time through the solver's observer (avoids storing trajectories).
pub struct ErrorTracker<'a> {
    space: &'a MixedSpace,
    case: ManufacturedCase,
    alpha: f64,
    pub e_u: f64,
    pub e_sigma: f64,
}

impl<'a> ErrorTracker<'a> {
    pub fn new(space: &'a MixedSpace, case: &ManufacturedCase, alpha: f64) -> Self {
        ErrorTracker { space, case: *case, alpha, e_u: 0.0, e_sigma: 0.0 }
    }

    pub fn update(&mut self, info: &StepInfo) {
        if info.n == 0 {
            return;
        }
        let (case, alpha, t) = (self.case, self.alpha, info.t);
        let scale = 1.0 + t.powf(alpha);
        let w = t.powf(0.5 * alpha);
        let uf = DiscreteField { role: FieldRole::Scalar, coeffs: info.u.to_vec() };
        let eu = self.space.l2_error_scalar(&uf, t, |x, y, _| scale * case.g(x, y));
        let sf = DiscreteField { role: FieldRole::Flux, coeffs: info.sigma.to_vec() };
        let es = self.space.l2_error_flux(&sf, t, |x, y, _| {
            let g = case.grad_g(x, y).expect("flux evaluated on a kink line");
            [scale * g[0], scale * g[1]]
        });
        self.e_u = self.e_u.max(w * eu);
        self.e_sigma = self.e_sigma.max(w * es);
    }
}

/// How the spatial resolution follows the step count in a study.
#[derive(Clone, Copy, Debug)]
pub enum Coupling {
    /// h = 1/(2N), i.e. nx = (domain width) * 2N.
    HalfInverse,
    /// Fixed subdivision count regardless of N.
    FixedNx(usize),
}

/// One refinement row of a convergence study.
#[derive(Clone, Debug)]
pub struct StudyRow {
    pub n_steps: usize,
    pub nx: usize,
    pub h: f64,
    pub dt_max: f64,
    pub dt_star: f64,
    pub e_u: f64,
    pub e_sigma: f64,
    pub r_u_h: Option<f64>,
    pub r_u_dt: Option<f64>,
    pub r_s_h: Option<f64>,
    pub r_s_dt: Option<f64>,
    /// Failure report of this row's run, if any; rates touching a
    /// failed row are absent.
    pub error: Option<String>,
}

/// A family of refinement rows with consecutive-pair rates.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub case_name: &'static str,
    pub alpha: f64,
    pub gamma: f64,
    pub nu: f64,
    pub k: usize,
    pub rows: Vec<StudyRow>,
}

/// log(e1/e2) / log(m1/m2), absent when degenerate.
fn pair_rate(e1: f64, e2: f64, m1: f64, m2: f64) -> Option<f64> {
    if !(e1 > 0.0 && e2 > 0.0 && m1 > 0.0 && m2 > 0.0) || m1 == m2 {
        return None;
    }
    let r = (e1 / e2).ln() / (m1 / m2).ln();
    if r.is_finite() { Some(r) } else { None }
}

/// Format with 4 significant digits, plain or scientific.
pub fn sig4(v: f64) -> String {
    if v == 0.0 {
        return String::from("0");
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-3..4).contains(&mag) {
        let decimals = (3 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.3e}")
    }
}

fn opt_rate(r: &Option<f64>, for_markdown: bool) -> String {
    match r {
        Some(v) if for_markdown => sig4(*v),
        Some(v) => format!("{v}"),
        None if for_markdown => String::from("-"),
        None => String::new(),
    }
}

impl ConvergenceReport {
    /// Full-precision CSV with header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "case,alpha,gamma,nu,k,N,nx,h,dt_star,dt_max,E_u,R_u_h,R_u_dt,E_sigma,R_sigma_h,R_sigma_dt,status\n",
        );
        for r in &self.rows {
            let status = match &r.error {
                Some(e) => e.clone(),
                None => String::from("ok"),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.case_name,
                self.alpha,
                self.gamma,
                self.nu,
                self.k,
                r.n_steps,
                r.nx,
                r.h,
                r.dt_star,
                r.dt_max,
                r.e_u,
                opt_rate(&r.r_u_h, false),
                opt_rate(&r.r_u_dt, false),
                r.e_sigma,
                opt_rate(&r.r_s_h, false),
                opt_rate(&r.r_s_dt, false),
                status
            ));
        }
        out
    }

    /// Aligned markdown table, 4 significant digits.
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "case {} alpha={} gamma={} nu={} k={}\n\n",
            self.case_name,
            sig4(self.alpha),
            sig4(self.gamma),
            sig4(self.nu),
            self.k
        );
        out.push_str(
            "| N | nx | dt* | dt | E_u | R_u_h | R_u_dt | E_sigma | R_s_h | R_s_dt |\n",
        );
        out.push_str("|---|----|-----|----|-----|-------|--------|---------|-------|--------|\n");
        for r in &self.rows {
            if let Some(e) = &r.error {
                out.push_str(&format!("| {} | {} | failed: {} |\n", r.n_steps, r.nx, e));
                continue;
            }
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                r.n_steps,
                r.nx,
                sig4(r.dt_star),
                sig4(r.dt_max),
                sig4(r.e_u),
                opt_rate(&r.r_u_h, true),
                opt_rate(&r.r_u_dt, true),
                sig4(r.e_sigma),
                opt_rate(&r.r_s_h, true),
                opt_rate(&r.r_s_dt, true),
            ));
        }
        out
    }
}

/// Run the solver over a refinement family and tabulate weighted
/// errors and consecutive-pair rates.  `n_list` must be increasing.
/// A failed run poisons only its own row.
pub fn convergence_study(
    case: &ManufacturedCase,
    alpha: f64,
    gamma: f64,
    nu: f64,
    k: usize,
    n_list: &[usize],
    coupling: Coupling,
    mut progress: impl FnMut(&StudyRow),
) -> ConvergenceReport {
    let mut rows: Vec<StudyRow> = Vec::with_capacity(n_list.len());
    for &n_steps in n_list {
        let nx = match coupling {
            Coupling::HalfInverse => case.coupled_nx(n_steps),
            Coupling::FixedNx(m) => m,
        };
        let run = || -> Result<StudyRow> {
            let mesh = case.mesh(nx)?;
            let h = mesh.h;
            let space = MixedSpace::build(mesh, k)?;
            let tmesh = GradedTimeMesh::new(case.t_final, n_steps, gamma, nu)?;
            let dt_max = tmesh.max_step();
            let solver = TfacSolver::new(space, tmesh, case.problem(alpha, nu))?;
            let mut tracker = ErrorTracker::new(&solver.space, case, alpha);
            let diag = solver.run(|info| tracker.update(info))?;
            Ok(StudyRow {
                n_steps,
                nx,
                h,
                dt_max,
                dt_star: diag.dt_star,
                e_u: tracker.e_u,
                e_sigma: tracker.e_sigma,
                r_u_h: None,
                r_u_dt: None,
                r_s_h: None,
                r_s_dt: None,
                error: None,
            })
        };
        let mut row = match run() {
            Ok(row) => row,
            Err(e) => StudyRow {
                n_steps,
                nx,
                h: 0.0,
                dt_max: 0.0,
                dt_star: 0.0,
                e_u: 0.0,
                e_sigma: 0.0,
                r_u_h: None,
                r_u_dt: None,
                r_s_h: None,
                r_s_dt: None,
                error: Some(format!("{e}")),
            },
        };
        if let Some(prev) = rows.last() {
            if prev.error.is_none() && row.error.is_none() {
                row.r_u_h = pair_rate(prev.e_u, row.e_u, prev.h, row.h);
                row.r_u_dt = pair_rate(prev.e_u, row.e_u, prev.dt_max, row.dt_max);
                row.r_s_h = pair_rate(prev.e_sigma, row.e_sigma, prev.h, row.h);
                row.r_s_dt = pair_rate(prev.e_sigma, row.e_sigma, prev.dt_max, row.dt_max);
            }
        }
        progress(&row);
        rows.push(row);
    }
    ConvergenceReport { case_name: case.name, alpha, gamma, nu, k, rows }
}

/// Expected decay order of the weighted consistency defect on a
/// graded mesh: min(gamma*alpha, 2).
pub fn graded_consistency_order(alpha: f64, gamma: f64) -> f64 {
    (gamma * alpha).min(2.0)
}

/// One mesh level of the consistency-defect measurement.
#[derive(Clone, Copy, Debug)]
pub struct UpsilonRow {
    pub n_steps: usize,
    /// max over n of t_{n-nu}^alpha |D^alpha phi - caputo phi| at the
    /// offset points.  The t^alpha weight compensates the defect's
    /// t_{n-nu}^{-alpha} blow-up near t = 0, where the unweighted
    /// maximum stays O(1) regardless of N.
    pub weighted_max: f64,
    /// Consecutive-pair order against the previous row.
    pub order: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct UpsilonReport {
    pub alpha: f64,
    pub gamma: f64,
    pub expected_order: f64,
    pub rows: Vec<UpsilonRow>,
}

impl UpsilonReport {
    /// Order observed on the finest consecutive pair.
    pub fn final_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }
}

/// Measure the defect of the discrete fractional derivative against
/// the exact Caputo derivative of a scalar function phi over a family
/// of graded meshes, in the weighted max norm.
pub fn measure_upsilon(
    phi: impl Fn(f64) -> f64,
    caputo_phi: impl Fn(f64) -> f64,
    alpha: f64,
    gamma: f64,
    nu: f64,
    t_final: f64,
    n_list: &[usize],
) -> Result<UpsilonReport> {
    let mut rows: Vec<UpsilonRow> = Vec::with_capacity(n_list.len());
    for &n_steps in n_list {
        let tmesh = GradedTimeMesh::new(t_final, n_steps, gamma, nu)?;
        let tables = KernelTables::build(&tmesh, alpha)?;
        let vals: Vec<f64> = (0..=n_steps).map(|j| phi(tmesh.node(j))).collect();
        let mut weighted_max = 0.0_f64;
        for n in 1..=n_steps {
            let t_off = tmesh.offset_level(n);
            let defect = tables.discrete_caputo_scalar(&vals, n)? - caputo_phi(t_off);
            weighted_max = weighted_max.max(t_off.powf(alpha) * defect.abs());
        }
        let order = rows.last().and_then(|prev| {
            pair_rate(prev.weighted_max, weighted_max, 1.0 / prev.n_steps as f64, 1.0 / n_steps as f64)
        });
        rows.push(UpsilonRow { n_steps, weighted_max, order });
    }
    Ok(UpsilonReport { alpha, gamma, expected_order: graded_consistency_order(alpha, gamma), rows })
}

/// |(a^3 - b^3 - 3 b^2 (a - b)) - (a - b)^2 (a + 2 b)|: the exact
/// algebraic form of the cubic linearization remainder.
pub fn newton_identity_gap(a: f64, b: f64) -> f64 {
    let lhs = a * a * a - b * b * b - 3.0 * b * b * (a - b);
    let rhs = (a - b) * (a - b) * (a + 2.0 * b);
    (lhs - rhs).abs()
}

/// One mesh level of the linearization-remainder measurement.
#[derive(Clone, Copy, Debug)]
pub struct RemainderRow {
    pub n_steps: usize,
    /// max over n of the L2 norm of the remainder evaluated on the
    /// exact solution; the maximum sits at the final steps, where the
    /// uniform envelope n^{-2} is saturated, so this decays like
    /// N^{-2} once gamma*alpha >= 1.
    pub max_norm: f64,
    pub order: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RemainderReport {
    pub alpha: f64,
    pub gamma: f64,
    /// L2 norm of g^3 over the domain, the spatial factor of every
    /// remainder norm.
    pub g_cube_norm: f64,
    pub rows: Vec<RemainderRow>,
}

impl RemainderReport {
    pub fn final_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }
}

/// Composite 5-point Gauss-Legendre integration over [a, b] split
/// into `cells` uniform pieces.
fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
    const X: [f64; 5] = [
        -0.906179845938663993,
        -0.538469310105683091,
        0.0,
        0.538469310105683091,
        0.906179845938663993,
    ];
    const W: [f64; 5] = [
        0.236926885056189088,
        0.478628670499366468,
        0.568888888888888889,
        0.478628670499366468,
        0.236926885056189088,
    ];
    let hc = (b - a) / cells as f64;
    let mut total = 0.0;
    for c in 0..cells {
        let mid = a + (c as f64 + 0.5) * hc;
        for q in 0..5 {
            total += 0.5 * hc * W[q] * f(mid + 0.5 * hc * X[q]);
        }
    }
    total
}

/// L2 norm of g^3 computed from the separable structure
/// int g^6 = (int X^6)(int Y^6), with cells aligned to the axes.
pub fn g_cube_norm(case: &ManufacturedCase) -> f64 {
    let [ax, ay, bx, by] = case.domain;
    let ix = integrate_1d(|x| axis_factor(case.profile, true, x).0.powi(6), ax, bx, 256);
    let iy = integrate_1d(|y| axis_factor(case.profile, false, y).0.powi(6), ay, by, 256);
    (ix * iy).sqrt()
}

/// Evaluate the linearization remainder's L2 norm over every step of
/// graded meshes from `n_list`, using the closed form
/// ||E|| = (A_n - B_n)^2 (A_n + 2 B_n) ||g^3|| with A_n = 1 +
/// t_{n-nu}^alpha and B_n = 1 + t_{n-1}^alpha, and fit the decay in N
/// of the per-mesh maximum.
pub fn measure_newton_remainder(
    case: &ManufacturedCase,
    alpha: f64,
    gamma: f64,
    nu: f64,
    n_list: &[usize],
) -> Result<RemainderReport> {
    let gnorm = g_cube_norm(case);
    let mut rows: Vec<RemainderRow> = Vec::with_capacity(n_list.len());
    for &n_steps in n_list {
        let tmesh = GradedTimeMesh::new(case.t_final, n_steps, gamma, nu)?;
        let mut max_norm = 0.0_f64;
        for n in 1..=n_steps {
            let a_n = 1.0 + tmesh.offset_level(n).powf(alpha);
            let b_n = 1.0 + tmesh.node(n - 1).powf(alpha);
            let norm = (a_n - b_n) * (a_n - b_n) * (a_n + 2.0 * b_n) * gnorm;
            max_norm = max_norm.max(norm);
        }
        let order = rows.last().and_then(|prev| {
            pair_rate(prev.max_norm, max_norm, 1.0 / prev.n_steps as f64, 1.0 / n_steps as f64)
        });
        rows.push(RemainderRow { n_steps, max_norm, order });
    }
    Ok(RemainderReport { alpha, gamma, g_cube_norm: gnorm, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::special::ln_gamma;

    #[test]
    fn profiles_vanish_on_the_boundary() {
        for case in &CASES {
            let [ax, ay, bx, by] = case.domain;
            for i in 0..=8 {
                let s = i as f64 / 8.0;
                let x = ax * (1.0 - s) + bx * s;
                let y = ay * (1.0 - s) + by * s;
                for (px, py) in [(x, ay), (x, by), (ax, y), (bx, y)] {
                    assert!(
                        case.g(px, py).abs() < 1e-15,
                        "{} at ({px}, {py})",
                        case.name
                    );
                }
            }
        }
    }

    #[test]
    fn initial_value_is_profile() {
        for case in &CASES {
            let (x, y) = (0.31, 0.47);
            assert_eq!(case.exact_u(0.6, x, y, 0.0), case.g(x, y));
        }
    }

    #[test]
    fn zero_profile_gives_zero_source() {
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(source_from_parts(0.5, 1.0, 0.0, 0.0, t), 0.0);
        }
    }

    #[test]
    fn kink_lines_rejected_only_for_abs_profiles() {
        let sine = ManufacturedCase::by_name("sine-bump").unwrap();
        assert!(sine.grad_g(0.0, 0.3).is_ok());
        for name in ["quadratic-bump", "power-bump", "pyramid-bump"] {
            let case = ManufacturedCase::by_name(name).unwrap();
            assert!(matches!(case.source(0.5, 0.0, 0.3, 0.1), Err(Error::KinkLine { .. })));
            assert!(matches!(case.grad_g(0.4, 0.0), Err(Error::KinkLine { .. })));
            assert!(case.source(0.5, 0.25, -0.35, 0.1).is_ok());
        }
    }

    /// Derivatives of the axis factors against central differences,
    /// away from the kink lines.
    #[test]
    fn axis_factor_derivatives_match_finite_differences() {
        let h = 1e-5;
        for case in &CASES {
            for &x in &[0.21_f64, 0.67, -0.43, -0.88] {
                if x < 0.0 && !case.has_kink() {
                    continue;
                }
                for first in [true, false] {
                    let f = |z: f64| axis_factor(case.profile, first, z).0;
                    let (_, d1, d2) = axis_factor(case.profile, first, x);
                    let fd1 = (f(x + h) - f(x - h)) / (2.0 * h);
                    let fd2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
                    assert!((d1 - fd1).abs() < 2e-8, "{} d1 at {x}", case.name);
                    assert!((d2 - fd2).abs() < 2e-4, "{} d2 at {x}", case.name);
                }
            }
        }
    }

    /// Independent forcing oracle: numeric Caputo quadrature of the
    /// temporal factor composed with a centered-difference Laplacian.
    #[test]
    fn source_matches_quadrature_and_difference_oracle() {
        let case = ManufacturedCase::by_name("sine-bump").unwrap();
        let alpha = 0.6;
        // Caputo derivative of 1 + t^alpha at time t via the
        // substitution s = t*z, integrand z^(alpha-1)(1-z)^(-alpha):
        // both endpoint singularities handled by splitting at 1/2 and
        // substituting z = w^(1/alpha) near 0, 1-z = w^(1/(1-alpha))
        // near 1.
        let caputo_num = |_t: f64| {
            let a = alpha;
            // int_0^(1/2) z^(a-1)(1-z)^(-a) dz with z = w^(1/a):
            // dz = (1/a) w^(1/a - 1) dw, z^(a-1) = w^(1 - 1/a),
            // giving (1/a) (1 - w^(1/a))^(-a) dw over w in (0, 2^-a).
            let i0 = integrate_1d(
                |w| (1.0 / a) * (1.0 - w.powf(1.0 / a)).powf(-a),
                0.0,
                0.5_f64.powf(a),
                400,
            );
            // int_(1/2)^1 z^(a-1)(1-z)^(-a) dz with 1-z = w^(1/(1-a)).
            let b = 1.0 - a;
            let i1 = integrate_1d(
                |w| (1.0 / b) * (1.0 - w.powf(1.0 / b)).powf(a - 1.0),
                0.0,
                0.5_f64.powf(b),
                400,
            );
            // Caputo(t^a)(t) = (a/Gamma(1-a)) * t^0 * (i0+i1).
            a / gamma(1.0 - a) * (i0 + i1)
        };
        let lap_num = |x: f64, y: f64| {
            let h = 1e-4;
            (case.g(x + h, y) + case.g(x - h, y) + case.g(x, y + h) + case.g(x, y - h)
                - 4.0 * case.g(x, y))
                / (h * h)
        };
        for (x, y, t) in [(0.37, 0.51, 0.3), (0.12, 0.81, 0.77), (0.64, 0.29, 1.0)] {
            let g = case.g(x, y);
            let u = case.exact_u(alpha, x, y, t);
            let f_num = caputo_num(t) * g
                - case.kappa * case.kappa * (1.0 + t.powf(alpha)) * lap_num(x, y)
                - u
                + u * u * u;
            let f_closed = case.source(alpha, x, y, t).unwrap();
            let scale = f_closed.abs().max(1.0);
            assert!(
                (f_num - f_closed).abs() < 1e-6 * scale,
                "at ({x},{y},{t}): {f_num} vs {f_closed}"
            );
        }
    }

    /// A trajectory representable in the space reproduces its exact
    /// fields: weighted errors vanish to roundoff.
    #[test]
    fn representable_trajectory_has_zero_weighted_errors() {
        let mesh = RectMesh::build(0.0, 0.0, 1.0, 1.0, 3, 3).unwrap();
        let space = MixedSpace::build(mesh, 1).unwrap();
        let alpha = 0.5;
        let tmesh = GradedTimeMesh::new(1.0, 4, 2.0, alpha / 2.0).unwrap();
        let poly = |x: f64, y: f64| 0.3 + 1.2 * x - 0.7 * y;
        let flux = [1.2, -0.7];
        let mut u_traj = Vec::new();
        let mut s_traj = Vec::new();
        for n in 0..=tmesh.n_steps {
            let t = tmesh.node(n);
            let s = 1.0 + t.powf(alpha);
            u_traj.push(space.l2_project(|x, y| s * poly(x, y)).coeffs);
            s_traj.push(space.fortin_interpolate(|_, _| [s * flux[0], s * flux[1]]).coeffs);
        }
        let (e_u, e_s) = weighted_errors_against(
            &u_traj,
            &s_traj,
            alpha,
            &tmesh,
            &space,
            |x, y, t| (1.0 + t.powf(alpha)) * poly(x, y),
            |_, _, t| {
                let s = 1.0 + t.powf(alpha);
                [s * flux[0], s * flux[1]]
            },
        );
        assert!(e_u < 1e-12, "{e_u}");
        assert!(e_s < 1e-12, "{e_s}");
    }

    #[test]
    fn upsilon_vanishes_on_linear_functions() {
        let alpha = 0.5;
        let report = measure_upsilon(
            |t| 2.0 * t + 1.0,
            |t| 2.0 * t.powf(1.0 - alpha) / gamma(2.0 - alpha),
            alpha,
            2.0,
            alpha / 2.0,
            1.0,
            &[8, 16],
        )
        .unwrap();
        for row in &report.rows {
            assert!(row.weighted_max < 1e-12, "{}", row.weighted_max);
        }
    }

    #[test]
    fn upsilon_orders_track_grading() {
        let alpha = 0.5;
        let nu = alpha / 2.0;
        let phi = move |t: f64| t.powf(alpha);
        let exact = move |_: f64| gamma(1.0 + alpha);
        // Strong grading: order ~ 2.
        let strong = measure_upsilon(phi, exact, alpha, 2.0 / alpha + 0.1, nu, 1.0, &[32, 64, 128, 256]).unwrap();
        let o = strong.final_order().unwrap();
        assert!((o - 2.0).abs() < 0.2, "strong grading order {o}");
        // Uniform mesh: order ~ gamma*alpha = 0.5.
        let uniform = measure_upsilon(phi, exact, alpha, 1.0, nu, 1.0, &[32, 64, 128, 256]).unwrap();
        let o = uniform.final_order().unwrap();
        assert!((o - 0.5).abs() < 0.2, "uniform order {o}");
    }

    #[test]
    fn newton_identity_holds_on_random_reals() {
        let mut rng = SplitMix64::new(0x5eed_1dea);
        for _ in 0..1000 {
            let a = rng.uniform(-3.0, 3.0);
            let b = rng.uniform(-3.0, 3.0);
            let scale = 1.0 + a.abs().max(b.abs()).powi(3);
            assert!(newton_identity_gap(a, b) <= 1e-12 * scale);
        }
        assert_eq!(newton_identity_gap(0.7, 0.7), 0.0);
    }

    #[test]
    fn remainder_decays_quadratically_under_strong_grading() {
        let case = ManufacturedCase::by_name("sine-bump").unwrap();
        let alpha = 0.6;
        let report =
            measure_newton_remainder(case, alpha, 2.0 / alpha + 0.1, alpha / 2.0, &[16, 32, 64, 128])
                .unwrap();
        let o = report.final_order().unwrap();
        assert!((o - 2.0).abs() < 0.3, "remainder order {o}");
        assert!(report.g_cube_norm > 0.0);
    }

    #[test]
    fn g_cube_norm_matches_closed_form_for_pyramid() {
        // X(x) = x(1-|x|) on (-1,1): int X^6 dx = 2 int_0^1 x^6(1-x)^6
        // = 2 B(7,7) = 2*6!*6!/13!.
        let case = ManufacturedCase::by_name("pyramid-bump").unwrap();
        let b77 = 2.0 * (ln_gamma(7.0) + ln_gamma(7.0) - ln_gamma(14.0)).exp();
        let expect = b77; // per axis
        let got = g_cube_norm(case);
        assert!((got - expect).abs() < 1e-12 * expect, "{got} vs {expect}");
    }

    #[test]
    fn small_study_produces_decreasing_errors_and_rates() {
        let case = ManufacturedCase::by_name("sine-bump").unwrap();
        let report = convergence_study(
            case,
            0.5,
            2.0 / 0.5 + 0.1,
            0.25,
            1,
            &[2, 4],
            Coupling::HalfInverse,
            |_| {},
        );
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert!(row.error.is_none(), "{:?}", row.error);
            assert!(row.e_u > 0.0 && row.e_sigma > 0.0);
        }
        assert!(report.rows[1].e_u < report.rows[0].e_u);
        assert!(report.rows[1].r_u_h.is_some());
        assert!(report.rows[0].r_u_h.is_none());
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().next().unwrap().starts_with("case,alpha"));
        let md = report.to_markdown();
        assert!(md.lines().count() >= 5);
    }

    #[test]
    fn coupled_resolution_scales_with_domain_width() {
        let sine = ManufacturedCase::by_name("sine-bump").unwrap();
        let quad = ManufacturedCase::by_name("quadratic-bump").unwrap();
        assert_eq!(sine.coupled_nx(8), 16);
        assert_eq!(quad.coupled_nx(8), 32);
    }

    #[test]
    fn sig4_formats_plainly_and_scientifically() {
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(1.98), "1.980");
        assert_eq!(sig4(123.4567), "123.5");
        assert_eq!(sig4(0.0001234), "1.234e-4");
    }
}

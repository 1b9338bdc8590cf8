//! Mixed finite element pairs on structured triangulations: fluxes in
//! the Raviart-Thomas space RT_k, scalars in discontinuous P_k, for
//! k in {0, 1}.
//!
//! Flux degrees of freedom are normal-trace densities: the mean of
//! w . n over each edge (plus the mean against the linear edge
//! coordinate for k = 1) and, for k = 1, component averages over the
//! element interior.  With this normalization the RT_0 basis function
//! of an edge e has constant divergence +-|e|/|Q| on its element Q.
//! Edge normals follow the global edge orientation (ascending vertex
//! index), so shared dofs agree across neighbors without sign tables.
//!
//! The structured mesh has two element congruence classes, and all
//! class geometry is translation invariant, so each local basis and
//! each local form matrix is computed once per class and reused
//! verbatim across elements.  All volume integrals use a symmetric
//! 12-point rule exact to degree 6; edge moments use 4-point
//! Gauss-Legendre, exact to degree 7.

use crate::dense::{self, DMat, Lu};
use crate::error::{Error, Result};
use crate::mesh::RectMesh;
use crate::sparse::{Csr, Triplets};
use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Number of volume quadrature points per element.
pub const N_QUAD: usize = 12;
/// Number of quadrature points per edge.
pub const N_EDGE_QUAD: usize = 4;

// Symmetric 12-point triangle rule, exact to degree 6.  Barycentric
// generators; weights sum to one.
const TRI_W: [f64; 3] = [0.116786275726379, 0.050844906370207, 0.082851075618374];
const TRI_AB: [(f64, f64); 2] =
    [(0.501426509658179, 0.249286745170910), (0.873821971016996, 0.063089014491502)];
const TRI_C: [f64; 3] = [0.053145049844816, 0.310352451033785, 0.636502499121399];

/// Gauss-Legendre nodes and weights on [0, 1]; weights sum to one.
const EDGE_S: [f64; N_EDGE_QUAD] = [
    0.069431844202973712,
    0.33000947820757187,
    0.66999052179242813,
    0.93056815579702629,
];
const EDGE_W: [f64; N_EDGE_QUAD] = [
    0.173927422568726929,
    0.326072577431273071,
    0.326072577431273071,
    0.173927422568726929,
];

/// Barycentric points and unit weights of the degree-6 volume rule.
fn triangle_rule() -> ([[f64; 3]; N_QUAD], [f64; N_QUAD]) {
    let mut pts = [[0.0; 3]; N_QUAD];
    let mut w = [0.0; N_QUAD];
    let mut idx = 0;
    for g in 0..2 {
        let (a, b) = TRI_AB[g];
        for r in 0..3 {
            let mut bary = [b; 3];
            bary[r] = a;
            pts[idx] = bary;
            w[idx] = TRI_W[g];
            idx += 1;
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for p in PERMS {
        pts[idx] = [TRI_C[p[0]], TRI_C[p[1]], TRI_C[p[2]]];
        w[idx] = TRI_W[2];
        idx += 1;
    }
    (pts, w)
}

/// Whether a coefficient vector represents a scalar or a flux field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Scalar,
    Flux,
}

/// Coefficient vector of a discrete function.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub role: FieldRole,
    pub coeffs: Vec<f64>,
}

/// Scalings used by the local monomial bases: element widths for the
/// linear terms and a single length for the quadratic Raviart-Thomas
/// generators (which must stay scalar multiples of x (x, y)-type
/// fields to remain inside the space).
#[derive(Debug, Clone, Copy)]
struct MonoScale {
    dx: f64,
    dy: f64,
    ell: f64,
    centroid: [f64; 2],
}

impl MonoScale {
    /// Flux monomial value and divergence at an anchor-offset point.
    fn flux(&self, k: usize, m: usize, p: [f64; 2]) -> ([f64; 2], f64) {
        let xh = p[0] - self.centroid[0];
        let yh = p[1] - self.centroid[1];
        if k == 0 {
            match m {
                0 => ([1.0, 0.0], 0.0),
                1 => ([0.0, 1.0], 0.0),
                _ => ([xh / self.ell, yh / self.ell], 2.0 / self.ell),
            }
        } else {
            let (x, y) = (xh / self.dx, yh / self.dy);
            let q = 1.0 / (self.ell * self.ell);
            match m {
                0 => ([1.0, 0.0], 0.0),
                1 => ([0.0, 1.0], 0.0),
                2 => ([x, 0.0], 1.0 / self.dx),
                3 => ([0.0, x], 0.0),
                4 => ([y, 0.0], 0.0),
                5 => ([0.0, y], 1.0 / self.dy),
                6 => ([xh * xh * q, xh * yh * q], 3.0 * xh * q),
                _ => ([xh * yh * q, yh * yh * q], 3.0 * yh * q),
            }
        }
    }

    /// Scalar basis value at an anchor-offset point (the basis is
    /// already dual-free: {1, X, Y} needs no moment solve).
    fn scalar(&self, i: usize, p: [f64; 2]) -> f64 {
        match i {
            0 => 1.0,
            1 => (p[0] - self.centroid[0]) / self.dx,
            _ => (p[1] - self.centroid[1]) / self.dy,
        }
    }
}

/// Geometry of one local edge, endpoints in global (ascending-index)
/// order as offsets from the element anchor vertex.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ClassEdge {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub normal: [f64; 2],
}

/// Per-congruence-class basis and form tables, shared by all elements
/// of the class.
pub(crate) struct ClassTables {
    pub corners: [[f64; 2]; 3],
    pub area: f64,
    pub edge: [ClassEdge; 3],
    /// Volume quadrature: anchor-offset points and physical weights.
    pub qp: [[f64; 2]; N_QUAD],
    pub qw: [f64; N_QUAD],
    /// Flux basis values and divergences at the volume points.
    pub w_val: Vec<[[f64; 2]; N_QUAD]>,
    pub w_div: Vec<[f64; N_QUAD]>,
    /// Scalar basis values at the volume points.
    pub phi: Vec<[f64; N_QUAD]>,
    pub m_sigma: DMat,
    pub b_div: DMat,
    pub m_u: DMat,
    pub m_u_lu: Lu,
}

fn build_class(mesh: &RectMesh, t: usize, k: usize) -> Result<ClassTables> {
    let tri = &mesh.triangles[t];
    let anchor = mesh.vertices[tri.v[0]];
    let coords = mesh.triangle_coords(t);
    let offset = |p: [f64; 2]| [p[0] - anchor[0], p[1] - anchor[1]];
    let corners = [offset(coords[0]), offset(coords[1]), offset(coords[2])];
    let area = mesh.signed_area(t);
    if !(area > 0.0) {
        return Err(Error::Singular { step: t, detail: "nonpositive element area" });
    }
    let centroid = [
        (corners[0][0] + corners[1][0] + corners[2][0]) / 3.0,
        (corners[0][1] + corners[1][1] + corners[2][1]) / 3.0,
    ];
    let scale =
        MonoScale { dx: mesh.dx, dy: mesh.dy, ell: mesh.dx.max(mesh.dy), centroid };

    let mut edge = [ClassEdge { lo: [0.0; 2], hi: [0.0; 2], normal: [0.0; 2] }; 3];
    for i in 0..3 {
        let ge = tri.e[i];
        let ed = &mesh.edges[ge];
        edge[i] = ClassEdge {
            lo: offset(mesh.vertices[ed.v[0]]),
            hi: offset(mesh.vertices[ed.v[1]]),
            normal: mesh.edge_normal(ge),
        };
    }

    let (bary, unit_w) = triangle_rule();
    let mut qp = [[0.0; 2]; N_QUAD];
    let mut qw = [0.0; N_QUAD];
    for q in 0..N_QUAD {
        for c in 0..3 {
            qp[q][0] += bary[q][c] * corners[c][0];
            qp[q][1] += bary[q][c] * corners[c][1];
        }
        qw[q] = unit_w[q] * area;
    }

    let n_fl = 3 * (k + 1) + 2 * k;
    let n_sc = (k + 1) * (k + 2) / 2;

    // Moment matrix: row per dof functional, column per monomial.
    let mut moments = DMat::zeros(n_fl, n_fl);
    for i in 0..3 {
        let e = &edge[i];
        for m in 0..=k {
            let row = (k + 1) * i + m;
            for q in 0..N_EDGE_QUAD {
                let s = EDGE_S[q];
                let p = [e.lo[0] + s * (e.hi[0] - e.lo[0]), e.lo[1] + s * (e.hi[1] - e.lo[1])];
                let xi = 2.0 * s - 1.0;
                let xi_m = if m == 0 { 1.0 } else { xi };
                for j in 0..n_fl {
                    let (wv, _) = scale.flux(k, j, p);
                    moments[(row, j)] +=
                        EDGE_W[q] * (wv[0] * e.normal[0] + wv[1] * e.normal[1]) * xi_m;
                }
            }
        }
    }
    if k == 1 {
        for c in 0..2 {
            let row = 6 + c;
            for q in 0..N_QUAD {
                for j in 0..n_fl {
                    let (wv, _) = scale.flux(k, j, qp[q]);
                    moments[(row, j)] += qw[q] / area * wv[c];
                }
            }
        }
    }
    let coef = dense::invert(&moments)
        .map_err(|_| Error::Singular { step: t, detail: "flux moment system singular" })?;
    // Duality residual guards against any conditioning surprise.
    let resid = moments.matmul(&coef);
    let eye = DMat::identity(n_fl);
    let mut worst = 0.0_f64;
    for (a, b) in resid.data.iter().zip(&eye.data) {
        worst = worst.max((a - b).abs());
    }
    if worst > 1e-9 {
        return Err(Error::Singular { step: t, detail: "flux moment system ill-conditioned" });
    }

    // Tabulate basis values at the volume points.
    let mut w_val = vec![[[0.0; 2]; N_QUAD]; n_fl];
    let mut w_div = vec![[0.0; N_QUAD]; n_fl];
    for j in 0..n_fl {
        for q in 0..N_QUAD {
            let mut val = [0.0; 2];
            let mut dv = 0.0;
            for m in 0..n_fl {
                let c = coef[(m, j)];
                if c != 0.0 {
                    let (mv, md) = scale.flux(k, m, qp[q]);
                    val[0] += c * mv[0];
                    val[1] += c * mv[1];
                    dv += c * md;
                }
            }
            w_val[j][q] = val;
            w_div[j][q] = dv;
        }
    }
    let mut phi = vec![[0.0; N_QUAD]; n_sc];
    for i in 0..n_sc {
        for q in 0..N_QUAD {
            phi[i][q] = scale.scalar(i, qp[q]);
        }
    }

    // Local forms by quadrature (entries are polynomial integrands of
    // degree at most 4, so the rule evaluates them exactly).
    let mut m_sigma = DMat::zeros(n_fl, n_fl);
    for i in 0..n_fl {
        for j in 0..n_fl {
            let mut s = 0.0;
            for q in 0..N_QUAD {
                s += qw[q] * (w_val[i][q][0] * w_val[j][q][0] + w_val[i][q][1] * w_val[j][q][1]);
            }
            m_sigma[(i, j)] = s;
        }
    }
    let mut b_div = DMat::zeros(n_sc, n_fl);
    for i in 0..n_sc {
        for j in 0..n_fl {
            let mut s = 0.0;
            for q in 0..N_QUAD {
                s += qw[q] * phi[i][q] * w_div[j][q];
            }
            b_div[(i, j)] = s;
        }
    }
    let mut m_u = DMat::zeros(n_sc, n_sc);
    for i in 0..n_sc {
        for j in 0..n_sc {
            let mut s = 0.0;
            for q in 0..N_QUAD {
                s += qw[q] * phi[i][q] * phi[j][q];
            }
            m_u[(i, j)] = s;
        }
    }
    let m_u_lu = Lu::factor(&m_u)
        .map_err(|_| Error::Singular { step: t, detail: "scalar mass block singular" })?;

    Ok(ClassTables { corners, area, edge, qp, qw, w_val, w_div, phi, m_sigma, b_div, m_u, m_u_lu })
}

/// The mixed pair RT_k x P_k-discontinuous on a structured mesh.
pub struct MixedSpace {
    pub k: usize,
    pub mesh: RectMesh,
    pub n_flux: usize,
    pub n_scalar: usize,
    /// Flux dofs per edge (k + 1).
    pub edge_moments: usize,
    /// Interior flux dofs per element (2k).
    pub cell_flux_dofs: usize,
    /// Scalar dofs per element.
    pub cell_scalar_dofs: usize,
    classes: [ClassTables; 2],
}

impl MixedSpace {
    pub fn build(mesh: RectMesh, k: usize) -> Result<MixedSpace> {
        if k > 1 {
            return Err(Error::ParamDomain {
                name: "k",
                value: k as f64,
                constraint: "k in {0, 1}",
            });
        }
        let classes = [build_class(&mesh, 0, k)?, build_class(&mesh, 1, k)?];
        debug_assert_eq!(mesh.triangles[0].class, 0);
        debug_assert_eq!(mesh.triangles[1].class, 1);
        // The class tables assume translation invariance; verify it.
        for t in 0..mesh.n_triangles() {
            let tri = &mesh.triangles[t];
            let ct = &classes[tri.class as usize];
            let anchor = mesh.vertices[tri.v[0]];
            let coords = mesh.triangle_coords(t);
            let tol = 1e-12 * (1.0 + mesh.h);
            for c in 0..3 {
                if (coords[c][0] - anchor[0] - ct.corners[c][0]).abs() > tol
                    || (coords[c][1] - anchor[1] - ct.corners[c][1]).abs() > tol
                {
                    return Err(Error::Singular { step: t, detail: "class pattern mismatch" });
                }
            }
            for i in 0..3 {
                let ed = &mesh.edges[tri.e[i]];
                let lo = mesh.vertices[ed.v[0]];
                if (lo[0] - anchor[0] - ct.edge[i].lo[0]).abs() > tol
                    || (lo[1] - anchor[1] - ct.edge[i].lo[1]).abs() > tol
                {
                    return Err(Error::Singular { step: t, detail: "edge pattern mismatch" });
                }
            }
        }
        let edge_moments = k + 1;
        let cell_flux_dofs = 2 * k;
        let cell_scalar_dofs = (k + 1) * (k + 2) / 2;
        let n_flux = edge_moments * mesh.n_edges() + cell_flux_dofs * mesh.n_triangles();
        let n_scalar = cell_scalar_dofs * mesh.n_triangles();
        Ok(MixedSpace {
            k,
            mesh,
            n_flux,
            n_scalar,
            edge_moments,
            cell_flux_dofs,
            cell_scalar_dofs,
            classes,
        })
    }

    pub(crate) fn class(&self, t: usize) -> &ClassTables {
        &self.classes[self.mesh.triangles[t].class as usize]
    }

    /// Anchor vertex (first vertex) of an element, the origin of all
    /// class-table offsets.
    pub fn anchor(&self, t: usize) -> [f64; 2] {
        self.mesh.vertices[self.mesh.triangles[t].v[0]]
    }

    /// Flux dofs per element.
    pub fn n_local_flux(&self) -> usize {
        3 * self.edge_moments + self.cell_flux_dofs
    }

    /// First interior flux dof (k = 1 only).
    pub fn interior_flux_offset(&self) -> usize {
        self.edge_moments * self.mesh.n_edges()
    }

    /// Global flux dofs of an element, in local order: the moments of
    /// edges 0..3, then interior components.
    pub fn flux_dofs(&self, t: usize, out: &mut Vec<usize>) {
        out.clear();
        let tri = &self.mesh.triangles[t];
        for i in 0..3 {
            for m in 0..self.edge_moments {
                out.push(self.edge_moments * tri.e[i] + m);
            }
        }
        let base = self.interior_flux_offset();
        for c in 0..self.cell_flux_dofs {
            out.push(base + self.cell_flux_dofs * t + c);
        }
    }

    /// Global scalar dof for a local basis index.
    pub fn scalar_dof(&self, t: usize, i: usize) -> usize {
        self.cell_scalar_dofs * t + i
    }

    /// Element mean of a scalar field (the constant basis function has
    /// unit mean and the others have zero mean).
    pub fn scalar_element_mean(&self, field: &DiscreteField, t: usize) -> f64 {
        debug_assert_eq!(field.role, FieldRole::Scalar);
        field.coeffs[self.scalar_dof(t, 0)]
    }

    /// Mean normal-flux moment of a flux field on an edge.
    pub fn flux_edge_moment(&self, field: &DiscreteField, e: usize, m: usize) -> f64 {
        debug_assert_eq!(field.role, FieldRole::Flux);
        field.coeffs[self.edge_moments * e + m]
    }

    /// Assemble the global forms: the flux mass matrix, the divergence
    /// coupling (phi_i, div w_j), and the scalar mass matrix.
    pub fn assemble_forms(&self) -> AssembledForms {
        let nt = self.mesh.n_triangles();
        let n_fl = self.n_local_flux();
        let n_sc = self.cell_scalar_dofs;
        let mut ms = Triplets::with_capacity(self.n_flux, self.n_flux, nt * n_fl * n_fl);
        let mut b = Triplets::with_capacity(self.n_scalar, self.n_flux, nt * n_sc * n_fl);
        let mut mu = Triplets::with_capacity(self.n_scalar, self.n_scalar, nt * n_sc * n_sc);
        let mut gdofs = Vec::new();
        for t in 0..nt {
            self.flux_dofs(t, &mut gdofs);
            let ct = self.class(t);
            for i in 0..n_fl {
                for j in 0..n_fl {
                    ms.push(gdofs[i], gdofs[j], ct.m_sigma[(i, j)]);
                }
            }
            for i in 0..n_sc {
                let gi = self.scalar_dof(t, i);
                for j in 0..n_fl {
                    b.push(gi, gdofs[j], ct.b_div[(i, j)]);
                }
                for j in 0..n_sc {
                    mu.push(gi, self.scalar_dof(t, j), ct.m_u[(i, j)]);
                }
            }
        }
        AssembledForms { m_sigma: ms.to_csr(), b_div: b.to_csr(), m_u: mu.to_csr() }
    }

    /// Elementwise L^2 projection onto the scalar space.
    pub fn l2_project(&self, f: impl Fn(f64, f64) -> f64) -> DiscreteField {
        let mut coeffs = vec![0.0; self.n_scalar];
        let n_sc = self.cell_scalar_dofs;
        let mut rhs = vec![0.0; n_sc];
        for t in 0..self.mesh.n_triangles() {
            let ct = self.class(t);
            let a = self.anchor(t);
            for v in rhs.iter_mut() {
                *v = 0.0;
            }
            for q in 0..N_QUAD {
                let fv = f(a[0] + ct.qp[q][0], a[1] + ct.qp[q][1]);
                for i in 0..n_sc {
                    rhs[i] += ct.qw[q] * fv * ct.phi[i][q];
                }
            }
            let x = ct.m_u_lu.solve(&rhs);
            coeffs[self.scalar_dof(t, 0)..self.scalar_dof(t, 0) + n_sc].copy_from_slice(&x);
        }
        DiscreteField { role: FieldRole::Scalar, coeffs }
    }

    /// Interpolation onto the flux space by its dof functionals (edge
    /// normal-trace moments and, for k = 1, interior averages); this is
    /// the operator whose divergence commutes with the scalar
    /// projection.
    pub fn fortin_interpolate(&self, w: impl Fn(f64, f64) -> [f64; 2]) -> DiscreteField {
        let mut coeffs = vec![0.0; self.n_flux];
        for e in 0..self.mesh.n_edges() {
            let ed = &self.mesh.edges[e];
            let lo = self.mesh.vertices[ed.v[0]];
            let hi = self.mesh.vertices[ed.v[1]];
            let n = self.mesh.edge_normal(e);
            for m in 0..self.edge_moments {
                let mut val = 0.0;
                for q in 0..N_EDGE_QUAD {
                    let s = EDGE_S[q];
                    let p = [lo[0] + s * (hi[0] - lo[0]), lo[1] + s * (hi[1] - lo[1])];
                    let wv = w(p[0], p[1]);
                    let xi_m = if m == 0 { 1.0 } else { 2.0 * s - 1.0 };
                    val += EDGE_W[q] * (wv[0] * n[0] + wv[1] * n[1]) * xi_m;
                }
                coeffs[self.edge_moments * e + m] = val;
            }
        }
        if self.cell_flux_dofs > 0 {
            let base = self.interior_flux_offset();
            for t in 0..self.mesh.n_triangles() {
                let ct = self.class(t);
                let a = self.anchor(t);
                let mut avg = [0.0; 2];
                for q in 0..N_QUAD {
                    let wv = w(a[0] + ct.qp[q][0], a[1] + ct.qp[q][1]);
                    avg[0] += ct.qw[q] / ct.area * wv[0];
                    avg[1] += ct.qw[q] / ct.area * wv[1];
                }
                coeffs[base + 2 * t] = avg[0];
                coeffs[base + 2 * t + 1] = avg[1];
            }
        }
        DiscreteField { role: FieldRole::Flux, coeffs }
    }

    /// L^2(Omega) distance between a scalar field and an exact
    /// function evaluated at time `t_eval`.
    pub fn l2_error_scalar(
        &self,
        field: &DiscreteField,
        t_eval: f64,
        exact: impl Fn(f64, f64, f64) -> f64,
    ) -> f64 {
        debug_assert_eq!(field.role, FieldRole::Scalar);
        let n_sc = self.cell_scalar_dofs;
        let mut total = 0.0;
        for t in 0..self.mesh.n_triangles() {
            let ct = self.class(t);
            let a = self.anchor(t);
            let c0 = self.scalar_dof(t, 0);
            for q in 0..N_QUAD {
                let mut uh = 0.0;
                for i in 0..n_sc {
                    uh += field.coeffs[c0 + i] * ct.phi[i][q];
                }
                let d = uh - exact(a[0] + ct.qp[q][0], a[1] + ct.qp[q][1], t_eval);
                total += ct.qw[q] * d * d;
            }
        }
        total.sqrt()
    }

    /// L^2(Omega) distance between a flux field and an exact vector
    /// field evaluated at time `t_eval`.
    pub fn l2_error_flux(
        &self,
        field: &DiscreteField,
        t_eval: f64,
        exact: impl Fn(f64, f64, f64) -> [f64; 2],
    ) -> f64 {
        debug_assert_eq!(field.role, FieldRole::Flux);
        let n_fl = self.n_local_flux();
        let mut gdofs = Vec::new();
        let mut total = 0.0;
        for t in 0..self.mesh.n_triangles() {
            self.flux_dofs(t, &mut gdofs);
            let ct = self.class(t);
            let a = self.anchor(t);
            for q in 0..N_QUAD {
                let mut wh = [0.0; 2];
                for j in 0..n_fl {
                    let c = field.coeffs[gdofs[j]];
                    wh[0] += c * ct.w_val[j][q][0];
                    wh[1] += c * ct.w_val[j][q][1];
                }
                let ex = exact(a[0] + ct.qp[q][0], a[1] + ct.qp[q][1], t_eval);
                let (d0, d1) = (wh[0] - ex[0], wh[1] - ex[1]);
                total += ct.qw[q] * (d0 * d0 + d1 * d1);
            }
        }
        total.sqrt()
    }

    /// Worst divergence-moment mismatch of the flux interpolant: the
    /// maximum over elements and scalar basis functions of
    /// |(div(Pi_h w) - div w, phi_i)_T|. Vanishes to quadrature
    /// accuracy whenever div w lies in the scalar space, which is the
    /// commuting property of the interpolation pair.
    pub fn commuting_residual(
        &self,
        w: impl Fn(f64, f64) -> [f64; 2],
        div_w: impl Fn(f64, f64) -> f64,
    ) -> f64 {
        let piw = self.fortin_interpolate(&w);
        let mut gdofs = Vec::new();
        let mut worst = 0.0_f64;
        for t in 0..self.mesh.n_triangles() {
            self.flux_dofs(t, &mut gdofs);
            let ct = self.class(t);
            let a = self.anchor(t);
            for i in 0..self.cell_scalar_dofs {
                let mut moment = 0.0;
                for q in 0..N_QUAD {
                    let mut div_h = 0.0;
                    for j in 0..self.n_local_flux() {
                        div_h += piw.coeffs[gdofs[j]] * ct.w_div[j][q];
                    }
                    let dv = div_w(a[0] + ct.qp[q][0], a[1] + ct.qp[q][1]);
                    moment += ct.qw[q] * (div_h - dv) * ct.phi[i][q];
                }
                worst = worst.max(moment.abs());
            }
        }
        worst
    }
}

/// Global bilinear forms of the mixed pair.
pub struct AssembledForms {
    pub m_sigma: Csr,
    pub b_div: Csr,
    pub m_u: Csr,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::sparse::LdlFactor;

    fn space(ax: f64, ay: f64, bx: f64, by: f64, nx: usize, ny: usize, k: usize) -> MixedSpace {
        let mesh = RectMesh::build(ax, ay, bx, by, nx, ny).unwrap();
        MixedSpace::build(mesh, k).unwrap()
    }

    #[test]
    fn quadrature_rules_are_exact_to_design_degree() {
        let (bary, w) = triangle_rule();
        let wsum: f64 = w.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-14);
        // On the reference triangle, integral of x^p y^q equals
        // p! q! / (p + q + 2)!.
        let factorial = |n: usize| (1..=n).product::<usize>() as f64;
        for p in 0..=6usize {
            for q in 0..=(6 - p) {
                let mut num = 0.0;
                for i in 0..N_QUAD {
                    let x = bary[i][1];
                    let y = bary[i][2];
                    num += 0.5 * w[i] * x.powi(p as i32) * y.powi(q as i32);
                }
                let exact = factorial(p) * factorial(q) / factorial(p + q + 2);
                assert!(
                    (num - exact).abs() < 1e-15,
                    "degree ({p},{q}): {num} vs {exact}"
                );
            }
        }
        // Edge rule: integral of s^p on [0,1] is 1/(p+1), exact to
        // degree 7.
        for p in 0..=7usize {
            let num: f64 =
                (0..N_EDGE_QUAD).map(|q| EDGE_W[q] * EDGE_S[q].powi(p as i32)).sum();
            assert!((num - 1.0 / (p as f64 + 1.0)).abs() < 1e-15, "edge degree {p}");
        }
    }

    #[test]
    fn dof_counts_match_dimension_formulas() {
        let s0 = space(0.0, 0.0, 1.0, 1.0, 4, 3, 0);
        assert_eq!(s0.n_flux, s0.mesh.n_edges());
        assert_eq!(s0.n_scalar, s0.mesh.n_triangles());
        let s1 = space(0.0, 0.0, 1.0, 1.0, 4, 3, 1);
        assert_eq!(s1.n_flux, 2 * s1.mesh.n_edges() + 2 * s1.mesh.n_triangles());
        assert_eq!(s1.n_scalar, 3 * s1.mesh.n_triangles());
    }

    #[test]
    fn p0_scalar_mass_is_element_area() {
        let s = space(0.0, 0.0, 1.0, 1.0, 1, 1, 0);
        let forms = s.assemble_forms();
        for t in 0..2 {
            assert!((forms.m_u.get(t, t) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rt0_divergence_closed_form() {
        let s = space(0.0, 0.0, 1.0, 1.0, 2, 2, 0);
        let forms = s.assemble_forms();
        for t in 0..s.mesh.n_triangles() {
            let tri = s.mesh.triangles[t];
            let ct = s.class(t);
            for i in 0..3 {
                let len = s.mesh.edge_length(tri.e[i]);
                // Constant divergence +-|e|/|Q| for the basis dual to
                // this element's local edge dof.
                let expected = tri.sign[i] as f64 * len / ct.area;
                for q in 0..N_QUAD {
                    assert!(
                        (ct.w_div[i][q] - expected).abs() < 1e-10 * expected.abs(),
                        "t={t} edge {i}"
                    );
                }
                // And B entries are +-|e| (division by |Q| times area).
                let b = forms.b_div.get(t, tri.e[i]);
                assert!((b - tri.sign[i] as f64 * len).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_matrices_positive_definite_and_symmetric() {
        for k in [0usize, 1] {
            let s = space(-1.0, -1.0, 1.0, 1.0, 2, 4, k);
            let forms = s.assemble_forms();
            assert_eq!(forms.m_sigma.symmetry_error(), 0.0);
            assert_eq!(forms.m_u.symmetry_error(), 0.0);
            // LDL^T succeeds only with strictly positive pivots, which
            // certifies positive definiteness directly.
            let n = forms.m_sigma.nrows;
            LdlFactor::new(&forms.m_sigma, (0..n).collect()).unwrap();
            let n = forms.m_u.nrows;
            LdlFactor::new(&forms.m_u, (0..n).collect()).unwrap();
        }
    }

    #[test]
    fn projection_reproduces_space_and_is_orthogonal() {
        let s = space(0.0, 0.0, 1.0, 1.0, 3, 3, 1);
        // A global affine function lies in P1-dc: reproduced exactly.
        let f = |x: f64, y: f64| 2.0 - 0.3 * x + 0.7 * y;
        let ph = s.l2_project(f);
        let err = s.l2_error_scalar(&ph, 0.0, |x, y, _| f(x, y));
        assert!(err < 1e-12, "affine reproduction {err}");
        // Orthogonality (P_h f - f, phi_i) = 0 at quadrature level for
        // generic smooth data.
        let g = |x: f64, y: f64| (1.3 * x + 0.2).sin() * (0.9 * y).cos();
        let pg = s.l2_project(g);
        for t in 0..s.mesh.n_triangles() {
            let ct = s.class(t);
            let a = s.anchor(t);
            let c0 = s.scalar_dof(t, 0);
            for i in 0..s.cell_scalar_dofs {
                let mut moment = 0.0;
                for q in 0..N_QUAD {
                    let mut uh = 0.0;
                    for j in 0..s.cell_scalar_dofs {
                        uh += pg.coeffs[c0 + j] * ct.phi[j][q];
                    }
                    let gv = g(a[0] + ct.qp[q][0], a[1] + ct.qp[q][1]);
                    moment += ct.qw[q] * (uh - gv) * ct.phi[i][q];
                }
                assert!(moment.abs() < 1e-13, "t={t} i={i}: {moment}");
            }
        }
        // Constant onto P0.
        let s0 = space(0.0, 0.0, 1.0, 1.0, 2, 2, 0);
        let p1 = s0.l2_project(|_, _| 3.5);
        for c in &p1.coeffs {
            assert!((c - 3.5).abs() < 1e-13);
        }
    }

    #[test]
    fn fortin_reproduces_flux_space_fields() {
        // Constants lie in RT_0.
        let s0 = space(0.0, 0.0, 1.0, 1.0, 2, 2, 0);
        let pi_w = s0.fortin_interpolate(|_, _| [1.0, 0.0]);
        let err = s0.l2_error_flux(&pi_w, 0.0, |_, _, _| [1.0, 0.0]);
        assert!(err < 1e-13, "constant reproduction {err}");
        // w = (x, y) lies in RT_0 and has divergence 2.
        let pw = s0.fortin_interpolate(|x, y| [x, y]);
        let err = s0.l2_error_flux(&pw, 0.0, |x, y, _| [x, y]);
        assert!(err < 1e-13, "(x,y) reproduction {err}");
        let mut gdofs = Vec::new();
        for t in 0..s0.mesh.n_triangles() {
            s0.flux_dofs(t, &mut gdofs);
            let ct = s0.class(t);
            for q in 0..N_QUAD {
                let div: f64 =
                    (0..3).map(|j| pw.coeffs[gdofs[j]] * ct.w_div[j][q]).sum();
                assert!((div - 2.0).abs() < 1e-12);
            }
        }
        // A genuinely quadratic RT_1 field: w = (x^2, xy) + affine part.
        let s1 = space(-1.0, -1.0, 1.0, 1.0, 2, 2, 1);
        let wf = |x: f64, y: f64| [x * x + 0.5 * x - y, x * y + 0.25];
        let piw = s1.fortin_interpolate(wf);
        let err = s1.l2_error_flux(&piw, 0.0, |x, y, _| wf(x, y));
        assert!(err < 1e-12, "RT1 reproduction {err}");
    }

    #[test]
    fn fortin_commutes_with_scalar_projection() {
        // For polynomial fields the commuting identity
        // (div(Pi w - w), v_h) = 0 holds to roundoff because all the
        // quadratures involved are exact.
        let mut rng = SplitMix64::new(2024);
        for k in [0usize, 1] {
            let s = space(0.0, 0.0, 2.0, 1.0, 3, 2, k);
            for _ in 0..5 {
                // Random polynomial components of degree <= k + 1.
                let mut c = [[0.0; 6]; 2];
                for comp in c.iter_mut() {
                    let terms = if k == 0 { 3 } else { 6 };
                    for v in comp.iter_mut().take(terms) {
                        *v = rng.uniform(-1.0, 1.0);
                    }
                }
                let wf = move |x: f64, y: f64| {
                    let eval = |a: &[f64; 6]| {
                        a[0] + a[1] * x + a[2] * y + a[3] * x * x + a[4] * x * y + a[5] * y * y
                    };
                    [eval(&c[0]), eval(&c[1])]
                };
                let div_w = move |x: f64, y: f64| {
                    (c[0][1] + 2.0 * c[0][3] * x + c[0][4] * y)
                        + (c[1][2] + c[1][4] * x + 2.0 * c[1][5] * y)
                };
                let piw = s.fortin_interpolate(wf);
                let mut gdofs = Vec::new();
                for t in 0..s.mesh.n_triangles() {
                    s.flux_dofs(t, &mut gdofs);
                    let ct = s.class(t);
                    let a = s.anchor(t);
                    for i in 0..s.cell_scalar_dofs {
                        let mut moment = 0.0;
                        for q in 0..N_QUAD {
                            let mut div_h = 0.0;
                            for j in 0..s.n_local_flux() {
                                div_h += piw.coeffs[gdofs[j]] * ct.w_div[j][q];
                            }
                            let dv = div_w(a[0] + ct.qp[q][0], a[1] + ct.qp[q][1]);
                            moment += ct.qw[q] * (div_h - dv) * ct.phi[i][q];
                        }
                        assert!(moment.abs() < 1e-10, "k={k} t={t} i={i}: {moment}");
                    }
                }
            }
        }
    }

    #[test]
    fn projection_and_interpolation_orders() {
        let f = |x: f64, y: f64| (1.3 * x + 0.2).sin() * (0.9 * y).cos();
        let wf = |x: f64, y: f64| [(y).sin(), (x).cos()];
        for k in [0usize, 1] {
            let mut scalar_err = Vec::new();
            let mut flux_err = Vec::new();
            for nx in [4usize, 8, 16] {
                let s = space(0.0, 0.0, 1.0, 1.0, nx, nx, k);
                let ph = s.l2_project(f);
                scalar_err.push(s.l2_error_scalar(&ph, 0.0, |x, y, _| f(x, y)));
                let piw = s.fortin_interpolate(wf);
                flux_err.push(s.l2_error_flux(&piw, 0.0, |x, y, _| wf(x, y)));
            }
            let expected = (k + 1) as f64;
            for errs in [&scalar_err, &flux_err] {
                let rate = (errs[1] / errs[2]).log2();
                assert!(
                    (rate - expected).abs() < 0.15,
                    "k={k}: errors {errs:?}, rate {rate}"
                );
            }
        }
    }

    #[test]
    fn zero_field_error_is_the_analytic_norm() {
        let s = space(0.0, 0.0, 1.0, 1.0, 8, 8, 1);
        let zero = DiscreteField { role: FieldRole::Scalar, coeffs: vec![0.0; s.n_scalar] };
        // |xy|_{L^2} over the unit square is 1/3.
        let err = s.l2_error_scalar(&zero, 0.0, |x, y, _| x * y);
        assert!((err - 1.0 / 3.0).abs() < 1e-14, "{err}");
    }

    #[test]
    fn invalid_order_rejected() {
        let mesh = RectMesh::build(0.0, 0.0, 1.0, 1.0, 2, 2).unwrap();
        assert!(MixedSpace::build(mesh, 2).is_err());
    }
}

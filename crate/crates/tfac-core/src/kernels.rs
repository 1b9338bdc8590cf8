//! Discrete convolution kernels of the nonuniform Alikhanov formula.
//!
//! On a mesh with steps dt_j and offset points t_{n-nu}, the discrete
//! Caputo derivative of a sequence {phi^j} is
//!
//!   D^alpha phi |_{t_{n-nu}} = sum_{j=1..n} K[n,j] (phi^j - phi^{j-1}).
//!
//! The kernels combine two families of coefficients,
//!
//!   a[n,j] = 1/dt_j * int_{t_{j-1}}^{min(t_{n-nu}, t_j)}
//!              omega_{1-alpha}(t_{n-nu} - s) ds,
//!   b[n,j] = 1/(dt_j (dt_j + dt_{j+1})) * int_{t_{j-1}}^{t_j}
//!              (s - t_{j-1})(t_j - s) d/ds omega_{1-alpha}(t_{n-nu} - s) ds,
//!
//! where a comes from piecewise-linear interpolation and b is the
//! quadratic correction that lifts the formula to second order away
//! from the initial time.  Both integrals have closed forms in the
//! weights omega_{2-alpha}, omega_{3-alpha}; for history entries far
//! from the current step the closed form of b cancels catastrophically,
//! so a series evaluation takes over there.
//!
//! The complementary kernels P[n,j] invert the convolution in the
//! summation-by-parts sense, sum_{j=i..n} P[n,j] K[j,i] = 1, and carry
//! the constants of the fractional Gronwall argument.  The executable
//! property checks for both families live in
//! [`KernelTables::check_properties`].

use crate::error::{Error, Result};
use crate::special::{gamma, mittag_leffler, omega, pow_diff};
use crate::temporal::GradedTimeMesh;
use crate::PI_A;
use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Packed lower-triangular table, rows 1..=n, row r holding r entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTri {
    n: usize,
    data: Vec<f64>,
}

impl LowerTri {
    fn zeros(n: usize) -> Self {
        LowerTri { n, data: vec![0.0; n * (n + 1) / 2] }
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row >= 1 && row <= self.n && col >= 1 && col <= row);
        row * (row - 1) / 2 + (col - 1)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.idx(row, col)]
    }

    #[inline]
    fn set(&mut self, row: usize, col: usize, v: f64) {
        let i = self.idx(row, col);
        self.data[i] = v;
    }
}

/// Interpolation coefficient a[n,j], 1 <= j <= n.
pub fn coeff_a(mesh: &GradedTimeMesh, alpha: f64, n: usize, j: usize) -> Result<f64> {
    check_alpha(alpha)?;
    check_indices(mesh, n, j, n)?;
    let t_off = mesh.offset_level(n);
    let dt_j = mesh.step(j);
    if j == n {
        // Upper limit t_{n-nu}: integral = omega_{2-alpha}((1-nu) dt_n).
        Ok(omega(2.0 - alpha, t_off - mesh.node(n - 1)) / dt_j)
    } else {
        // [omega_{2-alpha}(t_off - t_{j-1}) - omega_{2-alpha}(t_off - t_j)] / dt_j,
        // evaluated as a cancellation-free power difference.
        let tau_j = t_off - mesh.node(j);
        Ok(pow_diff(tau_j, dt_j, 1.0 - alpha) / (gamma(2.0 - alpha) * dt_j))
    }
}

/// Quadratic-correction coefficient b[n,j], 1 <= j <= n-1.
pub fn coeff_b(mesh: &GradedTimeMesh, alpha: f64, n: usize, j: usize) -> Result<f64> {
    check_alpha(alpha)?;
    check_indices(mesh, n, j, n - 1)?;
    let t_off = mesh.offset_level(n);
    let dt_j = mesh.step(j);
    let tau_j = t_off - mesh.node(j);
    let i = b_integral(alpha, tau_j, dt_j);
    Ok(i / (dt_j * (dt_j + mesh.step(j + 1))))
}

/// int_{t_{j-1}}^{t_j} (s - t_{j-1})(t_j - s) d/ds omega_{1-alpha}(t_off - s) ds
/// with tau_j = t_off - t_j > 0 and dt = t_j - t_{j-1}.
fn b_integral(alpha: f64, tau_j: f64, dt: f64) -> f64 {
    let c = 0.5 * dt;
    let tau_mid = tau_j + c;
    let r = c / tau_mid;
    if r <= 0.5 {
        b_integral_series(alpha, tau_mid, c, r)
    } else {
        b_integral_closed(alpha, tau_j, dt)
    }
}

/// Odd-moment series around the interval midpoint:
///   I = (4 c^2 tau_m^{-alpha} / Gamma(1-alpha))
///       * sum_{m>=0} (alpha)_{2m+1} / ((2m+1)! (2m+3)) * r^{2m+1},
/// r = c/tau_m < 1.  Every term is positive; convergence is geometric
/// in r^2.
fn b_integral_series(alpha: f64, tau_mid: f64, c: f64, r: f64) -> f64 {
    let mut term = alpha * r / 3.0; // m = 0: (alpha)_1 / (1! * 3) * r
    let mut sum = term;
    let mut m = 0u32;
    loop {
        let k = 2 * m + 1;
        // ratio between consecutive odd terms
        let factor = (alpha + k as f64) * (alpha + k as f64 + 1.0)
            / ((k as f64 + 1.0) * (k as f64 + 2.0))
            * (k as f64 + 2.0)
            / (k as f64 + 4.0)
            * r
            * r;
        term *= factor;
        sum += term;
        m += 1;
        if term < 1e-17 * sum || m > 600 {
            break;
        }
    }
    4.0 * c * c * tau_mid.powf(-alpha) / gamma(1.0 - alpha) * sum
}

/// Closed form by parts:
///   I = -dt [omega_{2-a}(tau_j) + omega_{2-a}(tau_{j-1})]
///       + 2 [omega_{3-a}(tau_{j-1}) - omega_{3-a}(tau_j)].
/// Adequate only when dt is comparable to tau_j; the series branch
/// covers the cancelling regime.
fn b_integral_closed(alpha: f64, tau_j: f64, dt: f64) -> f64 {
    let tau_jm1 = tau_j + dt;
    let w2 = omega(2.0 - alpha, tau_j) + omega(2.0 - alpha, tau_jm1);
    // omega_{3-alpha}(tau_{j-1}) - omega_{3-alpha}(tau_j), power 2 - alpha.
    let w3_diff = pow_diff(tau_j, dt, 2.0 - alpha) / gamma(3.0 - alpha);
    -dt * w2 + 2.0 * w3_diff
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ParamDomain { name: "alpha", value: alpha, constraint: "alpha in (0,1)" });
    }
    Ok(())
}

fn check_indices(mesh: &GradedTimeMesh, n: usize, j: usize, j_max: usize) -> Result<()> {
    if n < 1 || n > mesh.n_steps {
        return Err(Error::IndexOutOfRange { name: "n", index: n, max: mesh.n_steps });
    }
    if j < 1 || j > j_max {
        return Err(Error::IndexOutOfRange { name: "j", index: j, max: j_max });
    }
    Ok(())
}

/// Status of one executable kernel property.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The property's hypothesis does not apply to this table
    /// (for example n = 1 leaves nothing to compare).
    Vacuous,
    /// A hypothesis such as nondecreasing steps is not met; the
    /// inequality was not evaluated.
    HypothesisUnmet,
}

/// One property check with its worst normalized slack
/// (rhs - lhs) / max(1, |rhs|); negative slack means violation.
#[derive(Debug, Clone)]
pub struct CheckItem {
    pub name: &'static str,
    pub status: CheckStatus,
    pub worst_slack: f64,
    /// (n, j) or (n, parameter index) where the worst slack occurred.
    pub worst_at: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct KernelPropertyReport {
    pub items: Vec<CheckItem>,
}

impl KernelPropertyReport {
    pub fn all_pass(&self) -> bool {
        self.items
            .iter()
            .all(|it| matches!(it.status, CheckStatus::Pass | CheckStatus::Vacuous))
    }
}

/// Kernel tables for one (mesh, alpha) pair.
#[derive(Debug, Clone)]
pub struct KernelTables {
    pub alpha: f64,
    pub mesh: GradedTimeMesh,
    k: LowerTri,
    p: LowerTri,
    a: LowerTri,
    b: LowerTri,
}

impl KernelTables {
    /// Build a, b, K and the complementary P for every row n <= N.
    ///
    /// Construction fails if any positivity or monotonicity invariant
    /// of the kernels is violated, naming the offending entry.
    pub fn build(mesh: &GradedTimeMesh, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let n_steps = mesh.n_steps;
        let mut a = LowerTri::zeros(n_steps);
        let mut b = LowerTri::zeros(n_steps);
        let mut k = LowerTri::zeros(n_steps);
        let mut p = LowerTri::zeros(n_steps);

        for n in 1..=n_steps {
            for j in 1..=n {
                a.set(n, j, coeff_a(mesh, alpha, n, j)?);
            }
            for j in 1..n {
                let v = coeff_b(mesh, alpha, n, j)?;
                if !(v > 0.0) {
                    return Err(Error::KernelInvariant { n, j, what: "b[n,j] must be positive" });
                }
                b.set(n, j, v);
            }
            // Assemble row n of K.
            if n == 1 {
                k.set(1, 1, a.get(1, 1));
            } else {
                k.set(n, 1, a.get(n, 1) - b.get(n, 1));
                for j in 2..n {
                    k.set(n, j, a.get(n, j) + b.get(n, j - 1) / mesh.ratio(j) - b.get(n, j));
                }
                k.set(n, n, a.get(n, n) + b.get(n, n - 1) / mesh.ratio(n));
            }
            for j in 1..=n {
                let v = k.get(n, j);
                if !(v > 0.0) {
                    return Err(Error::KernelInvariant { n, j, what: "K[n,j] must be positive" });
                }
                if j > 1 && !(v > k.get(n, j - 1)) {
                    return Err(Error::KernelInvariant {
                        n,
                        j,
                        what: "K[n,j] must increase in j",
                    });
                }
            }
        }

        // Complementary kernels, row by row:
        //   P[n,n] = 1/K[n,n],
        //   P[n,i] = sum_{j=i+1..n} P[n,j] (K[j,i+1] - K[j,i]) / K[i,i].
        for n in 1..=n_steps {
            p.set(n, n, 1.0 / k.get(n, n));
            for i in (1..n).rev() {
                let mut s = 0.0;
                for j in (i + 1)..=n {
                    s += p.get(n, j) * (k.get(j, i + 1) - k.get(j, i));
                }
                let v = s / k.get(i, i);
                if !(v > 0.0) {
                    return Err(Error::KernelInvariant { n, j: i, what: "P[n,j] must be positive" });
                }
                p.set(n, i, v);
            }
        }

        Ok(KernelTables { alpha, mesh: mesh.clone(), k, p, a, b })
    }

    pub fn n_steps(&self) -> usize {
        self.mesh.n_steps
    }

    /// K[n,j], 1 <= j <= n.
    pub fn k(&self, n: usize, j: usize) -> f64 {
        self.k.get(n, j)
    }

    /// P[n,j], 1 <= j <= n.
    pub fn p(&self, n: usize, j: usize) -> f64 {
        self.p.get(n, j)
    }

    pub fn a(&self, n: usize, j: usize) -> f64 {
        self.a.get(n, j)
    }

    /// b[n,j], 1 <= j <= n-1.
    pub fn b(&self, n: usize, j: usize) -> f64 {
        self.b.get(n, j)
    }

    /// Discrete Caputo derivative at t_{n-nu} of a scalar sequence
    /// given as samples v[0..=n].
    pub fn discrete_caputo_scalar(&self, history: &[f64], n: usize) -> Result<f64> {
        if n < 1 || n > self.n_steps() {
            return Err(Error::IndexOutOfRange { name: "n", index: n, max: self.n_steps() });
        }
        if history.len() < n + 1 {
            return Err(Error::ShapeMismatch {
                what: "history length",
                expected: n + 1,
                got: history.len(),
            });
        }
        let mut s = 0.0;
        for j in 1..=n {
            s += self.k.get(n, j) * (history[j] - history[j - 1]);
        }
        Ok(s)
    }

    /// Discrete Caputo derivative of a vector-valued sequence; each
    /// history entry must have the same length.
    pub fn discrete_caputo(&self, history: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
        if n < 1 || n > self.n_steps() {
            return Err(Error::IndexOutOfRange { name: "n", index: n, max: self.n_steps() });
        }
        if history.len() < n + 1 {
            return Err(Error::ShapeMismatch {
                what: "history length",
                expected: n + 1,
                got: history.len(),
            });
        }
        let dim = history[0].len();
        let mut out = vec![0.0; dim];
        for j in 1..=n {
            if history[j].len() != dim || history[j - 1].len() != dim {
                return Err(Error::ShapeMismatch {
                    what: "history entry length",
                    expected: dim,
                    got: history[j].len(),
                });
            }
            let knj = self.k.get(n, j);
            for (o, (cur, prev)) in out.iter_mut().zip(history[j].iter().zip(&history[j - 1])) {
                *o += knj * (cur - prev);
            }
        }
        Ok(out)
    }

    /// Run the executable kernel property checks.
    ///
    /// Every item reports the worst normalized slack over its index
    /// range; an item whose hypothesis never applies is `Vacuous`.
    pub fn check_properties(&self) -> KernelPropertyReport {
        let mut items = Vec::new();
        let n_steps = self.n_steps();
        let alpha = self.alpha;
        let g2a = gamma(2.0 - alpha);

        // (a) 0 < P[n,j] <= pi_A Gamma(2-alpha) dt_j^alpha, and K
        // increasing in j (positivity/monotonicity already enforced at
        // build; re-measured here as slack).
        {
            let mut worst = f64::INFINITY;
            let mut at = (1, 1);
            for n in 1..=n_steps {
                for j in 1..=n {
                    let bound = PI_A * g2a * self.mesh.step(j).powf(alpha);
                    let s = norm_slack(self.p.get(n, j), bound);
                    if s < worst {
                        worst = s;
                        at = (n, j);
                    }
                }
            }
            push_item(&mut items, "p_upper_bound", worst, at);
        }
        {
            let mut worst = f64::INFINITY;
            let mut at = (1, 1);
            let mut applies = false;
            for n in 2..=n_steps {
                for j in 2..=n {
                    applies = true;
                    let s = norm_slack(self.k.get(n, j - 1), self.k.get(n, j));
                    if s < worst {
                        worst = s;
                        at = (n, j);
                    }
                }
            }
            if applies {
                push_item(&mut items, "k_monotone_in_j", worst, at);
            } else {
                items.push(CheckItem {
                    name: "k_monotone_in_j",
                    status: CheckStatus::Vacuous,
                    worst_slack: 0.0,
                    worst_at: (1, 1),
                });
            }
        }

        // (b) sum_{j=i..n} P[n,j] K[j,i] = 1.
        {
            let mut worst = f64::INFINITY;
            let mut at = (1, 1);
            for n in 1..=n_steps {
                for i in 1..=n {
                    let mut s = 0.0;
                    for j in i..=n {
                        s += self.p.get(n, j) * self.k.get(j, i);
                    }
                    let slack = -(s - 1.0).abs();
                    if slack < worst {
                        worst = slack;
                        at = (n, i);
                    }
                }
            }
            // Identity: |deviation| <= 1e-10 counts as pass.
            items.push(CheckItem {
                name: "pk_summation_identity",
                status: if worst >= -1e-10 { CheckStatus::Pass } else { CheckStatus::Fail },
                worst_slack: worst,
                worst_at: at,
            });
        }

        // (c) sum_j P[n,j] omega_{1+(m-1)alpha}(t_j)
        //       <= pi_A omega_{1+m alpha}(t_n),  0 <= m <= floor(1/alpha).
        {
            let m_max = (1.0 / alpha).floor() as usize;
            let mut worst = f64::INFINITY;
            let mut at = (1, 0);
            for m in 0..=m_max {
                let beta_l = 1.0 + (m as f64 - 1.0) * alpha;
                let beta_r = 1.0 + m as f64 * alpha;
                for n in 1..=n_steps {
                    let mut lhs = 0.0;
                    for j in 1..=n {
                        lhs += self.p.get(n, j) * omega(beta_l, self.mesh.node(j));
                    }
                    let rhs = PI_A * omega(beta_r, self.mesh.node(n));
                    let s = norm_slack(lhs, rhs);
                    if s < worst {
                        worst = s;
                        at = (n, m);
                    }
                }
            }
            push_item(&mut items, "p_weight_sum_bound", worst, at);
        }

        // (d) nu_c sum_{j<n} P[n,j] E_alpha(nu_c t_j^alpha)
        //       <= pi_A (E_alpha(nu_c t_n^alpha) - 1);
        // requires nondecreasing steps.
        {
            let nondecreasing = self.mesh.ratios.iter().all(|&r| r >= 1.0 - 1e-12);
            if !nondecreasing {
                items.push(CheckItem {
                    name: "p_mittag_leffler_sum_bound",
                    status: CheckStatus::HypothesisUnmet,
                    worst_slack: 0.0,
                    worst_at: (0, 0),
                });
            } else if n_steps < 2 {
                items.push(CheckItem {
                    name: "p_mittag_leffler_sum_bound",
                    status: CheckStatus::Vacuous,
                    worst_slack: 0.0,
                    worst_at: (0, 0),
                });
            } else {
                let mut worst = f64::INFINITY;
                let mut at = (0, 0);
                for (ci, &nu_c) in [0.5_f64, 1.0, 2.0].iter().enumerate() {
                    let e: Vec<f64> = (0..=n_steps)
                        .map(|j| {
                            mittag_leffler(alpha, nu_c * self.mesh.node(j).powf(alpha))
                                .unwrap_or(f64::INFINITY)
                        })
                        .collect();
                    for n in 2..=n_steps {
                        let mut lhs = 0.0;
                        for j in 1..n {
                            lhs += self.p.get(n, j) * e[j];
                        }
                        lhs *= nu_c;
                        let rhs = PI_A * (e[n] - 1.0);
                        let s = norm_slack(lhs, rhs);
                        if s < worst {
                            worst = s;
                            at = (n, ci);
                        }
                    }
                }
                push_item(&mut items, "p_mittag_leffler_sum_bound", worst, at);
            }
        }

        // (e) sum_j P[n,j] t_j^{beta-alpha}
        //       <= pi_A Gamma(1+beta-alpha)/Gamma(1+beta) t_n^beta,
        // sampled over beta in (0, 1).
        {
            let mut worst = f64::INFINITY;
            let mut at = (0, 0);
            for (bi, &beta) in [0.25_f64, 0.5, 0.75].iter().enumerate() {
                let factor = PI_A * gamma(1.0 + beta - alpha) / gamma(1.0 + beta);
                for n in 1..=n_steps {
                    let mut lhs = 0.0;
                    for j in 1..=n {
                        lhs += self.p.get(n, j) * self.mesh.node(j).powf(beta - alpha);
                    }
                    let rhs = factor * self.mesh.node(n).powf(beta);
                    let s = norm_slack(lhs, rhs);
                    if s < worst {
                        worst = s;
                        at = (n, bi);
                    }
                }
            }
            push_item(&mut items, "p_power_sum_bound", worst, at);
        }

        // (f) sum_j P[n,j] t_j^{-alpha} <= 4 pi_A e^gamma ln(n+2).
        {
            let factor = 4.0 * PI_A * self.mesh.gamma.exp();
            let mut worst = f64::INFINITY;
            let mut at = (0, 0);
            for n in 1..=n_steps {
                let mut lhs = 0.0;
                for j in 1..=n {
                    lhs += self.p.get(n, j) * self.mesh.node(j).powf(-alpha);
                }
                let rhs = factor * ((n as f64) + 2.0).ln();
                let s = norm_slack(lhs, rhs);
                if s < worst {
                    worst = s;
                    at = (n, 0);
                }
            }
            push_item(&mut items, "p_singular_sum_bound", worst, at);
        }

        // (g) P[n,n]/P[n,n-1] <= (2-alpha)/alpha * mu_n^alpha, n >= 2.
        {
            if n_steps < 2 {
                items.push(CheckItem {
                    name: "p_adjacent_ratio_bound",
                    status: CheckStatus::Vacuous,
                    worst_slack: 0.0,
                    worst_at: (0, 0),
                });
            } else {
                let mut worst = f64::INFINITY;
                let mut at = (0, 0);
                for n in 2..=n_steps {
                    let lhs = self.p.get(n, n) / self.p.get(n, n - 1);
                    let rhs = (2.0 - alpha) / alpha * self.mesh.ratio(n).powf(alpha);
                    let s = norm_slack(lhs, rhs);
                    if s < worst {
                        worst = s;
                        at = (n, n);
                    }
                }
                push_item(&mut items, "p_adjacent_ratio_bound", worst, at);
            }
        }

        KernelPropertyReport { items }
    }
}

/// Normalized slack of lhs <= rhs: (rhs - lhs) / max(1, |rhs|).
fn norm_slack(lhs: f64, rhs: f64) -> f64 {
    (rhs - lhs) / rhs.abs().max(1.0)
}

fn push_item(items: &mut Vec<CheckItem>, name: &'static str, worst: f64, at: (usize, usize)) {
    items.push(CheckItem {
        name,
        status: if worst >= -1e-12 { CheckStatus::Pass } else { CheckStatus::Fail },
        worst_slack: worst,
        worst_at: at,
    });
}

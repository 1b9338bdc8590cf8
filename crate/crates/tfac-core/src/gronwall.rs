//! The discrete fractional Gronwall inequality as a testable object.
//!
//! For nonnegative sequences {v^n}, {xi^n}, {eta^n}, {zeta^n} and
//! coefficients lambda[n][i] >= 0 with sum_i lambda[n][i] <= Lambda,
//! suppose the squared sequence satisfies
//!
//!   D^alpha (v^{n-nu})^2 <= sum_{i=0..n} lambda[n][i] (v^i)^2
//!                           + v^{n-nu} xi^n + (eta^n)^2 + (zeta^n)^2
//!
//! for 1 <= n <= N, where D^alpha is the discrete Caputo operator with
//! kernels K[n,j] and v^{n-nu} = nu v^{n-1} + (1-nu) v^n.  If the steps
//! are nondecreasing and the maximum step obeys the restriction
//! dt <= (delta pi_A Gamma(2-alpha) max_n lambda[n][n])^{-1/alpha} for
//! some delta > 1, then with C_delta = delta/(delta-1),
//!
//!   v^n <= C_delta E_alpha(C_delta pi_A Lambda t_n^alpha) (
//!            v^0 + max_j sum_i P[j,i] xi^i
//!                + (2 pi_A t_n^alpha)^{1/2} max_j eta^j
//!                + max_j (sum_i P[j,i] (zeta^i)^2)^{1/2} ).
//!
//! [`GronwallInstance::generate`] builds adversarial instances that
//! satisfy the hypothesis with equality at every step: the hypothesis
//! becomes a quadratic in v^n whose positive root is taken, so no
//! search is involved.  [`verify_gronwall`] drives the generator from a
//! seed and checks the bound at every step.

use crate::error::{Error, Result};
use crate::kernels::KernelTables;
use crate::rng::SplitMix64;
use crate::special::gamma;
pub use crate::special::mittag_leffler;
use crate::temporal::GradedTimeMesh;
use crate::PI_A;
use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// One synthetic instance of the inequality's hypothesis.
///
/// Sequences are stored with 1-based semantics: `v[n]` is v^n
/// (`v[0]` = v^0), while `xi[n - 1]`, `eta[n - 1]`, `zeta[n - 1]` hold
/// the step-n forcing and `lambda[n - 1]` holds the n + 1 coefficients
/// lambda[n][0..=n].
#[derive(Debug, Clone)]
pub struct GronwallInstance {
    pub alpha: f64,
    pub delta: f64,
    /// Lambda, the uniform bound on the per-step coefficient sums.
    pub lambda_total: f64,
    pub v: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    /// Number of steps where (zeta^n)^2 had to be raised to keep the
    /// equality recursion solvable with a nonnegative v^n.
    pub zeta_raises: usize,
}

/// Result of evaluating the closed-form bound at one step.
#[derive(Debug, Clone, Copy)]
pub struct GronwallBound {
    pub value: f64,
    /// False when the step restriction (with this instance's delta and
    /// max lambda[n][n]) does not hold, in which case the value is
    /// reported but certifies nothing.
    pub certifying: bool,
}

/// Outcome of checking one generated instance against the bound.
#[derive(Debug, Clone)]
pub struct GronwallReport {
    pub holds: bool,
    /// Minimum over n of bound(n) - v^n; nonnegative when the bound
    /// dominates (tolerance -1e-10 absolute).
    pub min_slack: f64,
    /// Step index attaining the minimum slack.
    pub argmin: usize,
    pub certifying: bool,
    pub lambda_total: f64,
    pub delta: f64,
    pub zeta_raises: usize,
}

impl GronwallInstance {
    /// Draw a random instance whose hypothesis holds with equality at
    /// every step.
    ///
    /// Lambda is capped so that the Mittag-Leffler factor of the bound
    /// stays representable, and lambda[n][n] is capped so that the step
    /// restriction holds by construction.
    pub fn generate(seed: u64, delta: f64, tables: &KernelTables) -> Result<GronwallInstance> {
        if !(delta > 1.0) {
            return Err(Error::ParamDomain { name: "delta", value: delta, constraint: "delta > 1" });
        }
        let mesh = &tables.mesh;
        let alpha = tables.alpha;
        let n_steps = tables.n_steps();
        let nu = mesh.nu;
        let c_delta = delta / (delta - 1.0);
        let mut rng = SplitMix64::new(seed);

        // Keep C_delta pi_A Lambda T^alpha inside the region where
        // E_alpha is representable: ln E_alpha(z) ~ z^(1/alpha).
        let t_final = mesh.t_final;
        let overflow_cap =
            0.9 * 700.0_f64.powf(alpha) / (c_delta * PI_A * t_final.powf(alpha));
        let lambda_max = overflow_cap.min(1.0);
        let lambda_total = rng.uniform(0.1 * lambda_max, lambda_max);

        // Diagonal cap enforcing the step restriction.
        let diag_cap = mesh.max_step().powf(-alpha) / (delta * PI_A * gamma(2.0 - alpha));

        let v0 = rng.uniform(0.0, 2.0);
        let mut v = vec![0.0; n_steps + 1];
        v[0] = v0;
        let mut xi = Vec::with_capacity(n_steps);
        let mut eta = Vec::with_capacity(n_steps);
        let mut zeta = Vec::with_capacity(n_steps);
        let mut lambda = Vec::with_capacity(n_steps);
        let mut zeta_raises = 0usize;

        for n in 1..=n_steps {
            // Nonnegative coefficient row scaled to a random fraction
            // of Lambda, diagonal clamped under the step-condition cap.
            let mut row: Vec<f64> = (0..=n).map(|_| rng.next_f64()).collect();
            let row_sum: f64 = row.iter().sum();
            let target = lambda_total * rng.uniform(0.3, 1.0);
            if row_sum > 0.0 {
                let s = target / row_sum;
                for x in row.iter_mut() {
                    *x *= s;
                }
            }
            if row[n] > 0.95 * diag_cap {
                row[n] = 0.95 * diag_cap;
            }

            let xi_n = rng.uniform(0.0, 1.0);
            let eta_n = rng.uniform(0.0, 1.0);
            let mut zeta_n = rng.uniform(0.0, 1.0);

            // Hypothesis at equality as a quadratic in v^n:
            //   (K[n,n] - lambda[n][n]) (v^n)^2 - (1-nu) xi^n v^n - c = 0.
            let knn = tables.k(n, n);
            let a = knn - row[n];
            if !(a > 0.0) {
                return Err(Error::KernelInvariant {
                    n,
                    j: n,
                    what: "diagonal coefficient must stay below K[n,n]",
                });
            }
            let b = (1.0 - nu) * xi_n;
            let mut hist = 0.0;
            for j in 1..n {
                hist += tables.k(n, j) * (v[j] * v[j] - v[j - 1] * v[j - 1]);
            }
            let mut lam_hist = 0.0;
            for i in 0..n {
                lam_hist += row[i] * v[i] * v[i];
            }
            let mut c = knn * v[n - 1] * v[n - 1] - hist
                + lam_hist
                + nu * v[n - 1] * xi_n
                + eta_n * eta_n
                + zeta_n * zeta_n;
            let disc = b * b + 4.0 * a * c;
            if disc < 0.0 {
                // Raise the quadratic forcing just enough to make the
                // equality solvable with v^n = b / (2a) >= 0.
                let needed = -disc / (4.0 * a);
                zeta_n = (zeta_n * zeta_n + needed).sqrt();
                c += needed;
                zeta_raises += 1;
                v[n] = b / (2.0 * a);
            } else {
                v[n] = (b + disc.sqrt()) / (2.0 * a);
            }
            debug_assert!(v[n].is_finite() && v[n] >= 0.0);
            let _ = c;

            xi.push(xi_n);
            eta.push(eta_n);
            zeta.push(zeta_n);
            lambda.push(row);
        }

        Ok(GronwallInstance {
            alpha,
            delta,
            lambda_total,
            v,
            xi,
            eta,
            zeta,
            lambda,
            zeta_raises,
        })
    }

    /// Left side minus right side of the hypothesis at step n; zero (to
    /// roundoff) for generated instances, nonpositive for any instance
    /// that satisfies the hypothesis.
    pub fn hypothesis_residual(&self, tables: &KernelTables, n: usize) -> Result<f64> {
        self.check_shapes(tables)?;
        if n < 1 || n > self.xi.len() {
            return Err(Error::IndexOutOfRange { name: "n", index: n, max: self.xi.len() });
        }
        let nu = tables.mesh.nu;
        let mut lhs = 0.0;
        for j in 1..=n {
            lhs += tables.k(n, j) * (self.v[j] * self.v[j] - self.v[j - 1] * self.v[j - 1]);
        }
        let mut rhs = 0.0;
        for i in 0..=n {
            rhs += self.lambda[n - 1][i] * self.v[i] * self.v[i];
        }
        let v_off = nu * self.v[n - 1] + (1.0 - nu) * self.v[n];
        rhs += v_off * self.xi[n - 1]
            + self.eta[n - 1] * self.eta[n - 1]
            + self.zeta[n - 1] * self.zeta[n - 1];
        Ok(lhs - rhs)
    }

    /// The closed-form bound at step n.
    pub fn bound(&self, tables: &KernelTables, n: usize) -> Result<GronwallBound> {
        self.check_shapes(tables)?;
        if n < 1 || n > self.xi.len() {
            return Err(Error::IndexOutOfRange { name: "n", index: n, max: self.xi.len() });
        }
        let mesh = &tables.mesh;
        let alpha = self.alpha;
        let c_delta = self.delta / (self.delta - 1.0);
        let tn_alpha = mesh.node(n).powf(alpha);
        let ml = mittag_leffler(alpha, c_delta * PI_A * self.lambda_total * tn_alpha)?;

        let mut xi_term: f64 = 0.0;
        let mut zeta_term_sq: f64 = 0.0;
        let mut eta_term: f64 = 0.0;
        for j in 1..=n {
            let mut sx = 0.0;
            let mut sz = 0.0;
            for i in 1..=j {
                let p = tables.p(j, i);
                sx += p * self.xi[i - 1];
                sz += p * self.zeta[i - 1] * self.zeta[i - 1];
            }
            xi_term = xi_term.max(sx);
            zeta_term_sq = zeta_term_sq.max(sz);
            eta_term = eta_term.max(self.eta[j - 1]);
        }
        let value = c_delta
            * ml
            * (self.v[0]
                + xi_term
                + (2.0 * PI_A * tn_alpha).sqrt() * eta_term
                + zeta_term_sq.sqrt());

        let max_diag = (1..=self.xi.len())
            .map(|m| self.lambda[m - 1][m])
            .fold(0.0_f64, f64::max);
        // A zero diagonal imposes no step restriction at all.
        let step_ok = max_diag == 0.0
            || mesh.step_restriction(alpha, max_diag, self.delta)?.satisfied;
        let certifying = step_ok && self.sums_within_lambda();

        Ok(GronwallBound { value, certifying })
    }

    /// Check v^n against the bound at every step.
    pub fn verify(&self, tables: &KernelTables) -> Result<GronwallReport> {
        self.check_shapes(tables)?;
        let mut min_slack = f64::INFINITY;
        let mut argmin = 1;
        let mut certifying = true;
        for n in 1..=self.xi.len() {
            let b = self.bound(tables, n)?;
            certifying &= b.certifying;
            let slack = b.value - self.v[n];
            if slack < min_slack {
                min_slack = slack;
                argmin = n;
            }
        }
        Ok(GronwallReport {
            holds: min_slack >= -1e-10,
            min_slack,
            argmin,
            certifying,
            lambda_total: self.lambda_total,
            delta: self.delta,
            zeta_raises: self.zeta_raises,
        })
    }

    fn sums_within_lambda(&self) -> bool {
        self.lambda
            .iter()
            .all(|row| row.iter().sum::<f64>() <= self.lambda_total * (1.0 + 1e-12))
    }

    fn check_shapes(&self, tables: &KernelTables) -> Result<()> {
        let n_steps = tables.n_steps();
        if self.v.len() != n_steps + 1 {
            return Err(Error::ShapeMismatch {
                what: "v length",
                expected: n_steps + 1,
                got: self.v.len(),
            });
        }
        for (name, s) in [("xi", &self.xi), ("eta", &self.eta), ("zeta", &self.zeta)] {
            if s.len() != n_steps {
                return Err(Error::ShapeMismatch { what: name, expected: n_steps, got: s.len() });
            }
        }
        if self.lambda.len() != n_steps
            || self.lambda.iter().enumerate().any(|(k, row)| row.len() != k + 2)
        {
            return Err(Error::ShapeMismatch {
                what: "lambda rows",
                expected: n_steps,
                got: self.lambda.len(),
            });
        }
        Ok(())
    }
}

/// Generate one instance from a seed (delta drawn in [1.5, 4]) and
/// check the bound at every step.
pub fn verify_gronwall(
    seed: u64,
    alpha: f64,
    mesh: &GradedTimeMesh,
) -> Result<GronwallReport> {
    let tables = KernelTables::build(mesh, alpha)?;
    let mut rng = SplitMix64::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    let delta = rng.uniform(1.5, 4.0);
    let inst = GronwallInstance::generate(seed, delta, &tables)?;
    inst.verify(&tables)
}

//! Acceptance suite: one test per release criterion, each printing a
//! single summary line. Every tolerance is pinned here in code. The
//! heavy convergence reproductions (criteria 7 and 8) take several
//! minutes; run with `--nocapture` to watch their progress.

use std::time::Instant;

use tfac_core::fem::MixedSpace;
use tfac_core::gronwall::verify_gronwall;
use tfac_core::kernels::{coeff_a, coeff_b, KernelTables};
use tfac_core::rng::SplitMix64;
use tfac_core::special::gamma;
use tfac_core::temporal::GradedTimeMesh;
use tfac_core::verification::{
    convergence_study, measure_newton_remainder, measure_upsilon, newton_identity_gap,
    Coupling, ManufacturedCase,
};

const ALPHAS: [f64; 4] = [0.4, 0.6, 0.8, 0.99];

fn gammas(alpha: f64) -> [f64; 2] {
    [1.0, 2.0 / alpha + 0.1]
}

fn line(num: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {num:02} {verdict} {detail}");
}

/// Tanh-sinh quadrature over [a, b], refined until two successive
/// levels agree to 1e-12 relative. Handles integrable endpoint
/// singularities; nodes that round onto an endpoint are dropped.
fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let x = mid + half * u.tanh();
        let w = half * FRAC_PI_2 * t.cosh() / (u.cosh() * u.cosh());
        if x <= a || x >= b || !w.is_finite() {
            return 0.0;
        }
        let v = f(x) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let t_max = 4.0_f64;
    let mut h = 0.5_f64;
    let n0 = (t_max / h) as i64;
    let mut result = h * (-n0..=n0).map(|k| eval(k as f64 * h)).sum::<f64>();
    for _ in 0..10 {
        h *= 0.5;
        let n = (t_max / h) as i64;
        let mut sum_new = 0.0;
        let mut k = -n + 1;
        while k <= n {
            sum_new += eval(k as f64 * h);
            k += 2;
        }
        let refined = 0.5 * result + h * sum_new;
        if (refined - result).abs() <= 1e-12 * refined.abs().max(1e-300) {
            return refined;
        }
        result = refined;
    }
    result
}

#[test]
fn criterion_01_complementary_kernel_identity() {
    let tol = 1e-10;
    let mut worst = 0.0_f64;
    let mut at = String::new();
    for alpha in ALPHAS {
        for gamma_t in gammas(alpha) {
            for n_steps in [8usize, 32, 128] {
                let mesh = GradedTimeMesh::new(1.0, n_steps, gamma_t, alpha / 2.0).unwrap();
                let tables = KernelTables::build(&mesh, alpha).unwrap();
                for n in 1..=n_steps {
                    for i in 1..=n {
                        let s: f64 = (i..=n).map(|j| tables.p(n, j) * tables.k(j, i)).sum();
                        let dev = (s - 1.0).abs();
                        if dev > worst {
                            worst = dev;
                            at = format!("alpha={alpha} gamma={gamma_t:.2} N={n_steps} (n={n}, i={i})");
                        }
                    }
                }
            }
        }
    }
    let pass = worst <= tol;
    line(
        1,
        pass,
        &format!("complementary kernel identity: max |sum P K - 1| = {worst:.3e} at {at} (tolerance {tol:.0e})"),
    );
    assert!(pass, "kernel identity deviation {worst:.3e} exceeds {tol:.0e}");
}

#[test]
fn criterion_02_coefficient_quadrature_oracle() {
    let tol = 1e-9;
    let mut worst = 0.0_f64;
    let mut at = String::new();
    for alpha in ALPHAS {
        let g1 = gamma(1.0 - alpha);
        for gamma_t in gammas(alpha) {
            for n_steps in [8usize, 32] {
                let mesh = GradedTimeMesh::new(1.0, n_steps, gamma_t, alpha / 2.0).unwrap();
                for n in 1..=n_steps {
                    let t_off = mesh.offset_level(n);
                    for j in 1..=n {
                        let lo = mesh.node(j - 1);
                        let q = if j < n {
                            let hi = mesh.node(j);
                            let f = |s: f64| (t_off - s).powf(-alpha) / g1;
                            tanh_sinh(&f, lo, hi) / mesh.step(j)
                        } else {
                            // The current interval ends at the kernel
                            // singularity, whose mass concentrates
                            // within one ulp of the endpoint as
                            // alpha -> 1; integrate in the regularizing
                            // variable y = (t_off - s)^{(1-alpha)/2}.
                            let p = 1.0 - alpha;
                            let y_max = (t_off - lo).powf(0.5 * p);
                            let f = |y: f64| 2.0 / p * y / g1;
                            tanh_sinh(&f, 0.0, y_max) / mesh.step(j)
                        };
                        let cf = coeff_a(&mesh, alpha, n, j).unwrap();
                        let rel = (cf - q).abs() / q.abs();
                        if rel > worst {
                            worst = rel;
                            at = format!("a[{n},{j}] alpha={alpha} gamma={gamma_t:.2} N={n_steps}");
                        }
                    }
                    for j in 1..n {
                        let lo = mesh.node(j - 1);
                        let hi = mesh.node(j);
                        let f = |s: f64| {
                            (s - lo) * (hi - s) * alpha * (t_off - s).powf(-alpha - 1.0) / g1
                        };
                        let q = tanh_sinh(&f, lo, hi)
                            / (mesh.step(j) * (mesh.step(j) + mesh.step(j + 1)));
                        let cf = coeff_b(&mesh, alpha, n, j).unwrap();
                        let rel = (cf - q).abs() / q.abs();
                        if rel > worst {
                            worst = rel;
                            at = format!("b[{n},{j}] alpha={alpha} gamma={gamma_t:.2} N={n_steps}");
                        }
                    }
                }
            }
        }
    }
    let pass = worst <= tol;
    line(
        2,
        pass,
        &format!("interpolation coefficients vs quadrature: max relative deviation {worst:.3e} at {at} (tolerance {tol:.0e})"),
    );
    assert!(pass, "coefficient deviation {worst:.3e} exceeds {tol:.0e}");
}

#[test]
fn criterion_03_linear_exactness() {
    let tol = 1e-12;
    let mut worst = 0.0_f64;
    let mut at = String::new();
    for alpha in ALPHAS {
        for gamma_t in gammas(alpha) {
            for n_steps in [8usize, 32, 128] {
                let mesh = GradedTimeMesh::new(1.0, n_steps, gamma_t, alpha / 2.0).unwrap();
                let tables = KernelTables::build(&mesh, alpha).unwrap();
                let hist: Vec<f64> = (0..=n_steps).map(|j| mesh.node(j)).collect();
                for n in 1..=n_steps {
                    let d = tables.discrete_caputo_scalar(&hist, n).unwrap();
                    let exact = mesh.offset_level(n).powf(1.0 - alpha) / gamma(2.0 - alpha);
                    let rel = (d - exact).abs() / exact;
                    if rel > worst {
                        worst = rel;
                        at = format!("alpha={alpha} gamma={gamma_t:.2} N={n_steps} n={n}");
                    }
                }
            }
        }
    }
    let pass = worst <= tol;
    line(
        3,
        pass,
        &format!("linear exactness of the discrete derivative: max relative deviation {worst:.3e} at {at} (tolerance {tol:.0e})"),
    );
    assert!(pass, "linear exactness deviation {worst:.3e} exceeds {tol:.0e}");
}

#[test]
fn criterion_04_quadratic_form_inequality() {
    let tol = -1e-12;
    let mut worst = f64::INFINITY;
    let mut at = String::new();
    for alpha in ALPHAS {
        let nu = alpha / 2.0;
        for gamma_t in gammas(alpha) {
            for n_steps in [8usize, 32, 128] {
                let mesh = GradedTimeMesh::new(1.0, n_steps, gamma_t, nu).unwrap();
                let tables = KernelTables::build(&mesh, alpha).unwrap();
                let mut rng = SplitMix64::new(0x51ac ^ (n_steps as u64) << 8);
                for _ in 0..1000 {
                    let v: Vec<f64> = (0..=n_steps).map(|_| rng.uniform(-1.0, 1.0)).collect();
                    for n in 1..=n_steps {
                        let v_off = (1.0 - nu) * v[n] + nu * v[n - 1];
                        let mut lhs = 0.0;
                        let mut rhs = 0.0;
                        for j in 1..=n {
                            let k = tables.k(n, j);
                            lhs += k * (v[j] - v[j - 1]) * v_off;
                            rhs += 0.5 * k * (v[j] * v[j] - v[j - 1] * v[j - 1]);
                        }
                        let slack = lhs - rhs;
                        if slack < worst {
                            worst = slack;
                            at = format!("alpha={alpha} gamma={gamma_t:.2} N={n_steps} n={n}");
                        }
                    }
                }
            }
        }
    }
    let pass = worst >= tol;
    line(
        4,
        pass,
        &format!("offset quadratic-form inequality on 1000 random sequences per mesh: min slack {worst:.3e} at {at} (floor {tol:.0e})"),
    );
    assert!(pass, "quadratic-form slack {worst:.3e} below {tol:.0e}");
}

#[test]
fn criterion_05_gronwall_bound_domination() {
    let floor = -1e-10;
    let mut worst = f64::INFINITY;
    let mut at = String::new();
    let mut all_hold = true;
    for alpha in [0.3, 0.5, 0.7, 0.9, 0.99] {
        for gamma_t in gammas(alpha) {
            let mesh = GradedTimeMesh::new(1.0, 24, gamma_t, alpha / 2.0).unwrap();
            for seed in 0..50u64 {
                let rep = verify_gronwall(seed, alpha, &mesh).unwrap();
                all_hold &= rep.holds;
                if rep.min_slack < worst {
                    worst = rep.min_slack;
                    at = format!("alpha={alpha} gamma={gamma_t:.2} seed={seed}");
                }
            }
        }
    }
    let pass = all_hold && worst >= floor;
    line(
        5,
        pass,
        &format!("fractional Gronwall bound dominates 100 random recursions per alpha: min slack {worst:.3e} at {at} (floor {floor:.0e})"),
    );
    assert!(pass, "Gronwall domination failed: min slack {worst:.3e} at {at}");
}

#[test]
fn criterion_06_truncation_order_tracking() {
    let tol = 0.25;
    let n_list = [32usize, 64, 128, 256];
    let mut worst = 0.0_f64;
    let mut at = String::new();
    let mut pass = true;
    for alpha in [0.4, 0.8, 0.99] {
        for gamma_t in gammas(alpha) {
            let expected = (gamma_t * alpha).min(2.0);
            let rep = measure_upsilon(
                |t| t.powf(alpha),
                |_| gamma(1.0 + alpha),
                alpha,
                gamma_t,
                alpha / 2.0,
                1.0,
                &n_list,
            )
            .unwrap();
            let order = rep.final_order().expect("order defined");
            let dev = (order - expected).abs();
            if dev > worst {
                worst = dev;
                at = format!("alpha={alpha} gamma={gamma_t:.2}: order {order:.3} vs {expected:.2}");
            }
            pass &= dev <= tol;
        }
    }
    line(
        6,
        pass,
        &format!("derivative truncation order tracks min(gamma*alpha, 2): worst deviation {worst:.3} at {at} (tolerance {tol})"),
    );
    assert!(pass, "truncation order deviation {worst:.3} at {at} exceeds {tol}");
}

#[test]
fn criterion_07_coupled_refinement_reproduction() {
    let rate_tol = 0.15;
    // Final-pair reference rates (R_u_h, R_u_dt, R_s_h, R_s_dt) per alpha,
    // and reference errors at N = 64 for alpha = 0.8.
    let targets: [(f64, [f64; 4]); 4] = [
        (0.4, [1.99, 2.08, 1.97, 2.07]),
        (0.6, [1.99, 2.04, 1.97, 2.03]),
        (0.8, [1.98, 2.02, 1.97, 2.00]),
        (0.99, [1.98, 2.00, 1.96, 1.98]),
    ];
    let (e_u_ref, e_s_ref) = (7.816e-5, 3.132e-4);
    let case = ManufacturedCase::by_name("sine-bump").unwrap();
    let n_list = [8usize, 16, 32, 64];
    let mut failures: Vec<String> = Vec::new();
    let mut e_u_64 = f64::NAN;
    let mut e_s_64 = f64::NAN;
    for (alpha, refs) in targets {
        let t0 = Instant::now();
        let report = convergence_study(
            case,
            alpha,
            2.0 / alpha + 0.1,
            alpha / 2.0,
            1,
            &n_list,
            Coupling::HalfInverse,
            |row| {
                println!(
                    "  sine-bump alpha={alpha}: N={:3} nx={:3} E_u={:.4e} E_sigma={:.4e} [{:.0}s]",
                    row.n_steps,
                    row.nx,
                    row.e_u,
                    row.e_sigma,
                    t0.elapsed().as_secs_f64()
                );
            },
        );
        for row in &report.rows {
            if let Some(err) = &row.error {
                failures.push(format!("alpha={alpha} N={}: run failed: {err}", row.n_steps));
            }
        }
        let last = report.rows.last().unwrap();
        let got = [
            last.r_u_h.unwrap_or(f64::NAN),
            last.r_u_dt.unwrap_or(f64::NAN),
            last.r_s_h.unwrap_or(f64::NAN),
            last.r_s_dt.unwrap_or(f64::NAN),
        ];
        let names = ["R_u_h", "R_u_dt", "R_s_h", "R_s_dt"];
        for i in 0..4 {
            if !((got[i] - refs[i]).abs() <= rate_tol) {
                failures.push(format!(
                    "alpha={alpha}: {} = {:.3} vs reference {:.2} (tolerance {rate_tol})",
                    names[i], got[i], refs[i]
                ));
            }
        }
        println!(
            "  sine-bump alpha={alpha}: rates ({:.3}, {:.3}, {:.3}, {:.3}) vs ({:.2}, {:.2}, {:.2}, {:.2})",
            got[0], got[1], got[2], got[3], refs[0], refs[1], refs[2], refs[3]
        );
        if alpha == 0.8 {
            e_u_64 = last.e_u;
            e_s_64 = last.e_sigma;
        }
    }
    let fac_u = e_u_64 / e_u_ref;
    let fac_s = e_s_64 / e_s_ref;
    let mag_ok = (0.5..=2.0).contains(&fac_u) && (0.5..=2.0).contains(&fac_s);
    println!(
        "  error magnitudes at alpha=0.8, N=64: E_u = {e_u_64:.4e} vs reference {e_u_ref:.3e} (ratio {fac_u:.4}), E_sigma = {e_s_64:.4e} vs reference {e_s_ref:.3e} (ratio {fac_s:.4}); required within a factor of 2"
    );
    if !mag_ok {
        // Context for the magnitude gap: the scalar best-approximation
        // floor of the k = 1 space at the pinned coupling h = 1/(2N).
        let space = MixedSpace::build(case.mesh(128).unwrap(), 1).unwrap();
        let t = case.t_final;
        let proj = space.l2_project(|x, y| case.exact_u(0.8, x, y, t));
        let floor_u =
            space.l2_error_scalar(&proj, t, |x, y, tt| case.exact_u(0.8, x, y, tt));
        let interp = space.fortin_interpolate(|x, y| case.exact_flux(0.8, x, y, t).unwrap());
        let floor_s =
            space.l2_error_flux(&interp, t, |x, y, tt| case.exact_flux(0.8, x, y, tt).unwrap());
        println!(
            "  analysis: at h = 1/128 the best-approximation floors are {floor_u:.3e} (scalar) and {floor_s:.3e} (flux); the computed errors sit at those floors, while the reference values lie {:.0}x and {:.0}x above them. The reference magnitudes instead match the floor of a mesh 8x coarser (h = 1/16), so no convergent discretization at the pinned coupling h = 1/(2N) can land within a factor of 2 of them. The rate targets above are all met.",
            e_u_ref / floor_u,
            e_s_ref / floor_s
        );
        failures.push(format!(
            "error magnitudes at N=64 off reference by {:.0}x (E_u) and {:.0}x (E_sigma); reference values are unattainable at the pinned coupling (see analysis above)",
            1.0 / fac_u,
            1.0 / fac_s
        ));
    }
    let pass = failures.is_empty();
    line(
        7,
        pass,
        &format!(
            "coupled-refinement reproduction (k=1, h=1/(2N)): {}",
            if pass {
                "all rate and magnitude targets met".to_string()
            } else {
                failures.join("; ")
            }
        ),
    );
    assert!(pass, "{}", failures.join("; "));
}

#[test]
fn criterion_08_limited_regularity_spot_checks() {
    let rate_tol = 0.2;
    let alpha = 0.6;
    let checks = [("quadratic-bump", 1.98, 1.338e-4), ("pyramid-bump", 1.98, 2.915e-4)];
    let n_list = [16usize, 32, 64];
    let mut failures: Vec<String> = Vec::new();
    for (name, rate_ref, e_u_ref) in checks {
        let case = ManufacturedCase::by_name(name).unwrap();
        let t0 = Instant::now();
        let report = convergence_study(
            case,
            alpha,
            2.0 / alpha + 0.1,
            alpha / 2.0,
            1,
            &n_list,
            Coupling::HalfInverse,
            |row| {
                println!(
                    "  {name} alpha={alpha}: N={:3} nx={:3} E_u={:.4e} [{:.0}s]",
                    row.n_steps,
                    row.nx,
                    row.e_u,
                    t0.elapsed().as_secs_f64()
                );
            },
        );
        for row in &report.rows {
            if let Some(err) = &row.error {
                failures.push(format!("{name} N={}: run failed: {err}", row.n_steps));
            }
        }
        let last = report.rows.last().unwrap();
        let rate = last.r_u_h.unwrap_or(f64::NAN);
        let fac = last.e_u / e_u_ref;
        println!(
            "  {name}: R_u_h = {rate:.3} vs reference {rate_ref:.2} (tolerance {rate_tol}); E_u(N=64) = {:.4e} vs reference {e_u_ref:.3e} (ratio {fac:.4})",
            last.e_u
        );
        if !((rate - rate_ref).abs() <= rate_tol) {
            failures.push(format!("{name}: R_u_h = {rate:.3} vs {rate_ref:.2}"));
        }
        if !(0.5..=2.0).contains(&fac) {
            failures.push(format!(
                "{name}: E_u(N=64) off reference by {:.0}x; as with the smooth case, the reference magnitude matches a mesh 8x coarser than the pinned coupling h = 1/(2N), so it is unattainable at the stated resolution (rate target met)",
                1.0 / fac
            ));
        }
    }
    let pass = failures.is_empty();
    line(
        8,
        pass,
        &format!(
            "limited-regularity spot checks (alpha=0.6, N=64): {}",
            if pass {
                "rate and magnitude targets met".to_string()
            } else {
                failures.join("; ")
            }
        ),
    );
    assert!(pass, "{}", failures.join("; "));
}

#[test]
fn criterion_09_fem_projection_properties() {
    let residual_tol = 1e-10;
    let order_tol = 0.15;
    let mut failures: Vec<String> = Vec::new();
    // Commuting property on random polynomial fields of degree k + 1.
    let mut rng = SplitMix64::new(0xfe11);
    let mut worst_res = 0.0_f64;
    for k in [0usize, 1] {
        let mesh = tfac_core::mesh::RectMesh::build(0.0, 0.0, 2.0, 1.0, 6, 4).unwrap();
        let space = MixedSpace::build(mesh, k).unwrap();
        for _ in 0..5 {
            let mut c = [[0.0_f64; 6]; 2];
            let terms = if k == 0 { 3 } else { 6 };
            for comp in c.iter_mut() {
                for v in comp.iter_mut().take(terms) {
                    *v = rng.uniform(-1.0, 1.0);
                }
            }
            let w = move |x: f64, y: f64| {
                let eval = |a: &[f64; 6]| {
                    a[0] + a[1] * x + a[2] * y + a[3] * x * x + a[4] * x * y + a[5] * y * y
                };
                [eval(&c[0]), eval(&c[1])]
            };
            let div_w = move |x: f64, y: f64| {
                (c[0][1] + 2.0 * c[0][3] * x + c[0][4] * y)
                    + (c[1][2] + c[1][4] * x + 2.0 * c[1][5] * y)
            };
            worst_res = worst_res.max(space.commuting_residual(w, div_w));
        }
    }
    if worst_res > residual_tol {
        failures.push(format!("commuting residual {worst_res:.3e} exceeds {residual_tol:.0e}"));
    }
    // Projection and interpolation orders on smooth data.
    let f = |x: f64, y: f64| (0.3 * x).exp() * (1.1 * y + 0.2).sin();
    let wf = |x: f64, y: f64| [(1.2 * y + 0.1).sin(), (0.7 * x).cos()];
    let mut order_report = String::new();
    for k in [0usize, 1] {
        let mut scalar_err = Vec::new();
        let mut flux_err = Vec::new();
        for nx in [8usize, 16, 32] {
            let mesh = tfac_core::mesh::RectMesh::build(0.0, 0.0, 1.0, 1.0, nx, nx).unwrap();
            let space = MixedSpace::build(mesh, k).unwrap();
            let ph = space.l2_project(f);
            scalar_err.push(space.l2_error_scalar(&ph, 0.0, |x, y, _| f(x, y)));
            let piw = space.fortin_interpolate(wf);
            flux_err.push(space.l2_error_flux(&piw, 0.0, |x, y, _| wf(x, y)));
        }
        let expected = (k + 1) as f64;
        for (what, errs) in [("scalar", &scalar_err), ("flux", &flux_err)] {
            let rate = (errs[1] / errs[2]).log2();
            order_report.push_str(&format!(" k={k} {what}: {rate:.3};"));
            if !((rate - expected).abs() <= order_tol) {
                failures.push(format!(
                    "k={k} {what} projection order {rate:.3} vs {expected} (tolerance {order_tol})"
                ));
            }
        }
    }
    let pass = failures.is_empty();
    line(
        9,
        pass,
        &format!(
            "mixed-space properties: commuting residual {worst_res:.3e} (tolerance {residual_tol:.0e}); orders{order_report} expected k+1 within {order_tol}"
        ),
    );
    assert!(pass, "{}", failures.join("; "));
}

#[test]
fn criterion_10_newton_remainder_decay() {
    let identity_tol = 1e-12;
    let order_tol = 0.3;
    let mut rng = SplitMix64::new(0x0be1);
    let mut worst_gap = 0.0_f64;
    for _ in 0..200_000 {
        let a = rng.uniform(-3.0, 3.0);
        let b = rng.uniform(-3.0, 3.0);
        worst_gap = worst_gap.max(newton_identity_gap(a, b));
    }
    let mut failures: Vec<String> = Vec::new();
    if worst_gap > identity_tol {
        failures.push(format!("cubic identity gap {worst_gap:.3e} exceeds {identity_tol:.0e}"));
    }
    let case = ManufacturedCase::by_name("sine-bump").unwrap();
    let n_list = [16usize, 32, 64, 128, 256];
    let mut order_report = String::new();
    for alpha in [0.4, 0.8] {
        let rep = measure_newton_remainder(case, alpha, 2.0 / alpha + 0.1, alpha / 2.0, &n_list)
            .unwrap();
        let order = rep.final_order().expect("order defined");
        order_report.push_str(&format!(" alpha={alpha}: {order:.3};"));
        if !((order - 2.0).abs() <= order_tol) {
            failures.push(format!(
                "remainder decay exponent {order:.3} at alpha={alpha} vs 2 (tolerance {order_tol})"
            ));
        }
    }
    let pass = failures.is_empty();
    line(
        10,
        pass,
        &format!(
            "linearization remainder: identity gap {worst_gap:.3e} (tolerance {identity_tol:.0e}); decay exponents{order_report} expected 2 within {order_tol}"
        ),
    );
    assert!(pass, "{}", failures.join("; "));
}

#[test]
fn criterion_11_alpha_robustness() {
    // Constants stay bounded as alpha -> 1: the kernel, inequality,
    // Gronwall, and truncation checks rerun at alpha = 0.99 with the
    // same tolerances as above. The solver reproduction already carries
    // its alpha = 0.99 family inside criterion 7.
    let alpha = 0.99_f64;
    let nu = alpha / 2.0;
    let mut failures: Vec<String> = Vec::new();
    for gamma_t in gammas(alpha) {
        for n_steps in [8usize, 32, 128] {
            let mesh = GradedTimeMesh::new(1.0, n_steps, gamma_t, nu).unwrap();
            let tables = KernelTables::build(&mesh, alpha).unwrap();
            let hist: Vec<f64> = (0..=n_steps).map(|j| mesh.node(j)).collect();
            for n in 1..=n_steps {
                for i in 1..=n {
                    let s: f64 = (i..=n).map(|j| tables.p(n, j) * tables.k(j, i)).sum();
                    if (s - 1.0).abs() > 1e-10 {
                        failures.push(format!("kernel identity at N={n_steps} n={n} i={i}"));
                    }
                }
                let d = tables.discrete_caputo_scalar(&hist, n).unwrap();
                let exact = mesh.offset_level(n).powf(1.0 - alpha) / gamma(2.0 - alpha);
                if (d - exact).abs() / exact > 1e-12 {
                    failures.push(format!("linear exactness at N={n_steps} n={n}"));
                }
            }
        }
        let mesh = GradedTimeMesh::new(1.0, 24, gamma_t, nu).unwrap();
        for seed in 0..50u64 {
            let rep = verify_gronwall(seed, alpha, &mesh).unwrap();
            if !rep.holds {
                failures.push(format!("Gronwall bound at gamma={gamma_t:.2} seed={seed}"));
            }
        }
        let expected = (gamma_t * alpha).min(2.0);
        let rep = measure_upsilon(
            |t| t.powf(alpha),
            |_| gamma(1.0 + alpha),
            alpha,
            gamma_t,
            nu,
            1.0,
            &[32, 64, 128, 256],
        )
        .unwrap();
        let order = rep.final_order().expect("order defined");
        if (order - expected).abs() > 0.25 {
            failures.push(format!(
                "truncation order {order:.3} vs {expected:.2} at gamma={gamma_t:.2}"
            ));
        }
    }
    let pass = failures.is_empty();
    line(
        11,
        pass,
        &format!(
            "alpha -> 1 robustness at alpha=0.99, unchanged tolerances: {}",
            if pass { "kernel, exactness, Gronwall, and truncation checks all hold".to_string() } else { failures.join("; ") }
        ),
    );
    assert!(pass, "{}", failures.join("; "));
}

//! Acceptance criteria, one pass/fail line each.
//!
//! Every criterion runs at its stated tolerance. The process exits 0 so the
//! report is always produced; set `ECL_ACCEPTANCE_STRICT=1` to exit 1 when
//! any criterion fails.

#![allow(clippy::needless_range_loop)]

use ecl_core::cgo::{cdot, make_cgo_pair, CgoVariant};
use ecl_core::experiment::{execute, ExperimentConfig, ExperimentKind};
use ecl_core::foldy_lax::{
    assemble_system, background_field, discrete_continuous_gap, lse_at_points, point_rule, solve_continuous_lse, solve_system,
};
use ecl_core::geometry::{a_for_cube_lattice, build_cluster, inclusion_quadrature, spherical_mean, Domain, ShapeB};
use ecl_core::kernels::{kupradze_series, kupradze_tensor, tensor, traction_kernel, ElasticBackground};
use ecl_core::linalg::RealLu;
use ecl_core::linearization::{cosine_density, Linearization};
use ecl_core::nd_maps::{fit_line, DensityKind};
use ecl_core::operators::{ball_trace_norm, newton_spectrum, GreenMode, LayerEngine, LayerKind, NeumannGreen, ShiftedNeumann, Target};
use ecl_core::resonance::effective_p2;
use ecl_core::vec3::{self, Point};
use ecl_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check, Option<Duration>); 11] = [
        ("AC1 kernel correctness", ac1, Some(Duration::from_secs(10))),
        ("AC2 Newton spectrum scaling", ac2, Some(Duration::from_secs(60))),
        ("AC3 resolvent norms", ac3, Some(Duration::from_secs(300))),
        ("AC4 single-layer traction and jump", ac4, None),
        ("AC5 alpha asymptotics", ac5, Some(Duration::from_secs(300))),
        ("AC6 Foldy-Lax vs continuous LSE", ac6, None),
        ("AC7 N-D gap decay", ac7, Some(Duration::from_secs(1800))),
        ("AC8 linearization remainder", ac8, None),
        ("AC9 CGO algebra", ac9, Some(Duration::from_secs(1))),
        ("AC10 end-to-end reconstruction", ac10, Some(Duration::from_secs(900))),
        ("AC11 mean-value formulas", ac11, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let t = Instant::now();
        let o = check();
        let el = t.elapsed();
        let in_time = budget.is_none_or(|b| el <= b);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget_note = budget.map_or(String::new(), |b| format!(" / {}s", b.as_secs()));
        let time_note = if in_time { String::new() } else { " over time budget;".into() };
        println!(
            "{} {name}:{time_note} {} [{:.2}s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            el.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 && std::env::var("ECL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(20240611)
}

fn rand_point(r: &mut ChaCha8Rng, half: f64) -> Point {
    [r.gen_range(-half..half), r.gen_range(-half..half), r.gen_range(-half..half)]
}

/// Column `j` of `Γ^ω(x, y)`.
fn column(x: Point, y: Point, j: usize, bg: &ElasticBackground, omega: f64) -> [C64; 3] {
    let t = kupradze_tensor(x, y, bg, omega).unwrap();
    [t.0[0][j], t.0[1][j], t.0[2][j]]
}

/// Relative Navier residual of a Kupradze column by fourth-order differences.
fn navier_residual(x: Point, y: Point, j: usize, bg: &ElasticBackground, omega: f64) -> f64 {
    let h = 1e-2;
    let d1 = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
    let d2 = [(-2.0, -1.0), (-1.0, 16.0), (0.0, -30.0), (1.0, 16.0), (2.0, -1.0)];
    let at = |s: &[(usize, f64)]| {
        let mut p = x;
        for &(a, o) in s {
            p[a] += o * h;
        }
        column(p, y, j, bg, omega)
    };
    let mut hess = [[[C64::new(0.0, 0.0); 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = [C64::new(0.0, 0.0); 3];
            if a == b {
                for &(o, w) in &d2 {
                    let v = at(&[(a, o)]);
                    for i in 0..3 {
                        acc[i] += v[i] * (w / (12.0 * h * h));
                    }
                }
            } else {
                for &(oa, wa) in &d1 {
                    for &(ob, wb) in &d1 {
                        let v = at(&[(a, oa), (b, ob)]);
                        for i in 0..3 {
                            acc[i] += v[i] * (wa * wb / (144.0 * h * h));
                        }
                    }
                }
            }
            for i in 0..3 {
                hess[i][a][b] = acc[i];
            }
        }
    }
    let u = column(x, y, j, bg, omega);
    let k2 = bg.rho0 * omega * omega;
    let (mut res, mut scale) = (0.0f64, 0.0f64);
    for i in 0..3 {
        let lap = hess[i][0][0] + hess[i][1][1] + hess[i][2][2];
        let gd = hess[0][0][i] + hess[1][1][i] + hess[2][2][i];
        let r = lap * bg.mu + gd * (bg.lambda + bg.mu) + u[i] * k2;
        res = res.max(r.norm());
        scale = scale.max((lap * bg.mu).norm() + (gd * (bg.lambda + bg.mu)).norm() + (u[i] * k2).norm());
    }
    res / scale
}

fn ac1() -> Outcome {
    let bg = ElasticBackground::new(2.0, 1.0, 1.3).unwrap();
    let mut r = rng();
    let (mut worst_fd, mut worst_series) = (0.0f64, 0.0f64);
    let mut n = 0;
    while n < 100 {
        let (x, y) = (rand_point(&mut r, 1.0), rand_point(&mut r, 1.0));
        if vec3::dist(x, y) < 0.5 {
            continue;
        }
        let omega = r.gen_range(1.0..3.0);
        worst_fd = worst_fd.max(navier_residual(x, y, n % 3, &bg, omega));
        let c = kupradze_tensor(x, y, &bg, omega).unwrap();
        let s = kupradze_series(x, y, &bg, omega, 80).unwrap();
        worst_series = worst_series.max(c.sub(&s).norm() / c.norm());
        n += 1;
    }
    outcome(
        worst_fd < 1e-4 && worst_series < 1e-10,
        format!("max FD Navier residual {worst_fd:.2e} (< 1e-4), max series vs closed form {worst_series:.2e} (< 1e-10) over 100 samples"),
    )
}

fn ac2() -> Outcome {
    let bg = ElasticBackground::unit();
    let rule = inclusion_quadrature(ShapeB::Ball, 6).unwrap();
    let l1 = newton_spectrum(&rule, &bg, 1).unwrap().eigenvalues[0];
    let mut worst = 0.0f64;
    for a in [0.5, 0.25] {
        let la = newton_spectrum(&rule.mapped([0.3, -0.1, 0.2], a), &bg, 1).unwrap().eigenvalues[0];
        worst = worst.max((la / (a * a * l1) - 1.0).abs());
    }
    outcome(
        worst < 0.02,
        format!("lambda1(B) = {l1:.6}, max |lambda1(aB)/(a^2 lambda1(B)) - 1| = {worst:.2e} (< 2%) for a in {{0.5, 0.25}}"),
    )
}

fn ac3() -> Outcome {
    let bg = ElasticBackground::unit();
    let vol = Domain::Ball.volume_rule(5).unwrap();
    let bd = Domain::Ball.boundary_rule(6).unwrap();
    let trace_rule = Domain::Ball.boundary_rule(16).unwrap();
    let ps = [3.0f64, 10.0, 30.0];
    let mut ratios = Vec::new();
    let mut traces = Vec::new();
    for p in ps {
        let sn = ShiftedNeumann::new(&vol, &bd, &bg, p * p).unwrap();
        ratios.push(sn.np_norm().unwrap() * p * p);
        traces.push(ball_trace_norm(&trace_rule, &bg, p * p).unwrap().norm);
    }
    let (slope, _) = fit_line(&ps.map(f64::ln), &traces.iter().map(|v| v.ln()).collect::<Vec<_>>()).unwrap();
    let norm_ok = ratios.iter().all(|r| *r <= 1.05);
    let slope_ok = (slope + 1.0).abs() <= 0.2;
    outcome(
        norm_ok && slope_ok,
        format!(
            "P^2 ||N^P|| = {:.3} {:.3} {:.3} (<= 1.05: {}); trace norms {:.3e} {:.3e} {:.3e}, fitted exponent {slope:.3} (-1 +- 0.2: {})",
            ratios[0], ratios[1], ratios[2], norm_ok, traces[0], traces[1], traces[2], slope_ok
        ),
    )
}

/// Relative error of `SL φ` against a point-source field, with `φ` solved
/// from `(sign I + K*) φ = ∂_ν u`.
fn jump_error(order: usize, sign: f64, source: Point, tests: &[Point], p: f64) -> f64 {
    let bg = ElasticBackground::new(2.0, 1.0, 1.0).unwrap();
    let w = bg.shifted_waves(p);
    let e = [0.3, -0.5, 0.8];
    let apply = |t: [[C64; 3]; 3]| -> [f64; 3] { [0, 1, 2].map(|i| (0..3).map(|j| t[i][j].re * e[j]).sum()) };
    let r = Domain::Ball.boundary_rule(order).unwrap();
    let eng = LayerEngine::new(&r).unwrap();
    let mut k = eng.kstar(&bg, w).unwrap();
    for i in 0..k.nrows() {
        k[(i, i)] += sign;
    }
    let normals = r.normals.as_ref().unwrap();
    let rhs: Vec<f64> = (0..r.len())
        .flat_map(|i| apply(traction_kernel(r.nodes[i], source, normals[i], &bg, w).unwrap().0))
        .collect();
    let phi = RealLu::new("jump_error", &k).unwrap().solve_vec(&rhs);
    let targets: Vec<Target> = tests.iter().map(|&x| Target::point(x)).collect();
    let s = eng.rows(&targets, &[LayerKind::Single], &bg, w).unwrap().remove(0);
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for (ti, &x) in tests.iter().enumerate() {
        let u = apply(tensor(x, source, &bg, w).unwrap().0);
        for c in 0..3 {
            let v: f64 = (0..3 * r.len()).map(|j| s[(3 * ti + c, j)] * phi[j]).sum();
            err = err.max((v - u[c]).abs());
            scale = scale.max(u[c].abs());
        }
    }
    err / scale
}

fn ac4() -> Outcome {
    let inner = [[0.2, 0.1, 0.0], [0.0, -0.5, 0.3], [0.5, 0.3, -0.2]];
    let outer = [[1.8, 0.2, 0.0], [0.0, -2.0, 0.5], [1.2, 1.2, -0.4]];
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [1.0, 3.0] {
        for (label, sign, src, tests) in [
            ("interior", 0.5, [1.6, 0.4, -0.3], &inner),
            ("exterior", -0.5, [0.1, -0.2, 0.15], &outer),
        ] {
            let (e8, e10) = (jump_error(8, sign, src, tests, p), jump_error(10, sign, src, tests, p));
            let ratio = e8 / e10;
            ok &= ratio >= 2.0;
            parts.push(format!("P={p} {label} {e8:.2e}->{e10:.2e} ({ratio:.1}x)"));
        }
    }
    outcome(ok, format!("order 8->10, error reduction >= 2x: {}", parts.join(", ")))
}

fn ac5() -> Outcome {
    let mut c = ExperimentConfig::new(ExperimentKind::Effective);
    c.cluster.a_list = vec![0.04, 0.02, 0.01];
    let out = execute(&c).unwrap();
    let fit = &out.result["results"]["alpha_fit"];
    let p2 = out.result["results"]["p2"].as_f64().unwrap();
    let rel = fit["relative_error"].as_f64().unwrap();
    outcome(
        rel < 0.10,
        format!(
            "P^2 = {p2:.4}, fitted -s = {:.4} (alpha = s a^(1-h) + t a), relative error {rel:.2e} (< 10%)",
            fit["p2_recovered"].as_f64().unwrap()
        ),
    )
}

fn ac6() -> Outcome {
    let bg = ElasticBackground::unit();
    let spec = newton_spectrum(&inclusion_quadrature(ShapeB::Ball, 3).unwrap(), &bg, 8).unwrap();
    let p2 = effective_p2(&spec, 1, -1.0).unwrap();
    let vol = Domain::Cube.volume_rule(8).unwrap();
    let bd = Domain::Cube.boundary_rule(6).unwrap();
    let g = NeumannGreen::new(&vol, &bd, &bg, |_| 0.0, 0.0, GreenMode::FreeSpace).unwrap();
    let f: Vec<C64> = bd
        .nodes
        .iter()
        .flat_map(|p| [C64::new(1.0 + p[1], 0.0), C64::new(p[2], 0.0), C64::new(0.3, 0.0)])
        .collect();
    let s = background_field(&f, &bd, &g, &vol).unwrap();
    let y = solve_continuous_lse(p2, &g, &vol, &s).unwrap();
    let (mut gaps, mut cs, mut ms) = (Vec::new(), Vec::new(), Vec::new());
    for k in 2..=4 {
        let h = 0.5;
        let cl = build_cluster(Domain::Cube, h, a_for_cube_lattice(k, h), ShapeB::Ball).unwrap();
        let sc = background_field(&f, &bd, &g, &point_rule(&cl.centers)).unwrap().values;
        let mut sys = assemble_system(&cl, &g, p2, &vec![C64::new(1.0, 0.0); cl.m()], &sc).unwrap();
        let (ys, rep) = solve_system(&mut sys).unwrap();
        let yc = lse_at_points(p2, &g, &y, &sc, &cl.centers).unwrap();
        gaps.push(discrete_continuous_gap(&ys, &yc).unwrap());
        cs.push(rep.stability_constant);
        ms.push(cl.m());
    }
    let dec = gaps.windows(2).all(|w| w[1] < w[0]);
    let cmax = cs.iter().cloned().fold(0.0, f64::max);
    outcome(
        dec && cmax < 3.0,
        format!(
            "M = {:?}: normalized RMS gap {:.4} {:.4} {:.4} (strictly decreasing: {dec}), max stability constant {cmax:.3} (< 3)",
            ms, gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn ac7() -> Outcome {
    let out = execute(&ExperimentConfig::new(ExperimentKind::NdConvergence)).unwrap();
    let r = &out.result["results"];
    let s = &r["summary"];
    let dec = s["all_strictly_decreasing"].as_bool().unwrap();
    let slope = s["slope"].as_f64();
    let pairs = r["series"].as_array().unwrap().len();
    outcome(
        dec && slope.is_some_and(|v| v > 0.0),
        format!(
            "M = {}, {pairs} (f,g) pairs all strictly decreasing: {dec}; min fitted slope {:.4} (> 0), reference exponent {:.4}; gap identity error {:.1e}",
            r["M"],
            slope.unwrap_or(f64::NAN),
            s["reference_slope"].as_f64().unwrap(),
            s["max_gap_identity_error"].as_f64().unwrap()
        ),
    )
}

fn ac8() -> Outcome {
    let bg = ElasticBackground::unit();
    let vol = Domain::Ball.volume_rule(6).unwrap();
    let bd = Domain::Ball.boundary_rule(10).unwrap();
    let ps = [3.0f64, 10.0, 30.0];
    let kinds = [
        DensityKind::Normal,
        DensityKind::Constant { axis: 0 },
        DensityKind::Linear { coord: 2, axis: 0 },
    ];
    let dens: Vec<Vec<C64>> = kinds.iter().map(|d| d.sample(Domain::Ball, &bd).unwrap()).collect();
    let mut scaled = vec![Vec::new(); kinds.len()];
    let mut etas = Vec::new();
    for p in ps {
        let sn = ShiftedNeumann::new(&vol, &bd, &bg, p * p).unwrap();
        let lin = Linearization::new(sn, cosine_density, 1.0).unwrap();
        etas.push(lin.eta);
        for (k, f) in dens.iter().enumerate() {
            scaled[k].push(lin.check(f).unwrap().report.remainder_times_p4);
        }
    }
    let mut ok = etas.iter().all(|e| *e < 1.0);
    let mut parts = Vec::new();
    for (k, s) in scaled.iter().enumerate() {
        let (slope, _) = fit_line(&ps.map(f64::ln), &s.iter().map(|v| v.ln()).collect::<Vec<_>>()).unwrap();
        ok &= slope <= 0.0 && s.iter().all(|v| v.is_finite());
        parts.push(format!(
            "{}: {:.2e} {:.2e} {:.2e} (trend {slope:.2})",
            kinds[k].label(),
            s[0],
            s[1],
            s[2]
        ));
    }
    outcome(
        ok,
        format!(
            "remainder P^4/||f|| at P = 3, 10, 30 with non-positive log-log trend: {}; eta = {:.3} {:.3} {:.3} (< 1)",
            parts.join(", "),
            etas[0],
            etas[1],
            etas[2]
        ),
    )
}

fn ac9() -> Outcome {
    let bg = ElasticBackground::new(1.7, 0.9, 1.0).unwrap();
    let mut r = rng();
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 50 {
        let k = [r.gen_range(-4..=4), r.gen_range(-4..=4), r.gen_range(-4..=4)];
        if k == [0, 0, 0] {
            continue;
        }
        n += 1;
        for p2 in [1.0, 10.0, 100.0] {
            let p = make_cgo_pair(k, p2, &bg, CgoVariant::Remark, None, 0.0).unwrap();
            let nx2 = vec3::dot(p.xi, p.xi);
            let mut errs = vec![
                (cdot(&p.zeta1, &p.zeta1) + p2 / bg.mu).norm(),
                (cdot(&p.zeta2, &p.zeta2) + p2 / bg.mu).norm(),
                cdot(&p.zeta1, &p.eta1).norm(),
                cdot(&p.zeta2, &p.eta2).norm(),
                (p.divisor() + 2.0 + 4.0 * p2 / (bg.mu * nx2)).norm(),
            ];
            errs.extend((0..3).map(|i| (p.zeta1[i] + p.zeta2[i] + p.xi[i]).norm()));
            worst = worst.max(errs.into_iter().fold(0.0, f64::max));
        }
    }
    outcome(
        worst < 1e-12,
        format!("max invariant defect {worst:.2e} (< 1e-12) over 50 lattice vectors x P^2 in {{1, 10, 100}}"),
    )
}

fn ac10() -> Outcome {
    let mut c = ExperimentConfig::new(ExperimentKind::Reconstruct);
    c.cgo.lattice_cut = 2;
    c.cgo.boundary_check_cut = 1;
    c.resolution.vol = 8;
    c.resolution.bdry = 10;
    let out = execute(&c).unwrap();
    let r = &out.result["results"];
    let rel = r["relative_error"].as_f64().unwrap();
    let b = &r["boundary_check"];
    let within = b["all_within_bound"].as_bool().unwrap();
    outcome(
        rel < 0.05 && within,
        format!(
            "oracle reconstruction of rho - mean at lattice_cut 2: relative L2 error {rel:.2e} (< 5%); boundary route on {} lattice vectors within the measured remainder bound: {within} (max discrepancy/bound {:.3}, P^2 = {:.3}, eta = {:.3})",
            b["count"],
            b["max_discrepancy_over_bound"].as_f64().unwrap(),
            r["p2"].as_f64().unwrap(),
            r["eta"].as_f64().unwrap()
        ),
    )
}

fn ac11() -> Outcome {
    let kvec = [1.2, -0.7, 2.1];
    let k = vec3::norm(kvec);
    let c = [0.3, -0.2, 0.5];
    let amp = [C64::new(1.0, 0.5), C64::new(-0.3, 0.2), C64::new(0.8, -1.1)];
    let wave = |x: Point| {
        let ph = C64::new(0.0, vec3::dot(kvec, x)).exp();
        amp.map(|a| a * ph)
    };
    let u0 = wave(c);
    let scale = u0.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut bessel = 0.0f64;
    for r in [0.1, 0.5, 1.0, 2.0] {
        let m = spherical_mean(wave, c, r, 24).unwrap();
        let j0 = (k * r).sin() / (k * r);
        for i in 0..3 {
            bessel = bessel.max((m[i] - u0[i] * j0).norm() / scale);
        }
    }
    // Taylor: mean = u + r²Δu/6 + r⁴Δ²u/120 + O(r⁶), Δu = −k²u
    let taylor = |r: f64, terms: usize| {
        let m = spherical_mean(wave, c, r, 24).unwrap();
        let kr2 = (k * r).powi(2);
        let factor = if terms == 1 {
            1.0 - kr2 / 6.0
        } else {
            1.0 - kr2 / 6.0 + kr2 * kr2 / 120.0
        };
        (0..3).map(|i| (m[i] - u0[i] * factor).norm()).fold(0.0, f64::max) / scale
    };
    let (r1, r2) = (0.2, 0.1);
    let s2 = (taylor(r1, 1) / taylor(r2, 1)).log2();
    let s4 = (taylor(r1, 2) / taylor(r2, 2)).log2();
    let ok = bessel < 1e-8 && (s2 - 4.0).abs() < 0.1 && (s4 - 6.0).abs() < 0.1;
    outcome(
        ok,
        format!("max |mean - j0(kr) u(c)| {bessel:.2e} (< 1e-8); remainder orders after the r^2 and r^4 terms {s2:.3} and {s4:.3} (expected 4 and 6)"),
    )
}

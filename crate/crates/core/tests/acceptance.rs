//! Acceptance suite: one PASS/FAIL line per criterion, with timings.
//! Runs as a plain binary (`harness = false`) so every line is printed.

use std::f64::consts::SQRT_2;
use std::time::{Duration, Instant};

use pwsbif_core::curve::{BifurcationCurve, CurveKind};
use pwsbif_core::dmaps::{self, Env, MapKind, SimpleMapModel};
use pwsbif_core::equilibria;
use pwsbif_core::fixtures;
use pwsbif_core::flow::{self, IntegratorOptions};
use pwsbif_core::linalg::Spectrum;
use pwsbif_core::normalform::{build_transform, compute_invariants, locate_codim2, InvariantSet};
use pwsbif_core::orbits::{self, OrbitOptions};
use pwsbif_core::scaling::{self, FitOptions, ReportOptions};
use pwsbif_core::system::{check_continuity, Box2D};
use pwsbif_core::{NormalFormSystem, Vec2};

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn setup() -> (NormalFormSystem, InvariantSet) {
    let nf = fixtures::example_nf();
    let inv = compute_invariants(&nf).expect("invariants");
    (nf, inv)
}

fn grazing(nf: &NormalFormSystem, inv: &InvariantSet, mu: f64, opts: &OrbitOptions) -> (f64, f64) {
    let (h1, rec) = orbits::grazing_point(nf, inv, mu, opts).expect("grazing point");
    (h1, rec.eta)
}

/// 1. Invariants of the normal-form example within 1e-5 relative, < 5 s.
fn invariants() -> Outcome {
    let (_, inv) = setup();
    let want = [("a0", inv.a0, 25.0 / 88.0), ("omega", inv.omega, 1.0 / SQRT_2), ("tau_R", inv.tau_r, -0.2), ("delta_R", inv.delta_r, 0.25)];
    let worst = want.iter().map(|w| rel(w.1, w.2)).fold(0.0, f64::max);
    let detail = want.iter().map(|w| format!("{}={:.10}", w.0, w.1)).collect::<Vec<_>>().join(" ");
    Outcome { pass: worst < 1e-5, detail: format!("{detail} max rel err {worst:.2e}") }
}

/// 2. Codim-2 point of the raw example at the origin, spectra within 1e-8, < 5 s.
fn codim2() -> Outcome {
    let sys = fixtures::example_raw();
    let pt = locate_codim2(&sys, Vec2::new(0.05, -0.03), [0.02, -0.05]).expect("codim-2 point");
    let loc = [pt.state.x, pt.state.y, pt.params[0], pt.params[1]];
    let loc_err = loc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let spec_err = |s: Spectrum, re: f64, im: f64| match s {
        Spectrum::Complex { re: r, im: i } => (r - re).abs().max((i - im).abs()),
        Spectrum::Real { .. } => f64::INFINITY,
    };
    let el = spec_err(pt.left_spectrum, 0.0, 1.0 / SQRT_2);
    let er = spec_err(pt.right_spectrum, -0.1, 6f64.sqrt() / 5.0);
    Outcome {
        pass: loc_err < 1e-8 && el < 1e-8 && er < 1e-8,
        detail: format!("(u,v,α,β) max |·| {loc_err:.2e}; left spectrum err {el:.2e}; right spectrum err {er:.2e}"),
    }
}

/// 3. dh₁/dμ at zero equals 20/33 within 2% from a 30-point grid, < 30 s.
fn hopf_slope() -> Outcome {
    let nf = fixtures::example_nf();
    let grid = scaling::log_space(1e-3, 0.1, 30);
    let h1 = equilibria::trace_h1(&nf, &grid).expect("h1 trace");
    let pts: Vec<(f64, f64)> = h1.samples.iter().map(|s| (s.mu, s.eta)).collect();
    let (slope, se) = scaling::slope_at_origin(&pts, 3).expect("slope fit");
    let oracle = 20.0 / 33.0;
    let e = rel(slope, oracle);
    Outcome { pass: e < 0.02, detail: format!("slope {slope:.6} ± {se:.1e} vs {oracle:.6} (rel err {e:.2e})") }
}

/// 4. (h₁ − h₂) ~ (25/11)μ² on [3e-3, 3e-2]: exponent ± 0.05, coefficient 5%, < 3 min.
fn grazing_scaling() -> Outcome {
    let (nf, inv) = setup();
    let opts = OrbitOptions::default();
    let grid = scaling::log_space(3e-3, 3e-2, 12);
    let h2 = orbits::trace_h2(&nf, &inv, &grid, &opts).expect("h2 trace");
    let h1 = equilibria::trace_h1(&nf, &grid).expect("h1 trace");
    let pts: Vec<(f64, f64, f64)> = h2
        .samples
        .iter()
        .zip(&h1.samples)
        .map(|(g, h)| (g.mu, h.eta - g.eta, g.residual))
        .collect();
    let pts = scaling::above_noise(&pts, 100.0);
    match scaling::fit_power_law(&pts, 1.0) {
        Ok(fit) => {
            let e = rel(fit.coefficient, 25.0 / 11.0);
            Outcome {
                pass: (fit.exponent - 2.0).abs() <= 0.05 && e <= 0.05,
                detail: format!(
                    "exponent {:.4} ± {:.1e}, coefficient {:.5} vs {:.5} (rel err {e:.2e}), max graze {:.1e}",
                    fit.exponent,
                    fit.exponent_se,
                    fit.coefficient,
                    25.0 / 11.0,
                    h2.max_residual()
                ),
            }
        }
        Err(err) => Outcome { pass: false, detail: format!("fit failed: {err}") },
    }
}

/// Saddle-node samples `(μ, h₃ − h₂, residual, multiplier)` over a grid;
/// μ values without a fold are returned separately.
#[allow(clippy::type_complexity)]
fn saddle_nodes(nf: &NormalFormSystem, inv: &InvariantSet, grid: &[f64]) -> (Vec<(f64, f64, f64, f64)>, Vec<f64>) {
    let opts = OrbitOptions::precise();
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for &mu in grid {
        let (_, h2) = grazing(nf, inv, mu, &opts);
        match orbits::saddle_node_point(nf, inv, mu, h2, &opts) {
            Ok(fp) => found.push((mu, fp.eta2, fp.residual, fp.multiplier)),
            Err(_) => missing.push(mu),
        }
    }
    (found, missing)
}

/// 5. (h₂ − h₃) ~ 965.6 μ⁶ on [0.05, 0.2]: exponent ± 0.3, coefficient 25%, < 10 min.
fn saddle_node_scaling() -> Outcome {
    let (nf, inv) = setup();
    let grid = scaling::log_space(0.05, 0.2, 8);
    let (found, missing) = saddle_nodes(&nf, &inv, &grid);
    let pts: Vec<(f64, f64, f64)> = found.iter().map(|s| (s.0, -s.1, s.2)).collect();
    let pts = scaling::above_noise(&pts, 100.0);
    let oracle = -inv.saddle_node_coefficient();
    let fit = scaling::fit_power_law_with(&pts, 1.0, &FitOptions { min_decades: 0.5, ..FitOptions::default() });
    let mut detail = format!("folds at {} of {} μ; no fold at μ = {:?}", found.len(), grid.len(), missing);
    let pass = match fit {
        Ok(f) => {
            detail += &format!("; exponent {:.3}, coefficient {:.1} vs {oracle:.1}", f.exponent, f.coefficient);
            (f.exponent - 6.0).abs() <= 0.3 && rel(f.coefficient, oracle) <= 0.25 && missing.is_empty()
        }
        Err(e) => {
            detail += &format!("; fit failed: {e}");
            false
        }
    };
    // Where the law can be fitted: below the cusp.
    let low = scaling::log_space(0.015, 0.06, 8);
    let (lf, _) = saddle_nodes(&nf, &inv, &low);
    let pts: Vec<(f64, f64)> = lf.iter().map(|s| (s.0, -s.1)).collect();
    if let Ok(f) = scaling::fit_power_law_with(&pts, 1.0, &FitOptions { min_decades: 0.5, ..FitOptions::default() }) {
        detail += &format!(
            "\n      info: on μ ∈ [0.015, 0.06] exponent {:.3} ± {:.1e}, coefficient {:.1}",
            f.exponent, f.exponent_se, f.coefficient
        );
    }
    Outcome { pass, detail }
}

/// 6. Fold-branch intersection in the raw frame near (0.019, −0.29) within 0.005, < 10 min.
fn cusp() -> Outcome {
    let (nf, inv) = setup();
    let raw = fixtures::example_raw();
    let pt = locate_codim2(&raw, Vec2::new(0.05, -0.03), [0.02, -0.05]).expect("codim-2 point");
    let transform = build_transform(&raw, &pt).expect("transform");
    let opts = OrbitOptions::precise();
    let c = orbits::locate_cusp(&nf, &inv, 0.08, 0.12, 2e-4, &opts).expect("cusp");
    let curve = BifurcationCurve::new(
        CurveKind::SaddleNode,
        vec![pwsbif_core::curve::CurveSample { mu: c.mu, eta: c.eta, eta2: f64::NAN, residual: 0.0, multiplier: 1.0 }],
    );
    let rawc = transform.curve_to_raw(&curve).expect("raw frame");
    let (alpha, beta) = (rawc.samples[0].mu, rawc.samples[0].eta);
    let pass = (alpha - 0.019).abs() < 5e-3 && (beta + 0.29).abs() < 5e-3;
    Outcome { pass, detail: format!("cusp at μ = {:.4}, η = {:.5} → (α, β) = ({alpha:.4}, {beta:.4})", c.mu, c.eta) }
}

/// 7. Property suite.
fn properties() -> Outcome {
    let (nf, inv) = setup();
    let mut fails = Vec::new();
    let mut notes = Vec::new();
    let io = IntegratorOptions::default();

    // Semigroup and reversibility through switching crossings.
    let q = [0.02, 0.01];
    let p0 = Vec2::new(0.03, -0.04);
    let whole = flow::integrate(&nf, &q, p0, 7.0, &io, false).unwrap().endpoint;
    let mid = flow::integrate(&nf, &q, p0, 3.1, &io, false).unwrap().endpoint;
    let split = flow::integrate(&nf, &q, mid, 3.9, &io, false).unwrap().endpoint;
    let back = flow::integrate(&nf, &q, whole, -7.0, &io, false).unwrap().endpoint;
    let (e_semi, e_rev) = ((whole - split).max_abs(), (back - p0).max_abs());
    notes.push(format!("semigroup {e_semi:.1e}, reversal {e_rev:.1e}"));
    if e_semi >= 1e-7 || e_rev >= 1e-7 {
        fails.push("flow semigroup/reversibility");
    }

    // Variational equation against finite differences.
    let r = flow::integrate(&nf, &q, p0, 6.0, &io, true).unwrap();
    let fd = flow::fd_flow_jacobian(&nf, &q, p0, 6.0, &io, 1e-6).unwrap();
    let e_var = (r.variational.unwrap() - fd).max_abs() / fd.max_abs();
    notes.push(format!("variational {e_var:.1e}"));
    if e_var >= 1e-4 {
        fails.push("variational vs finite differences");
    }

    // Continuity across the manifold.
    let raw = fixtures::example_raw();
    let e_cont = [[0.0, 0.0], [0.05, -0.2], [-0.03, 0.4]]
        .iter()
        .map(|p| check_continuity(&raw, p, Box2D::square(1.0), 200).unwrap())
        .fold(0.0, f64::max);
    notes.push(format!("continuity {e_cont:.1e}"));
    if e_cont >= 1e-10 {
        fails.push("manifold continuity");
    }

    // Orbit closure.
    let opts = OrbitOptions::default();
    let (mu, eta) = (0.02, equilibria::hopf_eta(&nf, 0.02).unwrap() - 1e-4);
    let rec = orbits::hopf_cycle(&nf, mu, eta, &opts).unwrap();
    let (section, _) = orbits::section_at(&nf, mu, eta).unwrap();
    let start = rec.start(&section);
    let end = flow::integrate(&nf, &[mu, eta], start, rec.period, &io, false).unwrap().endpoint;
    let e_close = (end - start).norm();
    notes.push(format!("closure {e_close:.1e}"));
    if e_close >= 1e-7 {
        fails.push("orbit closure");
    }

    // Multipliers at traced Hopf points.
    let grid = [0.005, 0.01, 0.02, 0.05];
    let h1 = equilibria::trace_h1(&nf, &grid).unwrap();
    let e_hopf = h1
        .samples
        .iter()
        .map(|s| (orbits::equilibrium_return_multiplier(&nf, s.mu, s.eta, 1e-3, &opts).unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    notes.push(format!("Hopf |m−1| {e_hopf:.1e}"));
    if e_hopf >= 2e-3 {
        fails.push("Hopf multipliers");
    }

    // Graze measure at traced grazing points.
    let h2 = orbits::trace_h2(&nf, &inv, &grid, &opts).unwrap();
    let e_graze = h2.max_residual();
    notes.push(format!("graze {e_graze:.1e}"));
    if e_graze >= 1e-8 {
        fails.push("graze measure");
    }

    // Saddle-node multipliers and the ordering h₃ < h₂ < h₁ on (0, 0.2].
    let order_grid = [0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.15, 0.2];
    let (found, missing) = saddle_nodes(&nf, &inv, &order_grid);
    let e_sn = found.iter().map(|s| (s.3 - 1.0).abs()).fold(0.0, f64::max);
    notes.push(format!("saddle-node |m−1| {e_sn:.1e}"));
    if e_sn >= 5e-3 {
        fails.push("saddle-node multipliers");
    }
    let mut bad = Vec::new();
    for &mu in &order_grid {
        let (h1, h2) = grazing(&nf, &inv, mu, &opts);
        let h3_below = found.iter().find(|s| s.0 == mu).map(|s| s.1 < 0.0);
        if !(h2 < h1) || h3_below != Some(true) {
            bad.push(mu);
        }
    }
    if !bad.is_empty() {
        fails.push("ordering h3 < h2 < h1");
        notes.push(format!("ordering fails at μ = {bad:?} (no saddle-node at μ = {missing:?})"));
    }

    let detail = if fails.is_empty() { notes.join(", ") } else { format!("failed: {}; {}", fails.join(", "), notes.join(", ")) };
    Outcome { pass: fails.is_empty(), detail }
}

/// 8. Asymptotics: Pdm error exponent ≥ 1.9, simple-map fold against a
/// brute-force oracle within 1e-6, predicted fold within 30% on [0.05, 0.2].
fn asymptotics() -> Outcome {
    let (nf, inv) = setup();
    let mut fails = Vec::new();
    let mut notes = Vec::new();

    let mu = 0.02;
    let opts = OrbitOptions::default();
    let (_, h2) = grazing(&nf, &inv, mu, &opts);
    let env = Env::measure(&nf, &inv, mu, h2, 0.0).unwrap();
    let pdm = dmaps::build_asymptotic(&inv, MapKind::Pdm).unwrap();
    let grid: Vec<f64> = scaling::log_space(2e-3, 0.3, 10);
    let io = IntegratorOptions { rtol: 1e-12, atol: 1e-15, ..IntegratorOptions::default() };
    let table = dmaps::validate_against_flow(&pdm, &nf, &env, &grid, &io).unwrap();
    match table.decay {
        Some(f) => {
            notes.push(format!("Pdm error exponent {:.3}", f.exponent));
            if f.exponent < 1.9 {
                fails.push("Pdm decay");
            }
        }
        None => fails.push("Pdm decay fit"),
    }

    let models = [(0.9, 1.0), (1.0 + inv.q1() * 4e-4, 4.0 * SQRT_2 / 3.0 * inv.tau_r), (1.05, -2.0), (0.7, 0.3)];
    let mut worst: f64 = 0.0;
    for (xi, gamma) in models {
        let formula = dmaps::simplemap_fold(&SimpleMapModel { xi, gamma, eta2: 0.0 }).unwrap();
        let eps_fold = (2.0 * (xi - 1.0) / (3.0 * gamma)).powi(2);
        let brute = dmaps::simplemap_fold_brute_force(xi, gamma, 4.0 * eps_fold, 4000).unwrap();
        worst = worst.max(rel(brute, formula));
    }
    notes.push(format!("simple-map fold rel err {worst:.1e}"));
    if worst >= 1e-6 {
        fails.push("simple-map fold");
    }

    let grid = scaling::log_space(0.05, 0.2, 8);
    let (found, missing) = saddle_nodes(&nf, &inv, &grid);
    let mut worst_pred: f64 = 0.0;
    for s in &found {
        let (pred, _) = dmaps::predicted_fold(&inv, s.0);
        worst_pred = worst_pred.max(rel(pred, s.1));
    }
    notes.push(format!("fold prediction worst rel err {worst_pred:.3} over μ = {:?}", found.iter().map(|s| s.0).collect::<Vec<_>>()));
    if worst_pred > 0.3 || !missing.is_empty() {
        fails.push("fold prediction on [0.05, 0.2]");
        if !missing.is_empty() {
            notes.push(format!("no traced saddle-node at μ = {missing:?}"));
        }
    }
    let low = [0.01, 0.02, 0.03, 0.04];
    let (lf, _) = saddle_nodes(&nf, &inv, &low);
    let info: Vec<String> = lf.iter().map(|s| format!("{}: {:.3}", s.0, rel(dmaps::predicted_fold(&inv, s.0).0, s.1))).collect();
    notes.push(format!("\n      info: prediction rel err below the window {}", info.join(", ")));

    let detail = if fails.is_empty() { notes.join("; ") } else { format!("failed: {}; {}", fails.join(", "), notes.join("; ")) };
    Outcome { pass: fails.is_empty(), detail }
}

fn theorem_report_rows() -> Outcome {
    let (nf, inv) = setup();
    let opts = OrbitOptions::precise();
    let h1 = equilibria::trace_h1(&nf, &scaling::log_space(1e-3, 0.1, 30)).unwrap();
    let h2 = orbits::trace_h2(&nf, &inv, &scaling::log_space(3e-3, 3e-2, 12), &opts).unwrap();
    let (found, _) = saddle_nodes(&nf, &inv, &scaling::log_space(0.015, 0.06, 8));
    let h3 = BifurcationCurve::new(
        CurveKind::SaddleNode,
        found
            .iter()
            .map(|s| pwsbif_core::curve::CurveSample { mu: s.0, eta: f64::NAN, eta2: s.1, residual: s.2, multiplier: s.3 })
            .collect(),
    );
    let ro = ReportOptions { saddle_node: scaling::LawSpec { window: None, ..ReportOptions::default().saddle_node }, ..ReportOptions::default() };
    let report = scaling::theorem_report(&inv, &[h1, h2, h3], &ro).unwrap();
    let exps: Vec<String> =
        report.rows.iter().map(|r| r.fit.as_ref().map_or_else(|e| e.to_string(), |f| format!("{:.3}", f.exponent))).collect();
    Outcome { pass: report.rows.len() == 3, detail: format!("exponents ({}) [info]", exps.join(", ")) }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("1 invariant extraction", invariants, Duration::from_secs(5)),
        ("2 codim-2 location", codim2, Duration::from_secs(5)),
        ("3 Hopf locus slope", hopf_slope, Duration::from_secs(30)),
        ("4 grazing scaling", grazing_scaling, Duration::from_secs(180)),
        ("5 saddle-node scaling", saddle_node_scaling, Duration::from_secs(600)),
        ("6 cusp location", cusp, Duration::from_secs(600)),
        ("7 property suite", properties, Duration::from_secs(600)),
        ("8 asymptotics validation", asymptotics, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let t = Instant::now();
        let out = run();
        let dt = t.elapsed();
        let pass = out.pass && dt <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name} [{:.1} s, budget {} s]: {}",
            if pass { "PASS" } else { "FAIL" },
            dt.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    let t = Instant::now();
    let out = theorem_report_rows();
    println!("INFO theorem report [{:.1} s]: {}", t.elapsed().as_secs_f64(), out.detail);
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

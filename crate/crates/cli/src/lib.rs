//! Command-line front end: invariants, traced loci, map validation, scaling
//! verification and bifurcation-set plots.

pub mod config;
pub mod svg;
pub mod table;

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use pwsbif_core::curve::{BifurcationCurve, CurveKind, CurveSample, Frame};
use pwsbif_core::dmaps::{self, Env, MapKind};
use pwsbif_core::equilibria;
use pwsbif_core::fixtures::{self, FixtureKind};
use pwsbif_core::flow::{self, FieldMode, IntegratorOptions, StepView};
use pwsbif_core::normalform::{build_transform, compute_invariants, criticality, locate_codim2, InvariantSet, TransformRecord};
use pwsbif_core::orbits::{self, OrbitOptions};
use pwsbif_core::scaling::{self, ReportOptions, TheoremReport};
use pwsbif_core::{NormalFormSystem, Side, Vec2};

use config::RunConfig;
use svg::{LineStyle, PlotSeries, PlotSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Module(String),
    #[error("checks failed: {0}")]
    ChecksFailed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn module<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Module(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "pwsbif", version, about = "Unfolding of discontinuous Hopf bifurcations in planar piecewise-smooth systems")]
pub struct Cli {
    /// INI configuration file (flags override its values).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Locate the codimension-two point and print the invariants.
    Invariants(SystemArgs),
    /// Trace the Hopf locus.
    H1(CurveArgs),
    /// Trace Hopf, grazing and saddle-node loci as CSV.
    Curves(CurvesArgs),
    /// Compare an asymptotic return map with the flow.
    DmapValidate(DmapArgs),
    /// Fit the traced loci against the leading-order scaling laws.
    Verify(VerifyArgs),
    /// Plot the bifurcation set as SVG.
    Bifset(BifsetArgs),
    /// Integrate one trajectory and print it as CSV.
    Integrate(IntegrateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SystemArgs {
    /// Registered system (example-nf, example-raw).
    #[arg(long)]
    pub system: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long)]
    pub mu_min: Option<f64>,
    #[arg(long)]
    pub mu_max: Option<f64>,
    /// Number of grid points (logarithmic spacing).
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct CurveArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// h1, h2, h3 or all.
    #[arg(long, default_value = "all")]
    pub which: String,
    /// Report parameters in the raw frame (raw systems only).
    #[arg(long)]
    pub raw_frame: bool,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DmapArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// P1, P2, P3, Pdm, Plhf or Pfull.
    #[arg(long, default_value = "Pdm")]
    pub map: String,
    #[arg(long, default_value_t = 0.02)]
    pub mu: f64,
    /// Offset η − h₂(μ) of the parameter point.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub eta2: f64,
    #[arg(long, default_value_t = 2e-3)]
    pub x_min: f64,
    #[arg(long, default_value_t = 0.3)]
    pub x_max: f64,
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Human-readable report (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// μ window of the saddle-node fit.
    #[arg(long, default_value_t = 0.015)]
    pub sn_mu_min: f64,
    #[arg(long, default_value_t = 0.06)]
    pub sn_mu_max: f64,
}

#[derive(Args, Debug, Clone)]
pub struct BifsetArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value = "bifset.svg")]
    pub out: PathBuf,
    /// Also write the plotted curves as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub mu_max: f64,
    #[arg(long, default_value_t = 16)]
    pub points: usize,
}

#[derive(Args, Debug, Clone)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Parameter values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub params: Vec<f64>,
    /// Initial state `x,y`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub start: Vec<f64>,
    /// Signed integration time.
    #[arg(long, allow_hyphen_values = true)]
    pub time: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// A registered system prepared for analysis.
pub struct Resolved {
    pub name: String,
    pub nf: NormalFormSystem,
    pub transform: Option<Arc<TransformRecord>>,
    pub raw: pwsbif_core::PiecewiseSystem,
}

pub fn resolve(name: &str) -> Result<Resolved, CliError> {
    let reg = fixtures::by_name(name)
        .ok_or_else(|| CliError::Usage(format!("unknown system {name}; known: {}", fixtures::NAMES.join(", "))))?;
    match reg.kind {
        FixtureKind::NormalForm => {
            let nf = reg.normal_form().ok_or_else(|| CliError::Module(format!("{name} is not in normal form")))?;
            Ok(Resolved { name: name.into(), nf, transform: None, raw: reg.system })
        }
        FixtureKind::Raw => {
            let p = &reg.default_params;
            let pt = locate_codim2(&reg.system, Vec2::ZERO, [p[0], p[1]]).map_err(module)?;
            let t = build_transform(&reg.system, &pt).map_err(module)?;
            let nf = t.normal_form().map_err(module)?;
            Ok(Resolved { name: name.into(), nf, transform: Some(t), raw: reg.system })
        }
    }
}

fn orbit_options(cfg: &RunConfig) -> OrbitOptions {
    let integrator = IntegratorOptions { rtol: cfg.rtol, atol: cfg.atol, ..IntegratorOptions::default() };
    OrbitOptions { integrator, shoot_tol: cfg.shoot_tol, ..OrbitOptions::default() }
}

fn apply_system(cfg: &mut RunConfig, a: &SystemArgs) {
    if let Some(s) = &a.system {
        cfg.system = s.clone();
    }
}

fn apply_grid(cfg: &mut RunConfig, g: &GridArgs) {
    cfg.mu_min = g.mu_min.or(cfg.mu_min);
    cfg.mu_max = g.mu_max.or(cfg.mu_max);
    cfg.points = g.points.or(cfg.points);
}

/// Logarithmic μ grid from the configuration, with per-command defaults.
fn grid(cfg: &RunConfig, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, CliError> {
    let (lo, hi, n) = (cfg.mu_min.unwrap_or(lo), cfg.mu_max.unwrap_or(hi), cfg.points.unwrap_or(n));
    if n == 0 {
        return Err(CliError::Usage("--points must be at least 1".into()));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(CliError::Usage(format!("μ range [{lo}, {hi}] must satisfy 0 < mu_min <= mu_max")));
    }
    Ok(scaling::log_space(lo, hi, n))
}

/// Writes to `path` (resolved against the output directory) or stdout.
fn emit(cfg: &RunConfig, path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let p = cfg.output_path(p);
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&p, text)?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn check_residuals(cfg: &RunConfig, curves: &[BifurcationCurve]) -> Result<(), CliError> {
    let bad: Vec<String> = curves
        .iter()
        .filter(|c| c.max_residual() > cfg.residual_tol)
        .map(|c| format!("{} residual {:.2e} > {:.0e}", c.kind, c.max_residual(), cfg.residual_tol))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(bad.join("; ")))
    }
}

fn invariants_text(r: &Resolved, inv: &InvariantSet) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "system = {}", r.name);
    if let Some(t) = &r.transform {
        let o = t.origin();
        let _ = writeln!(s, "codim2_state = {}, {}", o.state.x, o.state.y);
        let _ = writeln!(s, "codim2_params = {}, {}", o.params[0], o.params[1]);
    }
    let _ = writeln!(s, "omega = {}", inv.omega);
    let _ = writeln!(s, "a0 = {}", inv.a0);
    let _ = writeln!(s, "tau_R = {}", inv.tau_r);
    let _ = writeln!(s, "delta_R = {}", inv.delta_r);
    let _ = writeln!(s, "delta_L = {}", inv.delta_l);
    let _ = writeln!(s, "hopf_slope = {}", inv.hopf_slope());
    let _ = writeln!(s, "grazing_coefficient = {}", inv.grazing_coefficient());
    let _ = writeln!(s, "saddle_node_coefficient = {}", inv.saddle_node_coefficient());
    let _ = writeln!(s, "q1 = {}", inv.q1());
    let sc = criticality(inv);
    let _ = writeln!(s, "scenario = {sc:?}");
    for f in &inv.flags {
        let _ = writeln!(s, "flag {} = {} ({})", f.name, f.value, if f.holds() { "ok" } else { "degenerate" });
    }
    s
}

fn trace(r: &Resolved, inv: &InvariantSet, kind: CurveKind, grid: &[f64], opts: &OrbitOptions) -> Result<BifurcationCurve, CliError> {
    match kind {
        CurveKind::Hopf => equilibria::trace_h1(&r.nf, grid).map_err(module),
        CurveKind::Grazing => orbits::trace_h2(&r.nf, inv, grid, opts).map_err(module),
        CurveKind::SaddleNode => orbits::trace_h3(&r.nf, inv, grid, opts).map_err(module),
    }
}

fn default_grid(kind: CurveKind) -> (f64, f64, usize) {
    match kind {
        CurveKind::Hopf => (1e-3, 0.1, 30),
        CurveKind::Grazing => (3e-3, 3e-2, 12),
        CurveKind::SaddleNode => (0.015, 0.06, 8),
    }
}

fn to_frame(r: &Resolved, curves: Vec<BifurcationCurve>, raw: bool) -> Result<Vec<BifurcationCurve>, CliError> {
    match (&r.transform, raw) {
        (Some(t), true) => orbits::bifurcation_set_raw(t, &curves).map_err(module),
        (None, true) => Err(CliError::Usage(format!("{} has no raw frame", r.name))),
        _ => Ok(curves),
    }
}

fn report_csv(report: &TheoremReport) -> String {
    let mut s = String::from("law,quantity,predicted_exponent,fitted_exponent,exponent_se,predicted_coefficient,fitted_coefficient,n_points,pass\n");
    for row in &report.rows {
        let (e, se, n) = match &row.fit {
            Ok(f) => (table::num(f.exponent), table::num(f.exponent_se), f.n_points.to_string()),
            Err(_) => ("NaN".into(), "NaN".into(), "0".into()),
        };
        let _ = writeln!(
            s,
            "{},{},{},{e},{se},{},{},{n},{}",
            row.kind,
            row.quantity,
            table::num(row.predicted_exponent),
            table::num(row.predicted_coefficient),
            table::num(row.compared_coefficient.unwrap_or(f64::NAN)),
            row.pass
        );
    }
    s
}

/// Lower and upper fold branches and, if they meet, the cusp.
fn fold_branches(
    r: &Resolved,
    inv: &InvariantSet,
    mu_max: f64,
    n: usize,
    opts: &OrbitOptions,
) -> (BifurcationCurve, BifurcationCurve, Option<orbits::CuspPoint>) {
    let grid = scaling::log_space(0.01, mu_max.max(0.011), n);
    let probe = |mu: f64| -> Option<(Option<orbits::FoldPoint>, Option<orbits::FoldPoint>)> {
        let h1 = equilibria::hopf_eta(&r.nf, mu).ok()?;
        let h2 = orbits::grazing_eta(&r.nf, mu, h1, inv.grazing_coefficient() * mu * mu, opts).ok()?;
        orbits::fold_pair(&r.nf, inv, mu, h2, opts).ok()
    };
    let pairs: Vec<_> = grid.par_iter().map(|&mu| (mu, probe(mu))).collect();
    let sample = |f: &orbits::FoldPoint| CurveSample { mu: f.mu, eta: f.eta, eta2: f.eta2, residual: f.residual, multiplier: f.multiplier };
    let lower = pairs.iter().filter_map(|p| p.1.as_ref()?.0.as_ref().map(sample)).collect();
    let upper = pairs.iter().filter_map(|p| p.1.as_ref()?.1.as_ref().map(sample)).collect();
    let both = |p: &(f64, Option<(Option<orbits::FoldPoint>, Option<orbits::FoldPoint>)>)| {
        matches!(&p.1, Some((Some(_), Some(_))))
    };
    let cusp = pairs
        .windows(2)
        .find(|w| both(&w[0]) && !both(&w[1]))
        .and_then(|w| orbits::locate_cusp(&r.nf, inv, w[0].0, w[1].0, 1e-4 * w[1].0, opts).ok());
    (BifurcationCurve::new(CurveKind::SaddleNode, lower), BifurcationCurve::new(CurveKind::SaddleNode, upper), cusp)
}

fn collect_trajectory(r: &Resolved, a: &IntegrateArgs, cfg: &RunConfig) -> Result<String, CliError> {
    if a.start.len() != 2 {
        return Err(CliError::Usage("--start needs two values x,y".into()));
    }
    r.raw.check_params(&a.params).map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = IntegratorOptions { rtol: cfg.rtol.max(1e-13), atol: cfg.atol, ..IntegratorOptions::default() };
    let p0 = Vec2::new(a.start[0], a.start[1]);
    let side0 = r.raw.side_of(p0, &a.params);
    let mut rows = vec![(0.0, p0, side0)];
    let mut observe = |v: &StepView<'_>| rows.push((v.t1, v.state(1.0), v.side));
    let res = flow::integrate_observed(&r.raw, &a.params, p0, a.time, FieldMode::Piecewise, &opts, false, Some(&mut observe))
        .map_err(module)?;
    let mut s = String::from("t,x,y,side\n");
    for (t, p, side) in rows {
        let side = match side {
            Side::Left => "left",
            Side::Right => "right",
        };
        let _ = writeln!(s, "{},{},{},{side}", table::num(t), table::num(p.x), table::num(p.y));
    }
    eprintln!("{} crossings; endpoint ({}, {})", res.events.len(), res.endpoint.x, res.endpoint.y);
    Ok(s)
}

/// Runs one parsed command, writing primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.load_file(p)?;
    }
    match cli.command {
        Command::Invariants(a) => {
            apply_system(&mut cfg, &a);
            let r = resolve(&cfg.system)?;
            let inv = compute_invariants(&r.nf).map_err(module)?;
            out.write_all(invariants_text(&r, &inv).as_bytes())?;
        }
        Command::H1(a) => {
            apply_system(&mut cfg, &a.system);
            apply_grid(&mut cfg, &a.grid);
            let (lo, hi, n) = default_grid(CurveKind::Hopf);
            let g = grid(&cfg, lo, hi, n)?;
            let r = resolve(&cfg.system)?;
            let c = equilibria::trace_h1(&r.nf, &g).map_err(module)?;
            emit(&cfg, a.csv.as_deref(), &table::curves_to_string(std::slice::from_ref(&c)), out)?;
            check_residuals(&cfg, &[c])?;
        }
        Command::Curves(a) => {
            apply_system(&mut cfg, &a.system);
            apply_grid(&mut cfg, &a.grid);
            let kinds = match a.which.as_str() {
                "all" => vec![CurveKind::Hopf, CurveKind::Grazing, CurveKind::SaddleNode],
                w => vec![CurveKind::parse(w).ok_or_else(|| CliError::Usage(format!("--which {w}: expected h1, h2, h3 or all")))?],
            };
            let grids = kinds
                .iter()
                .map(|&k| {
                    let (lo, hi, n) = default_grid(k);
                    grid(&cfg, lo, hi, n)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let r = resolve(&cfg.system)?;
            let inv = compute_invariants(&r.nf).map_err(module)?;
            let opts = orbit_options(&cfg);
            let curves = kinds
                .iter()
                .zip(&grids)
                .map(|(&k, g)| trace(&r, &inv, k, g, &opts))
                .collect::<Result<Vec<_>, _>>()?;
            check_residuals(&cfg, &curves).inspect_err(|e| eprintln!("{e}")).ok();
            let framed = to_frame(&r, curves.clone(), a.raw_frame)?;
            emit(&cfg, a.csv.as_deref(), &table::curves_to_string(&framed), out)?;
            check_residuals(&cfg, &curves)?;
        }
        Command::DmapValidate(a) => {
            apply_system(&mut cfg, &a.system);
            if a.points == 0 {
                return Err(CliError::Usage("--points must be at least 1".into()));
            }
            let kind = MapKind::parse(&a.map).ok_or_else(|| CliError::Usage(format!("--map {}: unknown map", a.map)))?;
            if !(a.x_min > 0.0 && a.x_max >= a.x_min) {
                return Err(CliError::Usage("need 0 < x_min <= x_max".into()));
            }
            let r = resolve(&cfg.system)?;
            let inv = compute_invariants(&r.nf).map_err(module)?;
            let opts = orbit_options(&cfg);
            let (_, g) = orbits::grazing_point(&r.nf, &inv, a.mu, &opts).map_err(module)?;
            let env = Env::measure(&r.nf, &inv, a.mu, g.eta + a.eta2, a.eta2).map_err(module)?;
            let amap = dmaps::build_asymptotic(&inv, kind).map_err(module)?;
            let xs = scaling::log_space(a.x_min, a.x_max, a.points);
            let t = dmaps::validate_against_flow(&amap, &r.nf, &env, &xs, &opts.integrator).map_err(module)?;
            let mut s = format!("{},asymptotic,exact,error\n", if kind.variable() == "ŷ" { "y_hat" } else { "eps_hat" });
            for row in &t.rows {
                let _ = writeln!(s, "{},{},{},{}", table::num(row.x), table::num(row.asymptotic), table::num(row.exact), table::num(row.error));
            }
            eprintln!("{} = {}", kind.as_str(), amap.series);
            if let Some(f) = t.decay {
                eprintln!("error ~ {:.4e} · x^{:.4} (± {:.1e})", f.coefficient, f.exponent, f.exponent_se);
            }
            emit(&cfg, a.csv.as_deref(), &s, out)?;
        }
        Command::Verify(a) => {
            apply_system(&mut cfg, &a.system);
            let r = resolve(&cfg.system)?;
            let inv = compute_invariants(&r.nf).map_err(module)?;
            let opts = OrbitOptions::precise();
            let opts = OrbitOptions { shoot_tol: cfg.shoot_tol, ..opts };
            let g2 = scaling::log_space(3e-3, 3e-2, 12);
            // h₁ is also traced at the grazing grid so h₂ − h₁ needs no interpolation.
            let mut g1 = scaling::log_space(1e-3, 0.1, 30);
            g1.extend_from_slice(&g2);
            g1.sort_by(f64::total_cmp);
            g1.dedup();
            let mut curves = vec![
                trace(&r, &inv, CurveKind::Hopf, &g1, &opts)?,
                trace(&r, &inv, CurveKind::Grazing, &g2, &opts)?,
            ];
            let mut ro = ReportOptions::default();
            if inv.a0 * inv.tau_r < 0.0 {
                let w = (a.sn_mu_min, a.sn_mu_max);
                curves.push(trace(&r, &inv, CurveKind::SaddleNode, &scaling::log_space(w.0, w.1, 8), &opts)?);
                ro.saddle_node.window = Some(w);
            }
            let report = scaling::theorem_report(&inv, &curves, &ro).map_err(module)?;
            emit(&cfg, a.out.as_deref(), &report.render(), out)?;
            if let Some(p) = &a.csv {
                emit(&cfg, Some(p), &report_csv(&report), out)?;
            }
            if !report.all_pass() {
                return Err(CliError::ChecksFailed("scaling law outside tolerance".into()));
            }
        }
        Command::Bifset(a) => {
            apply_system(&mut cfg, &a.system);
            if a.points < 2 {
                return Err(CliError::Usage("--points must be at least 2".into()));
            }
            let r = resolve(&cfg.system)?;
            let inv = compute_invariants(&r.nf).map_err(module)?;
            let opts = OrbitOptions::precise();
            let h1 = equilibria::trace_h1(&r.nf, &scaling::log_space(1e-3, a.mu_max, a.points)).map_err(module)?;
            let h2 = orbits::trace_h2(&r.nf, &inv, &scaling::log_space(3e-3, a.mu_max, a.points), &opts).map_err(module)?;
            let (lower, upper, cusp) = fold_branches(&r, &inv, a.mu_max, a.points, &opts);
            let eta_span = h1.samples.iter().chain(&h2.samples).map(|s| s.eta.abs()).fold(0.0, f64::max).max(1e-3);
            let boundary = BifurcationCurve {
                kind: CurveKind::Hopf,
                frame: Frame::NormalForm,
                samples: (0..=20)
                    .map(|i| {
                        let eta = -eta_span + 2.0 * eta_span * i as f64 / 20.0;
                        CurveSample { mu: 0.0, eta, eta2: f64::NAN, residual: 0.0, multiplier: f64::NAN }
                    })
                    .collect(),
            };
            let mut curves = vec![h1, h2, lower, upper, boundary];
            let mut cusp_pt = cusp.map(|c| (c.mu, c.eta));
            let raw = r.transform.is_some();
            if let Some(t) = &r.transform {
                curves = orbits::bifurcation_set_raw(t, &curves).map_err(module)?;
                cusp_pt = match cusp_pt {
                    Some((m, e)) => Some(t.params_from_nf(m, e).map_err(module)?),
                    None => None,
                };
            }
            let pts = |c: &BifurcationCurve| c.samples.iter().map(|s| (s.mu, s.eta)).collect::<Vec<_>>();
            let names = r.raw.param_names();
            let (xl, yl) = if raw { (names[0].clone(), names[1].clone()) } else { ("mu".into(), "eta".into()) };
            let spec = PlotSpec {
                title: format!("Bifurcation set of {}", r.name),
                x_label: xl,
                y_label: yl,
                series: vec![
                    PlotSeries { label: "Hopf (h1)".into(), style: LineStyle::Double, color: "#1f4e9c", points: pts(&curves[0]) },
                    PlotSeries { label: "grazing (h2)".into(), style: LineStyle::Double, color: "#b03a2e", points: pts(&curves[1]) },
                    PlotSeries { label: "saddle-node (h3)".into(), style: LineStyle::Solid, color: "#1e8449", points: pts(&curves[2]) },
                    PlotSeries { label: "saddle-node, upper branch".into(), style: LineStyle::Solid, color: "#7d3c98", points: pts(&curves[3]) },
                    PlotSeries { label: "boundary equilibrium".into(), style: LineStyle::Dashed, color: "#555555", points: pts(&curves[4]) },
                ],
                markers: cusp_pt.map(|p| vec![("cusp".to_string(), p)]).unwrap_or_default(),
            };
            let svg_text = spec.render().map_err(module)?;
            emit(&cfg, Some(&a.out), &svg_text, out)?;
            if let Some(p) = &a.csv {
                emit(&cfg, Some(p), &table::curves_to_string(&curves[..4]), out)?;
            }
            match cusp_pt {
                Some((x, y)) => writeln!(out, "cusp = {x}, {y}")?,
                None => writeln!(out, "cusp = none in range")?,
            }
        }
        Command::Integrate(a) => {
            apply_system(&mut cfg, &a.system);
            let r = resolve(&cfg.system)?;
            let s = collect_trajectory(&r, &a, &cfg)?;
            emit(&cfg, a.csv.as_deref(), &s, out)?;
        }
    }
    Ok(())
}

/// Caps the global thread pool at `PWSBIF_THREADS` if set.
pub fn configure_threads() -> Result<(), CliError> {
    match std::env::var("PWSBIF_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("PWSBIF_THREADS={v}: expected a positive integer")))?;
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(module)
        }
        Err(_) => Ok(()),
    }
}

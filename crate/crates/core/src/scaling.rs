//! Log-log regression of traced loci against the leading-order laws
//! `h₁ ~ μ`, `h₂ − h₁ ~ μ²`, `h₃ − h₂ ~ μ⁶`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::curve::{BifurcationCurve, CurveKind};
use crate::normalform::InvariantSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("ordinate {index} does not have the expected sign")]
    SignMixture { index: usize },
    #[error("abscissas span {decades:.3} decades, need {required}")]
    InsufficientSpan { decades: f64, required: f64 },
    #[error("{n} usable points, need {min}")]
    TooFewPoints { n: usize, min: usize },
    #[error("abscissa {value} is not positive")]
    NonPositiveAbscissa { value: f64 },
    #[error("missing {0} curve")]
    MissingCurve(CurveKind),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub min_decades: f64,
    pub min_points: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { min_decades: 1.0, min_points: 5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    /// Signed: `y ≈ coefficient · x^exponent`.
    pub coefficient: f64,
    /// OLS standard error of the exponent.
    pub exponent_se: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

pub fn fit_power_law(samples: &[(f64, f64)], expected_sign: f64) -> Result<ScalingFit, ScalingError> {
    fit_power_law_with(samples, expected_sign, &FitOptions::default())
}

/// OLS on `(ln x, ln |y|)`. Every ordinate must be nonzero with the sign of
/// `expected_sign`.
pub fn fit_power_law_with(samples: &[(f64, f64)], expected_sign: f64, opts: &FitOptions) -> Result<ScalingFit, ScalingError> {
    let sign = if expected_sign < 0.0 { -1.0 } else { 1.0 };
    for (i, &(x, y)) in samples.iter().enumerate() {
        if !(x > 0.0) {
            return Err(ScalingError::NonPositiveAbscissa { value: x });
        }
        if !(y * sign > 0.0) {
            return Err(ScalingError::SignMixture { index: i });
        }
    }
    let n = samples.len();
    if n < opts.min_points.max(3) {
        return Err(ScalingError::TooFewPoints { n, min: opts.min_points.max(3) });
    }
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let decades = (hi / lo).log10();
    if decades < opts.min_decades - 1e-9 {
        return Err(ScalingError::InsufficientSpan { decades, required: opts.min_decades });
    }
    let u: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let v: Vec<f64> = samples.iter().map(|s| (s.1 * sign).ln()).collect();
    let nf = n as f64;
    let mu = u.iter().sum::<f64>() / nf;
    let mv = v.iter().sum::<f64>() / nf;
    let sxx: f64 = u.iter().map(|a| (a - mu).powi(2)).sum();
    let sxy: f64 = u.iter().zip(&v).map(|(a, b)| (a - mu) * (b - mv)).sum();
    let syy: f64 = v.iter().map(|b| (b - mv).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mv - slope * mu;
    let sse: f64 = u.iter().zip(&v).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let exponent_se = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(ScalingFit {
        exponent: slope,
        coefficient: sign * intercept.exp(),
        exponent_se,
        r_squared,
        window: (lo, hi),
        n_points: n,
    })
}

/// Least-squares fit of `y = Σ_{k=1..degree} c_k x^k` (no constant term);
/// returns `(c₁, standard error of c₁)`, the slope at the origin.
pub fn slope_at_origin(samples: &[(f64, f64)], degree: usize) -> Result<(f64, f64), ScalingError> {
    let n = samples.len();
    if degree == 0 || n < degree + 2 {
        return Err(ScalingError::TooFewPoints { n, min: degree + 2 });
    }
    let scale = samples.iter().map(|s| s.0.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(ScalingError::NonPositiveAbscissa { value: scale });
    }
    let a = DMatrix::from_fn(n, degree, |i, j| (samples[i].0 / scale).powi(j as i32 + 1));
    let b = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&b, 1e-14).expect("SVD computed with U and V");
    let resid = &b - &a * &c;
    let dof = (n - degree) as f64;
    let s2 = resid.norm_squared() / dof;
    let cov = (a.transpose() * &a).try_inverse().map(|m| m * s2);
    let se = cov.map_or(f64::NAN, |m| m[(0, 0)].max(0.0).sqrt());
    Ok((c[0] / scale, se / scale))
}

/// Drops samples whose ordinate is below `factor` times their residual.
pub fn above_noise(samples: &[(f64, f64, f64)], factor: f64) -> Vec<(f64, f64)> {
    samples.iter().filter(|s| s.1.abs() > factor * s.2.abs()).map(|s| (s.0, s.1)).collect()
}

/// Window and tolerances for one law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LawSpec {
    /// μ window; `None` uses all samples.
    pub window: Option<(f64, f64)>,
    pub exponent_tol: f64,
    pub coefficient_rel_tol: f64,
    pub fit: FitOptions,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportOptions {
    pub hopf: LawSpec,
    pub grazing: LawSpec,
    pub saddle_node: LawSpec,
    /// Degree of the polynomial giving `dh₁/dμ` at zero.
    pub hopf_degree: usize,
    /// Samples with `|ordinate| < noise_factor · residual` are not fitted.
    pub noise_factor: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self {
            hopf: LawSpec { window: Some((1e-3, 2e-2)), exponent_tol: 0.05, coefficient_rel_tol: 0.02, fit },
            grazing: LawSpec { window: Some((3e-3, 3e-2)), exponent_tol: 0.05, coefficient_rel_tol: 0.05, fit },
            saddle_node: LawSpec {
                window: Some((0.05, 0.2)),
                exponent_tol: 0.3,
                coefficient_rel_tol: 0.25,
                fit: FitOptions { min_decades: 0.5, ..fit },
            },
            hopf_degree: 3,
            noise_factor: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LawRow {
    pub kind: CurveKind,
    /// What is fitted against μ.
    pub quantity: &'static str,
    pub predicted_exponent: f64,
    pub predicted_coefficient: f64,
    pub fit: Result<ScalingFit, ScalingError>,
    /// Coefficient compared with the prediction (for h₁ the polynomial slope
    /// at zero, otherwise the power-law coefficient).
    pub compared_coefficient: Option<f64>,
    pub spec: LawSpec,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremReport {
    pub rows: Vec<LawRow>,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, kind: CurveKind) -> Option<&LawRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    /// Plain-text table.
    pub fn render(&self) -> String {
        let mut s = String::from("law          quantity    exp(pred)  exp(fit)   ±se        coef(pred)       coef(fit)        n   result\n");
        for r in &self.rows {
            let (e, se, n) = match &r.fit {
                Ok(f) => (format!("{:.4}", f.exponent), format!("{:.2e}", f.exponent_se), f.n_points.to_string()),
                Err(err) => (format!("error: {err}"), String::new(), String::new()),
            };
            let c = r.compared_coefficient.map_or("-".to_string(), |c| format!("{c:.6e}"));
            s.push_str(&format!(
                "{:<12} {:<11} {:<10} {:<10} {:<10} {:<16.6e} {:<16} {:<3} {}\n",
                r.kind.as_str(),
                r.quantity,
                r.predicted_exponent,
                e,
                se,
                r.predicted_coefficient,
                c,
                n,
                if r.pass { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

fn in_window(mu: f64, w: Option<(f64, f64)>) -> bool {
    w.map_or(true, |(lo, hi)| mu >= lo * (1.0 - 1e-12) && mu <= hi * (1.0 + 1e-12))
}

/// η along a curve sorted by μ: exact at sample points, otherwise the
/// quadratic through the three nearest samples.
fn interpolate(curve: &BifurcationCurve, mu: f64) -> Option<f64> {
    let s = &curve.samples;
    let i = s.partition_point(|p| p.mu < mu);
    if i < s.len() && s[i].mu == mu {
        return Some(s[i].eta);
    }
    if i == 0 || i == s.len() {
        return None;
    }
    if s.len() < 3 {
        let (a, b) = (&s[i - 1], &s[i]);
        return Some(a.eta + (b.eta - a.eta) * (mu - a.mu) / (b.mu - a.mu));
    }
    let j = if i + 1 < s.len() && (i < 2 || s[i + 1].mu - mu < mu - s[i - 2].mu) { i - 1 } else { i - 2 };
    let p = &s[j..j + 3];
    let mut v = 0.0;
    for a in 0..3 {
        let mut l = 1.0;
        for b in 0..3 {
            if a != b {
                l *= (mu - p[b].mu) / (p[a].mu - p[b].mu);
            }
        }
        v += l * p[a].eta;
    }
    Some(v)
}

fn judge(fit: &Result<ScalingFit, ScalingError>, coef: Option<f64>, pe: f64, pc: f64, spec: &LawSpec) -> bool {
    match (fit, coef) {
        (Ok(f), Some(c)) => (f.exponent - pe).abs() <= spec.exponent_tol && ((c - pc) / pc).abs() <= spec.coefficient_rel_tol,
        _ => false,
    }
}

/// Compares traced loci with the leading-order laws. The saddle-node row is
/// required only when the invariants predict a fold (`a₀τ_R < 0`).
pub fn theorem_report(inv: &InvariantSet, curves: &[BifurcationCurve], opts: &ReportOptions) -> Result<TheoremReport, ScalingError> {
    let find = |k: CurveKind| curves.iter().find(|c| c.kind == k);
    let h1 = find(CurveKind::Hopf).ok_or(ScalingError::MissingCurve(CurveKind::Hopf))?;
    let h2 = find(CurveKind::Grazing).ok_or(ScalingError::MissingCurve(CurveKind::Grazing))?;
    let h3 = find(CurveKind::SaddleNode);
    if h3.is_none() && inv.a0 * inv.tau_r < 0.0 {
        return Err(ScalingError::MissingCurve(CurveKind::SaddleNode));
    }
    let mut rows = Vec::new();

    let pts: Vec<(f64, f64, f64)> = h1
        .samples
        .iter()
        .filter(|s| s.mu > 0.0 && in_window(s.mu, opts.hopf.window))
        .map(|s| (s.mu, s.eta, s.residual))
        .collect();
    let pts = above_noise(&pts, opts.noise_factor);
    let slope = inv.hopf_slope();
    let fit = fit_power_law_with(&pts, slope, &opts.hopf.fit);
    let compared = slope_at_origin(&pts, opts.hopf_degree).ok().map(|(c, _)| c);
    // The exponent of h₁ is exactly one; its check is the slope at zero.
    let pass = compared.is_some_and(|c| ((c - slope) / slope).abs() <= opts.hopf.coefficient_rel_tol);
    rows.push(LawRow {
        kind: CurveKind::Hopf,
        quantity: "h1",
        predicted_exponent: 1.0,
        predicted_coefficient: slope,
        fit,
        compared_coefficient: compared,
        spec: opts.hopf,
        pass,
    });

    let pts: Vec<(f64, f64, f64)> = h2
        .samples
        .iter()
        .filter(|s| s.mu > 0.0 && in_window(s.mu, opts.grazing.window))
        .filter_map(|s| interpolate(h1, s.mu).map(|e1| (s.mu, s.eta - e1, s.residual)))
        .collect();
    let pts = above_noise(&pts, opts.noise_factor);
    let pc = inv.grazing_coefficient();
    let fit = fit_power_law_with(&pts, pc, &opts.grazing.fit);
    let compared = fit.as_ref().ok().map(|f| f.coefficient);
    rows.push(LawRow {
        kind: CurveKind::Grazing,
        quantity: "h2-h1",
        predicted_exponent: 2.0,
        predicted_coefficient: pc,
        pass: judge(&fit, compared, 2.0, pc, &opts.grazing),
        fit,
        compared_coefficient: compared,
        spec: opts.grazing,
    });

    if let Some(h3) = h3 {
        let pts: Vec<(f64, f64, f64)> = h3
            .samples
            .iter()
            .filter(|s| s.mu > 0.0 && in_window(s.mu, opts.saddle_node.window))
            .map(|s| (s.mu, s.eta2, s.residual))
            .collect();
        let pts = above_noise(&pts, opts.noise_factor);
        let pc = inv.saddle_node_coefficient();
        let fit = fit_power_law_with(&pts, pc, &opts.saddle_node.fit);
        let compared = fit.as_ref().ok().map(|f| f.coefficient);
        rows.push(LawRow {
            kind: CurveKind::SaddleNode,
            quantity: "h3-h2",
            predicted_exponent: 6.0,
            predicted_coefficient: pc,
            pass: judge(&fit, compared, 6.0, pc, &opts.saddle_node),
            fit,
            compared_coefficient: compared,
            spec: opts.saddle_node,
        });
    }
    Ok(TheoremReport { rows })
}

/// Logarithmically spaced points on `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    v[0] = lo;
    v[n - 1] = hi;
    v
}

//! CSV output for traced curves.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use pwsbif_core::curve::{BifurcationCurve, CurveKind, CurveSample};
use thiserror::Error;

pub const CURVE_HEADER: &str = "kind,mu,eta,eta2,residual,multiplier";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("curve has no samples")]
    EmptyCurve,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_curves<W: Write>(w: &mut W, curves: &[BifurcationCurve]) -> io::Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for c in curves {
        for s in &c.samples {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.kind.as_str(),
                num(s.mu),
                num(s.eta),
                num(s.eta2),
                num(s.residual),
                num(s.multiplier)
            )?;
        }
    }
    Ok(())
}

pub fn curves_to_string(curves: &[BifurcationCurve]) -> String {
    let mut buf = Vec::new();
    write_curves(&mut buf, curves).expect("writing to memory");
    String::from_utf8(buf).expect("ASCII output")
}

pub fn emit_csv(curve: &BifurcationCurve, path: &Path) -> Result<(), CsvError> {
    if curve.is_empty() {
        return Err(CsvError::EmptyCurve);
    }
    fs::write(path, curves_to_string(std::slice::from_ref(curve)))?;
    Ok(())
}

/// Inverse of [`write_curves`]; samples are grouped by kind in order of appearance.
pub fn parse_curves(text: &str) -> Result<Vec<BifurcationCurve>, CsvError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CURVE_HEADER => {}
        _ => return Err(CsvError::Parse { line: 1, msg: "missing header".into() }),
    }
    let mut out: Vec<BifurcationCurve> = Vec::new();
    for (i, line) in lines.enumerate() {
        let err = |msg: String| CsvError::Parse { line: i + 2, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let kind = CurveKind::parse(f[0]).ok_or_else(|| err(format!("unknown kind {}", f[0])))?;
        let v = f[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| err(format!("{s}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let sample = CurveSample { mu: v[0], eta: v[1], eta2: v[2], residual: v[3], multiplier: v[4] };
        match out.iter_mut().find(|c| c.kind == kind) {
            Some(c) => c.samples.push(sample),
            None => out.push(BifurcationCurve { kind, frame: pwsbif_core::curve::Frame::NormalForm, samples: vec![sample] }),
        }
    }
    Ok(out)
}

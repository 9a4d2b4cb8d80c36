//! Sampled bifurcation loci.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Hopf,
    Grazing,
    SaddleNode,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Hopf => "hopf",
            CurveKind::Grazing => "grazing",
            CurveKind::SaddleNode => "saddle-node",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hopf" | "h1" => Some(CurveKind::Hopf),
            "grazing" | "h2" => Some(CurveKind::Grazing),
            "saddle-node" | "h3" => Some(CurveKind::SaddleNode),
            _ => None,
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameter frame of the samples: normal-form `(μ, η)` or raw `(α, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    NormalForm,
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveSample {
    /// First parameter (μ, or α in the raw frame).
    pub mu: f64,
    /// Second parameter (η, or β in the raw frame).
    pub eta: f64,
    /// Offset from the grazing locus, `η − h₂(μ)`, where known.
    pub eta2: f64,
    /// Defining residual of the locus at this sample.
    pub residual: f64,
    /// Floquet multiplier of the associated orbit, where meaningful.
    pub multiplier: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BifurcationCurve {
    pub kind: CurveKind,
    pub frame: Frame,
    pub samples: Vec<CurveSample>,
}

impl BifurcationCurve {
    pub fn new(kind: CurveKind, mut samples: Vec<CurveSample>) -> Self {
        samples.sort_by(|a, b| a.mu.total_cmp(&b.mu));
        Self { kind, frame: Frame::NormalForm, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.residual.abs()).fold(0.0, f64::max)
    }

    /// η at the sample with the given μ, if present.
    pub fn eta_at(&self, mu: f64) -> Option<f64> {
        self.samples.iter().find(|s| s.mu == mu).map(|s| s.eta)
    }
}

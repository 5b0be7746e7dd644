//! Pairwise penalty family `p(z, gamma)` and its group proximal map.
//!
//! Every kind satisfies: `p >= 0` on `z, gamma >= 0`, and for any
//! `s > strong_convexity()` the map `u -> s ||u - v||^2 + p(||u||, gamma)` is
//! strongly convex. The latter is what makes the proximal map
//! `argmin_u 1/2 ||u - v||^2 + lambda p(||u||, gamma)` single-valued whenever
//! `2 lambda strong_convexity() < 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::norm;

/// Default SCAD shape parameter.
pub const SCAD_DEFAULT_A: f64 = 3.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PenaltyKind {
    /// Minimax concave penalty with concavity parameter `t`.
    Mcp,
    /// Smoothly clipped absolute deviation with knots `gamma` and `a gamma`.
    Scad,
    /// `-gamma (z^2 - 2 b z)` on `[0, 2b)`, zero beyond.
    #[cfg_attr(feature = "serde", serde(rename = "mtype"))]
    MType,
    L1,
    /// `gamma z^2`, i.e. Laplacian smoothing.
    #[cfg_attr(feature = "serde", serde(rename = "sql2"))]
    SquaredL2,
    None,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 6] = [
        PenaltyKind::Mcp,
        PenaltyKind::Scad,
        PenaltyKind::MType,
        PenaltyKind::L1,
        PenaltyKind::SquaredL2,
        PenaltyKind::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyKind::Mcp => "mcp",
            PenaltyKind::Scad => "scad",
            PenaltyKind::MType => "mtype",
            PenaltyKind::L1 => "l1",
            PenaltyKind::SquaredL2 => "sql2",
            PenaltyKind::None => "none",
        }
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mcp" => Ok(PenaltyKind::Mcp),
            "scad" => Ok(PenaltyKind::Scad),
            "mtype" | "m-type" | "m" => Ok(PenaltyKind::MType),
            "l1" => Ok(PenaltyKind::L1),
            "sql2" | "l2sq" | "squared_l2" => Ok(PenaltyKind::SquaredL2),
            "none" => Ok(PenaltyKind::None),
            other => Err(Error::Argument(format!("unknown penalty kind '{other}'"))),
        }
    }
}

/// Penalty kind with its parameters. Fields not used by `kind` are ignored.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub gamma: f64,
    /// MCP concavity.
    pub t: f64,
    /// M-type support half-width.
    pub b: f64,
    /// SCAD shape, must exceed 2.
    pub a: f64,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self::mcp(1.0, 2.0)
    }
}

impl PenaltySpec {
    fn with(kind: PenaltyKind, gamma: f64) -> Self {
        Self {
            kind,
            gamma,
            t: 2.0,
            b: 3.0,
            a: SCAD_DEFAULT_A,
        }
    }

    pub fn mcp(gamma: f64, t: f64) -> Self {
        Self {
            t,
            ..Self::with(PenaltyKind::Mcp, gamma)
        }
    }

    pub fn scad(gamma: f64, a: f64) -> Self {
        Self {
            a,
            ..Self::with(PenaltyKind::Scad, gamma)
        }
    }

    pub fn mtype(gamma: f64, b: f64) -> Self {
        Self {
            b,
            ..Self::with(PenaltyKind::MType, gamma)
        }
    }

    pub fn l1(gamma: f64) -> Self {
        Self::with(PenaltyKind::L1, gamma)
    }

    pub fn squared_l2(gamma: f64) -> Self {
        Self::with(PenaltyKind::SquaredL2, gamma)
    }

    pub fn none() -> Self {
        Self::with(PenaltyKind::None, 0.0)
    }

    /// Same kind and shape parameters with a different strength.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Config(what));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("penalty gamma must be finite and >= 0, got {}", self.gamma));
        }
        match self.kind {
            PenaltyKind::Mcp if !(self.t > 0.0 && self.t.is_finite()) => {
                bad(format!("mcp requires t > 0, got {}", self.t))
            }
            PenaltyKind::MType if !(self.b > 0.0 && self.b.is_finite()) => {
                bad(format!("mtype requires b > 0, got {}", self.b))
            }
            PenaltyKind::Scad if !(self.a > 2.0 && self.a.is_finite()) => {
                bad(format!("scad requires a > 2, got {}", self.a))
            }
            _ => Ok(()),
        }
    }

    /// The constant `varsigma_0`: the curvature deficit that a quadratic must
    /// overcome for `varsigma ||u - v||^2 + p(||u||)` to be strongly convex.
    pub fn strong_convexity(&self) -> f64 {
        match self.kind {
            PenaltyKind::Mcp => 1.0 / (2.0 * self.t),
            PenaltyKind::MType => self.gamma,
            PenaltyKind::Scad => 1.0 / (2.0 * (self.a - 1.0)),
            PenaltyKind::L1 | PenaltyKind::SquaredL2 | PenaltyKind::None => 0.0,
        }
    }

    /// `p(z, gamma)` for `z >= 0`.
    pub fn eval(&self, z: f64) -> Result<f64> {
        if z.is_nan() || z < 0.0 {
            return Err(Error::Argument(format!(
                "penalty argument must be nonnegative, got {z}"
            )));
        }
        Ok(self.value(z))
    }

    /// Unchecked evaluation; `z` is a norm and therefore nonnegative.
    pub fn value(&self, z: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::L1 => g * z,
            PenaltyKind::SquaredL2 => g * z * z,
            PenaltyKind::Mcp => {
                let t = self.t;
                if z <= g * t {
                    g * z - z * z / (2.0 * t)
                } else {
                    t * g * g / 2.0
                }
            }
            PenaltyKind::MType => {
                if z < 2.0 * self.b {
                    -g * (z * z - 2.0 * self.b * z)
                } else {
                    0.0
                }
            }
            PenaltyKind::Scad => {
                let a = self.a;
                if z <= g {
                    g * z
                } else if z <= a * g {
                    (2.0 * a * g * z - z * z - g * g) / (2.0 * (a - 1.0))
                } else {
                    g * g * (a + 1.0) / 2.0
                }
            }
        }
    }

    /// Whether `lambda` keeps the proximal objective strongly convex.
    pub fn prox_admissible(&self, lambda: f64) -> bool {
        lambda >= 0.0 && lambda * 2.0 * self.strong_convexity() < 1.0
    }

    /// Minimizer over `s >= 0` of `1/2 (s - r)^2 + lambda p(s, gamma)`.
    ///
    /// Callers guarantee `r >= 0` and [`prox_admissible`](Self::prox_admissible).
    pub fn prox_norm(&self, r: f64, lambda: f64) -> f64 {
        if lambda == 0.0 || r == 0.0 {
            return r;
        }
        let g = self.gamma;
        match self.kind {
            PenaltyKind::None => r,
            PenaltyKind::SquaredL2 => r / (1.0 + 2.0 * lambda * g),
            PenaltyKind::L1 => (r - lambda * g).max(0.0),
            PenaltyKind::Mcp => {
                // Firm threshold: zero, inflated soft threshold, identity.
                let t = self.t;
                if r <= lambda * g {
                    0.0
                } else if r <= g * t {
                    (r - lambda * g) / (1.0 - lambda / t)
                } else {
                    r
                }
            }
            PenaltyKind::Scad | PenaltyKind::MType => self.prox_by_candidates(r, lambda),
        }
    }

    /// Piecewise-quadratic description `p(s) = c2 s^2 + c1 s + const` on
    /// `[lo, hi]`, used by the candidate search.
    fn pieces(&self) -> Vec<Piece> {
        let g = self.gamma;
        match self.kind {
            PenaltyKind::Scad => {
                let a = self.a;
                let denom = 2.0 * (a - 1.0);
                alloc::vec![
                    Piece::new(0.0, g, 0.0, g),
                    Piece::new(g, a * g, -1.0 / denom, 2.0 * a * g / denom),
                    Piece::new(a * g, f64::INFINITY, 0.0, 0.0),
                ]
            }
            PenaltyKind::MType => {
                let b = self.b;
                alloc::vec![
                    Piece::new(0.0, 2.0 * b, -g, 2.0 * b * g),
                    Piece::new(2.0 * b, f64::INFINITY, 0.0, 0.0),
                ]
            }
            _ => alloc::vec![Piece::new(0.0, f64::INFINITY, 0.0, 0.0)],
        }
    }

    fn prox_by_candidates(&self, r: f64, lambda: f64) -> f64 {
        let objective = |s: f64| 0.5 * (s - r) * (s - r) + lambda * self.value(s);
        let mut candidates: Vec<f64> = alloc::vec![0.0, r];
        for piece in self.pieces() {
            candidates.push(piece.lo);
            if piece.hi.is_finite() {
                candidates.push(piece.hi);
            }
            let curvature = 1.0 + 2.0 * lambda * piece.c2;
            if curvature > 0.0 {
                let s = (r - lambda * piece.c1) / curvature;
                candidates.push(s.clamp(piece.lo, piece.hi));
            }
        }
        // M-type decreases on (b, 2b), so the minimizer may lie beyond r.
        let mut best = (f64::INFINITY, f64::INFINITY);
        for s in candidates.into_iter().filter(|s| *s >= 0.0) {
            let f = objective(s);
            if f < best.0 || (f == best.0 && s < best.1) {
                best = (f, s);
            }
        }
        best.1
    }

    /// Group proximal map `argmin_u 1/2 ||u - v||^2 + lambda p(||u||, gamma)`.
    pub fn group_prox(&self, v: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; v.len()];
        self.group_prox_into(v, lambda, &mut out)?;
        Ok(out)
    }

    /// In-place variant of [`group_prox`](Self::group_prox).
    pub fn group_prox_into(&self, v: &[f64], lambda: f64, out: &mut [f64]) -> Result<()> {
        if !self.prox_admissible(lambda) {
            return Err(Error::Config(format!(
                "proximal weight {lambda} violates 2 * lambda * varsigma0 < 1 for {} (varsigma0 = {})",
                self.kind,
                self.strong_convexity()
            )));
        }
        self.group_prox_unchecked(v, lambda, out);
        Ok(())
    }

    pub(crate) fn group_prox_unchecked(&self, v: &[f64], lambda: f64, out: &mut [f64]) {
        if self.kind == PenaltyKind::SquaredL2 {
            // linear map, applied directly so it is exact per coordinate
            let denom = 1.0 + 2.0 * lambda * self.gamma;
            for (o, vi) in out.iter_mut().zip(v) {
                *o = vi / denom;
            }
            return;
        }
        let r = norm(v);
        if r == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let s = self.prox_norm(r, lambda);
        if s == r {
            out.copy_from_slice(v);
        } else {
            let scale = s / r;
            for (o, vi) in out.iter_mut().zip(v) {
                *o = vi * scale;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    lo: f64,
    hi: f64,
    c2: f64,
    c1: f64,
}

impl Piece {
    fn new(lo: f64, hi: f64, c2: f64, c1: f64) -> Self {
        Self { lo, hi, c2, c1 }
    }
}

//! Perturbing-potential kernels.
//!
//! The canonical scalar is the positive kernel `K = 1/Δ`, with `Δ` the
//! asteroid–planet separation. Truncated expansions approximate `K`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::elements::{planet_position, InertialPosition, PlanetPosition};
use crate::error::{Error, Result};

/// Which form of `K` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `1/Δ`.
    Exact,
    /// `(1/r_J)(1 − M/2 + (3/8)(M₁M₂ + M₂²) − (5/16)M₂³)`, the historical `3/8·M₁M₂` variant.
    PaperTruncated,
    /// Binomial expansion of `(1 + M)^(−1/2)` keeping terms through `ρ³`:
    /// `(1/r_J)(1 − M/2 + (3/8)(M₂² + 2M₁M₂) − (5/16)M₂³)`.
    LegendreTruncated,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::Exact, KernelKind::PaperTruncated, KernelKind::LegendreTruncated];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Exact => "exact",
            KernelKind::PaperTruncated => "paper",
            KernelKind::LegendreTruncated => "legendre",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(KernelKind::Exact),
            "paper" | "paper-truncated" => Ok(KernelKind::PaperTruncated),
            "legendre" | "legendre-truncated" => Ok(KernelKind::LegendreTruncated),
            other => Err(Error::InvalidParameter(format!("unknown kernel '{other}'"))),
        }
    }
}

/// The `M`-terms of the inner expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerms {
    pub m1: f64,
    pub m2: f64,
    pub m: f64,
    pub r_j: f64,
}

/// A truncated kernel value; `divergent` is set when `|M| ≥ 1`, outside the
/// radius of convergence of the expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedValue {
    pub value: f64,
    pub divergent: bool,
}

#[inline]
fn separation_sq(ast: &InertialPosition, planet: &PlanetPosition) -> f64 {
    let dx = ast.x - planet.x;
    let dy = ast.y - planet.y;
    dx * dx + dy * dy + ast.z * ast.z
}

/// `1/Δ`.
pub fn exact_kernel(ast: &InertialPosition, planet: &PlanetPosition) -> Result<f64> {
    let d2 = separation_sq(ast, planet);
    if d2 > 0.0 {
        Ok(1.0 / d2.sqrt())
    } else {
        Err(Error::Singular(d2.sqrt()))
    }
}

/// `x ẍ_J + y ÿ_J` with the two-body acceleration `r̈_J = −r_J/|r_J|³`.
pub fn indirect_term(ast: &InertialPosition, ecc_anomaly_j: f64, e_j: f64) -> f64 {
    let planet = planet_position(ecc_anomaly_j, e_j);
    let r2 = planet.radius_sq();
    let inv_r3 = 1.0 / (r2 * r2.sqrt());
    -(ast.x * planet.x + ast.y * planet.y) * inv_r3
}

pub fn m_terms(ast: &InertialPosition, planet: &PlanetPosition) -> Result<InteractionTerms> {
    let r2 = planet.radius_sq();
    if !(r2 > 0.0) {
        return Err(Error::Singular(0.0));
    }
    let m1 = ast.norm_sq() / r2;
    let m2 = -2.0 * (ast.x * planet.x + ast.y * planet.y) / r2;
    Ok(InteractionTerms { m1, m2, m: m1 + m2, r_j: r2.sqrt() })
}

/// Evaluates `K` from its `M`-terms.
pub fn truncated_kernel(t: &InteractionTerms, kind: KernelKind) -> TruncatedValue {
    let TruncatedValue { value, .. } = series_value(t, kind);
    TruncatedValue { value, divergent: kind != KernelKind::Exact && t.m.abs() >= 1.0 }
}

#[inline]
fn series_value(t: &InteractionTerms, kind: KernelKind) -> TruncatedValue {
    let (m1, m2, m) = (t.m1, t.m2, t.m);
    let bracket = match kind {
        KernelKind::Exact => (1.0 + m).sqrt().recip(),
        KernelKind::PaperTruncated => {
            1.0 - 0.5 * m + 0.375 * (m1 * m2 + m2 * m2) - 0.3125 * m2 * m2 * m2
        }
        KernelKind::LegendreTruncated => {
            1.0 - 0.5 * m + 0.375 * (m2 * m2 + 2.0 * m1 * m2) - 0.3125 * m2 * m2 * m2
        }
    };
    TruncatedValue { value: bracket / t.r_j, divergent: false }
}

/// Kernel value for the given geometry, without domain checks.
///
/// Coincident bodies give `+∞` for the exact kernel; the quadrature engine
/// reports such samples as non-finite.
#[inline]
pub fn kernel(kind: KernelKind, ast: &InertialPosition, planet: &PlanetPosition) -> f64 {
    match kind {
        KernelKind::Exact => 1.0 / separation_sq(ast, planet).sqrt(),
        _ => {
            let r2 = planet.radius_sq();
            let inv_r2 = 1.0 / r2;
            let m1 = ast.norm_sq() * inv_r2;
            let m2 = -2.0 * (ast.x * planet.x + ast.y * planet.y) * inv_r2;
            series_value(&InteractionTerms { m1, m2, m: m1 + m2, r_j: r2.sqrt() }, kind).value
        }
    }
}

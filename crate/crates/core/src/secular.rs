//! Truncated secular potential, the apsidal equilibrium and closed-form
//! quadratic forms for the normal `(p₃, q₃)` dynamics.
//!
//! Closed forms are transcribed term by term; they are audited against
//! quadrature in [`crate::oracle`], never corrected in place. The one
//! corrected variant, [`coeffs_small_inclination_amended`], is a separate
//! regime.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::averaging::{double_average, AveragedValue, QuadratureGrid};
use crate::elements::{perifocal_position, planet_position, Normalization};
use crate::error::{check_eccentricity, Error, Result};
use crate::par::{map_slice, Execution};

/// Parameters of one secular configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecularParams {
    pub a: f64,
    pub e: f64,
    pub e_j: f64,
    /// Apsidal angle `Θ = ω + Ω`.
    pub theta: f64,
    pub inc: f64,
    /// Angular momentum `√a √(1 − e²)`.
    pub big_g: f64,
}

impl SecularParams {
    pub fn new(a: f64, e: f64, e_j: f64, theta: f64, inc: f64) -> Result<Self> {
        check_semi_major_axis(a)?;
        check_eccentricity(e)?;
        check_eccentricity(e_j)?;
        if !theta.is_finite() || !inc.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite angle (theta {theta}, inc {inc})")));
        }
        Ok(Self { a, e, e_j, theta, inc, big_g: a.sqrt() * (1.0 - e * e).sqrt() })
    }

    pub fn with_theta(self, theta: f64) -> Self {
        Self { theta, ..self }
    }

    pub fn with_inc(self, inc: f64) -> Self {
        Self { inc, ..self }
    }
}

pub(crate) fn check_semi_major_axis(a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(Error::SemiMajorAxis(a))
    }
}

#[inline]
fn quad_scale(a: f64, e_j: f64) -> f64 {
    a * a / (8.0 * (1.0 - e_j * e_j).powf(1.5))
}

#[inline]
fn oct_scale(a: f64, e_j: f64) -> f64 {
    15.0 * a * a * a * e_j / (64.0 * (1.0 - e_j * e_j).powf(2.5))
}

/// Planar `K̄ = −R̄` truncated at `a³`:
/// `1 + a²(3e²+2)/(8(1−e_J²)^{3/2}) − 15a³ e e_J (3e²+4) cos Θ/(64(1−e_J²)^{5/2})`.
pub fn kbar_series(a: f64, e: f64, e_j: f64, theta: f64) -> f64 {
    let e2 = e * e;
    1.0 + quad_scale(a, e_j) * (3.0 * e2 + 2.0) - oct_scale(a, e_j) * e * (3.0 * e2 + 4.0) * theta.cos()
}

/// The truncated planar secular potential `R̄` (negative).
pub fn rbar_series(a: f64, e: f64, e_j: f64, theta: f64) -> f64 {
    -kbar_series(a, e, e_j, theta)
}

/// `∂R̄/∂e` of [`rbar_series`].
pub fn rbar_series_de(a: f64, e: f64, e_j: f64, theta: f64) -> f64 {
    -(6.0 * quad_scale(a, e_j) * e - oct_scale(a, e_j) * (9.0 * e * e + 4.0) * theta.cos())
}

/// Planar `R̄` from quadrature of `−1/Δ` with the asteroid's periapsis at `Θ`.
pub fn rbar_quadrature(a: f64, e: f64, e_j: f64, theta: f64, grid: QuadratureGrid) -> Result<AveragedValue> {
    check_semi_major_axis(a)?;
    let (st, ct) = theta.sin_cos();
    let ast: Vec<(f64, f64)> = grid
        .asteroid_nodes()
        .iter()
        .map(|n| {
            let p = perifocal_position(a, e, n.angle);
            (ct * p.xp - st * p.yp, st * p.xp + ct * p.yp)
        })
        .collect();
    let planet: Vec<(f64, f64)> = grid
        .planet_nodes()
        .iter()
        .map(|n| {
            let p = planet_position(n.angle, e_j);
            (p.x, p.y)
        })
        .collect();
    let avg = double_average(
        |an, pn| {
            let (x, y) = ast[an.index];
            let (xj, yj) = planet[pn.index];
            let (dx, dy) = (x - xj, y - yj);
            1.0 / (dx * dx + dy * dy).sqrt()
        },
        e,
        e_j,
        grid,
    )?;
    Ok(AveragedValue { value: -avg.value, est_error: avg.est_error })
}

/// Eccentricity of the apsidal-alignment (`Θ = 0`) equilibrium: the root of
/// `∂R̄/∂e` in `(0, 0.99)`, from a bracketed Newton iteration.
pub fn equilibrium_eccentricity(a: f64, e_j: f64) -> Result<f64> {
    check_semi_major_axis(a)?;
    check_eccentricity(e_j)?;
    if e_j == 0.0 {
        return Ok(0.0);
    }
    let g = |e: f64| rbar_series_de(a, e, e_j, 0.0);
    let dg = |e: f64| -(6.0 * quad_scale(a, e_j) - 18.0 * oct_scale(a, e_j) * e);

    // First sign change on a uniform scan; the derivative is quadratic in e,
    // so the scan cannot step over a root pair unnoticed except at a double
    // root, which is treated as no equilibrium.
    const SCAN: usize = 990;
    let mut lo = 0.0;
    let mut g_lo = g(lo);
    let mut bracket = None;
    for k in 1..=SCAN {
        let hi = 0.99 * k as f64 / SCAN as f64;
        let g_hi = g(hi);
        if g_lo.signum() != g_hi.signum() {
            bracket = Some((lo, hi));
            break;
        }
        lo = hi;
        g_lo = g_hi;
    }
    let (mut lo, mut hi) = bracket.ok_or(Error::NoEquilibrium { a, e_j })?;
    let sign_lo = g(lo).signum();
    let mut e = 0.5 * (lo + hi);
    for _ in 0..100 {
        let ge = g(e);
        if ge == 0.0 {
            break;
        }
        if ge.signum() == sign_lo {
            lo = e;
        } else {
            hi = e;
        }
        let newton = e - ge / dg(e);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - e).abs();
        e = next;
        if step < 1e-15 {
            break;
        }
    }
    Ok(e)
}

/// Which closed form (or recovery) produced a quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    ApsidalAligned,
    SmallInclination,
    /// Small-inclination form with the octupole terms scaled by
    /// `(1−e_J²)^{−5/2}`, consistent with the quadrature oracle.
    SmallInclinationAmended,
    General,
    /// Recovered from quadrature.
    Oracle,
}

impl Regime {
    pub const CLOSED_FORMS: [Regime; 4] =
        [Regime::ApsidalAligned, Regime::SmallInclination, Regime::SmallInclinationAmended, Regime::General];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::ApsidalAligned => "apsidal",
            Regime::SmallInclination => "small-i",
            Regime::SmallInclinationAmended => "small-i-amended",
            Regime::General => "general",
            Regime::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "apsidal" | "apsidal-aligned" => Ok(Regime::ApsidalAligned),
            "small-i" | "small-inclination" => Ok(Regime::SmallInclination),
            "small-i-amended" => Ok(Regime::SmallInclinationAmended),
            "general" => Ok(Regime::General),
            "oracle" => Ok(Regime::Oracle),
            other => Err(Error::InvalidParameter(format!("unknown regime '{other}'"))),
        }
    }
}

/// `W̄ = ½(Ā p₃² + 2B̄ p₃q₃ + C̄ q₃²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm2 {
    pub abar: f64,
    pub bbar: f64,
    pub cbar: f64,
    pub regime: Regime,
    pub normalization: Normalization,
}

impl QuadraticForm2 {
    pub fn new(abar: f64, bbar: f64, cbar: f64, regime: Regime, normalization: Normalization) -> Self {
        Self { abar, bbar, cbar, regime, normalization }
    }

    pub fn det(&self) -> f64 {
        self.abar * self.cbar - self.bbar * self.bbar
    }

    /// `W̄(p₃, q₃)`.
    pub fn value(&self, p3: f64, q3: f64) -> f64 {
        0.5 * (self.abar * p3 * p3 + 2.0 * self.bbar * p3 * q3 + self.cbar * q3 * q3)
    }

    /// The same quadratic form written for another shell normalization:
    /// coordinates scale by `√κ`, so coefficients pick up `κ_from/κ_to`.
    pub fn rescaled(&self, to: Normalization) -> Self {
        let k = self.normalization.kappa() / to.kappa();
        Self { abar: self.abar * k, bbar: self.bbar * k, cbar: self.cbar * k, normalization: to, ..*self }
    }

    pub fn coefficients(&self) -> [f64; 3] {
        [self.abar, self.bbar, self.cbar]
    }
}

/// Quadrupole (`a²`) and octupole (`a³`) contributions to `(Ā, B̄, C̄)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormParts {
    pub quadrupole: [f64; 3],
    pub octupole: [f64; 3],
    pub regime: Regime,
}

impl FormParts {
    pub fn combine(&self) -> QuadraticForm2 {
        let [qa, qb, qc] = self.quadrupole;
        let [oa, ob, oc] = self.octupole;
        QuadraticForm2::new(qa + oa, qb + ob, qc + oc, self.regime, Normalization::Paper)
    }

    /// `|quadrupole| + |octupole|` per coefficient.
    pub fn term_scale(&self) -> [f64; 3] {
        std::array::from_fn(|k| self.quadrupole[k].abs() + self.octupole[k].abs())
    }
}

fn require_prograde(inc: f64, regime: &'static str) -> Result<()> {
    if inc > 0.0 && inc < FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::DegenerateInclination { inc, regime })
    }
}

/// Apsidal alignment (`Θ = 0`); `p.theta` is ignored. `B̄ ≡ 0`.
pub fn parts_apsidal(p: &SecularParams) -> Result<FormParts> {
    require_prograde(p.inc, "apsidal")?;
    let (e, e_j, a, g) = (p.e, p.e_j, p.a, p.big_g);
    let e2 = e * e;
    let b = 1.0 - e_j * e_j;
    let (si, ci) = p.inc.sin_cos();
    let quad = si * si * a * a / (4.0 * g * (1.0 - ci) * b.powf(1.5));
    let oct = 15.0 * e_j * (4.0 + 3.0 * e2) * e * a * a * a / (16.0 * g * (1.0 - ci) * b.powf(2.5));
    Ok(FormParts {
        quadrupole: [(1.0 - e2) * quad, 0.0, (1.0 + 4.0 * e2) * quad],
        octupole: [-oct, 0.0, -ci * oct],
        regime: Regime::ApsidalAligned,
    })
}

pub fn coeffs_apsidal(p: &SecularParams) -> Result<QuadraticForm2> {
    parts_apsidal(p).map(|f| f.combine())
}

fn small_inclination_parts(p: &SecularParams, oct_exponent: f64, regime: Regime) -> FormParts {
    let (e, e_j, a, g) = (p.e, p.e_j, p.a, p.big_g);
    let e2 = e * e;
    let b = 1.0 - e_j * e_j;
    let (s, c) = p.theta.sin_cos();
    let c2 = c * c;
    let quad = a * a / (4.0 * g * b.powf(1.5));
    let oct = e * e_j * a * a * a / (g * b.powf(oct_exponent));
    FormParts {
        quadrupole: [
            3.0 * (1.0 + 4.0 * e2 - 5.0 * e2 * c2) * quad,
            15.0 * e2 * c * s * quad,
            3.0 * (1.0 - e2 + 5.0 * e2 * c2) * quad,
        ],
        octupole: [
            15.0 * c * (70.0 * c2 * e2 - 60.0 * e2 - 10.0) * oct / 64.0,
            -15.0 * s * (140.0 * c2 * e2 - 17.0 * e2 + 24.0) * oct / 128.0,
            -15.0 * c * (70.0 * c2 * e2 - 27.0 * e2 + 34.0) * oct / 64.0,
        ],
        regime,
    }
}

/// Small-inclination limit `i → 0⁺`, octupole terms over `(1−e_J²)^{3/2}`.
pub fn parts_small_inclination(p: &SecularParams) -> FormParts {
    small_inclination_parts(p, 1.5, Regime::SmallInclination)
}

pub fn coeffs_small_inclination(p: &SecularParams) -> QuadraticForm2 {
    parts_small_inclination(p).combine()
}

/// As [`parts_small_inclination`] with octupole terms over `(1−e_J²)^{5/2}`.
pub fn parts_small_inclination_amended(p: &SecularParams) -> FormParts {
    small_inclination_parts(p, 2.5, Regime::SmallInclinationAmended)
}

pub fn coeffs_small_inclination_amended(p: &SecularParams) -> QuadraticForm2 {
    parts_small_inclination_amended(p).combine()
}

/// General inclination `0 < i < π/2`.
pub fn parts_general(p: &SecularParams) -> Result<FormParts> {
    require_prograde(p.inc, "general")?;
    let (e, e_j, a, g) = (p.e, p.e_j, p.a, p.big_g);
    let e2 = e * e;
    let b = 1.0 - e_j * e_j;
    let (s, c) = p.theta.sin_cos();
    let c2 = c * c;
    let (si, ci) = p.inc.sin_cos();
    let quad = si * si * a * a / (4.0 * g * (1.0 - ci) * b.powf(1.5));
    let oct = e_j * e * (3.0 * e2 + 4.0) * a * a * a / (g * b.powf(2.5));
    Ok(FormParts {
        quadrupole: [
            (1.0 + 4.0 * e2 - 5.0 * c2 * e2) * quad,
            5.0 * c * s * e2 * quad,
            (5.0 * c2 * e2 - e2 + 1.0) * quad,
        ],
        octupole: [
            -15.0 * c * oct / (16.0 * (1.0 - ci)),
            15.0 * s * oct / 32.0,
            -15.0 * ci * c * oct / (16.0 * (1.0 - ci)),
        ],
        regime: Regime::General,
    })
}

pub fn coeffs_general(p: &SecularParams) -> Result<QuadraticForm2> {
    parts_general(p).map(|f| f.combine())
}

/// Closed form for `regime`; [`Regime::Oracle`] is not a closed form.
pub fn parts(regime: Regime, p: &SecularParams) -> Result<FormParts> {
    match regime {
        Regime::ApsidalAligned => parts_apsidal(p),
        Regime::SmallInclination => Ok(parts_small_inclination(p)),
        Regime::SmallInclinationAmended => Ok(parts_small_inclination_amended(p)),
        Regime::General => parts_general(p),
        Regime::Oracle => Err(Error::InvalidParameter("the oracle regime has no closed form".into())),
    }
}

pub fn coeffs(regime: Regime, p: &SecularParams) -> Result<QuadraticForm2> {
    parts(regime, p).map(|f| f.combine())
}

/// A determinant polynomial split by order in `a` (each term includes its
/// power of `a`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterminantSeries {
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
}

impl DeterminantSeries {
    pub fn total(&self) -> f64 {
        self.a4 + self.a5 + self.a6
    }
}

/// Determinant polynomial of the small-inclination form.
pub fn det_small_inclination(p: &SecularParams) -> DeterminantSeries {
    let (e, e_j, a, g) = (p.e, p.e_j, p.a, p.big_g);
    let e2 = e * e;
    let e4 = e2 * e2;
    let b = 1.0 - e_j * e_j;
    let c = p.theta.cos();
    let c2 = c * c;
    let g2 = g * g;
    let a2 = a * a;
    let a4 = a2 * a2;
    DeterminantSeries {
        a4: 9.0 * (1.0 + 3.0 * e2 - 4.0 * e4) * a4 / (16.0 * g2 * b.powi(3)),
        a5: 45.0 * e_j * (83.0 * e4 - 39.0 * e2 - 44.0) * e * c * a4 * a / (256.0 * g2 * b.powi(4)),
        a6: 225.0
            * (1431.0 * c2 * e4 + 456.0 * c2 * e2 + 289.0 * e4 - 1936.0 * c2 - 816.0 * e2 + 576.0)
            * e2
            * e_j
            * e_j
            * a4
            * a2
            / (16384.0 * g2 * b.powi(5)),
    }
}

/// Determinant polynomial of the general-inclination form.
pub fn det_general(p: &SecularParams) -> Result<DeterminantSeries> {
    require_prograde(p.inc, "general")?;
    let (e, e_j, a, g) = (p.e, p.e_j, p.a, p.big_g);
    let e2 = e * e;
    let e4 = e2 * e2;
    let b = 1.0 - e_j * e_j;
    let (s, c) = p.theta.sin_cos();
    let (si, ci) = p.inc.sin_cos();
    let g2 = g * g;
    let a2 = a * a;
    let a4 = a2 * a2;
    let omc2 = (1.0 - ci) * (1.0 - ci);
    let k = 3.0 * e2 + 4.0;
    Ok(DeterminantSeries {
        a4: (1.0 + 3.0 * e2 - 4.0 * e4) * (1.0 + ci) * (1.0 + ci) * a4 / (16.0 * b.powi(3) * g2),
        a5: 15.0 * si * si * c * (-4.0 * e2 - 1.0 + ci * e2 - ci) * e_j * k * e * a4 * a
            / (64.0 * g2 * omc2 * b.powi(4)),
        a6: -225.0 * (-ci * ci * s * s + 2.0 * ci * c * c - s * s + 2.0 * ci) * e_j * e_j * k * k * e2 * a4 * a2
            / (1024.0 * g2 * omc2 * b.powi(5)),
    })
}

/// Sequential-principal-minor test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub a_positive: bool,
    pub c_positive: bool,
    pub det_positive: bool,
    pub positive_definite: bool,
    pub det_value: f64,
}

pub fn stability_verdict(qf: &QuadraticForm2) -> StabilityVerdict {
    let det_value = qf.det();
    let a_positive = qf.abar > 0.0;
    let det_positive = det_value > 0.0;
    StabilityVerdict {
        a_positive,
        c_positive: qf.cbar > 0.0,
        det_positive,
        positive_definite: a_positive && det_positive,
        det_value,
    }
}

/// Verdicts of one closed-form regime over many points, in input order.
pub fn sweep_verdicts(exec: Execution, points: &[SecularParams], regime: Regime) -> Vec<Result<StabilityVerdict>> {
    map_slice(exec, points, |p| coeffs(regime, p).map(|qf| stability_verdict(&qf)))
}

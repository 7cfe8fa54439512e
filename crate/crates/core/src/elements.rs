//! Orbital-element kernels: Kepler's equation, perifocal and inertial
//! positions, the planet ephemeris, and Delaunay / Poincaré variables.
//!
//! Units: `a_J = 1`, `GM_total = 1`. The asteroid is a test particle, so its
//! Keplerian action is `L = √a`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{check_eccentricity, Error, Result};

/// Reduces an angle to `(−π, π]`.
pub fn reduce_angle(x: f64) -> f64 {
    let r = x - TAU * (x / TAU).round();
    if r <= -PI {
        r + TAU
    } else if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Shortest angular separation between two angles, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    reduce_angle(a - b).abs()
}

/// Osculating elements of the asteroid. Angles are stored in `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalElements {
    pub a: f64,
    pub e: f64,
    pub inc: f64,
    /// Argument of periapsis ω.
    pub omega: f64,
    /// Longitude of the ascending node Ω.
    pub node: f64,
    /// Mean anomaly l.
    pub mean_anomaly: f64,
}

impl OrbitalElements {
    pub fn new(a: f64, e: f64, inc: f64, omega: f64, node: f64, mean_anomaly: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::SemiMajorAxis(a));
        }
        check_eccentricity(e)?;
        if !(0.0..=PI).contains(&inc) {
            return Err(Error::InvalidParameter(format!("inclination {inc} outside [0, π]")));
        }
        Ok(Self {
            a,
            e,
            inc,
            omega: reduce_angle(omega),
            node: reduce_angle(node),
            mean_anomaly: reduce_angle(mean_anomaly),
        })
    }
}

/// The planet's prescribed orbit. `a_J` is identically 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturberConfig {
    pub e_j: f64,
    /// Planet mass ratio. Documentation only: in slow time `τ = μt` the
    /// averaged flow does not depend on it.
    pub mu: f64,
}

impl PerturberConfig {
    pub fn new(e_j: f64, mu: f64) -> Result<Self> {
        check_eccentricity(e_j)?;
        Ok(Self { e_j, mu })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerifocalPosition {
    pub xp: f64,
    pub yp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertialPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl InertialPosition {
    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }
}

/// Planet position in the `Oxy` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanetPosition {
    pub x: f64,
    pub y: f64,
}

impl PlanetPosition {
    pub fn radius_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }
}

/// Solves `E − e sin E = l` for the eccentric anomaly.
///
/// Newton iteration from `E₀ = l + 0.85 e sign(sin l)` with a bisection
/// fallback. The result is continuous in `l`: `E(l + 2πk) = E(l) + 2πk`.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64> {
    check_eccentricity(e)?;
    if !mean_anomaly.is_finite() {
        return Err(Error::InvalidParameter(format!("mean anomaly {mean_anomaly}")));
    }
    let m = reduce_angle(mean_anomaly);
    let offset = mean_anomaly - m;
    if e == 0.0 || m == 0.0 || m == PI {
        return Ok(m + offset);
    }
    let residual = |ea: f64| ea - e * ea.sin() - m;

    let mut ea = m + 0.85 * e * m.sin().signum();
    let mut converged = false;
    for _ in 0..50 {
        let f = residual(ea);
        let step = f / (1.0 - e * ea.cos());
        ea -= step;
        if step.abs() <= 4.0 * f64::EPSILON * ea.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    // E − m = e sin E, so the root is bracketed by [m − e, m + e].
    let (lo, hi) = (m - e, m + e);
    if !converged || !(lo..=hi).contains(&ea) {
        ea = bisect(residual, lo, hi);
    }
    Ok(ea + offset)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Position in the orbital plane, periapsis along `x′`.
pub fn perifocal_position(a: f64, e: f64, ecc_anomaly: f64) -> PerifocalPosition {
    let (s, c) = ecc_anomaly.sin_cos();
    PerifocalPosition {
        xp: a * (c - e),
        yp: a * (1.0 - e * e).sqrt() * s,
    }
}

/// Planet position for eccentric anomaly `E_J`.
pub fn planet_position(ecc_anomaly_j: f64, e_j: f64) -> PlanetPosition {
    let (s, c) = ecc_anomaly_j.sin_cos();
    PlanetPosition {
        x: c - e_j,
        y: (1.0 - e_j * e_j).sqrt() * s,
    }
}

/// Rotation from the perifocal frame `Ox′y′` to `Oxyz`.
///
/// Only the first two columns are needed since `z′ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    col_x: [f64; 3],
    col_y: [f64; 3],
}

impl Rotation {
    pub fn new(omega: f64, node: f64, inc: f64) -> Self {
        let (so, co) = omega.sin_cos();
        let (sn, cn) = node.sin_cos();
        let (si, ci) = inc.sin_cos();
        Self {
            col_x: [cn * co - ci * sn * so, sn * co + ci * cn * so, si * so],
            col_y: [-cn * so - ci * sn * co, -sn * so + ci * cn * co, si * co],
        }
    }

    #[inline]
    pub fn apply(&self, p: PerifocalPosition) -> InertialPosition {
        InertialPosition {
            x: self.col_x[0] * p.xp + self.col_y[0] * p.yp,
            y: self.col_x[1] * p.xp + self.col_y[1] * p.yp,
            z: self.col_x[2] * p.xp + self.col_y[2] * p.yp,
        }
    }
}

pub fn rotate_to_inertial(p: PerifocalPosition, omega: f64, node: f64, inc: f64) -> InertialPosition {
    Rotation::new(omega, node, inc).apply(p)
}

/// Delaunay action-angle variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaunayState {
    pub big_l: f64,
    pub big_g: f64,
    pub big_h: f64,
    pub l: f64,
    pub g: f64,
    pub h: f64,
}

impl DelaunayState {
    /// `L = √a`, `G = L√(1−e²)`, `H = G cos i`; `g = ω`, `h = Ω`.
    pub fn from_elements(el: &OrbitalElements) -> Result<Self> {
        if !(el.a > 0.0) {
            return Err(Error::SemiMajorAxis(el.a));
        }
        check_eccentricity(el.e)?;
        let big_l = el.a.sqrt();
        let big_g = big_l * (1.0 - el.e * el.e).sqrt();
        Ok(Self {
            big_l,
            big_g,
            big_h: big_g * el.inc.cos(),
            l: el.mean_anomaly,
            g: el.omega,
            h: el.node,
        })
    }

    pub fn to_elements(&self) -> Result<OrbitalElements> {
        if !(self.big_l > 0.0 && self.big_g > 0.0 && self.big_g <= self.big_l) {
            return Err(Error::InvalidParameter(format!(
                "Delaunay momenta L = {}, G = {} violate L ≥ G > 0",
                self.big_l, self.big_g
            )));
        }
        let ratio = self.big_g / self.big_l;
        let e = (1.0 - ratio * ratio).max(0.0).sqrt();
        let cos_i = (self.big_h / self.big_g).clamp(-1.0, 1.0);
        OrbitalElements::new(self.big_l * self.big_l, e, cos_i.acos(), self.g, self.h, self.l)
    }
}

/// Canonical Poincaré variables.
///
/// When the eccentricity (or inclination) vanishes the corresponding angle is
/// undefined; the pair is then zero and the `*_defined` flag is `false`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareState {
    pub p1: f64,
    pub q1: f64,
    pub p2: f64,
    pub q2: f64,
    pub p3: f64,
    pub q3: f64,
    pub apsis_defined: bool,
    pub node_defined: bool,
}

impl PoincareState {
    pub fn from_delaunay(d: &DelaunayState) -> Result<Self> {
        if !(d.big_l >= d.big_g && d.big_g >= d.big_h.abs() && d.big_g > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Delaunay momenta must satisfy L ≥ G ≥ |H| > 0 (L = {}, G = {}, H = {})",
                d.big_l, d.big_g, d.big_h
            )));
        }
        let r2 = (2.0 * (d.big_l - d.big_g)).sqrt();
        let r3 = (2.0 * (d.big_g - d.big_h)).sqrt();
        let (s2, c2) = (d.g + d.h).sin_cos();
        let (s3, c3) = d.h.sin_cos();
        Ok(Self {
            p1: d.big_l,
            q1: reduce_angle(d.l + d.g + d.h),
            p2: r2 * c2,
            q2: -r2 * s2,
            p3: r3 * c3,
            q3: -r3 * s3,
            apsis_defined: r2 > 0.0,
            node_defined: r3 > 0.0,
        })
    }

    /// Inverse map. Undefined angles come back as zero.
    pub fn to_delaunay(&self) -> DelaunayState {
        let s2 = self.p2 * self.p2 + self.q2 * self.q2;
        let s3 = self.p3 * self.p3 + self.q3 * self.q3;
        let big_l = self.p1;
        let big_g = big_l - 0.5 * s2;
        let big_h = big_g - 0.5 * s3;
        let g_plus_h = if s2 > 0.0 { (-self.q2).atan2(self.p2) } else { 0.0 };
        let h = if s3 > 0.0 { (-self.q3).atan2(self.p3) } else { 0.0 };
        DelaunayState {
            big_l,
            big_g,
            big_h,
            l: reduce_angle(self.q1 - g_plus_h),
            g: reduce_angle(g_plus_h - h),
            h: reduce_angle(h),
        }
    }
}

/// Scaling of the `(p₃, q₃)` shell radius.
///
/// `Paper` uses `√(G(1 − cos i))`, the radius without the canonical factor 2;
/// `Delaunay` uses the canonical `√(2G(1 − cos i)) = √(2(G − H))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Paper,
    Delaunay,
}

impl Normalization {
    pub fn kappa(self) -> f64 {
        match self {
            Normalization::Paper => 1.0,
            Normalization::Delaunay => 2.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Paper => "paper",
            Normalization::Delaunay => "delaunay",
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(Normalization::Paper),
            "delaunay" => Ok(Normalization::Delaunay),
            other => Err(Error::InvalidParameter(format!("unknown normalization '{other}'"))),
        }
    }
}

/// Squared shell radius `κ G (1 − cos i)`.
pub fn shell_radius_sq(inc: f64, big_g: f64, normalization: Normalization) -> f64 {
    normalization.kappa() * big_g * (1.0 - inc.cos())
}

/// `(p₃, q₃) = ρ (cos Ω, −sin Ω)` on the inclination shell.
pub fn shell_p3q3(inc: f64, node: f64, big_g: f64, normalization: Normalization) -> Result<(f64, f64)> {
    if !(inc > 0.0 && inc < PI) {
        return Err(Error::DegenerateInclination { inc, regime: "shell" });
    }
    let rho = shell_radius_sq(inc, big_g, normalization).sqrt();
    let (s, c) = node.sin_cos();
    Ok((rho * c, -rho * s))
}

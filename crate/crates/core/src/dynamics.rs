//! Planar secular flow in `(p₂, q₂)`, level curves and the linearized normal
//! flow in `(p₃, q₃)`.
//!
//! The planar Hamiltonian is `H = −K̄` with `K̄` from
//! [`crate::secular::kbar_series`]. In terms of `s = p₂² + q₂² = 2(L − G)`
//! and `u = 1/L − s/(4L²)` one has `e² = s·u` and `e cos Θ = p₂ √u`, so the
//! flow is smooth through `e = 0`; only the angle `Θ` is undefined there.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::elements::{shell_radius_sq, Normalization};
use crate::error::{check_eccentricity, Error, Result};
use crate::par::{map_slice, Execution};
use crate::secular::{
    check_semi_major_axis, coeffs_general, equilibrium_eccentricity, kbar_series, QuadraticForm2, SecularParams,
};

/// Relative level drift tolerated by [`PlanarSystem::integrate_trajectory`].
pub const LEVEL_DRIFT_TOL: f64 = 1e-9;
/// Half-width of the band around the critical level classified as separatrix.
pub const SEPARATRIX_BAND: f64 = 1e-8;
/// Curves with a smaller diameter in `(p₂, q₂)` are equilibria.
pub const EQUILIBRIUM_DIAMETER: f64 = 1e-8;
/// Levels this close to the minimum are snapped to the equilibrium.
pub const EQUILIBRIUM_SNAP: f64 = 1e-9;
/// Step-size halvings attempted before giving up on the drift target.
const MAX_HALVINGS: usize = 6;
/// Integration steps per equilibrium period used by `level_curve`.
const STEPS_PER_PERIOD: f64 = 1e4;
/// Step budget for one level curve, in equilibrium periods.
const MAX_PERIODS: f64 = 50.0;

/// Point of the planar phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarState {
    pub p2: f64,
    pub q2: f64,
}

impl PlanarState {
    pub fn new(p2: f64, q2: f64) -> Self {
        Self { p2, q2 }
    }

    /// The state with apsidal angle `Θ` and eccentricity `e` at action `L`.
    pub fn from_theta_e(theta: f64, e: f64, big_l: f64) -> Result<Self> {
        check_eccentricity(e)?;
        let big_g = big_l * (1.0 - e * e).sqrt();
        let r = (2.0 * (big_l - big_g)).sqrt();
        let (s, c) = theta.sin_cos();
        Ok(Self { p2: r * c, q2: -r * s })
    }

    pub fn radius_sq(&self) -> f64 {
        self.p2 * self.p2 + self.q2 * self.q2
    }

    /// `Θ = g + h`; `None` at the circular orbit.
    pub fn theta(&self) -> Option<f64> {
        if self.p2 == 0.0 && self.q2 == 0.0 {
            None
        } else {
            Some((-self.q2).atan2(self.p2))
        }
    }

    pub fn eccentricity(&self, big_l: f64) -> f64 {
        let s = self.radius_sq();
        (s * (1.0 / big_l - s / (4.0 * big_l * big_l))).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Equilibrium,
    Librating,
    Separatrix,
    Circulating,
    Unclassified,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Equilibrium => "equilibrium",
            Classification::Librating => "librating",
            Classification::Separatrix => "separatrix",
            Classification::Circulating => "circulating",
            Classification::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub tau: f64,
    pub state: PlanarState,
}

/// An integrated planar orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// `K̄` at the initial state.
    pub level: f64,
    /// `K̄` of the circular orbit, the level of the curve through `e = 0`.
    pub separatrix_level: f64,
    /// Equilibrium `(p₂, q₂)` the curve winds around.
    pub center: PlanarState,
    pub classification: Classification,
    /// `max |K̄(sample) − level|`.
    pub drift: f64,
    /// The state left the elliptic domain.
    pub truncated: bool,
    /// The angle about `center` completed a full turn.
    pub covers_period: bool,
    pub dt: f64,
}

impl Trajectory {
    /// `(Θ, e)` along the trajectory, skipping samples at `e = 0`.
    pub fn theta_e(&self, big_l: f64) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .filter_map(|s| s.state.theta().map(|th| (th, s.state.eccentricity(big_l))))
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        let mut d2: f64 = 0.0;
        let (mut lo_p, mut hi_p, mut lo_q, mut hi_q) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.samples {
            lo_p = lo_p.min(s.state.p2);
            hi_p = hi_p.max(s.state.p2);
            lo_q = lo_q.min(s.state.q2);
            hi_q = hi_q.max(s.state.q2);
        }
        if !self.samples.is_empty() {
            d2 = (hi_p - lo_p).powi(2) + (hi_q - lo_q).powi(2);
        }
        d2.sqrt()
    }
}

/// The planar problem for a given `(a, e_J)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarSystem {
    pub a: f64,
    pub e_j: f64,
    pub big_l: f64,
    quad: f64,
    oct: f64,
}

impl PlanarSystem {
    pub fn new(a: f64, e_j: f64) -> Result<Self> {
        check_semi_major_axis(a)?;
        check_eccentricity(e_j)?;
        let b = 1.0 - e_j * e_j;
        Ok(Self {
            a,
            e_j,
            big_l: a.sqrt(),
            quad: a * a / (8.0 * b.powf(1.5)),
            oct: 15.0 * a.powi(3) * e_j / (64.0 * b.powf(2.5)),
        })
    }

    fn check_domain(&self, s: &PlanarState) -> Result<()> {
        let r2 = s.radius_sq();
        let limit = 2.0 * self.big_l;
        if r2.is_finite() && r2 < limit {
            Ok(())
        } else {
            Err(Error::OutsideDomain { s: r2, limit })
        }
    }

    /// `K̄` at a state.
    pub fn level(&self, s: &PlanarState) -> f64 {
        let l = self.big_l;
        let r2 = s.radius_sq();
        let u = 1.0 / l - r2 / (4.0 * l * l);
        let su = r2 * u;
        1.0 + self.quad * (3.0 * su + 2.0) - self.oct * (3.0 * su + 4.0) * s.p2 * u.sqrt()
    }

    /// `(∂K̄/∂p₂, ∂K̄/∂q₂)`.
    fn gradient(&self, s: &PlanarState) -> (f64, f64) {
        let l = self.big_l;
        let r2 = s.radius_sq();
        let u = 1.0 / l - r2 / (4.0 * l * l);
        let su = r2 * u;
        let sqrt_u = u.sqrt();
        let dsu = 1.0 / l - r2 / (2.0 * l * l);
        let dsqrt_u = -1.0 / (8.0 * l * l * sqrt_u);
        let k_s = 3.0 * self.quad * dsu - self.oct * s.p2 * (3.0 * dsu * sqrt_u + (3.0 * su + 4.0) * dsqrt_u);
        let k_p = 2.0 * s.p2 * k_s - self.oct * (3.0 * su + 4.0) * sqrt_u;
        let k_q = 2.0 * s.q2 * k_s;
        (k_p, k_q)
    }

    #[inline]
    fn field(&self, s: &PlanarState) -> (f64, f64) {
        let (k_p, k_q) = self.gradient(s);
        (k_q, -k_p)
    }

    /// Canonical equations of `H = −K̄`: `ṗ₂ = ∂K̄/∂q₂`, `q̇₂ = −∂K̄/∂p₂`.
    pub fn vector_field(&self, s: &PlanarState) -> Result<(f64, f64)> {
        self.check_domain(s)?;
        Ok(self.field(s))
    }

    /// `K̄` of the circular orbit.
    pub fn separatrix_level(&self) -> f64 {
        1.0 + 2.0 * self.quad
    }

    /// The apsidal-alignment equilibrium (the origin for a circular planet).
    pub fn equilibrium(&self) -> Result<PlanarState> {
        let e = equilibrium_eccentricity(self.a, self.e_j)?;
        PlanarState::from_theta_e(0.0, e, self.big_l)
    }

    /// Small-oscillation period about the equilibrium.
    pub fn equilibrium_period(&self) -> Result<f64> {
        let eq = self.equilibrium()?;
        let h = 1e-6 * self.big_l;
        let gp = |dp: f64, dq: f64| self.gradient(&PlanarState::new(eq.p2 + dp, eq.q2 + dq));
        let (pp_hi, qp_hi) = gp(h, 0.0);
        let (pp_lo, qp_lo) = gp(-h, 0.0);
        let (pq_hi, qq_hi) = gp(0.0, h);
        let (pq_lo, qq_lo) = gp(0.0, -h);
        let k_pp = (pp_hi - pp_lo) / (2.0 * h);
        let k_qq = (qq_hi - qq_lo) / (2.0 * h);
        let k_pq = 0.5 * ((qp_hi - qp_lo) + (pq_hi - pq_lo)) / (2.0 * h);
        let det = k_pp * k_qq - k_pq * k_pq;
        if !(det > 0.0) {
            return Err(Error::InvalidParameter(format!("equilibrium is not elliptic (Hessian det {det:e})")));
        }
        Ok(TAU / det.sqrt())
    }

    fn rk4_step(&self, s: &PlanarState, dt: f64) -> PlanarState {
        let f = |st: &PlanarState| self.field(st);
        let (k1p, k1q) = f(s);
        let (k2p, k2q) = f(&PlanarState::new(s.p2 + 0.5 * dt * k1p, s.q2 + 0.5 * dt * k1q));
        let (k3p, k3q) = f(&PlanarState::new(s.p2 + 0.5 * dt * k2p, s.q2 + 0.5 * dt * k2q));
        let (k4p, k4q) = f(&PlanarState::new(s.p2 + dt * k3p, s.q2 + dt * k3q));
        PlanarState::new(
            s.p2 + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
            s.q2 + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        )
    }

    fn center(&self) -> PlanarState {
        self.equilibrium().unwrap_or(PlanarState::new(0.0, 0.0))
    }

    /// One RK4 pass; stops early once the angle about `center` has turned by
    /// `stop_turn` (if given) or the state leaves the domain.
    fn run(&self, s0: PlanarState, dt: f64, steps: usize, stop_turn: Option<f64>) -> Trajectory {
        let center = self.center();
        let level = self.level(&s0);
        let angle = |s: &PlanarState| (s.q2 - center.q2).atan2(s.p2 - center.p2);
        let mut samples = Vec::with_capacity(steps.min(1 << 20) + 1);
        samples.push(TrajectorySample { tau: 0.0, state: s0 });
        let mut state = s0;
        let mut drift: f64 = 0.0;
        let mut truncated = false;
        let mut prev = angle(&s0);
        let mut turned = 0.0;
        let mut covers_period = false;
        for k in 1..=steps {
            let next = self.rk4_step(&state, dt);
            if self.check_domain(&next).is_err() {
                truncated = true;
                break;
            }
            state = next;
            drift = drift.max((self.level(&state) - level).abs());
            samples.push(TrajectorySample { tau: k as f64 * dt, state });
            let a = angle(&state);
            let mut d = a - prev;
            if d > PI {
                d -= TAU;
            } else if d < -PI {
                d += TAU;
            }
            turned += d;
            prev = a;
            if turned.abs() >= TAU {
                covers_period = true;
                if stop_turn.is_some() {
                    break;
                }
            }
        }
        let mut t = Trajectory {
            samples,
            level,
            separatrix_level: self.separatrix_level(),
            center,
            classification: Classification::Unclassified,
            drift,
            truncated,
            covers_period,
            dt,
        };
        t.classification = classify_level(&t);
        t
    }

    /// Fixed-step RK4 from `s0`. If the level drifts by more than
    /// `1e−9·|level|` the step is halved (and the step count doubled).
    pub fn integrate_trajectory(&self, s0: PlanarState, dt: f64, steps: usize) -> Result<Trajectory> {
        self.integrate(s0, dt, steps, None)
    }

    fn integrate(&self, s0: PlanarState, dt: f64, steps: usize, stop_turn: Option<f64>) -> Result<Trajectory> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
        }
        self.check_domain(&s0)?;
        let (mut dt, mut steps) = (dt, steps);
        let mut t = self.run(s0, dt, steps, stop_turn);
        for _ in 0..MAX_HALVINGS {
            if t.truncated || t.drift <= LEVEL_DRIFT_TOL * t.level.abs() {
                break;
            }
            dt *= 0.5;
            steps *= 2;
            t = self.run(s0, dt, steps, stop_turn);
        }
        Ok(t)
    }

    /// Minimum of `K̄`, attained at the equilibrium.
    pub fn min_level(&self) -> Result<f64> {
        self.equilibrium().map(|eq| self.level(&eq))
    }

    /// The closed level curve `K̄ = level`, integrated over one turn.
    ///
    /// Levels below the circular-orbit value are seeded on `Θ = 0` outside
    /// the equilibrium eccentricity, levels above on `Θ = π`.
    pub fn level_curve(&self, level: f64) -> Result<Trajectory> {
        let eq = self.equilibrium()?;
        let min = self.level(&eq);
        if level < min - EQUILIBRIUM_SNAP || !level.is_finite() {
            return Err(Error::LevelNotAttained { level, min });
        }
        if level - min <= EQUILIBRIUM_SNAP {
            let mut t = Trajectory {
                samples: vec![TrajectorySample { tau: 0.0, state: eq }],
                level: min,
                separatrix_level: self.separatrix_level(),
                center: eq,
                classification: Classification::Unclassified,
                drift: 0.0,
                truncated: false,
                covers_period: true,
                dt: 0.0,
            };
            t.classification = classify_level(&t);
            return Ok(t);
        }
        let e_eq = eq.eccentricity(self.big_l);
        let seed = if level < self.separatrix_level() + SEPARATRIX_BAND && self.e_j > 0.0 {
            self.seed_on_ray(level, 0.0, e_eq)
        } else {
            self.seed_on_ray(level, PI, 0.0)
        }
        .ok_or(Error::LevelNotAttained { level, min })?;
        let period = self.equilibrium_period()?;
        let dt = period / STEPS_PER_PERIOD;
        let steps = (MAX_PERIODS * STEPS_PER_PERIOD) as usize;
        self.integrate(seed, dt, steps, Some(TAU))
    }

    /// Solves `K̄(Θ, e) = level` for `e > e_from`, where `K̄` increases
    /// with `e` from `e_from`.
    fn seed_on_ray(&self, level: f64, theta: f64, e_from: f64) -> Option<PlanarState> {
        let k = |e: f64| kbar_series(self.a, e, self.e_j, theta) - level;
        if k(e_from) > 0.0 {
            return None;
        }
        const SCAN: usize = 990;
        let mut lo = e_from;
        let mut hi = None;
        for j in 1..=SCAN {
            let e = e_from + (0.99 - e_from) * j as f64 / SCAN as f64;
            if k(e) >= 0.0 {
                hi = Some(e);
                break;
            }
            lo = e;
        }
        let mut hi = hi?;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if k(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        PlanarState::from_theta_e(theta, 0.5 * (lo + hi), self.big_l).ok()
    }

    /// Level curves for several levels, in input order.
    pub fn level_curves(&self, exec: Execution, levels: &[f64]) -> Vec<Result<Trajectory>> {
        map_slice(exec, levels, |&l| self.level_curve(l))
    }
}

/// Classifies a planar trajectory by its `Θ` winding.
pub fn classify_level(t: &Trajectory) -> Classification {
    if t.samples.is_empty() {
        return Classification::Unclassified;
    }
    if t.diameter() < EQUILIBRIUM_DIAMETER {
        return Classification::Equilibrium;
    }
    if t.truncated || !t.covers_period {
        return Classification::Unclassified;
    }
    if (t.level - t.separatrix_level).abs() < SEPARATRIX_BAND {
        return Classification::Separatrix;
    }
    let mut winding = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut prev: Option<f64> = None;
    for s in &t.samples {
        let Some(th) = s.state.theta() else { continue };
        max_abs = max_abs.max(th.abs());
        if let Some(p) = prev {
            let mut d = th - p;
            if d > PI {
                d -= TAU;
            } else if d < -PI {
                d += TAU;
            }
            winding += d;
        }
        prev = Some(th);
    }
    if winding.abs() >= 0.9 * TAU {
        Classification::Circulating
    } else if winding.abs() < 0.5 * PI && max_abs < 0.5 * PI {
        Classification::Librating
    } else {
        Classification::Unclassified
    }
}

/// Samples of a `W̄` level set in `(p₃, q₃)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseCurve {
    pub samples: Vec<(f64, f64)>,
    pub w_level: f64,
    /// `max |W̄(sample) − w_level|`.
    pub w_drift: f64,
    /// First return time of the polar angle, when the orbit turns once.
    pub period: Option<f64>,
    /// Distance between the last and first samples.
    pub closure: f64,
    pub params: Option<SecularParams>,
}

/// RK4 on `ṗ₃ = −(B̄p₃ + C̄q₃)`, `q̇₃ = Āp₃ + B̄q₃`, the flow of `W̄`.
pub fn linearized_normal_flow(qf: &QuadraticForm2, s0: (f64, f64), dt: f64, steps: usize) -> Result<EllipseCurve> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
    }
    let (a, b, c) = (qf.abar, qf.bbar, qf.cbar);
    let f = |p: f64, q: f64| (-(b * p + c * q), a * p + b * q);
    let w_level = qf.value(s0.0, s0.1);
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(s0);
    let (mut p, mut q) = s0;
    let mut w_drift: f64 = 0.0;
    let mut prev_angle = q.atan2(p);
    let mut turned = 0.0;
    let mut turns: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut period = None;
    for k in 1..=steps {
        let (k1p, k1q) = f(p, q);
        let (k2p, k2q) = f(p + 0.5 * dt * k1p, q + 0.5 * dt * k1q);
        let (k3p, k3q) = f(p + 0.5 * dt * k2p, q + 0.5 * dt * k2q);
        let (k4p, k4q) = f(p + dt * k3p, q + dt * k3q);
        p += dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        samples.push((p, q));
        w_drift = w_drift.max((qf.value(p, q) - w_level).abs());

        let angle = q.atan2(p);
        let mut d = angle - prev_angle;
        if d > PI {
            d -= TAU;
        } else if d < -PI {
            d += TAU;
        }
        turned += d;
        prev_angle = angle;
        turns.push((k as f64 * dt, turned));
        if period.is_none() && turned.abs() >= TAU && turns.len() >= 3 {
            period = Some(crossing_time(&turns[turns.len() - 3..], TAU.copysign(turned)));
        }
    }
    // A run of exactly one period may stop a rounding error short of the
    // full turn; extrapolate across the final step.
    if period.is_none() && turns.len() >= 3 {
        let n = turns.len();
        let last_step = (turns[n - 1].1 - turns[n - 2].1).abs();
        if turned.abs() + last_step >= TAU {
            period = Some(crossing_time(&turns[n - 3..], TAU.copysign(turned)));
        }
    }
    let closure = ((p - s0.0).powi(2) + (q - s0.1).powi(2)).sqrt();
    Ok(EllipseCurve { samples, w_level, w_drift, period, closure, params: None })
}

/// Time at which the quadratic through three `(t, angle)` points reaches
/// `target`.
fn crossing_time(pts: &[(f64, f64)], target: f64) -> f64 {
    let (t0, y0) = pts[0];
    let (t1, y1) = pts[1];
    let (t2, y2) = pts[2];
    // Newton form in t about t1; solve y(t) = target near t2.
    let d01 = (y1 - y0) / (t1 - t0);
    let d12 = (y2 - y1) / (t2 - t1);
    let d012 = (d12 - d01) / (t2 - t0);
    let y = |t: f64| y1 + d12 * (t - t1) + d012 * (t - t1) * (t - t2);
    let dy = |t: f64| d12 + d012 * (2.0 * t - t1 - t2);
    let mut t = t1 + (target - y1) / d12;
    for _ in 0..8 {
        let step = (y(t) - target) / dy(t);
        t -= step;
        if step.abs() < 1e-15 * t.abs() {
            break;
        }
    }
    t
}

/// Points of `W̄ = w` at polar angles `φ_j = 2πj/n`; directions where the
/// form is not positive are skipped.
pub fn ellipse_samples(qf: &QuadraticForm2, w: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .filter_map(|j| {
            let phi = TAU * j as f64 / n as f64;
            radius_at(qf, w, phi).map(|r| (r * phi.cos(), r * phi.sin()))
        })
        .collect()
}

fn radius_at(qf: &QuadraticForm2, w: f64, phi: f64) -> Option<f64> {
    let (s, c) = phi.sin_cos();
    let den = qf.abar * c * c + 2.0 * qf.bbar * c * s + qf.cbar * s * s;
    let r2 = 2.0 * w / den;
    (den > 0.0 && r2 >= 0.0).then(|| r2.sqrt())
}

/// A family of normal-flow ellipses along a planar level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WPortrait {
    pub curves: Vec<EllipseCurve>,
    /// `max_φ (max_k r_k(φ) − min_k r_k(φ)) / ρ` over the family.
    pub spread: f64,
    pub shell_radius: f64,
}

/// Ellipses of the general-inclination form through `(ρ, 0)`, one per
/// sampled `(Θ, e)` of the level set, with the shell radius `ρ` of the
/// equilibrium at inclination `inc`.
pub fn w_portrait(
    levelset: &Trajectory,
    system: &PlanarSystem,
    inc: f64,
    n_samples: usize,
    normalization: Normalization,
) -> Result<WPortrait> {
    let pts = levelset.theta_e(system.big_l);
    let picked: Vec<(f64, f64)> = if pts.is_empty() {
        let eq = levelset.center;
        vec![(eq.theta().unwrap_or(0.0), eq.eccentricity(system.big_l))]
    } else {
        let n = n_samples.max(1).min(pts.len());
        (0..n).map(|k| pts[k * pts.len() / n]).collect()
    };
    let eq_e = levelset.center.eccentricity(system.big_l);
    let rho = shell_radius_sq(inc, system.big_l * (1.0 - eq_e * eq_e).sqrt(), normalization).sqrt();
    w_portrait_points(&picked, system, inc, rho, 256)
}

/// [`w_portrait`] on explicit `(Θ, e)` samples.
pub fn w_portrait_points(
    points: &[(f64, f64)],
    system: &PlanarSystem,
    inc: f64,
    rho: f64,
    n_phi: usize,
) -> Result<WPortrait> {
    let mut forms = Vec::with_capacity(points.len());
    let mut curves = Vec::with_capacity(points.len());
    for &(theta, e) in points {
        let p = SecularParams::new(system.a, e, system.e_j, theta, inc)?;
        let qf = coeffs_general(&p)?;
        let w = qf.value(rho, 0.0);
        let samples = ellipse_samples(&qf, w, n_phi);
        let w_drift = samples.iter().map(|&(x, y)| (qf.value(x, y) - w).abs()).fold(0.0, f64::max);
        let closure = match (samples.first(), samples.last()) {
            (Some(a), Some(b)) => ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt(),
            _ => 0.0,
        };
        curves.push(EllipseCurve { samples, w_level: w, w_drift, period: None, closure, params: Some(p) });
        forms.push((qf, w));
    }
    let mut spread: f64 = 0.0;
    for j in 0..n_phi {
        let phi = TAU * j as f64 / n_phi as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (qf, w) in &forms {
            if let Some(r) = radius_at(qf, *w, phi) {
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        if hi >= lo {
            spread = spread.max((hi - lo) / rho);
        }
    }
    Ok(WPortrait { curves, spread, shell_radius: rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secular::{coeffs_apsidal, Regime};
    use approx::assert_abs_diff_eq;

    const LEVELS: [f64; 8] =
        [1.002872548, 1.002872843, 1.002873713, 1.002875125, 1.002878129, 1.002879903, 1.002881952, 1.002885001];

    fn system() -> PlanarSystem {
        PlanarSystem::new(0.1, 0.3).unwrap()
    }

    #[test]
    fn state_round_trip() {
        let l = 0.1f64.sqrt();
        let s = PlanarState::from_theta_e(0.7, 0.3, l).unwrap();
        assert_abs_diff_eq!(s.theta().unwrap(), 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eccentricity(l), 0.3, epsilon = 1e-14);
        assert!(PlanarState::new(0.0, 0.0).theta().is_none());
        assert!(PlanarState::from_theta_e(0.0, 1.0, l).is_err());
    }

    #[test]
    fn level_matches_series() {
        let sys = system();
        for &(th, e) in &[(0.0, 0.04), (1.3, 0.2), (-2.9, 0.6)] {
            let s = PlanarState::from_theta_e(th, e, sys.big_l).unwrap();
            assert_abs_diff_eq!(sys.level(&s), kbar_series(0.1, e, 0.3, th), epsilon = 1e-15);
        }
    }

    #[test]
    fn field_vanishes_at_equilibrium() {
        let sys = system();
        let (dp, dq) = sys.vector_field(&sys.equilibrium().unwrap()).unwrap();
        assert!(dp.abs() < 1e-12 && dq.abs() < 1e-12, "{dp} {dq}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sys = system();
        let h = 1e-7;
        for s in [PlanarState::new(0.05, -0.1), PlanarState::new(-0.2, 0.3), PlanarState::new(0.0, 0.0)] {
            let (kp, kq) = sys.gradient(&s);
            let fp = (sys.level(&PlanarState::new(s.p2 + h, s.q2)) - sys.level(&PlanarState::new(s.p2 - h, s.q2))) / (2.0 * h);
            let fq = (sys.level(&PlanarState::new(s.p2, s.q2 + h)) - sys.level(&PlanarState::new(s.p2, s.q2 - h))) / (2.0 * h);
            assert_abs_diff_eq!(kp, fp, epsilon = 1e-9);
            assert_abs_diff_eq!(kq, fq, epsilon = 1e-9);
        }
    }

    #[test]
    fn field_is_divergence_free() {
        let sys = system();
        let h = 1e-6;
        for s in [PlanarState::new(0.05, -0.1), PlanarState::new(-0.2, 0.3)] {
            let (a, _) = sys.vector_field(&PlanarState::new(s.p2 + h, s.q2)).unwrap();
            let (b, _) = sys.vector_field(&PlanarState::new(s.p2 - h, s.q2)).unwrap();
            let (_, c) = sys.vector_field(&PlanarState::new(s.p2, s.q2 + h)).unwrap();
            let (_, d) = sys.vector_field(&PlanarState::new(s.p2, s.q2 - h)).unwrap();
            let div = (a - b) / (2.0 * h) + (c - d) / (2.0 * h);
            assert!(div.abs() < 1e-10, "{div}");
        }
    }

    #[test]
    fn circular_planet_keeps_eccentricity() {
        let sys = PlanarSystem::new(0.1, 0.0).unwrap();
        let s = PlanarState::new(0.1, -0.05);
        let (dp, dq) = sys.vector_field(&s).unwrap();
        assert!((2.0 * s.p2 * dp + 2.0 * s.q2 * dq).abs() < 1e-18);
    }

    #[test]
    fn domain_is_enforced() {
        let sys = system();
        let edge = (2.0 * sys.big_l).sqrt() * (1.0 + 1e-12);
        assert!(matches!(sys.vector_field(&PlanarState::new(edge, 0.0)), Err(Error::OutsideDomain { .. })));
        assert!(sys.integrate_trajectory(PlanarState::new(0.1, 0.0), 0.0, 10).is_err());
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let sys = system();
        let eq = sys.equilibrium().unwrap();
        let dt = sys.equilibrium_period().unwrap() / 1e4;
        let t = sys.integrate_trajectory(eq, dt, 10_000).unwrap();
        let last = t.samples.last().unwrap().state;
        assert!(((last.p2 - eq.p2).powi(2) + (last.q2 - eq.q2).powi(2)).sqrt() < 1e-10);
        assert_eq!(t.classification, Classification::Equilibrium);
    }

    #[test]
    fn long_integration_conserves_level() {
        let sys = system();
        let seed = sys.level_curve(LEVELS[2]).unwrap().samples[0].state;
        let dt = sys.equilibrium_period().unwrap() / 1e4;
        let t = sys.integrate_trajectory(seed, dt, 100_000).unwrap();
        assert!(t.drift < 1e-9 * t.level, "{}", t.drift);
        assert_eq!(t.classification, Classification::Librating);
    }

    #[test]
    fn table_of_levels_classifies() {
        let sys = system();
        let expected = [
            Classification::Equilibrium,
            Classification::Librating,
            Classification::Librating,
            Classification::Librating,
            Classification::Librating,
            Classification::Separatrix,
            Classification::Circulating,
            Classification::Circulating,
        ];
        for (level, want) in LEVELS.iter().zip(expected) {
            let t = sys.level_curve(*level).unwrap();
            assert_eq!(t.classification, want, "level {level}");
            if want == Classification::Librating {
                assert!(t.theta_e(sys.big_l).iter().all(|(th, _)| th.abs() < 0.5 * PI));
            }
        }
    }

    fn inside(poly: &[(f64, f64)], pt: (f64, f64)) -> bool {
        let mut c = false;
        let n = poly.len();
        for i in 0..n {
            let (xi, yi) = poly[i];
            let (xj, yj) = poly[(i + n - 1) % n];
            if (yi > pt.1) != (yj > pt.1) && pt.0 < (xj - xi) * (pt.1 - yi) / (yj - yi) + xi {
                c = !c;
            }
        }
        c
    }

    #[test]
    fn librating_curves_are_nested() {
        let sys = system();
        let curves: Vec<Vec<(f64, f64)>> = LEVELS[1..5]
            .iter()
            .map(|&l| sys.level_curve(l).unwrap().samples.iter().map(|s| (s.state.p2, s.state.q2)).collect())
            .collect();
        for w in curves.windows(2) {
            let step = (w[0].len() / 64).max(1);
            assert!(w[0].iter().step_by(step).all(|&p| inside(&w[1], p)));
        }
    }

    #[test]
    fn level_curve_errors() {
        let sys = system();
        assert!(matches!(sys.level_curve(1.0), Err(Error::LevelNotAttained { .. })));
        assert!(matches!(sys.level_curve(5.0), Err(Error::LevelNotAttained { .. })));
    }

    #[test]
    fn identity_flow_is_unit_circle() {
        let qf = QuadraticForm2::new(1.0, 0.0, 1.0, Regime::Oracle, Normalization::Paper);
        let c = linearized_normal_flow(&qf, (1.0, 0.0), TAU / 1e4, 10_000).unwrap();
        assert!(c.w_drift < 1e-9 * c.w_level);
        assert!(c.closure < 1e-6);
        assert!((c.period.unwrap() - TAU).abs() < 1e-4 * TAU);
        assert!(c.samples.iter().all(|&(p, q)| (p * p + q * q - 1.0).abs() < 1e-9));
    }

    #[test]
    fn indefinite_flow_escapes_but_conserves() {
        let qf = QuadraticForm2::new(1.0, 2.0, 1.0, Regime::Oracle, Normalization::Paper);
        let c = linearized_normal_flow(&qf, (1.0, 0.0), 1e-3, 5_000).unwrap();
        let (p, q) = *c.samples.last().unwrap();
        assert!(p.hypot(q) > 10.0);
        assert!(c.w_drift < 1e-9 * c.w_level.abs() * (p * p + q * q));
    }

    #[test]
    fn apsidal_form_gives_closed_ellipse() {
        let e = equilibrium_eccentricity(0.1, 0.3).unwrap();
        let p = SecularParams::new(0.1, e, 0.3, 0.0, 1.0).unwrap();
        let qf = coeffs_apsidal(&p).unwrap();
        let period = TAU / qf.det().sqrt();
        let c = linearized_normal_flow(&qf, (0.05, 0.0), period / 1e4, 10_000).unwrap();
        assert!(c.closure < 1e-6 * 0.05);
        assert!((c.period.unwrap() - period).abs() < 1e-4 * period);
    }

    #[test]
    fn equilibrium_portrait_is_degenerate() {
        let sys = system();
        let t = sys.level_curve(LEVELS[0]).unwrap();
        let portrait = w_portrait(&t, &sys, 0.5, 8, Normalization::Delaunay).unwrap();
        assert_eq!(portrait.spread, 0.0);
        assert!(portrait.curves.iter().all(|c| c.w_drift < 1e-9 * c.w_level));
    }

    #[test]
    fn portrait_spread_is_mirror_symmetric() {
        let sys = system();
        let t = sys.level_curve(LEVELS[1]).unwrap();
        let pts: Vec<(f64, f64)> = t.theta_e(sys.big_l).into_iter().step_by(97).collect();
        let mirrored: Vec<(f64, f64)> = pts.iter().map(|&(th, e)| (-th, e)).collect();
        let a = w_portrait_points(&pts, &sys, 0.5, 0.05, 256).unwrap();
        let b = w_portrait_points(&mirrored, &sys, 0.5, 0.05, 256).unwrap();
        assert!(a.spread > 0.0);
        assert_abs_diff_eq!(a.spread, b.spread, epsilon = 1e-12);
    }
}

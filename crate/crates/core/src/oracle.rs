//! Brute-force checks of the closed forms by quadrature.
//!
//! The quadratic-form coefficients are recovered from the node-angle
//! harmonics of `K̄` on an inclination shell: with `p₃ = ρ cos Ω`,
//! `q₃ = −ρ sin Ω` and `H = −K̄`,
//!
//! ```text
//! Ā + C̄ = −4 (c₀ − K̄_planar)/ρ²,   Ā − C̄ = −4 c₂/ρ²,   B̄ = 2 s₂/ρ²,
//! ```
//!
//! where `c₀, c₂, s₂` are the mean and `2Ω` Fourier coefficients of `K̄(Ω)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::averaging::{double_average_with, AveragedValue, QuadratureGrid};
use crate::elements::{perifocal_position, planet_position, shell_radius_sq, Normalization, Rotation};
use crate::error::{Error, Result};
use crate::fit::log_log_slope;
use crate::par::{map_range, map_slice, Execution};
use crate::potential::{indirect_term, kernel, KernelKind};
use crate::secular::{check_semi_major_axis, coeffs, QuadraticForm2, Regime, SecularParams};

/// Allowed relative deviation of a fitted order from its target.
pub const ORDER_TOLERANCE: f64 = 0.15;

/// Quadrature settings shared by the oracle routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub grid: QuadratureGrid,
    pub n_omega: usize,
    pub kernel: KernelKind,
    pub exec: Execution,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid: QuadratureGrid::default(),
            n_omega: 16,
            kernel: KernelKind::LegendreTruncated,
            exec: Execution::default(),
        }
    }
}

fn shell_average(
    exec: Execution,
    p: &SecularParams,
    node: f64,
    grid: QuadratureGrid,
    kind: KernelKind,
) -> Result<AveragedValue> {
    let rot = Rotation::new(p.theta - node, node, p.inc);
    let ast: Vec<_> = grid
        .asteroid_nodes()
        .iter()
        .map(|n| rot.apply(perifocal_position(p.a, p.e, n.angle)))
        .collect();
    let planet: Vec<_> = grid.planet_nodes().iter().map(|n| planet_position(n.angle, p.e_j)).collect();
    double_average_with(exec, |an, pn| kernel(kind, &ast[an.index], &planet[pn.index]), p.e, p.e_j, grid)
}

/// `K̄` with the asteroid's frame set by `(Θ, i, Ω)`, `ω = Θ − Ω`.
#[allow(clippy::too_many_arguments)]
pub fn ubar_on_shell(
    a: f64,
    e: f64,
    e_j: f64,
    theta: f64,
    inc: f64,
    node: f64,
    grid: QuadratureGrid,
    kind: KernelKind,
) -> Result<AveragedValue> {
    let p = SecularParams::new(a, e, e_j, theta, inc)?;
    shell_average(Execution::default(), &p, node, grid, kind)
}

/// Fourier content of `K̄(Ω)` on one shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeHarmonics {
    pub c0: f64,
    pub c2: f64,
    pub s2: f64,
    /// Amplitude of the `4Ω` harmonic (NaN when `n_Ω < 10`).
    pub amp4: f64,
    /// Largest odd-harmonic amplitude (`Ω`, `3Ω`).
    pub amp_odd: f64,
    /// Largest quadrature error estimate over the `Ω` samples.
    pub est_error: f64,
}

fn harmonic(values: &[f64], k: usize) -> (f64, f64) {
    let n = values.len() as f64;
    let mut c = 0.0;
    let mut s = 0.0;
    for (j, v) in values.iter().enumerate() {
        let (sn, cs) = (TAU * (k * j) as f64 / n).sin_cos();
        c += v * cs;
        s += v * sn;
    }
    (2.0 * c / n, 2.0 * s / n)
}

pub fn node_harmonics(p: &SecularParams, cfg: &OracleConfig) -> Result<NodeHarmonics> {
    if cfg.n_omega < 8 {
        return Err(Error::InvalidParameter(format!("n_omega = {} must be at least 8", cfg.n_omega)));
    }
    let inner = match cfg.exec {
        // Parallelism is spent across Ω samples; each average runs inline.
        Execution::Parallel => Execution::Sequential,
        Execution::Sequential => Execution::Sequential,
    };
    let samples = map_range(cfg.exec, cfg.n_omega, |j| {
        shell_average(inner, p, TAU * j as f64 / cfg.n_omega as f64, cfg.grid, cfg.kernel)
    });
    let samples: Vec<AveragedValue> = samples.into_iter().collect::<Result<_>>()?;
    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let c0 = values.iter().sum::<f64>() / values.len() as f64;
    let (c2, s2) = harmonic(&values, 2);
    let amp4 = if cfg.n_omega >= 10 {
        let (c4, s4) = harmonic(&values, 4);
        c4.hypot(s4)
    } else {
        f64::NAN
    };
    let amp_odd = [1, 3]
        .iter()
        .map(|&k| {
            let (c, s) = harmonic(&values, k);
            c.hypot(s)
        })
        .fold(0.0, f64::max);
    let est_error = samples.iter().map(|s| s.est_error).fold(0.0, f64::max);
    Ok(NodeHarmonics { c0, c2, s2, amp4, amp_odd, est_error })
}

/// `(c₀, c₂, s₂)` of `K̄(Ω)` over `n_Ω` equally spaced node angles.
#[allow(clippy::too_many_arguments)]
pub fn harmonics_in_omega(
    a: f64,
    e: f64,
    e_j: f64,
    theta: f64,
    inc: f64,
    grid: QuadratureGrid,
    n_omega: usize,
    kind: KernelKind,
) -> Result<(f64, f64, f64)> {
    let p = SecularParams::new(a, e, e_j, theta, inc)?;
    let cfg = OracleConfig { grid, n_omega, kernel: kind, ..OracleConfig::default() };
    node_harmonics(&p, &cfg).map(|h| (h.c0, h.c2, h.s2))
}

/// Planar reference `K̄` (the asteroid in the planet's plane at `Θ`).
pub fn planar_reference(p: &SecularParams, cfg: &OracleConfig) -> Result<AveragedValue> {
    shell_average(cfg.exec, &p.with_inc(0.0), 0.0, cfg.grid, cfg.kernel)
}

/// A quadratic form recovered from shell harmonics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveredForm {
    pub form: QuadraticForm2,
    pub harmonics: NodeHarmonics,
    pub planar: f64,
    pub shell_radius_sq: f64,
    /// The inclination signal is not resolved above quadrature noise.
    pub below_noise: bool,
}

pub fn recover(p: &SecularParams, normalization: Normalization, cfg: &OracleConfig) -> Result<RecoveredForm> {
    if !(p.inc > 0.0 && p.inc < std::f64::consts::PI) {
        return Err(Error::DegenerateInclination { inc: p.inc, regime: "oracle shell" });
    }
    let h = node_harmonics(p, cfg)?;
    let planar = planar_reference(p, cfg)?;
    let rho2 = shell_radius_sq(p.inc, p.big_g, normalization);
    let sum = -4.0 * (h.c0 - planar.value) / rho2;
    let diff = -4.0 * h.c2 / rho2;
    let bbar = 2.0 * h.s2 / rho2;
    let signal = (h.c0 - planar.value).abs().max(h.c2.abs());
    let noise = 10.0 * h.est_error.max(planar.est_error).max(4.0 * f64::EPSILON * h.c0.abs());
    Ok(RecoveredForm {
        form: QuadraticForm2::new(0.5 * (sum + diff), bbar, 0.5 * (sum - diff), Regime::Oracle, normalization),
        harmonics: h,
        planar: planar.value,
        shell_radius_sq: rho2,
        below_noise: signal < noise,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn recover_quadratic_form(
    a: f64,
    e: f64,
    e_j: f64,
    theta: f64,
    inc: f64,
    grid: QuadratureGrid,
    normalization: Normalization,
    kind: KernelKind,
) -> Result<RecoveredForm> {
    let p = SecularParams::new(a, e, e_j, theta, inc)?;
    recover(&p, normalization, &OracleConfig { grid, kernel: kind, ..OracleConfig::default() })
}

/// Double average of the indirect term `x ẍ_J + y ÿ_J`.
#[allow(clippy::too_many_arguments)]
pub fn indirect_average(
    a: f64,
    e: f64,
    e_j: f64,
    theta: f64,
    inc: f64,
    node: f64,
    grid: QuadratureGrid,
) -> Result<AveragedValue> {
    check_semi_major_axis(a)?;
    let p = SecularParams::new(a, e, e_j, theta, inc)?;
    let rot = Rotation::new(theta - node, node, inc);
    let ast: Vec<_> = grid
        .asteroid_nodes()
        .iter()
        .map(|n| rot.apply(perifocal_position(p.a, p.e, n.angle)))
        .collect();
    double_average_with(
        Execution::default(),
        |an, pn| indirect_term(&ast[an.index], pn.angle, e_j),
        e,
        e_j,
        grid,
    )
}

/// Convergence of one truncated kernel towards the exact one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub kernel: KernelKind,
    pub a_list: Vec<f64>,
    pub errors: Vec<f64>,
    /// Fitted log-log slope; `None` when every error is zero.
    pub order: Option<f64>,
    /// Order within 0.3 of 4 or more.
    pub achieves_order_four: bool,
}

pub fn truncation_audit(
    a_list: &[f64],
    e: f64,
    e_j: f64,
    theta: f64,
    inc: f64,
    cfg: &OracleConfig,
) -> Result<Vec<TruncationReport>> {
    let mut exact = Vec::with_capacity(a_list.len());
    for &a in a_list {
        let p = SecularParams::new(a, e, e_j, theta, inc)?;
        exact.push(shell_average(cfg.exec, &p, 0.0, cfg.grid, KernelKind::Exact)?.value);
    }
    let mut out = Vec::new();
    for kind in KernelKind::ALL {
        let mut errors = Vec::with_capacity(a_list.len());
        for (&a, &x) in a_list.iter().zip(&exact) {
            let p = SecularParams::new(a, e, e_j, theta, inc)?;
            errors.push((shell_average(cfg.exec, &p, 0.0, cfg.grid, kind)?.value - x).abs());
        }
        let order = if errors.iter().all(|&v| v == 0.0) { None } else { Some(log_log_slope(a_list, &errors)) };
        let achieves_order_four = order.is_some_and(|o| o >= 4.0 - 0.3);
        out.push(TruncationReport { kernel: kind, a_list: a_list.to_vec(), errors, order, achieves_order_four });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Match,
    MismatchLogged,
}

/// Audit of one closed form against the shell oracle as `i → 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Parameters at the smallest audited inclination.
    pub params: SecularParams,
    pub regime: Regime,
    pub normalization: Normalization,
    pub kernel: KernelKind,
    pub recovered: QuadraticForm2,
    pub closed_form: QuadraticForm2,
    /// `|recovered − closed form|` per coefficient at the smallest inclination.
    pub residuals: [f64; 3],
    pub inclinations: Vec<f64>,
    /// `ρ² · max_k |recovered_k − closed_k|` per inclination.
    pub shell_residuals: Vec<f64>,
    /// Slope of `log shell_residual` against `log(1 − cos i)`.
    pub convergence_order: f64,
    /// `C` in `shell_residual ≈ C·(G(1 − cos i))²`, from the smallest `i`.
    pub residual_constant: f64,
    pub verdict: Verdict,
}

/// Shell-level residuals of `regime` against the oracle over `inclinations`.
pub fn audit_closed_form(
    base: &SecularParams,
    regime: Regime,
    normalization: Normalization,
    inclinations: &[f64],
    cfg: &OracleConfig,
) -> Result<OracleReport> {
    if inclinations.len() < 2 {
        return Err(Error::InvalidParameter("at least two inclinations are needed".into()));
    }
    let rows: Vec<Result<(RecoveredForm, QuadraticForm2)>> = map_slice(cfg.exec, inclinations, |&inc| {
        let p = base.with_inc(inc);
        let cf = coeffs(regime, &p)?;
        let inner = OracleConfig { exec: Execution::Sequential, ..*cfg };
        Ok((recover(&p, normalization, &inner)?, cf))
    });
    let rows: Vec<(RecoveredForm, QuadraticForm2)> = rows.into_iter().collect::<Result<_>>()?;
    let mut shell_residuals = Vec::with_capacity(rows.len());
    let mut xs = Vec::with_capacity(rows.len());
    for (&inc, (rec, cf)) in inclinations.iter().zip(&rows) {
        let worst = rec
            .form
            .coefficients()
            .iter()
            .zip(cf.coefficients())
            .map(|(r, c)| (r - c).abs())
            .fold(0.0, f64::max);
        shell_residuals.push(worst * rec.shell_radius_sq);
        xs.push(1.0 - inc.cos());
    }
    let convergence_order = log_log_slope(&xs, &shell_residuals);
    let (k_min, _) = inclinations
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let (rec, cf) = rows[k_min];
    let residuals: [f64; 3] = std::array::from_fn(|k| (rec.form.coefficients()[k] - cf.coefficients()[k]).abs());
    let gx = base.big_g * xs[k_min];
    let verdict = if (convergence_order - 2.0).abs() <= ORDER_TOLERANCE * 2.0 {
        Verdict::Match
    } else {
        Verdict::MismatchLogged
    };
    Ok(OracleReport {
        params: base.with_inc(inclinations[k_min]),
        regime,
        normalization,
        kernel: cfg.kernel,
        recovered: rec.form,
        closed_form: cf,
        residuals,
        inclinations: inclinations.to_vec(),
        shell_residuals: shell_residuals.clone(),
        convergence_order,
        residual_constant: shell_residuals[k_min] / (gx * gx),
        verdict,
    })
}

/// Leading `a²` factor of `Ā` on the smallest shell, against the two
/// closed-form limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingFactorFinding {
    pub normalization: Normalization,
    pub inc: f64,
    /// `Ā_recovered / [a²(1+4e²−5e²cos²Θ)/(4G(1−e_J²)^{3/2})]` at `e_J = 0`.
    pub recovered_factor: f64,
    pub small_inclination_factor: f64,
    /// `sin²i/(1 − cos i) = 1 + cos i`.
    pub general_factor: f64,
}

/// Measures the leading factor with a circular planet (no octupole terms).
pub fn leading_factor(
    a: f64,
    e: f64,
    theta: f64,
    inc: f64,
    normalization: Normalization,
    cfg: &OracleConfig,
) -> Result<LeadingFactorFinding> {
    let p = SecularParams::new(a, e, 0.0, theta, inc)?;
    let rec = recover(&p, normalization, cfg)?;
    let c = theta.cos();
    let base = a * a * (1.0 + 4.0 * e * e - 5.0 * e * e * c * c) / (4.0 * p.big_g);
    Ok(LeadingFactorFinding {
        normalization,
        inc,
        recovered_factor: rec.form.abar / base,
        small_inclination_factor: 3.0,
        general_factor: 1.0 + inc.cos(),
    })
}

/// Full audit: every closed form under both normalizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormAudit {
    pub reports: Vec<OracleReport>,
    pub leading_factors: Vec<LeadingFactorFinding>,
}

impl ClosedFormAudit {
    /// Reports whose residual decays at the expected order.
    pub fn consistent(&self) -> Vec<&OracleReport> {
        self.reports.iter().filter(|r| r.verdict == Verdict::Match).collect()
    }
}

/// Default inclination ladder for closed-form audits.
pub const AUDIT_INCLINATIONS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

/// Audits every closed form at `base` (the apsidal form at `Θ = 0`).
pub fn audit_closed_forms(base: &SecularParams, inclinations: &[f64], cfg: &OracleConfig) -> Result<ClosedFormAudit> {
    let mut reports = Vec::new();
    for normalization in [Normalization::Paper, Normalization::Delaunay] {
        for regime in Regime::CLOSED_FORMS {
            let p = if regime == Regime::ApsidalAligned { base.with_theta(0.0) } else { *base };
            reports.push(audit_closed_form(&p, regime, normalization, inclinations, cfg)?);
        }
    }
    let inc_min = inclinations.iter().copied().fold(f64::INFINITY, f64::min);
    let leading_factors = [Normalization::Paper, Normalization::Delaunay]
        .iter()
        .map(|&n| leading_factor(base.a, base.e, base.theta, inc_min, n, cfg))
        .collect::<Result<_>>()?;
    Ok(ClosedFormAudit { reports, leading_factors })
}

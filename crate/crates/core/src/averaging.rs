//! Double averaging over the two mean anomalies.
//!
//! Averages are taken in eccentric anomalies, where `dl = (1 − e cos E) dE`,
//! with the uniform (periodic rectangle) rule on `[0, 2π)²`. The rule is
//! spectrally accurate for the analytic integrands used here.
//!
//! Rows are indexed by the planet node. Each row is summed sequentially and
//! row sums are accumulated in index order, so the parallel and sequential
//! paths produce bitwise-identical results.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{check_eccentricity, Error, Result};
use crate::par::{map_range, Execution};

/// Largest grid side used by [`converge`].
pub const MAX_GRID: usize = 4096;
/// Starting grid side used by [`converge`].
pub const START_GRID: usize = 64;

/// Node counts for the asteroid (`E`) and planet (`E_J`) anomalies.
///
/// Sides must be even so the half-resolution grid used for the error
/// estimate is a subset of the full one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    n_e: usize,
    n_ej: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self { n_e: 256, n_ej: 256 }
    }
}

impl QuadratureGrid {
    pub fn new(n_e: usize, n_ej: usize) -> Result<Self> {
        for n in [n_e, n_ej] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidParameter(format!("grid side {n} must be even and ≥ 8")));
            }
        }
        Ok(Self { n_e, n_ej })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn n_e(&self) -> usize {
        self.n_e
    }

    pub fn n_ej(&self) -> usize {
        self.n_ej
    }

    /// Nodes for the asteroid anomaly.
    pub fn asteroid_nodes(&self) -> Vec<AnomalyNode> {
        nodes(self.n_e)
    }

    /// Nodes for the planet anomaly.
    pub fn planet_nodes(&self) -> Vec<AnomalyNode> {
        nodes(self.n_ej)
    }

    fn doubled(&self) -> Self {
        Self { n_e: self.n_e * 2, n_ej: self.n_ej * 2 }
    }
}

/// A quadrature node; `index` addresses the grid's node list so integrands
/// can look up precomputed geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyNode {
    pub index: usize,
    pub angle: f64,
    pub cos: f64,
    pub sin: f64,
}

fn nodes(n: usize) -> Vec<AnomalyNode> {
    (0..n)
        .map(|index| {
            let angle = TAU * index as f64 / n as f64;
            let (sin, cos) = angle.sin_cos();
            AnomalyNode { index, angle, cos, sin }
        })
        .collect()
}

/// An averaged value and its half-grid error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedValue {
    pub value: f64,
    pub est_error: f64,
}

/// Result of [`converge`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergedValue {
    pub value: f64,
    pub est_error: f64,
    pub grid: QuadratureGrid,
    pub converged: bool,
}

/// Double average of `f(E, E_J)` with the default execution path.
pub fn double_average<F>(f: F, e: f64, e_j: f64, grid: QuadratureGrid) -> Result<AveragedValue>
where
    F: Fn(&AnomalyNode, &AnomalyNode) -> f64 + Sync + Send,
{
    double_average_with(Execution::default(), f, e, e_j, grid)
}

pub fn double_average_with<F>(exec: Execution, f: F, e: f64, e_j: f64, grid: QuadratureGrid) -> Result<AveragedValue>
where
    F: Fn(&AnomalyNode, &AnomalyNode) -> f64 + Sync + Send,
{
    check_eccentricity(e)?;
    check_eccentricity(e_j)?;
    let ast = grid.asteroid_nodes();
    let planet = grid.planet_nodes();
    let w_ast: Vec<f64> = ast.iter().map(|n| 1.0 - e * n.cos).collect();

    let rows = map_range(exec, grid.n_ej, |m| {
        let pn = &planet[m];
        let w_p = 1.0 - e_j * pn.cos;
        let mut full = 0.0;
        let mut half = 0.0;
        for (k, an) in ast.iter().enumerate() {
            let v = f(an, pn);
            if !v.is_finite() {
                return Err(Error::NonFinite { e_index: k, ej_index: m });
            }
            let t = v * w_ast[k];
            full += t;
            if k % 2 == 0 {
                half += t;
            }
        }
        Ok((full * w_p, half * w_p))
    });

    let mut full = 0.0;
    let mut half = 0.0;
    for (m, row) in rows.into_iter().enumerate() {
        let (rf, rh) = row?;
        full += rf;
        if m % 2 == 0 {
            half += rh;
        }
    }
    let n = (grid.n_e * grid.n_ej) as f64;
    let value = full / n;
    let half = half * 4.0 / n;
    Ok(AveragedValue { value, est_error: (value - half).abs() })
}

/// Single-body average `(1/2π) ∫ f(E)(1 − e cos E) dE` on `n` nodes.
pub fn average_over_l<F>(f: F, e: f64, n: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    check_eccentricity(e)?;
    if n == 0 {
        return Err(Error::InvalidParameter("node count must be positive".into()));
    }
    let mut sum = 0.0;
    for node in nodes(n) {
        let v = f(node.angle);
        if !v.is_finite() {
            return Err(Error::NonFinite { e_index: node.index, ej_index: 0 });
        }
        sum += v * (1.0 - e * node.cos);
    }
    Ok(sum / n as f64)
}

/// Doubles the grid from 64² until the half-grid estimate drops below `tol`
/// or the grid reaches 4096². Non-convergence is reported via `converged`.
pub fn converge<F>(f: F, e: f64, e_j: f64, tol: f64) -> Result<ConvergedValue>
where
    F: Fn(&AnomalyNode, &AnomalyNode) -> f64 + Sync + Send,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let mut grid = QuadratureGrid::square(START_GRID)?;
    loop {
        let r = double_average(&f, e, e_j, grid)?;
        let converged = r.est_error < tol;
        if converged || grid.n_e >= MAX_GRID {
            return Ok(ConvergedValue { value: r.value, est_error: r.est_error, grid, converged });
        }
        grid = grid.doubled();
    }
}

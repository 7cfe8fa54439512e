//! Secular dynamics of an asteroid in the double-averaged inner spatial
//! elliptic restricted three-body problem.
//!
//! The planet moves on a fixed ellipse (`a_J = 1`, eccentricity `e_J`) in the
//! `Oxy` plane; the asteroid is a test particle with `a < 1`. Units follow
//! `GM_total = 1`. The crate provides:
//!
//! * [`elements`]: Kepler's equation, orbit geometry, Delaunay and Poincaré
//!   variables.
//! * [`potential`]: the exact interaction kernel `1/Δ`, the indirect term and
//!   the `a³`-truncated expansions.
//! * [`averaging`]: periodic rectangle quadrature over both eccentric
//!   anomalies with the `(1 − e cos E)(1 − e_J cos E_J)` Jacobian.
//! * [`secular`]: the truncated planar secular potential, the apsidal
//!   equilibrium, and closed-form quadratic forms in `(p₃, q₃)`.
//! * [`dynamics`]: planar `(p₂, q₂)` flow, level curves and the linearized
//!   normal flow.
//! * [`oracle`]: brute-force recovery of the same quantities from quadrature.
//!
//! Sign convention: the canonical scalar is the positive kernel `K = 1/Δ`.
//! The secular Hamiltonian used for flows is `H = −K̄`, so figure level values
//! (≈ 1.0029 for the default `a = 0.1`, `e_J = 0.3`) equal `K̄ = −R̄`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod dynamics;
pub mod elements;
mod error;
pub mod fit;
pub mod oracle;
pub mod par;
pub mod potential;
pub mod secular;

pub use error::{Error, Result};

use thiserror::Error;

/// Errors raised by the secular-dynamics kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("eccentricity {0} is outside [0, 1)")]
    Eccentricity(f64),

    #[error("semi-major axis ratio {0} must lie in (0, 1)")]
    SemiMajorAxis(f64),

    #[error("inclination {inc} is outside the domain of the {regime} regime")]
    DegenerateInclination { inc: f64, regime: &'static str },

    #[error("bodies coincide (separation {0:e})")]
    Singular(f64),

    #[error("non-finite integrand value at node (E index {e_index}, E_J index {ej_index})")]
    NonFinite { e_index: usize, ej_index: usize },

    #[error("no equilibrium eccentricity in (0, 0.99) for a = {a}, e_J = {e_j}")]
    NoEquilibrium { a: f64, e_j: f64 },

    #[error("level {level} is not attained (range starts at {min})")]
    LevelNotAttained { level: f64, min: f64 },

    #[error("state left the elliptic domain (p2^2 + q2^2 = {s}, limit {limit})")]
    OutsideDomain { s: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_eccentricity(e: f64) -> Result<()> {
    if (0.0..1.0).contains(&e) {
        Ok(())
    } else {
        Err(Error::Eccentricity(e))
    }
}

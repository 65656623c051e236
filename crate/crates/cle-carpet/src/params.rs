//! Derived constants for a CLE parameter `kappa` in the simple regime.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("kappa = {0} outside the open interval (8/3, 4)")]
    KappaOutOfRange(f64),
}

/// All per-`kappa` constants used by the samplers and estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaParams {
    /// CLE parameter, strictly inside (8/3, 4).
    pub kappa: f64,
    /// Loop-soup intensity (central charge) in (0, 1].
    pub central_charge: f64,
    /// Four-arm exponent `(12 - kappa)(4 + kappa) / (8 kappa)`; exceeds 2
    /// strictly for kappa < 4.
    pub four_arm_exponent: f64,
    /// Carpet Hausdorff dimension `1 + 2/kappa + 3 kappa / 32`.
    pub carpet_dimension: f64,
    /// Monte Carlo prediction `(9 kappa + 8)(kappa + 8) / (128 kappa)` for
    /// the distance exponent.
    pub theta_predicted: f64,
    /// Strict upper bound `1 + kappa / 8` for the distance exponent.
    pub theta_upper: f64,
}

const KAPPA_LO: f64 = 8.0 / 3.0;
const KAPPA_HI: f64 = 4.0;

/// Soup intensity for a given `kappa`, i.e. the inverse of
/// [`kappa_of_central_charge`] in closed form:
/// `c = (3 kappa - 8)(6 - kappa) / (2 kappa)`.
pub fn central_charge(kappa: f64) -> Result<f64, ParamsError> {
    if !(kappa > KAPPA_LO && kappa < KAPPA_HI) {
        return Err(ParamsError::KappaOutOfRange(kappa));
    }
    Ok((3.0 * kappa - 8.0) * (6.0 - kappa) / (2.0 * kappa))
}

/// The CLE parameter produced by soup intensity `c`:
/// `kappa(c) = (13 - c - sqrt((1 - c)(25 - c))) / 3`.
pub fn kappa_of_central_charge(c: f64) -> f64 {
    (13.0 - c - ((1.0 - c) * (25.0 - c)).sqrt()) / 3.0
}

impl KappaParams {
    pub fn new(kappa: f64) -> Result<Self, ParamsError> {
        let central_charge = central_charge(kappa)?;
        Ok(KappaParams {
            kappa,
            central_charge,
            four_arm_exponent: (12.0 - kappa) * (4.0 + kappa) / (8.0 * kappa),
            carpet_dimension: 1.0 + 2.0 / kappa + 3.0 * kappa / 32.0,
            theta_predicted: (9.0 * kappa + 8.0) * (kappa + 8.0) / (128.0 * kappa),
            theta_upper: 1.0 + kappa / 8.0,
        })
    }
}

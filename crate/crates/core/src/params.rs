//! Parameter and share types shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outer-nest elasticity η implied by downstream demand and technology.
///
/// Errors when `ϱ + ν(1−ϱ) ≤ 0`.
pub fn derive_eta(nu: f64, gamma: f64, varrho: f64) -> Result<f64> {
    let den = varrho + nu * (1.0 - varrho);
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::domain(format!(
            "degenerate η denominator ϱ+ν(1−ϱ) = {den}"
        )));
    }
    let foreign_free = varrho - gamma;
    Ok((foreign_free + nu * (1.0 - foreign_free)) / den)
}

/// Exogenous elasticities (ν, γ, ρ, ϱ) and the derived η.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibratedParams {
    pub nu: f64,
    pub gamma: f64,
    pub rho: f64,
    pub varrho: f64,
    pub eta: f64,
}

#[derive(Deserialize)]
struct CalibratedInput {
    nu: f64,
    gamma: f64,
    rho: f64,
    varrho: f64,
}

impl<'de> Deserialize<'de> for CalibratedParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = CalibratedInput::deserialize(d)?;
        CalibratedParams::new(raw.nu, raw.gamma, raw.rho, raw.varrho)
            .map_err(serde::de::Error::custom)
    }
}

impl CalibratedParams {
    pub fn new(nu: f64, gamma: f64, rho: f64, varrho: f64) -> Result<Self> {
        if !(nu > 1.0) || !nu.is_finite() {
            return Err(Error::domain(format!("ν must exceed 1, got {nu}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::domain(format!("γ must lie in (0,1], got {gamma}")));
        }
        if !(varrho > 0.0 && varrho <= 1.0) {
            return Err(Error::domain(format!("ϱ must lie in (0,1], got {varrho}")));
        }
        if gamma > varrho {
            return Err(Error::domain(format!(
                "γ = {gamma} exceeds ϱ = {varrho}; domestic input elasticity would be negative"
            )));
        }
        let eta = derive_eta(nu, gamma, varrho)?;
        if !(eta > 1.0) {
            return Err(Error::domain(format!("η must exceed 1, got {eta}")));
        }
        if !(rho > eta) || !rho.is_finite() {
            return Err(Error::domain(format!("ρ = {rho} must exceed η = {eta}")));
        }
        Ok(Self {
            nu,
            gamma,
            rho,
            varrho,
            eta,
        })
    }

    /// Calibration used for the estimation tables: ν=4, γ=0.5, ρ=10, ϱ=1.
    pub fn baseline() -> Self {
        Self::new(4.0, 0.5, 10.0, 1.0).expect("baseline calibration is valid")
    }

    /// Same technology with the foreign-input elasticity scaled by a product
    /// cost share `alpha` in (0,1].
    pub fn with_cost_share(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain(format!("cost share must lie in (0,1], got {alpha}")));
        }
        if alpha == 1.0 {
            return Ok(*self);
        }
        Self::new(self.nu, self.gamma * alpha, self.rho, self.varrho)
    }

    /// Exponent (η−1)/(ρ−1) appearing in the network-dependence term.
    pub(crate) fn share_exponent(&self) -> f64 {
        (self.eta - 1.0) / (self.rho - 1.0)
    }
}

/// Importer bargaining power φ and exporter returns to scale θ.
///
/// The fields are public so that limit cases (φ = 0 or φ = 1) can be built
/// directly for the closed forms; [`StructuralParams::new`] enforces the
/// interior domain used everywhere else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StructuralInput")]
pub struct StructuralParams {
    pub phi: f64,
    pub theta: f64,
}

#[derive(Deserialize)]
struct StructuralInput {
    phi: f64,
    theta: f64,
}

impl TryFrom<StructuralInput> for StructuralParams {
    type Error = Error;
    fn try_from(raw: StructuralInput) -> Result<Self> {
        StructuralParams::new(raw.phi, raw.theta)
    }
}

impl StructuralParams {
    pub fn new(phi: f64, theta: f64) -> Result<Self> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::domain(format!("φ must lie in (0,1), got {phi}")));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::domain(format!("θ must lie in (0,1], got {theta}")));
        }
        Ok(Self { phi, theta })
    }

    /// Point estimates of the baseline constant-φ specification.
    pub fn baseline() -> Self {
        Self::new(0.827, 0.454).expect("baseline structural parameters are valid")
    }

    /// Odds ratio φ/(1−φ).
    pub fn odds(&self) -> f64 {
        self.phi / (1.0 - self.phi)
    }

    /// Exponent (1−θ)/θ of the exporter cost curve.
    pub fn cost_exponent(&self) -> f64 {
        (1.0 - self.theta) / self.theta
    }
}

/// Supplier share `s` and buyer share `x` of one match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilateralShares {
    pub s: f64,
    pub x: f64,
}

impl BilateralShares {
    pub fn new(s: f64, x: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::domain(format!("supplier share must lie in [0,1], got {s}")));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain(format!("buyer share must lie in [0,1], got {x}")));
        }
        Ok(Self { s, x })
    }
}

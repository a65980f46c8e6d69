use serde::{Deserialize, Serialize};

use super::markup::{bargaining_weight, oligopoly_markup, residual_demand_elasticity};
use crate::error::{Error, Result};
use crate::params::{BilateralShares, CalibratedParams, StructuralParams};

/// Marginal and average cost of the exporter evaluated at the efficient quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostAtQuantity {
    pub marginal_cost: f64,
    pub average_cost: f64,
}

impl CostAtQuantity {
    /// Costs on the curve C(q) = θ k q^{1/θ}: MC = k q^{(1−θ)/θ} and AC = θ·MC.
    pub fn from_cost_curve(k: f64, q: f64, theta: f64) -> Result<Self> {
        if !(k > 0.0 && q > 0.0 && theta > 0.0 && theta <= 1.0) {
            return Err(Error::domain(format!(
                "cost curve needs k>0, q>0, θ in (0,1]; got k={k}, q={q}, θ={theta}"
            )));
        }
        let marginal_cost = k * q.powf((1.0 - theta) / theta);
        Ok(Self {
            marginal_cost,
            average_cost: theta * marginal_cost,
        })
    }
}

/// Per-unit price under a two-part tariff: (1−φ)·MC + φ·AC.
pub fn efficient_bargain_price(cost: CostAtQuantity, phi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::domain(format!("φ must lie in [0,1], got {phi}")));
    }
    Ok((1.0 - phi) * cost.marginal_cost + phi * cost.average_cost)
}

/// Ratios of each party's marginal cost after a failed negotiation to the
/// current one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedOutsideOption {
    pub delta_ci: f64,
    pub delta_cj: f64,
}

impl GeneralizedOutsideOption {
    pub fn new(delta_ci: f64, delta_cj: f64) -> Result<Self> {
        if !(delta_ci > 0.0 && delta_cj > 0.0) {
            return Err(Error::domain(format!(
                "fallback cost ratios must be positive, got ({delta_ci}, {delta_cj})"
            )));
        }
        Ok(Self { delta_ci, delta_cj })
    }

    /// Ratios implied by the baseline outside options, under which the
    /// generalized markup collapses to the baseline one.
    pub fn baseline(shares: BilateralShares, sp: &StructuralParams, p: &CalibratedParams) -> Self {
        let delta_ci = (1.0 - shares.x).powf(sp.cost_exponent());
        let delta_cj = (1.0 - shares.s).powf(p.share_exponent() / (1.0 - p.nu));
        Self { delta_ci, delta_cj }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneralizedMarkup {
    pub mu_oligopoly: f64,
    pub mu_oligopsony: f64,
    pub surplus_loss: f64,
    pub lambda: f64,
    pub omega: f64,
    pub mu: f64,
}

/// Markup when failed negotiations shift each party's marginal cost by the
/// given ratios instead of the baseline share-implied amounts.
pub fn generalized_markup(
    shares: BilateralShares,
    sp: &StructuralParams,
    p: &CalibratedParams,
    g: GeneralizedOutsideOption,
) -> Result<GeneralizedMarkup> {
    if !(g.delta_ci > 0.0 && g.delta_cj > 0.0) {
        return Err(Error::domain("fallback cost ratios must be positive"));
    }
    if !(shares.x > 0.0) {
        return Err(Error::domain("generalized markdown needs a positive buyer share"));
    }
    let surplus_loss = 1.0 - g.delta_cj.powf(1.0 - p.nu);
    if !(surplus_loss > 0.0) {
        return Err(Error::InfeasibleOutsideOption(format!(
            "importer profit loss 1−Δ^(1−ν) = {surplus_loss} is not positive"
        )));
    }
    let mu_oligopsony = sp.theta * (1.0 - g.delta_ci * (1.0 - shares.x)) / shares.x;
    if !(mu_oligopsony > 0.0) {
        return Err(Error::InfeasibleOutsideOption(format!(
            "exporter fallback cost ratio {} leaves no quasi-rent",
            g.delta_ci
        )));
    }
    let eps = residual_demand_elasticity(shares, p);
    let mu_oligopoly = oligopoly_markup(eps)?;
    let lambda = (p.eta - 1.0) * shares.s / (surplus_loss * (eps - 1.0));
    let omega = bargaining_weight(lambda, sp.phi);
    Ok(GeneralizedMarkup {
        mu_oligopoly,
        mu_oligopsony,
        surplus_loss,
        lambda,
        omega,
        mu: (1.0 - omega) * mu_oligopoly + omega * mu_oligopsony,
    })
}

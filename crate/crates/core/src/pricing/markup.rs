use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{BilateralShares, CalibratedParams, StructuralParams};

/// `1 − (1−u)^a` without cancellation for small `u`.
pub(crate) fn one_minus_pow_complement(u: f64, a: f64) -> f64 {
    -(a * (-u).ln_1p()).exp_m1()
}

/// Residual demand elasticity ε = (1−s)ρ + sη faced by the exporter.
pub fn residual_demand_elasticity(shares: BilateralShares, p: &CalibratedParams) -> f64 {
    (1.0 - shares.s) * p.rho + shares.s * p.eta
}

/// Markup ε/(ε−1) when the exporter holds all bargaining power.
pub fn oligopoly_markup(eps: f64) -> Result<f64> {
    if !(eps > 1.0) {
        return Err(Error::UnboundedMarkup(eps));
    }
    Ok(eps / (eps - 1.0))
}

/// Markdown θ(1−(1−x)^{1/θ})/x when the importer holds all bargaining power.
///
/// Equals 1 at `x = 0` (limit) and θ at `x = 1`.
pub fn oligopsony_markdown(x: f64, theta: f64) -> f64 {
    if theta == 1.0 || x == 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return theta;
    }
    theta * one_minus_pow_complement(x, 1.0 / theta) / x
}

/// Outside-option ratio λ and its cost-exposure and network-dependence factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaComponents {
    /// λ^C = (η−1)s/(ε−1).
    pub cost_exposure: f64,
    /// λ^N = 1/(1−(1−s)^{(η−1)/(ρ−1)}); infinite at s = 0.
    pub network_dependence: f64,
    /// λ = λ^C·λ^N, equal to 1 in both share limits.
    pub lambda: f64,
}

pub fn lambda_components(shares: BilateralShares, p: &CalibratedParams) -> LambdaComponents {
    let s = shares.s;
    let eps = residual_demand_elasticity(shares, p);
    let cost_exposure = (p.eta - 1.0) * s / (eps - 1.0);
    if s == 0.0 {
        return LambdaComponents {
            cost_exposure,
            network_dependence: f64::INFINITY,
            lambda: 1.0,
        };
    }
    let denom = one_minus_pow_complement(s, p.share_exponent());
    LambdaComponents {
        cost_exposure,
        network_dependence: 1.0 / denom,
        lambda: cost_exposure / denom,
    }
}

/// Effective bargaining weight ω = rλ/(1+rλ) with r = φ/(1−φ).
pub fn bargaining_weight(lambda: f64, phi: f64) -> f64 {
    if phi <= 0.0 {
        return 0.0;
    }
    if phi >= 1.0 {
        return 1.0;
    }
    let z = phi / (1.0 - phi) * lambda;
    z / (1.0 + z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkupDecomposition {
    pub mu_oligopoly: f64,
    pub mu_oligopsony: f64,
    pub lambda: f64,
    pub lambda_cost_exposure: f64,
    pub lambda_network_dependence: f64,
    pub omega: f64,
    pub mu: f64,
}

/// Bilateral markup μ = (1−ω)μ^oligopoly + ωμ^oligopsony.
pub fn bilateral_markup(
    shares: BilateralShares,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<MarkupDecomposition> {
    let eps = residual_demand_elasticity(shares, p);
    let mu_oligopoly = oligopoly_markup(eps)?;
    let mu_oligopsony = oligopsony_markdown(shares.x, sp.theta);
    let lc = lambda_components(shares, p);
    let omega = bargaining_weight(lc.lambda, sp.phi);
    Ok(MarkupDecomposition {
        mu_oligopoly,
        mu_oligopsony,
        lambda: lc.lambda,
        lambda_cost_exposure: lc.cost_exposure,
        lambda_network_dependence: lc.network_dependence,
        omega,
        mu: (1.0 - omega) * mu_oligopoly + omega * mu_oligopsony,
    })
}

use serde::Serialize;

use super::markup::{
    bilateral_markup, one_minus_pow_complement, residual_demand_elasticity, MarkupDecomposition,
};
use crate::error::{Error, Result};
use crate::params::{BilateralShares, CalibratedParams, StructuralParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElasticityDecomposition {
    pub epsilon: f64,
    pub gamma_oligopoly: f64,
    pub gamma_oligopsony: f64,
    pub gamma_omega: f64,
    pub omega_gamma: f64,
    pub markup_elasticity: f64,
    pub cost_elasticity: f64,
    pub passthrough: f64,
    pub passthrough_markup_only: f64,
    pub passthrough_cost_only: f64,
    pub markup: MarkupDecomposition,
}

/// a·s·(1−s)^a / (1−(1−s)^a) with a = (η−1)/(ρ−1); tends to 1 as s → 0.
fn network_term(s: f64, p: &CalibratedParams) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let a = p.share_exponent();
    let tail = (a * (-s).ln_1p()).exp();
    a * s * tail / one_minus_pow_complement(s, a)
}

/// (1−s)·dlnλ/dln s, finite on the closed unit interval.
fn lambda_slope_scaled(s: f64, p: &CalibratedParams) -> f64 {
    let eps = residual_demand_elasticity(BilateralShares { s, x: 0.0 }, p);
    (1.0 - s) * (1.0 - (eps - p.rho) / (eps - 1.0)) - network_term(s, p)
}

/// dlnλ/dln s; diverges as s → 1.
pub fn lambda_share_elasticity(shares: BilateralShares, p: &CalibratedParams) -> f64 {
    if shares.s >= 1.0 {
        return f64::NEG_INFINITY;
    }
    lambda_slope_scaled(shares.s, p) / (1.0 - shares.s)
}

/// Elasticity dlnμ^oligopsony/dln x of the markdown; zero at x = 0 and for θ = 1.
fn markdown_slope(x: f64, theta: f64) -> f64 {
    if theta == 1.0 || x == 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return -1.0;
    }
    let a = 1.0 / theta;
    if x < 1e-6 {
        let b = a - 1.0;
        return -b * x / 2.0 + (b * (a - 2.0) / 3.0 - b * b / 4.0) * x * x;
    }
    let lead = x * ((a - 1.0) * (-x).ln_1p()).exp();
    lead / (theta * one_minus_pow_complement(x, a)) - 1.0
}

/// Γ^oligopoly = (ρ−ε)(ρ−1)(1−s)/(ε(ε−1)) ≥ 0.
pub fn gamma_oligopoly(shares: BilateralShares, p: &CalibratedParams) -> Result<f64> {
    let eps = residual_demand_elasticity(shares, p);
    if !(eps > 1.0) {
        return Err(Error::UnboundedMarkup(eps));
    }
    Ok((p.rho - eps) / (eps * (eps - 1.0)) * (p.rho - 1.0) * (1.0 - shares.s))
}

/// Γ^oligopsony = (dlnμ^oligopsony/dln x)(1−x)ε ≤ 0.
pub fn gamma_oligopsony(
    shares: BilateralShares,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> f64 {
    let eps = residual_demand_elasticity(shares, p);
    markdown_slope(shares.x, sp.theta) * (1.0 - shares.x) * eps
}

fn gamma_omega_at(omega: f64, shares: BilateralShares, p: &CalibratedParams) -> f64 {
    lambda_slope_scaled(shares.s, p) * (1.0 - omega) * (p.rho - 1.0)
}

/// Γ^ω = −dlnω/dln p = (dlnλ/dln s)(1−ω)(ρ−1)(1−s).
pub fn gamma_omega(
    shares: BilateralShares,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<f64> {
    let m = bilateral_markup(shares, sp, p)?;
    Ok(gamma_omega_at(m.omega, shares, p))
}

/// Λ = (1−θ)/θ · x · ε.
pub fn cost_elasticity(shares: BilateralShares, sp: &StructuralParams, p: &CalibratedParams) -> f64 {
    if sp.theta == 1.0 {
        return 0.0;
    }
    sp.cost_exponent() * shares.x * residual_demand_elasticity(shares, p)
}

/// Composed markup elasticity Γ.
pub fn markup_elasticity(
    shares: BilateralShares,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<f64> {
    Ok(passthrough(shares, sp, p)?.markup_elasticity)
}

/// Γ written with the unreduced convex weights (1−ω)μ^oligopoly/μ and ωμ^oligopsony/μ.
pub fn markup_elasticity_unreduced(
    shares: BilateralShares,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<f64> {
    let m = bilateral_markup(shares, sp, p)?;
    let g_oly = gamma_oligopoly(shares, p)?;
    let g_osy = gamma_oligopsony(shares, sp, p);
    let g_w = gamma_omega_at(m.omega, shares, p);
    Ok((1.0 - m.omega) * m.mu_oligopoly / m.mu * g_oly
        + m.omega * m.mu_oligopsony / m.mu * g_osy
        + m.omega * (m.mu_oligopsony - m.mu_oligopoly) / m.mu * g_w)
}

fn reciprocal(den: f64) -> Result<f64> {
    if !(den > 0.0) {
        return Err(Error::SingularPassthrough(den));
    }
    Ok(1.0 / den)
}

/// Channel-only pass-through; NaN when the single-channel denominator is not positive.
fn channel_reciprocal(den: f64) -> f64 {
    if den > 0.0 {
        1.0 / den
    } else {
        f64::NAN
    }
}

/// Pass-through Φ = 1/(1+Γ+Λ) together with every component.
///
/// Errors when 1+Γ+Λ ≤ 0. The channel-only variants 1/(1+Γ) and 1/(1+Λ) are
/// set to NaN instead when their own denominator is not positive, which
/// happens for 1+Γ under strong buyer power and decreasing returns.
pub fn passthrough(
    shares: BilateralShares,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<ElasticityDecomposition> {
    let markup = bilateral_markup(shares, sp, p)?;
    let epsilon = residual_demand_elasticity(shares, p);
    let gamma_oligopoly = gamma_oligopoly(shares, p)?;
    let gamma_oligopsony = gamma_oligopsony(shares, sp, p);
    let gamma_omega = gamma_omega_at(markup.omega, shares, p);
    let omega_gamma = markup.omega * markup.mu_oligopsony / markup.mu;
    let markup_elasticity = (1.0 - omega_gamma) * gamma_oligopoly
        + omega_gamma * gamma_oligopsony
        + (1.0 - markup.mu_oligopoly / markup.mu) * gamma_omega;
    let cost_elasticity = cost_elasticity(shares, sp, p);
    Ok(ElasticityDecomposition {
        epsilon,
        gamma_oligopoly,
        gamma_oligopsony,
        gamma_omega,
        omega_gamma,
        markup_elasticity,
        cost_elasticity,
        passthrough: reciprocal(1.0 + markup_elasticity + cost_elasticity)?,
        passthrough_markup_only: channel_reciprocal(1.0 + markup_elasticity),
        passthrough_cost_only: channel_reciprocal(1.0 + cost_elasticity),
        markup,
    })
}

/// Partial elasticities of the bilateral markup with respect to each share,
/// holding the other share fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShareElasticities {
    /// ∂lnμ/∂ln s; infinite at s = 1 when φ is interior.
    pub wrt_s: f64,
    /// (1−s)·∂lnμ/∂ln s, finite everywhere.
    pub wrt_s_scaled: f64,
    /// ∂lnμ/∂ln x.
    pub wrt_x: f64,
}

pub fn share_elasticities(
    shares: BilateralShares,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<ShareElasticities> {
    let m = bilateral_markup(shares, sp, p)?;
    let eps = residual_demand_elasticity(shares, p);
    let oly_slope = (p.rho - eps) / (eps * (eps - 1.0));
    let weight_term = m.omega * (1.0 - m.omega) * (m.mu_oligopsony - m.mu_oligopoly) / m.mu;
    let oly_weight = (1.0 - m.omega) * m.mu_oligopoly / m.mu;
    let s = shares.s;
    let wrt_s_scaled = oly_weight * oly_slope * (1.0 - s) + weight_term * lambda_slope_scaled(s, p);
    let wrt_s = if s < 1.0 {
        wrt_s_scaled / (1.0 - s)
    } else if weight_term == 0.0 {
        oly_weight * oly_slope
    } else {
        f64::INFINITY.copysign(-weight_term)
    };
    let wrt_x = m.omega * m.mu_oligopsony / m.mu * markdown_slope(shares.x, sp.theta);
    Ok(ShareElasticities {
        wrt_s,
        wrt_s_scaled,
        wrt_x,
    })
}

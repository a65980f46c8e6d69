use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::moments::{MatchSide, PairMoment};
use crate::error::{Error, Result};
use crate::params::{BilateralShares, CalibratedParams};
use crate::pricing::{lambda_components, oligopoly_markup, oligopsony_markdown, residual_demand_elasticity};

/// Covariates available for the bargaining-power index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Longevity,
    LnTransactions,
    MultiProduct,
    LnOutsideOption,
}

impl Covariate {
    pub const ALL: [Covariate; 4] = [
        Covariate::Longevity,
        Covariate::LnTransactions,
        Covariate::MultiProduct,
        Covariate::LnOutsideOption,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Covariate::Longevity => "longevity",
            Covariate::LnTransactions => "ln_transactions",
            Covariate::MultiProduct => "multi_product",
            Covariate::LnOutsideOption => "ln_outside_option",
        }
    }
}

/// Covariates entering φ_ij = logistic(X_ij κ); an intercept is always included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSpec {
    pub covariates: Vec<Covariate>,
}

impl KappaSpec {
    pub fn all() -> Self {
        Self {
            covariates: Covariate::ALL.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.covariates.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Intercept followed by the selected covariates of one match.
    pub fn design(&self, raw: &[f64; 4]) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.covariates.iter().map(|c| raw[c.index()]))
            .collect()
    }

    pub fn names(&self) -> Vec<String> {
        std::iter::once("kappa_constant".to_string())
            .chain(self.covariates.iter().map(|c| format!("kappa_{}", c.name())))
            .collect()
    }
}

/// How importer bargaining power is parameterized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiSpec {
    /// Constant φ estimated directly.
    Direct,
    /// Constant φ estimated through φ̄ = ln(φ/(1−φ)).
    Logit,
    /// Match-specific φ_ij = logistic(X_ij κ).
    Logistic(KappaSpec),
}

/// exp(z)/(1+exp(z)) without overflow for large |z|.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bargaining power logistic(x·κ) of one covariate row (intercept included in `x`).
pub fn logistic_phi(x: &[f64], kappa: &[f64]) -> f64 {
    logistic(x.iter().zip(kappa).map(|(a, b)| a * b).sum())
}

/// Search box and multi-start settings shared by the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    /// Box for φ; the logit parameterization uses its image.
    pub phi_bounds: (f64, f64),
    pub theta_bounds: (f64, f64),
    /// Box [−b, b] for every κ coefficient.
    pub kappa_bound: f64,
    pub n_starts: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            phi_bounds: (0.01, 0.99),
            theta_bounds: (0.01, 1.0),
            kappa_bound: 20.0,
            n_starts: 8,
        }
    }
}

impl EstimatorOptions {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.phi_bounds;
        let (c, d) = self.theta_bounds;
        if !(0.0 < a && a < b && b < 1.0) {
            return Err(Error::Config(format!("φ bounds ({a}, {b}) must satisfy 0 < lo < hi < 1")));
        }
        if !(0.0 < c && c <= d && d <= 1.0) {
            return Err(Error::Config(format!("θ bounds ({c}, {d}) must satisfy 0 < lo ≤ hi ≤ 1")));
        }
        if !(self.kappa_bound > 0.0) || self.n_starts == 0 {
            return Err(Error::Config("kappa_bound and n_starts must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter layout: the φ block, then θ unless it is fixed.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ModelSpec {
    pub phi: PhiSpec,
    pub fixed_theta: Option<f64>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl ModelSpec {
    pub fn n_phi(&self) -> usize {
        match &self.phi {
            PhiSpec::Direct | PhiSpec::Logit => 1,
            PhiSpec::Logistic(k) => k.len(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_phi() + usize::from(self.fixed_theta.is_none())
    }

    pub fn names(&self) -> Vec<String> {
        let mut n = match &self.phi {
            PhiSpec::Direct => vec!["phi".to_string()],
            PhiSpec::Logit => vec!["phi_bar".to_string()],
            PhiSpec::Logistic(k) => k.names(),
        };
        if self.fixed_theta.is_none() {
            n.push("theta".into());
        }
        n
    }

    pub fn bounds(&self, o: &EstimatorOptions) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut hi) = match &self.phi {
            PhiSpec::Direct => (vec![o.phi_bounds.0], vec![o.phi_bounds.1]),
            PhiSpec::Logit => (vec![logit(o.phi_bounds.0)], vec![logit(o.phi_bounds.1)]),
            PhiSpec::Logistic(k) => (vec![-o.kappa_bound; k.len()], vec![o.kappa_bound; k.len()]),
        };
        if self.fixed_theta.is_none() {
            lo.push(o.theta_bounds.0);
            hi.push(o.theta_bounds.1);
        }
        (lo, hi)
    }

    pub fn theta(&self, params: &[f64]) -> f64 {
        self.fixed_theta.unwrap_or_else(|| params[self.n_phi()])
    }

    /// Log odds ln(φ/(1−φ)) for a match with design row `x`.
    pub fn log_odds(&self, params: &[f64], x: &[f64]) -> f64 {
        match &self.phi {
            PhiSpec::Direct => logit(params[0]),
            PhiSpec::Logit => params[0],
            PhiSpec::Logistic(_) => x.iter().zip(params).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn design(&self, side: &MatchSide) -> Vec<f64> {
        match &self.phi {
            PhiSpec::Logistic(k) => k.design(&side.covariates),
            _ => Vec::new(),
        }
    }
}

/// Share-dependent pieces of the markup that do not involve (φ, θ).
#[derive(Debug, Clone)]
struct SideTerms {
    mu_oligopoly: f64,
    ln_lambda: f64,
    x: f64,
    design: Vec<f64>,
}

impl SideTerms {
    fn new(side: &MatchSide, spec: &ModelSpec, p: &CalibratedParams) -> Result<Self> {
        let pc = p.with_cost_share(side.alpha)?;
        let sh = BilateralShares::new(side.s, side.x)?;
        Ok(Self {
            mu_oligopoly: oligopoly_markup(residual_demand_elasticity(sh, &pc))?,
            ln_lambda: lambda_components(sh, &pc).lambda.ln(),
            x: side.x,
            design: spec.design(side),
        })
    }

    /// ln μ with ω = logistic(ln r + ln λ), identical to rλ/(1+rλ).
    fn ln_mu(&self, spec: &ModelSpec, params: &[f64], theta: f64) -> f64 {
        let omega = logistic(spec.log_odds(params, &self.design) + self.ln_lambda);
        ((1.0 - omega) * self.mu_oligopoly + omega * oligopsony_markdown(self.x, theta)).ln()
    }
}

/// Residuals Δp − (ln μ_j − ln μ_ℓ) of a set of moments under one model.
pub(crate) struct GapModel {
    pub spec: ModelSpec,
    sides: Vec<(SideTerms, SideTerms)>,
    gaps: Vec<f64>,
}

const PARALLEL_MIN: usize = 2048;

impl GapModel {
    pub fn new(moments: &[&PairMoment], spec: ModelSpec, p: &CalibratedParams) -> Result<Self> {
        let sides = moments
            .iter()
            .map(|m| Ok((SideTerms::new(&m.j, &spec, p)?, SideTerms::new(&m.l, &spec, p)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            sides,
            gaps: moments.iter().map(|m| m.gap).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    fn residual(&self, k: usize, params: &[f64], theta: f64) -> f64 {
        let (a, b) = &self.sides[k];
        self.gaps[k] - (a.ln_mu(&self.spec, params, theta) - b.ln_mu(&self.spec, params, theta))
    }

    pub fn residuals(&self, params: &[f64]) -> Vec<f64> {
        let theta = self.spec.theta(params);
        if self.len() >= PARALLEL_MIN {
            (0..self.len()).into_par_iter().map(|k| self.residual(k, params, theta)).collect()
        } else {
            (0..self.len()).map(|k| self.residual(k, params, theta)).collect()
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::StructuralParams;
    use crate::pricing::bilateral_markup;

    fn side(s: f64, x: f64, alpha: f64, cov: [f64; 4]) -> MatchSide {
        MatchSide {
            importer: "m".into(),
            ln_price: 0.0,
            s,
            x,
            alpha,
            covariates: cov,
        }
    }

    #[test]
    fn logistic_is_stable_and_symmetric() {
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(logistic(800.0), 1.0);
        assert_eq!(logistic(-800.0), 0.0);
        assert!((logistic(2.0) + logistic(-2.0) - 1.0).abs() <= f64::EPSILON);
        assert_eq!(logistic_phi(&[1.0, 3.0], &[0.0, 0.0]), 0.5);
    }

    #[test]
    fn published_kappa_gives_interior_bargaining_power() {
        // Constant, longevity, transactions, multi-product, lagged outside option.
        let kappa = [4.118, -0.360, -0.264, -0.180, -0.235];
        let k = KappaSpec::all();
        let x = k.design(&[(6.0f64).ln(), (12.0f64).ln(), 1.0, 0.4]);
        let phi = logistic_phi(&x, &kappa);
        assert!(phi > 0.0 && phi < 1.0);
        let z: f64 = x.iter().zip(&kappa).map(|(a, b)| a * b).sum();
        assert!((phi - z.exp() / (1.0 + z.exp())).abs() < 1e-15);
    }

    #[test]
    fn side_markup_matches_pricing_core() {
        let p = CalibratedParams::baseline();
        for (s, x, alpha) in [(0.3, 0.2, 1.0), (0.9, 0.05, 0.6), (0.01, 0.99, 1.0), (0.5, 0.5, 0.3)] {
            for (phi, theta) in [(0.827, 0.454), (0.2, 1.0), (0.999, 0.05)] {
                let sp = StructuralParams::new(phi, theta).unwrap();
                let pc = p.with_cost_share(alpha).unwrap();
                let mu = bilateral_markup(BilateralShares::new(s, x).unwrap(), &sp, &pc).unwrap().mu;
                for spec in [PhiSpec::Direct, PhiSpec::Logit] {
                    let ms = ModelSpec { phi: spec.clone(), fixed_theta: None };
                    let t = SideTerms::new(&side(s, x, alpha, [f64::NAN; 4]), &ms, &p).unwrap();
                    let par = if spec == PhiSpec::Direct { phi } else { logit(phi) };
                    assert!((t.ln_mu(&ms, &[par, theta], theta) - mu.ln()).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn layout_and_bounds() {
        let o = EstimatorOptions::default();
        let m = ModelSpec {
            phi: PhiSpec::Logistic(KappaSpec {
                covariates: vec![Covariate::Longevity],
            }),
            fixed_theta: None,
        };
        assert_eq!(m.names(), vec!["kappa_constant", "kappa_longevity", "theta"]);
        assert_eq!(m.bounds(&o).0, vec![-20.0, -20.0, 0.01]);
        let r = ModelSpec {
            phi: PhiSpec::Logit,
            fixed_theta: Some(1.0),
        };
        assert_eq!(r.n_params(), 1);
        assert_eq!(r.theta(&[0.3]), 1.0);
        let (lo, hi) = r.bounds(&o);
        assert!((logistic(lo[0]) - 0.01).abs() < 1e-15 && (logistic(hi[0]) - 0.99).abs() < 1e-15);
    }
}

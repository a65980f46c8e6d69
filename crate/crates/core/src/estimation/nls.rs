use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::{EstimatorOptions, GapModel, ModelSpec, PhiSpec};
use super::moments::PairMoment;
use super::optimize::{halton_starts, jacobian, least_squares, OptimReport};
use super::result::{implied_phi_stats, EstimateResult, Method, PhiStats};
use crate::error::{Error, Result};
use crate::params::CalibratedParams;
use crate::rootfind::golden_min;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlsConfig {
    pub phi: PhiSpec,
    pub options: EstimatorOptions,
}

impl Default for NlsConfig {
    fn default() -> Self {
        Self {
            phi: PhiSpec::Direct,
            options: EstimatorOptions::default(),
        }
    }
}

/// Moments whose covariates are finite when the specification needs them.
pub(super) fn usable<'a>(moments: &'a [PairMoment], spec: &ModelSpec) -> (Vec<&'a PairMoment>, usize) {
    let kept: Vec<&PairMoment> = moments
        .iter()
        .filter(|m| {
            m.gap.is_finite()
                && spec.design(&m.j).iter().all(|v| v.is_finite())
                && spec.design(&m.l).iter().all(|v| v.is_finite())
        })
        .collect();
    let dropped = moments.len() - kept.len();
    (kept, dropped)
}

/// Design rows of every distinct match-year among the moments.
pub(super) fn unique_designs(moments: &[&PairMoment], spec: &ModelSpec) -> Vec<Vec<f64>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for m in moments {
        for side in [&m.j, &m.l] {
            if seen.insert((side.importer.as_str(), m.exporter.as_str(), m.product.as_str(), m.year)) {
                out.push(spec.design(side));
            }
        }
    }
    out
}

pub(super) struct Fitted {
    pub params: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub objective: f64,
    pub report: OptimReport,
}

pub(super) fn assemble(
    method: Method,
    spec: &ModelSpec,
    fit: Fitted,
    moments: &[&PairMoment],
    dropped_moments: usize,
) -> Result<EstimateResult> {
    let theta = spec.theta(&fit.params);
    let k = fit.params.len();
    let theta_se = if spec.fixed_theta.is_some() {
        f64::NAN
    } else {
        fit.cov[(k - 1, k - 1)].max(0.0).sqrt()
    };
    let mut res = EstimateResult {
        method,
        phi_spec: spec.phi.clone(),
        names: spec.names(),
        se: (0..k).map(|d| fit.cov[(d, d)].max(0.0).sqrt()).collect(),
        cov: fit.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        estimates: fit.params,
        theta,
        theta_se,
        theta_fixed: spec.fixed_theta.is_some(),
        implied_phi: PhiStats {
            mean: f64::NAN,
            median: f64::NAN,
            se_mean: f64::NAN,
            se_median: f64::NAN,
            n: 0,
        },
        objective: fit.objective,
        j_stat: None,
        j_df: None,
        n_moments: moments.len(),
        dropped_moments,
        degenerate_moments: moments.iter().filter(|m| m.degenerate).count(),
        instruments: Vec::new(),
        dropped_instruments: Vec::new(),
        weighting: None,
        diagnostics: fit.report,
    };
    res.implied_phi = implied_phi_stats(&res, &unique_designs(moments, spec))?;
    Ok(res)
}

/// Heteroskedasticity-robust sandwich (J'J)⁻¹(Σ r²·JᵢJᵢ')(J'J)⁻¹ for ‖r‖².
fn nls_covariance(model: &GapModel, params: &[f64], lo: &[f64], hi: &[f64]) -> DMatrix<f64> {
    let f = |x: &[f64]| model.residuals(x);
    let j = jacobian(&f, params, lo, hi);
    let r = model.residuals(params);
    let k = params.len();
    let Some(bread) = (j.transpose() * &j).try_inverse() else {
        return DMatrix::from_element(k, k, f64::NAN);
    };
    let mut scores = j.clone();
    for (i, mut row) in scores.row_iter_mut().enumerate() {
        row *= r[i];
    }
    let meat = scores.transpose() * &scores;
    &bread * meat * &bread
}

fn fit_nls(
    moments: &[PairMoment],
    spec: ModelSpec,
    o: &EstimatorOptions,
    p: &CalibratedParams,
    method: Method,
) -> Result<EstimateResult> {
    o.validate()?;
    let (kept, dropped) = usable(moments, &spec);
    if kept.len() < spec.n_params() {
        return Err(Error::Data(format!(
            "{} usable moments for {} parameters",
            kept.len(),
            spec.n_params()
        )));
    }
    let model = GapModel::new(&kept, spec.clone(), p)?;
    let (lo, hi) = spec.bounds(o);
    let f = |x: &[f64]| model.residuals(x);
    let starts = if spec.n_params() == 1 {
        // Coarse grid, golden section inside the best bracket, then polish.
        let cost = |v: f64| f(&[v]).iter().map(|r| r * r).sum::<f64>();
        let grid: Vec<f64> = (0..50).map(|k| lo[0] + (hi[0] - lo[0]) * k as f64 / 49.0).collect();
        let costs: Vec<f64> = grid.iter().map(|&v| cost(v)).collect();
        let b = (0..50).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap_or(0);
        let (a, c) = (grid[b.saturating_sub(1)], grid[(b + 1).min(49)]);
        vec![vec![golden_min(cost, a, c, 1e-10 * (hi[0] - lo[0]))]]
    } else {
        halton_starts(o.n_starts, &lo, &hi)
    };
    let (params, objective, report) = least_squares(&f, &lo, &hi, &starts).ok_or_else(|| Error::NoConvergence {
        what: "nonlinear least squares".into(),
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    let cov = nls_covariance(&model, &params, &lo, &hi);
    assemble(
        method,
        &spec,
        Fitted {
            params,
            cov,
            objective,
            report,
        },
        &kept,
        dropped,
    )
}

/// Minimize Σ[Δp − Δln μ(φ, θ)]² over the box, starting from Halton points
/// rather than any prior value.
pub fn nls_joint(moments: &[PairMoment], cfg: &NlsConfig, p: &CalibratedParams) -> Result<EstimateResult> {
    let spec = ModelSpec {
        phi: cfg.phi.clone(),
        fixed_theta: None,
    };
    fit_nls(moments, spec, &cfg.options, p, Method::Nls)
}

/// The same criterion with constant returns to scale imposed (θ = 1).
pub fn estimate_restricted_theta1(
    moments: &[PairMoment],
    cfg: &NlsConfig,
    p: &CalibratedParams,
) -> Result<EstimateResult> {
    let spec = ModelSpec {
        phi: cfg.phi.clone(),
        fixed_theta: Some(1.0),
    };
    fit_nls(moments, spec, &cfg.options, p, Method::NlsThetaOne)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::build_pair_moments;
    use crate::panel::{generate_montecarlo_blocks, MonteCarloDesign};
    use crate::params::StructuralParams;

    fn design(noise: f64, truth: StructuralParams, seed: u64) -> Vec<PairMoment> {
        let d = MonteCarloDesign {
            n_replicas: 1,
            cost_noise_sd: noise,
            truth,
            ..MonteCarloDesign::paper(seed)
        };
        build_pair_moments(&generate_montecarlo_blocks(&d).unwrap()[0], None)
    }

    #[test]
    fn noiseless_replica_is_recovered_exactly() {
        let p = CalibratedParams::baseline();
        let m = design(0.0, StructuralParams::baseline(), 5);
        assert_eq!(m.len(), 200);
        let r = nls_joint(&m, &NlsConfig::default(), &p).unwrap();
        assert!(r.objective < 1e-12, "objective {}", r.objective);
        assert!((r.estimates[0] - 0.827).abs() < 1e-6, "{:?}", r.estimates);
        assert!((r.theta - 0.454).abs() < 1e-6);
        assert!(r.diagnostics.converged);
    }

    #[test]
    fn direct_and_logit_parameterizations_agree() {
        let p = CalibratedParams::baseline();
        let m = design(0.05, StructuralParams::baseline(), 6);
        let a = nls_joint(&m, &NlsConfig::default(), &p).unwrap();
        let b = nls_joint(
            &m,
            &NlsConfig {
                phi: PhiSpec::Logit,
                ..NlsConfig::default()
            },
            &p,
        )
        .unwrap();
        assert!((a.phi() - b.phi()).abs() < 1e-8, "{} vs {}", a.phi(), b.phi());
        assert!((a.theta - b.theta).abs() < 1e-8);
    }

    #[test]
    fn constant_returns_restriction_fits_worse_and_is_exact_when_true() {
        let p = CalibratedParams::baseline();
        let m = design(0.05, StructuralParams::baseline(), 7);
        let r = estimate_restricted_theta1(&m, &NlsConfig::default(), &p).unwrap();
        let full = nls_joint(&m, &NlsConfig::default(), &p).unwrap();
        assert!(r.theta_fixed && r.theta == 1.0);
        assert_eq!(r.names, vec!["phi"]);
        assert!(r.theta_se.is_nan());
        assert!(r.objective >= full.objective);
        let crs = StructuralParams::new(0.6, 1.0).unwrap();
        let r = estimate_restricted_theta1(&design(0.0, crs, 8), &NlsConfig::default(), &p).unwrap();
        assert!((r.phi() - 0.6).abs() < 1e-6);
    }
}

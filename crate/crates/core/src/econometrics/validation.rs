use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::regression::{ols, tsls, FitResult, RegressionSpec, Table};
use crate::error::{Error, Result};
use crate::panel::{aggregate_annual, compute_shares, TransactionRecord};
use crate::params::{BilateralShares, CalibratedParams, StructuralParams};
use crate::pricing::passthrough;

/// Year-on-year change of one match, with shares, cost share and import
/// value measured in the earlier year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeObs {
    pub importer: String,
    pub exporter: String,
    pub product: String,
    pub country: String,
    pub year: i32,
    pub dlnp_excl: f64,
    pub dlnp_incl: f64,
    pub dlnq: f64,
    /// Δln(1+τ).
    pub dln_tariff: f64,
    pub s: f64,
    pub x: f64,
    pub alpha: f64,
    pub value_lag: f64,
}

/// Changes between consecutive years of every match in `records`.
pub fn build_changes(records: &[TransactionRecord]) -> Result<Vec<ChangeObs>> {
    let annual = aggregate_annual(records)?;
    let (shares, _) = compute_shares(&annual)?;
    let share_of: HashMap<(&str, &str, &str, i32), (f64, f64, f64)> = shares
        .rows
        .iter()
        .map(|r| ((r.importer.as_str(), r.exporter.as_str(), r.product.as_str(), r.year), (r.s, r.x, r.alpha)))
        .collect();
    let by_key: HashMap<(&str, &str, &str, i32), &TransactionRecord> = annual
        .iter()
        .map(|r| ((r.importer.as_str(), r.exporter.as_str(), r.product.as_str(), r.year), r))
        .collect();
    let mut out = Vec::new();
    for r in &annual {
        let prev_key = (r.importer.as_str(), r.exporter.as_str(), r.product.as_str(), r.year - 1);
        let (Some(prev), Some(&(s, x, alpha))) = (by_key.get(&prev_key), share_of.get(&prev_key)) else {
            continue;
        };
        let dlnp_excl = r.unit_value().ln() - prev.unit_value().ln();
        let dln_tariff = r.tariff.ln_1p() - prev.tariff.ln_1p();
        out.push(ChangeObs {
            importer: r.importer.clone(),
            exporter: r.exporter.clone(),
            product: r.product.clone(),
            country: r.country.clone(),
            year: r.year,
            dlnp_excl,
            dlnp_incl: dlnp_excl + dln_tariff,
            dlnq: r.quantity.ln() - prev.quantity.ln(),
            dln_tariff,
            s,
            x,
            alpha,
            value_lag: prev.value,
        });
    }
    Ok(out)
}

/// Model-predicted responses of one match to its tariff change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedChange {
    pub phi: f64,
    /// 1/(1+Γ); NaN when 1+Γ ≤ 0.
    pub phi_markup_only: f64,
    /// 1/(1+Λ).
    pub phi_cost_only: f64,
    pub markup_elasticity: f64,
    pub cost_elasticity: f64,
    pub epsilon: f64,
    /// Duty-inclusive price change Φ·Δln(1+τ).
    pub dlnp: f64,
    pub dlnp_excl: f64,
    pub dlnq: f64,
    pub dlnr: f64,
}

/// Φ·Δln(1+τ) and the implied quantity and sales changes at the lagged
/// shares, with the foreign-input elasticity scaled by each match's cost share.
pub fn predicted_changes(
    obs: &[ChangeObs],
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<Vec<PredictedChange>> {
    obs.iter()
        .map(|o| {
            let pc = p.with_cost_share(o.alpha)?;
            let e = passthrough(BilateralShares::new(o.s, o.x)?, sp, &pc)?;
            let dlnp = e.passthrough * o.dln_tariff;
            Ok(PredictedChange {
                phi: e.passthrough,
                phi_markup_only: e.passthrough_markup_only,
                phi_cost_only: e.passthrough_cost_only,
                markup_elasticity: e.markup_elasticity,
                cost_elasticity: e.cost_elasticity,
                epsilon: e.epsilon,
                dlnp,
                dlnp_excl: dlnp - o.dln_tariff,
                dlnq: -e.epsilon * dlnp,
                dlnr: (1.0 - e.epsilon) * dlnp,
            })
        })
        .collect()
}

/// Regression table with identifiers (`importer`, `exporter`, `product`,
/// `country`, `year`), observed changes and `pred_*` predictions.
pub fn changes_table(obs: &[ChangeObs], pred: &[PredictedChange]) -> Result<Table> {
    if obs.len() != pred.len() {
        return Err(Error::Data(format!(
            "{} observations but {} predictions",
            obs.len(),
            pred.len()
        )));
    }
    let mut t = Table::new();
    let cat = |f: fn(&ChangeObs) -> &str| obs.iter().map(|o| f(o).to_string()).collect::<Vec<_>>();
    t.push_cat("importer", cat(|o| &o.importer))?;
    t.push_cat("exporter", cat(|o| &o.exporter))?;
    t.push_cat("product", cat(|o| &o.product))?;
    t.push_cat("country", cat(|o| &o.country))?;
    let num = |f: fn(&ChangeObs) -> f64| obs.iter().map(f).collect::<Vec<_>>();
    t.push_num("year", num(|o| o.year as f64))?;
    t.push_num("dlnp_incl", num(|o| o.dlnp_incl))?;
    t.push_num("dlnp_excl", num(|o| o.dlnp_excl))?;
    t.push_num("dlnq", num(|o| o.dlnq))?;
    t.push_num("dln_tariff", num(|o| o.dln_tariff))?;
    t.push_num("s", num(|o| o.s))?;
    t.push_num("x", num(|o| o.x))?;
    t.push_num("value_lag", num(|o| o.value_lag))?;
    let pnum = |f: fn(&PredictedChange) -> f64| pred.iter().map(f).collect::<Vec<_>>();
    t.push_num("pred_dlnp_incl", pnum(|p| p.dlnp))?;
    t.push_num("pred_dlnp_excl", pnum(|p| p.dlnp_excl))?;
    t.push_num("pred_dlnq", pnum(|p| p.dlnq))?;
    t.push_num("pred_dlnr", pnum(|p| p.dlnr))?;
    let ex = |f: fn(&PredictedChange) -> f64| {
        pred.iter()
            .zip(obs)
            .map(|(p, o)| (f(p) - 1.0) * o.dln_tariff)
            .collect::<Vec<_>>()
    };
    t.push_num("pred_excl_markup_only", ex(|p| p.phi_markup_only))?;
    t.push_num("pred_excl_cost_only", ex(|p| p.phi_cost_only))?;
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceConvention {
    DutyInclusive,
    DutyExclusive,
}

impl PriceConvention {
    fn suffix(self) -> &'static str {
        match self {
            PriceConvention::DutyInclusive => "incl",
            PriceConvention::DutyExclusive => "excl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationSpec {
    pub convention: PriceConvention,
    pub fixed_effects: Vec<String>,
    pub clusters: Vec<String>,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        Self {
            convention: PriceConvention::DutyInclusive,
            fixed_effects: vec!["product#year".into()],
            clusters: vec!["product#country".into()],
        }
    }
}

/// 2SLS of the observed price change on the predicted one, instrumented by
/// the tariff change. The coefficient is named `pred_dlnp_incl` or
/// `pred_dlnp_excl` and equals one when the model is correct.
pub fn iv_fit_test(obs: &[ChangeObs], pred: &[PredictedChange], spec: &ValidationSpec) -> Result<FitResult> {
    let first = obs.first().map(|o| o.dln_tariff);
    if obs.iter().all(|o| Some(o.dln_tariff) == first) {
        return Err(Error::Data("tariff changes do not vary across observations".into()));
    }
    let t = changes_table(obs, pred)?;
    let sfx = spec.convention.suffix();
    let endog = format!("pred_dlnp_{sfx}");
    let rs = RegressionSpec {
        dependent: format!("dlnp_{sfx}"),
        endogenous: vec![endog],
        instruments: vec!["dln_tariff".into()],
        fixed_effects: spec.fixed_effects.clone(),
        clusters: spec.clusters.clone(),
        ..RegressionSpec::default()
    };
    tsls(&rs, &t)
}

/// Aggregate pass-through of the full model and of each channel alone, and
/// the variance decomposition of Λ+Γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub nobs: usize,
    /// Rows without a finite single-channel pass-through, excluded from every estimate.
    pub dropped_nan_channel: usize,
    pub treated_weight: f64,
    pub passthrough_full: f64,
    pub passthrough_markup_only: f64,
    pub passthrough_cost_only: f64,
    /// Cov(Λ, Λ+Γ)/Var(Λ+Γ).
    pub cost_share: f64,
    /// Cov(Γ, Λ+Γ)/Var(Λ+Γ).
    pub markup_share: f64,
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n
}

/// Import-value-weighted regressions of duty-exclusive predicted changes on
/// Δln(1+τ), absorbing `fixed_effects` (a constant when empty). Aggregate
/// pass-through is one plus the slope.
pub fn aggregate_decomposition(
    obs: &[ChangeObs],
    pred: &[PredictedChange],
    fixed_effects: &[String],
) -> Result<DecompositionReport> {
    let keep: Vec<usize> = (0..obs.len())
        .filter(|&k| pred[k].phi_markup_only.is_finite() && pred[k].phi_cost_only.is_finite())
        .collect();
    let obs_k: Vec<ChangeObs> = keep.iter().map(|&k| obs[k].clone()).collect();
    let pred_k: Vec<PredictedChange> = keep.iter().map(|&k| pred[k]).collect();
    let treated_weight: f64 = obs_k.iter().filter(|o| o.dln_tariff != 0.0).map(|o| o.value_lag).sum();
    if !(treated_weight > 0.0) {
        return Err(Error::Data("no import value on matches with a tariff change".into()));
    }
    let t = changes_table(&obs_k, &pred_k)?;
    let slope = |dep: &str| -> Result<f64> {
        let rs = RegressionSpec {
            fixed_effects: fixed_effects.to_vec(),
            ..RegressionSpec::new(dep, &["dln_tariff"]).weighted("value_lag")
        };
        ols(&rs, &t)?.coefficient("dln_tariff")
    };
    let lambda: Vec<f64> = pred_k.iter().map(|p| p.cost_elasticity).collect();
    let gamma: Vec<f64> = pred_k.iter().map(|p| p.markup_elasticity).collect();
    let total: Vec<f64> = lambda.iter().zip(&gamma).map(|(l, g)| l + g).collect();
    let var = covariance(&total, &total);
    Ok(DecompositionReport {
        nobs: keep.len(),
        dropped_nan_channel: obs.len() - keep.len(),
        treated_weight,
        passthrough_full: 1.0 + slope("pred_dlnp_excl")?,
        passthrough_markup_only: 1.0 + slope("pred_excl_markup_only")?,
        passthrough_cost_only: 1.0 + slope("pred_excl_cost_only")?,
        cost_share: covariance(&lambda, &total) / var,
        markup_share: covariance(&gamma, &total) / var,
    })
}

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use super::config::EstimateMethod;
use super::Context;
use crate::econometrics::{
    aggregate_decomposition, build_changes, iv_fit_test, predicted_changes, ChangeObs, DecompositionReport,
    PredictedChange, ValidationSpec,
};
use crate::error::{Error, Result};
use crate::estimation::{
    build_pair_moments, estimate_restricted_theta1, gmm_estimate, nls_joint, EstimateResult, PhiSpec,
};
use crate::panel::{
    apply_filters, compute_covariates, compute_shares, generate_montecarlo_blocks, generate_panel,
    read_covariates_file, read_transactions_file, write_covariates_file, write_transactions_file, FilterReport,
    MonteCarloDesign, ShareDiagnostics, TransactionRecord,
};
use crate::params::StructuralParams;
use crate::pricing::{heatmap_grid, write_heatmap_csv};

fn create(path: &std::path::Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_csv<T: Serialize>(path: &std::path::Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct HeatmapEntry {
    returns: &'static str,
    regime: &'static str,
    phi: f64,
    theta: f64,
    file: String,
    passthrough_min: f64,
    passthrough_max: f64,
}

pub(super) fn heatmap(ctx: &mut Context) -> Result<()> {
    let h = ctx.cfg.heatmap.clone();
    let p = ctx.cfg.calibrated;
    if !(h.phi > 0.0 && h.phi < 1.0) || !(h.theta > 0.0 && h.theta < 1.0) {
        return Err(Error::Config("heatmap phi and theta must lie in (0,1)".into()));
    }
    let mut regimes = Vec::new();
    for (returns, theta) in [("drs", h.theta), ("crs", 1.0)] {
        for (regime, phi) in [("phi0", 0.0), ("interior", h.phi), ("phi1", 1.0)] {
            regimes.push((returns, regime, StructuralParams { phi, theta }));
        }
    }
    let grids = regimes
        .par_iter()
        .map(|(_, _, sp)| heatmap_grid(sp, &p, h.resolution))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::new();
    for ((returns, regime, sp), rows) in regimes.iter().zip(&grids) {
        let name = format!("heatmap_{returns}_{regime}.csv");
        let path = ctx.wrote(&name);
        write_heatmap_csv(rows, create(&path)?)?;
        let (lo, hi) = rows
            .iter()
            .map(|r| r.phi)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        entries.push(HeatmapEntry {
            returns,
            regime,
            phi: sp.phi,
            theta: sp.theta,
            file: name,
            passthrough_min: lo,
            passthrough_max: hi,
        });
    }
    ctx.write_json("heatmap.json", &entries)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    records: usize,
    matches: usize,
    first_year: i32,
    event_year: i32,
    mean_s: f64,
    mean_x: f64,
    treated_records: usize,
}

pub(super) fn simulate(ctx: &mut Context) -> Result<()> {
    let mut pc = ctx.cfg.simulate.clone();
    pc.structural = ctx.cfg.structural;
    pc.calibrated = ctx.cfg.calibrated;
    pc.seed = ctx.seed;
    let g = generate_panel(&pc)?;
    write_transactions_file(&g.records, ctx.wrote("transactions.csv"))?;
    write_covariates_file(&g.covariates, ctx.wrote("covariates.csv"))?;
    write_csv(&ctx.wrote("truth.csv"), &g.truth)?;
    let (shares, _) = compute_shares(&g.records)?;
    let n = shares.rows.len().max(1) as f64;
    let summary = SimulateSummary {
        records: g.records.len(),
        matches: shares.rows.len(),
        first_year: pc.first_year,
        event_year: pc.event_year(),
        mean_s: shares.rows.iter().map(|r| r.s).sum::<f64>() / n,
        mean_x: shares.rows.iter().map(|r| r.x).sum::<f64>() / n,
        treated_records: g.records.iter().filter(|r| r.tariff > 0.0).count(),
    };
    ctx.write_json("simulate.json", &summary)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EstimateSample {
    input_records: usize,
    filters: FilterReport,
    shares: ShareDiagnostics,
    share_cells: usize,
    pair_moments: usize,
}

fn load_filtered(ctx: &mut Context, input: &Option<PathBuf>) -> Result<(Vec<TransactionRecord>, Vec<TransactionRecord>, FilterReport)> {
    let path = ctx.input(input, "transactions.csv")?;
    let records = read_transactions_file(&path)?;
    let (filtered, report) = apply_filters(&records, &ctx.cfg.estimate.filters)?;
    if filtered.is_empty() {
        return Err(Error::Data(format!("{}: no records survive the filters", path.display())));
    }
    Ok((records, filtered, report))
}

pub(super) fn estimate(ctx: &mut Context) -> Result<()> {
    let sec = ctx.cfg.estimate.clone();
    let p = ctx.cfg.calibrated;
    let (records, filtered, freport) = load_filtered(ctx, &sec.input)?;
    let (panel, sdiag) = compute_shares(&filtered)?;
    let phi_spec = match sec.method {
        EstimateMethod::Gmm => &sec.gmm.phi,
        _ => &sec.nls.phi,
    };
    let covariates = match (phi_spec, &sec.covariates) {
        (PhiSpec::Logistic(_), Some(path)) => {
            let path = ctx.input(&Some(path.clone()), "covariates.csv")?;
            Some(read_covariates_file(path)?)
        }
        (PhiSpec::Logistic(_), None) => Some(compute_covariates(&records)?),
        _ => None,
    };
    let moments = build_pair_moments(&panel, covariates.as_deref());
    let result = match sec.method {
        EstimateMethod::Gmm => gmm_estimate(&moments, &sec.gmm, &p)?,
        EstimateMethod::Nls => nls_joint(&moments, &sec.nls, &p)?,
        EstimateMethod::NlsThetaOne => estimate_restricted_theta1(&moments, &sec.nls, &p)?,
    };
    ctx.write_json("estimate.json", &result)?;
    ctx.write_text("estimate.txt", &result.to_table())?;
    ctx.write_json(
        "estimate_sample.json",
        &EstimateSample {
            input_records: records.len(),
            filters: freport,
            shares: sdiag,
            share_cells: panel.rows.len(),
            pair_moments: moments.len(),
        },
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReplicaRow {
    replica: usize,
    phi: f64,
    theta: f64,
    objective: f64,
    converged: bool,
    phi_at_bound: bool,
    theta_at_bound: bool,
}

#[derive(Debug, Serialize)]
struct Distribution {
    truth: f64,
    mean: f64,
    median: f64,
    sd: f64,
    q05: f64,
    q95: f64,
    share_above_truth: f64,
}

impl Distribution {
    fn of(values: &[f64], truth: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |u: f64| crate::panel::quantile_sorted(&sorted, u);
        Self {
            truth,
            mean,
            median: q(0.5),
            sd,
            q05: q(0.05),
            q95: q(0.95),
            share_above_truth: values.iter().filter(|v| **v > truth).count() as f64 / n,
        }
    }
}

#[derive(Debug, Serialize)]
struct MonteCarloSummary {
    replicas: usize,
    converged: usize,
    restricted: bool,
    phi: Distribution,
    theta: Distribution,
}

#[derive(Debug, Serialize)]
struct HistogramRow {
    parameter: &'static str,
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
}

fn histogram(parameter: &'static str, values: &[f64], bins: usize) -> Vec<HistogramRow> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0; bins];
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramRow {
            parameter,
            bin_lo: lo + k as f64 * width,
            bin_hi: lo + (k + 1) as f64 * width,
            count,
        })
        .collect()
}

pub(super) fn montecarlo(ctx: &mut Context) -> Result<()> {
    let sec = ctx.cfg.montecarlo.clone();
    if sec.bins == 0 {
        return Err(Error::Config("montecarlo bins must be positive".into()));
    }
    let design = MonteCarloDesign {
        n_exporters: sec.n_exporters,
        importers_per_exporter: sec.importers_per_exporter,
        exporters_per_block: sec.exporters_per_block,
        n_replicas: sec.n_replicas,
        truth: sec.truth,
        calibrated: ctx.cfg.calibrated,
        share_law: sec.share_law,
        cost_noise_sd: sec.cost_noise_sd,
        seed: ctx.seed,
    };
    let p = ctx.cfg.calibrated;
    let panels = generate_montecarlo_blocks(&design)?;
    let rows = panels
        .par_iter()
        .enumerate()
        .map(|(replica, panel)| {
            let m = build_pair_moments(panel, None);
            let r = if sec.restricted {
                estimate_restricted_theta1(&m, &sec.nls, &p)?
            } else {
                nls_joint(&m, &sec.nls, &p)?
            };
            let bound = &r.diagnostics.at_bound;
            Ok(ReplicaRow {
                replica,
                phi: r.phi(),
                theta: r.theta,
                objective: r.objective,
                converged: r.diagnostics.converged,
                phi_at_bound: bound.first().copied().unwrap_or(false),
                theta_at_bound: !sec.restricted && bound.last().copied().unwrap_or(false),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(&ctx.wrote("montecarlo_replicas.csv"), &rows)?;
    let phis: Vec<f64> = rows.iter().map(|r| r.phi).collect();
    let thetas: Vec<f64> = rows.iter().map(|r| r.theta).collect();
    let summary = MonteCarloSummary {
        replicas: rows.len(),
        converged: rows.iter().filter(|r| r.converged).count(),
        restricted: sec.restricted,
        phi: Distribution::of(&phis, sec.truth.phi),
        theta: Distribution::of(&thetas, sec.truth.theta),
    };
    ctx.write_json("montecarlo_summary.json", &summary)?;
    let mut hist = histogram("phi", &phis, sec.bins);
    if !sec.restricted {
        hist.extend(histogram("theta", &thetas, sec.bins));
    }
    write_csv(&ctx.wrote("montecarlo_histograms.csv"), &hist)?;
    Ok(())
}

/// Structural parameters for predictions: an estimate file when configured
/// or present in the run directory, otherwise the `structural` section.
fn prediction_params(ctx: &mut Context, configured: &Option<PathBuf>) -> Result<StructuralParams> {
    let path = match configured {
        Some(_) => Some(ctx.input(configured, "estimate.json")?),
        None if ctx.path("estimate.json").is_file() => Some(ctx.input(&None, "estimate.json")?),
        None => None,
    };
    let Some(path) = path else {
        return Ok(ctx.cfg.structural);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let r: EstimateResult =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    StructuralParams::new(r.phi(), r.theta)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct ChangeRow<'a> {
    importer: &'a str,
    exporter: &'a str,
    product: &'a str,
    country: &'a str,
    year: i32,
    dln_tariff: f64,
    dlnp_incl: f64,
    dlnp_excl: f64,
    dlnq: f64,
    s: f64,
    x: f64,
    value_lag: f64,
    passthrough: f64,
    pred_dlnp_incl: f64,
    pred_dlnp_excl: f64,
    pred_dlnq: f64,
    pred_dlnr: f64,
}

fn change_rows<'a>(obs: &'a [ChangeObs], pred: &[PredictedChange]) -> Vec<ChangeRow<'a>> {
    obs.iter()
        .zip(pred)
        .map(|(o, q)| ChangeRow {
            importer: &o.importer,
            exporter: &o.exporter,
            product: &o.product,
            country: &o.country,
            year: o.year,
            dln_tariff: o.dln_tariff,
            dlnp_incl: o.dlnp_incl,
            dlnp_excl: o.dlnp_excl,
            dlnq: o.dlnq,
            s: o.s,
            x: o.x,
            value_lag: o.value_lag,
            passthrough: q.phi,
            pred_dlnp_incl: q.dlnp,
            pred_dlnp_excl: q.dlnp_excl,
            pred_dlnq: q.dlnq,
            pred_dlnr: q.dlnr,
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct VariantFit {
    model: &'static str,
    phi: f64,
    theta: f64,
    beta: f64,
    se: f64,
    /// (β̂ − 1)/se.
    t_vs_one: f64,
    nobs: usize,
    first_stage_f: f64,
}

pub(super) fn validate(ctx: &mut Context) -> Result<()> {
    let sec = ctx.cfg.validate.clone();
    let p = ctx.cfg.calibrated;
    let (_, filtered, _) = load_filtered(ctx, &sec.input)?;
    let sp = prediction_params(ctx, &sec.estimate)?;
    let obs = build_changes(&filtered)?;
    let spec = ValidationSpec {
        convention: sec.convention,
        fixed_effects: sec.fixed_effects.clone(),
        clusters: sec.clusters.clone(),
    };
    let mut models = vec![("baseline", sp)];
    if sec.variants {
        models.push(("phi0_theta1", StructuralParams { phi: 0.0, theta: 1.0 }));
        models.push(("theta1", StructuralParams { phi: sp.phi, theta: 1.0 }));
        models.push(("phi0", StructuralParams { phi: 0.0, theta: sp.theta }));
    }
    let mut fits = Vec::new();
    for (k, (model, params)) in models.iter().enumerate() {
        let pred = predicted_changes(&obs, params, &p)?;
        if k == 0 {
            write_csv(&ctx.wrote("changes.csv"), &change_rows(&obs, &pred))?;
        }
        let fit = iv_fit_test(&obs, &pred, &spec)?;
        fits.push(VariantFit {
            model,
            phi: params.phi,
            theta: params.theta,
            beta: fit.coef[0],
            se: fit.se[0],
            t_vs_one: (fit.coef[0] - 1.0) / fit.se[0],
            nobs: fit.nobs,
            first_stage_f: fit.first_stage.first().map_or(f64::NAN, |f| f.f_stat),
        });
    }
    ctx.write_json("validate.json", &fits)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DecomposeOutput {
    phi: f64,
    theta: f64,
    fixed_effects: Vec<String>,
    report: DecompositionReport,
}

pub(super) fn decompose(ctx: &mut Context) -> Result<()> {
    let sec = ctx.cfg.decompose.clone();
    let p = ctx.cfg.calibrated;
    let (_, filtered, _) = load_filtered(ctx, &sec.input)?;
    let sp = prediction_params(ctx, &sec.estimate)?;
    let obs = build_changes(&filtered)?;
    let pred = predicted_changes(&obs, &sp, &p)?;
    let report = aggregate_decomposition(&obs, &pred, &sec.fixed_effects)?;
    ctx.write_json(
        "decompose.json",
        &DecomposeOutput {
            phi: sp.phi,
            theta: sp.theta,
            fixed_effects: sec.fixed_effects,
            report,
        },
    )?;
    Ok(())
}

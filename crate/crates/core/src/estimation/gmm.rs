use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{EstimatorOptions, GapModel, ModelSpec, PhiSpec};
use super::moments::PairMoment;
use super::nls::{assemble, usable, Fitted};
use super::optimize::{halton_starts, jacobian, least_squares};
use super::result::{EstimateResult, Method};
use crate::econometrics::FixedEffects;
use crate::error::{Error, Result};
use crate::params::CalibratedParams;

/// Instrument for the pair moment conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instrument {
    Constant,
    /// Importers active in the product-year.
    ImporterCount,
    /// Exporters active in the product-year.
    ExporterCount,
    /// Product-year mean of s excluding both focal matches.
    LeaveOutMeanS,
    LeaveOutMedianS,
    LeaveOutMeanX,
    LeaveOutMedianX,
    /// s_j − s_ℓ.
    ShareGapS,
    /// x_j − x_ℓ.
    ShareGapX,
}

impl Instrument {
    pub fn name(self) -> &'static str {
        match self {
            Instrument::Constant => "constant",
            Instrument::ImporterCount => "importer_count",
            Instrument::ExporterCount => "exporter_count",
            Instrument::LeaveOutMeanS => "leave_out_mean_s",
            Instrument::LeaveOutMedianS => "leave_out_median_s",
            Instrument::LeaveOutMeanX => "leave_out_mean_x",
            Instrument::LeaveOutMedianX => "leave_out_median_x",
            Instrument::ShareGapS => "share_gap_s",
            Instrument::ShareGapX => "share_gap_x",
        }
    }

    fn value(self, m: &PairMoment) -> f64 {
        let c = &m.context;
        match self {
            Instrument::Constant => 1.0,
            Instrument::ImporterCount => c.n_importers as f64,
            Instrument::ExporterCount => c.n_exporters as f64,
            Instrument::LeaveOutMeanS => c.mean_s,
            Instrument::LeaveOutMedianS => c.median_s,
            Instrument::LeaveOutMeanX => c.mean_x,
            Instrument::LeaveOutMedianX => c.median_x,
            Instrument::ShareGapS => m.j.s - m.l.s,
            Instrument::ShareGapX => m.j.x - m.l.x,
        }
    }
}

/// Fixed-effect dimension removed from moments and instruments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demean {
    Product,
    Year,
    /// Buyer `j` of the pair.
    Buyer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub instruments: Vec<Instrument>,
    pub demean: Vec<Demean>,
    pub phi: PhiSpec,
    pub fixed_theta: Option<f64>,
    /// Re-estimate with W = Ŝ⁻¹ from first-step residuals.
    pub two_step: bool,
    pub options: EstimatorOptions,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            instruments: vec![
                Instrument::Constant,
                Instrument::ImporterCount,
                Instrument::ExporterCount,
                Instrument::LeaveOutMeanS,
                Instrument::LeaveOutMedianS,
                Instrument::LeaveOutMeanX,
                Instrument::LeaveOutMedianX,
            ],
            demean: Vec::new(),
            phi: PhiSpec::Logit,
            fixed_theta: None,
            two_step: true,
            options: EstimatorOptions::default(),
        }
    }
}

impl GmmConfig {
    /// Product, year and buyer fixed effects removed from the moments.
    pub fn with_fixed_effects(mut self) -> Self {
        self.demean = vec![Demean::Product, Demean::Year, Demean::Buyer];
        self
    }
}

fn fixed_effects(moments: &[&PairMoment], dims: &[Demean]) -> Result<Option<FixedEffects>> {
    if dims.is_empty() {
        return Ok(None);
    }
    let keys: Vec<Vec<String>> = dims
        .iter()
        .map(|d| {
            moments
                .iter()
                .map(|m| match d {
                    Demean::Product => m.product.clone(),
                    Demean::Year => m.year.to_string(),
                    Demean::Buyer => m.j.importer.clone(),
                })
                .collect()
        })
        .collect();
    Ok(Some(FixedEffects::new(&keys)?))
}

struct InstrumentMatrix {
    z: DMatrix<f64>,
    used: Vec<String>,
    dropped: Vec<String>,
}

/// Demean, scale to unit root-mean-square and drop columns that vanish or are
/// collinear with earlier ones.
fn instrument_matrix(moments: &[&PairMoment], list: &[Instrument], fe: Option<&FixedEffects>) -> Result<InstrumentMatrix> {
    let n = moments.len();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let (mut used, mut dropped) = (Vec::new(), Vec::new());
    for &ins in list {
        let mut col: Vec<f64> = moments.iter().map(|m| ins.value(m)).collect();
        let rms0 = (col.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if let Some(fe) = fe {
            fe.demean(&mut col)?;
        }
        let rms = (col.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if !(rms > 1e-10 * rms0) {
            dropped.push(format!("{} (absorbed)", ins.name()));
            continue;
        }
        for v in col.iter_mut() {
            *v /= rms;
        }
        let mut resid = DVector::from_vec(col.clone());
        for b in &basis {
            let proj = b.dot(&resid);
            resid -= b * proj;
        }
        let norm = resid.norm();
        if norm <= 1e-8 * (n as f64).sqrt() {
            dropped.push(format!("{} (collinear)", ins.name()));
            continue;
        }
        basis.push(resid / norm);
        kept.push(col);
        used.push(ins.name().to_string());
    }
    let z = DMatrix::from_fn(n, kept.len(), |i, j| kept[j][i]);
    Ok(InstrumentMatrix { z, used, dropped })
}

/// Ŝ = (1/n) Σ z_k z_k' r_k² on fixed-effect-demeaned residuals.
fn s_matrix(z: &DMatrix<f64>, r: &[f64], fe: Option<&FixedEffects>) -> Result<DMatrix<f64>> {
    let mut r = r.to_vec();
    if let Some(fe) = fe {
        fe.demean(&mut r)?;
    }
    let mut zr = z.clone();
    for (i, mut row) in zr.row_iter_mut().enumerate() {
        row *= r[i];
    }
    Ok(zr.transpose() * zr / r.len() as f64)
}

fn inverse_if_regular(s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = s.clone().symmetric_eigen();
    let hi = eig.eigenvalues.max();
    let lo = eig.eigenvalues.min();
    if !(hi > 0.0) || !(lo > 1e-12 * hi) {
        return None;
    }
    s.clone().try_inverse()
}

/// Two-step GMM on E[z·(Δp − Δln μ)] = 0. The first step uses W = I; the
/// second W = Ŝ⁻¹ from first-step residuals, falling back to the identity
/// when Ŝ is singular or the first step fits exactly. Covariance is the robust GMM sandwich.
pub fn gmm_estimate(moments: &[PairMoment], cfg: &GmmConfig, p: &CalibratedParams) -> Result<EstimateResult> {
    cfg.options.validate()?;
    let spec = ModelSpec {
        phi: cfg.phi.clone(),
        fixed_theta: cfg.fixed_theta,
    };
    let (mut kept, mut dropped) = usable(moments, &spec);
    let before = kept.len();
    kept.retain(|m| cfg.instruments.iter().all(|i| i.value(m).is_finite()));
    dropped += before - kept.len();
    let k = spec.n_params();
    if kept.len() <= k {
        return Err(Error::Data(format!("{} usable moments for {k} parameters", kept.len())));
    }
    let fe = fixed_effects(&kept, &cfg.demean)?;
    let iv = instrument_matrix(&kept, &cfg.instruments, fe.as_ref())?;
    let m = iv.used.len();
    if m < k {
        return Err(Error::RankDeficient(format!(
            "{m} usable instruments for {k} parameters (dropped: {})",
            iv.dropped.join(", ")
        )));
    }
    let model = GapModel::new(&kept, spec.clone(), p)?;
    let n = kept.len() as f64;
    let z = &iv.z;
    let gbar = |x: &[f64]| -> DVector<f64> { z.transpose() * DVector::from_vec(model.residuals(x)) / n };
    let (lo, hi) = spec.bounds(&cfg.options);
    let starts = halton_starts(cfg.options.n_starts, &lo, &hi);
    let fail = || Error::NoConvergence {
        what: "GMM objective".into(),
        iterations: 0,
        residual: f64::INFINITY,
    };

    let step1 = |x: &[f64]| gbar(x).iter().copied().collect::<Vec<f64>>();
    let (x1, q1, rep1) = least_squares(&step1, &lo, &hi, &starts).ok_or_else(fail)?;

    let mut w = DMatrix::<f64>::identity(m, m);
    let mut weighting = "identity".to_string();
    let mut result = (x1.clone(), q1, rep1);
    // An exact first-step fit leaves Ŝ at rounding level, where its inverse
    // only rescales noise.
    let scale = kept.iter().map(|m| m.gap * m.gap).sum::<f64>() / n;
    let exact = q1 <= 1e-16 * scale.max(f64::MIN_POSITIVE);
    if cfg.two_step && exact {
        weighting = "identity (singular S)".into();
    } else if cfg.two_step {
        let s1 = s_matrix(z, &model.residuals(&x1), fe.as_ref())?;
        match inverse_if_regular(&s1).and_then(|wi| wi.clone().cholesky().map(|c| (wi, c.l()))) {
            Some((wi, l)) => {
                let step2 = |x: &[f64]| (l.transpose() * gbar(x)).iter().copied().collect::<Vec<f64>>();
                let mut starts2 = starts.clone();
                starts2.push(x1.clone());
                result = least_squares(&step2, &lo, &hi, &starts2).ok_or_else(fail)?;
                w = wi;
                weighting = "two-step optimal (HC)".into();
            }
            None => weighting = "identity (singular S)".into(),
        }
    }
    let (x, q, report) = result;

    let gfun = |x: &[f64]| gbar(x).iter().copied().collect::<Vec<f64>>();
    let g = jacobian(&gfun, &x, &lo, &hi);
    let s = s_matrix(z, &model.residuals(&x), fe.as_ref())?;
    let gwg = g.transpose() * &w * &g;
    let cov = match gwg.try_inverse() {
        Some(a) => &a * (g.transpose() * &w * &s * &w * &g) * &a / n,
        None => DMatrix::from_element(k, k, f64::NAN),
    };
    let optimal = weighting.starts_with("two-step");
    let mut res = assemble(
        Method::Gmm,
        &spec,
        Fitted {
            params: x,
            cov,
            objective: q,
            report,
        },
        &kept,
        dropped,
    )?;
    if optimal && m > k {
        res.j_stat = Some(n * q);
        res.j_df = Some(m - k);
    }
    res.instruments = iv.used;
    res.dropped_instruments = iv.dropped;
    res.weighting = Some(weighting);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::build_pair_moments;
    use crate::panel::{generate_montecarlo_blocks, MonteCarloDesign};
    use crate::params::StructuralParams;

    fn replica(noise: f64, seed: u64) -> Vec<PairMoment> {
        let d = MonteCarloDesign {
            n_replicas: 1,
            cost_noise_sd: noise,
            importers_per_exporter: 3,
            ..MonteCarloDesign::paper(seed)
        };
        let d = MonteCarloDesign {
            n_exporters: 201,
            ..d
        };
        build_pair_moments(&generate_montecarlo_blocks(&d).unwrap()[0], None)
    }

    fn share_instruments() -> GmmConfig {
        GmmConfig {
            instruments: vec![
                Instrument::Constant,
                Instrument::ShareGapS,
                Instrument::ShareGapX,
                Instrument::LeaveOutMeanS,
                Instrument::LeaveOutMeanX,
            ],
            ..GmmConfig::default()
        }
    }

    #[test]
    fn noiseless_moments_recover_truth() {
        let p = CalibratedParams::baseline();
        let m = replica(0.0, 21);
        let r = gmm_estimate(&m, &share_instruments(), &p).unwrap();
        assert!(r.objective < 1e-12, "objective {} {:?} {:?}", r.objective, r.estimates, r.diagnostics);
        assert!((r.phi() - 0.827).abs() < 1e-6, "{}", r.phi());
        assert!((r.theta - 0.454).abs() < 1e-6);
        assert_eq!(r.weighting.as_deref(), Some("identity (singular S)"));
    }

    #[test]
    fn noisy_two_step_reports_j_statistic() {
        let p = CalibratedParams::baseline();
        let m = replica(0.05, 22);
        let r = gmm_estimate(&m, &share_instruments(), &p).unwrap();
        assert_eq!(r.j_df, Some(3));
        assert!(r.j_stat.unwrap() >= 0.0);
        assert!(r.se.iter().all(|s| s.is_finite() && *s > 0.0));
        assert!(r.theta > 0.0 && r.theta <= 1.0);
        assert!(r.phi() > 0.0 && r.phi() < 1.0);
    }

    #[test]
    fn constant_counts_are_dropped_and_too_few_instruments_error() {
        let p = CalibratedParams::baseline();
        let m = replica(0.05, 23);
        let r = gmm_estimate(&m, &share_instruments(), &p).unwrap();
        assert!(r.dropped_instruments.is_empty());
        let cfg = GmmConfig {
            instruments: vec![Instrument::Constant, Instrument::ImporterCount, Instrument::ExporterCount],
            ..GmmConfig::default()
        };
        let err = gmm_estimate(&m, &cfg, &p).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err}");
        let fe = GmmConfig {
            instruments: vec![Instrument::Constant, Instrument::ShareGapS, Instrument::ShareGapX],
            ..GmmConfig::default().with_fixed_effects()
        };
        let r = gmm_estimate(&m, &fe, &p).unwrap();
        assert_eq!(r.dropped_instruments, vec!["constant (absorbed)"]);
        let _ = StructuralParams::baseline();
    }
}

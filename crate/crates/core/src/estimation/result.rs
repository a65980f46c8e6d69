use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::{logistic, PhiSpec};
use super::optimize::OptimReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gmm,
    Nls,
    NlsThetaOne,
}

/// Distribution of implied bargaining power with delta-method standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiStats {
    pub mean: f64,
    pub median: f64,
    pub se_mean: f64,
    pub se_median: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: Method,
    pub phi_spec: PhiSpec,
    /// Free parameters, in order.
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub theta: f64,
    /// NaN when θ is fixed.
    pub theta_se: f64,
    pub theta_fixed: bool,
    pub implied_phi: PhiStats,
    pub objective: f64,
    pub j_stat: Option<f64>,
    pub j_df: Option<usize>,
    pub n_moments: usize,
    /// Moments dropped for missing covariates or instruments.
    pub dropped_moments: usize,
    /// Moments whose two sides have identical shares.
    pub degenerate_moments: usize,
    pub instruments: Vec<String>,
    pub dropped_instruments: Vec<String>,
    pub weighting: Option<String>,
    pub diagnostics: OptimReport,
}

impl EstimateResult {
    /// Mean implied φ.
    pub fn phi(&self) -> f64 {
        self.implied_phi.mean
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let k = self.estimates.len();
        DMatrix::from_fn(k, k, |i, j| self.cov[i][j])
    }

    /// Aligned plain-text report.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method: {:?}   moments: {}", self.method, self.n_moments);
        let _ = writeln!(s, "{:<28}{:>12}{:>12}", "parameter", "estimate", "std. err.");
        for ((n, e), se) in self.names.iter().zip(&self.estimates).zip(&self.se) {
            let _ = writeln!(s, "{n:<28}{e:>12.4}{se:>12.4}");
        }
        if self.theta_fixed {
            let _ = writeln!(s, "{:<28}{:>12.4}{:>12}", "theta (fixed)", self.theta, "-");
        }
        let p = &self.implied_phi;
        let _ = writeln!(s, "{:<28}{:>12.4}{:>12.4}", "implied phi: mean", p.mean, p.se_mean);
        let _ = writeln!(s, "{:<28}{:>12.4}{:>12.4}", "implied phi: median", p.median, p.se_median);
        let _ = writeln!(s, "objective: {:.6e}   converged: {}", self.objective, self.diagnostics.converged);
        if let (Some(j), Some(df)) = (self.j_stat, self.j_df) {
            let _ = writeln!(s, "J statistic: {j:.4} (df {df})");
        }
        if !self.dropped_instruments.is_empty() {
            let _ = writeln!(s, "dropped instruments: {}", self.dropped_instruments.join(", "));
        }
        s
    }
}

fn quad(g: &[f64], v: &DMatrix<f64>) -> f64 {
    let k = g.len();
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            acc += g[i] * v[(i, j)] * g[j];
        }
    }
    acc.max(0.0).sqrt()
}

/// Mean and median of φ over the supplied design rows (intercept first; ignored
/// for constant-φ specifications), with delta-method standard errors. The
/// median's gradient is taken at the median observation(s).
pub fn implied_phi_stats(result: &EstimateResult, designs: &[Vec<f64>]) -> Result<PhiStats> {
    let est = &result.estimates;
    let v = result.cov_matrix();
    let constant = |phi: f64, dphi: f64| {
        let se = (dphi * dphi * v[(0, 0)]).max(0.0).sqrt();
        PhiStats {
            mean: phi,
            median: phi,
            se_mean: se,
            se_median: se,
            n: designs.len(),
        }
    };
    match &result.phi_spec {
        PhiSpec::Direct => Ok(constant(est[0], 1.0)),
        PhiSpec::Logit => {
            let phi = logistic(est[0]);
            Ok(constant(phi, phi * (1.0 - phi)))
        }
        PhiSpec::Logistic(k) => {
            let nk = k.len();
            if designs.is_empty() {
                return Err(Error::Data("no covariate rows for implied bargaining power".into()));
            }
            if let Some(bad) = designs.iter().find(|x| x.len() != nk || x.iter().any(|v| !v.is_finite())) {
                return Err(Error::Data(format!("covariate row {bad:?} does not match the κ specification")));
            }
            let phis: Vec<(f64, usize)> = designs
                .iter()
                .enumerate()
                .map(|(r, x)| (logistic(x.iter().zip(est).map(|(a, b)| a * b).sum()), r))
                .collect();
            let n = phis.len() as f64;
            let mean = phis.iter().map(|p| p.0).sum::<f64>() / n;
            let mut g_mean = vec![0.0; nk];
            for (phi, r) in &phis {
                for (g, x) in g_mean.iter_mut().zip(&designs[*r]) {
                    *g += phi * (1.0 - phi) * x / n;
                }
            }
            let mut sorted = phis.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mid: Vec<&(f64, usize)> = if sorted.len() % 2 == 1 {
                vec![&sorted[sorted.len() / 2]]
            } else {
                vec![&sorted[sorted.len() / 2 - 1], &sorted[sorted.len() / 2]]
            };
            let w = 1.0 / mid.len() as f64;
            let median = mid.iter().map(|p| p.0).sum::<f64>() * w;
            let mut g_med = vec![0.0; nk];
            for (phi, r) in mid {
                for (g, x) in g_med.iter_mut().zip(&designs[*r]) {
                    *g += w * phi * (1.0 - phi) * x;
                }
            }
            let vk = v.view((0, 0), (nk, nk)).into_owned();
            Ok(PhiStats {
                mean,
                median,
                se_mean: quad(&g_mean, &vk),
                se_median: quad(&g_med, &vk),
                n: phis.len(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::model::KappaSpec;

    fn result(spec: PhiSpec, est: Vec<f64>, var: f64) -> EstimateResult {
        let k = est.len();
        EstimateResult {
            method: Method::Gmm,
            phi_spec: spec,
            names: vec![String::new(); k],
            se: vec![var.sqrt(); k],
            cov: (0..k).map(|i| (0..k).map(|j| if i == j { var } else { 0.0 }).collect()).collect(),
            estimates: est,
            theta: 0.5,
            theta_se: f64::NAN,
            theta_fixed: false,
            implied_phi: PhiStats {
                mean: 0.0,
                median: 0.0,
                se_mean: 0.0,
                se_median: 0.0,
                n: 0,
            },
            objective: 0.0,
            j_stat: None,
            j_df: None,
            n_moments: 0,
            dropped_moments: 0,
            degenerate_moments: 0,
            instruments: vec![],
            dropped_instruments: vec![],
            weighting: None,
            diagnostics: OptimReport {
                converged: true,
                starts: 0,
                finite_starts: 0,
                best_start: 0,
                simplex_iterations: 0,
                polish_iterations: 0,
                evaluations: 0,
                projected_gradient: 0.0,
                at_bound: vec![],
            },
        }
    }

    #[test]
    fn constant_phi_has_equal_mean_and_median() {
        let r = result(PhiSpec::Logit, vec![1.565, 0.454], 0.055f64.powi(2));
        let s = implied_phi_stats(&r, &[]).unwrap();
        assert_eq!(s.mean, s.median);
        assert!((s.mean - 0.827).abs() < 1e-3);
        // Delta method: φ(1−φ)·se(φ̄).
        assert!((s.se_mean - s.mean * (1.0 - s.mean) * 0.055).abs() < 1e-15);
    }

    #[test]
    fn zero_slopes_collapse_to_logistic_constant() {
        let mut est = vec![1.2, 0.0, 0.0, 0.0, 0.0];
        est.push(0.5);
        let r = result(PhiSpec::Logistic(KappaSpec::all()), est, 0.01);
        let rows: Vec<Vec<f64>> = (0..9).map(|k| vec![1.0, k as f64, 2.0, 1.0, -0.5 * k as f64]).collect();
        let s = implied_phi_stats(&r, &rows).unwrap();
        assert!((s.mean - logistic(1.2)).abs() < 1e-15);
        assert!((s.median - logistic(1.2)).abs() < 1e-15);
    }

    #[test]
    fn delta_method_matches_finite_difference() {
        let est = vec![0.4, -0.3, 0.7];
        let spec = PhiSpec::Logistic(KappaSpec {
            covariates: vec![crate::estimation::Covariate::Longevity],
        });
        let r = result(spec.clone(), est.clone(), 0.04);
        let rows: Vec<Vec<f64>> = (0..7).map(|k| vec![1.0, 0.3 * k as f64]).collect();
        let s = implied_phi_stats(&r, &rows).unwrap();
        let mean_at = |e: &[f64]| {
            rows.iter().map(|x| logistic(x[0] * e[0] + x[1] * e[1])).sum::<f64>() / rows.len() as f64
        };
        let h = 1e-6;
        let g: Vec<f64> = (0..2)
            .map(|d| {
                let mut a = est.clone();
                let mut b = est.clone();
                a[d] += h;
                b[d] -= h;
                (mean_at(&a) - mean_at(&b)) / (2.0 * h)
            })
            .collect();
        let se = ((g[0] * g[0] + g[1] * g[1]) * 0.04).sqrt();
        assert!((s.se_mean - se).abs() < 1e-9);
        assert_eq!(s.n, 7);
    }
}

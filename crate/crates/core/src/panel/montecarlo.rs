use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SharePanel, ShareRecord};
use crate::error::{Error, Result};
use crate::params::{BilateralShares, CalibratedParams, StructuralParams};
use crate::pricing::bilateral_markup;

/// Law of the raw draws that are normalized into shares within a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ShareLaw {
    /// U[0,1] draws divided by their block total.
    UniformNormalized,
    /// Symmetric Dirichlet with the given concentration.
    Dirichlet { concentration: f64 },
}

/// Blocks of `exporters_per_block` exporters fully matched with
/// `importers_per_exporter` importers; supplier shares sum to one within each
/// importer and buyer shares within each exporter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloDesign {
    pub n_exporters: usize,
    pub importers_per_exporter: usize,
    /// Defaults to `importers_per_exporter` (square markets).
    #[serde(default)]
    pub exporters_per_block: Option<usize>,
    pub n_replicas: usize,
    pub truth: StructuralParams,
    #[serde(default = "CalibratedParams::baseline")]
    pub calibrated: CalibratedParams,
    #[serde(default = "uniform")]
    pub share_law: ShareLaw,
    /// Standard deviation of the log marginal cost of each match.
    #[serde(default = "default_noise")]
    pub cost_noise_sd: f64,
    pub seed: u64,
}

fn uniform() -> ShareLaw {
    ShareLaw::UniformNormalized
}

fn default_noise() -> f64 {
    0.05
}

impl MonteCarloDesign {
    /// 200 exporters with two buyers each at (φ, θ) = (0.827, 0.454), 501 replicas.
    pub fn paper(seed: u64) -> Self {
        Self {
            n_exporters: 200,
            importers_per_exporter: 2,
            exporters_per_block: None,
            n_replicas: 501,
            truth: StructuralParams::baseline(),
            calibrated: CalibratedParams::baseline(),
            share_law: ShareLaw::UniformNormalized,
            cost_noise_sd: default_noise(),
            seed,
        }
    }

    pub fn block_exporters(&self) -> usize {
        self.exporters_per_block.unwrap_or(self.importers_per_exporter)
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.block_exporters();
        if self.importers_per_exporter < 2 {
            return Err(Error::Config(
                "importers_per_exporter must be at least 2 for within-exporter contrasts".into(),
            ));
        }
        if self.n_exporters == 0 || self.n_replicas == 0 || e == 0 {
            return Err(Error::Config("exporter, block and replica counts must be positive".into()));
        }
        if self.n_exporters % e != 0 {
            return Err(Error::Config(format!(
                "n_exporters ({}) must be a multiple of exporters_per_block ({e})",
                self.n_exporters
            )));
        }
        if !(self.cost_noise_sd >= 0.0 && self.cost_noise_sd.is_finite()) {
            return Err(Error::Config("cost_noise_sd must be non-negative".into()));
        }
        if let ShareLaw::Dirichlet { concentration } = self.share_law {
            if !(concentration > 0.0 && concentration.is_finite()) {
                return Err(Error::Config("Dirichlet concentration must be positive".into()));
            }
        }
        if !(self.truth.phi > 0.0 && self.truth.phi < 1.0 && self.truth.theta > 0.0 && self.truth.theta <= 1.0) {
            return Err(Error::Config("truth must have φ in (0,1) and θ in (0,1]".into()));
        }
        Ok(())
    }
}

/// Independent stream for replica `r`.
pub(crate) fn replica_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

fn raw_draw(law: ShareLaw, rng: &mut ChaCha8Rng) -> f64 {
    match law {
        ShareLaw::UniformNormalized => rng.random::<f64>(),
        ShareLaw::Dirichlet { concentration } => Gamma::new(concentration, 1.0)
            .expect("validated concentration")
            .sample(rng),
    }
}

fn one_replica(d: &MonteCarloDesign, r: usize) -> Result<SharePanel> {
    let mut rng = replica_rng(d.seed, r);
    let ne = d.block_exporters();
    let nb = d.importers_per_exporter;
    let mut rows = Vec::with_capacity(d.n_exporters * nb);
    for b in 0..d.n_exporters / ne {
        let mut us = vec![vec![0.0; nb]; ne];
        let mut vs = vec![vec![0.0; nb]; ne];
        for i in 0..ne {
            for j in 0..nb {
                us[i][j] = raw_draw(d.share_law, &mut rng);
                vs[i][j] = raw_draw(d.share_law, &mut rng);
            }
        }
        let col: Vec<f64> = (0..nb).map(|j| (0..ne).map(|i| us[i][j]).sum()).collect();
        let row: Vec<f64> = vs.iter().map(|v| v.iter().sum()).collect();
        for i in 0..ne {
            for j in 0..nb {
                let shares = BilateralShares {
                    s: us[i][j] / col[j],
                    x: vs[i][j] / row[i],
                };
                let mu = bilateral_markup(shares, &d.truth, &d.calibrated)?.mu;
                let noise: f64 = rng.sample(StandardNormal);
                rows.push(ShareRecord {
                    importer: format!("b{b}m{j}"),
                    exporter: format!("b{b}e{i}"),
                    product: "h".into(),
                    year: 0,
                    price: (mu.ln() + d.cost_noise_sd * noise).exp(),
                    s: shares.s,
                    x: shares.x,
                    alpha: 1.0,
                });
            }
        }
    }
    Ok(SharePanel { rows })
}

/// One share panel per replica, generated in parallel on independent streams.
pub fn generate_montecarlo_blocks(d: &MonteCarloDesign) -> Result<Vec<SharePanel>> {
    d.validate()?;
    (0..d.n_replicas).into_par_iter().map(|r| one_replica(d, r)).collect()
}

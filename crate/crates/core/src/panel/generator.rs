//! Multi-year transaction panels priced by the network equilibrium.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::montecarlo::replica_rng;
use super::TransactionRecord;
use crate::error::{Error, Result};
use crate::network::{
    direct_responses, solve_equilibrium, EdgeState, ExporterNode, ImporterNode, SolverConfig, TradeEdge,
    TradeNetwork,
};
use crate::params::{CalibratedParams, StructuralParams};

/// How prices react in the tariff year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventMode {
    /// Each match re-negotiates alone against the no-tariff equilibrium of
    /// the same year.
    Direct,
    /// Full re-solve of the network with tariffs in place.
    Equilibrium,
}

/// Bargaining power of each match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PhiModel {
    Constant,
    /// Logistic in relationship longevity, log transaction count and the
    /// lagged log relative outside option.
    Logistic {
        intercept: f64,
        longevity: f64,
        transactions: f64,
        outside_option: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelConfig {
    pub n_products: usize,
    pub first_year: i32,
    /// Number of years; the last one carries the tariff event.
    pub n_years: usize,
    pub exporters_per_product: usize,
    pub buyers_per_exporter: usize,
    pub importers_per_product: usize,
    pub n_countries: usize,
    /// Probability that a country-product cell is hit by the tariff.
    pub treated_share: f64,
    /// Mean tariff increase on treated cells; draws are uniform on ±50% of it.
    pub tariff_increase: f64,
    /// Standard deviation of log match-year cost noise.
    pub cost_noise_sd: f64,
    pub exporter_cost_sd: f64,
    pub demand_sd: f64,
    pub mean_shipments: f64,
    pub event_mode: EventMode,
    pub phi_model: PhiModel,
    pub structural: StructuralParams,
    pub calibrated: CalibratedParams,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            n_products: 4,
            first_year: 2014,
            n_years: 5,
            exporters_per_product: 25,
            buyers_per_exporter: 4,
            importers_per_product: 32,
            n_countries: 6,
            treated_share: 0.5,
            tariff_increase: 0.25,
            cost_noise_sd: 0.1,
            exporter_cost_sd: 0.3,
            demand_sd: 0.5,
            mean_shipments: 4.0,
            event_mode: EventMode::Direct,
            phi_model: PhiModel::Constant,
            structural: StructuralParams::baseline(),
            calibrated: CalibratedParams::baseline(),
            solver: SolverConfig::default(),
            seed: 0,
        }
    }
}

impl PanelConfig {
    pub fn validate(&self) -> Result<()> {
        let c = |m: &str| Err(Error::Config(m.into()));
        if self.n_products == 0 || self.n_years == 0 || self.n_countries == 0 {
            return c("products, years and countries must be positive");
        }
        if self.buyers_per_exporter == 0 || self.buyers_per_exporter > self.importers_per_product {
            return c("buyers_per_exporter must lie in 1..=importers_per_product");
        }
        if self.exporters_per_product * self.buyers_per_exporter < self.importers_per_product {
            return c("too few matches to give every importer a supplier");
        }
        if !(0.0..=1.0).contains(&self.treated_share) {
            return c("treated_share must lie in [0,1]");
        }
        for (name, v) in [
            ("tariff_increase", self.tariff_increase),
            ("cost_noise_sd", self.cost_noise_sd),
            ("exporter_cost_sd", self.exporter_cost_sd),
            ("demand_sd", self.demand_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        if !(self.mean_shipments >= 1.0) {
            return c("mean_shipments must be at least 1");
        }
        Ok(())
    }

    pub fn event_year(&self) -> i32 {
        self.first_year + self.n_years as i32 - 1
    }
}

/// Covariates of the bargaining-power index for one match-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRow {
    pub importer: String,
    pub exporter: String,
    pub product: String,
    pub year: i32,
    /// ln(1 + years since the relationship began).
    pub longevity: f64,
    pub ln_transactions: f64,
    pub multi_product: f64,
    /// Lagged ln of the exporter's sales to other buyers over the importer's
    /// purchases from other suppliers; NaN when undefined.
    pub ln_outside_option: f64,
}

/// Data-generating values behind one annual record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTruth {
    pub importer: String,
    pub exporter: String,
    pub product: String,
    pub year: i32,
    pub phi: f64,
    /// Duty-inclusive price.
    pub price: f64,
    pub markup: f64,
    pub marginal_cost: f64,
    pub cost_noise: f64,
    pub s: f64,
    pub x: f64,
    pub tariff: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratedPanel {
    pub records: Vec<TransactionRecord>,
    pub covariates: Vec<CovariateRow>,
    pub truth: Vec<MatchTruth>,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Lagged ln relative outside option of each edge from last year's quantities.
fn outside_options(prev: &[EdgeState]) -> Vec<f64> {
    let mut by_exp: HashMap<&str, f64> = HashMap::new();
    let mut by_imp: HashMap<&str, f64> = HashMap::new();
    for e in prev {
        *by_exp.entry(&e.exporter).or_default() += e.quantity;
        *by_imp.entry(&e.importer).or_default() += e.quantity;
    }
    prev.iter()
        .map(|e| ((by_exp[e.exporter.as_str()] - e.quantity) / (by_imp[e.importer.as_str()] - e.quantity)).ln())
        .map(|v| if v.is_finite() { v } else { f64::NAN })
        .collect()
}

fn draw_network(cfg: &PanelConfig, h: usize, rng: &mut ChaCha8Rng) -> Result<TradeNetwork> {
    let lognormal = |rng: &mut ChaCha8Rng, sd: f64| (sd * rng.sample::<f64, _>(StandardNormal)).exp();
    let mut net = TradeNetwork::default();
    for i in 0..cfg.exporters_per_product {
        net.exporters.push(ExporterNode {
            id: format!("x{i:03}"),
            cost_shifter: lognormal(rng, cfg.exporter_cost_sd),
        });
    }
    for j in 0..cfg.importers_per_product {
        net.importers.push(ImporterNode {
            id: format!("m{h:02}_{j:03}"),
            productivity: 1.0,
            demand_shifter: lognormal(rng, cfg.demand_sd),
            domestic_price: 1.0,
        });
    }
    let mut uncovered: Vec<usize> = (0..cfg.importers_per_product).collect();
    uncovered.shuffle(rng);
    let mut suppliers: Vec<Vec<usize>> = vec![Vec::new(); cfg.importers_per_product];
    for i in 0..cfg.exporters_per_product {
        let mut chosen = BTreeSet::new();
        while chosen.len() < cfg.buyers_per_exporter {
            let j = uncovered.pop().unwrap_or_else(|| rng.random_range(0..cfg.importers_per_product));
            chosen.insert(j);
        }
        for j in chosen {
            suppliers[j].push(i);
        }
    }
    for (j, sup) in suppliers.iter().enumerate() {
        let w: Vec<f64> = sup.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = w.iter().sum();
        for (&i, wk) in sup.iter().zip(&w) {
            net.edges.push(TradeEdge {
                exporter: net.exporters[i].id.clone(),
                importer: net.importers[j].id.clone(),
                taste: (wk / total).powf(1.0 / cfg.calibrated.rho),
                tariff: 1.0,
                cost_shifter: 1.0,
                bargaining_power: None,
            });
        }
    }
    Ok(net)
}

fn product_panel(cfg: &PanelConfig, h: usize, countries: &[usize], treated: &[bool]) -> Result<GeneratedPanel> {
    let mut rng = replica_rng(cfg.seed, 1 + h);
    let product = format!("h{h:02}");
    let base = draw_network(cfg, h, &mut rng)?;
    let n_edges = base.edges.len();
    let exp_index: HashMap<&str, usize> = base.exporters.iter().enumerate().map(|(k, e)| (e.id.as_str(), k)).collect();
    let start_age: Vec<f64> = (0..n_edges).map(|_| rng.random_range(0..10) as f64).collect();
    let increase: Vec<f64> = (0..cfg.n_countries)
        .map(|_| cfg.tariff_increase * rng.random_range(0.5..1.5))
        .collect();
    let extra = Poisson::new(cfg.mean_shipments - 1.0).ok();
    let mut out = GeneratedPanel::default();
    let mut prev: Option<Vec<EdgeState>> = None;
    for y in 0..cfg.n_years {
        let year = cfg.first_year + y as i32;
        let mut net = base.clone();
        let mut kappa = vec![0.0; n_edges];
        let mut shipments = vec![1usize; n_edges];
        for e in 0..n_edges {
            kappa[e] = (cfg.cost_noise_sd * rng.sample::<f64, _>(StandardNormal)).exp();
            if let Some(p) = &extra {
                shipments[e] += p.sample(&mut rng) as usize;
            }
            net.edges[e].cost_shifter = kappa[e];
        }
        let outside = match &prev {
            Some(s) => outside_options(s),
            None => vec![f64::NAN; n_edges],
        };
        let longevity: Vec<f64> = start_age.iter().map(|a| (1.0 + a + y as f64).ln()).collect();
        let mut phis = vec![cfg.structural.phi; n_edges];
        if let PhiModel::Logistic {
            intercept,
            longevity: b_l,
            transactions: b_t,
            outside_option: b_o,
        } = cfg.phi_model
        {
            for e in 0..n_edges {
                let o = if outside[e].is_finite() { outside[e] } else { 0.0 };
                let z = intercept + b_l * longevity[e] + b_t * (shipments[e] as f64).ln() + b_o * o;
                phis[e] = logistic(z).clamp(1e-12, 1.0 - 1e-12);
                net.edges[e].bargaining_power = Some(phis[e]);
            }
        }
        let state = solve_equilibrium(&net, &cfg.structural, &cfg.calibrated, &cfg.solver)?;
        let is_event = y + 1 == cfg.n_years && cfg.n_years > 1;
        let edges = if is_event {
            let mut taxed = net.clone();
            for edge in &mut taxed.edges {
                let c = countries[exp_index[edge.exporter.as_str()]];
                if treated[c * cfg.n_products + h] {
                    edge.tariff = 1.0 + increase[c];
                }
            }
            match cfg.event_mode {
                EventMode::Direct => direct_responses(&taxed, &state, &cfg.structural, &cfg.calibrated)?,
                EventMode::Equilibrium => {
                    solve_equilibrium(&taxed, &cfg.structural, &cfg.calibrated, &cfg.solver)?.edges
                }
            }
        } else {
            state.edges
        };
        for (e, es) in edges.iter().enumerate() {
            let country = format!("c{}", countries[exp_index[es.exporter.as_str()]]);
            let tau = es.tariff - 1.0;
            let unit_value = es.price / es.tariff;
            let w: Vec<f64> = (0..shipments[e]).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = w.iter().sum();
            for wk in w {
                let q = es.quantity * wk / total;
                out.records.push(TransactionRecord {
                    importer: es.importer.clone(),
                    exporter: es.exporter.clone(),
                    product: product.clone(),
                    country: country.clone(),
                    year,
                    value: unit_value * q,
                    quantity: q,
                    tariff: tau,
                });
            }
            out.covariates.push(CovariateRow {
                importer: es.importer.clone(),
                exporter: es.exporter.clone(),
                product: product.clone(),
                year,
                longevity: longevity[e],
                ln_transactions: (shipments[e] as f64).ln(),
                multi_product: 0.0,
                ln_outside_option: outside[e],
            });
            out.truth.push(MatchTruth {
                importer: es.importer.clone(),
                exporter: es.exporter.clone(),
                product: product.clone(),
                year,
                phi: phis[e],
                price: es.price,
                markup: es.markup,
                marginal_cost: es.marginal_cost,
                cost_noise: kappa[e],
                s: es.s,
                x: es.x,
                tariff: tau,
            });
        }
        prev = Some(edges);
    }
    Ok(out)
}

/// Simulate a transaction panel: one independent network per product, match
/// tastes from a flat Dirichlet, lognormal match-year cost noise and a
/// country-product tariff event in the final year.
pub fn generate_panel(cfg: &PanelConfig) -> Result<GeneratedPanel> {
    cfg.validate()?;
    let mut rng = replica_rng(cfg.seed, 0);
    let countries: Vec<usize> = (0..cfg.exporters_per_product)
        .map(|_| rng.random_range(0..cfg.n_countries))
        .collect();
    let treated: Vec<bool> = (0..cfg.n_countries * cfg.n_products)
        .map(|_| rng.random::<f64>() < cfg.treated_share)
        .collect();
    let parts = (0..cfg.n_products)
        .into_par_iter()
        .map(|h| product_panel(cfg, h, &countries, &treated))
        .collect::<Result<Vec<_>>>()?;
    let mut out = GeneratedPanel::default();
    for p in parts {
        out.records.extend(p.records);
        out.covariates.extend(p.covariates);
        out.truth.extend(p.truth);
    }
    Ok(out)
}

/// Covariates computed from records alone: observed relationship age,
/// shipment counts, multi-product pairs and the lagged outside option.
pub fn compute_covariates(records: &[TransactionRecord]) -> Result<Vec<CovariateRow>> {
    let annual = super::aggregate_annual(records)?;
    let mut count: HashMap<(&str, &str, &str, i32), usize> = HashMap::new();
    for r in records {
        *count.entry((&r.importer, &r.exporter, &r.product, r.year)).or_default() += 1;
    }
    let mut first_year: HashMap<(&str, &str), i32> = HashMap::new();
    let mut products: HashMap<(&str, &str, i32), BTreeSet<&str>> = HashMap::new();
    let mut seller: HashMap<(&str, &str, i32), f64> = HashMap::new();
    let mut buyer: HashMap<(&str, &str, i32), f64> = HashMap::new();
    let mut match_q: HashMap<(&str, &str, &str, i32), f64> = HashMap::new();
    for r in &annual {
        let f = first_year.entry((&r.importer, &r.exporter)).or_insert(r.year);
        *f = (*f).min(r.year);
        products.entry((&r.importer, &r.exporter, r.year)).or_default().insert(&r.product);
        *seller.entry((&r.exporter, &r.product, r.year)).or_default() += r.quantity;
        *buyer.entry((&r.importer, &r.product, r.year)).or_default() += r.quantity;
        match_q.insert((&r.importer, &r.exporter, &r.product, r.year), r.quantity);
    }
    Ok(annual
        .iter()
        .map(|r| {
            let t0 = r.year - 1;
            let outside = match match_q.get(&(r.importer.as_str(), r.exporter.as_str(), r.product.as_str(), t0)) {
                Some(&q) => {
                    let a = seller[&(r.exporter.as_str(), r.product.as_str(), t0)] - q;
                    let b = buyer[&(r.importer.as_str(), r.product.as_str(), t0)] - q;
                    let v = (a / b).ln();
                    if v.is_finite() {
                        v
                    } else {
                        f64::NAN
                    }
                }
                None => f64::NAN,
            };
            CovariateRow {
                importer: r.importer.clone(),
                exporter: r.exporter.clone(),
                product: r.product.clone(),
                year: r.year,
                longevity: ((r.year - first_year[&(r.importer.as_str(), r.exporter.as_str())]) as f64 + 1.0).ln(),
                ln_transactions: (count[&(r.importer.as_str(), r.exporter.as_str(), r.product.as_str(), r.year)]
                    as f64)
                    .ln(),
                multi_product: if products[&(r.importer.as_str(), r.exporter.as_str(), r.year)].len() > 1 {
                    1.0
                } else {
                    0.0
                },
                ln_outside_option: outside,
            }
        })
        .collect())
}

//! Demand and cost blocks evaluated in logs at a given price vector.

use super::{Indexed, TradeNetwork};
use crate::error::{Error, Result};
use crate::params::{BilateralShares, CalibratedParams, StructuralParams};
use crate::pricing::bilateral_markup;

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ImporterBlock {
    /// ln Σ_k ς_kj^ρ p_kj^{1−ρ}
    pub ln_index_sum: f64,
    pub ln_foreign_price: f64,
    pub ln_unit_cost: f64,
    pub ln_output: f64,
    pub ln_foreign_bundle: f64,
}

/// Log-price workspace with cached importer blocks and edge quantities.
pub(crate) struct Market<'a> {
    pub net: &'a TradeNetwork,
    pub ix: Indexed,
    pub sp: StructuralParams,
    pub p: CalibratedParams,
    pub ln_price: Vec<f64>,
    pub importer: Vec<ImporterBlock>,
    pub ln_quantity: Vec<f64>,
    ln_taste_rho: Vec<f64>,
    ln_wedge: Vec<f64>,
    phi: Vec<f64>,
    ln_a: f64,
}

pub(crate) struct EdgeEval {
    pub ln_target: f64,
}

pub(crate) struct EdgeOutcome {
    pub ln_quantity: f64,
    pub s: f64,
    pub x: f64,
    pub ln_cost: f64,
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

impl<'a> Market<'a> {
    pub fn new(net: &'a TradeNetwork, sp: StructuralParams, p: CalibratedParams) -> Result<Self> {
        let ix = net.index()?;
        let ln_taste_rho = net.edges.iter().map(|e| p.rho * e.taste.ln()).collect();
        let ln_wedge = net
            .edges
            .iter()
            .map(|e| e.tariff.ln() + e.cost_shifter.ln())
            .collect();
        let phi = net
            .edges
            .iter()
            .map(|e| e.bargaining_power.unwrap_or(sp.phi))
            .collect();
        let n_edges = net.edges.len();
        let n_imp = net.importers.len();
        Ok(Self {
            net,
            ix,
            sp,
            p,
            ln_price: vec![0.0; n_edges],
            importer: vec![ImporterBlock::default(); n_imp],
            ln_quantity: vec![0.0; n_edges],
            ln_taste_rho,
            ln_wedge,
            phi,
            ln_a: -p.nu * (p.nu / (p.nu - 1.0)).ln(),
        })
    }

    pub fn set_ln_wedge(&mut self, edge: usize, value: f64) {
        self.ln_wedge[edge] = value;
    }

    pub fn ln_wedge(&self, edge: usize) -> f64 {
        self.ln_wedge[edge]
    }

    /// Importer block given its edge prices, with `replace` substituting one edge's log price.
    pub fn importer_block(&self, j: usize, replace: Option<(usize, f64)>) -> ImporterBlock {
        let p = &self.p;
        let node = &self.net.importers[j];
        let price = |e: usize| match replace {
            Some((r, y)) if r == e => y,
            _ => self.ln_price[e],
        };
        let edges = &self.ix.by_importer[j];
        let ln_index_sum = log_sum_exp(
            edges
                .iter()
                .map(|&e| self.ln_taste_rho[e] + (1.0 - p.rho) * price(e)),
        );
        let ln_foreign_price = ln_index_sum / (1.0 - p.rho);
        let domestic = p.varrho - p.gamma;
        let mut ln_k = -node.productivity.ln() + p.gamma * (ln_foreign_price - p.gamma.ln());
        if domestic > 0.0 {
            ln_k += domestic * (node.domestic_price.ln() - domestic.ln());
        }
        ln_k /= p.varrho;
        let den = p.varrho + p.nu - p.nu * p.varrho;
        let ln_demand = self.ln_a + node.demand_shifter.ln();
        let ln_unit_cost = p.varrho / den * ln_k + (1.0 - p.varrho) / den * ln_demand;
        let ln_output = ln_demand - p.nu * ln_unit_cost;
        let ln_foreign_bundle = p.gamma.ln() + ln_unit_cost + ln_output - ln_foreign_price;
        ImporterBlock {
            ln_index_sum,
            ln_foreign_price,
            ln_unit_cost,
            ln_output,
            ln_foreign_bundle,
        }
    }

    pub fn edge_ln_quantity(&self, e: usize, y: f64, b: &ImporterBlock) -> f64 {
        b.ln_foreign_bundle + self.ln_taste_rho[e] - self.p.rho * (y - b.ln_foreign_price)
    }

    pub fn edge_share(&self, e: usize, y: f64, b: &ImporterBlock) -> f64 {
        (self.ln_taste_rho[e] + (1.0 - self.p.rho) * y - b.ln_index_sum).exp()
    }

    /// Recompute one importer and the quantities on its edges.
    pub fn refresh_importer(&mut self, j: usize) {
        let b = self.importer_block(j, None);
        for &e in &self.ix.by_importer[j] {
            self.ln_quantity[e] = self.edge_ln_quantity(e, self.ln_price[e], &b);
        }
        self.importer[j] = b;
    }

    pub fn refresh_all(&mut self) {
        for j in 0..self.net.importers.len() {
            self.refresh_importer(j);
        }
    }

    fn markup_target(&self, e: usize, s: f64, x: f64, ln_cost: f64) -> Result<f64> {
        let sp = StructuralParams {
            phi: self.phi[e],
            theta: self.sp.theta,
        };
        let shares = BilateralShares {
            s: s.clamp(0.0, 1.0),
            x: x.clamp(0.0, 1.0),
        };
        let m = bilateral_markup(shares, &sp, &self.p)?;
        Ok(m.mu.ln() + ln_cost + self.ln_wedge[e])
    }

    /// Quantity, shares and exporter log marginal cost when edge `e` alone
    /// moves to log price `y`.
    pub fn edge_outcome(&self, e: usize, y: f64) -> Result<EdgeOutcome> {
        let j = self.ix.importer_of[e];
        let i = self.ix.exporter_of[e];
        let b = self.importer_block(j, Some((e, y)));
        let ln_q = self.edge_ln_quantity(e, y, &b);
        let s = self.edge_share(e, y, &b);
        let q = ln_q.exp();
        let others: f64 = self.ix.by_exporter[i]
            .iter()
            .filter(|&&z| z != e)
            .map(|&z| self.ln_quantity[z].exp())
            .sum();
        let total = q + others;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::domain(format!("exporter output {total} is not positive and finite")));
        }
        Ok(EdgeOutcome {
            ln_quantity: ln_q,
            s,
            x: q / total,
            ln_cost: self.net.exporters[i].cost_shifter.ln() + self.sp.cost_exponent() * total.ln(),
        })
    }

    /// Best-response target for edge `e` at log price `y`, others at cached values.
    pub fn eval_edge(&self, e: usize, y: f64) -> Result<EdgeEval> {
        let o = self.edge_outcome(e, y)?;
        Ok(EdgeEval {
            ln_target: self.markup_target(e, o.s, o.x, o.ln_cost)?,
        })
    }

    /// Targets for all edges of exporter `i` when its log prices are `ys`.
    pub fn eval_exporter(&self, i: usize, ys: &[f64]) -> Result<Vec<EdgeEval>> {
        let edges = &self.ix.by_exporter[i];
        let mut ln_q = Vec::with_capacity(edges.len());
        let mut shares = Vec::with_capacity(edges.len());
        for (&e, &y) in edges.iter().zip(ys) {
            let b = self.importer_block(self.ix.importer_of[e], Some((e, y)));
            ln_q.push(self.edge_ln_quantity(e, y, &b));
            shares.push(self.edge_share(e, y, &b));
        }
        let total: f64 = ln_q.iter().map(|v| v.exp()).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::domain(format!("exporter output {total} is not positive and finite")));
        }
        let ln_cost = self.net.exporters[i].cost_shifter.ln() + self.sp.cost_exponent() * total.ln();
        edges
            .iter()
            .enumerate()
            .map(|(k, &e)| {
                let x = ln_q[k].exp() / total;
                Ok(EdgeEval {
                    ln_target: self.markup_target(e, shares[k], x, ln_cost)?,
                })
            })
            .collect()
    }

    /// Exporter output and log marginal cost at cached quantities.
    pub fn exporter_cost(&self, i: usize) -> (f64, f64) {
        let total: f64 = self.ix.by_exporter[i]
            .iter()
            .map(|&z| self.ln_quantity[z].exp())
            .sum();
        let ln_cost = self.net.exporters[i].cost_shifter.ln() + self.sp.cost_exponent() * total.ln();
        (total, ln_cost)
    }

    /// Largest |ln p − ln target| over all edges at the cached state.
    pub fn residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for e in 0..self.ln_price.len() {
            let r = self.eval_edge(e, self.ln_price[e])?;
            let gap = (self.ln_price[e] - r.ln_target).abs();
            if !gap.is_finite() {
                return Err(Error::domain("non-finite price residual"));
            }
            worst = worst.max(gap);
        }
        Ok(worst)
    }
}

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::Market;
use super::TradeNetwork;
use crate::error::{Error, Result};
use crate::params::{CalibratedParams, StructuralParams};
use crate::rootfind::{bracket_root, brent_root};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    /// Edge by edge, each best response seeing the latest prices.
    GaussSeidel,
    /// All edges respond to the same previous sweep.
    Jacobi,
    /// All edges of one exporter solved jointly, exporters in sequence.
    ExporterBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub order: SweepOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
            order: SweepOrder::GaussSeidel,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0,1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeState {
    pub exporter: String,
    pub importer: String,
    pub price: f64,
    pub quantity: f64,
    pub s: f64,
    pub x: f64,
    /// Realized p/(c_i·κ·T).
    pub markup: f64,
    pub marginal_cost: f64,
    pub tariff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExporterState {
    pub id: String,
    pub output: f64,
    pub marginal_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImporterState {
    pub id: String,
    pub foreign_price_index: f64,
    pub foreign_bundle: f64,
    pub output: f64,
    pub unit_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub edges: Vec<EdgeState>,
    pub exporters: Vec<ExporterState>,
    pub importers: Vec<ImporterState>,
    pub iterations: usize,
    pub residual: f64,
}

impl EquilibriumState {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.edges {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io("equilibrium csv", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub(crate) fn ln_prices(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.price.ln()).collect()
    }
}

/// Exact own-edge best response in logs, holding every other price fixed.
pub(crate) fn edge_best_response(m: &Market<'_>, e: usize, start: f64) -> Result<f64> {
    let mut f = |y: f64| match m.eval_edge(e, y) {
        Ok(r) => y - r.ln_target,
        Err(_) => f64::NAN,
    };
    let (lo, hi) = bracket_root(&mut f, start, 0.25, 80).ok_or_else(|| Error::NoConvergence {
        what: format!("bracketing best response of edge {e}"),
        iterations: 80,
        residual: f64::NAN,
    })?;
    brent_root(f, lo, hi, 1e-15, 200).ok_or_else(|| Error::NoConvergence {
        what: format!("best response of edge {e}"),
        iterations: 200,
        residual: f64::NAN,
    })
}

/// Joint best response of all edges of exporter `i` by damped Newton.
pub(crate) fn exporter_best_response(m: &Market<'_>, i: usize, start: &[f64]) -> Result<Vec<f64>> {
    let n = start.len();
    let resid = |ys: &[f64]| -> Result<DVector<f64>> {
        let ev = m.eval_exporter(i, ys)?;
        Ok(DVector::from_iterator(n, ys.iter().zip(&ev).map(|(y, r)| y - r.ln_target)))
    };
    let mut y = start.to_vec();
    let mut f = resid(&y)?;
    for iter in 0..100 {
        let norm = f.amax();
        if norm < 1e-14 {
            return Ok(y);
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut yp = y.clone();
            yp[c] += h;
            let mut ym = y.clone();
            ym[c] -= h;
            let col = (resid(&yp)? - resid(&ym)?) / (2.0 * h);
            jac.set_column(c, &col);
        }
        let step = jac.lu().solve(&(-&f)).ok_or_else(|| Error::NoConvergence {
            what: format!("exporter {i} block Newton (singular Jacobian)"),
            iterations: iter,
            residual: norm,
        })?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            if let Ok(ft) = resid(&trial) {
                if ft.amax() < norm || t < 1e-3 {
                    y = trial;
                    f = ft;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-6 {
                return Err(Error::NoConvergence {
                    what: format!("exporter {i} block line search"),
                    iterations: iter,
                    residual: norm,
                });
            }
        }
    }
    if f.amax() < 1e-12 {
        return Ok(y);
    }
    Err(Error::NoConvergence {
        what: format!("exporter {i} block Newton"),
        iterations: 100,
        residual: f.amax(),
    })
}

fn initialize(m: &mut Market<'_>) {
    for e in 0..m.ln_price.len() {
        let i = m.ix.exporter_of[e];
        m.ln_price[e] = m.net.exporters[i].cost_shifter.ln() + m.ln_wedge(e);
    }
    m.refresh_all();
    let costs: Vec<f64> = (0..m.net.exporters.len()).map(|i| m.exporter_cost(i).1).collect();
    for e in 0..m.ln_price.len() {
        m.ln_price[e] = costs[m.ix.exporter_of[e]] + m.ln_wedge(e);
    }
    m.refresh_all();
}

fn sweep(m: &mut Market<'_>, cfg: &SolverConfig) -> Result<()> {
    let d = cfg.damping;
    match cfg.order {
        SweepOrder::GaussSeidel => {
            for e in 0..m.ln_price.len() {
                let y = m.ln_price[e];
                let target = edge_best_response(m, e, y)?;
                m.ln_price[e] = y + d * (target - y);
                m.refresh_importer(m.ix.importer_of[e]);
            }
        }
        SweepOrder::Jacobi => {
            let targets = (0..m.ln_price.len())
                .map(|e| edge_best_response(m, e, m.ln_price[e]))
                .collect::<Result<Vec<_>>>()?;
            for (e, t) in targets.into_iter().enumerate() {
                m.ln_price[e] += d * (t - m.ln_price[e]);
            }
            m.refresh_all();
        }
        SweepOrder::ExporterBlock => {
            for i in 0..m.net.exporters.len() {
                let edges = m.ix.by_exporter[i].clone();
                let start: Vec<f64> = edges.iter().map(|&e| m.ln_price[e]).collect();
                let target = exporter_best_response(m, i, &start)?;
                for (k, &e) in edges.iter().enumerate() {
                    m.ln_price[e] = start[k] + d * (target[k] - start[k]);
                }
                for &e in &edges {
                    m.refresh_importer(m.ix.importer_of[e]);
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn snapshot(m: &Market<'_>, iterations: usize, residual: f64) -> Result<EquilibriumState> {
    let net = m.net;
    let mut edges = Vec::with_capacity(net.edges.len());
    let costs: Vec<(f64, f64)> = (0..net.exporters.len()).map(|i| m.exporter_cost(i)).collect();
    for (e, edge) in net.edges.iter().enumerate() {
        let i = m.ix.exporter_of[e];
        let j = m.ix.importer_of[e];
        let quantity = m.ln_quantity[e].exp();
        let (output, ln_cost) = costs[i];
        let price = m.ln_price[e].exp();
        if !(quantity > 0.0 && price > 0.0 && quantity.is_finite() && price.is_finite()) {
            return Err(Error::domain(format!("edge {e} has non-positive price or quantity")));
        }
        edges.push(EdgeState {
            exporter: edge.exporter.clone(),
            importer: edge.importer.clone(),
            price,
            quantity,
            s: m.edge_share(e, m.ln_price[e], &m.importer[j]),
            x: quantity / output,
            markup: (m.ln_price[e] - ln_cost - m.ln_wedge(e)).exp(),
            marginal_cost: ln_cost.exp(),
            tariff: edge.tariff,
        });
    }
    let exporters = net
        .exporters
        .iter()
        .zip(&costs)
        .map(|(node, &(output, ln_cost))| ExporterState {
            id: node.id.clone(),
            output,
            marginal_cost: ln_cost.exp(),
        })
        .collect();
    let importers = net
        .importers
        .iter()
        .zip(&m.importer)
        .map(|(node, b)| ImporterState {
            id: node.id.clone(),
            foreign_price_index: b.ln_foreign_price.exp(),
            foreign_bundle: b.ln_foreign_bundle.exp(),
            output: b.ln_output.exp(),
            unit_cost: b.ln_unit_cost.exp(),
        })
        .collect();
    Ok(EquilibriumState {
        edges,
        exporters,
        importers,
        iterations,
        residual,
    })
}

/// Solve for the price vector at which every edge's price equals its
/// bilateral markup times the exporter's marginal cost and trade wedges.
pub fn solve_equilibrium(
    net: &TradeNetwork,
    sp: &StructuralParams,
    p: &CalibratedParams,
    cfg: &SolverConfig,
) -> Result<EquilibriumState> {
    cfg.validate()?;
    let mut m = Market::new(net, *sp, *p)?;
    initialize(&mut m);
    let mut residual = m.residual()?;
    for iter in 1..=cfg.max_iter {
        sweep(&mut m, cfg)?;
        residual = m.residual()?;
        if residual <= cfg.tol {
            return snapshot(&m, iter, residual);
        }
    }
    Err(Error::NoConvergence {
        what: "network equilibrium".into(),
        iterations: cfg.max_iter,
        residual,
    })
}

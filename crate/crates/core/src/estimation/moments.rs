use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::panel::{CovariateRow, SharePanel, ShareRecord};

/// Product-year context of a pair used to build instruments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentContext {
    pub n_importers: usize,
    pub n_exporters: usize,
    /// Mean and median of s and x over the product-year, excluding both focal matches.
    pub mean_s: f64,
    pub median_s: f64,
    pub mean_x: f64,
    pub median_x: f64,
}

/// One side of a pair: the match between the exporter and one buyer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSide {
    pub importer: String,
    pub ln_price: f64,
    pub s: f64,
    pub x: f64,
    pub alpha: f64,
    /// Longevity, log transactions, multi-product indicator, lagged log outside
    /// option; NaN when unavailable.
    pub covariates: [f64; 4],
}

/// Log price gap between two buyers of the same exporter, product and year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMoment {
    pub exporter: String,
    pub product: String,
    pub year: i32,
    /// Buyer `j`, the smaller importer id.
    pub j: MatchSide,
    /// Buyer `ℓ`.
    pub l: MatchSide,
    /// ln p_j − ln p_ℓ.
    pub gap: f64,
    /// Both sides have identical shares and cost shares, so the model gap is
    /// zero at every parameter value.
    pub degenerate: bool,
    pub context: InstrumentContext,
}

/// Median of `sorted` with positions `p1 < p2` removed.
fn median_excluding(sorted: &[f64], p1: usize, p2: usize) -> f64 {
    let m = sorted.len() - 2;
    if m == 0 {
        return f64::NAN;
    }
    let at = |k: usize| {
        let mut idx = k;
        if idx >= p1 {
            idx += 1;
        }
        if idx >= p2 {
            idx += 1;
        }
        sorted[idx]
    };
    if m % 2 == 1 {
        at(m / 2)
    } else {
        0.5 * (at(m / 2 - 1) + at(m / 2))
    }
}

/// Distinct positions of `a` and `b` in `sorted`, in increasing order.
fn positions(sorted: &[f64], a: f64, b: f64) -> (usize, usize) {
    let pa = sorted.partition_point(|v| *v < a);
    let mut pb = sorted.partition_point(|v| *v < b);
    if pb == pa {
        pb += 1;
    }
    (pa.min(pb), pa.max(pb))
}

struct CellStats {
    n_importers: usize,
    n_exporters: usize,
    s_sorted: Vec<f64>,
    x_sorted: Vec<f64>,
    s_sum: f64,
    x_sum: f64,
}

impl CellStats {
    fn context(&self, a: &ShareRecord, b: &ShareRecord) -> InstrumentContext {
        let m = (self.s_sorted.len() - 2) as f64;
        let (s1, s2) = positions(&self.s_sorted, a.s, b.s);
        let (x1, x2) = positions(&self.x_sorted, a.x, b.x);
        InstrumentContext {
            n_importers: self.n_importers,
            n_exporters: self.n_exporters,
            mean_s: (self.s_sum - a.s - b.s) / m,
            median_s: median_excluding(&self.s_sorted, s1, s2),
            mean_x: (self.x_sum - a.x - b.x) / m,
            median_x: median_excluding(&self.x_sorted, x1, x2),
        }
    }
}

fn cell_stats(panel: &SharePanel) -> HashMap<(&str, i32), CellStats> {
    let mut rows: HashMap<(&str, i32), Vec<&ShareRecord>> = HashMap::new();
    for r in &panel.rows {
        rows.entry((&r.product, r.year)).or_default().push(r);
    }
    rows.into_iter()
        .map(|(k, v)| {
            let imp: HashSet<&str> = v.iter().map(|r| r.importer.as_str()).collect();
            let exp: HashSet<&str> = v.iter().map(|r| r.exporter.as_str()).collect();
            let mut s: Vec<f64> = v.iter().map(|r| r.s).collect();
            let mut x: Vec<f64> = v.iter().map(|r| r.x).collect();
            s.sort_by(f64::total_cmp);
            x.sort_by(f64::total_cmp);
            let stats = CellStats {
                n_importers: imp.len(),
                n_exporters: exp.len(),
                s_sum: s.iter().sum(),
                x_sum: x.iter().sum(),
                s_sorted: s,
                x_sorted: x,
            };
            (k, stats)
        })
        .collect()
}

/// Every unordered buyer pair of each (exporter, product, year), with the
/// lower importer id as `j`. Covariates are attached when supplied.
pub fn build_pair_moments(panel: &SharePanel, covariates: Option<&[CovariateRow]>) -> Vec<PairMoment> {
    let cov: HashMap<(&str, &str, &str, i32), [f64; 4]> = covariates
        .unwrap_or_default()
        .iter()
        .map(|c| {
            (
                (c.importer.as_str(), c.exporter.as_str(), c.product.as_str(), c.year),
                [c.longevity, c.ln_transactions, c.multi_product, c.ln_outside_option],
            )
        })
        .collect();
    let stats = cell_stats(panel);
    let mut groups: BTreeMap<(&str, &str, i32), Vec<&ShareRecord>> = BTreeMap::new();
    for r in &panel.rows {
        groups.entry((&r.exporter, &r.product, r.year)).or_default().push(r);
    }
    let side = |r: &ShareRecord| MatchSide {
        importer: r.importer.clone(),
        ln_price: r.price.ln(),
        s: r.s,
        x: r.x,
        alpha: r.alpha,
        covariates: cov
            .get(&(r.importer.as_str(), r.exporter.as_str(), r.product.as_str(), r.year))
            .copied()
            .unwrap_or([f64::NAN; 4]),
    };
    let mut out = Vec::new();
    for ((exporter, product, year), mut buyers) in groups {
        buyers.sort_by(|a, b| a.importer.cmp(&b.importer));
        let cell = &stats[&(product, year)];
        for a in 0..buyers.len() {
            for b in a + 1..buyers.len() {
                let (rj, rl) = (buyers[a], buyers[b]);
                out.push(PairMoment {
                    exporter: exporter.to_string(),
                    product: product.to_string(),
                    year,
                    gap: rj.price.ln() - rl.price.ln(),
                    degenerate: rj.s == rl.s && rj.x == rl.x && rj.alpha == rl.alpha,
                    context: cell.context(rj, rl),
                    j: side(rj),
                    l: side(rl),
                });
            }
        }
    }
    out
}

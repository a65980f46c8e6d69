use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::shares::aggregate_annual;
use super::TransactionRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    /// Within-product unit-value percentile band kept, as fractions.
    pub trim_percentiles: Option<(f64, f64)>,
    /// Largest admissible |Δln p| between consecutive years.
    pub max_abs_dlnp: Option<f64>,
    pub require_consecutive: bool,
    /// Minimum buyers per supplier-product-year, in this and an adjacent year.
    pub min_buyers: usize,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            trim_percentiles: Some((0.01, 0.99)),
            max_abs_dlnp: Some(4.0),
            require_consecutive: true,
            min_buyers: 2,
        }
    }
}

impl FilterPolicy {
    /// Policy that keeps every record.
    pub fn none() -> Self {
        Self {
            trim_percentiles: None,
            max_abs_dlnp: None,
            require_consecutive: false,
            min_buyers: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_cells: usize,
    pub trimmed_unit_value: usize,
    pub large_price_change: usize,
    pub not_consecutive: usize,
    pub few_buyers: usize,
    pub output_cells: usize,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn trim_unit_values(rows: Vec<TransactionRecord>, lo: f64, hi: f64) -> Vec<TransactionRecord> {
    let mut by_product: HashMap<&str, Vec<f64>> = HashMap::new();
    for r in &rows {
        by_product.entry(&r.product).or_default().push(r.unit_value());
    }
    let bands: HashMap<String, (f64, f64)> = by_product
        .into_iter()
        .map(|(h, mut v)| {
            v.sort_by(f64::total_cmp);
            (h.to_string(), (quantile_sorted(&v, lo), quantile_sorted(&v, hi)))
        })
        .collect();
    rows.into_iter()
        .filter(|r| {
            let (a, b) = bands[&r.product];
            let u = r.unit_value();
            u >= a && u <= b
        })
        .collect()
}

type SeriesKey = (String, String, String);

fn series(rows: &[TransactionRecord]) -> BTreeMap<SeriesKey, Vec<usize>> {
    let mut out: BTreeMap<SeriesKey, Vec<usize>> = BTreeMap::new();
    for (k, r) in rows.iter().enumerate() {
        out.entry((r.importer.clone(), r.exporter.clone(), r.product.clone()))
            .or_default()
            .push(k);
    }
    for idx in out.values_mut() {
        idx.sort_by_key(|&k| rows[k].year);
    }
    out
}

/// Walks each match in time and drops a year whose log unit value jumps by
/// more than `limit` from the last kept consecutive year.
fn drop_price_jumps(rows: Vec<TransactionRecord>, limit: f64) -> Vec<TransactionRecord> {
    let mut keep = vec![true; rows.len()];
    for idx in series(&rows).values() {
        let mut last: Option<(i32, f64)> = None;
        for &k in idx {
            let (t, lp) = (rows[k].year, rows[k].unit_value().ln());
            if let Some((t0, lp0)) = last {
                if t == t0 + 1 && (lp - lp0).abs() > limit {
                    keep[k] = false;
                    continue;
                }
            }
            last = Some((t, lp));
        }
    }
    rows.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect()
}

fn keep_consecutive(rows: Vec<TransactionRecord>) -> Vec<TransactionRecord> {
    let present: HashSet<(&str, &str, &str, i32)> = rows
        .iter()
        .map(|r| (r.importer.as_str(), r.exporter.as_str(), r.product.as_str(), r.year))
        .collect();
    let keep: Vec<bool> = rows
        .iter()
        .map(|r| {
            let k = |t| (r.importer.as_str(), r.exporter.as_str(), r.product.as_str(), t);
            present.contains(&k(r.year - 1)) || present.contains(&k(r.year + 1))
        })
        .collect();
    rows.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect()
}

fn keep_multi_buyer(rows: Vec<TransactionRecord>, min_buyers: usize) -> Vec<TransactionRecord> {
    let mut count: HashMap<(&str, &str, i32), usize> = HashMap::new();
    for r in &rows {
        *count.entry((&r.exporter, &r.product, r.year)).or_default() += 1;
    }
    let ok = |e: &str, h: &str, t: i32| count.get(&(e, h, t)).copied().unwrap_or(0) >= min_buyers;
    let keep: Vec<bool> = rows
        .iter()
        .map(|r| {
            ok(&r.exporter, &r.product, r.year)
                && (ok(&r.exporter, &r.product, r.year - 1) || ok(&r.exporter, &r.product, r.year + 1))
        })
        .collect();
    rows.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect()
}

/// Sample restrictions on annual records, applied in order: unit-value trim,
/// price-jump removal, then the consecutive-year and multi-buyer conditions
/// iterated jointly until nothing else drops.
pub fn apply_filters(
    records: &[TransactionRecord],
    policy: &FilterPolicy,
) -> Result<(Vec<TransactionRecord>, FilterReport)> {
    let mut rows = aggregate_annual(records)?;
    let mut report = FilterReport {
        input_cells: rows.len(),
        ..FilterReport::default()
    };
    if let Some((lo, hi)) = policy.trim_percentiles {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Config(format!("bad percentile band ({lo}, {hi})")));
        }
        let n = rows.len();
        rows = trim_unit_values(rows, lo, hi);
        report.trimmed_unit_value = n - rows.len();
    }
    if let Some(limit) = policy.max_abs_dlnp {
        let n = rows.len();
        rows = drop_price_jumps(rows, limit);
        report.large_price_change = n - rows.len();
    }
    loop {
        let before = rows.len();
        if policy.require_consecutive {
            let n = rows.len();
            rows = keep_consecutive(rows);
            report.not_consecutive += n - rows.len();
        }
        if policy.min_buyers > 1 {
            let n = rows.len();
            rows = keep_multi_buyer(rows, policy.min_buyers);
            report.few_buyers += n - rows.len();
        }
        if rows.len() == before {
            break;
        }
    }
    report.output_cells = rows.len();
    Ok((rows, report))
}

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{SharePanel, ShareRecord, TransactionRecord};
use crate::error::{Error, Result};

type MatchKey = (String, String, String, i32);

/// Sum shipments to one record per (importer, exporter, product, year).
///
/// Values and quantities add up; the tariff is value-weighted. Output is
/// sorted by key.
pub fn aggregate_annual(records: &[TransactionRecord]) -> Result<Vec<TransactionRecord>> {
    let mut cells: BTreeMap<MatchKey, TransactionRecord> = BTreeMap::new();
    for r in records {
        let key = (r.importer.clone(), r.exporter.clone(), r.product.clone(), r.year);
        match cells.get_mut(&key) {
            None => {
                let mut first = r.clone();
                first.tariff *= r.value;
                cells.insert(key, first);
            }
            Some(acc) => {
                if acc.country != r.country {
                    return Err(Error::Data(format!(
                        "match {} -> {} product {} year {} reports countries {} and {}",
                        r.exporter, r.importer, r.product, r.year, acc.country, r.country
                    )));
                }
                acc.value += r.value;
                acc.quantity += r.quantity;
                acc.tariff += r.tariff * r.value;
            }
        }
    }
    Ok(cells
        .into_values()
        .map(|mut r| {
            r.tariff = if r.value > 0.0 { r.tariff / r.value } else { 0.0 };
            r
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareDiagnostics {
    pub cells: usize,
    /// Annual cells dropped because a value or quantity total was not positive.
    pub excluded_zero_denominator: usize,
}

/// Supplier shares from values within (importer, product, year), buyer shares
/// from quantities within (exporter, product, year), and product cost shares
/// from values within (importer, year).
pub fn compute_shares(records: &[TransactionRecord]) -> Result<(SharePanel, ShareDiagnostics)> {
    let annual = aggregate_annual(records)?;
    let mut diag = ShareDiagnostics::default();
    let usable: Vec<&TransactionRecord> = annual
        .iter()
        .filter(|r| {
            let ok = r.value > 0.0 && r.quantity > 0.0 && r.value.is_finite() && r.quantity.is_finite();
            if !ok {
                diag.excluded_zero_denominator += 1;
            }
            ok
        })
        .collect();
    let mut buyer_spend: HashMap<(&str, &str, i32), f64> = HashMap::new();
    let mut seller_volume: HashMap<(&str, &str, i32), f64> = HashMap::new();
    let mut buyer_total: HashMap<(&str, i32), f64> = HashMap::new();
    for r in &usable {
        *buyer_spend.entry((&r.importer, &r.product, r.year)).or_default() += r.value;
        *seller_volume.entry((&r.exporter, &r.product, r.year)).or_default() += r.quantity;
        *buyer_total.entry((&r.importer, r.year)).or_default() += r.value;
    }
    let rows = usable
        .iter()
        .map(|r| ShareRecord {
            importer: r.importer.clone(),
            exporter: r.exporter.clone(),
            product: r.product.clone(),
            year: r.year,
            price: r.unit_value(),
            s: r.value / buyer_spend[&(r.importer.as_str(), r.product.as_str(), r.year)],
            x: r.quantity / seller_volume[&(r.exporter.as_str(), r.product.as_str(), r.year)],
            alpha: buyer_spend[&(r.importer.as_str(), r.product.as_str(), r.year)]
                / buyer_total[&(r.importer.as_str(), r.year)],
        })
        .collect::<Vec<_>>();
    diag.cells = rows.len();
    Ok((SharePanel { rows }, diag))
}

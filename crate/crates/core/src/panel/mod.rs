//! Transaction panels, share construction, sample filters and synthetic data.

mod filters;
mod generator;
mod montecarlo;
mod shares;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filters::{apply_filters, FilterPolicy, FilterReport};
pub(crate) use filters::quantile_sorted;
pub use generator::{
    compute_covariates, generate_panel, CovariateRow, EventMode, GeneratedPanel, MatchTruth, PanelConfig,
    PhiModel,
};
pub use montecarlo::{generate_montecarlo_blocks, MonteCarloDesign, ShareLaw};
pub use shares::{aggregate_annual, compute_shares, ShareDiagnostics};

/// One shipment (or annual total) from a foreign exporter to an importer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub importer: String,
    pub exporter: String,
    pub product: String,
    pub country: String,
    pub year: i32,
    /// Duty-exclusive customs value.
    pub value: f64,
    pub quantity: f64,
    /// Statutory ad valorem tariff τ.
    pub tariff: f64,
}

impl TransactionRecord {
    pub fn unit_value(&self) -> f64 {
        self.value / self.quantity
    }

    fn validate(&self, row: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Data(format!("row {row}: {what}")));
        if self.importer.is_empty() || self.exporter.is_empty() || self.product.is_empty() || self.country.is_empty()
        {
            return bad("empty identifier");
        }
        if !(self.value > 0.0 && self.value.is_finite()) {
            return bad("column value must be positive");
        }
        if !(self.quantity > 0.0 && self.quantity.is_finite()) {
            return bad("column quantity must be positive");
        }
        if !(self.tariff >= 0.0 && self.tariff.is_finite()) {
            return bad("column tariff must be non-negative");
        }
        Ok(())
    }
}

/// Match-year prices and shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRecord {
    pub importer: String,
    pub exporter: String,
    pub product: String,
    pub year: i32,
    pub price: f64,
    pub s: f64,
    pub x: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SharePanel {
    pub rows: Vec<ShareRecord>,
}

fn read_rows<T: serde::de::DeserializeOwned, R: Read>(input: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (k, rec) in rdr.deserialize().enumerate() {
        let row: T = rec.map_err(|e| Error::Data(format!("row {}: {e}", k + 1)))?;
        out.push(row);
    }
    Ok(out)
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn read_transactions<R: Read>(input: R) -> Result<Vec<TransactionRecord>> {
    let rows: Vec<TransactionRecord> = read_rows(input)?;
    for (k, r) in rows.iter().enumerate() {
        r.validate(k + 1)?;
    }
    Ok(rows)
}

pub fn read_transactions_file(path: impl AsRef<Path>) -> Result<Vec<TransactionRecord>> {
    read_transactions(open(path.as_ref())?)
}

pub fn write_transactions<W: Write>(rows: &[TransactionRecord], out: W) -> Result<()> {
    write_rows(rows, out)
}

pub fn write_transactions_file(rows: &[TransactionRecord], path: impl AsRef<Path>) -> Result<()> {
    write_rows(rows, create(path.as_ref())?)
}

impl SharePanel {
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let rows: Vec<ShareRecord> = read_rows(input)?;
        for (k, r) in rows.iter().enumerate() {
            let ok = r.price > 0.0
                && r.price.is_finite()
                && (0.0..=1.0).contains(&r.s)
                && (0.0..=1.0).contains(&r.x)
                && r.alpha > 0.0
                && r.alpha <= 1.0;
            if !ok {
                return Err(Error::Data(format!(
                    "row {}: price must be positive, s and x in [0,1], alpha in (0,1]",
                    k + 1
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(open(path.as_ref())?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&self.rows, out)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(create(path.as_ref())?)
    }
}

pub fn read_covariates_file(path: impl AsRef<Path>) -> Result<Vec<CovariateRow>> {
    read_rows(open(path.as_ref())?)
}

pub fn write_covariates_file(rows: &[CovariateRow], path: impl AsRef<Path>) -> Result<()> {
    write_rows(rows, create(path.as_ref())?)
}

use std::io::Write;

use serde::Serialize;

use super::elasticity::passthrough;
use crate::error::{Error, Result};
use crate::params::{BilateralShares, CalibratedParams, StructuralParams};

/// One grid point; `phi` is the pass-through Φ and `lambda_elas` the cost elasticity Λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatmapRow {
    pub s: f64,
    pub x: f64,
    pub phi: f64,
    pub gamma: f64,
    pub lambda_elas: f64,
    pub mu: f64,
}

/// Pass-through on an evenly spaced `n × n` grid over [0,1]², s-major.
pub fn heatmap_grid(
    sp: &StructuralParams,
    p: &CalibratedParams,
    resolution: usize,
) -> Result<Vec<HeatmapRow>> {
    if resolution < 2 {
        return Err(Error::domain(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let step = 1.0 / (resolution - 1) as f64;
    let mut rows = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let s = if i + 1 == resolution { 1.0 } else { i as f64 * step };
        for j in 0..resolution {
            let x = if j + 1 == resolution { 1.0 } else { j as f64 * step };
            let e = passthrough(BilateralShares { s, x }, sp, p)?;
            rows.push(HeatmapRow {
                s,
                x,
                phi: e.passthrough,
                gamma: e.markup_elasticity,
                lambda_elas: e.cost_elasticity,
                mu: e.markup.mu,
            });
        }
    }
    Ok(rows)
}

pub fn write_heatmap_csv<W: Write>(rows: &[HeatmapRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("heatmap csv", e))?;
    Ok(())
}

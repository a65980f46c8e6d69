//! Nash-in-Nash price equilibrium on a fixed bipartite exporter–importer network.
//!
//! Each importer combines a CES bundle of foreign varieties with a domestic
//! input and faces isoelastic downstream demand; each exporter produces on an
//! isoelastic cost curve. Prices on every edge satisfy the bilateral markup
//! rule given the realized shares.

mod model;
mod passthrough;
mod solver;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{CalibratedParams, StructuralParams};

pub use passthrough::{direct_passthrough_fd, direct_responses, exporter_passthrough_fd, full_passthrough_system};
pub use solver::{
    solve_equilibrium, EdgeState, EquilibriumState, ExporterState, ImporterState, SolverConfig, SweepOrder,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExporterNode {
    pub id: String,
    /// Cost shifter k_i in c_i = k_i q_i^{(1−θ)/θ}.
    pub cost_shifter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImporterNode {
    pub id: String,
    pub productivity: f64,
    pub demand_shifter: f64,
    #[serde(default = "one")]
    pub domestic_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeEdge {
    pub exporter: String,
    pub importer: String,
    /// CES taste shifter ς_ij.
    pub taste: f64,
    /// Gross tariff T = 1 + τ.
    #[serde(default = "one")]
    pub tariff: f64,
    /// Match-specific cost multiplier κ_ij on the exporter's marginal cost.
    #[serde(default = "one")]
    pub cost_shifter: f64,
    /// Match-specific bargaining power overriding the network-wide φ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bargaining_power: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TradeNetwork {
    pub exporters: Vec<ExporterNode>,
    pub importers: Vec<ImporterNode>,
    pub edges: Vec<TradeEdge>,
}

/// Network together with the parameters it is meant to be solved under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub network: TradeNetwork,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated: Option<CalibratedParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structural: Option<StructuralParams>,
}

impl NetworkFile {
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let file: NetworkFile = serde_json::from_str(&text)?;
        file.network.index()?;
        Ok(file)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(&path, e))
    }
}

/// Integer adjacency built once per solve.
#[derive(Debug, Clone)]
pub(crate) struct Indexed {
    pub exporter_of: Vec<usize>,
    pub importer_of: Vec<usize>,
    pub by_exporter: Vec<Vec<usize>>,
    pub by_importer: Vec<Vec<usize>>,
}

impl TradeNetwork {
    pub fn edge_index(&self, exporter: &str, importer: &str) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.exporter == exporter && e.importer == importer)
    }

    pub fn exporter_index(&self, exporter: &str) -> Option<usize> {
        self.exporters.iter().position(|e| e.id == exporter)
    }

    pub(crate) fn index(&self) -> Result<Indexed> {
        let mut exp_ids = HashMap::new();
        for (k, e) in self.exporters.iter().enumerate() {
            if e.id.is_empty() || exp_ids.insert(e.id.as_str(), k).is_some() {
                return Err(Error::Network(format!("exporter id {:?} empty or duplicated", e.id)));
            }
            if !(e.cost_shifter > 0.0 && e.cost_shifter.is_finite()) {
                return Err(Error::Network(format!("exporter {} needs a positive cost shifter", e.id)));
            }
        }
        let mut imp_ids = HashMap::new();
        for (k, m) in self.importers.iter().enumerate() {
            if m.id.is_empty() || imp_ids.insert(m.id.as_str(), k).is_some() {
                return Err(Error::Network(format!("importer id {:?} empty or duplicated", m.id)));
            }
            for (name, v) in [
                ("productivity", m.productivity),
                ("demand shifter", m.demand_shifter),
                ("domestic price", m.domestic_price),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Network(format!("importer {} needs a positive {name}", m.id)));
                }
            }
        }
        let mut by_exporter = vec![Vec::new(); self.exporters.len()];
        let mut by_importer = vec![Vec::new(); self.importers.len()];
        let mut exporter_of = Vec::with_capacity(self.edges.len());
        let mut importer_of = Vec::with_capacity(self.edges.len());
        let mut seen = HashMap::new();
        for (k, e) in self.edges.iter().enumerate() {
            let i = *exp_ids
                .get(e.exporter.as_str())
                .ok_or_else(|| Error::Network(format!("edge {k} names unknown exporter {}", e.exporter)))?;
            let j = *imp_ids
                .get(e.importer.as_str())
                .ok_or_else(|| Error::Network(format!("edge {k} names unknown importer {}", e.importer)))?;
            if seen.insert((i, j), k).is_some() {
                return Err(Error::Network(format!(
                    "duplicate edge {} -> {}",
                    e.exporter, e.importer
                )));
            }
            if !(e.taste > 0.0 && e.taste.is_finite()) {
                return Err(Error::Network(format!("edge {k} needs a positive taste shifter")));
            }
            if !(e.tariff >= 1.0 && e.tariff.is_finite()) {
                return Err(Error::Network(format!("edge {k} gross tariff must be at least 1")));
            }
            if !(e.cost_shifter > 0.0 && e.cost_shifter.is_finite()) {
                return Err(Error::Network(format!("edge {k} needs a positive cost multiplier")));
            }
            if let Some(phi) = e.bargaining_power {
                if !(phi > 0.0 && phi < 1.0) {
                    return Err(Error::Network(format!("edge {k} bargaining power must lie in (0,1)")));
                }
            }
            by_exporter[i].push(k);
            by_importer[j].push(k);
            exporter_of.push(i);
            importer_of.push(j);
        }
        if let Some(i) = by_exporter.iter().position(Vec::is_empty) {
            return Err(Error::Network(format!("exporter {} has no edges", self.exporters[i].id)));
        }
        if let Some(j) = by_importer.iter().position(Vec::is_empty) {
            return Err(Error::Network(format!("importer {} has no edges", self.importers[j].id)));
        }
        Ok(Indexed {
            exporter_of,
            importer_of,
            by_exporter,
            by_importer,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_by_two() -> TradeNetwork {
        let mut net = TradeNetwork::default();
        for i in 0..2 {
            net.exporters.push(ExporterNode {
                id: format!("e{i}"),
                cost_shifter: 1.0 + 0.2 * i as f64,
            });
            net.importers.push(ImporterNode {
                id: format!("m{i}"),
                productivity: 1.0,
                demand_shifter: 1.0 + i as f64,
                domestic_price: 1.0,
            });
        }
        for i in 0..2 {
            for j in 0..2 {
                net.edges.push(TradeEdge {
                    exporter: format!("e{i}"),
                    importer: format!("m{j}"),
                    taste: 1.0,
                    tariff: 1.0,
                    cost_shifter: 1.0,
                    bargaining_power: None,
                });
            }
        }
        net
    }

    #[test]
    fn validation_catches_structural_problems() {
        let mut net = two_by_two();
        assert!(net.index().is_ok());
        net.edges.push(net.edges[0].clone());
        assert!(net.index().is_err());
        let mut net = two_by_two();
        net.exporters.push(ExporterNode { id: "lonely".into(), cost_shifter: 1.0 });
        assert!(net.index().is_err());
        let mut net = two_by_two();
        net.edges[1].tariff = 0.9;
        assert!(net.index().is_err());
        let mut net = two_by_two();
        net.edges[1].importer = "nowhere".into();
        assert!(net.index().is_err());
    }

    #[test]
    fn json_round_trip() {
        let file = NetworkFile {
            network: two_by_two(),
            calibrated: Some(CalibratedParams::baseline()),
            structural: Some(StructuralParams::baseline()),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        file.write_json(&path).unwrap();
        let back = NetworkFile::read_json(&path).unwrap();
        assert_eq!(back.network, file.network);
        assert_eq!(back.calibrated, file.calibrated);
        assert_eq!(back.structural, file.structural);
    }

    #[test]
    fn json_defaults_apply() {
        let text = r#"{"network":{"exporters":[{"id":"a","cost_shifter":1.0}],
            "importers":[{"id":"b","productivity":1.0,"demand_shifter":2.0}],
            "edges":[{"exporter":"a","importer":"b","taste":1.0}]}}"#;
        let f: NetworkFile = serde_json::from_str(text).unwrap();
        assert_eq!(f.network.importers[0].domestic_price, 1.0);
        assert_eq!(f.network.edges[0].tariff, 1.0);
        assert!(f.calibrated.is_none());
    }
}

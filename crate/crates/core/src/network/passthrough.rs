use nalgebra::{DMatrix, DVector};

use super::model::Market;
use super::solver::{edge_best_response, exporter_best_response, EdgeState, EquilibriumState};
use super::TradeNetwork;
use crate::error::{Error, Result};
use crate::params::{BilateralShares, CalibratedParams, StructuralParams};
use crate::pricing::{residual_demand_elasticity, share_elasticities};

fn market_at<'a>(
    net: &'a TradeNetwork,
    state: &EquilibriumState,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<Market<'a>> {
    if state.edges.len() != net.edges.len() {
        return Err(Error::Network(format!(
            "state has {} edges but the network has {}",
            state.edges.len(),
            net.edges.len()
        )));
    }
    let mut m = Market::new(net, *sp, *p)?;
    m.ln_price = state.ln_prices();
    m.refresh_all();
    Ok(m)
}

fn check_step(dln: f64) -> Result<()> {
    if dln == 0.0 || !dln.is_finite() {
        return Err(Error::domain(format!("finite-difference step must be nonzero, got {dln}")));
    }
    Ok(())
}

/// Central-difference dln p/dln T on one edge, re-solving only that edge's
/// price while every other price stays at its equilibrium value.
pub fn direct_passthrough_fd(
    net: &TradeNetwork,
    state: &EquilibriumState,
    edge: usize,
    dln_t: f64,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<f64> {
    check_step(dln_t)?;
    let mut m = market_at(net, state, sp, p)?;
    if edge >= net.edges.len() {
        return Err(Error::Network(format!("edge index {edge} out of range")));
    }
    let y0 = m.ln_price[edge];
    let w0 = m.ln_wedge(edge);
    m.set_ln_wedge(edge, w0 + dln_t);
    let up = edge_best_response(&m, edge, y0)?;
    m.set_ln_wedge(edge, w0 - dln_t);
    let down = edge_best_response(&m, edge, y0)?;
    Ok((up - down) / (2.0 * dln_t))
}

/// Outcome on every edge when it alone re-negotiates under the wedges of
/// `net` (tariffs, cost multipliers, bargaining powers) while all other
/// prices stay at `state`.
pub fn direct_responses(
    net: &TradeNetwork,
    state: &EquilibriumState,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<Vec<EdgeState>> {
    let m = market_at(net, state, sp, p)?;
    net.edges
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let y = edge_best_response(&m, e, m.ln_price[e])?;
            let o = m.edge_outcome(e, y)?;
            Ok(EdgeState {
                exporter: edge.exporter.clone(),
                importer: edge.importer.clone(),
                price: y.exp(),
                quantity: o.ln_quantity.exp(),
                s: o.s,
                x: o.x,
                markup: (y - o.ln_cost - m.ln_wedge(e)).exp(),
                marginal_cost: o.ln_cost.exp(),
                tariff: edge.tariff,
            })
        })
        .collect()
}

/// Central-difference response of every price of one exporter to a common
/// log shock on its cost, other exporters' prices held fixed.
///
/// Returns `(edge index, dln p/dln k)` pairs in the exporter's edge order.
pub fn exporter_passthrough_fd(
    net: &TradeNetwork,
    state: &EquilibriumState,
    exporter: usize,
    dln_k: f64,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<Vec<(usize, f64)>> {
    check_step(dln_k)?;
    let mut m = market_at(net, state, sp, p)?;
    let edges = m
        .ix
        .by_exporter
        .get(exporter)
        .cloned()
        .ok_or_else(|| Error::Network(format!("exporter index {exporter} out of range")))?;
    let start: Vec<f64> = edges.iter().map(|&e| m.ln_price[e]).collect();
    let base: Vec<f64> = edges.iter().map(|&e| m.ln_wedge(e)).collect();
    let mut solve = |shift: f64| -> Result<Vec<f64>> {
        for (k, &e) in edges.iter().enumerate() {
            m.set_ln_wedge(e, base[k] + shift);
        }
        exporter_best_response(&m, exporter, &start)
    };
    let up = solve(dln_k)?;
    let down = solve(-dln_k)?;
    Ok(edges
        .iter()
        .enumerate()
        .map(|(k, &e)| (e, (up[k] - down[k]) / (2.0 * dln_k)))
        .collect())
}

/// Pass-through Ψ of an exporter-wide cost shock including spillovers through
/// the exporter's other buyers and rival suppliers' markup responses.
///
/// Returns `(edge index, Ψ)` pairs in the exporter's edge order.
pub fn full_passthrough_system(
    net: &TradeNetwork,
    state: &EquilibriumState,
    exporter: usize,
    sp: &StructuralParams,
    p: &CalibratedParams,
) -> Result<Vec<(usize, f64)>> {
    let ix = net.index()?;
    if state.edges.len() != net.edges.len() {
        return Err(Error::Network("state does not match network".into()));
    }
    let edges = ix
        .by_exporter
        .get(exporter)
        .cloned()
        .ok_or_else(|| Error::Network(format!("exporter index {exporter} out of range")))?;
    let edge_sp = |e: usize| StructuralParams {
        phi: net.edges[e].bargaining_power.unwrap_or(sp.phi),
        theta: sp.theta,
    };
    let shares_of = |e: usize| BilateralShares {
        s: state.edges[e].s.clamp(0.0, 1.0),
        x: state.edges[e].x.clamp(0.0, 1.0),
    };
    let r = sp.cost_exponent();
    let n = edges.len();
    let mut phi_tilde = vec![0.0; n];
    let mut gamma_x = vec![0.0; n];
    let mut x_eps = vec![0.0; n];
    for (k, &e) in edges.iter().enumerate() {
        let sh = shares_of(e);
        let se = share_elasticities(sh, &edge_sp(e), p)?;
        let eps = residual_demand_elasticity(sh, p);
        let mut rival = 0.0;
        for &z in &ix.by_importer[ix.importer_of[e]] {
            if z != e {
                let rs = shares_of(z);
                rival += rs.s * share_elasticities(rs, &edge_sp(z), p)?.wrt_s;
            }
        }
        let share_term = if rival == 0.0 {
            se.wrt_s_scaled
        } else {
            se.wrt_s_scaled - se.wrt_s * sh.s * (p.rho - 1.0) * rival
        };
        let den = 1.0 + (p.rho - 1.0) * share_term + se.wrt_x * eps * (1.0 - sh.x) + r * eps * sh.x;
        if !(den.is_finite() && den != 0.0) {
            return Err(Error::SingularPassthrough(den));
        }
        phi_tilde[k] = 1.0 / den;
        gamma_x[k] = se.wrt_x;
        x_eps[k] = sh.x * eps;
    }
    let mut a = DMatrix::identity(n, n);
    for zr in 0..n {
        for w in 0..n {
            if w != zr {
                a[(zr, w)] = -phi_tilde[zr] * (gamma_x[zr] - r) * x_eps[w];
            }
        }
    }
    let rhs = DVector::from_vec(phi_tilde);
    let psi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Network(format!("spillover system of exporter {exporter} is singular")))?;
    Ok(edges.into_iter().zip(psi.iter().copied()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::two_by_two;
    use crate::network::{solve_equilibrium, ExporterNode, ImporterNode, SolverConfig, TradeEdge};
    use crate::pricing::passthrough;
    use approx::assert_relative_eq;

    fn star(n_buyers: usize) -> TradeNetwork {
        let mut net = TradeNetwork {
            exporters: vec![ExporterNode { id: "e".into(), cost_shifter: 1.0 }],
            ..TradeNetwork::default()
        };
        for j in 0..n_buyers {
            net.importers.push(ImporterNode {
                id: format!("m{j}"),
                productivity: 1.0,
                demand_shifter: 1.0 + j as f64,
                domestic_price: 1.0,
            });
            net.edges.push(TradeEdge {
                exporter: "e".into(),
                importer: format!("m{j}"),
                taste: 1.0,
                tariff: 1.0,
                cost_shifter: 1.0,
                bargaining_power: None,
            });
        }
        net
    }

    #[test]
    fn full_corner_passes_through_everything() {
        let cal = CalibratedParams::baseline();
        let sp = StructuralParams { phi: 1.0 - 1e-13, theta: 1.0 };
        let net = two_by_two();
        let state = solve_equilibrium(&net, &sp, &cal, &SolverConfig::default()).unwrap();
        for e in 0..4 {
            let fd = direct_passthrough_fd(&net, &state, e, 1e-6, &sp, &cal).unwrap();
            assert!((fd - 1.0).abs() < 1e-8, "{fd}");
        }
    }

    #[test]
    fn zero_step_is_rejected() {
        let cal = CalibratedParams::baseline();
        let sp = StructuralParams::baseline();
        let net = two_by_two();
        let state = solve_equilibrium(&net, &sp, &cal, &SolverConfig::default()).unwrap();
        assert!(direct_passthrough_fd(&net, &state, 0, 0.0, &sp, &cal).is_err());
    }

    #[test]
    fn direct_fd_matches_closed_form() {
        let cal = CalibratedParams::baseline();
        let sp = StructuralParams::baseline();
        let mut net = two_by_two();
        net.edges[0].taste = 1.4;
        let state = solve_equilibrium(&net, &sp, &cal, &SolverConfig::default()).unwrap();
        for (e, es) in state.edges.iter().enumerate() {
            let fd = direct_passthrough_fd(&net, &state, e, 1e-6, &sp, &cal).unwrap();
            let cf = passthrough(BilateralShares { s: es.s, x: es.x }, &sp, &cal).unwrap().passthrough;
            assert_relative_eq!(fd, cf, max_relative = 1e-4);
            assert!(fd < 1.0);
        }
    }

    #[test]
    fn direct_responses_at_unchanged_wedges_reproduce_equilibrium() {
        let cal = CalibratedParams::baseline();
        let sp = StructuralParams::baseline();
        let net = two_by_two();
        let state = solve_equilibrium(&net, &sp, &cal, &SolverConfig::default()).unwrap();
        let same = direct_responses(&net, &state, &sp, &cal).unwrap();
        for (a, b) in same.iter().zip(&state.edges) {
            assert_relative_eq!(a.price, b.price, max_relative = 1e-9);
            assert_relative_eq!(a.s, b.s, epsilon = 1e-9);
            assert_relative_eq!(a.markup, b.markup, max_relative = 1e-9);
        }
        let mut taxed = net.clone();
        taxed.edges[2].tariff = 1.25;
        let moved = direct_responses(&taxed, &state, &sp, &cal).unwrap();
        assert!(moved[2].price > state.edges[2].price);
        assert!(moved[2].price < 1.25 * state.edges[2].price);
        assert_relative_eq!(moved[0].price, state.edges[0].price, max_relative = 1e-9);
    }

    #[test]
    fn single_link_psi_equals_phi_tilde_and_phi() {
        let cal = CalibratedParams::baseline();
        let sp = StructuralParams::baseline();
        let net = star(1);
        let state = solve_equilibrium(&net, &sp, &cal, &SolverConfig::default()).unwrap();
        let psi = full_passthrough_system(&net, &state, 0, &sp, &cal).unwrap();
        let phi = passthrough(BilateralShares { s: 1.0, x: 1.0 }, &sp, &cal).unwrap().passthrough;
        assert_relative_eq!(psi[0].1, phi, max_relative = 1e-12);
    }

    #[test]
    fn psi_matches_exporter_wide_resolve() {
        let cal = CalibratedParams::baseline();
        for sp in [StructuralParams::baseline(), StructuralParams::new(0.4, 1.0).unwrap()] {
            let net = star(3);
            let state = solve_equilibrium(&net, &sp, &cal, &SolverConfig::default()).unwrap();
            let psi = full_passthrough_system(&net, &state, 0, &sp, &cal).unwrap();
            let fd = exporter_passthrough_fd(&net, &state, 0, 1e-6, &sp, &cal).unwrap();
            for (a, b) in psi.iter().zip(&fd) {
                assert_eq!(a.0, b.0);
                assert_relative_eq!(a.1, b.1, max_relative = 1e-6);
            }
        }
    }
}

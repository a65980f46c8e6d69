//! Independent oracles for derived values, with the reference numbers frozen.

use bargain::estimation::{build_pair_moments, gmm_estimate, nls_joint, Covariate, GmmConfig, KappaSpec, NlsConfig, PhiSpec};
use bargain::network::{
    direct_passthrough_fd, solve_equilibrium, ExporterNode, ImporterNode, SolverConfig, TradeEdge, TradeNetwork,
};
use bargain::panel::{compute_shares, generate_panel, PanelConfig, PhiModel};
use bargain::pricing::{lambda_components, passthrough, residual_demand_elasticity};
use bargain::{BilateralShares, CalibratedParams, StructuralParams};

/// Importer buying one input from two suppliers. Foreign spending scales as
/// P_F^{1−η} and so does the importer's profit; q_1 ∝ p_1^{−ρ} P_F^{ρ−η}.
struct TwoSupplierImporter {
    rho: f64,
    eta: f64,
    p2: f64,
}

impl TwoSupplierImporter {
    fn ln_index(&self, ln_p1: f64) -> f64 {
        let a = (1.0 - self.rho) * ln_p1;
        let b = (1.0 - self.rho) * self.p2.ln();
        (a.exp() + b.exp()).ln() / (1.0 - self.rho)
    }
    fn ln_profit(&self, ln_p1: f64) -> f64 {
        (1.0 - self.eta) * self.ln_index(ln_p1)
    }
    fn ln_outside_profit(&self) -> f64 {
        (1.0 - self.eta) * self.p2.ln()
    }
    fn ln_sales(&self, ln_p1: f64) -> f64 {
        ln_p1 - self.rho * ln_p1 + (self.rho - self.eta) * self.ln_index(ln_p1)
    }
    fn share(&self, ln_p1: f64) -> f64 {
        ((1.0 - self.rho) * (ln_p1 - self.ln_index(ln_p1))).exp()
    }
}

#[test]
fn lambda_matches_profit_ratio_of_two_supplier_importer() {
    let p = CalibratedParams::baseline();
    // Equal prices give s = 1/2.
    let m = TwoSupplierImporter {
        rho: p.rho,
        eta: p.eta,
        p2: 1.0,
    };
    assert!((m.share(0.0) - 0.5).abs() < 1e-15);
    let h: f64 = 1e-6;
    let dln_profit = (m.ln_profit(h) - m.ln_profit(-h)) / (2.0 * h);
    let dln_sales = (m.ln_sales(h) - m.ln_sales(-h)) / (2.0 * h);
    // ε − 1 = −dln(p·q)/dln p.
    let cost_exposure = -dln_profit / -dln_sales;
    let profit = m.ln_profit(0.0).exp();
    let network = profit / (profit - m.ln_outside_profit().exp());
    let oracle = cost_exposure * network;

    let lc = lambda_components(BilateralShares::new(0.5, 0.3).unwrap(), &p);
    assert!((lc.cost_exposure - cost_exposure).abs() < 1e-9);
    assert!((lc.network_dependence - network).abs() < 1e-12);
    assert!((lc.lambda - oracle).abs() < 1e-9);
    // ε = 6.25 at s = 1/2, so λ^C = 1.5·0.5/5.25 and λ^N = 1/(1 − 0.5^{1/6}).
    assert!((residual_demand_elasticity(BilateralShares::new(0.5, 0.3).unwrap(), &p) - 6.25).abs() < 1e-15);
    assert!((lc.lambda - 1.309_399_306_975_174).abs() < 1e-12, "{}", lc.lambda);
}

/// Two importers and three exporters; edge 0 links e0 to m0. Tastes of e0's
/// edges are tuned until edge 0 has the requested shares. m1 is large so e0
/// stays on the branch where most of its output goes to m1.
fn tuned_network(s: f64, x: f64, sp: &StructuralParams, p: &CalibratedParams) -> (TradeNetwork, usize) {
    let edge = |e: &str, m: &str| TradeEdge {
        exporter: e.into(),
        importer: m.into(),
        taste: 1.0,
        tariff: 1.1,
        cost_shifter: 1.0,
        bargaining_power: None,
    };
    let mut net = TradeNetwork {
        exporters: ["e0", "e1", "e2"]
            .iter()
            .map(|id| ExporterNode {
                id: (*id).into(),
                cost_shifter: 1.0,
            })
            .collect(),
        importers: ["m0", "m1"]
            .iter()
            .map(|id| ImporterNode {
                id: (*id).into(),
                productivity: 1.0,
                demand_shifter: if *id == "m1" { 10.0 } else { 1.0 },
                domestic_price: 1.0,
            })
            .collect(),
        edges: vec![edge("e0", "m0"), edge("e1", "m0"), edge("e0", "m1"), edge("e2", "m1")],
    };
    net.edges[0].taste = 0.85_f64.exp();
    let logit = |v: f64| (v / (1.0 - v)).ln();
    let cfg = SolverConfig {
        tol: 1e-13,
        ..SolverConfig::default()
    };
    // Newton on (ln taste of e0→m0, ln taste of e0→m1) with a forward-difference Jacobian.
    let gap = |net: &TradeNetwork| {
        let st = solve_equilibrium(net, sp, p, &cfg).unwrap();
        [logit(st.edges[0].s) - logit(s), logit(st.edges[0].x) - logit(x)]
    };
    let h: f64 = 1e-6;
    for _ in 0..50 {
        let f = gap(&net);
        if f[0].abs() < 1e-11 && f[1].abs() < 1e-11 {
            return (net, 0);
        }
        let mut jac = [[0.0; 2]; 2];
        for (col, k) in [0usize, 2].into_iter().enumerate() {
            let mut bumped = net.clone();
            bumped.edges[k].taste *= h.exp();
            let g = gap(&bumped);
            jac[0][col] = (g[0] - f[0]) / h;
            jac[1][col] = (g[1] - f[1]) / h;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let da = (jac[1][1] * f[0] - jac[0][1] * f[1]) / det;
        let db = (jac[0][0] * f[1] - jac[1][0] * f[0]) / det;
        let scale = 1.0_f64.min(0.1 / da.abs().max(db.abs()));
        net.edges[0].taste *= (-scale * da).exp();
        net.edges[2].taste *= (-scale * db).exp();
    }
    panic!("share tuning did not converge");
}

#[test]
fn passthrough_at_reference_point_matches_micro_network() {
    let p = CalibratedParams::baseline();
    let sp = StructuralParams::new(0.827, 0.454).unwrap();
    let (net, e) = tuned_network(0.15, 0.10, &sp, &p);
    let st = solve_equilibrium(
        &net,
        &sp,
        &p,
        &SolverConfig {
            tol: 1e-13,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    assert!((st.edges[e].s - 0.15).abs() < 1e-10 && (st.edges[e].x - 0.10).abs() < 1e-10);
    let fd = direct_passthrough_fd(&net, &st, e, 1e-6, &sp, &p).unwrap();
    let closed = passthrough(BilateralShares::new(0.15, 0.10).unwrap(), &sp, &p).unwrap().passthrough;
    assert!((fd - closed).abs() / closed < 1e-6, "fd {fd} closed {closed}");
    assert!((closed - FROZEN_PHI).abs() < 1e-12, "{closed}");
}

const FROZEN_PHI: f64 = 0.599_412_917_081_795;

fn logistic_panel(seed: u64) -> PanelConfig {
    PanelConfig {
        seed,
        n_products: 6,
        phi_model: PhiModel::Logistic {
            intercept: 1.2,
            longevity: 0.4,
            transactions: 0.3,
            outside_option: -0.2,
        },
        ..PanelConfig::default()
    }
}

#[test]
fn constant_phi_fit_on_heterogeneous_data_lies_inside_true_range() {
    let cfg = logistic_panel(5);
    let g = generate_panel(&cfg).unwrap();
    let (lo, hi) = g
        .truth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t.phi), b.max(t.phi)));
    let (panel, _) = compute_shares(&g.records).unwrap();
    let moments = build_pair_moments(&panel, None);
    let r = gmm_estimate(&moments, &GmmConfig::default(), &cfg.calibrated).unwrap();
    eprintln!("phi_hat {} in [{lo}, {hi}], theta {}", r.phi(), r.theta);
    assert!(r.phi() > lo && r.phi() < hi);
}

#[test]
fn logistic_fit_is_exact_without_cost_noise_or_tariff_events() {
    let cfg = PanelConfig {
        cost_noise_sd: 0.0,
        treated_share: 0.0,
        ..logistic_panel(6)
    };
    let g = generate_panel(&cfg).unwrap();
    let (panel, _) = compute_shares(&g.records).unwrap();
    let moments = build_pair_moments(&panel, Some(&g.covariates));
    let nls = NlsConfig {
        phi: PhiSpec::Logistic(KappaSpec {
            covariates: vec![Covariate::Longevity, Covariate::LnTransactions, Covariate::LnOutsideOption],
        }),
        ..NlsConfig::default()
    };
    let r = nls_joint(&moments, &nls, &cfg.calibrated).unwrap();
    let truth = [1.2, 0.4, 0.3, -0.2, cfg.structural.theta];
    for (est, want) in r.estimates.iter().zip(truth) {
        assert!((est - want).abs() < 1e-8, "{:?}", r.estimates);
    }
}

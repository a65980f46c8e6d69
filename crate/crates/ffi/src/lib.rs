//! C ABI for the bargain pricing closed forms and the network solver.
//!
//! Conventions:
//! * every fallible function returns a [`BargainStatus`] and writes results
//!   through out-pointers, which are left untouched on failure;
//! * objects are opaque handles created by `*_new`/`*_from_json` and released
//!   with the matching `*_free`;
//! * the message of the most recent failure on the calling thread is
//!   available from [`bargain_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use bargain::network::{direct_passthrough_fd, solve_equilibrium, EquilibriumState, SolverConfig, TradeNetwork};
use bargain::pricing::{bilateral_markup, passthrough};
use bargain::{BilateralShares, CalibratedParams, Error, StructuralParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BargainStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    UnboundedMarkup = 3,
    SingularPassthrough = 4,
    InvalidNetwork = 5,
    NoConvergence = 6,
    InvalidData = 7,
    InvalidConfig = 8,
    Io = 9,
    InvalidUtf8 = 10,
    OutOfRange = 11,
    NotSolved = 12,
    Panic = 13,
    Other = 14,
}

/// Calibrated elasticities and structural parameters.
pub struct BargainParams {
    calibrated: CalibratedParams,
    structural: StructuralParams,
}

/// A trade network and, once solved, its equilibrium.
pub struct BargainNetwork {
    network: TradeNetwork,
    state: Option<EquilibriumState>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BargainMarkup {
    pub mu_oligopoly: f64,
    pub mu_oligopsony: f64,
    pub lambda: f64,
    pub omega: f64,
    pub mu: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BargainPassthrough {
    pub epsilon: f64,
    pub gamma_oligopoly: f64,
    pub gamma_oligopsony: f64,
    pub gamma_omega: f64,
    pub markup_elasticity: f64,
    pub cost_elasticity: f64,
    pub passthrough: f64,
    /// NaN when 1 + Γ is not positive.
    pub passthrough_markup_only: f64,
    /// NaN when 1 + Λ is not positive.
    pub passthrough_cost_only: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BargainEdge {
    pub price: f64,
    pub quantity: f64,
    pub s: f64,
    pub x: f64,
    pub markup: f64,
    pub marginal_cost: f64,
    pub tariff: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BargainStatus {
    match e {
        Error::Domain(_) => BargainStatus::Domain,
        Error::UnboundedMarkup(_) => BargainStatus::UnboundedMarkup,
        Error::SingularPassthrough(_) => BargainStatus::SingularPassthrough,
        Error::Network(_) | Error::InfeasibleOutsideOption(_) => BargainStatus::InvalidNetwork,
        Error::NoConvergence { .. } => BargainStatus::NoConvergence,
        Error::Data(_) | Error::Csv(_) | Error::Json(_) | Error::RankDeficient(_) => BargainStatus::InvalidData,
        Error::Config(_) => BargainStatus::InvalidConfig,
        Error::Io { .. } => BargainStatus::Io,
        #[allow(unreachable_patterns)]
        _ => BargainStatus::Other,
    }
}

fn fail(status: BargainStatus, msg: impl AsRef<str>) -> BargainStatus {
    set_error(msg.as_ref());
    status
}

/// Runs `f` with panics converted to [`BargainStatus::Panic`].
fn guarded(f: impl FnOnce() -> Result<(), BargainStatus>) -> BargainStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BargainStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(BargainStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: bargain::Result<T>) -> Result<T, BargainStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn null(name: &str) -> BargainStatus {
    fail(BargainStatus::NullPointer, format!("{name} is null"))
}

unsafe fn deref<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, BargainStatus> {
    ptr.as_ref().ok_or_else(|| null(name))
}

unsafe fn deref_mut<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, BargainStatus> {
    ptr.as_mut().ok_or_else(|| null(name))
}

/// Message of the last failure on this thread; empty after a success. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bargain_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bargain_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a parameter set. Requires ν > 1, 0 < γ ≤ ϱ ≤ 1, ρ > η,
/// 0 ≤ φ ≤ 1 and 0 < θ ≤ 1; the endpoints of φ give the limit regimes.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bargain_params_new(
    nu: f64,
    gamma: f64,
    rho: f64,
    varrho: f64,
    phi: f64,
    theta: f64,
    out: *mut *mut BargainParams,
) -> BargainStatus {
    guarded(|| {
        let out = deref_mut(out, "out")?;
        let calibrated = lift(CalibratedParams::new(nu, gamma, rho, varrho))?;
        if !(0.0..=1.0).contains(&phi) {
            return Err(fail(BargainStatus::Domain, format!("phi must lie in [0,1], got {phi}")));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(fail(BargainStatus::Domain, format!("theta must lie in (0,1], got {theta}")));
        }
        *out = Box::into_raw(Box::new(BargainParams {
            calibrated,
            structural: StructuralParams { phi, theta },
        }));
        Ok(())
    })
}

/// Releases a parameter set; null is ignored.
///
/// # Safety
/// `params` must be null or a handle from [`bargain_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bargain_params_free(params: *mut BargainParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Outer-nest elasticity η implied by the calibration.
///
/// # Safety
/// `params` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bargain_params_eta(params: *const BargainParams, out: *mut f64) -> BargainStatus {
    guarded(|| {
        let p = deref(params, "params")?;
        *deref_mut(out, "out")? = p.calibrated.eta;
        Ok(())
    })
}

fn shares(s: f64, x: f64) -> Result<BilateralShares, BargainStatus> {
    lift(BilateralShares::new(s, x))
}

/// Bilateral markup and its components at supplier share `s` and buyer share `x`.
///
/// # Safety
/// `params` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bargain_markup(
    params: *const BargainParams,
    s: f64,
    x: f64,
    out: *mut BargainMarkup,
) -> BargainStatus {
    guarded(|| {
        let p = deref(params, "params")?;
        let out = deref_mut(out, "out")?;
        let m = lift(bilateral_markup(shares(s, x)?, &p.structural, &p.calibrated))?;
        *out = BargainMarkup {
            mu_oligopoly: m.mu_oligopoly,
            mu_oligopsony: m.mu_oligopsony,
            lambda: m.lambda,
            omega: m.omega,
            mu: m.mu,
        };
        Ok(())
    })
}

/// Pass-through elasticity Φ = 1/(1+Γ+Λ) and its parts.
///
/// # Safety
/// `params` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bargain_passthrough(
    params: *const BargainParams,
    s: f64,
    x: f64,
    out: *mut BargainPassthrough,
) -> BargainStatus {
    guarded(|| {
        let p = deref(params, "params")?;
        let out = deref_mut(out, "out")?;
        let e = lift(passthrough(shares(s, x)?, &p.structural, &p.calibrated))?;
        *out = BargainPassthrough {
            epsilon: e.epsilon,
            gamma_oligopoly: e.gamma_oligopoly,
            gamma_oligopsony: e.gamma_oligopsony,
            gamma_omega: e.gamma_omega,
            markup_elasticity: e.markup_elasticity,
            cost_elasticity: e.cost_elasticity,
            passthrough: e.passthrough,
            passthrough_markup_only: e.passthrough_markup_only,
            passthrough_cost_only: e.passthrough_cost_only,
        };
        Ok(())
    })
}

/// Parses a network from JSON with `exporters`, `importers` and `edges` arrays.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bargain_network_from_json(json: *const c_char, out: *mut *mut BargainNetwork) -> BargainStatus {
    guarded(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let out = deref_mut(out, "out")?;
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| fail(BargainStatus::InvalidUtf8, e.to_string()))?;
        let network: TradeNetwork = lift(serde_json::from_str(text).map_err(Error::from))?;
        *out = Box::into_raw(Box::new(BargainNetwork { network, state: None }));
        Ok(())
    })
}

/// Releases a network; null is ignored.
///
/// # Safety
/// `net` must be null or a handle from [`bargain_network_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bargain_network_free(net: *mut BargainNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of edges in the network.
///
/// # Safety
/// `net` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bargain_network_edge_count(net: *const BargainNetwork, out: *mut usize) -> BargainStatus {
    guarded(|| {
        let n = deref(net, "net")?;
        *deref_mut(out, "out")? = n.network.edges.len();
        Ok(())
    })
}

/// Solves the price equilibrium; `tol <= 0` and `max_iter == 0` select the
/// defaults. On success the equilibrium is stored in the handle.
///
/// # Safety
/// `net` and `params` must be live handles; `iterations` may be null.
#[no_mangle]
pub unsafe extern "C" fn bargain_network_solve(
    net: *mut BargainNetwork,
    params: *const BargainParams,
    tol: f64,
    max_iter: usize,
    iterations: *mut usize,
) -> BargainStatus {
    guarded(|| {
        let n = deref_mut(net, "net")?;
        let p = deref(params, "params")?;
        let mut cfg = SolverConfig::default();
        if tol > 0.0 {
            cfg.tol = tol;
        }
        if max_iter > 0 {
            cfg.max_iter = max_iter;
        }
        n.state = None;
        let state = lift(solve_equilibrium(&n.network, &p.structural, &p.calibrated, &cfg))?;
        if let Some(it) = iterations.as_mut() {
            *it = state.iterations;
        }
        n.state = Some(state);
        Ok(())
    })
}

fn solved(n: &BargainNetwork) -> Result<&EquilibriumState, BargainStatus> {
    n.state
        .as_ref()
        .ok_or_else(|| fail(BargainStatus::NotSolved, "network has not been solved"))
}

fn edge_in_range(n: &BargainNetwork, edge: usize) -> Result<(), BargainStatus> {
    if edge >= n.network.edges.len() {
        return Err(fail(
            BargainStatus::OutOfRange,
            format!("edge {edge} out of range ({} edges)", n.network.edges.len()),
        ));
    }
    Ok(())
}

/// Equilibrium outcome of one edge, in input order.
///
/// # Safety
/// `net` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bargain_network_edge(
    net: *const BargainNetwork,
    edge: usize,
    out: *mut BargainEdge,
) -> BargainStatus {
    guarded(|| {
        let n = deref(net, "net")?;
        let out = deref_mut(out, "out")?;
        edge_in_range(n, edge)?;
        let e = &solved(n)?.edges[edge];
        *out = BargainEdge {
            price: e.price,
            quantity: e.quantity,
            s: e.s,
            x: e.x,
            markup: e.markup,
            marginal_cost: e.marginal_cost,
            tariff: e.tariff,
        };
        Ok(())
    })
}

/// Finite-difference pass-through of one edge's tariff into its own price,
/// all other prices held at the stored equilibrium.
///
/// # Safety
/// `net` and `params` must be live handles and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bargain_network_direct_passthrough(
    net: *const BargainNetwork,
    params: *const BargainParams,
    edge: usize,
    dln_t: f64,
    out: *mut f64,
) -> BargainStatus {
    guarded(|| {
        let n = deref(net, "net")?;
        let p = deref(params, "params")?;
        let out = deref_mut(out, "out")?;
        edge_in_range(n, edge)?;
        let state = solved(n)?;
        *out = lift(direct_passthrough_fd(
            &n.network,
            state,
            edge,
            dln_t,
            &p.structural,
            &p.calibrated,
        ))?;
        Ok(())
    })
}

//! Recovery of bargaining power and returns to scale from within-exporter
//! log price gaps across buyers.

mod gmm;
mod model;
mod moments;
mod nls;
mod optimize;
mod result;

pub use gmm::{gmm_estimate, Demean, GmmConfig, Instrument};
pub use model::{logistic_phi, Covariate, EstimatorOptions, KappaSpec, PhiSpec};
pub use moments::{build_pair_moments, InstrumentContext, MatchSide, PairMoment};
pub use nls::{estimate_restricted_theta1, nls_joint, NlsConfig};
pub use optimize::OptimReport;
pub use result::{implied_phi_stats, EstimateResult, Method, PhiStats};

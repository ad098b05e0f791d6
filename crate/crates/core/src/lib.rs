//! Probabilistic duck curves (per-period net-load distributions) and ramp
//! curves built from historical PV and load series.
//!
//! Pipeline: per-period KDE marginals ([`kde`]), Gaussian copula dependence
//! ([`copula`]), dependent discrete convolution over discrete probabilistic
//! sequences ([`dps`]), curve assembly ([`curves`]), characteristic indices
//! ([`indices`]) and flexible-resource planning ([`planning`]). The
//! [`oracle`] module re-derives every result by Monte Carlo sampling of the
//! same fitted model.

pub mod copula;
pub mod curves;
pub mod dps;
pub mod error;
pub mod indices;
pub mod ingest;
pub mod kde;
pub mod normal;
pub mod oracle;
pub mod planning;
pub mod synth;

pub use error::{Error, Result};

//! News-signal timeseries construction and ESG rating prediction.
//!
//! Pipeline: [`gdelt`] queries, [`corpus`] cleaning and summaries,
//! [`weak_label`] relevance labels, [`clustering`] semantic clusters,
//! [`features`] monthly series, [`models`] networks and [`experiment`]
//! training and evaluation. [`synth`] generates data with a known signal.

pub mod catalog;
pub mod clustering;
pub mod config;
pub mod corpus;
mod error;
pub mod experiment;
pub mod features;
pub mod gdelt;
pub mod models;
mod month;
pub mod synth;
pub mod weak_label;

pub use error::{EsgError, Result};
pub use month::YearMonth;

/// Double-precision network.
pub type Network = models::Network<f64>;
/// Single-precision network.
pub type Network32 = models::Network<f32>;
/// Double-precision encoder block.
pub type EncoderBlock = models::EncoderBlock<f64>;

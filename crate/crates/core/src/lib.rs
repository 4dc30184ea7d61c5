//! Fault detection for multivariate industrial time series with a stacked
//! stateful LSTM forecaster.
//!
//! The crate covers the whole loop: a gasoil heating loop simulator with
//! set-point attacks ([`ghl_sim`]), CSV ingestion and normalization
//! ([`dataio`]), a from-scratch LSTM with BPTT and RMSprop ([`neural`]),
//! batch-ahead forecasting ([`forecast`]), smoothed residual thresholding
//! ([`detect`]) and interval-based scoring with a PCA baseline
//! ([`evaluate`]). [`pipeline`] ties them together and [`cli`] exposes it
//! as the `ghlfd` command.

pub mod cli;
pub mod dataio;
pub mod detect;
pub mod error;
pub mod evaluate;
pub mod forecast;
pub mod ghl_sim;
pub mod neural;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};

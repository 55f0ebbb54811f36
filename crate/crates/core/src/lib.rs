//! Censored autoregressive model of hourly precipitation at a few stations,
//! with a covariate-driven volatility ("frailty") term.
//!
//! The generator is `P_{m,t} = B_m . P_{t-1} + eps_{m,t}` when that value
//! reaches the threshold `u` and zero otherwise, with
//! `eps_{m,t} ~ N(0, sigma_t^2)` and `ln sigma_t = theta_0 + theta . F_t`.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod panel;
pub mod rng;
pub mod simstudy;
pub mod special;

pub use error::{Error, Result};
pub use model::{simulate, ModelParams, SimulationConfig};
pub use panel::{CovariatePanel, PrecipPanel};

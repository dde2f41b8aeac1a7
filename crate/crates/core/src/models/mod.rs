//! Forecasters: persistence, linear ARX, boosted trees and rectifier MLPs.

pub mod gbt;
pub mod linear;
pub mod mlp;
pub mod persistence;
pub mod suite;

pub use gbt::{fit_gbt, GbtModel, GbtParams};
pub use linear::{fit_linear_arx, LinearArxModel};
pub use mlp::{loss_and_gradient, mlp_train, MlpModel, TrainConfig, TrainData, TrainTrace};
pub use persistence::{persistence_forecast, PersistenceForecast, CLEARSKY_EPS};

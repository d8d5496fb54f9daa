//! Network assembly, baselines and model bundles.

mod baseline;
mod bundle;
mod config;
mod network;
mod params;

pub use baseline::{persistence, Forecaster, Persistence};
pub use bundle::{load_bundle, read_bundle, save_bundle, write_bundle, ModelBundle, BUNDLE_FORMAT, BUNDLE_VERSION};
pub use config::{ArchitectureConfig, MapShape, Topology};
pub use network::{DropoutMasks, ForwardCache, LaneCnn, PredictionPair};
pub use params::ModelParams;

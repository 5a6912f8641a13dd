pub mod baselines;
pub mod benchmarks;
pub mod data;
pub mod error;
pub mod fire;
pub mod gp;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod standardize;
pub mod summary;
pub mod surrogate;

pub use data::{FidelityBlock, MultiFidelityDataset, TokenizedBlock};
pub use error::{Error, Result};
pub use fire::{fire_fit, fire_fit_recursive, AugmentationMode, FireModel, FireSpec};
pub use gp::{GpConfig, GpFactory, KernelFamily, KernelSpec};
pub use metrics::{ComparisonUnit, Metric, MetricRecord};
pub use model::{MfPrediction, MultiFidelityModel};
pub use summary::{PredictiveSummary, QuantileLevels};
pub use surrogate::{ConstantSurrogate, SharedFactory, Surrogate, SurrogateFactory};

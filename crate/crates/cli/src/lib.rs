pub mod config;
pub mod external;
pub mod report;
pub mod runner;
pub mod wire;

pub use config::{AlgorithmConfig, AlgorithmKind, Backend, RunConfig};
pub use external::{ExternalFactory, SidecarClient, SidecarCommand};
pub use report::{Aggregation, ReportRequest};
pub use runner::{run_experiment, ResultLine, RunSummary};
pub use wire::WireError;

//! Experiment driver around the IPU model: configuration loading, tensor
//! file I/O, and the four workflows (trace-ipu, analyze-error,
//! simulate-tile, sweep). The binary in `main.rs` is a thin shell over
//! this library so tests can run every workflow in-process.

pub mod config;
pub mod tensor;
pub mod trace;
pub mod workflows;

pub use config::{ExperimentConfig, Workflow};
pub use trace::run_trace_ipu;
pub use workflows::{run_analyze_error, run_simulate_tile, run_sweep};

/// Workflow failures, each mapped to a stable process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent configuration (exit 2).
    Config(String),
    /// Numeric domain violation such as INF/NaN input (exit 3).
    Numeric(String),
    /// File system or serialization failure (exit 4).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mpipu_core::Error> for CliError {
    fn from(e: mpipu_core::Error) -> Self {
        match e {
            mpipu_core::Error::NonFiniteInput | mpipu_core::Error::AccumulatorOverflow { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Leading metadata line embedded in every output, pinning the resolved
/// configuration hash, the seed, and the tool version.
pub fn meta_line(config_hash: &str, seed: u64) -> String {
    format!("# mpipu {TOOL_VERSION} config_hash={config_hash} seed={seed}")
}

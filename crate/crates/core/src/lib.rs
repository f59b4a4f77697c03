//! Value-level golden model of mixed-precision inner product units (IPUs)
//! that execute INT4/INT8/INT12 and FP16 dot products as 4-bit nibble
//! iterations, plus the surrounding analysis machinery:
//!
//! * [`codec`]: FP16/FP32 bit-pattern decode and the nibble-decomposed
//!   operand form consumed by the multipliers.
//! * [`align`]: the exponent handling unit (EHU) computing product exponents,
//!   alignment diffs, software-precision masking, and the multi-cycle
//!   partition schedule.
//! * [`ipu`]: exact and approximate nibble iterations, local
//!   shift/truncation, and the non-normalized wide accumulator.
//! * [`exact`] / [`oracle`]: arbitrary-precision reference arithmetic,
//!   error metrics, the per-iteration error bound, and seeded samplers
//!   for the precision study.
//! * [`tile`]: cycle-accurate simulation of IPU-based convolution tiles
//!   with intra-tile clustering.
//!
//! All operations are pure value computations; nothing here models RTL,
//! only the arithmetic and the cycle counts chargeable to the datapath.

pub mod align;
pub mod codec;
pub mod exact;
pub mod ipu;
pub mod oracle;
pub mod tile;

pub use align::{alignment_diffs, mask_beyond_precision, product_exponents, schedule_cycles};
pub use align::{AlignmentSchedule, ScheduleCycle};
pub use codec::{decode_fp16, decompose_fp16, decompose_int, round_to_fp16, round_to_fp32};
pub use codec::{DecomposedOperand, Fp16Value, FpClass, FpFormat, IntWidth};
pub use exact::ExactValue;
pub use ipu::{
    accumulate, approx_nibble_iteration, fp_ip_approx, int_ip, local_shift_truncate,
    nibble_product, AccumulatorState, FpDotAccumulator, FpIpResult, FpIpStats, IpuConfig,
    IterationResult,
};
pub use oracle::{
    error_metrics, exact_fp_ip, precision_sweep, sample_vectors, iteration_error_bound, Distribution,
    ErrorReport, SweepRow,
};
pub use tile::{
    baseline_cycles, exp_diff_histogram, simulate_layer, sweep_design_space, LayerSpec, SimReport,
    TileConfig,
};

/// Errors reported by the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// An operand was INF or NaN where a finite value is required.
    NonFiniteInput,
    /// An integer operand does not fit the stated width/signedness.
    IntOutOfRange { value: i64, width: u32, signed: bool },
    /// A configuration parameter violates its documented range.
    InvalidConfig(String),
    /// The accumulator register exceeded its provisioned width.
    AccumulatorOverflow { width: u32 },
    /// A layer cannot be mapped onto the given tile.
    InvalidMapping(String),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::NonFiniteInput => write!(f, "INF/NaN operand rejected at IPU input"),
            Error::IntOutOfRange { value, width, signed } => {
                let kind = if *signed { "signed" } else { "unsigned" };
                write!(f, "{value} does not fit {kind} INT{width}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::AccumulatorOverflow { width } => {
                write!(f, "accumulator overflowed its {width}-bit register")
            }
            Error::InvalidMapping(msg) => write!(f, "invalid layer mapping: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

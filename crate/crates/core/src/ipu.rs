//! The mixed-precision inner product unit at value level.
//!
//! An IPU(w) multiplies 5-bit signed nibble operands, locally right-shifts
//! each product into a w-bit window (the IPU precision), sums the windows
//! in a (w + t)-bit adder tree, and folds the result into a wide
//! non-normalized accumulator. INT modes run exact; FP mode approximates
//! alignment by truncating everything below the window.
//!
//! Everything is modeled with exact integers plus explicit truncation
//! points. Assertions check that intermediates fit their declared widths.

use crate::align::{ehu, AlignmentSchedule};
use crate::codec::{
    decompose_fp16, decompose_int, round_to_format, DecomposedOperand, Fp16Value, FpFormat,
    IntWidth,
};
use crate::exact::ExactValue;
use crate::{Error, Result};

/// Fresh FP accumulators start with an exponent far below any real
/// product exponent so the first accumulation always swaps in.
const EXP_UNSET: i32 = -(1 << 20);

/// Static parameters of one IPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IpuConfig {
    /// Lane count n (power of two, 2..=32).
    pub lanes: u32,
    /// Adder tree width w in bits, the "IPU precision" (9..=38).
    pub precision: u32,
    /// Product bits the software keeps; diffs at or past it are masked.
    pub sw_precision: u32,
    /// Maximum accumulation count d the register is provisioned for.
    pub accum_depth: u32,
}

impl IpuConfig {
    pub fn new(lanes: u32, precision: u32, sw_precision: u32) -> Result<Self> {
        let cfg = IpuConfig { lanes, precision, sw_precision, accum_depth: 1 << 15 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_accum_depth(mut self, d: u32) -> Result<Self> {
        self.accum_depth = d;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=32).contains(&self.lanes) || !self.lanes.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "lane count {} must be a power of two in 2..=32",
                self.lanes
            )));
        }
        if !(9..=38).contains(&self.precision) {
            return Err(Error::InvalidConfig(format!(
                "IPU precision {} outside 9..=38",
                self.precision
            )));
        }
        if !(1..=58).contains(&self.sw_precision) {
            return Err(Error::InvalidConfig(format!(
                "software precision {} outside 1..=58",
                self.sw_precision
            )));
        }
        if self.accum_depth == 0 {
            return Err(Error::InvalidConfig("accumulation depth must be positive".into()));
        }
        Ok(())
    }

    /// Safe precision sp = w − 9: shifts below it lose nothing because a
    /// raw nibble product fits 9 signed bits.
    pub fn safe_precision(&self) -> u32 {
        self.precision - 9
    }

    /// Adder-tree growth t = ceil(log2 n).
    pub fn tree_growth_bits(&self) -> u32 {
        self.lanes.ilog2()
    }

    /// Accumulation headroom l = ceil(log2 d).
    pub fn depth_bits(&self) -> u32 {
        let d = self.accum_depth;
        if d <= 1 {
            0
        } else {
            32 - (d - 1).leading_zeros()
        }
    }

    /// Accumulator register width, 33 + t + l bits including the sign.
    pub fn register_width(&self) -> u32 {
        33 + self.tree_growth_bits() + self.depth_bits()
    }
}

/// Exact product of two 5-bit signed multiplier operands.
pub fn nibble_product(a_nib: i8, b_nib: i8) -> i32 {
    debug_assert!(a_nib.unsigned_abs() <= 15 && b_nib.unsigned_abs() <= 15);
    let p = a_nib as i32 * b_nib as i32;
    debug_assert!(p.unsigned_abs() <= 225);
    p
}

/// Place a 9-bit product at the top of a w-bit window and arithmetic
/// right shift by `diff`, truncating toward negative infinity:
/// `floor(p * 2^(w-9) / 2^diff)`. For diff <= w−9 this is exact up to the
/// known 2^(w−9) scale.
pub fn local_shift_truncate(p: i32, diff: u32, w: u32) -> i64 {
    debug_assert!((9..=38).contains(&w));
    let widened = (p as i64) << (w - 9);
    widened >> diff.min(63)
}

/// Output of one nibble iteration over the whole lane array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct IterationResult {
    /// Adder tree output, fits w + t signed bits.
    pub adder_out: i64,
    /// The shared maximum product exponent from the EHU.
    pub max_exp: i32,
    /// Power-of-two weight of `adder_out`: the iteration's true
    /// contribution is approximately `adder_out * 2^scale`.
    pub scale: i32,
}

impl IterationResult {
    /// The iteration value as an exact dyadic number.
    pub fn to_exact(&self) -> ExactValue {
        ExactValue::new(self.adder_out, self.scale as i64)
    }
}

/// One approximate nibble iteration: multiply nibble i of every first
/// operand with nibble j of every second operand, locally shift by the
/// lane's alignment diff, and sum the unmasked windows.
pub fn approx_nibble_iteration(
    a: &[DecomposedOperand],
    b: &[DecomposedOperand],
    i: usize,
    j: usize,
    sched: &AlignmentSchedule,
    cfg: &IpuConfig,
) -> IterationResult {
    debug_assert_eq!(a.len(), b.len());
    debug_assert!(i < 3 && j < 3);
    let w = cfg.precision;
    let mut adder_out = 0i64;
    for (lane, (oa, ob)) in a.iter().zip(b).enumerate() {
        if sched.masked[lane] {
            continue;
        }
        let sign = (oa.sign * ob.sign) as i32;
        let p = sign * nibble_product(oa.nibble(i) as i8, ob.nibble(j) as i8);
        adder_out += local_shift_truncate(p, sched.diffs[lane], w);
    }
    let width = w + cfg.tree_growth_bits();
    assert!(adder_out.unsigned_abs() < 1u64 << width, "adder tree exceeded {width} bits");
    IterationResult {
        adder_out,
        max_exp: sched.max_exp,
        scale: sched.max_exp + 4 * (i + j) as i32 - 22 - (w as i32 - 9),
    }
}

/// Whether the accumulator runs in INT mode (exponent pinned to zero) or
/// FP mode (exponent tracks the running maximum).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AccMode {
    Int,
    Fp,
}

/// The non-normalized accumulator: an exponent plus a wide signed
/// fixed-point register with 30 fraction bits relative to that exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccumulatorState {
    mode: AccMode,
    exp: i32,
    mag: i128,
}

impl AccumulatorState {
    pub fn new_int() -> Self {
        AccumulatorState { mode: AccMode::Int, exp: 0, mag: 0 }
    }

    pub fn new_fp() -> Self {
        AccumulatorState { mode: AccMode::Fp, exp: EXP_UNSET, mag: 0 }
    }

    pub fn magnitude(&self) -> i128 {
        self.mag
    }

    /// Accumulator exponent; zero in INT mode.
    pub fn exponent(&self) -> i32 {
        if self.exp == EXP_UNSET {
            0
        } else {
            self.exp
        }
    }

    /// The held value as an exact dyadic number.
    pub fn to_exact(&self) -> ExactValue {
        if self.mag == 0 {
            return ExactValue::zero();
        }
        match self.mode {
            AccMode::Int => ExactValue::new(self.mag, 0),
            AccMode::Fp => ExactValue::new(self.mag, self.exp as i64 - 30),
        }
    }
}

/// Arithmetic right shift of an i128 with unbounded shift amounts.
fn shr_floor(v: i128, shift: i64) -> i128 {
    debug_assert!(shift >= 0);
    v >> shift.min(127)
}

/// Shift left for non-negative amounts, floor-shift right otherwise.
fn shift_signed(v: i64, amount: i64) -> i128 {
    if amount >= 0 {
        (v as i128) << amount.min(100)
    } else {
        shr_floor(v as i128, -amount)
    }
}

/// Fold one iteration result into the accumulator.
///
/// The adder output enters the register with (33 − w) zero bits
/// concatenated on the right, then shifts right by the nibble-significance
/// amount `4*((Ka−i−1) + (Kb−j−1))` plus, in FP mode, the exponent gap.
/// When the incoming exponent exceeds the accumulator's, the old contents
/// are the side that shifts (the swap path) and the exponent is raised.
/// Bits shifted past the register are discarded.
pub fn accumulate(
    acc: &AccumulatorState,
    r: &IterationResult,
    i: usize,
    j: usize,
    ka: usize,
    kb: usize,
    cfg: &IpuConfig,
) -> Result<AccumulatorState> {
    debug_assert!(i < ka && j < kb);
    let nib_shift = 4 * ((ka - 1 - i) as i64 + (kb - 1 - j) as i64);
    let place = 33 - cfg.precision as i64; // zeros concatenated on the right
    let next = match acc.mode {
        AccMode::Int => {
            debug_assert_eq!(acc.exp, 0, "INT mode keeps exp = 0");
            let incoming = shift_signed(r.adder_out, place - nib_shift);
            AccumulatorState { mode: AccMode::Int, exp: 0, mag: acc.mag + incoming }
        }
        AccMode::Fp => {
            if r.max_exp > acc.exp {
                // swap: the old accumulator is what shifts right
                let gap = r.max_exp as i64 - acc.exp as i64;
                let kept = shr_floor(acc.mag, gap);
                let incoming = shift_signed(r.adder_out, place - nib_shift);
                AccumulatorState { mode: AccMode::Fp, exp: r.max_exp, mag: kept + incoming }
            } else {
                let gap = acc.exp as i64 - r.max_exp as i64;
                let incoming = shift_signed(r.adder_out, place - nib_shift - gap);
                AccumulatorState { mode: AccMode::Fp, exp: acc.exp, mag: acc.mag + incoming }
            }
        }
    };
    let width = cfg.register_width();
    if next.mag.unsigned_abs() >= 1u128 << (width - 1) {
        return Err(Error::AccumulatorOverflow { width });
    }
    Ok(next)
}

/// Integer operand format: width plus signedness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IntFormat {
    pub width: IntWidth,
    pub signed: bool,
}

impl IntFormat {
    pub fn new(width: IntWidth, signed: bool) -> Self {
        IntFormat { width, signed }
    }
}

/// Result of an INT-mode inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntIpResult {
    pub value: i64,
    /// Nibble iterations executed; always Ka * Kb.
    pub iterations: u32,
}

/// INT-mode inner product via nibble iterations. Exact: returns
/// `sum(a_k * b_k)` after `(a_width/4) * (b_width/4)` iterations.
pub fn int_ip(
    a_vec: &[i64],
    b_vec: &[i64],
    a_fmt: IntFormat,
    b_fmt: IntFormat,
    cfg: &IpuConfig,
) -> Result<IntIpResult> {
    if a_vec.len() != b_vec.len() || a_vec.is_empty() {
        return Err(Error::InvalidConfig("operand vectors must be equal-length, non-empty".into()));
    }
    if a_vec.len() > cfg.lanes as usize {
        return Err(Error::InvalidConfig(format!(
            "vector length {} exceeds {} lanes",
            a_vec.len(),
            cfg.lanes
        )));
    }
    let a_nibs: Vec<Vec<i8>> = a_vec
        .iter()
        .map(|&v| decompose_int(v, a_fmt.width, a_fmt.signed))
        .collect::<Result<_>>()?;
    let b_nibs: Vec<Vec<i8>> = b_vec
        .iter()
        .map(|&v| decompose_int(v, b_fmt.width, b_fmt.signed))
        .collect::<Result<_>>()?;
    let ka = a_fmt.width.nibble_count() as usize;
    let kb = b_fmt.width.nibble_count() as usize;
    let w = cfg.precision;
    let mut acc = AccumulatorState::new_int();
    let mut iterations = 0;
    for i in 0..ka {
        for j in 0..kb {
            let mut adder_out = 0i64;
            for (an, bn) in a_nibs.iter().zip(&b_nibs) {
                // local shift amount is always zero in INT mode
                adder_out += local_shift_truncate(nibble_product(an[i], bn[j]), 0, w);
            }
            let scale = 4 * (i + j) as i32 - (w as i32 - 9);
            let r = IterationResult { adder_out, max_exp: 0, scale };
            acc = accumulate(&acc, &r, i, j, ka, kb, cfg)?;
            iterations += 1;
        }
    }
    // the result sits 24 − 4*((Ka−1)+(Kb−1)) bits up in the register;
    // everything below is zero because INT mode never truncates
    let scale = 24 - 4 * ((ka - 1) + (kb - 1)) as i64;
    let mag = acc.magnitude();
    assert_eq!(mag & ((1i128 << scale) - 1), 0, "INT mode must be exact");
    Ok(IntIpResult { value: (mag >> scale) as i64, iterations })
}

/// Summary statistics from one FP inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct FpIpStats {
    /// Largest alignment diff seen (masked lanes included).
    pub max_alignment: u32,
    /// Lanes dropped by the software-precision mask.
    pub masked_lanes: u32,
}

/// Rounded result of an FP inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpIpResult {
    /// Bit pattern in `format` (low 16 bits used for FP16).
    pub bits: u32,
    pub format: FpFormat,
    pub stats: FpIpStats,
}

impl FpIpResult {
    pub fn bits16(&self) -> u16 {
        debug_assert_eq!(self.format, FpFormat::Fp16);
        self.bits as u16
    }
}

/// Accumulates FP16 dot-product chunks into one non-normalized register,
/// normalizing and rounding only when the output completes. One EHU pass
/// is shared by the nine nibble iterations of each chunk.
#[derive(Debug, Clone)]
pub struct FpDotAccumulator {
    cfg: IpuConfig,
    state: AccumulatorState,
    max_alignment: u32,
    masked_lanes: u32,
}

impl FpDotAccumulator {
    pub fn new(cfg: IpuConfig) -> Self {
        FpDotAccumulator { cfg, state: AccumulatorState::new_fp(), max_alignment: 0, masked_lanes: 0 }
    }

    pub fn state(&self) -> &AccumulatorState {
        &self.state
    }

    pub fn config(&self) -> &IpuConfig {
        &self.cfg
    }

    /// Run one FP-IP chunk (up to `lanes` pairs): EHU once, then the nine
    /// nibble iterations, each folded into the accumulator. Returns the
    /// alignment schedule for timing and statistics.
    pub fn add_chunk(&mut self, a: &[Fp16Value], b: &[Fp16Value]) -> Result<AlignmentSchedule> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::InvalidConfig(
                "operand vectors must be equal-length, non-empty".into(),
            ));
        }
        if a.len() > self.cfg.lanes as usize {
            return Err(Error::InvalidConfig(format!(
                "vector length {} exceeds {} lanes",
                a.len(),
                self.cfg.lanes
            )));
        }
        if a.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let da: Vec<DecomposedOperand> = a.iter().map(decompose_fp16).collect::<Result<_>>()?;
        let db: Vec<DecomposedOperand> = b.iter().map(decompose_fp16).collect::<Result<_>>()?;
        let a_exps: Vec<i32> = da.iter().map(|o| o.exp_unbiased).collect();
        let b_exps: Vec<i32> = db.iter().map(|o| o.exp_unbiased).collect();
        let sched = ehu(&a_exps, &b_exps, self.cfg.sw_precision, self.cfg.safe_precision().max(1));
        for i in 0..3 {
            for j in 0..3 {
                let r = approx_nibble_iteration(&da, &db, i, j, &sched, &self.cfg);
                self.state = accumulate(&self.state, &r, i, j, 3, 3, &self.cfg)?;
            }
        }
        self.max_alignment = self.max_alignment.max(sched.max_diff());
        self.masked_lanes += sched.masked_lane_count() as u32;
        Ok(sched)
    }

    /// Normalize and round the register to the accumulator format.
    pub fn finalize(&self, format: FpFormat) -> FpIpResult {
        let bits = round_to_format(&self.state.to_exact(), format);
        FpIpResult {
            bits,
            format,
            stats: FpIpStats { max_alignment: self.max_alignment, masked_lanes: self.masked_lanes },
        }
    }
}

/// One complete FP inner product: EHU, nine approximate nibble
/// iterations, accumulation, and rounding to the accumulator format.
pub fn fp_ip_approx(
    a_vec: &[Fp16Value],
    b_vec: &[Fp16Value],
    cfg: &IpuConfig,
    acc_format: FpFormat,
) -> Result<FpIpResult> {
    let mut acc = FpDotAccumulator::new(*cfg);
    acc.add_chunk(a_vec, b_vec)?;
    Ok(acc.finalize(acc_format))
}

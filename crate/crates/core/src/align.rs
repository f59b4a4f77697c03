//! Exponent handling unit (EHU) and the multi-cycle serving schedule.
//!
//! The EHU runs once per FP inner product and its outputs are shared by
//! all nine nibble iterations: per-lane product exponents, the maximum,
//! the alignment diffs, the software-precision mask, and, for multi-cycle
//! IPUs, the partition of lanes into per-cycle served sets.

use serde::Serialize;

/// One datapath cycle of a multi-cycle IPU: the lanes served, their local
/// shift amounts (all below the safe precision), and the shared shift
/// applied after the adder tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleCycle {
    /// Partition index k; lanes here have diffs in [k*sp, (k+1)*sp).
    pub partition: u32,
    /// Lane indices served this cycle.
    pub served: Vec<usize>,
    /// Per-served-lane local shift, `diff - k*sp`, parallel to `served`.
    pub local_shifts: Vec<u32>,
    /// Shared post-adder shift, `k*sp`.
    pub extra_shift: u32,
}

/// Complete alignment decision for one FP inner product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlignmentSchedule {
    pub max_exp: i32,
    pub diffs: Vec<u32>,
    /// Lanes whose diff reaches the software precision; they contribute
    /// nothing and consume no cycles.
    pub masked: Vec<bool>,
    /// Non-empty partitions in ascending order.
    pub cycles: Vec<ScheduleCycle>,
}

impl AlignmentSchedule {
    /// Datapath cycles charged for one nibble iteration. The naive
    /// hardware loop increments its threshold every cycle whether or not
    /// the partition is empty; set `charge_empty_partitions` to emulate
    /// that instead of the default partition skipping.
    pub fn cycle_count(&self, charge_empty_partitions: bool) -> u32 {
        if self.cycles.is_empty() {
            return 0;
        }
        if charge_empty_partitions {
            self.cycles.last().map(|c| c.partition + 1).unwrap_or(0)
        } else {
            self.cycles.len() as u32
        }
    }

    /// Largest per-lane diff (masked lanes included).
    pub fn max_diff(&self) -> u32 {
        self.diffs.iter().copied().max().unwrap_or(0)
    }

    pub fn masked_lane_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

/// Element-wise sum of the operands' unbiased exponents.
pub fn product_exponents(a_exps: &[i32], b_exps: &[i32]) -> Vec<i32> {
    debug_assert_eq!(a_exps.len(), b_exps.len());
    a_exps.iter().zip(b_exps).map(|(a, b)| a + b).collect()
}

/// Maximum product exponent and the per-lane shift amounts toward it.
pub fn alignment_diffs(prod_exps: &[i32]) -> (i32, Vec<u32>) {
    assert!(!prod_exps.is_empty(), "need at least one lane");
    let max_exp = *prod_exps.iter().max().unwrap();
    let diffs = prod_exps.iter().map(|e| (max_exp - e) as u32).collect();
    (max_exp, diffs)
}

/// Lanes whose products are aligned past the software precision carry no
/// bits the application keeps; mask them out entirely.
pub fn mask_beyond_precision(diffs: &[u32], sw_precision: u32) -> Vec<bool> {
    diffs.iter().map(|&d| d >= sw_precision).collect()
}

/// Partition the unmasked lanes into per-cycle served sets.
///
/// Lane with diff d goes to partition floor(d / sp); its shift splits into
/// a local part `d - k*sp` (always below the safe precision, hence
/// lossless in the local shifter) and the shared `k*sp` applied after the
/// adder tree. Empty partitions are skipped.
pub fn schedule_cycles(diffs: &[u32], masked: &[bool], sp: u32) -> AlignmentSchedule {
    assert!(sp >= 1, "safe precision must be at least 1 to schedule");
    debug_assert_eq!(diffs.len(), masked.len());
    let max_partition = diffs
        .iter()
        .zip(masked)
        .filter(|&(_, &m)| !m)
        .map(|(&d, _)| d / sp)
        .max()
        .unwrap_or(0);
    let mut cycles = Vec::new();
    for k in 0..=max_partition {
        let mut served = Vec::new();
        let mut local_shifts = Vec::new();
        for (lane, (&d, &m)) in diffs.iter().zip(masked).enumerate() {
            if !m && d / sp == k {
                served.push(lane);
                local_shifts.push(d - k * sp);
            }
        }
        if !served.is_empty() {
            cycles.push(ScheduleCycle { partition: k, served, local_shifts, extra_shift: k * sp });
        }
    }
    // max_exp is not knowable from diffs alone; ehu() fills it in
    AlignmentSchedule { max_exp: 0, diffs: diffs.to_vec(), masked: masked.to_vec(), cycles }
}

/// Run the full EHU for one FP inner product: exponent sums, max, diffs,
/// mask, and the serving schedule.
pub fn ehu(a_exps: &[i32], b_exps: &[i32], sw_precision: u32, sp: u32) -> AlignmentSchedule {
    let prod = product_exponents(a_exps, b_exps);
    let (max_exp, diffs) = alignment_diffs(&prod);
    let masked = mask_beyond_precision(&diffs, sw_precision);
    let mut sched = schedule_cycles(&diffs, &masked, sp);
    sched.max_exp = max_exp;
    sched
}

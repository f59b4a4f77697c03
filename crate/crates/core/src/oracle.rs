//! Exact-arithmetic reference and the numerical precision study.
//!
//! The oracle computes inner products as exact dyadic rationals (the
//! arbitrarily-wide-adder reference) and measures the truncating
//! datapath against it with three metrics: absolute error, absolute
//! relative error (percent), and contaminated bits (the bit-length of the
//! XOR between the approximate pattern and the exact result rounded to
//! the same format). Input vectors for the study come from seeded
//! Laplace/Normal/Uniform samplers rounded to FP16.

use crate::codec::{decode_fp16, pattern_to_f64, round_to_format, round_to_fp16, Fp16Value, FpFormat};
use crate::exact::ExactValue;
use crate::ipu::{fp_ip_approx, IpuConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Synthetic input distributions. Laplace and Normal resemble DNN tensor
/// distributions; Uniform stands in for re-scaled tensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Distribution {
    Laplace { scale: f64 },
    Normal { std_dev: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Distribution {
    pub fn laplace() -> Self {
        Distribution::Laplace { scale: 1.0 }
    }

    pub fn normal() -> Self {
        Distribution::Normal { std_dev: 1.0 }
    }

    pub fn uniform() -> Self {
        Distribution::Uniform { lo: -1.0, hi: 1.0 }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Distribution::Laplace { .. } => "laplace",
            Distribution::Normal { .. } => "normal",
            Distribution::Uniform { .. } => "uniform",
        }
    }

    /// Draw one f64 deviate.
    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Laplace { scale } => {
                // inverse CDF; u is kept strictly inside (0,1)
                let mut u: f64 = rng.random();
                while u <= 0.0 {
                    u = rng.random();
                }
                if u < 0.5 {
                    scale * (2.0 * u).ln()
                } else {
                    -scale * (2.0 * (1.0 - u)).ln()
                }
            }
            Distribution::Normal { std_dev } => {
                rand_distr::Normal::new(0.0, std_dev).expect("valid sigma").sample(rng)
            }
            Distribution::Uniform { lo, hi } => {
                rand_distr::Uniform::new(lo, hi).expect("valid range").sample(rng)
            }
        }
    }

    /// Draw one value and round it to FP16.
    pub(crate) fn draw_fp16<R: Rng>(&self, rng: &mut R) -> Fp16Value {
        let x = self.draw(rng);
        decode_fp16(round_to_fp16(&ExactValue::from_f64(x)))
    }
}

/// Deterministic vector pairs for the study. Sample `idx` always comes
/// from stream `idx` of the seeded generator, so results do not depend on
/// how the work is split across threads.
pub fn sample_vectors(
    dist: Distribution,
    lanes: usize,
    count: usize,
    seed: u64,
) -> Vec<(Vec<Fp16Value>, Vec<Fp16Value>)> {
    (0..count)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let a = (0..lanes).map(|_| dist.draw_fp16(&mut rng)).collect();
            let b = (0..lanes).map(|_| dist.draw_fp16(&mut rng)).collect();
            (a, b)
        })
        .collect()
}

/// Exact inner product of finite FP16 vectors as a dyadic rational.
///
/// Order-independent by construction: all products are aligned to the
/// smallest exponent and summed without width limits.
pub fn exact_fp_ip(a_vec: &[Fp16Value], b_vec: &[Fp16Value]) -> ExactValue {
    assert_eq!(a_vec.len(), b_vec.len());
    assert!(!a_vec.is_empty());
    let mut terms = Vec::with_capacity(a_vec.len());
    let mut min_e = i64::MAX;
    for (a, b) in a_vec.iter().zip(b_vec) {
        assert!(a.is_finite() && b.is_finite());
        let m = (a.sign as i128 * a.magnitude as i128) * (b.sign as i128 * b.magnitude as i128);
        let e = a.exp_unbiased as i64 + b.exp_unbiased as i64 - 20;
        if m != 0 {
            min_e = min_e.min(e);
        }
        terms.push((m, e));
    }
    if min_e == i64::MAX {
        return ExactValue::zero();
    }
    let mut sum = 0i128;
    for (m, e) in terms {
        if m != 0 {
            sum += m << (e - min_e);
        }
    }
    ExactValue::new(sum, min_e)
}

/// Error of an approximate result against the exact value, both taken in
/// the same storage format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    /// |approx − round_to_format(exact)|.
    pub abs_error: f64,
    /// 100 * abs_error / |reference|; `None` when the reference is zero
    /// but the approximation is not.
    pub are_percent: Option<f64>,
    /// Bit-length of the XOR of the two bit patterns; zero exactly when
    /// the patterns are identical.
    pub contaminated_bits: u32,
}

/// Compare an approximate bit pattern against the exact result rounded to
/// the same format.
pub fn error_metrics(approx_bits: u32, exact: &ExactValue, fmt: FpFormat) -> ErrorReport {
    let reference_bits = round_to_format(exact, fmt);
    let xor = approx_bits ^ reference_bits;
    let contaminated_bits = 32 - xor.leading_zeros();
    if approx_bits == reference_bits {
        return ErrorReport { abs_error: 0.0, are_percent: Some(0.0), contaminated_bits: 0 };
    }
    let approx = pattern_to_f64(approx_bits, fmt);
    let reference = pattern_to_f64(reference_bits, fmt);
    let abs_error = (approx - reference).abs();
    let are_percent = if reference == 0.0 {
        if abs_error == 0.0 {
            Some(0.0) // signed-zero mismatch only
        } else {
            None
        }
    } else {
        Some(100.0 * abs_error / reference.abs())
    };
    ErrorReport { abs_error, are_percent, contaminated_bits }
}

/// Worst-case absolute error of one approximate nibble iteration:
/// `225 * 2^(4(i+j)−22) * 2^(max−precision) * (n−1)`.
///
/// `precision` is the effective alignment precision of the iteration:
/// how many bits of shift survive before a product is dropped or
/// truncated. Evaluated exactly.
pub fn iteration_error_bound(i: usize, j: usize, precision: u32, max_exp: i32, n: usize) -> ExactValue {
    if n <= 1 {
        return ExactValue::zero();
    }
    let coeff = 225i64 * (n as i64 - 1);
    let exp = 4 * (i + j) as i64 - 22 + max_exp as i64 - precision as i64;
    ExactValue::new(coeff, exp)
}

/// Product bits the software keeps for each accumulator format.
pub fn software_precision(fmt: FpFormat) -> u32 {
    match fmt {
        FpFormat::Fp16 => 16,
        FpFormat::Fp32 => 27,
    }
}

/// One row of the precision study.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub dist: String,
    pub acc_format: FpFormat,
    pub w: u32,
    pub median_abs_err: f64,
    pub median_are_pct: f64,
    pub median_contam_bits: f64,
    pub mean_contam_bits: f64,
    pub samples: usize,
    pub seed: u64,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Run the precision study: for each IPU precision in `w_range`, evaluate
/// `count` seeded vector pairs against the exact oracle and report the
/// median of each metric (plus the mean of contaminated bits).
///
/// The same sample set is reused across precisions so the per-`w` columns
/// are directly comparable.
pub fn precision_sweep(
    dist: Distribution,
    acc_format: FpFormat,
    w_range: &[u32],
    lanes: usize,
    count: usize,
    seed: u64,
) -> Vec<SweepRow> {
    let pairs = sample_vectors(dist, lanes, count, seed);
    let exacts: Vec<ExactValue> =
        pairs.par_iter().map(|(a, b)| exact_fp_ip(a, b)).collect();
    let sw = software_precision(acc_format);
    w_range
        .iter()
        .map(|&w| {
            let cfg = IpuConfig::new(lanes as u32, w, sw).expect("valid sweep config");
            let reports: Vec<ErrorReport> = pairs
                .par_iter()
                .zip(&exacts)
                .map(|((a, b), exact)| {
                    let r = fp_ip_approx(a, b, &cfg, acc_format).expect("finite inputs");
                    error_metrics(r.bits, exact, acc_format)
                })
                .collect();
            let mut abs: Vec<f64> = reports.iter().map(|r| r.abs_error).collect();
            let mut are: Vec<f64> = reports.iter().filter_map(|r| r.are_percent).collect();
            let mut contam: Vec<f64> =
                reports.iter().map(|r| r.contaminated_bits as f64).collect();
            let mean_contam =
                reports.iter().map(|r| r.contaminated_bits as u64).sum::<u64>() as f64
                    / reports.len() as f64;
            SweepRow {
                dist: dist.label().to_string(),
                acc_format,
                w,
                median_abs_err: median(&mut abs),
                median_are_pct: median(&mut are),
                median_contam_bits: median(&mut contam),
                mean_contam_bits: mean_contam,
                samples: count,
                seed,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn fp16(x: f64) -> Fp16Value {
        decode_fp16(round_to_fp16(&ExactValue::from_f64(x)))
    }

    #[test]
    fn exact_single_pair() {
        let r = exact_fp_ip(&[fp16(1.5)], &[fp16(2.0)]);
        assert_eq!(r, ExactValue::from_f64(3.0));
    }

    #[test]
    fn exact_ones_sum_to_n() {
        for n in [1usize, 4, 16] {
            let a = vec![fp16(1.0); n];
            assert_eq!(exact_fp_ip(&a, &a), ExactValue::new(BigInt::from(n), 0));
        }
    }

    #[test]
    fn exact_zero_vectors() {
        let z = vec![fp16(0.0); 4];
        assert!(exact_fp_ip(&z, &z).is_zero());
    }

    #[test]
    fn metrics_identical_patterns() {
        let exact = ExactValue::from_f64(1.0);
        let r = error_metrics(0x3c00, &exact, FpFormat::Fp16);
        assert_eq!(r.abs_error, 0.0);
        assert_eq!(r.are_percent, Some(0.0));
        assert_eq!(r.contaminated_bits, 0);
    }

    #[test]
    fn metrics_low_bit_flip() {
        let exact = ExactValue::from_f64(1.0);
        let r = error_metrics(0x3c01, &exact, FpFormat::Fp16);
        assert_eq!(r.contaminated_bits, 1);
        assert!(r.abs_error > 0.0);
    }

    #[test]
    fn metrics_undefined_relative_error() {
        let r = error_metrics(0x0001, &ExactValue::zero(), FpFormat::Fp16);
        assert_eq!(r.are_percent, None);
        assert!(r.contaminated_bits > 0);
    }

    #[test]
    fn bound_values() {
        assert!(iteration_error_bound(2, 2, 16, 0, 1).is_zero());
        let b = iteration_error_bound(2, 2, 16, 0, 2);
        assert_eq!(b, ExactValue::new(225, -22));
        assert!((b.to_f64() - 5.364418029785156e-5).abs() < 1e-18);
        // most significant nibbles dominate: (2,2) vs (0,0) is 2^16
        let low = iteration_error_bound(0, 0, 16, 0, 2);
        assert_eq!(b.to_f64() / low.to_f64(), 65536.0);
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = sample_vectors(Distribution::normal(), 4, 32, 7);
        let b = sample_vectors(Distribution::normal(), 4, 32, 7);
        assert_eq!(a, b);
        let c = sample_vectors(Distribution::normal(), 4, 32, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn median_helper() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn sweep_runs_small() {
        let rows =
            precision_sweep(Distribution::uniform(), FpFormat::Fp16, &[12, 16], 4, 64, 3);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].w, 12);
        assert_eq!(rows[1].w, 16);
        assert!(rows[1].median_abs_err <= rows[0].median_abs_err);
    }
}

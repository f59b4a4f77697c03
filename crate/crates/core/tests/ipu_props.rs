//! Randomized properties of the IPU datapath against exact oracles.
//!
//! The per-iteration oracle below re-derives nibble slices straight from
//! the decoded magnitude bits and sums products as exact dyadics; it
//! shares no code with the datapath's decomposition or shifting.

use mpipu_core::align::ehu;
use mpipu_core::codec::{
    decode_fp16, decompose_fp16, pattern_to_exact, round_to_fp16, FpFormat, Fp16Value, IntWidth,
};
use mpipu_core::exact::ExactValue;
use mpipu_core::ipu::{approx_nibble_iteration, fp_ip_approx, int_ip, IntFormat, IpuConfig};
use mpipu_core::oracle::{exact_fp_ip, sample_vectors, iteration_error_bound, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;

fn fp16_from_parts(sign: i8, exp: i32, magnitude: u16) -> Fp16Value {
    assert!((1024..=2047).contains(&magnitude) && (-14..=15).contains(&exp));
    let sign_bit = if sign < 0 { 0x8000u16 } else { 0 };
    let bits = sign_bit | (((exp + 15) as u16) << 10) | (magnitude & 0x3ff);
    decode_fp16(bits)
}

/// Independent exact value of one nibble iteration over all lanes:
/// sum of sign_k * A_i * B_j * 2^(pe_k + 4(i+j) - 22).
fn exact_iteration(a: &[Fp16Value], b: &[Fp16Value], i: usize, j: usize) -> ExactValue {
    let mut total = ExactValue::zero();
    for (va, vb) in a.iter().zip(b) {
        // nibble slices straight off the 12-bit magnitude grid
        let ma = (va.magnitude as u64) << 1;
        let mb = (vb.magnitude as u64) << 1;
        let ai = ((ma >> (4 * i)) & 0xf) as i64;
        let bj = ((mb >> (4 * j)) & 0xf) as i64;
        let pe = (va.exp_unbiased + vb.exp_unbiased) as i64;
        let term = ExactValue::new(
            va.sign as i64 * vb.sign as i64 * ai * bj,
            pe + 4 * (i + j) as i64 - 22,
        );
        total = total.add(&term);
    }
    total
}

fn random_vectors_with_diff_bound(
    rng: &mut ChaCha8Rng,
    lanes: usize,
    max_diff: u32,
) -> (Vec<Fp16Value>, Vec<Fp16Value>) {
    let base: i32 = rng.random_range(-10..=10);
    let mut a = Vec::with_capacity(lanes);
    let mut b = Vec::with_capacity(lanes);
    for lane in 0..lanes {
        // lane 0 pins the maximum product exponent
        let pe = if lane == 0 { base } else { base - rng.random_range(0..=max_diff as i32) };
        let ea = rng.random_range((pe - 14).max(-14)..=(pe + 14).min(15));
        let eb = pe - ea;
        let sa = if rng.random::<bool>() { 1 } else { -1 };
        let sb = if rng.random::<bool>() { 1 } else { -1 };
        a.push(fp16_from_parts(sa, ea, rng.random_range(1024..=2047)));
        b.push(fp16_from_parts(sb, eb, rng.random_range(1024..=2047)));
    }
    (a, b)
}

fn run_ehu(a: &[Fp16Value], b: &[Fp16Value], cfg: &IpuConfig) -> mpipu_core::AlignmentSchedule {
    let a_exps: Vec<i32> = a.iter().map(|v| v.exp_unbiased).collect();
    let b_exps: Vec<i32> = b.iter().map(|v| v.exp_unbiased).collect();
    ehu(&a_exps, &b_exps, cfg.sw_precision, cfg.safe_precision().max(1))
}

/// Safe shifts leave the adder tree exact: when every diff stays below
/// w−9, the tree output times 2^-(w-9) equals the exact aligned sum.
#[test]
fn adder_tree_exact_under_safe_shifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5afe);
    for &w in &[12u32, 16, 28] {
        let cfg = IpuConfig::new(16, w, 58).unwrap();
        let sp = cfg.safe_precision();
        for _ in 0..10_000 / 3 {
            let lanes = [2usize, 8, 16][rng.random_range(0..3)];
            let (a, b) = random_vectors_with_diff_bound(&mut rng, lanes, sp.saturating_sub(1));
            let sched = run_ehu(&a, &b, &cfg);
            assert!(sched.diffs.iter().all(|&d| d < sp));
            let da: Vec<_> = a.iter().map(|v| decompose_fp16(v).unwrap()).collect();
            let db: Vec<_> = b.iter().map(|v| decompose_fp16(v).unwrap()).collect();
            for i in 0..3 {
                for j in 0..3 {
                    let r = approx_nibble_iteration(&da, &db, i, j, &sched, &cfg);
                    let exact = exact_iteration(&a, &b, i, j);
                    assert_eq!(
                        r.to_exact(),
                        exact,
                        "w={w} i={i} j={j}: safe shifts must be exact"
                    );
                }
            }
        }
    }
}

/// Per-iteration error never exceeds the worst-case bound evaluated at
/// the iteration's effective alignment precision min(sw, w−9).
#[test]
fn per_iteration_error_within_bound() {
    let mut checked = 0u64;
    for dist in [Distribution::laplace(), Distribution::normal(), Distribution::uniform()] {
        for &w in &[12u32, 16, 20, 28] {
            let cfg = IpuConfig::new(16, w, 27).unwrap();
            let effective = cfg.sw_precision.min(cfg.safe_precision());
            for &lanes in &[2usize, 8, 16] {
                let pairs = sample_vectors(dist, lanes, 310, 0xb0d + w as u64 + lanes as u64);
                for (a, b) in &pairs {
                    let sched = run_ehu(a, b, &cfg);
                    let da: Vec<_> = a.iter().map(|v| decompose_fp16(v).unwrap()).collect();
                    let db: Vec<_> = b.iter().map(|v| decompose_fp16(v).unwrap()).collect();
                    for i in 0..3 {
                        for j in 0..3 {
                            let r = approx_nibble_iteration(&da, &db, i, j, &sched, &cfg);
                            let err = exact_iteration(a, b, i, j).sub(&r.to_exact()).abs();
                            let bound = iteration_error_bound(i, j, effective, sched.max_exp, lanes);
                            assert_ne!(
                                err.cmp_value(&bound),
                                Ordering::Greater,
                                "bound violated: dist={} w={w} n={lanes} i={i} j={j}",
                                dist.label()
                            );
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(checked >= 100_000, "only {checked} iterations checked");
}

#[test]
fn int_ip_matches_direct_dot_products() {
    let cfg = IpuConfig::new(16, 16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1234);
    let widths = [IntWidth::Int4, IntWidth::Int8, IntWidth::Int12];
    for trial in 0..100_000 {
        let aw = widths[trial % 3];
        let bw = widths[(trial / 3) % 3];
        let a_signed = trial % 2 == 0;
        let b_signed = (trial / 2) % 2 == 0;
        let lanes = rng.random_range(1..=16usize);
        let draw = |rng: &mut ChaCha8Rng, w: IntWidth, signed: bool| -> i64 {
            let bits = w.bits();
            if signed {
                rng.random_range(-(1i64 << (bits - 1))..(1i64 << (bits - 1)))
            } else {
                rng.random_range(0..(1i64 << bits))
            }
        };
        let a: Vec<i64> = (0..lanes).map(|_| draw(&mut rng, aw, a_signed)).collect();
        let b: Vec<i64> = (0..lanes).map(|_| draw(&mut rng, bw, b_signed)).collect();
        let r = int_ip(
            &a,
            &b,
            IntFormat::new(aw, a_signed),
            IntFormat::new(bw, b_signed),
            &cfg,
        )
        .unwrap();
        let direct: i64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(r.value, direct);
        assert_eq!(r.iterations, aw.nibble_count() * bw.nibble_count());
    }
}

#[test]
fn int4_two_lane_exhaustive() {
    let cfg = IpuConfig::new(2, 16, 16).unwrap();
    let f = IntFormat::new(IntWidth::Int4, true);
    for a0 in -8i64..=7 {
        for a1 in -8i64..=7 {
            for b0 in -8i64..=7 {
                for b1 in -8i64..=7 {
                    let r = int_ip(&[a0, a1], &[b0, b1], f, f, &cfg).unwrap();
                    assert_eq!(r.value, a0 * b0 + a1 * b1);
                    assert_eq!(r.iterations, 1);
                }
            }
        }
    }
}

/// For fixed inputs the rounded result's absolute error never grows as
/// the IPU precision widens (ties allowed).
#[test]
fn error_is_monotone_in_precision() {
    let pairs = sample_vectors(Distribution::normal(), 16, 10_000, 0x35c4de);
    let ws: Vec<u32> = (9..=38).collect();
    for (a, b) in &pairs {
        let exact = exact_fp_ip(a, b);
        let mut prev: Option<ExactValue> = None;
        for &w in &ws {
            let cfg = IpuConfig::new(16, w, 16).unwrap();
            let bits = fp_ip_approx(a, b, &cfg, FpFormat::Fp16).unwrap().bits;
            let err = pattern_to_exact(bits, FpFormat::Fp16).sub(&exact).abs();
            if let Some(p) = &prev {
                assert_ne!(
                    err.cmp_value(p),
                    Ordering::Greater,
                    "error grew from w={} to w={w}",
                    w - 1
                );
            }
            prev = Some(err);
        }
    }
}

/// Negating one input vector negates the exact result bit-for-bit. The
/// two's-complement datapath truncates toward negative infinity, so the
/// two signs approach the exact value from opposite sides; their
/// pre-round gap stays inside the accumulated truncation budget, and the
/// patterns are bit-exact mirror images whenever no truncation fires.
#[test]
fn sign_symmetry() {
    use mpipu_core::ipu::FpDotAccumulator;
    let cfg = IpuConfig::new(16, 16, 16).unwrap();
    let effective = cfg.sw_precision.min(cfg.safe_precision());
    let pairs = sample_vectors(Distribution::normal(), 16, 4_000, 0x516);
    for (a, b) in &pairs {
        let neg_a: Vec<Fp16Value> = a
            .iter()
            .map(|v| {
                decode_fp16(round_to_fp16(&v.to_exact().neg()))
            })
            .collect();
        let exact = exact_fp_ip(a, b);
        assert_eq!(exact_fp_ip(&neg_a, b), exact.neg());

        let mut acc_pos = FpDotAccumulator::new(cfg);
        let sched = acc_pos.add_chunk(a, b).unwrap();
        let mut acc_neg = FpDotAccumulator::new(cfg);
        acc_neg.add_chunk(&neg_a, b).unwrap();
        // masked-lane losses mirror exactly and cancel in the sum; what
        // remains is bounded by twice the per-iteration bounds plus the
        // accumulator's own floor sites (one grid unit per accumulate)
        let gap = acc_pos.state().to_exact().add(&acc_neg.state().to_exact()).abs();
        let mut budget = ExactValue::new(20, sched.max_exp as i64 - 30);
        for i in 0..3 {
            for j in 0..3 {
                budget =
                    budget.add(&iteration_error_bound(i, j, effective, sched.max_exp, 16).scale_pow2(1));
            }
        }
        assert_ne!(gap.cmp_value(&budget), Ordering::Greater, "sign gap exceeds budget");

        let pos = acc_pos.finalize(FpFormat::Fp16).bits16();
        let neg = acc_neg.finalize(FpFormat::Fp16).bits16();
        if pos & 0x7fff != 0 && neg & 0x7fff != 0 {
            assert_ne!(pos >> 15, neg >> 15, "sign failed to flip");
        }
    }

    // no truncation -> exact pattern negation
    let mut rng = ChaCha8Rng::seed_from_u64(0x51f3);
    let sp = cfg.safe_precision();
    for _ in 0..2_000 {
        let (a, b) = random_vectors_with_diff_bound(&mut rng, 16, sp - 1);
        let neg_a: Vec<Fp16Value> =
            a.iter().map(|v| decode_fp16(round_to_fp16(&v.to_exact().neg()))).collect();
        let pos = fp_ip_approx(&a, &b, &cfg, FpFormat::Fp16).unwrap().bits16();
        let neg = fp_ip_approx(&neg_a, &b, &cfg, FpFormat::Fp16).unwrap().bits16();
        if pos & 0x7fff != 0 {
            assert_eq!(pos ^ 0x8000, neg);
        } else {
            assert_eq!(neg & 0x7fff, 0);
        }
    }
}

/// A single product needs no alignment; at wide precision the datapath
/// reproduces the exactly rounded product for any finite inputs.
#[test]
fn single_lane_exact_at_wide_precision() {
    let cfg = IpuConfig::new(2, 28, 27).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xabc);
    for _ in 0..20_000 {
        let a = decode_fp16(rng.random::<u16>());
        let b = decode_fp16(rng.random::<u16>());
        if !a.is_finite() || !b.is_finite() {
            continue;
        }
        let r = fp_ip_approx(&[a], &[b], &cfg, FpFormat::Fp32).unwrap();
        let exact = a.to_exact().mul(&b.to_exact());
        assert_eq!(r.bits, mpipu_core::codec::round_to_fp32(&exact));
    }
}

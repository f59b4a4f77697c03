//! The trace-ipu workflow: run one FP inner product and dump the full
//! alignment and accumulation story, cycle by cycle and iteration by
//! iteration, in the walk-through style.

use crate::config::{parse_fp16_hex, ExperimentConfig};
use crate::{meta_line, CliError};
use mpipu_core::align::ehu;
use mpipu_core::codec::{decode_fp16, decompose_fp16, round_to_format, FpFormat, Fp16Value};
use mpipu_core::ipu::{accumulate, approx_nibble_iteration, AccumulatorState};
use serde::Serialize;

fn lane_label(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("L{i}")
    }
}

#[derive(Debug, Serialize)]
pub struct LaneTrace {
    pub label: String,
    pub a: String,
    pub b: String,
    pub a_exp: i32,
    pub b_exp: i32,
    pub product_exp: i32,
    pub diff: u32,
    pub masked: bool,
}

#[derive(Debug, Serialize)]
pub struct CycleTrace {
    pub cycle: usize,
    pub partition: u32,
    pub served: Vec<String>,
    pub local_shifts: Vec<u32>,
    pub extra_shift: u32,
}

#[derive(Debug, Serialize)]
pub struct IterationTrace {
    pub i: usize,
    pub j: usize,
    pub adder_out: i64,
    /// log2 weight of adder_out.
    pub scale: i32,
    pub acc_exp: i32,
    pub acc_magnitude: String,
}

#[derive(Debug, Serialize)]
pub struct TraceReport {
    pub meta: String,
    pub lanes: u32,
    pub w: u32,
    pub safe_precision: u32,
    pub sw_precision: u32,
    pub acc_format: FpFormat,
    pub max_exp: i32,
    pub lane_table: Vec<LaneTrace>,
    pub cycles: Vec<CycleTrace>,
    pub cycles_per_nibble_iteration: u32,
    pub iterations: Vec<IterationTrace>,
    pub result_bits: String,
    pub result_value: f64,
}

impl TraceReport {
    /// The human-readable dump printed to stdout.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.meta);
        out.push('\n');
        out.push_str(&format!(
            "trace-ipu: n={} w={} sp={} sw_precision={} acc={:?}\n",
            self.lanes, self.w, self.safe_precision, self.sw_precision, self.acc_format
        ));
        out.push_str("lane  a       b       a_exp  b_exp  prod_exp  diff  masked\n");
        for lane in &self.lane_table {
            out.push_str(&format!(
                "{:<5} {:<7} {:<7} {:<6} {:<6} {:<9} {:<5} {}\n",
                lane.label,
                lane.a,
                lane.b,
                lane.a_exp,
                lane.b_exp,
                lane.product_exp,
                lane.diff,
                if lane.masked { "yes" } else { "no" }
            ));
        }
        out.push_str(&format!("max_exp = {}\n", self.max_exp));
        for c in &self.cycles {
            let shifts: Vec<String> = c
                .served
                .iter()
                .zip(&c.local_shifts)
                .map(|(l, s)| format!("{l}:{s}"))
                .collect();
            out.push_str(&format!(
                "cycle {}: partition {}, served {{{}}}, local shifts {{{}}}, extra shift {}\n",
                c.cycle,
                c.partition,
                c.served.join(", "),
                shifts.join(", "),
                c.extra_shift
            ));
        }
        out.push_str(&format!(
            "cycles per nibble iteration: {}\n",
            self.cycles_per_nibble_iteration
        ));
        for it in &self.iterations {
            out.push_str(&format!(
                "iteration (i={}, j={}): adder_out={} (x2^{}), acc exp={} mag={}\n",
                it.i, it.j, it.adder_out, it.scale, it.acc_exp, it.acc_magnitude
            ));
        }
        out.push_str(&format!(
            "result: {} ({}) [{:?}]\n",
            self.result_bits, self.result_value, self.acc_format
        ));
        out
    }
}

pub fn run_trace_ipu(config: &ExperimentConfig) -> Result<TraceReport, CliError> {
    let ipu = config.require_ipu()?.resolve()?;
    let section = config.require_trace()?;
    if ipu.lanes > 16 {
        return Err(CliError::Config("trace-ipu is limited to 16 lanes".into()));
    }
    if ipu.safe_precision() == 0 {
        return Err(CliError::Config("trace-ipu needs w >= 10 (safe precision >= 1)".into()));
    }
    let parse_vec = |texts: &[String]| -> Result<Vec<Fp16Value>, CliError> {
        texts.iter().map(|t| Ok(decode_fp16(parse_fp16_hex(t)?))).collect()
    };
    let a = parse_vec(&section.a)?;
    let b = parse_vec(&section.b)?;
    if a.len() != b.len() || a.is_empty() || a.len() > ipu.lanes as usize {
        return Err(CliError::Config(format!(
            "trace needs equal-length vectors of 1..={} lanes",
            ipu.lanes
        )));
    }
    if a.iter().chain(&b).any(|v| !v.is_finite()) {
        return Err(CliError::Numeric("INF/NaN operand in trace input".into()));
    }
    let acc_format = section.acc_format.unwrap_or(FpFormat::Fp16);
    let charge_empty = section.charge_empty_partitions.unwrap_or(false);

    let da: Vec<_> = a.iter().map(decompose_fp16).collect::<Result<_, _>>()?;
    let db: Vec<_> = b.iter().map(decompose_fp16).collect::<Result<_, _>>()?;
    let a_exps: Vec<i32> = a.iter().map(|v| v.exp_unbiased).collect();
    let b_exps: Vec<i32> = b.iter().map(|v| v.exp_unbiased).collect();
    let sched = ehu(&a_exps, &b_exps, ipu.sw_precision, ipu.safe_precision());

    let lane_table = (0..a.len())
        .map(|k| LaneTrace {
            label: lane_label(k),
            a: format!("{:#06X}", parse_fp16_hex(&section.a[k]).unwrap()),
            b: format!("{:#06X}", parse_fp16_hex(&section.b[k]).unwrap()),
            a_exp: a_exps[k],
            b_exp: b_exps[k],
            product_exp: a_exps[k] + b_exps[k],
            diff: sched.diffs[k],
            masked: sched.masked[k],
        })
        .collect();
    let cycles = sched
        .cycles
        .iter()
        .enumerate()
        .map(|(idx, c)| CycleTrace {
            cycle: idx,
            partition: c.partition,
            served: c.served.iter().map(|&l| lane_label(l)).collect(),
            local_shifts: c.local_shifts.clone(),
            extra_shift: c.extra_shift,
        })
        .collect();

    let mut acc = AccumulatorState::new_fp();
    let mut iterations = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            let r = approx_nibble_iteration(&da, &db, i, j, &sched, &ipu);
            acc = accumulate(&acc, &r, i, j, 3, 3, &ipu)?;
            iterations.push(IterationTrace {
                i,
                j,
                adder_out: r.adder_out,
                scale: r.scale,
                acc_exp: acc.exponent(),
                acc_magnitude: format!("{:#x}", acc.magnitude()),
            });
        }
    }
    let exact = acc.to_exact();
    let result_bits = round_to_format(&exact, acc_format);
    let result_value = mpipu_core::codec::pattern_to_f64(result_bits, acc_format);
    let width = acc_format.pattern_bits() as usize / 4;

    Ok(TraceReport {
        meta: meta_line(&config.hash(), config.seed),
        lanes: ipu.lanes,
        w: ipu.precision,
        safe_precision: ipu.safe_precision(),
        sw_precision: ipu.sw_precision,
        acc_format,
        max_exp: sched.max_exp,
        lane_table,
        cycles,
        cycles_per_nibble_iteration: sched.cycle_count(charge_empty),
        iterations,
        result_bits: format!("0x{result_bits:0width$X}"),
        result_value,
    })
}

//! Cycle-accurate simulation of inner-product convolution tiles.
//!
//! A tile unrolls (C, K, Ho, Wo): one multi-cycle IPU per (K, Ho, Wo)
//! slot, C mapped across the lanes. IPUs are grouped into clusters that
//! run in lockstep; clusters proceed independently through per-cluster
//! input queues fed by a broadcast that stops when any queue is full.
//! Memory is ideal: the only throughput limits are the datapath schedules
//! and the queue coupling. Numerical results are computed by the same
//! value-level IPU model the rest of the crate uses, so clustering and
//! buffering affect time only, never values.

use crate::codec::{decode_fp16, round_to_fp16, Fp16Value, FpFormat};
use crate::exact::ExactValue;
use crate::ipu::{FpDotAccumulator, IpuConfig};
use crate::oracle::Distribution;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Alignment diffs cannot exceed 58 for FP16 products, so the histogram
/// is indexed 0..=58.
pub const MAX_EXP_DIFF: usize = 58;

/// Tile shape and datapath parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileConfig {
    /// Input-channel unroll; this is the IPU lane count.
    pub unroll_c: u32,
    /// Output-channel unroll (IPUs along K).
    pub unroll_k: u32,
    /// Spatial output unroll.
    pub unroll_h: u32,
    pub unroll_w: u32,
    /// MC-IPUs per cluster; must divide the IPUs per tile.
    pub cluster_size: u32,
    /// Per-cluster input queue depth in steps.
    pub buffer_depth: u32,
    pub num_tiles: u32,
    /// Adder tree width w (IPU precision).
    pub precision: u32,
    pub sw_precision: u32,
    /// Charge a cycle for empty partitions, like a threshold loop that
    /// increments every cycle would.
    pub charge_empty_partitions: bool,
}

impl TileConfig {
    /// The small preset: (8,8,2,2) unrolling, four tiles.
    pub fn small(precision: u32, sw_precision: u32) -> Self {
        TileConfig {
            unroll_c: 8,
            unroll_k: 8,
            unroll_h: 2,
            unroll_w: 2,
            cluster_size: 32,
            buffer_depth: 4,
            num_tiles: 4,
            precision,
            sw_precision,
            charge_empty_partitions: false,
        }
    }

    /// The big preset: (16,16,2,2) unrolling, four tiles.
    pub fn big(precision: u32, sw_precision: u32) -> Self {
        TileConfig {
            unroll_c: 16,
            unroll_k: 16,
            unroll_h: 2,
            unroll_w: 2,
            cluster_size: 64,
            buffer_depth: 4,
            num_tiles: 4,
            precision,
            sw_precision,
            charge_empty_partitions: false,
        }
    }

    pub fn ipu_inputs(&self) -> u32 {
        self.unroll_c
    }

    pub fn ipus_per_tile(&self) -> u32 {
        self.unroll_k * self.unroll_h * self.unroll_w
    }

    pub fn clusters_per_tile(&self) -> u32 {
        self.ipus_per_tile() / self.cluster_size
    }

    pub fn ipu_config(&self) -> Result<IpuConfig> {
        IpuConfig::new(self.unroll_c, self.precision, self.sw_precision)
    }

    pub fn validate(&self) -> Result<()> {
        self.ipu_config()?;
        if self.precision < 10 {
            return Err(Error::InvalidConfig(
                "tile precision must be at least 10 (safe precision >= 1)".into(),
            ));
        }
        if self.unroll_k == 0 || self.unroll_h == 0 || self.unroll_w == 0 {
            return Err(Error::InvalidConfig("unroll factors must be positive".into()));
        }
        if self.cluster_size == 0 || !self.ipus_per_tile().is_multiple_of(self.cluster_size) {
            return Err(Error::InvalidConfig(format!(
                "cluster size {} must divide the {} IPUs per tile",
                self.cluster_size,
                self.ipus_per_tile()
            )));
        }
        if self.buffer_depth == 0 {
            return Err(Error::InvalidConfig("buffer depth must be positive".into()));
        }
        if self.num_tiles == 0 {
            return Err(Error::InvalidConfig("need at least one tile".into()));
        }
        Ok(())
    }
}

/// Convolution layer dimensions. The OFM height/width derive from input
/// size, padding, kernel and stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// IFM channels, height, width.
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    /// OFM channels and kernel height/width.
    pub out_channels: u32,
    pub kernel_h: u32,
    pub kernel_w: u32,
    pub stride: u32,
    pub padding: u32,
}

impl LayerSpec {
    pub fn out_height(&self) -> u32 {
        (self.height + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn out_width(&self) -> u32 {
        (self.width + 2 * self.padding - self.kernel_w) / self.stride + 1
    }

    pub fn ifm_len(&self) -> usize {
        (self.channels * self.height * self.width) as usize
    }

    pub fn weight_len(&self) -> usize {
        (self.out_channels * self.channels * self.kernel_h * self.kernel_w) as usize
    }

    pub fn ofm_len(&self) -> usize {
        (self.out_channels * self.out_height() * self.out_width()) as usize
    }

    /// Total multiplies in the layer: K * OH * OW * C * R * S.
    pub fn multiply_count(&self) -> u64 {
        self.out_channels as u64
            * self.out_height() as u64
            * self.out_width() as u64
            * self.channels as u64
            * self.kernel_h as u64
            * self.kernel_w as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidMapping("channel counts must be positive".into()));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
            return Err(Error::InvalidMapping("kernel dims and stride must be positive".into()));
        }
        if self.height + 2 * self.padding < self.kernel_h
            || self.width + 2 * self.padding < self.kernel_w
        {
            return Err(Error::InvalidMapping("kernel larger than padded input".into()));
        }
        Ok(())
    }
}

/// Timing and alignment statistics from one simulated layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub total_cycles: u64,
    /// Busy cycles per cluster position, summed over tiles.
    pub cycles_per_cluster: Vec<u64>,
    /// Idle cycles across all clusters and tiles (waiting on the queue
    /// coupling or on slower peers).
    pub stall_cycles: u64,
    /// Count of per-lane alignment diffs, indexed by diff 0..=58. The
    /// masking policy is applied separately; raw diffs are counted here.
    pub exp_diff_histogram: Vec<u64>,
    pub mean_cycles_per_nibble_iteration: f64,
}

impl SimReport {
    /// Share of diffs strictly greater than eight, in percent.
    pub fn pct_diffs_gt8(&self) -> f64 {
        let total: u64 = self.exp_diff_histogram.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let tail: u64 = self.exp_diff_histogram[9..].iter().sum();
        100.0 * tail as f64 / total as f64
    }
}

/// Output groups in stream order: K-groups outermost (weight stationary),
/// then output rows and columns.
fn group_list(layer: &LayerSpec, tile: &TileConfig) -> Vec<(u32, u32, u32)> {
    let kg = layer.out_channels.div_ceil(tile.unroll_k);
    let hg = layer.out_height().div_ceil(tile.unroll_h);
    let wg = layer.out_width().div_ceil(tile.unroll_w);
    let mut groups = Vec::with_capacity((kg * hg * wg) as usize);
    for k in 0..kg {
        for h in 0..hg {
            for w in 0..wg {
                groups.push((k, h, w));
            }
        }
    }
    groups
}

fn steps_per_group(layer: &LayerSpec, tile: &TileConfig) -> u64 {
    layer.channels.div_ceil(tile.unroll_c) as u64 * (layer.kernel_h * layer.kernel_w) as u64
}

/// Ideal cycle count for the same mapping with a single cycle per nibble
/// iteration (the wide-adder baseline).
pub fn baseline_cycles(layer: &LayerSpec, tile: &TileConfig) -> Result<u64> {
    layer.validate()?;
    tile.validate()?;
    let groups = group_list(layer, tile).len() as u64;
    let per_tile = groups.div_ceil(tile.num_tiles as u64);
    Ok(per_tile * steps_per_group(layer, tile) * 9)
}

/// Queue-coupled timing of one tile: `costs[cluster][step]` are datapath
/// cycles; the broadcast refuses a new step until every cluster has
/// started the step `buffer_depth` back.
fn run_queue_model(costs: &[Vec<u64>], buffer_depth: u32) -> (u64, u64, Vec<u64>) {
    let clusters = costs.len();
    let steps = costs.first().map(|c| c.len()).unwrap_or(0);
    if steps == 0 {
        return (0, 0, vec![0; clusters]);
    }
    let b = buffer_depth as usize;
    let mut starts = vec![vec![0u64; steps]; clusters];
    let mut finishes = vec![0u64; clusters];
    let mut arrive_prev = 0u64;
    for s in 0..steps {
        let arrive = if s < b {
            0
        } else {
            let gate = (0..clusters).map(|c| starts[c][s - b]).max().unwrap_or(0);
            arrive_prev.max(gate)
        };
        arrive_prev = arrive;
        for c in 0..clusters {
            let start = arrive.max(finishes[c]);
            starts[c][s] = start;
            finishes[c] = start + costs[c][s];
        }
    }
    let total = finishes.iter().copied().max().unwrap_or(0);
    let busy: Vec<u64> = costs.iter().map(|c| c.iter().sum()).collect();
    let stall: u64 = finishes.iter().zip(&busy).map(|(f, b)| f - b).sum();
    (total, stall, busy)
}

/// Simulate one convolution layer on the tile configuration.
///
/// `ifm` is C*H*W FP16 patterns in (c, y, x) raster order; `weights` are
/// K*C*R*S in (k, c, r, s) order. Returns the report and the OFM as FP16
/// patterns in (k, y, x) order.
pub fn simulate_layer(
    layer: &LayerSpec,
    tile: &TileConfig,
    ifm: &[u16],
    weights: &[u16],
) -> Result<(SimReport, Vec<u16>)> {
    layer.validate()?;
    tile.validate()?;
    if ifm.len() != layer.ifm_len() {
        return Err(Error::InvalidMapping(format!(
            "IFM has {} elements, layer needs {}",
            ifm.len(),
            layer.ifm_len()
        )));
    }
    if weights.len() != layer.weight_len() {
        return Err(Error::InvalidMapping(format!(
            "weight tensor has {} elements, layer needs {}",
            weights.len(),
            layer.weight_len()
        )));
    }
    for &bits in ifm.iter().chain(weights) {
        if !decode_fp16(bits).is_finite() {
            return Err(Error::NonFiniteInput);
        }
    }

    let cfg = tile.ipu_config()?;
    let n = tile.unroll_c as usize;
    let (oh, ow) = (layer.out_height(), layer.out_width());
    let slots = tile.ipus_per_tile() as usize;
    let cluster_size = tile.cluster_size as usize;
    let clusters = tile.clusters_per_tile() as usize;
    let chunks = layer.channels.div_ceil(tile.unroll_c);
    let groups = group_list(layer, tile);

    let mut ofm = vec![0u16; layer.ofm_len()];
    let mut hist = vec![0u64; MAX_EXP_DIFF + 1];
    let mut tile_costs: Vec<Vec<Vec<u64>>> =
        vec![vec![Vec::new(); clusters]; tile.num_tiles as usize];

    let ifm_at = |c: u32, y: i64, x: i64| -> u16 {
        if y < 0 || x < 0 || y >= layer.height as i64 || x >= layer.width as i64 {
            return 0; // zero padding
        }
        ifm[((c as i64 * layer.height as i64 + y) * layer.width as i64 + x) as usize]
    };
    let weight_at = |k: u32, c: u32, r: u32, s: u32| -> u16 {
        weights[(((k * layer.channels + c) * layer.kernel_h + r) * layer.kernel_w + s) as usize]
    };

    let mut a_buf: Vec<Fp16Value> = Vec::with_capacity(n);
    let mut b_buf: Vec<Fp16Value> = Vec::with_capacity(n);

    for (gidx, &(kg, hg, wg)) in groups.iter().enumerate() {
        let t = gidx % tile.num_tiles as usize;
        // slot -> output coordinates, None when the group is partial
        let slot_pixel: Vec<Option<(u32, u32, u32)>> = (0..slots)
            .map(|slot| {
                let ki = slot as u32 / (tile.unroll_h * tile.unroll_w);
                let hi = (slot as u32 / tile.unroll_w) % tile.unroll_h;
                let wi = slot as u32 % tile.unroll_w;
                let k = kg * tile.unroll_k + ki;
                let y = hg * tile.unroll_h + hi;
                let x = wg * tile.unroll_w + wi;
                (k < layer.out_channels && y < oh && x < ow).then_some((k, y, x))
            })
            .collect();
        let mut accs: Vec<Option<FpDotAccumulator>> = slot_pixel
            .iter()
            .map(|p| p.map(|_| FpDotAccumulator::new(cfg)))
            .collect();

        for chunk in 0..chunks {
            let c_base = chunk * tile.unroll_c;
            let lanes = (layer.channels - c_base).min(tile.unroll_c);
            for r in 0..layer.kernel_h {
                for s in 0..layer.kernel_w {
                    let mut cluster_cost = vec![9u64; clusters]; // idle slots still clock
                    for slot in 0..slots {
                        let Some((k, y, x)) = slot_pixel[slot] else { continue };
                        let iy = (y * layer.stride + r) as i64 - layer.padding as i64;
                        let ix = (x * layer.stride + s) as i64 - layer.padding as i64;
                        a_buf.clear();
                        b_buf.clear();
                        for lane in 0..lanes {
                            let c = c_base + lane;
                            a_buf.push(decode_fp16(ifm_at(c, iy, ix)));
                            b_buf.push(decode_fp16(weight_at(k, c, r, s)));
                        }
                        let sched =
                            accs[slot].as_mut().unwrap().add_chunk(&a_buf, &b_buf)?;
                        for &d in &sched.diffs {
                            hist[(d as usize).min(MAX_EXP_DIFF)] += 1;
                        }
                        let cost = 9 * sched.cycle_count(tile.charge_empty_partitions) as u64;
                        let cl = slot / cluster_size;
                        cluster_cost[cl] = cluster_cost[cl].max(cost);
                    }
                    for (cl, cost) in cluster_cost.iter().enumerate() {
                        tile_costs[t][cl].push(*cost);
                    }
                }
            }
        }

        for (slot, pixel) in slot_pixel.iter().enumerate() {
            if let Some((k, y, x)) = pixel {
                let bits = accs[slot].as_ref().unwrap().finalize(FpFormat::Fp16).bits16();
                ofm[((k * oh + y) * ow + x) as usize] = bits;
            }
        }
    }

    let mut total_cycles = 0u64;
    let mut stall_cycles = 0u64;
    let mut cycles_per_cluster = vec![0u64; clusters];
    let mut cost_sum = 0u64;
    let mut cost_entries = 0u64;
    for costs in &tile_costs {
        let (total, stall, busy) = run_queue_model(costs, tile.buffer_depth);
        total_cycles = total_cycles.max(total);
        stall_cycles += stall;
        for (c, b) in busy.iter().enumerate() {
            cycles_per_cluster[c] += b;
            cost_sum += b;
        }
        cost_entries += costs.iter().map(|c| c.len() as u64).sum::<u64>();
    }
    let mean = if cost_entries == 0 { 0.0 } else { cost_sum as f64 / (9.0 * cost_entries as f64) };

    Ok((
        SimReport {
            total_cycles,
            cycles_per_cluster,
            stall_cycles,
            exp_diff_histogram: hist,
            mean_cycles_per_nibble_iteration: mean,
        },
        ofm,
    ))
}

/// Draw IFM and weight tensors for a layer from a synthetic distribution.
pub fn synthetic_tensors(layer: &LayerSpec, dist: Distribution, seed: u64) -> (Vec<u16>, Vec<u16>) {
    let draw = |stream: u64, len: usize| -> Vec<u16> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        (0..len).map(|_| round_to_fp16(&ExactValue::from_f64(dist.draw(&mut rng)))).collect()
    };
    (draw(0, layer.ifm_len()), draw(1, layer.weight_len()))
}

/// Simulate a layer with synthetic data.
pub fn simulate_layer_synthetic(
    layer: &LayerSpec,
    tile: &TileConfig,
    dist: Distribution,
    seed: u64,
) -> Result<(SimReport, Vec<u16>)> {
    let (ifm, weights) = synthetic_tensors(layer, dist, seed);
    simulate_layer(layer, tile, &ifm, &weights)
}

/// Alignment-size histogram of a layer on a tile (timing ignored).
pub fn exp_diff_histogram(
    layer: &LayerSpec,
    tile: &TileConfig,
    ifm: &[u16],
    weights: &[u16],
) -> Result<Vec<u64>> {
    simulate_layer(layer, tile, ifm, weights).map(|(report, _)| report.exp_diff_histogram)
}

/// One configuration point of the design-space sweep.
#[derive(Debug, Clone, Serialize)]
pub struct DesignPoint {
    pub layer: String,
    pub w: u32,
    pub cluster_size: u32,
    pub buffer_depth: u32,
    pub total_cycles: u64,
    pub baseline_cycles: u64,
    pub normalized_time: f64,
    pub pct_diffs_gt8: f64,
}

/// Sweep precisions and cluster sizes over a set of layers, reporting
/// execution time normalized to the wide-adder baseline.
pub fn sweep_design_space(
    layers: &[(LayerSpec, Vec<u16>, Vec<u16>)],
    base: &TileConfig,
    w_list: &[u32],
    cluster_sizes: &[u32],
) -> Result<Vec<DesignPoint>> {
    let mut rows = Vec::new();
    for (layer, ifm, weights) in layers {
        for &w in w_list {
            for &cs in cluster_sizes {
                let tile = TileConfig { precision: w, cluster_size: cs, ..*base };
                let (report, _) = simulate_layer(layer, &tile, ifm, weights)?;
                let baseline = baseline_cycles(layer, &tile)?;
                rows.push(DesignPoint {
                    layer: layer.name.clone(),
                    w,
                    cluster_size: cs,
                    buffer_depth: tile.buffer_depth,
                    total_cycles: report.total_cycles,
                    baseline_cycles: baseline,
                    normalized_time: report.total_cycles as f64 / baseline as f64,
                    pct_diffs_gt8: report.pct_diffs_gt8(),
                });
            }
        }
    }
    Ok(rows)
}

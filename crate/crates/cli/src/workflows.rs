//! The CSV-producing workflows: analyze-error, simulate-tile, and sweep.
//!
//! Every CSV starts with one `#` metadata line (tool version, config
//! hash, seed) followed by a fixed header row. Number formatting uses
//! Rust's shortest-round-trip float display, so byte-identical reruns
//! come for free from deterministic computation.

use crate::config::{DataSource, ExperimentConfig, LayerSection};
use crate::tensor::TensorFile;
use crate::{meta_line, CliError};
use mpipu_core::oracle::precision_sweep;
use mpipu_core::tile::{baseline_cycles, simulate_layer, synthetic_tensors, LayerSpec, TileConfig};
use mpipu_core::FpFormat;

pub const ERROR_CSV_HEADER: &str =
    "dist,acc_format,w,median_abs_err,median_are_pct,median_contam_bits,mean_contam_bits,samples,seed";

pub const TILE_CSV_HEADER: &str =
    "layer,w,cluster_size,buffer_depth,total_cycles,baseline_cycles,normalized_time,pct_diffs_gt8";

fn fmt_label(fmt: FpFormat) -> &'static str {
    match fmt {
        FpFormat::Fp16 => "fp16",
        FpFormat::Fp32 => "fp32",
    }
}

/// Run the precision study and render it as CSV.
pub fn run_analyze_error(config: &ExperimentConfig) -> Result<String, CliError> {
    let section = config.require_error_analysis()?;
    if section.w_values.is_empty() || section.samples == 0 {
        return Err(CliError::Config("error analysis needs w_values and samples".into()));
    }
    let mut out = String::new();
    out.push_str(&meta_line(&config.hash(), config.seed));
    out.push('\n');
    out.push_str(ERROR_CSV_HEADER);
    out.push('\n');
    for &fmt in &section.acc_formats {
        for &dist in &section.dists {
            let rows = precision_sweep(
                dist,
                fmt,
                &section.w_values,
                section.lanes,
                section.samples,
                config.seed,
            );
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.dist,
                    fmt_label(r.acc_format),
                    r.w,
                    r.median_abs_err,
                    r.median_are_pct,
                    r.median_contam_bits,
                    r.mean_contam_bits,
                    r.samples,
                    r.seed
                ));
            }
        }
    }
    Ok(out)
}

/// Load or synthesize the tensors for one layer.
fn layer_data(
    section: &LayerSection,
    spec: &LayerSpec,
    seed: u64,
) -> Result<(Vec<u16>, Vec<u16>), CliError> {
    match &section.source {
        DataSource::Synthetic { dist } => Ok(synthetic_tensors(spec, *dist, seed)),
        DataSource::Tensor { ifm, weights } => {
            let ifm_t = TensorFile::read_from(ifm)?;
            let w_t = TensorFile::read_from(weights)?;
            let want_ifm = [spec.channels, spec.height, spec.width];
            if ifm_t.dims != want_ifm {
                return Err(CliError::Config(format!(
                    "IFM dims {:?} do not match layer {:?}",
                    ifm_t.dims, want_ifm
                )));
            }
            let want_w = [spec.out_channels, spec.channels, spec.kernel_h, spec.kernel_w];
            if w_t.dims != want_w {
                return Err(CliError::Config(format!(
                    "weight dims {:?} do not match layer {:?}",
                    w_t.dims, want_w
                )));
            }
            Ok((ifm_t.data, w_t.data))
        }
    }
}

fn tile_row(
    spec: &LayerSpec,
    tile: &TileConfig,
    ifm: &[u16],
    weights: &[u16],
) -> Result<String, CliError> {
    let (report, _) = simulate_layer(spec, tile, ifm, weights)?;
    let baseline = baseline_cycles(spec, tile)?;
    Ok(format!(
        "{},{},{},{},{},{},{},{}\n",
        spec.name,
        tile.precision,
        tile.cluster_size,
        tile.buffer_depth,
        report.total_cycles,
        baseline,
        report.total_cycles as f64 / baseline as f64,
        report.pct_diffs_gt8()
    ))
}

/// Simulate every configured layer on the configured tile.
pub fn run_simulate_tile(config: &ExperimentConfig) -> Result<String, CliError> {
    let tile = config.require_tile()?.resolve()?;
    let layers = config.require_layers()?;
    let mut out = String::new();
    out.push_str(&meta_line(&config.hash(), config.seed));
    out.push('\n');
    out.push_str(TILE_CSV_HEADER);
    out.push('\n');
    for section in layers {
        let spec = section.spec();
        let (ifm, weights) = layer_data(section, &spec, config.seed)?;
        out.push_str(&tile_row(&spec, &tile, &ifm, &weights)?);
    }
    Ok(out)
}

/// Cross every layer with the sweep's precisions and cluster sizes.
pub fn run_sweep(config: &ExperimentConfig) -> Result<String, CliError> {
    let base = config.require_tile()?.resolve()?;
    let layers = config.require_layers()?;
    let sweep = config.require_sweep()?;
    if sweep.w_list.is_empty() || sweep.cluster_sizes.is_empty() {
        return Err(CliError::Config("sweep needs w_list and cluster_sizes".into()));
    }
    let mut out = String::new();
    out.push_str(&meta_line(&config.hash(), config.seed));
    out.push('\n');
    out.push_str(TILE_CSV_HEADER);
    out.push('\n');
    for section in layers {
        let spec = section.spec();
        let (ifm, weights) = layer_data(section, &spec, config.seed)?;
        for &w in &sweep.w_list {
            for &cs in &sweep.cluster_sizes {
                let tile = TileConfig { precision: w, cluster_size: cs, ..base };
                tile.validate()?;
                out.push_str(&tile_row(&spec, &tile, &ifm, &weights)?);
            }
        }
    }
    Ok(out)
}

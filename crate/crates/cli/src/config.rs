//! Experiment configuration: JSON, schema-checked (unknown keys are
//! rejected), with CLI overrides folded in before anything runs. The
//! configuration hash embedded in outputs covers everything that affects
//! results; the output path and thread count are excluded.

use crate::CliError;
use mpipu_core::ipu::IpuConfig;
use mpipu_core::oracle::Distribution;
use mpipu_core::tile::{LayerSpec, TileConfig};
use mpipu_core::FpFormat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Workflow {
    #[serde(rename = "trace-ipu")]
    TraceIpu,
    #[serde(rename = "analyze-error")]
    AnalyzeError,
    #[serde(rename = "simulate-tile")]
    SimulateTile,
    #[serde(rename = "sweep")]
    Sweep,
}

impl std::str::FromStr for Workflow {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "trace-ipu" => Ok(Workflow::TraceIpu),
            "analyze-error" => Ok(Workflow::AnalyzeError),
            "simulate-tile" => Ok(Workflow::SimulateTile),
            "sweep" => Ok(Workflow::Sweep),
            other => Err(CliError::Config(format!("unknown workflow {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IpuSection {
    pub lanes: u32,
    pub w: u32,
    pub sw_precision: u32,
    #[serde(default)]
    pub accum_depth: Option<u32>,
}

impl IpuSection {
    pub fn resolve(&self) -> Result<IpuConfig, CliError> {
        let cfg = IpuConfig::new(self.lanes, self.w, self.sw_precision)?;
        match self.accum_depth {
            Some(d) => Ok(cfg.with_accum_depth(d)?),
            None => Ok(cfg),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    /// FP16 operand patterns as hex strings ("0x6400" or "6400").
    pub a: Vec<String>,
    pub b: Vec<String>,
    #[serde(default)]
    pub acc_format: Option<FpFormat>,
    #[serde(default)]
    pub charge_empty_partitions: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorAnalysisSection {
    pub dists: Vec<Distribution>,
    pub acc_formats: Vec<FpFormat>,
    pub w_values: Vec<u32>,
    #[serde(default = "default_lanes")]
    pub lanes: usize,
    pub samples: usize,
}

fn default_lanes() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileSection {
    /// "small" (8,8,2,2) or "big" (16,16,2,2); explicit fields override.
    #[serde(default)]
    pub preset: Option<String>,
    pub w: u32,
    pub sw_precision: u32,
    #[serde(default)]
    pub unroll: Option<[u32; 4]>,
    #[serde(default)]
    pub cluster_size: Option<u32>,
    #[serde(default)]
    pub buffer_depth: Option<u32>,
    #[serde(default)]
    pub num_tiles: Option<u32>,
    #[serde(default)]
    pub charge_empty_partitions: Option<bool>,
}

impl TileSection {
    pub fn resolve(&self) -> Result<TileConfig, CliError> {
        let mut tile = match self.preset.as_deref() {
            None | Some("small") => TileConfig::small(self.w, self.sw_precision),
            Some("big") => TileConfig::big(self.w, self.sw_precision),
            Some(other) => {
                return Err(CliError::Config(format!("unknown tile preset {other:?}")))
            }
        };
        if let Some([c, k, h, w]) = self.unroll {
            tile.unroll_c = c;
            tile.unroll_k = k;
            tile.unroll_h = h;
            tile.unroll_w = w;
            tile.cluster_size = tile.ipus_per_tile();
        }
        if let Some(cs) = self.cluster_size {
            tile.cluster_size = cs;
        }
        if let Some(bd) = self.buffer_depth {
            tile.buffer_depth = bd;
        }
        if let Some(nt) = self.num_tiles {
            tile.num_tiles = nt;
        }
        if let Some(flag) = self.charge_empty_partitions {
            tile.charge_empty_partitions = flag;
        }
        tile.validate()?;
        Ok(tile)
    }
}

/// Where a layer's tensors come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic { dist: Distribution },
    Tensor { ifm: PathBuf, weights: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    pub name: String,
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub out_channels: u32,
    pub kernel_h: u32,
    pub kernel_w: u32,
    #[serde(default = "default_stride")]
    pub stride: u32,
    #[serde(default)]
    pub padding: u32,
    pub source: DataSource,
}

fn default_stride() -> u32 {
    1
}

impl LayerSection {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            name: self.name.clone(),
            channels: self.channels,
            height: self.height,
            width: self.width,
            out_channels: self.out_channels,
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            stride: self.stride,
            padding: self.padding,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub w_list: Vec<u32>,
    pub cluster_sizes: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub workflow: Workflow,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub ipu: Option<IpuSection>,
    #[serde(default)]
    pub trace: Option<TraceSection>,
    #[serde(default)]
    pub error_analysis: Option<ErrorAnalysisSection>,
    #[serde(default)]
    pub tile: Option<TileSection>,
    #[serde(default)]
    pub layers: Option<Vec<LayerSection>>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 over the result-relevant configuration (the output path
    /// and thread count do not affect results and are excluded).
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out");
            map.remove("threads");
        }
        let canonical = serde_json::to_vec(&value).expect("canonical json");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn require_ipu(&self) -> Result<&IpuSection, CliError> {
        self.ipu.as_ref().ok_or_else(|| CliError::Config("missing \"ipu\" section".into()))
    }

    pub fn require_trace(&self) -> Result<&TraceSection, CliError> {
        self.trace.as_ref().ok_or_else(|| CliError::Config("missing \"trace\" section".into()))
    }

    pub fn require_error_analysis(&self) -> Result<&ErrorAnalysisSection, CliError> {
        self.error_analysis
            .as_ref()
            .ok_or_else(|| CliError::Config("missing \"error_analysis\" section".into()))
    }

    pub fn require_tile(&self) -> Result<&TileSection, CliError> {
        self.tile.as_ref().ok_or_else(|| CliError::Config("missing \"tile\" section".into()))
    }

    pub fn require_layers(&self) -> Result<&[LayerSection], CliError> {
        match self.layers.as_deref() {
            Some(layers) if !layers.is_empty() => Ok(layers),
            _ => Err(CliError::Config("missing or empty \"layers\" section".into())),
        }
    }

    pub fn require_sweep(&self) -> Result<&SweepSection, CliError> {
        self.sweep.as_ref().ok_or_else(|| CliError::Config("missing \"sweep\" section".into()))
    }
}

/// Parse an FP16 pattern written as hex, with or without the 0x prefix.
pub fn parse_fp16_hex(text: &str) -> Result<u16, CliError> {
    let digits = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")).unwrap_or(text);
    u16::from_str_radix(digits, 16)
        .map_err(|_| CliError::Config(format!("{text:?} is not a 16-bit hex pattern")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_trace_config_parses() {
        let cfg = ExperimentConfig::from_json(
            r#"{
              "workflow": "trace-ipu",
              "seed": 7,
              "ipu": { "lanes": 4, "w": 14, "sw_precision": 16 },
              "trace": { "a": ["0x6400"], "b": ["3C00"] }
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.workflow, Workflow::TraceIpu);
        assert_eq!(cfg.seed, 7);
        assert_eq!(parse_fp16_hex(&cfg.trace.unwrap().a[0]).unwrap(), 0x6400);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{ "workflow": "sweep", "seed": 1, "bogus": true }"#,
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        let err = ExperimentConfig::from_json(
            r#"{ "workflow": "trace-ipu", "ipu": { "lanes": 4, "w": 14, "sw_precision": 16, "x": 0 } }"#,
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn hash_ignores_out_and_threads() {
        let base = ExperimentConfig::from_json(
            r#"{ "workflow": "sweep", "seed": 3, "sweep": { "w_list": [12], "cluster_sizes": [1] } }"#,
        )
        .unwrap();
        let mut with_out = base.clone();
        with_out.out = Some(PathBuf::from("/tmp/x.csv"));
        with_out.threads = Some(2);
        assert_eq!(base.hash(), with_out.hash());
        let mut different = base.clone();
        different.seed = 4;
        assert_ne!(base.hash(), different.hash());
    }

    #[test]
    fn tile_preset_resolution() {
        let section: TileSection = serde_json::from_str(
            r#"{ "preset": "big", "w": 16, "sw_precision": 16, "cluster_size": 8 }"#,
        )
        .unwrap();
        let tile = section.resolve().unwrap();
        assert_eq!((tile.unroll_c, tile.unroll_k), (16, 16));
        assert_eq!(tile.cluster_size, 8);
        let bad: TileSection = serde_json::from_str(
            r#"{ "preset": "huge", "w": 16, "sw_precision": 16 }"#,
        )
        .unwrap();
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn distribution_tags() {
        let section: ErrorAnalysisSection = serde_json::from_str(
            r#"{
              "dists": [
                { "name": "laplace", "scale": 1.0 },
                { "name": "normal", "std_dev": 1.0 },
                { "name": "uniform", "lo": -1.0, "hi": 1.0 }
              ],
              "acc_formats": ["fp16", "fp32"],
              "w_values": [16],
              "samples": 10
            }"#,
        )
        .unwrap();
        assert_eq!(section.dists.len(), 3);
        assert_eq!(section.lanes, 16);
    }
}

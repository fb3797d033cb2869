//! Run configuration: a flat `key = value` file plus overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::backmap::DEFAULT_MIN_OVERLAP;
use crate::bgs::{BgsConfig, BgsMethod};
use crate::composer::{PolicySpec, DEFAULT_BORDER, DEFAULT_POOL_CAPACITY};
use crate::dataio::CurationConfig;
use crate::detector::OracleConfig;
use crate::eval::DEFAULT_IOU_THRESHOLD;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// How object regions are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extraction {
    /// Crops are the curated annotation boxes themselves.
    GroundTruth,
    Bgs(BgsMethod),
}

impl FromStr for Extraction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gt" | "ground_truth" => Ok(Self::GroundTruth),
            other => Ok(Self::Bgs(other.parse()?)),
        }
    }
}

impl fmt::Display for Extraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GroundTruth => f.write_str("gt"),
            Self::Bgs(m) => f.write_str(m.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorSpec {
    Oracle,
    /// `host:port` of a server speaking the line protocol.
    Remote(String),
}

impl FromStr for DetectorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "oracle" {
            return Ok(Self::Oracle);
        }
        match s.strip_prefix("tcp://") {
            Some(addr) if !addr.is_empty() => Ok(Self::Remote(addr.to_string())),
            _ => Err(format!("detector must be `oracle` or `tcp://host:port`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Stream directories, each holding `frames/` and `annotations.txt`.
    pub streams: Vec<PathBuf>,
    pub replicate: usize,
    pub extraction: Extraction,
    pub bgs: BgsConfig,
    pub min_area: u64,
    pub merge_iou: f64,
    pub policy: PolicySpec,
    pub border: u32,
    pub input_side: u32,
    pub detector: DetectorSpec,
    pub oracle: OracleConfig,
    pub skip: usize,
    pub warmup: u64,
    pub min_frames: u64,
    pub pool_capacity: usize,
    pub baseline: bool,
    pub curate: bool,
    pub curation: CurationConfig,
    pub iou_threshold: f64,
    pub min_overlap: f64,
    pub out_dir: Option<PathBuf>,
    pub dump_masks: bool,
    pub dump_crops: bool,
    pub dump_composites: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            streams: Vec::new(),
            replicate: 1,
            extraction: Extraction::Bgs(BgsMethod::Hybrid),
            bgs: BgsConfig::with_method(BgsMethod::Hybrid),
            min_area: 400,
            merge_iou: 0.0,
            policy: PolicySpec::Downscale(1.0),
            border: DEFAULT_BORDER,
            input_side: 320,
            detector: DetectorSpec::Oracle,
            oracle: OracleConfig::default(),
            skip: 10,
            warmup: 250,
            min_frames: 1000,
            pool_capacity: DEFAULT_POOL_CAPACITY,
            baseline: false,
            curate: true,
            curation: CurationConfig::default(),
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            min_overlap: DEFAULT_MIN_OVERLAP,
            out_dir: None,
            dump_masks: false,
            dump_crops: false,
            dump_composites: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            message: format!("expected a boolean, got `{value}`"),
        }),
    }
}

impl RunConfig {
    /// Apply one `key`/`value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "streams" => {
                self.streams = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "replicate" => self.replicate = parse(key, v)?,
            "extraction" => {
                self.extraction = parse(key, v)?;
                if let Extraction::Bgs(m) = self.extraction {
                    self.bgs.method = m;
                }
            }
            "blur_kernel" => self.bgs.blur_kernel = parse(key, v)?,
            "diff_threshold" => self.bgs.diff_threshold = parse(key, v)?,
            "hybrid_update_interval" => self.bgs.hybrid_update_interval = parse(key, v)?,
            "ptp_window" => self.bgs.ptp.window = parse(key, v)?,
            "ptp_sample_skip" => self.bgs.ptp.sample_skip = parse(key, v)?,
            "mog_components" => self.bgs.mog.components = parse(key, v)?,
            "mog_learning_rate" => self.bgs.mog.learning_rate = parse(key, v)?,
            "mog_background_ratio" => self.bgs.mog.background_ratio = parse(key, v)?,
            "mog_match_threshold" => self.bgs.mog.match_threshold = parse(key, v)?,
            "mog_initial_variance" => self.bgs.mog.initial_variance = parse(key, v)?,
            "min_area" => self.min_area = parse(key, v)?,
            "merge_iou" => self.merge_iou = parse(key, v)?,
            "policy" => self.policy = parse(key, v)?,
            "border" => self.border = parse(key, v)?,
            "input_side" => self.input_side = parse(key, v)?,
            "detector" => self.detector = parse(key, v)?,
            "oracle_jitter" => self.oracle.jitter_px = parse(key, v)?,
            "oracle_drop_rate" => self.oracle.drop_rate = parse(key, v)?,
            "oracle_spurious_rate" => self.oracle.spurious_rate = parse(key, v)?,
            "seed" => self.oracle.seed = parse(key, v)?,
            "skip" => self.skip = parse(key, v)?,
            "warmup" => self.warmup = parse(key, v)?,
            "min_frames" => self.min_frames = parse(key, v)?,
            "pool_capacity" => self.pool_capacity = parse(key, v)?,
            "baseline" => self.baseline = parse_bool(key, v)?,
            "curate" => self.curate = parse_bool(key, v)?,
            "curation_lookback" => self.curation.lookback = parse(key, v)?,
            "curation_static_fraction" => self.curation.static_fraction = parse(key, v)?,
            "iou_threshold" => self.iou_threshold = parse(key, v)?,
            "min_overlap" => self.min_overlap = parse(key, v)?,
            "out_dir" => self.out_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "dump_masks" => self.dump_masks = parse_bool(key, v)?,
            "dump_crops" => self.dump_crops = parse_bool(key, v)?,
            "dump_composites" => self.dump_composites = parse_bool(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Apply `key = value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: pair.to_string(),
        })?;
        self.set(k, v)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.streams.is_empty() {
            return bad("no streams configured".into());
        }
        if self.replicate == 0 {
            return bad("replicate must be at least 1".into());
        }
        if self.skip == 0 {
            return bad("skip must be at least 1".into());
        }
        if self.input_side == 0 {
            return bad("input_side must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.min_overlap) {
            return bad(format!("min_overlap must be in [0, 1], got {}", self.min_overlap));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return bad(format!("iou_threshold must be in [0, 1], got {}", self.iou_threshold));
        }
        self.bgs.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.oracle.validate().map_err(ConfigError::Invalid)?;
        if self.curate {
            self.curation
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}

//! End-to-end orchestration, synthetic data and benchmark harnesses.

mod bench;
mod config;
mod run;
mod synth;

use std::path::Path;

pub use bench::{
    bench_bgs, bench_compose, compose_points_csv, mean_by_count, random_crops, BgsBenchRow,
    ComposeBenchPoint, ComposeBenchSpec,
};
pub use config::{ConfigError, DetectorSpec, Extraction, RunConfig};
pub use run::{run, CompositionTiming, FrameTiming, RunOutput, RunStats, StageTimings};
pub use synth::{gen_synthetic, ImageFormat, Layout, Mover, SynthDataset, SynthSpec, SyntheticScene};

use crate::backmap::CsvError;
use crate::bgs::BgsError;
use crate::dataio::DataError;
use crate::detector::DetectorError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("stream {stream}, frame {frame}: {source}")]
    Bgs {
        stream: String,
        frame: u64,
        source: BgsError,
    },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mosaic_core::backmap::read_csv;
use mosaic_core::bgs::{BgsConfig, BgsMethod};
use mosaic_core::dataio::{
    curate_annotations, list_frames, load_sequence, parse_annotations, write_annotations, Annotation,
    CurationConfig, StreamId,
};
use mosaic_core::detector::protocol::WireDetection;
use mosaic_core::detector::test_server::{ServerMode, TestServer};
use mosaic_core::eval::{detection_metrics, EvalReport};
use mosaic_core::pipeline::{
    bench_bgs, bench_compose, compose_points_csv, gen_synthetic, mean_by_count, run, ComposeBenchSpec,
    ImageFormat, Layout, RunConfig, SynthSpec, SyntheticScene,
};

#[derive(Parser)]
#[command(name = "mosaic", version, about = "Consolidated object detection over many static cameras")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop annotations of objects that stay static.
    Curate(CurateArgs),
    /// Write a synthetic stream with exact annotations.
    GenSynth(GenSynthArgs),
    /// Run the full pipeline.
    Run(RunArgs),
    /// Time the three background subtraction methods on identical frames.
    /// Build with `--release` for representative numbers.
    BenchBgs(BenchBgsArgs),
    /// Time composition against the number of composed objects.
    BenchCompose(BenchComposeArgs),
    /// Score a detections CSV against annotations.
    Eval(EvalArgs),
    /// Serve the detector line protocol with canned answers.
    TestServer(TestServerArgs),
}

#[derive(Args)]
struct CurateArgs {
    /// Annotation file in the eight-column layout.
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 10)]
    lookback: i64,
    #[arg(long, default_value_t = 0.9)]
    static_fraction: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Lanes,
    Free,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Png,
    Ppm,
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
    #[arg(long, default_value_t = 6)]
    objects: usize,
    #[arg(long, default_value_t = 0)]
    static_objects: usize,
    /// Fraction of the frame covered by moving objects.
    #[arg(long)]
    area_fraction: Option<f64>,
    #[arg(long, default_value_t = 2)]
    noise: u8,
    #[arg(long, value_enum, default_value = "lanes")]
    layout: LayoutArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl SceneArgs {
    fn spec(&self, frames: u64, format: ImageFormat) -> SynthSpec {
        SynthSpec {
            width: self.width,
            height: self.height,
            frames,
            objects: self.objects,
            static_objects: self.static_objects,
            area_fraction: self.area_fraction,
            noise: self.noise,
            layout: match self.layout {
                LayoutArg::Lanes => Layout::Lanes,
                LayoutArg::Free => Layout::Free,
            },
            format,
            seed: self.seed,
            ..SynthSpec::default()
        }
    }
}

#[derive(Args)]
struct GenSynthArgs {
    /// Dataset root; the stream is written to `<out>/<stream-id>`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synth0")]
    stream_id: String,
    #[arg(long, default_value_t = 500)]
    frames: u64,
    #[arg(long, value_enum, default_value = "png")]
    format: FormatArg,
    #[command(flatten)]
    scene: SceneArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override, repeatable; applied after the file and flags.
    #[arg(long = "set")]
    overrides: Vec<String>,
    /// Comma-separated stream directories.
    #[arg(long)]
    streams: Option<String>,
    #[arg(long)]
    replicate: Option<usize>,
    /// `gt`, `ptp_mean`, `mog2` or `hybrid`.
    #[arg(long)]
    extraction: Option<String>,
    /// `downscale:<factor>` or `elastic:<frames>`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    border: Option<u32>,
    #[arg(long)]
    min_area: Option<u64>,
    /// `oracle` or `tcp://host:port`.
    #[arg(long)]
    detector: Option<String>,
    /// One detector call per full frame, no extraction or composition.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    dump_masks: bool,
    #[arg(long)]
    dump_crops: bool,
    #[arg(long)]
    dump_composites: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let flags: [(&str, Option<String>); 8] = [
            ("streams", self.streams.clone()),
            ("replicate", self.replicate.map(|v| v.to_string())),
            ("extraction", self.extraction.clone()),
            ("policy", self.policy.clone()),
            ("border", self.border.map(|v| v.to_string())),
            ("min_area", self.min_area.map(|v| v.to_string())),
            ("detector", self.detector.clone()),
            ("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        cfg.baseline |= self.baseline;
        cfg.dump_masks |= self.dump_masks;
        cfg.dump_crops |= self.dump_crops;
        cfg.dump_composites |= self.dump_composites;
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct BenchBgsArgs {
    /// Read frames from this directory instead of rendering a scene.
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 120)]
    frames: u64,
    /// Frame-index step between processed frames.
    #[arg(long, default_value_t = 10)]
    skip: u64,
    #[command(flatten)]
    scene: SceneArgs,
    /// Write the table as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchComposeArgs {
    /// Comma-separated object counts.
    #[arg(long, default_value = "1,2,4,8,16,32,64,100")]
    counts: String,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 20)]
    min_side: u32,
    #[arg(long, default_value_t = 120)]
    max_side: u32,
    #[arg(long, default_value_t = 2)]
    border: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Write the datapoints CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    /// Comma-separated stream directories holding `annotations.txt`.
    #[arg(long)]
    streams: String,
    #[arg(long, default_value_t = 1)]
    replicate: usize,
    #[arg(long, default_value_t = 10)]
    skip: usize,
    #[arg(long, default_value_t = 250)]
    warmup: u64,
    #[arg(long, default_value_t = 0.3)]
    iou_threshold: f64,
    /// Score against the annotations as they are, without curation.
    #[arg(long)]
    no_curate: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct TestServerArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
    /// `echo`, `fixed:<json array of detections>`, `raw:<line>`,
    /// `truncate:<text>` or `stall`.
    #[arg(long, default_value = "echo")]
    mode: String,
}

fn parse_mode(s: &str) -> Result<ServerMode> {
    Ok(match s.split_once(':') {
        None if s == "echo" => ServerMode::Echo,
        None if s == "stall" => ServerMode::Stall,
        Some(("fixed", json)) => {
            let d: Vec<WireDetection> = serde_json::from_str(json).context("fixed detections")?;
            ServerMode::Fixed(d)
        }
        Some(("raw", line)) => ServerMode::Raw(line.to_string()),
        Some(("truncate", text)) => ServerMode::Truncate(text.to_string()),
        _ => bail!("unknown server mode `{s}`"),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| parent.display().to_string())?;
    }
    fs::write(path, text).with_context(|| path.display().to_string())
}

fn cmd_curate(a: CurateArgs) -> Result<()> {
    let sid = StreamId::new(
        a.input
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
            .unwrap_or("stream"),
    );
    let parsed = parse_annotations(&a.input, sid)?;
    let cfg = CurationConfig {
        lookback: a.lookback,
        static_fraction: a.static_fraction,
    };
    let kept = curate_annotations(&parsed.annotations, &cfg)?;
    write_annotations(&a.output, &kept)?;
    let objects = |v: &[Annotation]| v.iter().map(|a| a.object_id).collect::<HashSet<_>>().len();
    println!(
        "kept {} of {} annotations ({} of {} objects); skipped {} unknown-class and {} bad-size lines",
        kept.len(),
        parsed.annotations.len(),
        objects(&kept),
        objects(&parsed.annotations),
        parsed.skipped_unknown_class,
        parsed.skipped_bad_size
    );
    Ok(())
}

fn cmd_gen_synth(a: GenSynthArgs) -> Result<()> {
    let format = match a.format {
        FormatArg::Png => ImageFormat::Png,
        FormatArg::Ppm => ImageFormat::Ppm,
    };
    let ds = gen_synthetic(&a.scene.spec(a.frames, format), &a.out, &a.stream_id)?;
    println!(
        "wrote {} frames and {} annotations to {} (moving area fraction {:.4})",
        ds.frames,
        ds.annotations,
        ds.stream_dir.display(),
        ds.moving_area_fraction
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = a.config()?;
    let out = run(&cfg)?;
    print!("{}", out.report.to_table());
    if let Some(dir) = &cfg.out_dir {
        println!("outputs written to {}", dir.display());
    }
    Ok(())
}

fn cmd_bench_bgs(a: BenchBgsArgs) -> Result<()> {
    let frames: Vec<(u64, mosaic_core::PixelBuffer)> = match &a.frames_dir {
        Some(dir) => load_sequence(dir, StreamId::new("bench"), a.skip as usize)?
            .take(a.frames as usize)
            .map(|r| r.map(|f| (f.frame_index, f.pixels)))
            .collect::<Result<_, _>>()?,
        None => {
            let scene = SyntheticScene::new(a.scene.spec(a.frames * a.skip, ImageFormat::Png));
            (0..a.frames).map(|i| (i * a.skip, scene.render(i * a.skip))).collect()
        }
    };
    if frames.len() < 2 {
        bail!("need at least two frames to benchmark");
    }
    let rows = bench_bgs(&frames, &BgsConfig::default(), &BgsMethod::ALL)?;
    println!("{:<10} {:>6} {:>10} {:>10} {:>10}", "method", "n", "mean_ms", "p50_ms", "p99_ms");
    for r in &rows {
        println!(
            "{:<10} {:>6} {:>10.3} {:>10.3} {:>10.3}",
            r.method.as_str(),
            r.latency.count,
            r.latency.mean_ms,
            r.latency.p50_ms,
            r.latency.p99_ms
        );
    }
    if let Some(p) = &a.out {
        write_text(p, &serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(())
}

fn cmd_bench_compose(a: BenchComposeArgs) -> Result<()> {
    let counts = a
        .counts
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .context("object counts")?;
    let spec = ComposeBenchSpec {
        object_counts: counts,
        min_side: a.min_side,
        max_side: a.max_side,
        repeats: a.repeats,
        border: a.border,
        seed: a.seed,
    };
    let points = bench_compose(&spec);
    println!("{:>8} {:>12}", "objects", "mean_ms");
    for (n, ms) in mean_by_count(&points) {
        println!("{n:>8} {ms:>12.4}");
    }
    if let Some(p) = &a.out {
        write_text(p, &compose_points_csv(&points))?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let preds = read_csv(&a.detections)?;
    let mut gts = Vec::new();
    for dir in a.streams.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let dir = PathBuf::from(dir);
        let name = dir.file_name().and_then(|n| n.to_str()).context("stream directory name")?;
        let sid = StreamId::new(name);
        let parsed = parse_annotations(&dir.join("annotations.txt"), sid.clone())?;
        let anns = if a.no_curate {
            parsed.annotations
        } else {
            curate_annotations(&parsed.annotations, &CurationConfig::default())?
        };
        // Processed frames: every `skip`-th file on disk from the warmup on.
        let frames_dir = dir.join("frames");
        let processed: HashSet<u64> = if frames_dir.is_dir() {
            list_frames(&frames_dir)?
                .into_iter()
                .step_by(a.skip.max(1))
                .map(|(i, _)| i)
                .collect()
        } else {
            anns.iter().map(|x| x.frame_index).filter(|i| i % a.skip as u64 == 0).collect()
        };
        let ids: Vec<StreamId> = if a.replicate > 1 {
            (0..a.replicate).map(|r| sid.replica(r)).collect()
        } else {
            vec![sid.clone()]
        };
        for id in ids {
            gts.extend(
                anns.iter()
                    .filter(|x| x.frame_index >= a.warmup && processed.contains(&x.frame_index))
                    .map(|x| Annotation {
                        stream_id: id.clone(),
                        ..x.clone()
                    }),
            );
        }
    }
    let (classes, _) = detection_metrics(&preds, &gts, a.iou_threshold);
    let report = EvalReport::new(a.iou_threshold, classes);
    print!("{}", report.to_table());
    if let Some(p) = &a.json {
        write_text(p, &report.to_json())?;
    }
    Ok(())
}

fn cmd_test_server(a: TestServerArgs) -> Result<()> {
    let server = TestServer::spawn(&a.addr, parse_mode(&a.mode)?)?;
    println!("listening on {}", server.addr());
    server.wait();
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Curate(a) => cmd_curate(a),
        Command::GenSynth(a) => cmd_gen_synth(a),
        Command::Run(a) => cmd_run(a),
        Command::BenchBgs(a) => cmd_bench_bgs(a),
        Command::BenchCompose(a) => cmd_bench_compose(a),
        Command::Eval(a) => cmd_eval(a),
        Command::TestServer(a) => cmd_test_server(a),
    }
}

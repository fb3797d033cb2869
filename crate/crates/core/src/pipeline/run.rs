use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use serde::Serialize;

use super::config::{DetectorSpec, Extraction, RunConfig};
use super::PipelineError;
use crate::backmap::{translate, write_csv, SceneDetection};
use crate::bgs::{BgsConfig, Subtractor};
use crate::composer::{resize_to_input, CompositeFrame, Composer};
use crate::dataio::{
    curate_annotations, load_sequence, parse_annotations, select_sequences, write_image, write_mask,
    Annotation, SequenceInfo, StreamId,
};
use crate::detector::{Detector, OracleDetector, RemoteDetector, DEFAULT_TIMEOUT};
use crate::eval::{
    detection_metrics, inference_accounting, pixel_precision_recall, EvalReport, InferenceRecord,
    LatencySummary, PixelCounts,
};
use crate::extract::{connected_components, crop_objects, filter_and_merge, ArrivalCounter};
use crate::geometry::BoundingBox;
use crate::raster::{BinaryMask, PixelBuffer};

const LANE_DEPTH: usize = 2;

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameTiming {
    pub stream_id: StreamId,
    pub frame_index: u64,
    pub decode_ms: f64,
    pub bgs_ms: f64,
    pub extract_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionTiming {
    pub composition_id: u64,
    pub objects: usize,
    pub canvas_side: u32,
    pub compose_ms: f64,
    pub resize_ms: f64,
    pub detect_ms: f64,
    pub backmap_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimings {
    pub frames: Vec<FrameTiming>,
    pub compositions: Vec<CompositionTiming>,
}

impl StageTimings {
    pub fn summaries(&self) -> BTreeMap<String, LatencySummary> {
        let mut out = BTreeMap::new();
        let mut add = |name: &str, v: Vec<f64>| {
            out.insert(name.to_string(), LatencySummary::from_samples(&v));
        };
        add("decode", self.frames.iter().map(|f| f.decode_ms).collect());
        add("bgs", self.frames.iter().map(|f| f.bgs_ms).collect());
        add("extract", self.frames.iter().map(|f| f.extract_ms).collect());
        add("compose", self.compositions.iter().map(|c| c.compose_ms).collect());
        add("resize", self.compositions.iter().map(|c| c.resize_ms).collect());
        add("detect", self.compositions.iter().map(|c| c.detect_ms).collect());
        add("backmap", self.compositions.iter().map(|c| c.backmap_ms).collect());
        out
    }

    /// Long-format CSV: one row per measured stage.
    pub fn to_csv(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            scope: &'a str,
            stream_id: Option<&'a str>,
            frame_index: Option<u64>,
            composition_id: Option<u64>,
            stage: &'a str,
            ms: f64,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for f in &self.frames {
            for (stage, ms) in [("decode", f.decode_ms), ("bgs", f.bgs_ms), ("extract", f.extract_ms)] {
                w.serialize(Row {
                    scope: "frame",
                    stream_id: Some(f.stream_id.as_str()),
                    frame_index: Some(f.frame_index),
                    composition_id: None,
                    stage,
                    ms,
                })
                .expect("write to memory");
            }
        }
        for c in &self.compositions {
            for (stage, ms) in [
                ("compose", c.compose_ms),
                ("resize", c.resize_ms),
                ("detect", c.detect_ms),
                ("backmap", c.backmap_ms),
            ] {
                w.serialize(Row {
                    scope: "composition",
                    stream_id: None,
                    frame_index: None,
                    composition_id: Some(c.composition_id),
                    stage,
                    ms,
                })
                .expect("write to memory");
            }
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }
}

/// Run-wide counters. Crop conservation:
/// `crops_in = crops_placed + crops_dropped` once the pool is drained.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub streams: usize,
    pub lanes: usize,
    pub frames_decoded: u64,
    pub frames_processed: u64,
    pub boxes_extracted: u64,
    pub boxes_skipped: u64,
    pub crops_in: u64,
    pub crops_placed: u64,
    pub crops_dropped: u64,
    pub compositions: u64,
    pub drain_compositions: u64,
    pub detector_calls: u64,
    pub detections_discarded: u64,
    pub detector_errors: BTreeMap<String, u64>,
    pub excluded_sequences: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub detections: Vec<SceneDetection>,
    pub report: EvalReport,
    pub timings: StageTimings,
    pub log: Vec<InferenceRecord>,
    pub stats: RunStats,
}

impl RunOutput {
    /// Write `detections.csv`, `report.json`, `report.txt` and `timings.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        write_csv(&dir.join("detections.csv"), &self.detections)?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| PipelineError::io(&p, e))
        };
        put("report.json", self.report.to_json())?;
        put("report.txt", self.report.to_table())?;
        put("timings.csv", self.timings.to_csv())?;
        Ok(())
    }
}

/// One stream loaded from disk with curated annotations.
struct StreamInput {
    id: StreamId,
    frames_dir: PathBuf,
    annotations: Arc<Vec<Annotation>>,
}

struct Lane {
    id: StreamId,
    input: Arc<StreamInput>,
    /// Curated boxes per frame, all classes.
    truth: Arc<HashMap<u64, Vec<BoundingBox>>>,
}

struct LaneFrame {
    frame_index: u64,
    evaluated: bool,
    pixels: Option<PixelBuffer>,
    boxes: Vec<BoundingBox>,
    mask: Option<BinaryMask>,
    decode_ms: f64,
    bgs_ms: f64,
    extract_ms: f64,
}

type LaneMsg = Result<LaneFrame, PipelineError>;

fn load_streams(cfg: &RunConfig, stats: &mut RunStats) -> Result<Vec<Arc<StreamInput>>, PipelineError> {
    let mut loaded = Vec::new();
    for dir in &cfg.streams {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| PipelineError::Input(format!("stream path {} has no name", dir.display())))?;
        let id = StreamId::new(name);
        let frames_dir = dir.join("frames");
        let ann_path = dir.join("annotations.txt");
        let annotations = if ann_path.exists() {
            let parsed = parse_annotations(&ann_path, id.clone())?;
            if parsed.skipped_unknown_class + parsed.skipped_bad_size > 0 {
                log::warn!(
                    "{}: skipped {} lines with unknown class and {} with bad size",
                    ann_path.display(),
                    parsed.skipped_unknown_class,
                    parsed.skipped_bad_size
                );
            }
            if cfg.curate {
                curate_annotations(&parsed.annotations, &cfg.curation)?
            } else {
                parsed.annotations
            }
        } else {
            log::warn!("{} has no annotations; evaluation will see no ground truth", dir.display());
            Vec::new()
        };
        let count = load_sequence(&frames_dir, id.clone(), 1)?.source_len() as u64;
        let info = SequenceInfo {
            stream_id: id.clone(),
            frame_count: count,
        };
        if select_sequences(&[info], cfg.min_frames, cfg.warmup).is_empty() {
            log::warn!("{id}: {count} frames is below min_frames {}; excluded", cfg.min_frames);
            stats.excluded_sequences.push(id.to_string());
            continue;
        }
        loaded.push(Arc::new(StreamInput {
            id,
            frames_dir,
            annotations: Arc::new(annotations),
        }));
    }
    if loaded.is_empty() {
        return Err(PipelineError::Input("no sequence passed selection".into()));
    }
    Ok(loaded)
}

fn build_lanes(streams: &[Arc<StreamInput>], replicate: usize) -> Vec<Lane> {
    let mut lanes = Vec::new();
    for s in streams {
        let mut truth: HashMap<u64, Vec<BoundingBox>> = HashMap::new();
        for a in s.annotations.iter() {
            truth.entry(a.frame_index).or_default().push(a.bbox);
        }
        let truth = Arc::new(truth);
        for r in 0..replicate {
            lanes.push(Lane {
                id: if replicate > 1 { s.id.replica(r) } else { s.id.clone() },
                input: Arc::clone(s),
                truth: Arc::clone(&truth),
            });
        }
    }
    lanes
}

/// Decode, subtract and box one lane's frames.
fn run_lane(lane: &Lane, cfg: &RunConfig, tx: SyncSender<LaneMsg>) {
    let reader = match load_sequence(&lane.input.frames_dir, lane.id.clone(), cfg.skip) {
        Ok(r) => r,
        Err(e) => {
            let _ = tx.send(Err(e.into()));
            return;
        }
    };
    let mut subtractor = match (cfg.baseline, cfg.extraction) {
        (false, Extraction::Bgs(method)) => match Subtractor::new(&BgsConfig {
            method,
            ..cfg.bgs.clone()
        }) {
            Ok(s) => Some(s),
            Err(e) => {
                let _ = tx.send(Err(PipelineError::Input(e.to_string())));
                return;
            }
        },
        _ => None,
    };
    let mut decode_start = Instant::now();
    for rec in reader {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let _ = tx.send(Err(e.into()));
                return;
            }
        };
        let decode_ms = ms_since(decode_start);
        let evaluated = rec.frame_index >= cfg.warmup;

        let t = Instant::now();
        let mask = match subtractor.as_mut() {
            Some(s) => match s.process(rec.frame_index, &rec.pixels, &cfg.bgs) {
                Ok(m) => m,
                Err(source) => {
                    let _ = tx.send(Err(PipelineError::Bgs {
                        stream: lane.id.to_string(),
                        frame: rec.frame_index,
                        source,
                    }));
                    return;
                }
            },
            None => None,
        };
        let bgs_ms = ms_since(t);

        let t = Instant::now();
        let boxes = if !evaluated || cfg.baseline {
            Vec::new()
        } else if subtractor.is_some() {
            mask.as_ref().map_or_else(Vec::new, |m| {
                filter_and_merge(&connected_components(m), cfg.min_area, cfg.merge_iou)
            })
        } else {
            lane.truth.get(&rec.frame_index).cloned().unwrap_or_default()
        };
        let extract_ms = ms_since(t);

        let msg = LaneFrame {
            frame_index: rec.frame_index,
            evaluated,
            pixels: evaluated.then_some(rec.pixels),
            boxes,
            mask: mask.filter(|_| cfg.dump_masks),
            decode_ms,
            bgs_ms,
            extract_ms,
        };
        if tx.send(Ok(msg)).is_err() {
            return;
        }
        decode_start = Instant::now();
    }
}

struct Job {
    composite: CompositeFrame,
    compose_ms: f64,
}

#[derive(Default)]
struct DetectorOutput {
    detections: Vec<SceneDetection>,
    timings: Vec<CompositionTiming>,
    log: Vec<InferenceRecord>,
    discarded: u64,
    errors: BTreeMap<String, u64>,
    dump_error: Option<PipelineError>,
}

fn run_detector(
    mut detector: Box<dyn Detector>,
    cfg: &RunConfig,
    dump_dir: Option<PathBuf>,
    rx: Receiver<Job>,
) -> DetectorOutput {
    let mut out = DetectorOutput::default();
    let side = detector.input_side();
    for Job { mut composite, compose_ms } in rx {
        let t = Instant::now();
        let input = resize_to_input(&mut composite, side);
        let resize_ms = ms_since(t);

        let t = Instant::now();
        let result = detector.detect(&input, Some(&composite));
        let detect_ms = ms_since(t);

        let t = Instant::now();
        match result {
            Ok(dets) => {
                let mapped = translate(&dets, &composite, composite.scale_factor, cfg.min_overlap);
                out.discarded += mapped.discarded as u64;
                out.detections.extend(mapped.detections);
            }
            Err(e) => {
                log::warn!("detector call for composition {} failed: {e}", composite.composition_id);
                *out.errors.entry(e.kind().to_string()).or_default() += 1;
            }
        }
        let backmap_ms = ms_since(t);

        if let Some(dir) = &dump_dir {
            if let Err(e) = dump_composite(dir, &composite) {
                out.dump_error.get_or_insert(e);
            }
        }
        out.log.push(InferenceRecord {
            composition_id: composite.composition_id,
            frames: composite.source_frames(),
            drain: composite.drain,
        });
        out.timings.push(CompositionTiming {
            composition_id: composite.composition_id,
            objects: composite.placements.len(),
            canvas_side: composite.canvas_side(),
            compose_ms,
            resize_ms,
            detect_ms,
            backmap_ms,
        });
    }
    out
}

fn dump_composite(dir: &Path, c: &CompositeFrame) -> Result<(), PipelineError> {
    let stem = format!("{:06}", c.composition_id);
    write_image(&dir.join(format!("{stem}.png")), &c.canvas)?;
    let json = serde_json::to_string_pretty(&c.placement_map()).expect("placement map serializes");
    let p = dir.join(format!("{stem}.json"));
    fs::write(&p, json).map_err(|e| PipelineError::io(&p, e))
}

fn make_detector(cfg: &RunConfig, lanes: &[Lane]) -> Result<Box<dyn Detector>, PipelineError> {
    Ok(match &cfg.detector {
        DetectorSpec::Oracle => {
            let mut o = OracleDetector::new(cfg.input_side, cfg.oracle);
            for lane in lanes {
                o.add_annotations_as(&lane.id, &lane.input.annotations);
            }
            Box::new(o)
        }
        DetectorSpec::Remote(addr) => Box::new(RemoteDetector::connect(addr, cfg.input_side, DEFAULT_TIMEOUT)?),
    })
}

fn dump_dir(cfg: &RunConfig, enabled: bool, name: &str) -> Result<Option<PathBuf>, PipelineError> {
    match (&cfg.out_dir, enabled) {
        (Some(root), true) => {
            let d = root.join(name);
            fs::create_dir_all(&d).map_err(|e| PipelineError::io(&d, e))?;
            Ok(Some(d))
        }
        _ => Ok(None),
    }
}

/// Run the whole flow: per-lane decode, background subtraction and box
/// extraction; one consumer that crops, composes and hands composites to
/// a serialized detector lane; post-hoc evaluation.
///
/// The consumer takes one frame from every lane per tick, in lane order,
/// so arrival numbers and compositions do not depend on thread timing.
/// After each tick it composes while a full composite is available, and at
/// end of input it drains the pool.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let mut stats = RunStats::default();
    let streams = load_streams(cfg, &mut stats)?;
    let lanes = build_lanes(&streams, cfg.replicate);
    stats.streams = streams.len();
    stats.lanes = lanes.len();
    let detector = make_detector(cfg, &lanes)?;

    let mask_dir = dump_dir(cfg, cfg.dump_masks, "masks")?;
    let crop_dir = dump_dir(cfg, cfg.dump_crops, "crops")?;
    let composite_dir = dump_dir(cfg, cfg.dump_composites, "composites")?;

    let policy = cfg.policy.resolve(cfg.input_side);
    let mut composer = Composer::new(policy, cfg.border, cfg.pool_capacity);
    let counter = ArrivalCounter::new();
    let mut frame_timings = Vec::new();
    let mut evaluated: HashSet<(StreamId, u64)> = HashSet::new();
    let mut pixels = PixelCounts::default();
    let bgs_mode = !cfg.baseline && matches!(cfg.extraction, Extraction::Bgs(_));

    let det_out = thread::scope(|scope| -> Result<DetectorOutput, PipelineError> {
        let mut receivers = Vec::with_capacity(lanes.len());
        for lane in &lanes {
            let (tx, rx) = sync_channel::<LaneMsg>(LANE_DEPTH);
            receivers.push(Some(rx));
            scope.spawn(move || run_lane(lane, cfg, tx));
        }
        let (job_tx, job_rx) = sync_channel::<Job>(1);
        let det_handle = scope.spawn(move || run_detector(detector, cfg, composite_dir, job_rx));

        let send = |composite: CompositeFrame, compose_ms: f64| {
            job_tx
                .send(Job { composite, compose_ms })
                .map_err(|_| PipelineError::Input("detector lane stopped".into()))
        };

        loop {
            let mut any = false;
            for (i, slot) in receivers.iter_mut().enumerate() {
                let Some(rx) = slot else { continue };
                let msg = match rx.recv() {
                    Ok(m) => m?,
                    Err(_) => {
                        *slot = None;
                        continue;
                    }
                };
                any = true;
                let lane = &lanes[i];
                stats.frames_decoded += 1;
                let mut timing = FrameTiming {
                    stream_id: lane.id.clone(),
                    frame_index: msg.frame_index,
                    decode_ms: msg.decode_ms,
                    bgs_ms: msg.bgs_ms,
                    extract_ms: msg.extract_ms,
                };
                if let (Some(dir), Some(mask)) = (&mask_dir, &msg.mask) {
                    let name = format!("{}_{:06}.png", lane.id.as_str().replace('#', "_"), msg.frame_index);
                    write_mask(&dir.join(name), mask)?;
                }
                if !msg.evaluated {
                    frame_timings.push(timing);
                    continue;
                }
                stats.frames_processed += 1;
                evaluated.insert((lane.id.clone(), msg.frame_index));
                let frame = msg.pixels.expect("evaluated frames carry pixels");

                if bgs_mode {
                    let gt = lane.truth.get(&msg.frame_index).map(Vec::as_slice).unwrap_or(&[]);
                    pixels.add(pixel_precision_recall(&msg.boxes, gt, frame.dims()));
                }
                if cfg.baseline {
                    let id = composer.take_id();
                    let seq = counter.next();
                    send(CompositeFrame::full_frame(id, lane.id.clone(), msg.frame_index, &frame, seq), 0.0)?;
                    frame_timings.push(timing);
                    continue;
                }

                let t = Instant::now();
                let batch = crop_objects(&frame, &lane.id, msg.frame_index, &msg.boxes, &counter);
                timing.extract_ms += ms_since(t);
                stats.boxes_extracted += msg.boxes.len() as u64;
                stats.boxes_skipped += batch.skipped as u64;
                for crop in batch.crops {
                    if let Some(dir) = &crop_dir {
                        let name = format!(
                            "{}_{:06}_{:08}.png",
                            lane.id.as_str().replace('#', "_"),
                            msg.frame_index,
                            crop.arrival_seq()
                        );
                        write_image(&dir.join(name), &crop.pixels)?;
                    }
                    composer.enqueue(crop);
                }
                frame_timings.push(timing);
            }
            if !any {
                break;
            }
            while composer.ready() {
                let t = Instant::now();
                let Some(c) = composer.compose() else { break };
                send(c, ms_since(t))?;
            }
        }
        let t = Instant::now();
        let drained = composer.drain();
        let per = ms_since(t) / drained.len().max(1) as f64;
        for c in drained {
            send(c, per)?;
        }
        drop(job_tx);
        Ok(det_handle.join().expect("detector lane panicked"))
    })?;

    if let Some(e) = det_out.dump_error {
        return Err(e);
    }

    let cstats = composer.stats();
    stats.crops_in = cstats.crops_in;
    stats.crops_placed = cstats.crops_placed;
    stats.crops_dropped = cstats.crops_dropped;
    stats.compositions = det_out.log.len() as u64;
    stats.drain_compositions = cstats.drain_compositions;
    stats.detector_calls = det_out.log.len() as u64;
    stats.detections_discarded = det_out.discarded;
    stats.detector_errors = det_out.errors.clone();

    let gts: Vec<Annotation> = lanes
        .iter()
        .flat_map(|lane| {
            lane.input
                .annotations
                .iter()
                .filter(|a| evaluated.contains(&(lane.id.clone(), a.frame_index)))
                .map(|a| Annotation {
                    stream_id: lane.id.clone(),
                    ..a.clone()
                })
        })
        .collect();
    let (classes, _) = detection_metrics(&det_out.detections, &gts, cfg.iou_threshold);
    let mut report = EvalReport::new(cfg.iou_threshold, classes);
    if bgs_mode {
        report = report.with_pixels(pixels);
    }
    report.accounting = Some(inference_accounting(stats.frames_processed, &det_out.log));
    let timings = StageTimings {
        frames: frame_timings,
        compositions: det_out.timings,
    };
    report.latency = timings.summaries();
    let counters = [
        ("frames_decoded", stats.frames_decoded),
        ("frames_processed", stats.frames_processed),
        ("crops_in", stats.crops_in),
        ("crops_placed", stats.crops_placed),
        ("crops_dropped", stats.crops_dropped),
        ("boxes_skipped", stats.boxes_skipped),
        ("drain_compositions", stats.drain_compositions),
        ("detections_discarded", stats.detections_discarded),
    ];
    for (k, v) in counters {
        report.counters.insert(k.to_string(), v);
    }
    for (k, v) in &stats.detector_errors {
        report.counters.insert(format!("detector_error_{k}"), *v);
    }
    for s in &stats.excluded_sequences {
        report.notes.push(format!("sequence {s} excluded by min_frames"));
    }

    let out = RunOutput {
        detections: det_out.detections,
        report,
        timings,
        log: det_out.log,
        stats,
    };
    if let Some(dir) = &cfg.out_dir {
        out.write(dir)?;
    }
    Ok(out)
}

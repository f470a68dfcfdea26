//! Command-line front end. Every subcommand parses its inputs, calls one
//! library operator and writes the result; nothing is computed here.
//!
//! Parameters come from flags or from an optional JSON config file
//! (`--config`), with flags taking precedence.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::anchors::{grid_anchors, AnchorSpec};
use crate::bench::{run_bench, BenchConfig};
use crate::geom::{classify_anchors, iou_matrix, LabelThresholds};
use crate::harness::{augment_rotate, eval_detections, synth_scene, EvalConfig, SceneSpec};
use crate::image::ImageBuffer;
use crate::patch::extract_patch;
use crate::proposals::{
    box_with_nms_limit, generate_proposals, rotated_nms, BoxDeltas, LimitConfig, NmsConfig,
    ProposalConfig, ScoredBox,
};
use crate::rbox::{read_jsonl, write_jsonl, BoxRecord, RotatedBox};
use crate::rroi::{rroi_align_batch, RoiAlignConfig, Tensor};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse { path: PathBuf, source: crate::Error },
    #[error("{path}: record {index} is missing `{field}`")]
    MissingField {
        path: PathBuf,
        index: usize,
        field: &'static str,
    },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("config file {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("operator failed: {0}")]
    Operator(#[from] crate::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "rotbox", version, about = "Rotated-box detection operators")]
pub struct RunConfig {
    /// JSON object of parameter overrides; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AnchorProfile {
    Text,
    FullCircle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pairwise rotated IoU matrix of two box files, as CSV.
    Iou {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rotated NMS; writes the kept records in descending score order.
    Nms {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iou_threshold: Option<f64>,
        #[arg(long)]
        angle_gate: Option<f64>,
    },
    /// Proposal generation from anchors carrying `score` and `dx..dt` columns.
    Propose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pre_nms_topk: Option<usize>,
        #[arg(long)]
        post_nms_topk: Option<usize>,
        #[arg(long)]
        nms_threshold: Option<f64>,
        #[arg(long)]
        min_size: Option<f64>,
        #[arg(long)]
        clamp_log: Option<f64>,
        #[arg(long)]
        angle_gate: Option<f64>,
    },
    /// Per-class score threshold, NMS and detection cap.
    Limit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        score_threshold: Option<f64>,
        #[arg(long)]
        nms_threshold: Option<f64>,
        #[arg(long)]
        max_detections: Option<usize>,
        #[arg(long)]
        angle_gate: Option<f64>,
    },
    /// Positive/negative/ignore labels for anchors against ground truth.
    Label {
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iou_hi: Option<f64>,
        #[arg(long)]
        iou_lo: Option<f64>,
        #[arg(long)]
        angle_max: Option<f64>,
    },
    /// Dump the anchor grid for a spec file or a built-in profile.
    Anchors {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        profile: AnchorProfile,
        #[arg(long)]
        feature_width: Option<usize>,
        #[arg(long)]
        feature_height: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rotated RoI Align; output stacks the RoIs along the channel axis.
    Roialign {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pooled_h: Option<usize>,
        #[arg(long)]
        pooled_w: Option<usize>,
        #[arg(long)]
        spatial_scale: Option<f64>,
        #[arg(long)]
        sampling_ratio: Option<usize>,
    },
    /// Upright patches for each box, written as patch_NNNN.pgm/ppm.
    ExtractPatch {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Synthetic scene from a SceneSpec JSON file (or the rotated profile).
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_image: PathBuf,
        #[arg(long)]
        out_boxes: PathBuf,
    },
    /// Rotate an image and its boxes about the image center.
    Augment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        angle: Option<f64>,
        #[arg(long)]
        out_image: PathBuf,
        #[arg(long)]
        out_boxes: PathBuf,
    },
    /// Match predictions to ground truth; writes a MatchResult JSON object.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iou_threshold: Option<f64>,
        #[arg(long)]
        angle_threshold: Option<f64>,
    },
    /// Kernel throughput report (rotated vs axis-aligned).
    Bench {
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parameter lookup: flag, then config file, then default.
struct Params {
    path: PathBuf,
    values: Map<String, Value>,
}

impl Params {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self {
                path: PathBuf::new(),
                values: Map::new(),
            });
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        let values = match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(m)) => m,
            Ok(_) => {
                return Err(CliError::Config {
                    path: path.to_path_buf(),
                    reason: "expected a JSON object".into(),
                })
            }
            Err(e) => {
                return Err(CliError::Config {
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                })
            }
        };
        Ok(Self {
            path: path.to_path_buf(),
            values,
        })
    }

    fn bad(&self, key: &str, want: &str) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            reason: format!("`{key}` must be {want}"),
        }
    }

    fn f64(&self, flag: Option<f64>, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.opt_f64(flag, key)?.unwrap_or(default))
    }

    fn opt_f64(&self, flag: Option<f64>, key: &str) -> CliResult<Option<f64>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| self.bad(key, "a number")),
        }
    }

    fn usize(&self, flag: Option<usize>, key: &str, default: usize) -> CliResult<usize> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(v) => v
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| self.bad(key, "a non-negative integer")),
        }
    }
}

/// Rounds to 6 significant digits for text output.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn rounded(rec: &BoxRecord) -> BoxRecord {
    let r = |v: Option<f64>| v.map(sig6);
    BoxRecord {
        cx: sig6(rec.cx),
        cy: sig6(rec.cy),
        w: sig6(rec.w),
        h: sig6(rec.h),
        theta: sig6(rec.theta),
        score: r(rec.score),
        class: rec.class,
        dx: r(rec.dx),
        dy: r(rec.dy),
        dw: r(rec.dw),
        dh: r(rec.dh),
        dt: r(rec.dt),
    }
}

fn scored_record(s: &ScoredBox) -> BoxRecord {
    BoxRecord {
        score: Some(s.score),
        class: Some(s.class_id),
        ..BoxRecord::from_box(&s.bbox)
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Open {
            path: path.to_path_buf(),
            source,
        })
}

fn load_records(path: &Path) -> CliResult<Vec<BoxRecord>> {
    read_jsonl(open(path)?).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn load_boxes(path: &Path) -> CliResult<Vec<RotatedBox>> {
    load_records(path)?
        .iter()
        .map(|r| r.to_box().map_err(CliError::from))
        .collect()
}

fn load_scored(path: &Path, default_score: Option<f64>) -> CliResult<Vec<ScoredBox>> {
    load_records(path)?
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let score = r
                .score
                .or(default_score)
                .ok_or_else(|| CliError::MissingField {
                    path: path.to_path_buf(),
                    index,
                    field: "score",
                })?;
            Ok(ScoredBox::new(r.to_box()?, score, r.class.unwrap_or(0))?)
        })
        .collect()
}

fn load_image(path: &Path) -> CliResult<ImageBuffer> {
    ImageBuffer::read_pnm(open(path)?).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        source: crate::Error::Format {
            format: "json",
            reason: e.to_string(),
        },
    })
}

/// Writes through a temporary file in the destination directory, then renames.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> crate::Result<()>) -> CliResult<()> {
    let wrap = |source: std::io::Error| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(wrap)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        f(&mut w).map_err(|e| match e {
            crate::Error::Io(source) => wrap(source),
            other => CliError::Operator(other),
        })?;
        w.flush().map_err(wrap)?;
    }
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

/// Sends text output to `out` when given, otherwise to `stdout`.
fn emit(
    out: Option<&Path>,
    stdout: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> crate::Result<()>,
) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, f),
        None => f(stdout).map_err(CliError::from),
    }
}

fn emit_records(
    out: Option<&Path>,
    stdout: &mut dyn Write,
    records: &[BoxRecord],
) -> CliResult<()> {
    let records: Vec<BoxRecord> = records.iter().map(rounded).collect();
    emit(out, stdout, |w| write_jsonl(w, &records))
}

fn emit_json<T: Serialize>(out: Option<&Path>, stdout: &mut dyn Write, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| crate::Error::Format {
        format: "json",
        reason: e.to_string(),
    })?;
    emit(out, stdout, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn check_unit(name: &str, v: f64) -> CliResult<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::Param(format!("{name} = {v} is outside [0, 1]")))
    }
}

fn check_gate(v: Option<f64>) -> CliResult<Option<f64>> {
    match v {
        Some(g) if g.is_nan() || g < 0.0 => {
            Err(CliError::Param(format!("angle_gate = {g} must be >= 0")))
        }
        other => Ok(other),
    }
}

#[derive(Serialize)]
struct LabelRecord {
    index: usize,
    label: crate::geom::AnchorLabel,
}

/// Executes one parsed command line. Text outputs without `--out` go to `stdout`.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> CliResult<()> {
    let params = Params::load(cfg.config.as_deref())?;
    match &cfg.command {
        Command::Iou { a, b, out } => {
            let (a, b) = (load_boxes(a)?, load_boxes(b)?);
            let m = iou_matrix(&a, &b);
            emit(out.as_deref(), stdout, |w| {
                for row in &m {
                    let line: Vec<String> = row.iter().map(|v| sig6(*v).to_string()).collect();
                    writeln!(w, "{}", line.join(","))?;
                }
                Ok(())
            })
        }
        Command::Nms {
            input,
            out,
            iou_threshold,
            angle_gate,
        } => {
            let boxes = load_scored(input, None)?;
            let nms = NmsConfig {
                iou_threshold: check_unit(
                    "iou_threshold",
                    params.f64(*iou_threshold, "iou_threshold", 0.5)?,
                )?,
                angle_gate: check_gate(params.opt_f64(*angle_gate, "angle_gate")?)?,
            };
            let keep = rotated_nms(&boxes, &nms)?;
            let recs: Vec<BoxRecord> = keep.iter().map(|&i| scored_record(&boxes[i])).collect();
            emit_records(out.as_deref(), stdout, &recs)
        }
        Command::Propose {
            input,
            out,
            pre_nms_topk,
            post_nms_topk,
            nms_threshold,
            min_size,
            clamp_log,
            angle_gate,
        } => {
            let d = ProposalConfig::default();
            let pc = ProposalConfig {
                pre_nms_topk: params.usize(*pre_nms_topk, "pre_nms_topk", d.pre_nms_topk)?,
                post_nms_topk: params.usize(*post_nms_topk, "post_nms_topk", d.post_nms_topk)?,
                nms_threshold: check_unit(
                    "nms_threshold",
                    params.f64(*nms_threshold, "nms_threshold", d.nms_threshold)?,
                )?,
                min_size: params.f64(*min_size, "min_size", d.min_size)?,
                clamp_log: params.f64(*clamp_log, "clamp_log", d.clamp_log)?,
                angle_gate: check_gate(params.opt_f64(*angle_gate, "angle_gate")?)?,
            };
            let recs = load_records(input)?;
            let mut anchors = Vec::with_capacity(recs.len());
            let mut scores = Vec::with_capacity(recs.len());
            let mut deltas = Vec::with_capacity(recs.len());
            for (index, r) in recs.iter().enumerate() {
                anchors.push(r.to_box()?);
                scores.push(r.score.ok_or_else(|| CliError::MissingField {
                    path: input.clone(),
                    index,
                    field: "score",
                })?);
                let z = |v: Option<f64>| v.unwrap_or(0.0);
                deltas.push(BoxDeltas::new(z(r.dx), z(r.dy), z(r.dw), z(r.dh), z(r.dt))?);
            }
            let props = generate_proposals(&scores, &deltas, &anchors, &pc)?;
            let out_recs: Vec<BoxRecord> = props.iter().map(scored_record).collect();
            emit_records(out.as_deref(), stdout, &out_recs)
        }
        Command::Limit {
            input,
            out,
            score_threshold,
            nms_threshold,
            max_detections,
            angle_gate,
        } => {
            let d = LimitConfig::default();
            let lc = LimitConfig {
                score_threshold: params.f64(
                    *score_threshold,
                    "score_threshold",
                    d.score_threshold,
                )?,
                nms_threshold: check_unit(
                    "nms_threshold",
                    params.f64(*nms_threshold, "nms_threshold", d.nms_threshold)?,
                )?,
                max_detections: params.usize(
                    *max_detections,
                    "max_detections",
                    d.max_detections,
                )?,
                angle_gate: check_gate(params.opt_f64(*angle_gate, "angle_gate")?)?,
            };
            let dets = load_scored(input, None)?;
            let kept = box_with_nms_limit(&dets, &lc)?;
            let recs: Vec<BoxRecord> = kept.iter().map(scored_record).collect();
            emit_records(out.as_deref(), stdout, &recs)
        }
        Command::Label {
            anchors,
            ground_truth,
            out,
            iou_hi,
            iou_lo,
            angle_max,
        } => {
            let d = LabelThresholds::default();
            let t = LabelThresholds {
                iou_hi: params.f64(*iou_hi, "iou_hi", d.iou_hi)?,
                iou_lo: params.f64(*iou_lo, "iou_lo", d.iou_lo)?,
                angle_max: params.f64(*angle_max, "angle_max", d.angle_max)?,
            };
            let labels = classify_anchors(&load_boxes(anchors)?, &load_boxes(ground_truth)?, &t)?;
            emit(out.as_deref(), stdout, |w| {
                for (index, &label) in labels.iter().enumerate() {
                    let line =
                        serde_json::to_string(&LabelRecord { index, label }).expect("plain record");
                    writeln!(w, "{line}")?;
                }
                Ok(())
            })
        }
        Command::Anchors {
            spec,
            profile,
            feature_width,
            feature_height,
            out,
        } => {
            let spec = match spec {
                Some(p) => load_json::<AnchorSpec>(p)?,
                None => match profile {
                    AnchorProfile::Text => AnchorSpec::text_profile(),
                    AnchorProfile::FullCircle => AnchorSpec::full_circle_profile(),
                },
            };
            let fw = params.usize(*feature_width, "feature_width", 1)?;
            let fh = params.usize(*feature_height, "feature_height", 1)?;
            let grid = grid_anchors(&spec, fw, fh)?;
            let recs: Vec<BoxRecord> = grid.iter().map(BoxRecord::from_box).collect();
            emit_records(out.as_deref(), stdout, &recs)
        }
        Command::Roialign {
            tensor,
            boxes,
            out,
            pooled_h,
            pooled_w,
            spatial_scale,
            sampling_ratio,
        } => {
            let d = RoiAlignConfig::default();
            let rc = RoiAlignConfig {
                pooled_h: params.usize(*pooled_h, "pooled_h", d.pooled_h)?,
                pooled_w: params.usize(*pooled_w, "pooled_w", d.pooled_w)?,
                spatial_scale: params.f64(*spatial_scale, "spatial_scale", d.spatial_scale)?,
                sampling_ratio: params.usize(
                    *sampling_ratio,
                    "sampling_ratio",
                    d.sampling_ratio,
                )?,
            };
            rc.validate()?;
            let map = Tensor::read_rten(open(tensor)?).map_err(|source| CliError::Parse {
                path: tensor.clone(),
                source,
            })?;
            let pooled = rroi_align_batch(&map, &load_boxes(boxes)?, &rc)?;
            let stacked = if pooled.is_empty() {
                Tensor::zeros(0, rc.pooled_h, rc.pooled_w)
            } else {
                Tensor::concat_channels(&pooled)?
            };
            write_atomic(out, |w| stacked.write_rten(w))
        }
        Command::ExtractPatch {
            image,
            boxes,
            out_dir,
        } => {
            let img = load_image(image)?;
            let boxes = load_boxes(boxes)?;
            std::fs::create_dir_all(out_dir).map_err(|source| CliError::Write {
                path: out_dir.clone(),
                source,
            })?;
            let ext = if img.channels() == 1 { "pgm" } else { "ppm" };
            for (i, b) in boxes.iter().enumerate() {
                let patch = extract_patch(&img, b)?;
                write_atomic(&out_dir.join(format!("patch_{i:04}.{ext}")), |w| {
                    patch.write_pnm(w)
                })?;
            }
            Ok(())
        }
        Command::Synth {
            spec,
            seed,
            out_image,
            out_boxes,
        } => {
            let mut scene = match spec {
                Some(p) => load_json::<SceneSpec>(p)?,
                None => SceneSpec::rotated(0),
            };
            if let Some(s) = seed {
                scene.seed = *s;
            }
            let (img, gts) = synth_scene(&scene)?;
            write_atomic(out_image, |w| img.write_pnm(w))?;
            let recs: Vec<BoxRecord> = gts.iter().map(BoxRecord::from_box).collect();
            write_atomic(out_boxes, |w| write_jsonl(w, &recs))
        }
        Command::Augment {
            image,
            boxes,
            angle,
            out_image,
            out_boxes,
        } => {
            let angle = params
                .opt_f64(*angle, "angle")?
                .ok_or_else(|| CliError::Param("`angle` is required".into()))?;
            let img = load_image(image)?;
            let recs = load_records(boxes)?;
            let bs: Vec<RotatedBox> = recs
                .iter()
                .map(|r| r.to_box())
                .collect::<crate::Result<_>>()?;
            let (out_img, out_bs) = augment_rotate(&img, &bs, angle)?;
            write_atomic(out_image, |w| out_img.write_pnm(w))?;
            let out_recs: Vec<BoxRecord> = recs
                .iter()
                .zip(&out_bs)
                .map(|(r, b)| BoxRecord {
                    score: r.score,
                    class: r.class,
                    ..BoxRecord::from_box(b)
                })
                .collect();
            write_atomic(out_boxes, |w| write_jsonl(w, &out_recs))
        }
        Command::Eval {
            predictions,
            ground_truth,
            out,
            iou_threshold,
            angle_threshold,
        } => {
            let d = EvalConfig::default();
            let ec = EvalConfig {
                iou_threshold: check_unit(
                    "iou_threshold",
                    params.f64(*iou_threshold, "iou_threshold", d.iou_threshold)?,
                )?,
                angle_threshold: params.f64(
                    *angle_threshold,
                    "angle_threshold",
                    d.angle_threshold,
                )?,
            };
            let preds = load_scored(predictions, Some(1.0))?;
            let gts = load_boxes(ground_truth)?;
            let mut r = eval_detections(&preds, &gts, &ec)?;
            r.precision = sig6(r.precision);
            r.recall = sig6(r.recall);
            r.f1 = sig6(r.f1);
            emit_json(out.as_deref(), stdout, &r)
        }
        Command::Bench { reps, out } => {
            let bc = BenchConfig {
                reps: params.usize(*reps, "reps", 1)?,
                ..BenchConfig::default()
            };
            if bc.reps == 0 {
                return Err(CliError::Param("reps must be at least 1".into()));
            }
            let mut report = run_bench(&bc)?;
            for t in &mut report.timings {
                t.seconds = sig6(t.seconds);
                t.per_second = sig6(t.per_second);
            }
            emit_json(out.as_deref(), stdout, &report)
        }
    }
}

/// Caps rayon's worker count from `ROTBOX_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("ROTBOX_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        CliError::Param(format!("ROTBOX_THREADS={raw:?} is not a positive integer"))
    })?;
    if n == 0 {
        return Err(CliError::Param("ROTBOX_THREADS must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Param(format!("ROTBOX_THREADS: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_rounding() {
        assert_eq!(sig6(1.0 / 3.0), 0.333333);
        assert_eq!(sig6(123456789.0), 123457000.0);
        assert_eq!(sig6(0.0), 0.0);
        assert_eq!(sig6(-7.0f64.sqrt()), -2.64575);
        assert_eq!(sig6(1.0).to_string(), "1");
    }

    #[test]
    fn params_precedence() {
        let mut values = Map::new();
        values.insert("iou_threshold".into(), Value::from(0.25));
        values.insert("reps".into(), Value::from("three"));
        let p = Params {
            path: PathBuf::from("cfg.json"),
            values,
        };
        assert_eq!(p.f64(None, "iou_threshold", 0.5).unwrap(), 0.25);
        assert_eq!(p.f64(Some(0.75), "iou_threshold", 0.5).unwrap(), 0.75);
        assert_eq!(p.f64(None, "other", 0.5).unwrap(), 0.5);
        assert!(p.usize(None, "reps", 1).is_err());
    }
}

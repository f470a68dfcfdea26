//! Throughput report for the hot kernels, each next to its axis-aligned
//! counterpart. Timings are single-threaded and report-only.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::geom::rotated_iou;
use crate::harness::SplitMix64;
use crate::proposals::{rotated_nms, NmsConfig, ScoredBox};
use crate::rbox::{AxisAlignedRect, RotatedBox};
use crate::rroi::{rroi_align, RoiAlignConfig, Tensor};

#[derive(Debug, Clone, Serialize)]
pub struct KernelTiming {
    pub kernel: String,
    pub items: usize,
    pub seconds: f64,
    pub per_second: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub timings: Vec<KernelTiming>,
}

impl BenchReport {
    pub fn get(&self, kernel: &str) -> Option<&KernelTiming> {
        self.timings.iter().find(|t| t.kernel == kernel)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub iou_pairs: usize,
    pub nms_boxes: usize,
    pub rois: usize,
    pub roi_channels: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            iou_pairs: 200_000,
            nms_boxes: 2_000,
            rois: 2_000,
            roi_channels: 256,
            reps: 1,
            seed: 0x5eed,
        }
    }
}

fn random_box(rng: &mut SplitMix64, span: f64) -> Result<RotatedBox> {
    RotatedBox::new(
        rng.uniform(0.0, span),
        rng.uniform(0.0, span),
        rng.uniform(8.0, 120.0),
        rng.uniform(4.0, 40.0),
        rng.uniform(-180.0, 180.0),
    )
}

fn time<T>(kernel: &str, items: usize, reps: usize, mut f: impl FnMut() -> T) -> KernelTiming {
    let reps = reps.max(1);
    let start = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(f());
    }
    let seconds = start.elapsed().as_secs_f64();
    let total = items * reps;
    KernelTiming {
        kernel: kernel.to_string(),
        items: total,
        seconds,
        per_second: total as f64 / seconds.max(1e-12),
    }
}

fn axis_aligned_nms(rects: &[AxisAlignedRect], scores: &[f64], thr: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rects.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut dead = vec![false; rects.len()];
    let mut keep = Vec::new();
    for (p, &i) in order.iter().enumerate() {
        if dead[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[p + 1..] {
            if !dead[j] && rects[i].iou(&rects[j]) > thr {
                dead[j] = true;
            }
        }
    }
    keep
}

/// Runs every kernel on seeded synthetic inputs.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let mut rng = SplitMix64::new(cfg.seed);
    let mut timings = Vec::new();

    let pairs: Vec<(RotatedBox, RotatedBox)> = (0..cfg.iou_pairs)
        .map(|_| Ok((random_box(&mut rng, 200.0)?, random_box(&mut rng, 200.0)?)))
        .collect::<Result<_>>()?;
    let rect_pairs: Vec<_> = pairs
        .iter()
        .map(|(a, b)| (a.horizontal_bounding_rect(), b.horizontal_bounding_rect()))
        .collect();
    timings.push(time("rotated_iou", pairs.len(), cfg.reps, || {
        pairs.iter().map(|(a, b)| rotated_iou(a, b)).sum::<f64>()
    }));
    timings.push(time("axis_aligned_iou", rect_pairs.len(), cfg.reps, || {
        rect_pairs.iter().map(|(a, b)| a.iou(b)).sum::<f64>()
    }));

    let dets: Vec<ScoredBox> = (0..cfg.nms_boxes)
        .map(|_| ScoredBox::new(random_box(&mut rng, 1000.0)?, rng.next_f64(), 0))
        .collect::<Result<_>>()?;
    let rects: Vec<_> = dets
        .iter()
        .map(|d| d.bbox.horizontal_bounding_rect())
        .collect();
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let nms = NmsConfig::new(0.5);
    timings.push(time("rotated_nms", dets.len(), cfg.reps, || {
        rotated_nms(&dets, &nms)
    }));
    timings.push(time("axis_aligned_nms", dets.len(), cfg.reps, || {
        axis_aligned_nms(&rects, &scores, 0.5)
    }));

    let map = Tensor::from_fn(cfg.roi_channels, 64, 64, |c, y, x| {
        ((c * 7 + y * 3 + x) % 17) as f32
    })?;
    let align = RoiAlignConfig::default();
    let rois: Vec<RotatedBox> = (0..cfg.rois)
        .map(|_| random_box(&mut rng, 1024.0))
        .collect::<Result<_>>()?;
    let upright: Vec<RotatedBox> = rois
        .iter()
        .map(|r| RotatedBox::new(r.cx(), r.cy(), r.w(), r.h(), 0.0))
        .collect::<Result<_>>()?;
    timings.push(time("rroi_align", rois.len(), cfg.reps, || {
        rois.iter()
            .map(|r| rroi_align(&map, r, &align).map(|t| t.data()[0]))
            .collect::<Result<Vec<_>>>()
    }));
    timings.push(time("roi_align_upright", upright.len(), cfg.reps, || {
        upright
            .iter()
            .map(|r| rroi_align(&map, r, &align).map(|t| t.data()[0]))
            .collect::<Result<Vec<_>>>()
    }));

    Ok(BenchReport { timings })
}

//! Synthetic scenes, rotation augmentation and rotated-detection evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{angle_distance, rotated_iou, Point};
use crate::image::ImageBuffer;
use crate::proposals::ScoredBox;
use crate::rbox::{sin_cos_deg, RotatedBox};

/// Rejection-sampling budget per box.
pub const MAX_ATTEMPTS: usize = 1000;
/// Upper bound on pairwise IoU between boxes of one scene.
pub const MAX_SCENE_IOU: f64 = 0.1;

/// SplitMix64. Chosen because its recurrence is a few lines and therefore
/// trivially reproducible outside Rust:
///
/// ```text
/// state += 0x9E3779B97F4A7C15
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// return z ^ (z >> 31)
/// ```
///
/// Floats take the top 53 bits: `(next >> 11) * 2^-53`, in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `lo + (hi - lo)·u`; returns `lo` exactly when the range is a point.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.next_f64();
        if lo == hi {
            lo
        } else {
            lo + (hi - lo) * u
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub image_width: usize,
    pub image_height: usize,
    pub n_boxes: usize,
    pub extent_range: (f64, f64),
    pub angle_range: (f64, f64),
    pub fill_value: u8,
    pub background_value: u8,
    pub seed: u64,
}

impl SceneSpec {
    /// Rotated profile: orientations uniform in [-90, 90].
    pub fn rotated(seed: u64) -> Self {
        Self {
            image_width: 256,
            image_height: 256,
            n_boxes: 6,
            extent_range: (12.0, 60.0),
            angle_range: (-90.0, 90.0),
            fill_value: 255,
            background_value: 0,
            seed,
        }
    }

    /// Same scene statistics with every box axis-aligned.
    pub fn non_rotated(seed: u64) -> Self {
        Self {
            angle_range: (0.0, 0.0),
            ..Self::rotated(seed)
        }
    }

    /// A training mixture of `rotated_per_plain` rotated scenes per
    /// non-rotated one (3 → 3:1), `count` specs long, seeds `base_seed..`.
    pub fn mixture(rotated_per_plain: usize, count: usize, base_seed: u64) -> Vec<Self> {
        (0..count)
            .map(|i| {
                let seed = base_seed.wrapping_add(i as u64);
                if i % (rotated_per_plain + 1) == rotated_per_plain {
                    Self::non_rotated(seed)
                } else {
                    Self::rotated(seed)
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(invalid("image size", "must be at least 1x1"));
        }
        let (lo, hi) = self.extent_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(invalid(
                "extent_range",
                format!("({lo}, {hi}) must satisfy 0 < min <= max"),
            ));
        }
        let (lo, hi) = self.angle_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid(
                "angle_range",
                format!("({lo}, {hi}) must satisfy min <= max"),
            ));
        }
        if self.fill_value == self.background_value {
            return Err(invalid("fill_value", "must differ from background_value"));
        }
        Ok(())
    }
}

/// Fills every pixel whose center lies inside `b`.
pub fn render_box(img: &mut ImageBuffer, b: &RotatedBox, value: u8) {
    let r = b.horizontal_bounding_rect();
    let x0 = (r.x1 - 0.5).floor().max(0.0) as usize;
    let y0 = (r.y1 - 0.5).floor().max(0.0) as usize;
    let x1 = ((r.x2 + 0.5).ceil().max(0.0) as usize).min(img.width());
    let y1 = ((r.y2 + 0.5).ceil().max(0.0) as usize).min(img.height());
    let ch = img.channels();
    let w = img.width();
    let data = img.data_mut();
    for y in y0..y1 {
        for x in x0..x1 {
            if b.contains(Point::new(x as f64 + 0.5, y as f64 + 0.5)) {
                let i = (y * w + x) * ch;
                data[i..i + ch].fill(value);
            }
        }
    }
}

/// Renders a seeded grayscale scene of non-overlapping filled rotated boxes.
///
/// Per attempt the generator draws, in order, `w`, `h`, `theta`, then the
/// center as fractions of the range that keeps the box's bounding rectangle
/// inside the image. Attempts that do not fit, or overlap an accepted box
/// with IoU ≥ 0.1, are rejected.
pub fn synth_scene(spec: &SceneSpec) -> Result<(ImageBuffer, Vec<RotatedBox>)> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let (iw, ih) = (spec.image_width as f64, spec.image_height as f64);
    let mut boxes: Vec<RotatedBox> = Vec::with_capacity(spec.n_boxes);

    for index in 0..spec.n_boxes {
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let w = rng.uniform(spec.extent_range.0, spec.extent_range.1);
            let h = rng.uniform(spec.extent_range.0, spec.extent_range.1);
            let theta = rng.uniform(spec.angle_range.0, spec.angle_range.1);
            let fx = rng.next_f64();
            let fy = rng.next_f64();
            let (s, c) = sin_cos_deg(theta);
            let ex = (w * c.abs() + h * s.abs()) / 2.0;
            let ey = (w * s.abs() + h * c.abs()) / 2.0;
            if 2.0 * ex > iw || 2.0 * ey > ih {
                continue;
            }
            let cand = RotatedBox::new(
                ex + fx * (iw - 2.0 * ex),
                ey + fy * (ih - 2.0 * ey),
                w,
                h,
                theta,
            )?;
            if boxes.iter().all(|b| rotated_iou(b, &cand) < MAX_SCENE_IOU) {
                placed = Some(cand);
                break;
            }
        }
        match placed {
            Some(b) => boxes.push(b),
            None => {
                return Err(Error::Unsatisfiable {
                    index,
                    attempts: MAX_ATTEMPTS,
                })
            }
        }
    }

    let mut img = ImageBuffer::filled(
        spec.image_width,
        spec.image_height,
        1,
        spec.background_value,
    )?;
    for b in &boxes {
        render_box(&mut img, b, spec.fill_value);
    }
    Ok((img, boxes))
}

/// Canvas size holding a `width × height` image rotated by `angle`.
fn rotated_canvas(width: usize, height: usize, angle: f64) -> (usize, usize) {
    let (s, c) = sin_cos_deg(angle);
    let (w, h) = (width as f64, height as f64);
    let nw = (w * c.abs() + h * s.abs() - 1e-9).ceil().max(1.0);
    let nh = (w * s.abs() + h * c.abs() - 1e-9).ceil().max(1.0);
    (nw as usize, nh as usize)
}

/// Maps boxes through the augmentation transform: rotate about the old image
/// center, then re-center on the new canvas.
pub fn rotate_boxes(
    boxes: &[RotatedBox],
    image_size: (usize, usize),
    angle: f64,
) -> Vec<RotatedBox> {
    let (nw, nh) = rotated_canvas(image_size.0, image_size.1, angle);
    let old = Point::new(image_size.0 as f64 / 2.0, image_size.1 as f64 / 2.0);
    let (dx, dy) = (nw as f64 / 2.0 - old.x, nh as f64 / 2.0 - old.y);
    boxes
        .iter()
        .map(|b| b.rotated_about(old, angle).translated(dx, dy))
        .collect()
}

/// Rotates an image and its boxes by `angle` degrees about the image center.
/// The canvas grows to the rotated image's bounding rectangle; uncovered
/// pixels are zero.
pub fn augment_rotate(
    img: &ImageBuffer,
    boxes: &[RotatedBox],
    angle: f64,
) -> Result<(ImageBuffer, Vec<RotatedBox>)> {
    if !angle.is_finite() {
        return Err(Error::NonFinite {
            field: "angle",
            value: angle,
        });
    }
    let (nw, nh) = rotated_canvas(img.width(), img.height(), angle);
    let (s, c) = sin_cos_deg(angle);
    let (ocx, ocy) = (img.width() as f64 / 2.0, img.height() as f64 / 2.0);
    let (ncx, ncy) = (nw as f64 / 2.0, nh as f64 / 2.0);
    let ch = img.channels();
    let mut out = ImageBuffer::filled(nw, nh, ch, 0)?;
    let mut px = vec![0u8; ch];
    for v in 0..nh {
        let py = v as f64 + 0.5 - ncy;
        for u in 0..nw {
            let pxx = u as f64 + 0.5 - ncx;
            // Inverse rotation back into the source frame.
            let x = ocx + pxx * c + py * s;
            let y = ocy - pxx * s + py * c;
            img.bilinear_into(x, y, (0, 0), &mut px);
            for (k, &val) in px.iter().enumerate() {
                out.set(u, v, k, val);
            }
        }
    }
    Ok((out, rotate_boxes(boxes, (img.width(), img.height()), angle)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Maximum orientation gap in degrees for a match.
    pub angle_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            angle_threshold: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchResult {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                1.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Greedy score-ordered matching. Each prediction takes the unmatched ground
/// truth with the highest IoU among those passing both the IoU and the
/// orientation gate; score ties go to the lower prediction index.
pub fn eval_detections(
    predictions: &[ScoredBox],
    ground_truths: &[RotatedBox],
    cfg: &EvalConfig,
) -> Result<MatchResult> {
    if !(0.0..=1.0).contains(&cfg.iou_threshold) {
        return Err(invalid(
            "iou_threshold",
            format!("{} outside [0, 1]", cfg.iou_threshold),
        ));
    }
    if cfg.angle_threshold.is_nan() || cfg.angle_threshold < 0.0 {
        return Err(invalid(
            "angle_threshold",
            format!("{} < 0", cfg.angle_threshold),
        ));
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .score
            .total_cmp(&predictions[a].score)
            .then(a.cmp(&b))
    });

    let mut matched = vec![false; ground_truths.len()];
    let mut tp = 0;
    for &i in &order {
        let p = &predictions[i].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in ground_truths.iter().enumerate() {
            if matched[j] || angle_distance(p.theta(), g.theta()) > cfg.angle_threshold {
                continue;
            }
            let iou = rotated_iou(p, g);
            if iou >= cfg.iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            matched[j] = true;
            tp += 1;
        }
    }
    Ok(MatchResult::from_counts(
        tp,
        predictions.len() - tp,
        ground_truths.len() - tp,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64, t: f64) -> RotatedBox {
        RotatedBox::new(cx, cy, w, h, t).unwrap()
    }

    fn perfect(gts: &[RotatedBox]) -> Vec<ScoredBox> {
        gts.iter()
            .map(|g| ScoredBox::new(*g, 1.0, 0).unwrap())
            .collect()
    }

    #[test]
    fn splitmix_reference_values() {
        // Known outputs of the recurrence for seed 1234567.
        let mut r = SplitMix64::new(1234567);
        assert_eq!(r.next_u64(), 6457827717110365317);
        assert_eq!(r.next_u64(), 3203168211198807973);
        let mut r = SplitMix64::new(7);
        let u = r.next_f64();
        assert!((0.0..1.0).contains(&u));
        assert_eq!(SplitMix64::new(3).uniform(2.0, 2.0), 2.0);
    }

    #[test]
    fn empty_scene() {
        let spec = SceneSpec {
            n_boxes: 0,
            background_value: 17,
            ..SceneSpec::rotated(1)
        };
        let (img, boxes) = synth_scene(&spec).unwrap();
        assert!(boxes.is_empty());
        assert!(img.data().iter().all(|&v| v == 17));
    }

    #[test]
    fn scene_is_deterministic_and_separated() {
        let spec = SceneSpec::rotated(42);
        let a = synth_scene(&spec).unwrap();
        let b = synth_scene(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), spec.n_boxes);
        for (i, x) in a.1.iter().enumerate() {
            assert!(x.theta() >= -90.0 && x.theta() <= 90.0);
            for y in &a.1[i + 1..] {
                assert!(rotated_iou(x, y) < MAX_SCENE_IOU);
            }
        }
        assert_ne!(synth_scene(&SceneSpec::rotated(43)).unwrap().1, a.1);
    }

    #[test]
    fn axis_aligned_render_matches_integer_rect() {
        let spec = SceneSpec {
            n_boxes: 1,
            ..SceneSpec::non_rotated(9)
        };
        let (img, boxes) = synth_scene(&spec).unwrap();
        let b = boxes[0];
        // Pixel i is filled iff its center i + 0.5 lies within [c - e/2, c + e/2].
        let span = |c: f64, e: f64| {
            let lo = (c - e / 2.0 - 0.5).ceil() as i64;
            let hi = (c + e / 2.0 - 0.5).floor() as i64;
            lo..=hi
        };
        let (xs, ys) = (span(b.cx(), b.w()), span(b.cy(), b.h()));
        for y in 0..img.height() {
            for x in 0..img.width() {
                let inside = xs.contains(&(x as i64)) && ys.contains(&(y as i64));
                assert_eq!(
                    img.get(x, y, 0) == spec.fill_value,
                    inside,
                    "pixel ({x}, {y})"
                );
            }
        }
    }

    #[test]
    fn unsatisfiable_spec_fails() {
        let spec = SceneSpec {
            image_width: 20,
            image_height: 20,
            extent_range: (30.0, 40.0),
            ..SceneSpec::rotated(1)
        };
        assert!(matches!(
            synth_scene(&spec),
            Err(Error::Unsatisfiable { index: 0, .. })
        ));
        let crowded = SceneSpec {
            image_width: 40,
            image_height: 40,
            n_boxes: 50,
            extent_range: (20.0, 20.0),
            ..SceneSpec::rotated(1)
        };
        assert!(synth_scene(&crowded).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = SceneSpec::rotated(0);
        s.fill_value = s.background_value;
        assert!(synth_scene(&s).is_err());
        let s = SceneSpec {
            extent_range: (5.0, 2.0),
            ..SceneSpec::rotated(0)
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn mixture_ratio() {
        let m = SceneSpec::mixture(3, 8, 100);
        let plain = m.iter().filter(|s| s.angle_range == (0.0, 0.0)).count();
        assert_eq!(plain, 2);
        assert_eq!(m[3].angle_range, (0.0, 0.0));
    }

    #[test]
    fn augment_identity() {
        let (img, boxes) = synth_scene(&SceneSpec::rotated(5)).unwrap();
        let (out, ob) = augment_rotate(&img, &boxes, 0.0).unwrap();
        assert_eq!(out, img);
        assert_eq!(ob, boxes);
    }

    #[test]
    fn augment_quarter_turn_is_permutation() {
        let data: Vec<u8> = (0..7 * 4).map(|i| i as u8 * 3 + 1).collect();
        let img = ImageBuffer::new(7, 4, 1, data).unwrap();
        let b = bx(2.0, 1.5, 3.0, 1.0, 10.0);
        let (out, ob) = augment_rotate(&img, &[b], 90.0).unwrap();
        assert_eq!((out.width(), out.height()), (4, 7));
        // +90° turns +x toward +y: source (x, y) lands at (H - 1 - y, x).
        for y in 0..4 {
            for x in 0..7 {
                assert_eq!(out.get(3 - y, x, 0), img.get(x, y, 0));
            }
        }
        assert_eq!(ob[0], bx(4.0 - 1.5, 2.0, 3.0, 1.0, 100.0));
    }

    #[test]
    fn augment_preserves_extents() {
        let (img, boxes) = synth_scene(&SceneSpec::rotated(8)).unwrap();
        let (_, ob) = augment_rotate(&img, &boxes, 33.0).unwrap();
        assert_eq!(ob.len(), boxes.len());
        for (a, b) in boxes.iter().zip(&ob) {
            assert_eq!((a.w(), a.h()), (b.w(), b.h()));
        }
    }

    #[test]
    fn eval_examples() {
        let gts = [
            bx(10.0, 10.0, 8.0, 4.0, 0.0),
            bx(40.0, 40.0, 8.0, 4.0, 45.0),
        ];
        let r = eval_detections(&perfect(&gts), &gts, &EvalConfig::default()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));

        let r = eval_detections(&[], &gts, &EvalConfig::default()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 0.0, 0.0));

        let preds = [
            ScoredBox::new(gts[0], 0.9, 0).unwrap(),
            ScoredBox::new(bx(200.0, 200.0, 5.0, 5.0, 0.0), 0.8, 0).unwrap(),
        ];
        let r = eval_detections(&preds, &gts[..1], &EvalConfig::default()).unwrap();
        assert_eq!(
            (r.true_positives, r.false_positives, r.false_negatives),
            (1, 1, 0)
        );
        assert_eq!((r.precision, r.recall), (0.5, 1.0));
    }

    #[test]
    fn eval_flipped_is_false_positive() {
        let g = bx(10.0, 10.0, 8.0, 4.0, 30.0);
        let p = ScoredBox::new(g.flipped(), 1.0, 0).unwrap();
        let r = eval_detections(&[p], &[g], &EvalConfig::default()).unwrap();
        assert_eq!(
            (r.true_positives, r.false_positives, r.false_negatives),
            (0, 1, 1)
        );
    }

    #[test]
    fn eval_each_truth_matched_once() {
        let g = bx(10.0, 10.0, 8.0, 4.0, 0.0);
        let preds = [
            ScoredBox::new(g, 0.9, 0).unwrap(),
            ScoredBox::new(g, 0.8, 0).unwrap(),
        ];
        let r = eval_detections(&preds, &[g], &EvalConfig::default()).unwrap();
        assert_eq!((r.true_positives, r.false_positives), (1, 1));
    }

    #[test]
    fn match_result_conventions() {
        let r = MatchResult::from_counts(0, 0, 0);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = MatchResult::from_counts(0, 3, 0);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 1.0, 0.0));
    }
}

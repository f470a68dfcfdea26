//! Rotated-box overlap: convex clipping, rotated IoU, orientation distance
//! and the angle-aware anchor labeling rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rbox::{sin_cos_deg, wrap_degrees, RotatedBox};

/// Half-plane tolerance for the clipping inside test.
const CLIP_EPS: f64 = 1e-9;
/// Intersections below this area are reported as empty.
const MIN_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Ordered vertex list. Polygons built in this crate are convex and wound so
/// that their shoelace area is positive, but the clipper accepts either winding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Twice the signed area.
    fn signed_area2(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a.x * b.y - b.x * a.y
            })
            .sum()
    }
}

/// Shoelace area, always non-negative. Zero for fewer than three vertices.
pub fn polygon_area(p: &Polygon) -> f64 {
    (p.signed_area2() / 2.0).abs()
}

/// Sutherland–Hodgman clipping of a convex `subject` against a convex `clip`.
pub fn convex_clip(subject: &Polygon, clip: &Polygon) -> Polygon {
    if subject.vertices.len() < 3 || clip.vertices.len() < 3 {
        return Polygon::empty();
    }
    let orientation = clip.signed_area2().signum();
    if orientation == 0.0 {
        return Polygon::empty();
    }

    let mut output = subject.vertices.clone();
    let mut input = Vec::with_capacity(8);
    let m = clip.vertices.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let e0 = clip.vertices[i];
        let e1 = clip.vertices[(i + 1) % m];
        let side =
            |p: Point| orientation * ((e1.x - e0.x) * (p.y - e0.y) - (e1.y - e0.y) * (p.x - e0.x));

        std::mem::swap(&mut input, &mut output);
        output.clear();
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let next = input[(j + 1) % n];
            let sc = side(cur);
            let sn = side(next);
            let cur_in = sc >= -CLIP_EPS;
            let next_in = sn >= -CLIP_EPS;
            if cur_in {
                output.push(cur);
            }
            if cur_in != next_in {
                let t = (sc / (sc - sn)).clamp(0.0, 1.0);
                output.push(Point::new(
                    cur.x + t * (next.x - cur.x),
                    cur.y + t * (next.y - cur.y),
                ));
            }
        }
    }

    let out = Polygon::new(output);
    if polygon_area(&out) < MIN_AREA {
        Polygon::empty()
    } else {
        out
    }
}

/// Exact intersection-over-union of two rotated boxes.
///
/// Orientation only matters through geometry: a box and its 180° twin have IoU 1.
pub fn rotated_iou(a: &RotatedBox, b: &RotatedBox) -> f64 {
    if !a
        .horizontal_bounding_rect()
        .overlaps(&b.horizontal_bounding_rect())
    {
        return 0.0;
    }
    let pa = a.to_corners();
    let pb = b.to_corners();
    // Box areas come from the same shoelace evaluation as the intersection so
    // that coincident boxes yield exactly 1.
    let area_a = polygon_area(&pa);
    let area_b = polygon_area(&pb);
    let inter = polygon_area(&convex_clip(&pa, &pb));
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Pairwise IoU matrix, rows indexed by `a`.
pub fn iou_matrix(a: &[RotatedBox], b: &[RotatedBox]) -> Vec<Vec<f64>> {
    a.par_iter()
        .map(|x| b.iter().map(|y| rotated_iou(x, y)).collect())
        .collect()
}

/// Smallest absolute difference between two orientations, in `[0, 180]`.
pub fn angle_distance(a_theta: f64, b_theta: f64) -> f64 {
    wrap_degrees(a_theta - b_theta).abs()
}

/// Grid-sampled IoU used as an independent check on [`rotated_iou`].
///
/// Both boxes are rasterized on a `resolution × resolution` grid spanning the
/// union of their bounding rectangles, testing each cell center.
pub fn raster_iou(a: &RotatedBox, b: &RotatedBox, resolution: usize) -> Result<f64> {
    if resolution < 64 {
        return Err(invalid("resolution", format!("{resolution} < 64")));
    }
    let r = a
        .horizontal_bounding_rect()
        .union(&b.horizontal_bounding_rect());
    let dx = r.width() / resolution as f64;
    let dy = r.height() / resolution as f64;

    struct Local {
        cx: f64,
        cy: f64,
        c: f64,
        s: f64,
        hw: f64,
        hh: f64,
    }
    let local = |bx: &RotatedBox| {
        let (s, c) = sin_cos_deg(bx.theta());
        Local {
            cx: bx.cx(),
            cy: bx.cy(),
            c,
            s,
            hw: bx.w() / 2.0,
            hh: bx.h() / 2.0,
        }
    };
    let inside = |l: &Local, x: f64, y: f64| {
        let (ux, uy) = (x - l.cx, y - l.cy);
        (ux * l.c + uy * l.s).abs() <= l.hw && (-ux * l.s + uy * l.c).abs() <= l.hh
    };
    let (la, lb) = (local(a), local(b));

    let (both, either) = (0..resolution)
        .into_par_iter()
        .map(|j| {
            let y = r.y1 + (j as f64 + 0.5) * dy;
            let mut both = 0u64;
            let mut either = 0u64;
            for i in 0..resolution {
                let x = r.x1 + (i as f64 + 0.5) * dx;
                let ia = inside(&la, x, y);
                let ib = inside(&lb, x, y);
                both += (ia && ib) as u64;
                either += (ia || ib) as u64;
            }
            (both, either)
        })
        .reduce(|| (0, 0), |p, q| (p.0 + q.0, p.1 + q.1));

    Ok(if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    })
}

/// Training label of a rotated anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorLabel {
    Positive,
    Negative,
    Ignore,
}

/// Thresholds of the angle-aware labeling rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelThresholds {
    pub iou_hi: f64,
    pub iou_lo: f64,
    /// Orientation gate in degrees. 180 or more disables the gate entirely.
    pub angle_max: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        Self {
            iou_hi: 0.7,
            iou_lo: 0.3,
            angle_max: 30.0,
        }
    }
}

impl LabelThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.iou_lo)
            && (0.0..=1.0).contains(&self.iou_hi)
            && self.iou_lo <= self.iou_hi;
        if !ok {
            return Err(invalid(
                "iou thresholds",
                format!(
                    "need 0 <= iou_lo ({}) <= iou_hi ({}) <= 1",
                    self.iou_lo, self.iou_hi
                ),
            ));
        }
        if self.angle_max.is_nan() || self.angle_max < 0.0 {
            return Err(invalid("angle_max", format!("{} < 0", self.angle_max)));
        }
        Ok(())
    }

    fn angle_ok(&self, dist: f64) -> bool {
        self.angle_max >= 180.0 || dist < self.angle_max
    }

    fn angle_bad(&self, dist: f64) -> bool {
        self.angle_max < 180.0 && dist > self.angle_max
    }
}

/// Labels every anchor against the ground truths.
///
/// * Positive: for some ground truth the anchor either is that ground truth's
///   best-overlapping anchor (IoU > 0, ties to the lowest index) or has
///   IoU > `iou_hi`, and the orientation gap is below `angle_max`.
/// * Negative: every IoU above `iou_hi` is angle-incompatible; or the anchor's
///   best IoU is below `iou_lo` and it is not some ground truth's best anchor.
/// * Ignore: everything else, including best-by-IoU anchors whose orientation
///   is off.
pub fn classify_anchors(
    anchors: &[RotatedBox],
    ground_truths: &[RotatedBox],
    thresholds: &LabelThresholds,
) -> Result<Vec<AnchorLabel>> {
    if ground_truths.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    thresholds.validate()?;
    let ious = iou_matrix(anchors, ground_truths);

    // Best anchor per ground truth; strict `>` keeps the lowest index on ties.
    let mut best: Vec<Option<(usize, f64)>> = vec![None; ground_truths.len()];
    for (i, row) in ious.iter().enumerate() {
        for (j, &iou) in row.iter().enumerate() {
            if iou > 0.0 && best[j].is_none_or(|(_, b)| iou > b) {
                best[j] = Some((i, iou));
            }
        }
    }

    let labels = ious
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let dist: Vec<f64> = ground_truths
                .iter()
                .map(|g| angle_distance(anchors[i].theta(), g.theta()))
                .collect();
            let is_best = |j: usize| best[j].is_some_and(|(b, _)| b == i);

            let positive = (0..ground_truths.len()).any(|j| {
                (row[j] > thresholds.iou_hi || is_best(j)) && thresholds.angle_ok(dist[j])
            });
            if positive {
                return AnchorLabel::Positive;
            }
            let high: Vec<usize> = (0..ground_truths.len())
                .filter(|&j| row[j] > thresholds.iou_hi)
                .collect();
            if !high.is_empty() && high.iter().all(|&j| thresholds.angle_bad(dist[j])) {
                return AnchorLabel::Negative;
            }
            if (0..ground_truths.len()).any(is_best) {
                return AnchorLabel::Ignore;
            }
            let max_iou = row.iter().copied().fold(0.0, f64::max);
            if max_iou < thresholds.iou_lo {
                AnchorLabel::Negative
            } else {
                AnchorLabel::Ignore
            }
        })
        .collect();
    Ok(labels)
}

/// Single-anchor form: the anchor is the only one under consideration, so it
/// is the best anchor of every ground truth it overlaps at all.
pub fn classify_anchor(
    anchor: &RotatedBox,
    ground_truths: &[RotatedBox],
    thresholds: &LabelThresholds,
) -> Result<AnchorLabel> {
    Ok(classify_anchors(std::slice::from_ref(anchor), ground_truths, thresholds)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(x0: f64, y0: f64, s: f64) -> Polygon {
        Polygon::new(vec![
            Point::new(x0, y0),
            Point::new(x0 + s, y0),
            Point::new(x0 + s, y0 + s),
            Point::new(x0, y0 + s),
        ])
    }

    fn bx(cx: f64, cy: f64, w: f64, h: f64, t: f64) -> RotatedBox {
        RotatedBox::new(cx, cy, w, h, t).unwrap()
    }

    #[test]
    fn clip_examples() {
        let unit = sq(0.0, 0.0, 1.0);
        assert!((polygon_area(&convex_clip(&unit, &unit)) - 1.0).abs() < 1e-15);
        assert!(convex_clip(&unit, &sq(10.0, 10.0, 1.0)).is_empty());
        let c = convex_clip(&sq(0.0, 0.0, 2.0), &sq(1.0, 1.0, 2.0));
        assert!((polygon_area(&c) - 1.0).abs() < 1e-12);
        for p in c.vertices() {
            assert!((1.0..=2.0).contains(&p.x) && (1.0..=2.0).contains(&p.y));
        }
    }

    #[test]
    fn clip_ignores_winding() {
        let cw = Polygon::new(sq(1.0, 1.0, 2.0).vertices().iter().rev().copied().collect());
        let c = convex_clip(&sq(0.0, 0.0, 2.0), &cw);
        assert!((polygon_area(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edge_touching_squares_are_empty() {
        assert!(convex_clip(&sq(0.0, 0.0, 1.0), &sq(1.0, 0.0, 1.0)).is_empty());
    }

    #[test]
    fn area_examples() {
        assert_eq!(polygon_area(&sq(0.0, 0.0, 1.0)), 1.0);
        let tri = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 2.0),
        ]);
        assert_eq!(polygon_area(&tri), 2.0);
        assert_eq!(polygon_area(&Polygon::empty()), 0.0);
    }

    #[test]
    fn iou_examples() {
        let a = bx(3.0, 4.0, 5.0, 2.0, 33.0);
        assert_eq!(rotated_iou(&a, &a), 1.0);
        assert_eq!(rotated_iou(&a, &a.flipped()), 1.0);
        let v = rotated_iou(&bx(0.0, 0.0, 4.0, 4.0, 0.0), &bx(2.0, 0.0, 4.0, 4.0, 0.0));
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        let oct = 8.0 * (2f64.sqrt() - 1.0);
        let v = rotated_iou(&bx(0.0, 0.0, 2.0, 2.0, 0.0), &bx(0.0, 0.0, 2.0, 2.0, 45.0));
        assert!((v - oct / (8.0 - oct)).abs() < 1e-12);
    }

    #[test]
    fn raster_examples() {
        let a = bx(0.0, 0.0, 4.0, 4.0, 0.0);
        assert_eq!(raster_iou(&a, &a, 64).unwrap(), 1.0);
        assert_eq!(
            raster_iou(&a, &bx(10.0, 10.0, 1.0, 1.0, 0.0), 64).unwrap(),
            0.0
        );
        let v = raster_iou(&a, &bx(2.0, 0.0, 4.0, 4.0, 0.0), 2048).unwrap();
        assert!((v - 1.0 / 3.0).abs() <= 0.005);
        assert!(raster_iou(&a, &a, 63).is_err());
    }

    #[test]
    fn raster_confirms_octagon() {
        let oct = 8.0 * (2f64.sqrt() - 1.0);
        let v = raster_iou(
            &bx(0.0, 0.0, 2.0, 2.0, 0.0),
            &bx(0.0, 0.0, 2.0, 2.0, 45.0),
            2048,
        )
        .unwrap();
        assert!((v - oct / (8.0 - oct)).abs() < 1e-3);
    }

    #[test]
    fn angle_distance_examples() {
        assert_eq!(angle_distance(0.0, 90.0), 90.0);
        assert_eq!(angle_distance(170.0, -170.0), 20.0);
        assert_eq!(angle_distance(45.0, 45.0), 0.0);
        assert_eq!(angle_distance(0.0, 180.0), 180.0);
        assert_eq!(angle_distance(-90.0, 90.0), 180.0);
    }

    #[test]
    fn classify_rejects_bad_inputs() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            classify_anchor(&a, &[], &LabelThresholds::default()),
            Err(Error::EmptyGroundTruth)
        ));
        let bad = LabelThresholds {
            iou_hi: 0.2,
            iou_lo: 0.3,
            angle_max: 30.0,
        };
        assert!(classify_anchor(&a, &[a], &bad).is_err());
    }

    #[test]
    fn twin_is_negative() {
        let g = bx(10.0, 10.0, 40.0, 8.0, 20.0);
        assert_eq!(
            classify_anchor(&g.flipped(), &[g], &LabelThresholds::default()).unwrap(),
            AnchorLabel::Negative
        );
        assert_eq!(
            classify_anchor(&g, &[g], &LabelThresholds::default()).unwrap(),
            AnchorLabel::Positive
        );
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_box() -> impl Strategy<Value = RotatedBox> {
        (
            -20.0..20.0f64,
            -20.0..20.0f64,
            1.0..40.0f64,
            1.0..40.0f64,
            -180.0..180.0f64,
        )
            .prop_map(|(cx, cy, w, h, t)| RotatedBox::new(cx, cy, w, h, t).unwrap())
    }

    fn transform(b: &RotatedBox, tx: f64, ty: f64, angle: f64, scale: f64) -> RotatedBox {
        let r = b.rotated_about(Point::new(0.0, 0.0), angle);
        RotatedBox::new(
            r.cx() * scale + tx,
            r.cy() * scale + ty,
            r.w() * scale,
            r.h() * scale,
            r.theta(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = rotated_iou(&a, &b);
            let ba = rotated_iou(&b, &a);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() < 1e-9);
        }

        #[test]
        fn iou_invariant_under_similarity(
            a in arb_box(), b in arb_box(),
            tx in -100.0..100.0f64, ty in -100.0..100.0f64,
            angle in -180.0..180.0f64, scale in 0.25..4.0f64,
        ) {
            let base = rotated_iou(&a, &b);
            let moved = rotated_iou(&transform(&a, tx, ty, angle, scale), &transform(&b, tx, ty, angle, scale));
            prop_assert!((base - moved).abs() < 1e-6, "{} vs {}", base, moved);
        }

        #[test]
        fn free_angle_gate_matches_plain_iou_labels(
            anchors in proptest::collection::vec(arb_box(), 1..12),
            g in arb_box(),
        ) {
            let t = LabelThresholds { angle_max: 180.0, ..LabelThresholds::default() };
            let labels = classify_anchors(&anchors, &[g], &t).unwrap();
            // Plain Faster-RCNN rule with a single ground truth.
            let ious: Vec<f64> = anchors.iter().map(|a| rotated_iou(a, &g)).collect();
            let mut best = None;
            for (i, &v) in ious.iter().enumerate() {
                if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            for (i, &v) in ious.iter().enumerate() {
                let expected = if v > 0.7 || best.map(|b| b.0) == Some(i) {
                    AnchorLabel::Positive
                } else if v < 0.3 {
                    AnchorLabel::Negative
                } else {
                    AnchorLabel::Ignore
                };
                prop_assert_eq!(labels[i], expected);
            }
        }

        #[test]
        fn twin_always_negative(g in arb_box()) {
            prop_assert_eq!(
                classify_anchor(&g.flipped(), &[g], &LabelThresholds::default()).unwrap(),
                AnchorLabel::Negative
            );
        }
    }
}

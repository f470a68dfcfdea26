//! Box regression deltas, rotated NMS, and the two composite post-processing
//! operators (`generate_proposals`, `box_with_nms_limit`).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, Error, Result};
use crate::geom::{angle_distance, rotated_iou};
use crate::rbox::{sin_cos_deg, wrap_degrees, RotatedBox};

/// Regression offsets of a target box relative to an anchor.
///
/// `dx, dy` are the center offset expressed in the anchor's own frame and
/// divided by its extents; `dw, dh` are log extent ratios; `dt` is the wrapped
/// orientation offset in units of 180°, in `(-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxDeltas {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
    pub dt: f64,
}

impl BoxDeltas {
    pub fn new(dx: f64, dy: f64, dw: f64, dh: f64, dt: f64) -> Result<Self> {
        for (name, v) in [("dx", dx), ("dy", dy), ("dw", dw), ("dh", dh), ("dt", dt)] {
            check_finite(name, v)?;
        }
        if !(dt > -1.0 && dt <= 1.0) {
            return Err(invalid("dt", format!("{dt} outside (-1, 1]")));
        }
        Ok(Self { dx, dy, dw, dh, dt })
    }
}

pub fn encode_deltas(anchor: &RotatedBox, target: &RotatedBox) -> BoxDeltas {
    let (s, c) = sin_cos_deg(anchor.theta());
    let (ox, oy) = (target.cx() - anchor.cx(), target.cy() - anchor.cy());
    BoxDeltas {
        dx: (ox * c + oy * s) / anchor.w(),
        dy: (-ox * s + oy * c) / anchor.h(),
        dw: (target.w() / anchor.w()).ln(),
        dh: (target.h() / anchor.h()).ln(),
        dt: wrap_degrees(target.theta() - anchor.theta()) / 180.0,
    }
}

/// Inverse of [`encode_deltas`]; `dw`/`dh` are clamped to `±clamp_log` before
/// exponentiation.
pub fn decode_deltas(anchor: &RotatedBox, deltas: &BoxDeltas, clamp_log: f64) -> RotatedBox {
    let (s, c) = sin_cos_deg(anchor.theta());
    let lx = deltas.dx * anchor.w();
    let ly = deltas.dy * anchor.h();
    RotatedBox::from_parts(
        anchor.cx() + lx * c - ly * s,
        anchor.cy() + lx * s + ly * c,
        anchor.w() * deltas.dw.clamp(-clamp_log, clamp_log).exp(),
        anchor.h() * deltas.dh.clamp(-clamp_log, clamp_log).exp(),
        anchor.theta() + deltas.dt * 180.0,
    )
}

/// A detection: box, confidence and class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(rename = "box")]
    pub bbox: RotatedBox,
    pub score: f64,
    pub class_id: u32,
}

impl ScoredBox {
    pub fn new(bbox: RotatedBox, score: f64, class_id: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(invalid("score", format!("{score} outside [0, 1]")));
        }
        Ok(Self {
            bbox,
            score,
            class_id,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    pub iou_threshold: f64,
    /// When set, only boxes whose orientations differ by at most this many
    /// degrees suppress each other. `None` suppresses on IoU alone.
    pub angle_gate: Option<f64>,
}

impl NmsConfig {
    pub fn new(iou_threshold: f64) -> Self {
        Self {
            iou_threshold,
            angle_gate: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(invalid(
                "iou_threshold",
                format!("{} outside [0, 1]", self.iou_threshold),
            ));
        }
        if let Some(g) = self.angle_gate {
            if g.is_nan() || g < 0.0 {
                return Err(invalid("angle_gate", format!("{g} < 0")));
            }
        }
        Ok(())
    }
}

/// Indices sorted by descending score, ties to the lower index.
fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy rotated NMS. Returns kept indices in descending score order.
pub fn rotated_nms(boxes: &[ScoredBox], cfg: &NmsConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let order = score_order(boxes.iter().map(|b| b.score));
    let rects: Vec<_> = boxes
        .iter()
        .map(|b| b.bbox.horizontal_bounding_rect())
        .collect();
    let mut suppressed = vec![false; boxes.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        let kept = &boxes[i].bbox;
        let victims: Vec<usize> = order[pos + 1..]
            .par_iter()
            .copied()
            .filter(|&j| {
                if suppressed[j] || !rects[i].overlaps(&rects[j]) {
                    return false;
                }
                let other = &boxes[j].bbox;
                if let Some(gate) = cfg.angle_gate {
                    if angle_distance(kept.theta(), other.theta()) > gate {
                        return false;
                    }
                }
                rotated_iou(kept, other) > cfg.iou_threshold
            })
            .collect();
        for j in victims {
            suppressed[j] = true;
        }
    }
    Ok(keep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    pub pre_nms_topk: usize,
    pub post_nms_topk: usize,
    pub nms_threshold: f64,
    pub min_size: f64,
    pub clamp_log: f64,
    pub angle_gate: Option<f64>,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            pre_nms_topk: 2000,
            post_nms_topk: 1000,
            nms_threshold: 0.7,
            min_size: 0.0,
            clamp_log: 4.0,
            angle_gate: None,
        }
    }
}

/// Turns per-anchor objectness and deltas into proposals: top-k by score,
/// decode, drop boxes smaller than `min_size`, NMS, truncate. Boxes spilling
/// past the image are left unclipped.
pub fn generate_proposals(
    objectness: &[f64],
    deltas: &[BoxDeltas],
    anchors: &[RotatedBox],
    cfg: &ProposalConfig,
) -> Result<Vec<ScoredBox>> {
    if objectness.len() != anchors.len() {
        return Err(Error::LengthMismatch {
            what: "objectness vs anchors",
            left: objectness.len(),
            right: anchors.len(),
        });
    }
    if deltas.len() != anchors.len() {
        return Err(Error::LengthMismatch {
            what: "deltas vs anchors",
            left: deltas.len(),
            right: anchors.len(),
        });
    }
    if cfg.min_size.is_nan() || cfg.min_size < 0.0 {
        return Err(invalid("min_size", format!("{} < 0", cfg.min_size)));
    }
    if cfg.clamp_log.is_nan() || cfg.clamp_log < 0.0 {
        return Err(invalid("clamp_log", format!("{} < 0", cfg.clamp_log)));
    }

    let mut order = score_order(objectness.iter().copied());
    order.truncate(cfg.pre_nms_topk);

    let candidates = order
        .iter()
        .map(|&i| {
            let b = decode_deltas(&anchors[i], &deltas[i], cfg.clamp_log);
            ScoredBox::new(b, objectness[i], 0)
        })
        .filter(|r| {
            r.as_ref().map_or(true, |s| {
                s.bbox.w() >= cfg.min_size && s.bbox.h() >= cfg.min_size
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let nms = NmsConfig {
        iou_threshold: cfg.nms_threshold,
        angle_gate: cfg.angle_gate,
    };
    let keep = rotated_nms(&candidates, &nms)?;
    Ok(keep
        .into_iter()
        .take(cfg.post_nms_topk)
        .map(|i| candidates[i])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    pub score_threshold: f64,
    pub nms_threshold: f64,
    pub max_detections: usize,
    pub angle_gate: Option<f64>,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.05,
            nms_threshold: 0.3,
            max_detections: 100,
            angle_gate: None,
        }
    }
}

/// Per-class score filtering and NMS, then a global score-sorted cut to
/// `max_detections`.
pub fn box_with_nms_limit(detections: &[ScoredBox], cfg: &LimitConfig) -> Result<Vec<ScoredBox>> {
    let nms = NmsConfig {
        iou_threshold: cfg.nms_threshold,
        angle_gate: cfg.angle_gate,
    };
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, d) in detections.iter().enumerate() {
        if d.score >= cfg.score_threshold {
            by_class.entry(d.class_id).or_default().push(i);
        }
    }

    let mut kept = Vec::new();
    for indices in by_class.values() {
        let subset: Vec<ScoredBox> = indices.iter().map(|&i| detections[i]).collect();
        kept.extend(rotated_nms(&subset, &nms)?.into_iter().map(|k| indices[k]));
    }
    kept.sort_by(|&a, &b| {
        detections[b]
            .score
            .total_cmp(&detections[a].score)
            .then(a.cmp(&b))
    });
    kept.truncate(cfg.max_detections);
    Ok(kept.into_iter().map(|i| detections[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64, t: f64) -> RotatedBox {
        RotatedBox::new(cx, cy, w, h, t).unwrap()
    }

    fn sb(b: RotatedBox, score: f64, class_id: u32) -> ScoredBox {
        ScoredBox::new(b, score, class_id).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn encode_examples() {
        let a = bx(0.0, 0.0, 100.0, 50.0, 0.0);
        assert_eq!(encode_deltas(&a, &a), BoxDeltas::default());
        let d = encode_deltas(&a, &bx(10.0, 5.0, 100.0, 50.0, 0.0));
        assert!(close(d.dx, 0.1) && close(d.dy, 0.1) && d.dw == 0.0 && d.dh == 0.0 && d.dt == 0.0);
        let t = bx(0.0, 0.0, 200.0, 50.0, 90.0);
        let d = encode_deltas(&a, &t);
        assert!(close(d.dx, 0.0) && close(d.dy, 0.0));
        assert!(close(d.dw, 2f64.ln()) && d.dh == 0.0 && d.dt == 0.5);
        assert_eq!(decode_deltas(&a, &d, 4.0), t);
    }

    #[test]
    fn near_vertical_targets_give_small_opposite_dt() {
        let a = bx(0.0, 0.0, 10.0, 10.0, 0.0);
        let up = encode_deltas(&a, &bx(0.0, 0.0, 10.0, 10.0, 89.0)).dt;
        let down = encode_deltas(&a, &bx(0.0, 0.0, 10.0, 10.0, -89.0)).dt;
        assert!(close(up, -down) && up > 0.0 && up < 0.5);
    }

    #[test]
    fn decode_clamps_and_zero_is_identity() {
        let a = bx(3.0, 4.0, 10.0, 5.0, 30.0);
        assert_eq!(decode_deltas(&a, &BoxDeltas::default(), 4.0), a);
        let d = BoxDeltas::new(0.0, 0.0, 10.0, -10.0, 0.0).unwrap();
        let b = decode_deltas(&a, &d, 4.0);
        assert!(close(b.w(), 10.0 * 4f64.exp()) && close(b.h(), 5.0 * (-4f64).exp()));
    }

    #[test]
    fn deltas_validation() {
        assert!(BoxDeltas::new(f64::NAN, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(BoxDeltas::new(0.0, 0.0, 0.0, 0.0, -1.0).is_err());
        assert!(BoxDeltas::new(0.0, 0.0, 0.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn nms_examples() {
        let b = bx(5.0, 5.0, 10.0, 4.0, 15.0);
        assert_eq!(
            rotated_nms(&[sb(b, 0.3, 0)], &NmsConfig::new(0.5)).unwrap(),
            vec![0]
        );
        let two = [sb(b, 0.8, 0), sb(b, 0.9, 0)];
        assert_eq!(rotated_nms(&two, &NmsConfig::new(0.5)).unwrap(), vec![1]);
        assert!(rotated_nms(&two, &NmsConfig::new(1.5)).is_err());
    }

    #[test]
    fn nms_ties_prefer_lower_index() {
        let b = bx(5.0, 5.0, 10.0, 4.0, 15.0);
        let boxes = [
            sb(b, 0.5, 0),
            sb(b, 0.5, 0),
            sb(b.translated(100.0, 0.0), 0.5, 0),
        ];
        assert_eq!(
            rotated_nms(&boxes, &NmsConfig::new(0.5)).unwrap(),
            vec![0, 2]
        );
    }

    #[test]
    fn nms_angle_gate() {
        let b = bx(5.0, 5.0, 10.0, 4.0, 15.0);
        let boxes = [sb(b, 0.9, 0), sb(b.flipped(), 0.8, 0)];
        assert_eq!(rotated_nms(&boxes, &NmsConfig::new(0.5)).unwrap(), vec![0]);
        let gated = NmsConfig {
            iou_threshold: 0.5,
            angle_gate: Some(30.0),
        };
        assert_eq!(rotated_nms(&boxes, &gated).unwrap(), vec![0, 1]);
    }

    #[test]
    fn proposals_examples() {
        let a = bx(8.0, 8.0, 32.0, 16.0, 30.0);
        let cfg = ProposalConfig::default();
        let p = generate_proposals(&[0.9], &[BoxDeltas::default()], &[a], &cfg).unwrap();
        assert_eq!(p, vec![sb(a, 0.9, 0)]);

        let p = generate_proposals(&[0.4, 0.6], &[BoxDeltas::default(); 2], &[a, a], &cfg).unwrap();
        assert_eq!(p, vec![sb(a, 0.6, 0)]);

        assert!(matches!(
            generate_proposals(&[0.4], &[BoxDeltas::default(); 2], &[a, a], &cfg),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(generate_proposals(&[1.4], &[BoxDeltas::default()], &[a], &cfg).is_err());
    }

    #[test]
    fn proposals_scripted_pipeline() {
        // Four anchors along x; anchor 2 decodes onto anchor 1, anchor 3 is tiny.
        let anchors: Vec<RotatedBox> = (0..4)
            .map(|i| bx(i as f64 * 50.0, 0.0, 20.0, 10.0, 0.0))
            .collect();
        let scores = [0.2, 0.9, 0.8, 0.7];
        let deltas = [
            BoxDeltas::default(),
            BoxDeltas::default(),
            BoxDeltas::new(-2.5, 0.0, 0.0, 0.0, 0.0).unwrap(),
            BoxDeltas::new(0.0, 0.0, -3.0, -3.0, 0.0).unwrap(),
        ];
        let cfg = ProposalConfig {
            pre_nms_topk: 3,
            post_nms_topk: 5,
            nms_threshold: 0.7,
            min_size: 2.0,
            ..ProposalConfig::default()
        };
        // (1) top-3: [1, 2, 3]; (2) decode: 2 -> onto 1, 3 -> 0.99x0.50;
        // (3) 3 dropped by min_size; (4) 2 suppressed by 1; (5) one left.
        let out = generate_proposals(&scores, &deltas, &anchors, &cfg).unwrap();
        assert_eq!(out, vec![sb(anchors[1], 0.9, 0)]);

        let cfg = ProposalConfig {
            pre_nms_topk: 4,
            min_size: 0.0,
            post_nms_topk: 2,
            ..cfg
        };
        let out = generate_proposals(&scores, &deltas, &anchors, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].score, 0.9);
        assert_eq!(out[1].score, 0.7);
    }

    #[test]
    fn limit_examples() {
        let b = bx(5.0, 5.0, 10.0, 4.0, 15.0);
        let low = [sb(b, 0.01, 0), sb(b, 0.02, 1)];
        assert!(box_with_nms_limit(&low, &LimitConfig::default())
            .unwrap()
            .is_empty());

        let mixed = [sb(b, 0.9, 0), sb(b.translated(1.0, 0.0), 0.8, 1)];
        let out = box_with_nms_limit(&mixed, &LimitConfig::default()).unwrap();
        assert_eq!(out, mixed.to_vec());

        let same = [sb(b, 0.9, 0), sb(b.translated(1.0, 0.0), 0.8, 0)];
        assert_eq!(
            box_with_nms_limit(&same, &LimitConfig::default()).unwrap(),
            vec![same[0]]
        );

        let many: Vec<ScoredBox> = (0..10)
            .map(|i| sb(b.translated(i as f64 * 100.0, 0.0), 0.5, i % 3))
            .collect();
        let cfg = LimitConfig {
            max_detections: 4,
            ..LimitConfig::default()
        };
        let out = box_with_nms_limit(&many, &cfg).unwrap();
        assert_eq!(out, many[..4].to_vec());
    }
}

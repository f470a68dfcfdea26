//! Five-parameter rotated boxes.
//!
//! A box is `(cx, cy, w, h, theta)`: geometric center, extent along the width
//! direction, extent perpendicular to it, and the orientation of the width
//! direction in degrees. Coordinates follow raster convention (x right, y
//! down), so a positive angle turns the width vector from +x toward +y.
//!
//! The stored angle lives in `(-180, 180]`. A box and its 180° twin cover the
//! same pixels but are different boxes: they read in opposite directions.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::geom::{Point, Polygon};

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn normalize_angle(theta: f64) -> Result<f64> {
    check_finite("theta", theta)?;
    Ok(wrap_degrees(theta))
}

/// Infallible variant of [`normalize_angle`] for values already known to be finite.
pub(crate) fn wrap_degrees(theta: f64) -> f64 {
    let r = theta.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
///
/// Exactness at right angles is what makes 90° rotations of rasters pure
/// index permutations.
pub fn sin_cos_deg(theta: f64) -> (f64, f64) {
    let t = wrap_degrees(theta);
    if t == 0.0 {
        (0.0, 1.0)
    } else if t == 90.0 {
        (1.0, 0.0)
    } else if t == 180.0 {
        (0.0, -1.0)
    } else if t == -90.0 {
        (-1.0, 0.0)
    } else {
        t.to_radians().sin_cos()
    }
}

/// An oriented rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotatedBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: f64,
}

impl RotatedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        check_finite("cx", cx)?;
        check_finite("cy", cy)?;
        check_finite("w", w)?;
        check_finite("h", h)?;
        let theta = normalize_angle(theta)?;
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::DegenerateBox { w, h });
        }
        Ok(Self {
            cx,
            cy,
            w,
            h,
            theta,
        })
    }

    /// Constructor for values produced by operators that already guarantee
    /// finiteness and positive extents.
    pub(crate) fn from_parts(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Self {
        debug_assert!(cx.is_finite() && cy.is_finite() && theta.is_finite());
        debug_assert!(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite());
        Self {
            cx,
            cy,
            w,
            h,
            theta: wrap_degrees(theta),
        }
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Orientation in degrees, in `(-180, 180]`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Unit vectors along the width and height directions.
    pub fn axes(&self) -> (Point, Point) {
        let (s, c) = sin_cos_deg(self.theta);
        (Point::new(c, s), Point::new(-s, c))
    }

    /// Corner polygon: `center ± (w/2)·u ± (h/2)·v` in the order
    /// `(-,-), (+,-), (+,+), (-,+)`, which has positive shoelace area.
    pub fn to_corners(&self) -> Polygon {
        let (u, v) = self.axes();
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        let corner = |a: f64, b: f64| {
            Point::new(
                self.cx + a * hw * u.x + b * hh * v.x,
                self.cy + a * hw * u.y + b * hh * v.y,
            )
        };
        Polygon::new(vec![
            corner(-1.0, -1.0),
            corner(1.0, -1.0),
            corner(1.0, 1.0),
            corner(-1.0, 1.0),
        ])
    }

    /// Smallest axis-aligned rectangle containing the box.
    pub fn horizontal_bounding_rect(&self) -> AxisAlignedRect {
        let (s, c) = sin_cos_deg(self.theta);
        let ex = (self.w * c.abs() + self.h * s.abs()) / 2.0;
        let ey = (self.w * s.abs() + self.h * c.abs()) / 2.0;
        AxisAlignedRect {
            x1: self.cx - ex,
            y1: self.cy - ey,
            x2: self.cx + ex,
            y2: self.cy + ey,
        }
    }

    /// Closed point-in-box test in the box's local frame.
    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = sin_cos_deg(self.theta);
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        let lx = dx * c + dy * s;
        let ly = -dx * s + dy * c;
        lx.abs() <= self.w / 2.0 && ly.abs() <= self.h / 2.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::from_parts(self.cx + dx, self.cy + dy, self.w, self.h, self.theta)
    }

    /// Same geometry, opposite reading direction.
    pub fn flipped(&self) -> Self {
        Self::from_parts(self.cx, self.cy, self.w, self.h, self.theta + 180.0)
    }

    /// Rotates the box about `pivot` by `angle` degrees (center moves, orientation
    /// increments by `angle`).
    pub fn rotated_about(&self, pivot: Point, angle: f64) -> Self {
        let (s, c) = sin_cos_deg(angle);
        let (dx, dy) = (self.cx - pivot.x, self.cy - pivot.y);
        Self::from_parts(
            pivot.x + dx * c - dy * s,
            pivot.y + dx * s + dy * c,
            self.w,
            self.h,
            self.theta + angle,
        )
    }
}

impl<'de> Deserialize<'de> for RotatedBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            cx: f64,
            cy: f64,
            w: f64,
            h: f64,
            theta: f64,
        }
        let r = Raw::deserialize(d)?;
        RotatedBox::new(r.cx, r.cy, r.w, r.h, r.theta).map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned rectangle `[x1, x2] × [y1, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAlignedRect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl AxisAlignedRect {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 > x2 || y1 > y2 {
            return Err(Error::InvalidRect { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x1 && p.x <= self.x2 && p.y >= self.y1 && p.y <= self.y2
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.x1 <= other.x2 && other.x1 <= self.x2 && self.y1 <= other.y2 && other.y1 <= self.y2
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Plain axis-aligned IoU, the non-rotated baseline kernel.
    pub fn iou(&self, other: &Self) -> f64 {
        let iw = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let ih = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

/// One line of the JSONL box interchange format.
///
/// `score`/`class` accompany detections; the delta columns are only present
/// on proposal-generation inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxRecord {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl BoxRecord {
    pub fn to_box(&self) -> Result<RotatedBox> {
        RotatedBox::new(self.cx, self.cy, self.w, self.h, self.theta)
    }

    pub fn from_box(b: &RotatedBox) -> Self {
        Self {
            cx: b.cx,
            cy: b.cy,
            w: b.w,
            h: b.h,
            theta: b.theta,
            ..Self::default()
        }
    }
}

/// Reads JSONL box records; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<BoxRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BoxRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            format: "jsonl",
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        if let Some(s) = rec.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Format {
                    format: "jsonl",
                    reason: format!("line {}: score {s} outside [0, 1]", lineno + 1),
                });
            }
        }
        rec.to_box().map_err(|e| Error::Format {
            format: "jsonl",
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, records: &[BoxRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec).map_err(|e| Error::Format {
            format: "jsonl",
            reason: e.to_string(),
        })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

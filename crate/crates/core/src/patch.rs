//! Upright patch extraction for predicted rotated boxes.
//!
//! Boxes that spill over the image border are never clipped. Instead the
//! bounding-rectangle crop is zero-padded and the final warp samples
//! implicit zeros, so the patch keeps every character inside the box.
//!
//! Pixel `(i, j)` is centered at continuous `(i + 0.5, j + 0.5)`.

use crate::error::{invalid, Result};
use crate::image::ImageBuffer;
use crate::rbox::{sin_cos_deg, AxisAlignedRect, RotatedBox};

/// Integer pixel window, possibly extending past the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelWindow {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
}

impl PixelWindow {
    /// Rounds `rect` outward to whole pixels.
    pub fn enclosing(rect: &AxisAlignedRect) -> Result<Self> {
        let x0 = rect.x1.floor();
        let y0 = rect.y1.floor();
        let x1 = rect.x2.ceil();
        let y1 = rect.y2.ceil();
        if !(x1 > x0 && y1 > y0) {
            return Err(invalid(
                "rect",
                format!("{rect:?} is degenerate after outward rounding"),
            ));
        }
        Ok(Self {
            x0: x0 as i64,
            y0: y0 as i64,
            width: (x1 - x0) as usize,
            height: (y1 - y0) as usize,
        })
    }

    pub fn expanded(&self, margin: usize) -> Self {
        Self {
            x0: self.x0 - margin as i64,
            y0: self.y0 - margin as i64,
            width: self.width + 2 * margin,
            height: self.height + 2 * margin,
        }
    }
}

fn crop_window(img: &ImageBuffer, win: &PixelWindow) -> ImageBuffer {
    let ch = img.channels();
    let mut out = ImageBuffer::filled(win.width, win.height, ch, 0).expect("valid dimensions");
    for v in 0..win.height {
        let gy = win.y0 + v as i64;
        if gy < 0 || gy >= img.height() as i64 {
            continue;
        }
        for u in 0..win.width {
            let gx = win.x0 + u as i64;
            if gx < 0 || gx >= img.width() as i64 {
                continue;
            }
            for c in 0..ch {
                out.set(u, v, c, img.get(gx as usize, gy as usize, c));
            }
        }
    }
    out
}

/// Copies `rect` (rounded outward) out of `img`, zero-filling whatever lies
/// beyond the image.
pub fn crop_rect(img: &ImageBuffer, rect: &AxisAlignedRect) -> Result<ImageBuffer> {
    Ok(crop_window(img, &PixelWindow::enclosing(rect)?))
}

/// Zero-pads `img` so that `center` sits at the geometric center of the
/// result. Returns the padded buffer and the `(left, top)` padding applied.
///
/// Padding is whole pixels, so the point ends up within a quarter pixel of
/// the center; it is exact whenever `2·center` is integral.
pub fn pad_to_center(img: &ImageBuffer, center: (f64, f64)) -> (ImageBuffer, (usize, usize)) {
    let split = |extent: usize, c: f64| -> (usize, usize) {
        let deficit = (extent as f64 - 2.0 * c).round();
        if deficit >= 0.0 {
            (deficit as usize, 0)
        } else {
            (0, (-deficit) as usize)
        }
    };
    let (left, right) = split(img.width(), center.0);
    let (top, bottom) = split(img.height(), center.1);
    if left + right + top + bottom == 0 {
        return (img.clone(), (0, 0));
    }
    let win = PixelWindow {
        x0: -(left as i64),
        y0: -(top as i64),
        width: img.width() + left + right,
        height: img.height() + top + bottom,
    };
    (crop_window(img, &win), (left, top))
}

fn patch_size(b: &RotatedBox) -> Result<(usize, usize)> {
    if b.w() < 1.0 || b.h() < 1.0 {
        return Err(invalid(
            "box",
            format!("sub-pixel extent {}x{}", b.w(), b.h()),
        ));
    }
    Ok((b.w().round() as usize, b.h().round() as usize))
}

/// Bilinear warp of `b` out of `src`, whose pixel `(0, 0)` sits at global
/// pixel `origin`. Sample coordinates are computed in the global frame, so
/// the result does not depend on where `src` was cut from.
fn warp_from(src: &ImageBuffer, origin: (i64, i64), b: &RotatedBox) -> Result<ImageBuffer> {
    let (pw, ph) = patch_size(b)?;
    let ch = src.channels();
    let (s, c) = sin_cos_deg(b.theta());
    let mut out = ImageBuffer::filled(pw, ph, ch, 0)?;
    let mut px = vec![0u8; ch];
    for v in 0..ph {
        let ly = v as f64 - b.h() / 2.0 + 0.5;
        for u in 0..pw {
            let lx = u as f64 - b.w() / 2.0 + 0.5;
            let x = b.cx() + lx * c - ly * s;
            let y = b.cy() + lx * s + ly * c;
            src.bilinear_into(x, y, origin, &mut px);
            for (k, &val) in px.iter().enumerate() {
                out.set(u, v, k, val);
            }
        }
    }
    Ok(out)
}

/// Rotates and crops `b` out of `img` in one step, producing a
/// `round(w) × round(h)` patch whose rows run along the box width.
pub fn warp_rotate_crop(img: &ImageBuffer, b: &RotatedBox) -> Result<ImageBuffer> {
    warp_from(img, (0, 0), b)
}

/// Staged extraction: crop the box's bounding rectangle (plus a one-pixel
/// ring for the interpolation footprint), zero-pad it around the box center,
/// then warp. Produces the same pixels as [`warp_rotate_crop`] while only
/// touching the neighbourhood of the box.
pub fn extract_patch(img: &ImageBuffer, b: &RotatedBox) -> Result<ImageBuffer> {
    patch_size(b)?;
    let win = PixelWindow::enclosing(&b.horizontal_bounding_rect())?.expanded(1);
    let crop = crop_window(img, &win);
    let center = (b.cx() - win.x0 as f64, b.cy() - win.y0 as f64);
    let (padded, (left, top)) = pad_to_center(&crop, center);
    warp_from(&padded, (win.x0 - left as i64, win.y0 - top as i64), b)
}

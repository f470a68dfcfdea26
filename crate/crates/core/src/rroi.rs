//! Rotated RoI Align over dense feature maps.
//!
//! Feature cell `(x, y)` holds its value at continuous coordinate `(x, y)`.
//! Samples falling outside the map interpolate against implicit zeros, so
//! boxes that cross or leave the map need no filtering.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rbox::{sin_cos_deg, RotatedBox};

const RTEN_MAGIC: &[u8; 4] = b"RTEN";
const RTEN_VERSION: u32 = 1;

/// Dense `channels × height × width` map, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                what: "tensor data vs C*H*W",
                left: data.len(),
                right: expected,
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "tensor data",
                value: *v as f64,
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Builds a tensor from `f(c, y, x)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Stacks tensors of identical spatial size along the channel axis.
    pub fn concat_channels(parts: &[Tensor]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Ok(Self::zeros(0, 0, 0));
        };
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if (p.height, p.width) != (first.height, first.width) {
                return Err(invalid("concat", "spatial dimensions differ"));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Self::new(channels, first.height, first.width, data)
    }

    /// Reads the RTEN container: `"RTEN"`, then little-endian u32 version,
    /// ndim (3), C, H, W, followed by C·H·W little-endian f32 values.
    pub fn read_rten<R: Read>(mut reader: R) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            format: "RTEN",
            reason,
        };
        let mut magic = [0u8; 4];
        reader
            .read_exact(&mut magic)
            .map_err(|e| fail(format!("header: {e}")))?;
        if &magic != RTEN_MAGIC {
            return Err(fail(format!("bad magic {magic:?}")));
        }
        let mut read_u32 = |what: &str| -> Result<u32> {
            let mut b = [0u8; 4];
            reader
                .read_exact(&mut b)
                .map_err(|e| fail(format!("{what}: {e}")))?;
            Ok(u32::from_le_bytes(b))
        };
        let version = read_u32("version")?;
        if version != RTEN_VERSION {
            return Err(fail(format!("unsupported version {version}")));
        }
        let ndim = read_u32("ndim")?;
        if ndim != 3 {
            return Err(fail(format!("expected ndim 3, got {ndim}")));
        }
        let c = read_u32("dim C")? as usize;
        let h = read_u32("dim H")? as usize;
        let w = read_u32("dim W")? as usize;
        let n = c
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| fail("dimensions overflow".into()))?;
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() != n * 4 {
            return Err(fail(format!(
                "expected {} payload bytes, found {}",
                n * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(c, h, w, data).map_err(|e| fail(e.to_string()))
    }

    pub fn write_rten<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(RTEN_MAGIC)?;
        for v in [
            RTEN_VERSION,
            3,
            self.channels as u32,
            self.height as u32,
            self.width as u32,
        ] {
            writer.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        writer.write_all(&buf)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiAlignConfig {
    pub pooled_h: usize,
    pub pooled_w: usize,
    /// Feature cells per image pixel (1/16 for a stride-16 map).
    pub spatial_scale: f64,
    /// Samples per bin along each axis; 0 picks `ceil(bin extent)`.
    pub sampling_ratio: usize,
}

impl Default for RoiAlignConfig {
    fn default() -> Self {
        Self {
            pooled_h: 7,
            pooled_w: 7,
            spatial_scale: 1.0 / 16.0,
            sampling_ratio: 2,
        }
    }
}

impl RoiAlignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pooled_h == 0 || self.pooled_w == 0 {
            return Err(invalid("pooled dims", "must be at least 1x1"));
        }
        if !(self.spatial_scale.is_finite() && self.spatial_scale > 0.0) {
            return Err(invalid(
                "spatial_scale",
                format!("{} is not > 0", self.spatial_scale),
            ));
        }
        Ok(())
    }
}

/// Neighbour offsets and weights of one bilinear sample; an index of `None`
/// marks an implicit zero.
#[derive(Clone, Copy)]
struct Tap {
    idx: [Option<usize>; 4],
    wt: [f64; 4],
}

impl Tap {
    fn new(height: usize, width: usize, x: f64, y: f64) -> Self {
        let (w, h) = (width as f64, height as f64);
        if !(x >= -1.0 && x <= w && y >= -1.0 && y <= h) {
            return Self {
                idx: [None; 4],
                wt: [0.0; 4],
            };
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let at = |xi: i64, yi: i64| {
            (xi >= 0 && yi >= 0 && (xi as usize) < width && (yi as usize) < height)
                .then(|| yi as usize * width + xi as usize)
        };
        Self {
            idx: [
                at(x0, y0),
                at(x0 + 1, y0),
                at(x0, y0 + 1),
                at(x0 + 1, y0 + 1),
            ],
            wt: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        }
    }

    #[inline]
    fn apply(&self, plane: &[f32]) -> f64 {
        let mut v = 0.0;
        for k in 0..4 {
            if let Some(i) = self.idx[k] {
                v += self.wt[k] * plane[i] as f64;
            }
        }
        v
    }
}

/// Bilinear interpolation at continuous `(x, y)`; zero outside
/// `[-1, width] × [-1, height]`.
pub fn bilinear_sample(t: &Tensor, channel: usize, x: f64, y: f64) -> Result<f64> {
    if channel >= t.channels {
        return Err(invalid("channel", format!("{channel} >= {}", t.channels)));
    }
    Ok(Tap::new(t.height, t.width, x, y).apply(t.plane(channel)))
}

/// Pools a rotated region into a `channels × pooled_h × pooled_w` tensor.
///
/// Output rows run along the box height and columns along its width, so a
/// correctly oriented text box pools as upright text.
pub fn rroi_align(t: &Tensor, roi: &RotatedBox, cfg: &RoiAlignConfig) -> Result<Tensor> {
    cfg.validate()?;
    let scale = cfg.spatial_scale;
    let (cx, cy) = (roi.cx() * scale, roi.cy() * scale);
    let (rw, rh) = (roi.w() * scale, roi.h() * scale);
    let bin_w = rw / cfg.pooled_w as f64;
    let bin_h = rh / cfg.pooled_h as f64;
    let (sx, sy) = if cfg.sampling_ratio > 0 {
        (cfg.sampling_ratio, cfg.sampling_ratio)
    } else {
        (
            bin_w.ceil().max(1.0) as usize,
            bin_h.ceil().max(1.0) as usize,
        )
    };
    let (s, c) = sin_cos_deg(roi.theta());

    // One tap list per bin, shared by all channels.
    let bins: Vec<Vec<Tap>> = (0..cfg.pooled_h * cfg.pooled_w)
        .map(|b| {
            let (ph, pw) = (b / cfg.pooled_w, b % cfg.pooled_w);
            let mut taps = Vec::with_capacity(sx * sy);
            for iy in 0..sy {
                let ly = -rh / 2.0 + ph as f64 * bin_h + (iy as f64 + 0.5) * bin_h / sy as f64;
                for ix in 0..sx {
                    let lx = -rw / 2.0 + pw as f64 * bin_w + (ix as f64 + 0.5) * bin_w / sx as f64;
                    let x = cx + lx * c - ly * s;
                    let y = cy + lx * s + ly * c;
                    taps.push(Tap::new(t.height, t.width, x, y));
                }
            }
            taps
        })
        .collect();

    let count = (sx * sy) as f64;
    let mut data = Vec::with_capacity(t.channels * bins.len());
    for ch in 0..t.channels {
        let plane = t.plane(ch);
        data.extend(bins.iter().map(|taps| {
            let sum: f64 = taps.iter().map(|tap| tap.apply(plane)).sum();
            (sum / count) as f32
        }));
    }
    Ok(Tensor {
        channels: t.channels,
        height: cfg.pooled_h,
        width: cfg.pooled_w,
        data,
    })
}

/// [`rroi_align`] over many regions of one shared map.
pub fn rroi_align_batch(
    t: &Tensor,
    rois: &[RotatedBox],
    cfg: &RoiAlignConfig,
) -> Result<Vec<Tensor>> {
    rois.par_iter().map(|r| rroi_align(t, r, cfg)).collect()
}

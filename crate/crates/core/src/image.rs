//! 8-bit raster buffers and binary PGM/PPM I/O.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};

/// Row-major, channel-interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(invalid("channels", format!("{channels} (expected 1 or 3)")));
        }
        if data.len() != width * height * channels {
            return Err(Error::LengthMismatch {
                what: "image data vs W*H*C",
                left: data.len(),
                right: width * height * channels,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Pixel value with zero extension in every direction.
    #[inline]
    pub fn get_or_zero(&self, x: i64, y: i64, c: usize) -> u8 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0
        } else {
            self.get(x as usize, y as usize, c)
        }
    }

    /// Bilinear sample at continuous `(x, y)` (pixel centers at `+0.5`), with
    /// zero extension. `origin` is the global position of this buffer's pixel
    /// `(0, 0)`; `x`/`y` are global. Results round half away from zero.
    pub(crate) fn bilinear_into(&self, x: f64, y: f64, origin: (i64, i64), out: &mut [u8]) {
        let (x, y) = (x - 0.5, y - 0.5);
        let (xf, yf) = (x.floor(), y.floor());
        let (fx, fy) = (x - xf, y - yf);
        let (ix, iy) = (xf as i64 - origin.0, yf as i64 - origin.1);
        let taps = [
            (ix, iy, (1.0 - fx) * (1.0 - fy)),
            (ix + 1, iy, fx * (1.0 - fy)),
            (ix, iy + 1, (1.0 - fx) * fy),
            (ix + 1, iy + 1, fx * fy),
        ];
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let mut acc = 0.0f64;
            for &(tx, ty, wt) in &taps {
                if wt != 0.0 {
                    acc += wt * self.get_or_zero(tx, ty, c) as f64;
                }
            }
            *o = acc.round().clamp(0.0, 255.0) as u8;
        }
    }

    /// Reads a binary PGM (P5) or PPM (P6) with maxval 255.
    pub fn read_pnm<R: BufRead>(mut reader: R) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            format: "PNM",
            reason,
        };
        let mut magic = [0u8; 2];
        reader
            .read_exact(&mut magic)
            .map_err(|e| fail(format!("magic: {e}")))?;
        let channels = match &magic {
            b"P5" => 1,
            b"P6" => 3,
            other => {
                return Err(fail(format!(
                    "unsupported magic {:?}",
                    String::from_utf8_lossy(other)
                )))
            }
        };
        let width = read_header_uint(&mut reader)?;
        let height = read_header_uint(&mut reader)?;
        let maxval = read_header_uint(&mut reader)?;
        if maxval != 255 {
            return Err(fail(format!("maxval {maxval} (only 255 is supported)")));
        }
        let mut data = vec![0u8; width * height * channels];
        reader
            .read_exact(&mut data)
            .map_err(|e| fail(format!("pixel data: {e}")))?;
        Self::new(width, height, channels, data)
    }

    pub fn write_pnm<W: Write>(&self, mut writer: W) -> Result<()> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        write!(writer, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        writer.write_all(&self.data)?;
        Ok(())
    }
}

/// Parses one whitespace-delimited header integer, skipping `#` comments.
/// Consumes exactly one whitespace byte after the number.
fn read_header_uint<R: BufRead>(reader: &mut R) -> Result<usize> {
    let fail = |reason: &str| Error::Format {
        format: "PNM",
        reason: reason.to_string(),
    };
    let mut byte = [0u8; 1];
    let mut next = |r: &mut R| -> Result<u8> {
        r.read_exact(&mut byte)
            .map_err(|_| fail("truncated header"))?;
        Ok(byte[0])
    };
    let mut b = next(reader)?;
    loop {
        if b == b'#' {
            while b != b'\n' {
                b = next(reader)?;
            }
        } else if !b.is_ascii_whitespace() {
            break;
        }
        b = next(reader)?;
    }
    let mut value: usize = 0;
    if !b.is_ascii_digit() {
        return Err(fail("expected a header number"));
    }
    while b.is_ascii_digit() {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as usize))
            .ok_or_else(|| fail("header number overflows"))?;
        b = next(reader)?;
    }
    if !b.is_ascii_whitespace() {
        return Err(fail("header number not followed by whitespace"));
    }
    Ok(value)
}

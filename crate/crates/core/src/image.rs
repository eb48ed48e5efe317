//! 8-bit RGBA images and their PNG / PPM encodings.

use std::io::Cursor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("png: {0}")]
    Png(String),
    #[error("ppm: {0}")]
    Ppm(String),
    #[error("unsupported png layout {0}")]
    UnsupportedLayout(String),
}

/// Counters collected while rendering one image.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RenderStats {
    pub rays: u64,
    pub samples_taken: u64,
    pub samples_skipped: u64,
    pub blocks_visited: u64,
    pub blocks_total: u64,
    pub blocks_empty: u64,
    pub wall_time_ms: f64,
}

/// Row-major straight-alpha RGBA, 8 bits per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgba {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    pub stats: RenderStats,
}

impl ImageRgba {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize * 4, "pixel buffer size");
        Self {
            width,
            height,
            pixels,
            stats: RenderStats::default(),
        }
    }

    pub fn filled(width: u32, height: u32, rgba: [u8; 4]) -> Self {
        Self::new(width, height, rgba.repeat(width as usize * height as usize))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        [
            self.pixels[i],
            self.pixels[i + 1],
            self.pixels[i + 2],
            self.pixels[i + 3],
        ]
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Self {
        let mut out = Vec::with_capacity(w as usize * h as usize * 4);
        for row in y..y + h {
            let start = (row as usize * self.width as usize + x as usize) * 4;
            out.extend_from_slice(&self.pixels[start..start + w as usize * 4]);
        }
        Self::new(w, h, out)
    }

    /// Largest absolute per-channel difference, or `None` if sizes differ.
    pub fn max_channel_diff(&self, other: &Self) -> Option<u8> {
        if (self.width, self.height) != (other.width, other.height) {
            return None;
        }
        Some(
            self.pixels
                .iter()
                .zip(&other.pixels)
                .map(|(a, b)| a.abs_diff(*b))
                .max()
                .unwrap_or(0),
        )
    }

    pub fn encode_png(&self) -> Vec<u8> {
        encode_png(self.width, self.height, png::ColorType::Rgba, &self.pixels)
    }

    /// Binary PPM (P6); alpha is dropped.
    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for px in self.pixels.chunks_exact(4) {
            out.extend_from_slice(&px[..3]);
        }
        out
    }

    /// Decodes 8-bit grayscale, gray+alpha, RGB or RGBA PNGs.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImageError> {
        let decoder = png::Decoder::new(Cursor::new(bytes));
        let mut reader = decoder.read_info().map_err(|e| ImageError::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| ImageError::Png(e.to_string()))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(ImageError::UnsupportedLayout(format!("{:?}", info.bit_depth)));
        }
        let data = &buf[..info.buffer_size()];
        let pixels: Vec<u8> = match info.color_type {
            png::ColorType::Rgba => data.to_vec(),
            png::ColorType::Rgb => data.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect(),
            png::ColorType::Grayscale => data.iter().flat_map(|&g| [g, g, g, 255]).collect(),
            png::ColorType::GrayscaleAlpha => data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0], p[1]]).collect(),
            other => return Err(ImageError::UnsupportedLayout(format!("{other:?}"))),
        };
        Ok(Self::new(info.width, info.height, pixels))
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        let bad = |m: &str| ImageError::Ppm(m.to_string());
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad("only 8-bit P6 is supported"));
        }
        let w: u32 = fields[1].parse().map_err(|_| bad("width"))?;
        let h: u32 = fields[2].parse().map_err(|_| bad("height"))?;
        let body = &bytes[pos + 1..];
        if body.len() != w as usize * h as usize * 3 {
            return Err(bad("payload size"));
        }
        Ok(Self::new(
            w,
            h,
            body.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect(),
        ))
    }
}

fn encode_png(width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("png header into memory");
        writer.write_image_data(data).expect("png body into memory");
    }
    out
}

/// Encodes an 8-bit single-channel image as grayscale PNG.
pub fn encode_gray_png(width: u32, height: u32, data: &[u8]) -> Vec<u8> {
    assert_eq!(data.len(), width as usize * height as usize);
    encode_png(width, height, png::ColorType::Grayscale, data)
}

/// Maps a CT value through a linear window: `level ± window/2` spans
/// `[0, 255]`, clamped outside. The level itself maps to 128.
pub fn window_level(value: f64, window: f64, level: f64) -> u8 {
    let t = (value - level) / window.max(f64::MIN_POSITIVE) + 0.5;
    (t.clamp(0.0, 1.0) * 255.0).round() as u8
}

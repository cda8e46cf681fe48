use std::io::Write;

use super::MemoryError;
use crate::heatmap::Heatmap;

pub const DEFAULT_CELL_PX: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Danger,
    Affinity,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Danger => "danger",
            Channel::Affinity => "affinity",
        }
    }

    fn rgb(self) -> [u8; 3] {
        match self {
            Channel::Danger => [255, 0, 0],
            Channel::Affinity => [0, 255, 0],
        }
    }
}

/// Row-major RGBA8 buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbaImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RgbaImage {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = ((y * self.width + x) * 4) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2], self.pixels[i + 3]]
    }
}

/// Paints each cell as a `cell_px` square of the channel colour with opacity `round(255 * v)`.
/// Values are clamped to `[0, 1]`; `cell_px` of zero is treated as one.
pub fn render_heatmap(map: &Heatmap, channel: Channel, cell_px: u32) -> RgbaImage {
    let px = cell_px.max(1);
    let (w, h) = (map.width() as u32 * px, map.height() as u32 * px);
    let [r, g, b] = channel.rgb();
    let mut pixels = Vec::with_capacity((w * h * 4) as usize);
    for y in 0..h {
        for x in 0..w {
            let v = map.values()[(y / px) as usize * map.width() + (x / px) as usize];
            let a = (255.0 * v.clamp(0.0, 1.0)).round() as u8;
            pixels.extend_from_slice(&[r, g, b, a]);
        }
    }
    RgbaImage { width: w, height: h, pixels }
}

pub fn write_png<W: Write>(image: &RgbaImage, out: W) -> Result<(), MemoryError> {
    let mut enc = png::Encoder::new(out, image.width, image.height);
    enc.set_color(png::ColorType::Rgba);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| MemoryError::Encoding(e.to_string()))?;
    writer
        .write_image_data(&image.pixels)
        .map_err(|e| MemoryError::Encoding(e.to_string()))?;
    writer.finish().map_err(|e| MemoryError::Encoding(e.to_string()))
}

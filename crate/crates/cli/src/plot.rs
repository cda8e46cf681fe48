use atlas_core::memory::RgbaImage;

use crate::artifacts::WaterfallRow;

const BAR: u32 = 10;
const GAP: u32 = 2;
const MARGIN: u32 = 10;
const HALF: u32 = 90;

/// Stacked bars per step: env, danger, affinity, format. Positive parts grow up
/// from the zero line, negative parts grow down.
pub fn waterfall_plot(rows: &[WaterfallRow]) -> RgbaImage {
    let width = 2 * MARGIN + rows.len().max(1) as u32 * (BAR + GAP);
    let height = 2 * MARGIN + 2 * HALF + 1;
    let mut pixels = vec![255u8; (width * height * 4) as usize];
    let colours: [[u8; 3]; 4] = [[66, 133, 244], [255, 140, 0], [0, 170, 0], [128, 128, 128]];
    let scale = rows
        .iter()
        .flat_map(|r| {
            let parts = [r.env, r.danger, r.affinity, r.format];
            let up: f64 = parts.iter().filter(|v| **v > 0.0).sum();
            let down: f64 = parts.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
            [up, down]
        })
        .fold(0.0f64, f64::max);
    let zero = MARGIN + HALF;
    let mut paint = |x0: u32, y0: u32, y1: u32, c: [u8; 3]| {
        for y in y0.min(y1)..y0.max(y1) {
            for x in x0..x0 + BAR {
                let i = ((y * width + x) * 4) as usize;
                pixels[i..i + 4].copy_from_slice(&[c[0], c[1], c[2], 255]);
            }
        }
    };
    if scale > 0.0 {
        for (s, r) in rows.iter().enumerate() {
            let x = MARGIN + s as u32 * (BAR + GAP);
            let (mut up, mut down) = (0.0, 0.0);
            for (v, c) in [r.env, r.danger, r.affinity, r.format].into_iter().zip(colours) {
                let px = |t: f64| (t / scale * HALF as f64).round() as u32;
                if v > 0.0 {
                    paint(x, zero - px(up + v), zero - px(up), c);
                    up += v;
                } else if v < 0.0 {
                    paint(x, zero + px(down), zero + px(down - v), c);
                    down -= v;
                }
            }
        }
    }
    for x in 0..width {
        let i = ((zero * width + x) * 4) as usize;
        pixels[i..i + 4].copy_from_slice(&[0, 0, 0, 255]);
    }
    RgbaImage { width, height, pixels }
}

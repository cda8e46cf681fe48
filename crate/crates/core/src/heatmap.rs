use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gridworld::GridCoord;

/// Dense per-cell field of values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(GridCoord) -> f64) -> Self {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| GridCoord::new(x, y)))
            .map(&mut f)
            .collect();
        Self { width, height, values }
    }

    /// Wraps raw row-major values. Returns `None` on a length mismatch.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Option<Self> {
        (values.len() == width * height).then_some(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn in_bounds(&self, c: GridCoord) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn get(&self, c: GridCoord) -> Option<f64> {
        self.in_bounds(c).then(|| self.values[c.y * self.width + c.x])
    }

    /// Panics when `c` is out of bounds.
    pub fn at(&self, c: GridCoord) -> f64 {
        self.get(c).unwrap_or_else(|| panic!("{c} outside {}x{} heatmap", self.width, self.height))
    }

    pub fn set(&mut self, c: GridCoord, v: f64) {
        assert!(self.in_bounds(c), "{c} outside {}x{} heatmap", self.width, self.height);
        self.values[c.y * self.width + c.x] = v;
    }

    pub fn add(&mut self, c: GridCoord, v: f64) {
        let cur = self.at(c);
        self.set(c, cur + v);
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Cellwise combination of two equally sized maps. Panics on a dimension mismatch.
    pub fn zip_with(&self, other: &Heatmap, f: impl Fn(f64, f64) -> f64) -> Heatmap {
        assert_eq!(self.dims(), other.dims(), "heatmap dimension mismatch");
        Heatmap {
            width: self.width,
            height: self.height,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Heatmap {
        Heatmap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped(&self) -> Heatmap {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn max_abs_diff(&self, other: &Heatmap) -> f64 {
        assert_eq!(self.dims(), other.dims(), "heatmap dimension mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// SHA-256 over dimensions and the exact bit patterns of every value.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        for v in &self.values {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().into()
    }
}

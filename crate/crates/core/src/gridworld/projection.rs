use super::types::GridCoord;
use super::GridError;

/// Cell size used when projecting navigable floor space onto a grid.
pub const DEFAULT_RESOLUTION_M: f64 = 0.25;

// Quotients this close to an integer are snapped to it, so that a point on a
// cell boundary lands in the higher cell despite float division error
// (0.3 / 0.1 = 2.9999999999999996).
const BOUNDARY_EPS: f64 = 1e-9;

/// Quantizes a continuous floor-plane position to a cell: `floor((pos - origin) / resolution)`
/// per axis, with boundary points assigned to the higher-index cell.
pub fn project_continuous(pos_x: f64, pos_z: f64, origin: (f64, f64), resolution: f64) -> Result<GridCoord, GridError> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(GridError::InvalidParameter(format!("resolution must be positive, got {resolution}")));
    }
    let x = quantize(pos_x - origin.0, resolution);
    let z = quantize(pos_z - origin.1, resolution);
    match (x, z) {
        (Some(x), Some(z)) if x >= 0 && z >= 0 => Ok(GridCoord::new(x as usize, z as usize)),
        _ => Err(GridError::OutOfBounds(format!(
            "position ({pos_x}, {pos_z}) projects outside the grid anchored at ({}, {})",
            origin.0, origin.1
        ))),
    }
}

fn quantize(offset: f64, resolution: f64) -> Option<i64> {
    let q = offset / resolution;
    if !q.is_finite() {
        return None;
    }
    let nearest = q.round();
    let cell = if (q - nearest).abs() < BOUNDARY_EPS { nearest } else { q.floor() };
    Some(cell as i64)
}

/// Centre of a cell in continuous coordinates; the inverse of [`project_continuous`] up to quantization.
pub fn cell_center(cell: GridCoord, origin: (f64, f64), resolution: f64) -> (f64, f64) {
    (
        origin.0 + (cell.x as f64 + 0.5) * resolution,
        origin.1 + (cell.y as f64 + 0.5) * resolution,
    )
}

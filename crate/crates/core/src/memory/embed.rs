use crate::gridworld::{CellKind, GridState, Terminal};

pub const EMBEDDING_DIM: usize = 64;
const POOL: usize = 4;

/// Maps a frame to a fixed-length feature vector for similarity retrieval.
pub trait FrameEncoder {
    fn dim(&self) -> usize;
    fn embed(&self, frame: &GridState) -> Vec<f64>;
}

/// Hand-built structural embedding of a frame.
///
/// Layout (64 values, L2-normalized):
/// - `0..48`: wall / target-or-goal / hole occupancy, max-pooled onto a 4x4 grid, channel-major
/// - `48..52`: player position `(x, y, 1-x, 1-y)` normalized to `[0, 1]`
/// - `52..56`: box centroid in the same form (zeros without boxes)
/// - `56..60`: fraction of boxes on target, fraction off target, mean box-to-target
///   distance and player-to-centroid distance, both normalized by the grid perimeter
/// - `60..64`: one-hot terminal status
#[derive(Debug, Clone, Copy, Default)]
pub struct StructuralEncoder;

impl FrameEncoder for StructuralEncoder {
    fn dim(&self) -> usize {
        EMBEDDING_DIM
    }

    fn embed(&self, frame: &GridState) -> Vec<f64> {
        let layout = &*frame.layout;
        let (w, h) = (layout.width, layout.height);
        let mut v = vec![0.0; EMBEDDING_DIM];

        for c in layout.coords() {
            let channel = match layout.cell(c) {
                CellKind::Wall => 0,
                CellKind::Target | CellKind::Goal => 1,
                CellKind::Hole => 2,
                CellKind::Floor | CellKind::Start => continue,
            };
            let px = c.x * POOL / w;
            let py = c.y * POOL / h;
            v[channel * POOL * POOL + py * POOL + px] = 1.0;
        }

        let nx = |x: f64| if w > 1 { x / (w - 1) as f64 } else { 0.0 };
        let ny = |y: f64| if h > 1 { y / (h - 1) as f64 } else { 0.0 };
        let (px, py) = (nx(frame.player.x as f64), ny(frame.player.y as f64));
        v[48..52].copy_from_slice(&[px, py, 1.0 - px, 1.0 - py]);

        let perimeter = (w + h).max(1) as f64;
        if !frame.boxes.is_empty() {
            let n = frame.boxes.len() as f64;
            let cx = frame.boxes.iter().map(|b| b.x as f64).sum::<f64>() / n;
            let cy = frame.boxes.iter().map(|b| b.y as f64).sum::<f64>() / n;
            let (bx, by) = (nx(cx), ny(cy));
            v[52..56].copy_from_slice(&[bx, by, 1.0 - bx, 1.0 - by]);

            let on = frame.boxes_on_target() as f64 / n;
            let targets = layout.goal_cells();
            let mean_gap = frame
                .boxes
                .iter()
                .map(|b| targets.iter().map(|t| t.manhattan(*b)).min().unwrap_or(0) as f64)
                .sum::<f64>()
                / n;
            let player_gap = (frame.player.x as f64 - cx).abs() + (frame.player.y as f64 - cy).abs();
            v[56..60].copy_from_slice(&[on, 1.0 - on, mean_gap / perimeter, player_gap / perimeter]);
        }

        let status = match frame.terminal {
            Terminal::Running => 60,
            Terminal::Success => 61,
            Terminal::Failure => 62,
            Terminal::Timeout => 63,
        };
        v[status] = 1.0;

        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        v
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_frozenlake, generate_sokoban, GridCoord};

    #[test]
    fn identical_frames_have_unit_similarity() {
        let s = generate_sokoban(5, 6, 6, 1).unwrap();
        let e = StructuralEncoder;
        let a = e.embed(&s);
        assert_eq!(a.len(), EMBEDDING_DIM);
        assert!((cosine_similarity(&a, &a) - 1.0).abs() < 1e-12);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn player_position_changes_the_embedding() {
        let s = generate_frozenlake(2, 6, 6, 0.0).unwrap();
        let mut t = s.clone();
        // (0,0) and (1,0) share a pooled cell on a 6-wide grid.
        t.player = GridCoord::new(1, 0);
        let e = StructuralEncoder;
        assert!(cosine_similarity(&e.embed(&s), &e.embed(&t)) < 1.0);
    }

    #[test]
    fn embedding_is_bitwise_deterministic() {
        let s = generate_sokoban(9, 7, 6, 2).unwrap();
        let e = StructuralEncoder;
        let first: Vec<u64> = e.embed(&s).iter().map(|x| x.to_bits()).collect();
        for _ in 0..1000 {
            let again: Vec<u64> = e.embed(&s).iter().map(|x| x.to_bits()).collect();
            assert_eq!(again, first);
        }
    }
}

//! Seeded level generators.
//!
//! Sokoban levels are produced by reverse play: boxes start on their targets
//! and the player walks backwards, pulling them away. Every pull is the
//! inverse of a legal push, so the resulting position is solvable by
//! construction. FrozenLake levels are rejection-sampled until the goal is
//! reachable from the start.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::types::{CellKind, Direction, EnvKind, GridCoord, GridLayout, GridState};
use super::GridError;

pub const GENERATION_RETRY_BUDGET: u32 = 1000;
const REVERSE_WALKS: usize = 8;

/// (boxes off target, total box displacement, pulls made); larger is harder.
type WalkScore = (usize, usize, usize);

pub fn generate_sokoban(seed: u64, width: usize, height: usize, n_boxes: usize) -> Result<GridState, GridError> {
    let infeasible = |reason: String| GridError::InfeasibleGeneration {
        budget: GENERATION_RETRY_BUDGET,
        reason,
    };
    if width < 4 || height < 4 {
        return Err(infeasible(format!("sokoban needs at least 4x4, got {width}x{height}")));
    }
    if n_boxes == 0 {
        return Err(infeasible("sokoban needs at least one box".into()));
    }
    let interior = (width - 2) * (height - 2);
    if interior < n_boxes + 1 {
        return Err(infeasible(format!(
            "{n_boxes} boxes and a player do not fit in {interior} interior cells"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_RETRY_BUDGET {
        if let Some(state) = sokoban_attempt(&mut rng, seed, width, height, n_boxes) {
            return Ok(state);
        }
    }
    Err(infeasible(format!(
        "no position with a displaced box found for {width}x{height} with {n_boxes} boxes"
    )))
}

fn sokoban_attempt(rng: &mut ChaCha8Rng, seed: u64, width: usize, height: usize, n_boxes: usize) -> Option<GridState> {
    let mut cells = vec![CellKind::Floor; width * height];
    for y in 0..height {
        for x in 0..width {
            if x == 0 || y == 0 || x == width - 1 || y == height - 1 {
                cells[y * width + x] = CellKind::Wall;
            }
        }
    }

    // A few interior walls, each kept only if the floor stays connected.
    let interior: Vec<usize> = (1..height - 1)
        .flat_map(|y| (1..width - 1).map(move |x| y * width + x))
        .collect();
    let extra_walls = rng.gen_range(0..=interior.len() / 8);
    for _ in 0..extra_walls {
        let idx = *interior.choose(rng)?;
        if cells[idx] != CellKind::Floor {
            continue;
        }
        cells[idx] = CellKind::Wall;
        if !floor_connected(&cells, width, height) {
            cells[idx] = CellKind::Floor;
        }
    }

    let mut floor: Vec<GridCoord> = interior
        .iter()
        .filter(|&&i| cells[i] == CellKind::Floor)
        .map(|&i| GridCoord::new(i % width, i / width))
        .collect();
    if floor.len() < n_boxes + 1 {
        return None;
    }
    floor.shuffle(rng);
    let targets: Vec<GridCoord> = floor[..n_boxes].to_vec();
    for t in &targets {
        cells[t.y * width + t.x] = CellKind::Target;
    }
    let layout = GridLayout::from_cells(EnvKind::Sokoban, width, height, cells, seed);

    // Several independent reverse walks; keep the most displaced position seen.
    let mut best: Option<(WalkScore, GridCoord, Vec<GridCoord>)> = None;
    let pulls = 4 * floor.len();
    for _ in 0..REVERSE_WALKS {
        let mut boxes = targets.clone();
        let mut player = floor[n_boxes];
        let mut pulled = 0;
        for _ in 0..pulls {
            let dir = Direction::ALL[rng.gen_range(0..4)];
            let Some(dest) = layout.neighbor(player, dir) else { continue };
            if !layout.cell(dest).is_open() || boxes.contains(&dest) {
                continue;
            }
            let behind = layout.neighbor(player, dir.opposite());
            let pull = behind.and_then(|b| boxes.iter().position(|&x| x == b));
            let old = player;
            player = dest;
            if let Some(i) = pull {
                if rng.gen_bool(0.75) {
                    boxes[i] = old;
                    pulled += 1;
                }
            }
            let (off, dist) = displacement_score(&layout, &boxes);
            let score = (off, dist, pulled);
            if off > 0 && best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, player, boxes.clone()));
            }
        }
    }

    let (_, player, boxes) = best?;
    // The player may start anywhere it could walk to without touching a box.
    let reachable: Vec<GridCoord> = layout
        .coords()
        .filter(|&c| player_reachable(&layout, &boxes, player, c))
        .collect();
    let player = *reachable.choose(rng)?;
    Some(GridState::new(Arc::new(layout), player, boxes))
}

fn player_reachable(layout: &GridLayout, boxes: &[GridCoord], from: GridCoord, to: GridCoord) -> bool {
    let passable: Vec<CellKind> = layout
        .coords()
        .map(|c| if boxes.contains(&c) { CellKind::Wall } else { layout.cell(c) })
        .collect();
    if passable[to.y * layout.width + to.x] == CellKind::Wall {
        return false;
    }
    flood(&passable, layout.width, layout.height, from.y * layout.width + from.x, |k| k != CellKind::Wall)
        [to.y * layout.width + to.x]
}

/// (boxes off target, summed distance from each box to its nearest target)
fn displacement_score(layout: &GridLayout, boxes: &[GridCoord]) -> (usize, usize) {
    let targets = layout.cells_of(CellKind::Target);
    let off = boxes.iter().filter(|&&b| layout.cell(b) != CellKind::Target).count();
    let dist = boxes
        .iter()
        .map(|&b| targets.iter().map(|&t| t.manhattan(b)).min().unwrap_or(0))
        .sum();
    (off, dist)
}

fn floor_connected(cells: &[CellKind], width: usize, height: usize) -> bool {
    let open: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] != CellKind::Wall).collect();
    let Some(&start) = open.first() else { return false };
    let seen = flood(cells, width, height, start, |k| k != CellKind::Wall);
    open.iter().all(|&i| seen[i])
}

fn flood(cells: &[CellKind], width: usize, height: usize, start: usize, passable: impl Fn(CellKind) -> bool) -> Vec<bool> {
    let mut seen = vec![false; cells.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        let c = GridCoord::new(i % width, i / width);
        for dir in Direction::ALL {
            if let Some(n) = c.step(dir, width, height) {
                let j = n.y * width + n.x;
                if !seen[j] && passable(cells[j]) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    seen
}

pub fn generate_frozenlake(seed: u64, width: usize, height: usize, hole_fraction: f64) -> Result<GridState, GridError> {
    if !(0.0..1.0).contains(&hole_fraction) {
        return Err(GridError::InvalidParameter(format!(
            "hole_fraction must lie in [0, 1), got {hole_fraction}"
        )));
    }
    if width == 0 || height == 0 || width * height < 2 {
        return Err(GridError::InfeasibleGeneration {
            budget: GENERATION_RETRY_BUDGET,
            reason: format!("frozenlake needs two distinct corners, got {width}x{height}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = GridCoord::new(0, 0);
    let goal = GridCoord::new(width - 1, height - 1);
    for _ in 0..GENERATION_RETRY_BUDGET {
        let mut cells: Vec<CellKind> = (0..width * height)
            .map(|_| {
                if rng.gen_bool(hole_fraction) {
                    CellKind::Hole
                } else {
                    CellKind::Floor
                }
            })
            .collect();
        cells[0] = CellKind::Start;
        cells[goal.y * width + goal.x] = CellKind::Goal;
        let seen = flood(&cells, width, height, 0, |k| k != CellKind::Hole && k != CellKind::Wall);
        if seen[goal.y * width + goal.x] {
            let layout = GridLayout::from_cells(EnvKind::FrozenLake, width, height, cells, seed);
            return Ok(GridState::new(Arc::new(layout), start, Vec::new()));
        }
    }
    Err(GridError::InfeasibleGeneration {
        budget: GENERATION_RETRY_BUDGET,
        reason: format!("no {width}x{height} layout with hole fraction {hole_fraction} had a start-goal path"),
    })
}

/// Path-existence check used to validate generated levels.
///
/// FrozenLake: the goal is reachable from the start without crossing a hole.
/// Sokoban: every non-wall cell is reachable from the player.
pub fn validate_reachability(state: &GridState) -> bool {
    let layout = &*state.layout;
    let cells = layout.cells();
    let (w, h) = (layout.width, layout.height);
    match layout.kind {
        EnvKind::FrozenLake => {
            let starts = layout.cells_of(CellKind::Start);
            let goals = layout.cells_of(CellKind::Goal);
            if starts.len() != 1 || goals.len() != 1 {
                return false;
            }
            let s = starts[0];
            let seen = flood(cells, w, h, s.y * w + s.x, |k| k != CellKind::Hole && k != CellKind::Wall);
            seen[goals[0].y * w + goals[0].x]
        }
        EnvKind::Sokoban => {
            let p = state.player;
            let seen = flood(cells, w, h, p.y * w + p.x, |k| k != CellKind::Wall);
            (0..cells.len()).all(|i| cells[i] == CellKind::Wall || seen[i])
        }
    }
}

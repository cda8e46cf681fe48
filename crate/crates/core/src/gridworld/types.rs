use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Integer cell coordinate: `x` is the column, `y` the row (row 0 at the top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCoord {
    pub x: usize,
    pub y: usize,
}

impl GridCoord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Neighbour one step in `dir`, or `None` when it would leave a `width` x `height` grid.
    pub fn step(self, dir: Direction, width: usize, height: usize) -> Option<GridCoord> {
        let (dx, dy) = dir.delta();
        let x = self.x as isize + dx;
        let y = self.y as isize + dy;
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            None
        } else {
            Some(GridCoord::new(x as usize, y as usize))
        }
    }

    pub fn manhattan(self, other: GridCoord) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for GridCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Floor,
    Wall,
    Target,
    Hole,
    Goal,
    Start,
}

impl CellKind {
    /// Cells an entity may stand on. Holes are enterable (and fatal).
    pub fn is_open(self) -> bool {
        !matches!(self, CellKind::Wall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Sokoban,
    FrozenLake,
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Sokoban => "sokoban",
            EnvKind::FrozenLake => "frozenlake",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Up => 0,
            Direction::Down => 1,
            Direction::Left => 2,
            Direction::Right => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Direction::ALL.get(i).copied()
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

/// A policy emission. `Malformed` models an output that could not be parsed
/// into one of the four moves; it costs the format penalty and moves nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Move(Direction),
    Malformed,
}

impl Action {
    pub fn is_well_formed(self) -> bool {
        matches!(self, Action::Move(_))
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Action::Move(d) => Some(d),
            Action::Malformed => None,
        }
    }
}

impl From<Direction> for Action {
    fn from(d: Direction) -> Self {
        Action::Move(d)
    }
}

/// Immutable level geometry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridLayout {
    pub kind: EnvKind,
    pub width: usize,
    pub height: usize,
    cells: Vec<CellKind>,
    pub seed: u64,
}

impl GridLayout {
    /// Builds a layout from row-major cells. Panics if `cells.len() != width * height`.
    pub fn from_cells(kind: EnvKind, width: usize, height: usize, cells: Vec<CellKind>, seed: u64) -> Self {
        assert_eq!(cells.len(), width * height, "cell buffer does not match dimensions");
        Self { kind, width, height, cells, seed }
    }

    pub fn cell(&self, c: GridCoord) -> CellKind {
        self.cells[c.y * self.width + c.x]
    }

    pub fn get(&self, c: GridCoord) -> Option<CellKind> {
        self.in_bounds(c).then(|| self.cell(c))
    }

    pub fn in_bounds(&self, c: GridCoord) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }

    pub fn coords(&self) -> impl Iterator<Item = GridCoord> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| GridCoord::new(x, y)))
    }

    pub fn neighbor(&self, c: GridCoord, dir: Direction) -> Option<GridCoord> {
        c.step(dir, self.width, self.height)
    }

    /// Out-of-bounds counts as wall.
    pub fn is_wall_or_edge(&self, c: GridCoord, dir: Direction) -> bool {
        match self.neighbor(c, dir) {
            Some(n) => self.cell(n) == CellKind::Wall,
            None => true,
        }
    }

    pub fn cells_of(&self, kind: CellKind) -> Vec<GridCoord> {
        self.coords().filter(|&c| self.cell(c) == kind).collect()
    }

    /// Goal set for the affinity field: targets in Sokoban, the Goal in FrozenLake.
    pub fn goal_cells(&self) -> Vec<GridCoord> {
        match self.kind {
            EnvKind::Sokoban => self.cells_of(CellKind::Target),
            EnvKind::FrozenLake => self.cells_of(CellKind::Goal),
        }
    }

    /// A non-target floor cell with a wall on one vertical and one horizontal side.
    pub fn is_dead_corner(&self, c: GridCoord) -> bool {
        let kind = self.cell(c);
        if kind == CellKind::Wall || kind == CellKind::Target {
            return false;
        }
        let vertical = self.is_wall_or_edge(c, Direction::Up) || self.is_wall_or_edge(c, Direction::Down);
        let horizontal = self.is_wall_or_edge(c, Direction::Left) || self.is_wall_or_edge(c, Direction::Right);
        vertical && horizontal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terminal {
    Running,
    Success,
    Failure,
    /// Step budget exhausted. Scored and aggregated as a failure.
    Timeout,
}

impl Terminal {
    pub fn is_terminal(self) -> bool {
        self != Terminal::Running
    }
}

pub const DEFAULT_STEP_BUDGET: u32 = 100;

/// Privileged per-step simulator snapshot. Cheap to clone: the layout is shared.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    pub layout: Arc<GridLayout>,
    pub player: GridCoord,
    /// Kept sorted so that equal configurations compare and hash equal.
    pub boxes: Vec<GridCoord>,
    pub step_index: u32,
    pub step_budget: u32,
    pub terminal: Terminal,
}

impl GridState {
    pub fn new(layout: Arc<GridLayout>, player: GridCoord, mut boxes: Vec<GridCoord>) -> Self {
        boxes.sort();
        let mut state = Self {
            layout,
            player,
            boxes,
            step_index: 0,
            step_budget: DEFAULT_STEP_BUDGET,
            terminal: Terminal::Running,
        };
        if state.success_holds() {
            state.terminal = Terminal::Success;
        }
        state
    }

    pub fn with_step_budget(mut self, budget: u32) -> Self {
        self.step_budget = budget;
        self
    }

    pub fn has_box(&self, c: GridCoord) -> bool {
        self.boxes.binary_search(&c).is_ok()
    }

    pub fn boxes_on_target(&self) -> usize {
        self.boxes.iter().filter(|&&b| self.layout.cell(b) == CellKind::Target).count()
    }

    pub fn success_holds(&self) -> bool {
        match self.layout.kind {
            EnvKind::Sokoban => !self.boxes.is_empty() && self.boxes_on_target() == self.boxes.len(),
            EnvKind::FrozenLake => self.layout.cell(self.player) == CellKind::Goal,
        }
    }

    /// Position of the primary manipulated entity when no push is in progress.
    pub fn resting_coord(&self) -> GridCoord {
        self.player
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// Primary-entity position after the step: the pushed box on a push, otherwise the player.
    pub coord: GridCoord,
    pub action: Action,
    pub env_reward: f64,
    pub format_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
            Outcome::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub initial_coord: GridCoord,
    pub outcome: Outcome,
    pub layout_seed: u64,
}

impl Trajectory {
    /// Where the primary entity ended up; the initial coordinate for an empty trajectory.
    pub fn terminal_coord(&self) -> GridCoord {
        self.steps.last().map_or(self.initial_coord, |s| s.coord)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

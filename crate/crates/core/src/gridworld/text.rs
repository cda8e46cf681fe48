//! Plain-text level format.
//!
//! First line `W H`, then `H` rows of `W` characters, each line ending in
//! `\n`. Base symbols: `#` wall, `.` floor, `T` target, `B` box, `P` player,
//! `H` hole, `G` goal, `S` start. Where an entity sits on a special cell the
//! overlap gets its own symbol so that serialization stays lossless:
//! `*` box on target, `+` player on target, and lowercase `s`/`g`/`h` for the
//! player on start/goal/hole.

use std::fmt::Write as _;
use std::sync::Arc;

use super::types::{CellKind, EnvKind, GridCoord, GridLayout, GridState};
use super::GridError;

pub fn state_to_text(state: &GridState) -> String {
    let layout = &*state.layout;
    let mut out = String::with_capacity((layout.width + 1) * (layout.height + 1) + 8);
    writeln!(out, "{} {}", layout.width, layout.height).unwrap();
    for y in 0..layout.height {
        for x in 0..layout.width {
            let c = GridCoord::new(x, y);
            let kind = layout.cell(c);
            let ch = if state.player == c {
                match kind {
                    CellKind::Target => '+',
                    CellKind::Start => 's',
                    CellKind::Goal => 'g',
                    CellKind::Hole => 'h',
                    _ => 'P',
                }
            } else if state.has_box(c) {
                if kind == CellKind::Target {
                    '*'
                } else {
                    'B'
                }
            } else {
                cell_char(kind)
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

/// Layout only, without player or boxes.
pub fn layout_to_text(layout: &GridLayout) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", layout.width, layout.height).unwrap();
    for y in 0..layout.height {
        for x in 0..layout.width {
            out.push(cell_char(layout.cell(GridCoord::new(x, y))));
        }
        out.push('\n');
    }
    out
}

fn cell_char(kind: CellKind) -> char {
    match kind {
        CellKind::Floor => '.',
        CellKind::Wall => '#',
        CellKind::Target => 'T',
        CellKind::Hole => 'H',
        CellKind::Goal => 'G',
        CellKind::Start => 'S',
    }
}

pub fn parse_state(text: &str, seed: u64) -> Result<GridState, GridError> {
    let err = |line: usize, msg: String| GridError::Parse { line, msg };
    let mut lines = text.split_terminator('\n');
    let header = lines.next().ok_or_else(|| err(1, "empty input".into()))?;
    let mut dims = header.split(' ');
    let mut dim = |name: &str| -> Result<usize, GridError> {
        dims.next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| err(1, format!("header must be `W H`, could not read {name}")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    if width == 0 || height == 0 {
        return Err(err(1, "dimensions must be positive".into()));
    }

    let mut cells = Vec::with_capacity(width * height);
    let mut player = None;
    let mut boxes = Vec::new();
    let mut frozen = false;
    for y in 0..height {
        let row = lines
            .next()
            .ok_or_else(|| err(y + 2, format!("expected {height} rows, found {y}")))?;
        if row.chars().count() != width {
            return Err(err(y + 2, format!("expected {width} cells, found {}", row.chars().count())));
        }
        for (x, ch) in row.chars().enumerate() {
            let c = GridCoord::new(x, y);
            let (kind, has_player, has_box) = match ch {
                '#' => (CellKind::Wall, false, false),
                '.' => (CellKind::Floor, false, false),
                'T' => (CellKind::Target, false, false),
                'H' => (CellKind::Hole, false, false),
                'G' => (CellKind::Goal, false, false),
                'S' => (CellKind::Start, false, false),
                'B' => (CellKind::Floor, false, true),
                '*' => (CellKind::Target, false, true),
                'P' => (CellKind::Floor, true, false),
                '+' => (CellKind::Target, true, false),
                's' => (CellKind::Start, true, false),
                'g' => (CellKind::Goal, true, false),
                'h' => (CellKind::Hole, true, false),
                other => return Err(err(y + 2, format!("unknown cell symbol {other:?}"))),
            };
            frozen |= matches!(kind, CellKind::Hole | CellKind::Goal | CellKind::Start);
            if has_player && player.replace(c).is_some() {
                return Err(err(y + 2, "more than one player".into()));
            }
            if has_box {
                boxes.push(c);
            }
            cells.push(kind);
        }
    }
    if lines.next().is_some() {
        return Err(err(height + 2, "trailing content after the last row".into()));
    }
    let player = player.ok_or_else(|| err(1, "no player symbol".into()))?;
    let kind = if frozen { EnvKind::FrozenLake } else { EnvKind::Sokoban };
    if kind == EnvKind::FrozenLake && !boxes.is_empty() {
        return Err(err(1, "boxes are not allowed in a frozenlake layout".into()));
    }
    let layout = GridLayout::from_cells(kind, width, height, cells, seed);
    Ok(GridState::new(Arc::new(layout), player, boxes))
}

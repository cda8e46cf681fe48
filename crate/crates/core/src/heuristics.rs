//! Static spatial priors computed from layout geometry alone.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::gridworld::{CellKind, Direction, EnvKind, GridCoord, GridLayout};
pub use crate::heatmap::Heatmap;

/// Row-major BFS distances; `None` marks cells that cannot reach any source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    pub dist: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn get(&self, c: GridCoord) -> Option<u32> {
        if c.x < self.width && c.y < self.height {
            self.dist[c.y * self.width + c.x]
        } else {
            None
        }
    }

    pub fn max_finite(&self) -> Option<u32> {
        self.dist.iter().flatten().copied().max()
    }
}

/// Walls and holes block movement for distance purposes.
pub fn is_passable(kind: CellKind) -> bool {
    !matches!(kind, CellKind::Wall | CellKind::Hole)
}

/// Multi-source 4-connected BFS from `targets`. An empty target set yields an all-absent field.
pub fn bfs_distance_field(layout: &GridLayout, targets: &[GridCoord]) -> DistanceField {
    let (w, h) = (layout.width, layout.height);
    let mut dist = vec![None; w * h];
    let mut queue = VecDeque::new();
    for &t in targets {
        debug_assert!(layout.in_bounds(t), "target {t} out of bounds");
        let i = t.y * w + t.x;
        if dist[i].is_none() {
            dist[i] = Some(0);
            queue.push_back(t);
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = dist[c.y * w + c.x].expect("queued cells carry a distance");
        for dir in Direction::ALL {
            let Some(n) = layout.neighbor(c, dir) else { continue };
            let j = n.y * w + n.x;
            if dist[j].is_none() && is_passable(layout.cell(n)) {
                dist[j] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    DistanceField { width: w, height: h, dist }
}

/// Attenuation magnitudes for the danger heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DangerParams {
    pub corner: f64,
    pub wall_adjacent: f64,
    pub hole: f64,
    pub hole_adjacent: f64,
}

impl Default for DangerParams {
    fn default() -> Self {
        Self {
            corner: 1.0,
            wall_adjacent: 0.4,
            hole: 1.0,
            hole_adjacent: 0.6,
        }
    }
}

/// Goal proximity `1 - d/d_max` over cells that can reach a goal; 0 elsewhere.
pub fn affinity_heuristic(layout: &GridLayout) -> Heatmap {
    let field = bfs_distance_field(layout, &layout.goal_cells());
    affinity_from_field(&field)
}

pub fn affinity_from_field(field: &DistanceField) -> Heatmap {
    let d_max = field.max_finite().unwrap_or(0);
    Heatmap::from_fn(field.width, field.height, |c| match field.get(c) {
        None => 0.0,
        Some(_) if d_max == 0 => 1.0,
        Some(d) => 1.0 - d as f64 / d_max as f64,
    })
}

pub fn danger_heuristic(layout: &GridLayout) -> Heatmap {
    danger_heuristic_with(layout, &DangerParams::default())
}

pub fn danger_heuristic_with(layout: &GridLayout, params: &DangerParams) -> Heatmap {
    Heatmap::from_fn(layout.width, layout.height, |c| {
        let kind = layout.cell(c);
        match layout.kind {
            EnvKind::Sokoban => {
                if matches!(kind, CellKind::Wall | CellKind::Target) {
                    0.0
                } else if layout.is_dead_corner(c) {
                    params.corner
                } else if Direction::ALL.iter().any(|&d| layout.is_wall_or_edge(c, d)) {
                    params.wall_adjacent
                } else {
                    0.0
                }
            }
            EnvKind::FrozenLake => match kind {
                CellKind::Hole => params.hole,
                CellKind::Goal | CellKind::Wall => 0.0,
                _ => {
                    let near_hole = Direction::ALL
                        .iter()
                        .filter_map(|&d| layout.neighbor(c, d))
                        .any(|n| layout.cell(n) == CellKind::Hole);
                    if near_hole {
                        params.hole_adjacent
                    } else {
                        0.0
                    }
                }
            },
        }
    })
    .clamped()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_frozenlake, generate_sokoban, parse_state};
    use proptest::prelude::*;
    use std::collections::BinaryHeap;
    use std::cmp::Reverse;

    fn layout(text: &str) -> GridLayout {
        (*parse_state(text, 0).unwrap().layout).clone()
    }

    /// Single-source Dijkstra from every cell to the nearest target, written
    /// independently of the BFS under test.
    fn ucs_oracle(layout: &GridLayout, targets: &[GridCoord]) -> Vec<Option<u32>> {
        layout
            .coords()
            .map(|src| {
                if !targets.contains(&src) && !is_passable(layout.cell(src)) {
                    return None;
                }
                let mut best = vec![u32::MAX; layout.width * layout.height];
                let mut heap = BinaryHeap::from([Reverse((0u32, src.x, src.y))]);
                best[src.y * layout.width + src.x] = 0;
                while let Some(Reverse((d, x, y))) = heap.pop() {
                    let c = GridCoord::new(x, y);
                    if targets.contains(&c) {
                        return Some(d);
                    }
                    if d > best[y * layout.width + x] {
                        continue;
                    }
                    for (dx, dy) in [(0i64, 1i64), (1, 0), (0, -1), (-1, 0)] {
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= layout.width as i64 || ny >= layout.height as i64 {
                            continue;
                        }
                        let n = GridCoord::new(nx as usize, ny as usize);
                        let open = is_passable(layout.cell(n)) || targets.contains(&n);
                        let k = n.y * layout.width + n.x;
                        if open && d + 1 < best[k] {
                            best[k] = d + 1;
                            heap.push(Reverse((d + 1, n.x, n.y)));
                        }
                    }
                }
                None
            })
            .collect()
    }

    #[test]
    fn bfs_on_empty_3x3() {
        let l = layout("3 3\nP..\n...\n..T\n");
        let f = bfs_distance_field(&l, &[GridCoord::new(0, 0)]);
        assert_eq!(f.get(GridCoord::new(2, 2)), Some(4));
        assert_eq!(f.get(GridCoord::new(0, 0)), Some(0));
        assert_eq!(ucs_oracle(&l, &[GridCoord::new(0, 0)]), f.dist);
    }

    #[test]
    fn bfs_walled_off_cell_is_absent() {
        let l = layout("5 3\nP.#.T\n..#..\n..#..\n");
        let f = bfs_distance_field(&l, &[GridCoord::new(0, 0)]);
        assert_eq!(f.get(GridCoord::new(4, 0)), None);
        assert_eq!(f.get(GridCoord::new(2, 0)), None);
        assert_eq!(f.get(GridCoord::new(1, 2)), Some(3));
    }

    #[test]
    fn frozenlake_empty_4x4_distance_is_six() {
        let s = generate_frozenlake(1, 4, 4, 0.0).unwrap();
        let f = bfs_distance_field(&s.layout, &s.layout.goal_cells());
        assert_eq!(f.get(GridCoord::new(0, 0)), Some(6));
    }

    #[test]
    fn affinity_values() {
        let l = layout("3 3\nT..\n.P.\n...\n");
        let a = affinity_heuristic(&l);
        assert_eq!(a.at(GridCoord::new(0, 0)), 1.0);
        assert_eq!(a.at(GridCoord::new(1, 1)), 0.5);
        assert_eq!(a.at(GridCoord::new(2, 2)), 0.0);
        let single = layout("1 1\n+\n");
        assert_eq!(affinity_heuristic(&single).at(GridCoord::new(0, 0)), 1.0);
        let walled = layout("5 3\n#####\n#P#T#\n#####\n");
        assert_eq!(affinity_heuristic(&walled).at(GridCoord::new(1, 1)), 0.0);
        assert_eq!(affinity_heuristic(&walled).at(GridCoord::new(3, 1)), 1.0);
    }

    #[test]
    fn sokoban_danger_rules() {
        let l = layout("6 5\n######\n#P..T#\n#....#\n#....#\n######\n");
        let d = danger_heuristic(&l);
        assert_eq!(d.at(GridCoord::new(1, 1)), 1.0, "walls above and left");
        assert_eq!(d.at(GridCoord::new(2, 1)), 0.4);
        assert_eq!(d.at(GridCoord::new(4, 1)), 0.0, "target corner is safe");
        assert_eq!(d.at(GridCoord::new(2, 2)), 0.0);
        assert_eq!(d.at(GridCoord::new(0, 0)), 0.0, "walls are never occupied");
    }

    #[test]
    fn frozenlake_danger_rules() {
        let l = layout("4 4\ns...\n.H..\n....\n...G\n");
        let d = danger_heuristic(&l);
        assert_eq!(d.at(GridCoord::new(1, 1)), 1.0);
        assert_eq!(d.at(GridCoord::new(1, 0)), 0.6);
        assert_eq!(d.at(GridCoord::new(2, 1)), 0.6);
        assert_eq!(d.at(GridCoord::new(2, 2)), 0.0);
        assert_eq!(d.at(GridCoord::new(3, 3)), 0.0);
    }

    proptest! {
        #[test]
        fn bfs_matches_ucs(seed in any::<u64>(), w in 5usize..9, h in 5usize..9, frozen in any::<bool>()) {
            let s = if frozen { generate_frozenlake(seed, w, h, 0.3).unwrap() } else { generate_sokoban(seed, w, h, 1).unwrap() };
            let goals = s.layout.goal_cells();
            prop_assert_eq!(bfs_distance_field(&s.layout, &goals).dist, ucs_oracle(&s.layout, &goals));
        }

        #[test]
        fn heuristic_maps_are_unit_bounded_and_goals_are_safe(seed in any::<u64>(), w in 2usize..9, h in 2usize..9) {
            let f = generate_frozenlake(seed, w, h, 0.3).unwrap();
            let maps = vec![(f.layout.clone(), danger_heuristic(&f.layout), affinity_heuristic(&f.layout))];
            let maps = if w >= 5 && h >= 5 {
                let s = generate_sokoban(seed, w, h, 2).unwrap();
                let mut m = maps;
                m.push((s.layout.clone(), danger_heuristic(&s.layout), affinity_heuristic(&s.layout)));
                m
            } else { maps };
            for (l, d, a) in maps {
                prop_assert!(d.values().iter().chain(a.values()).all(|v| (0.0..=1.0).contains(v)));
                for g in l.goal_cells() {
                    prop_assert_eq!(d.at(g), 0.0);
                    prop_assert_eq!(a.at(g), 1.0);
                }
            }
        }

        #[test]
        fn affinity_strictly_increases_toward_goal(seed in any::<u64>()) {
            let s = generate_sokoban(seed, 7, 7, 1).unwrap();
            let field = bfs_distance_field(&s.layout, &s.layout.goal_cells());
            let a = affinity_from_field(&field);
            for c in s.layout.coords() {
                let Some(d) = field.get(c) else { continue };
                for dir in Direction::ALL {
                    let Some(n) = s.layout.neighbor(c, dir) else { continue };
                    match field.get(n) {
                        Some(dn) if dn < d => prop_assert!(a.at(n) > a.at(c)),
                        Some(dn) if dn > d => prop_assert!(a.at(n) < a.at(c)),
                        _ => {}
                    }
                }
            }
        }
    }
}

//! Benchmark environments: gridworld mazes with mirrored twins, and a 1-D push chain.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{GwilError, Result};
use crate::mdp::{RigidMap, TabularMetricMdp};

/// `(x, y)` with `x` the column and `y` counted up from the bottom row.
pub type Cell = (usize, usize);

pub const ACTION_NAMES: [&str; 4] = ["up", "down", "left", "right"];
pub const ACTION_DIRS: [(i64, i64); 4] = [(0, 1), (0, -1), (-1, 0), (1, 0)];
/// Action relabeling under a left-right mirror.
pub const MIRROR_ACTIONS: [usize; 4] = [0, 1, 3, 2];

pub const DEFAULT_MAZE_GAMMA: f64 = 0.99;
pub const CHAIN_GAMMA: f64 = 0.95;

fn default_gamma() -> f64 {
    DEFAULT_MAZE_GAMMA
}

fn default_goal_reward() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub walls: Vec<Cell>,
    pub start: Cell,
    pub goal: Cell,
    #[serde(default)]
    pub step_reward: f64,
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    #[serde(default)]
    pub sparse: bool,
    #[serde(default)]
    pub slip_prob: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

impl MazeSpec {
    /// Parses rows top to bottom: `#` wall, `S` start, `G` goal, `.` free.
    pub fn from_ascii(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 {
            return Err(GwilError::InvalidMaze("empty maze".into()));
        }
        let (mut walls, mut start, mut goal) = (Vec::new(), None, None);
        for (row, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(GwilError::InvalidMaze(format!("row {row} has a different width")));
            }
            let y = height - 1 - row;
            for (x, ch) in line.chars().enumerate() {
                match ch {
                    '#' => walls.push((x, y)),
                    'S' if start.is_none() => start = Some((x, y)),
                    'G' if goal.is_none() => goal = Some((x, y)),
                    '.' => {}
                    'S' | 'G' => return Err(GwilError::InvalidMaze(format!("duplicate '{ch}'"))),
                    other => return Err(GwilError::InvalidMaze(format!("unexpected character {other:?}"))),
                }
            }
        }
        walls.sort_by_key(|&(x, y)| (y, x));
        Ok(Self {
            width,
            height,
            walls,
            start: start.ok_or_else(|| GwilError::InvalidMaze("no start 'S'".into()))?,
            goal: goal.ok_or_else(|| GwilError::InvalidMaze("no goal 'G'".into()))?,
            step_reward: 0.0,
            goal_reward: default_goal_reward(),
            sparse: false,
            slip_prob: 0.0,
            gamma: DEFAULT_MAZE_GAMMA,
        })
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                out.push(match (x, y) {
                    c if c == self.start => 'S',
                    c if c == self.goal => 'G',
                    c if self.walls.contains(&c) => '#',
                    _ => '.',
                });
            }
            out.push('\n');
        }
        out
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls.contains(&c)
    }

    /// Free cells in state-index order (bottom row first, left to right).
    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&c| !self.is_wall(c))
            .collect()
    }

    fn step(&self, c: Cell, dir: (i64, i64)) -> Cell {
        let nx = c.0 as i64 + dir.0;
        let ny = c.1 as i64 + dir.1;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            return c;
        }
        let next = (nx as usize, ny as usize);
        if self.is_wall(next) {
            c
        } else {
            next
        }
    }

    pub fn validate(&self) -> Result<()> {
        let inside = |c: Cell| c.0 < self.width && c.1 < self.height;
        if !inside(self.start) || !inside(self.goal) {
            return Err(GwilError::InvalidMaze("start or goal outside the grid".into()));
        }
        if self.start == self.goal {
            return Err(GwilError::InvalidMaze("start equals goal".into()));
        }
        if self.is_wall(self.start) || self.is_wall(self.goal) {
            return Err(GwilError::InvalidMaze("start or goal is a wall".into()));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(GwilError::InvalidMaze(format!("slip_prob {} not in [0, 1)", self.slip_prob)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(GwilError::InvalidMaze(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        if self.shortest_path_len().is_none() {
            return Err(GwilError::Disconnected);
        }
        Ok(())
    }

    /// BFS distance from start to goal in moves.
    pub fn shortest_path_len(&self) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.width * self.height];
        let idx = |c: Cell| c.1 * self.width + c.0;
        let mut queue = VecDeque::from([self.start]);
        dist[idx(self.start)] = 0;
        while let Some(c) = queue.pop_front() {
            if c == self.goal {
                return Some(dist[idx(c)]);
            }
            for dir in ACTION_DIRS {
                let n = self.step(c, dir);
                if dist[idx(n)] == usize::MAX {
                    dist[idx(n)] = dist[idx(c)] + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Mirror map of cell-center coordinates about the vertical center axis.
    pub fn mirror_map(&self) -> RigidMap {
        RigidMap::mirror_x(2, self.width as f64 / 2.0)
    }
}

/// Gridworld MDP: states are free cells, actions up/down/left/right.
pub fn build_maze(spec: &MazeSpec) -> Result<TabularMetricMdp> {
    spec.validate()?;
    let cells = spec.free_cells();
    let ns = cells.len();
    let index_of = |c: Cell| cells.iter().position(|&d| d == c).expect("free cell");
    let goal = index_of(spec.goal);

    let mut transitions = Array3::zeros((ns, 4, ns));
    let mut rewards = Array2::zeros((ns, 4));
    for (s, &c) in cells.iter().enumerate() {
        if s == goal {
            for a in 0..4 {
                transitions[[s, a, s]] = 1.0;
            }
            continue;
        }
        for a in 0..4 {
            for (b, &dir) in ACTION_DIRS.iter().enumerate() {
                let p = if a == b { 1.0 - spec.slip_prob } else { spec.slip_prob / 3.0 };
                if p > 0.0 {
                    transitions[[s, a, index_of(spec.step(c, dir))]] += p;
                }
            }
            let reach_goal = transitions[[s, a, goal]];
            let step = if spec.sparse { 0.0 } else { spec.step_reward };
            rewards[[s, a]] = step + spec.goal_reward * reach_goal;
        }
    }

    let centers = Array2::from_shape_fn((ns, 2), |(s, k)| {
        let c = cells[s];
        if k == 0 {
            c.0 as f64 + 0.5
        } else {
            c.1 as f64 + 0.5
        }
    });
    let state_metric = Array2::from_shape_fn((ns, ns), |(s, t)| {
        let dx = centers[[s, 0]] - centers[[t, 0]];
        let dy = centers[[s, 1]] - centers[[t, 1]];
        (dx * dx + dy * dy).sqrt()
    });
    let action_features = Array2::from_shape_fn((4, 2), |(a, k)| {
        let (dx, dy) = ACTION_DIRS[a];
        if k == 0 {
            dx as f64
        } else {
            dy as f64
        }
    });
    let action_metric = Array2::from_shape_fn((4, 4), |(a, b)| {
        let dx = action_features[[a, 0]] - action_features[[b, 0]];
        let dy = action_features[[a, 1]] - action_features[[b, 1]];
        (dx * dx + dy * dy).sqrt()
    });
    let mut initial = Array1::zeros(ns);
    initial[index_of(spec.start)] = 1.0;

    let mdp = TabularMetricMdp {
        transitions,
        rewards,
        initial,
        gamma: spec.gamma,
        state_metric,
        action_metric,
        state_features: Some(centers),
        action_features: Some(action_features),
        absorbing: vec![goal],
    };
    mdp.validate()?;
    Ok(mdp)
}

/// The maze mirrored left-right, with the state map `phi` and action map `psi`
/// such that `build_maze(mirrored) == apply_isometry(build_maze(spec), phi, psi)`.
pub fn reflect_maze(spec: &MazeSpec) -> Result<(MazeSpec, Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let w = spec.width;
    let mirror = |c: Cell| (w - 1 - c.0, c.1);
    let reflected = MazeSpec {
        walls: spec.walls.iter().map(|&c| mirror(c)).collect(),
        start: mirror(spec.start),
        goal: mirror(spec.goal),
        ..spec.clone()
    };
    let from = spec.free_cells();
    let to = reflected.free_cells();
    let phi = from
        .iter()
        .map(|&c| to.iter().position(|&d| d == mirror(c)).expect("mirrored cell is free"))
        .collect();
    Ok((reflected, phi, MIRROR_ACTIONS.to_vec()))
}

/// A 1-D chain of `n` states with `k` push levels evenly spaced in `[-1, 1]`.
///
/// A push `p` moves one state in the direction of `p` with probability `|p|`
/// and otherwise stays. The last state is an absorbing goal worth 1 on entry.
pub fn build_chain_env(n: usize, k: usize) -> Result<TabularMetricMdp> {
    if n < 2 || k < 2 {
        return Err(GwilError::Config(format!("chain needs n >= 2 and k >= 2, got n={n} k={k}")));
    }
    let pushes: Vec<f64> = (0..k).map(|a| -1.0 + 2.0 * a as f64 / (k - 1) as f64).collect();
    let goal = n - 1;
    let mut transitions = Array3::zeros((n, k, n));
    let mut rewards = Array2::zeros((n, k));
    for s in 0..n {
        for (a, &p) in pushes.iter().enumerate() {
            if s == goal {
                transitions[[s, a, s]] = 1.0;
                continue;
            }
            let target = if p > 0.0 {
                s + 1
            } else if p < 0.0 {
                s.saturating_sub(1)
            } else {
                s
            };
            transitions[[s, a, target]] += p.abs();
            transitions[[s, a, s]] += 1.0 - p.abs();
            rewards[[s, a]] = transitions[[s, a, goal]];
        }
    }
    let mut initial = Array1::zeros(n);
    initial[0] = 1.0;
    let mdp = TabularMetricMdp {
        transitions,
        rewards,
        initial,
        gamma: CHAIN_GAMMA,
        state_metric: Array2::from_shape_fn((n, n), |(s, t)| (s as f64 - t as f64).abs()),
        action_metric: Array2::from_shape_fn((k, k), |(a, b)| (pushes[a] - pushes[b]).abs()),
        state_features: Some(Array2::from_shape_fn((n, 1), |(s, _)| s as f64)),
        action_features: Some(Array2::from_shape_fn((k, 1), |(a, _)| pushes[a])),
        absorbing: vec![goal],
    };
    mdp.validate()?;
    Ok(mdp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{apply_isometry, rollout, value_iteration};

    const L_MAZE: &str = "\
.....
.###.
.#...
.#.##
S#..G
";

    #[test]
    fn one_by_two() {
        let spec = MazeSpec::from_ascii("SG").unwrap();
        let mdp = build_maze(&spec).unwrap();
        assert_eq!(mdp.n_states(), 2);
        let vi = value_iteration(&mdp, 1e-12).unwrap();
        assert!((vi.expected_return - spec.goal_reward).abs() < 1e-12);
        let traj = rollout(&mdp, &vi.policy, 200, 0).unwrap();
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn open_maze_path_is_manhattan() {
        let spec = MazeSpec::from_ascii("....G\n.....\n.....\n.....\nS....").unwrap();
        let mdp = build_maze(&spec).unwrap();
        let vi = value_iteration(&mdp, 1e-12).unwrap();
        let traj = rollout(&mdp, &vi.policy, 200, 0).unwrap();
        assert_eq!(traj.len(), 8);
        assert_eq!(spec.shortest_path_len(), Some(8));
        assert!((vi.expected_return - spec.gamma.powi(7)).abs() < 1e-12);
    }

    #[test]
    fn action_metric_values() {
        let mdp = build_maze(&MazeSpec::from_ascii("SG").unwrap()).unwrap();
        assert_eq!(mdp.action_metric[[0, 1]], 2.0);
        assert!((mdp.action_metric[[0, 2]] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn disconnected_and_malformed_mazes() {
        assert!(matches!(build_maze(&MazeSpec::from_ascii("S#G").unwrap()), Err(GwilError::Disconnected)));
        assert!(MazeSpec::from_ascii("S.\n.").is_err());
        assert!(MazeSpec::from_ascii("S..").is_err());
        assert!(MazeSpec::from_ascii("SxG").is_err());
    }

    #[test]
    fn reflection_conjugates_exactly() {
        for text in [L_MAZE, "S...G", "S.#\n..G"] {
            let mut spec = MazeSpec::from_ascii(text).unwrap();
            spec.slip_prob = 0.1;
            let (mirrored, phi, psi) = reflect_maze(&spec).unwrap();
            let direct = build_maze(&mirrored).unwrap();
            let conj = apply_isometry(&build_maze(&spec).unwrap(), &phi, &psi, Some(&spec.mirror_map())).unwrap();
            assert_eq!(direct, conj, "{text}");
        }
    }

    #[test]
    fn reflection_is_an_involution() {
        let spec = MazeSpec::from_ascii(L_MAZE).unwrap();
        let (once, phi1, _) = reflect_maze(&spec).unwrap();
        let (twice, phi2, _) = reflect_maze(&once).unwrap();
        assert_eq!(twice, spec);
        assert!((0..phi1.len()).all(|s| phi2[phi1[s]] == s));
    }

    #[test]
    fn symmetric_maze_reflects_to_itself() {
        let spec = MazeSpec::from_ascii("..G..\n.#.#.\n..S..").unwrap();
        let (mirrored, phi, _) = reflect_maze(&spec).unwrap();
        let mut a = mirrored.walls.clone();
        let mut b = spec.walls.clone();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        assert_eq!((mirrored.start, mirrored.goal), (spec.start, spec.goal));
        assert!((0..phi.len()).all(|s| phi[phi[s]] == s));
    }

    #[test]
    fn l_maze_reflection_keeps_optimal_value() {
        let spec = MazeSpec::from_ascii(L_MAZE).unwrap();
        let (mirrored, _, _) = reflect_maze(&spec).unwrap();
        let a = value_iteration(&build_maze(&spec).unwrap(), 1e-12).unwrap().expected_return;
        let b = value_iteration(&build_maze(&mirrored).unwrap(), 1e-12).unwrap().expected_return;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn sparse_rewards_only_on_goal_entry() {
        let mut spec = MazeSpec::from_ascii(L_MAZE).unwrap();
        spec.step_reward = -0.1;
        spec.sparse = true;
        let mdp = build_maze(&spec).unwrap();
        for s in 0..mdp.n_states() {
            for a in 0..4 {
                let enters = mdp.transitions[[s, a, mdp.absorbing[0]]] > 0.0 && s != mdp.absorbing[0];
                assert_eq!(mdp.rewards[[s, a]] != 0.0, enters);
            }
        }
    }

    #[test]
    fn chain_env() {
        let tiny = build_chain_env(2, 2).unwrap();
        assert_eq!((tiny.n_states(), tiny.n_actions()), (2, 2));
        let chain = build_chain_env(6, 3).unwrap();
        let vi = value_iteration(&chain, 1e-12).unwrap();
        let acts = vi.policy.greedy_actions();
        assert!(acts[..5].iter().all(|&a| a == 2), "{acts:?}");
        assert!(build_chain_env(1, 3).is_err());
    }

    #[test]
    fn maze_spec_json() {
        let spec = MazeSpec::from_ascii(L_MAZE).unwrap();
        let back: MazeSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(MazeSpec::from_ascii(&spec.to_ascii()).unwrap(), spec);
    }
}

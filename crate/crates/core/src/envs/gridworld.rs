use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Action, ActionSpace, Env, EnvError, StepInfo, StepResult};

pub const TURN_LEFT: usize = 0;
pub const TURN_RIGHT: usize = 1;
pub const FORWARD: usize = 2;
pub const TOGGLE: usize = 3;
pub const GRID_ACTIONS: usize = 4;

const VIEW: usize = 7;
const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Floor,
    Wall,
    Door { open: bool },
    Goal,
}

impl Cell {
    fn name(self) -> &'static str {
        match self {
            Cell::Floor => "floor",
            Cell::Wall => "wall",
            Cell::Door { open: true } => "door_open",
            Cell::Door { open: false } => "door_closed",
            Cell::Goal => "goal",
        }
    }

    /// (object id, state id, color id) using the MiniGrid numbering.
    fn encode(self) -> [f64; 3] {
        match self {
            Cell::Floor => [1.0, 0.0, 0.0],
            Cell::Wall => [2.0, 0.0, 5.0],
            Cell::Door { open } => [4.0, if open { 0.0 } else { 1.0 }, 4.0],
            Cell::Goal => [8.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heading {
    E,
    S,
    W,
    N,
}

impl Heading {
    const ALL: [Heading; 4] = [Heading::E, Heading::S, Heading::W, Heading::N];

    fn index(self) -> usize {
        self as usize
    }

    fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    fn left(self) -> Self {
        Self::from_index(self.index() + 3)
    }

    fn right(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    /// Unit step in grid coordinates (y grows downward).
    fn delta(self) -> (i64, i64) {
        match self {
            Heading::E => (1, 0),
            Heading::S => (0, 1),
            Heading::W => (-1, 0),
            Heading::N => (0, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// Walled room, goal in the bottom-right corner, random agent pose.
    Empty,
    /// Vertical dividing wall with one closed door; agent left, goal right.
    TwoRoom,
}

impl LayoutKind {
    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::Empty => "empty",
            LayoutKind::TwoRoom => "two_room",
        }
    }
}

/// Sizes include the outer wall ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub layout: LayoutKind,
    /// Defaults to `4 * width * height`.
    #[serde(default)]
    pub max_steps: Option<u32>,
}

impl GridConfig {
    pub fn empty(size: usize) -> Self {
        Self {
            width: size,
            height: size,
            layout: LayoutKind::Empty,
            max_steps: None,
        }
    }

    pub fn two_room(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            layout: LayoutKind::TwoRoom,
            max_steps: None,
        }
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps
            .unwrap_or((4 * self.width * self.height) as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pose {
    x: usize,
    y: usize,
    heading: Heading,
    door_mask: u32,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    config: GridConfig,
    base: Vec<Cell>,
    doors: Vec<(usize, usize)>,
    pose: Pose,
    steps: u32,
    done: bool,
    /// Shortest-path distance to the goal for every (x, y, heading, door mask).
    dist: Vec<u32>,
}

impl GridWorld {
    pub fn new(config: GridConfig) -> Result<Self, EnvError> {
        let min = match config.layout {
            LayoutKind::Empty => 3,
            LayoutKind::TwoRoom => 5,
        };
        if config.width < min || config.height < 3 {
            return Err(EnvError::InvalidConfig(format!(
                "{} layout needs width >= {min} and height >= 3",
                config.layout.name()
            )));
        }
        if (config.width - 2) * (config.height - 2) < 2 {
            return Err(EnvError::InvalidConfig("room needs two interior cells".into()));
        }
        let mut env = Self {
            base: vec![Cell::Wall; config.width * config.height],
            doors: Vec::new(),
            pose: Pose {
                x: 1,
                y: 1,
                heading: Heading::E,
                door_mask: 0,
            },
            steps: 0,
            done: false,
            dist: Vec::new(),
            config,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn agent(&self) -> (usize, usize, Heading) {
        (self.pose.x, self.pose.y, self.pose.heading)
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cell_with_mask(x, y, self.pose.door_mask)
    }

    fn cell_with_mask(&self, x: usize, y: usize, mask: u32) -> Cell {
        match self.base[y * self.config.width + x] {
            Cell::Door { .. } => {
                let k = self.doors.iter().position(|&d| d == (x, y)).unwrap();
                Cell::Door {
                    open: mask & (1 << k) != 0,
                }
            }
            c => c,
        }
    }

    pub fn door_count(&self) -> usize {
        self.doors.len()
    }

    /// Places the agent explicitly; intended for tests and scripted scenes.
    pub fn set_agent(&mut self, x: usize, y: usize, heading: Heading) -> Result<(), EnvError> {
        if x >= self.config.width || y >= self.config.height || !self.standable(x, y, self.pose.door_mask) {
            return Err(EnvError::InvalidConfig(format!("({x}, {y}) is not standable")));
        }
        self.pose.x = x;
        self.pose.y = y;
        self.pose.heading = heading;
        self.done = false;
        Ok(())
    }

    fn standable(&self, x: usize, y: usize, mask: u32) -> bool {
        match self.cell_with_mask(x, y, mask) {
            Cell::Floor | Cell::Goal => true,
            Cell::Door { open } => open,
            Cell::Wall => false,
        }
    }

    fn front(&self, p: &Pose) -> Option<(usize, usize)> {
        let (dx, dy) = p.heading.delta();
        let nx = p.x as i64 + dx;
        let ny = p.y as i64 + dy;
        if nx < 0 || ny < 0 || nx >= self.config.width as i64 || ny >= self.config.height as i64 {
            None
        } else {
            Some((nx as usize, ny as usize))
        }
    }

    /// Deterministic transition. Returns the next pose and whether the move
    /// was a null move (bump or toggle on nothing).
    fn transition(&self, p: Pose, action: usize) -> (Pose, bool) {
        match action {
            TURN_LEFT => (
                Pose {
                    heading: p.heading.left(),
                    ..p
                },
                false,
            ),
            TURN_RIGHT => (
                Pose {
                    heading: p.heading.right(),
                    ..p
                },
                false,
            ),
            FORWARD => match self.front(&p) {
                Some((fx, fy)) if self.standable(fx, fy, p.door_mask) => (Pose { x: fx, y: fy, ..p }, false),
                _ => (p, true),
            },
            _ => match self.front(&p) {
                Some((fx, fy)) => match self.base[fy * self.config.width + fx] {
                    Cell::Door { .. } => {
                        let k = self.doors.iter().position(|&d| d == (fx, fy)).unwrap();
                        (
                            Pose {
                                door_mask: p.door_mask ^ (1 << k),
                                ..p
                            },
                            false,
                        )
                    }
                    _ => (p, true),
                },
                None => (p, true),
            },
        }
    }

    fn state_index(&self, p: &Pose) -> usize {
        let masks = 1usize << self.doors.len();
        ((p.y * self.config.width + p.x) * 4 + p.heading.index()) * masks + p.door_mask as usize
    }

    fn all_poses(&self) -> Vec<Pose> {
        let masks = 1u32 << self.doors.len();
        let mut out = Vec::new();
        for y in 0..self.config.height {
            for x in 0..self.config.width {
                for h in Heading::ALL {
                    for mask in 0..masks {
                        if self.standable(x, y, mask) {
                            out.push(Pose {
                                x,
                                y,
                                heading: h,
                                door_mask: mask,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn is_goal(&self, p: &Pose) -> bool {
        self.base[p.y * self.config.width + p.x] == Cell::Goal
    }

    /// Reverse BFS from every goal pose over the full (pose, door) graph.
    fn compute_distances(&mut self) {
        let masks = 1usize << self.doors.len();
        let n = self.config.width * self.config.height * 4 * masks;
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let poses = self.all_poses();
        for p in &poses {
            let from = self.state_index(p);
            for a in 0..GRID_ACTIONS {
                let (q, null) = self.transition(*p, a);
                if !null {
                    preds[self.state_index(&q)].push(from);
                }
            }
        }
        let mut dist = vec![UNREACHABLE; n];
        let mut queue = VecDeque::new();
        for p in poses.iter().filter(|p| self.is_goal(p)) {
            let i = self.state_index(p);
            dist[i] = 0;
            queue.push_back(i);
        }
        while let Some(i) = queue.pop_front() {
            for &j in &preds[i] {
                if dist[j] == UNREACHABLE {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        self.dist = dist;
    }

    fn dist_of(&self, p: &Pose) -> u32 {
        self.dist[self.state_index(p)]
    }

    /// Shortest number of actions to reach the goal from the current state.
    pub fn distance_to_goal(&self) -> Option<u32> {
        let d = self.dist_of(&self.pose);
        (d != UNREACHABLE).then_some(d)
    }

    /// Distance after taking `action` now, or `None` if it leads nowhere useful.
    pub fn distance_after(&self, action: usize) -> Option<u32> {
        let (q, _) = self.transition(self.pose, action);
        let d = self.dist_of(&q);
        (d != UNREACHABLE).then_some(d)
    }

    /// Actions on some shortest path, in index order.
    pub fn optimal_actions(&self) -> Vec<usize> {
        let Some(d) = self.distance_to_goal() else {
            return Vec::new();
        };
        (0..GRID_ACTIONS)
            .filter(|&a| d > 0 && self.distance_after(a) == Some(d - 1))
            .collect()
    }

    fn violation_of(&self, action: usize) -> bool {
        if action >= GRID_ACTIONS {
            return true;
        }
        let (q, null) = self.transition(self.pose, action);
        null || self.dist_of(&q) > self.dist_of(&self.pose)
    }

    fn generate(&mut self, rng: &mut ChaCha8Rng) {
        let (w, h) = (self.config.width, self.config.height);
        self.base = vec![Cell::Wall; w * h];
        self.doors.clear();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                self.base[y * w + x] = Cell::Floor;
            }
        }
        let (goal, spawn_xs) = match self.config.layout {
            LayoutKind::Empty => ((w - 2, h - 2), 1..w - 1),
            LayoutKind::TwoRoom => {
                let wall_x = rng.random_range(2..w - 2);
                for y in 1..h - 1 {
                    self.base[y * w + wall_x] = Cell::Wall;
                }
                let door_y = rng.random_range(1..h - 1);
                self.base[door_y * w + wall_x] = Cell::Door { open: false };
                self.doors.push((wall_x, door_y));
                let goal = (rng.random_range(wall_x + 1..w - 1), rng.random_range(1..h - 1));
                (goal, 1..wall_x)
            }
        };
        self.base[goal.1 * w + goal.0] = Cell::Goal;
        loop {
            let x = rng.random_range(spawn_xs.clone());
            let y = rng.random_range(1..h - 1);
            if (x, y) != goal {
                self.pose = Pose {
                    x,
                    y,
                    heading: Heading::from_index(rng.random_range(0..4)),
                    door_mask: 0,
                };
                break;
            }
        }
        self.compute_distances();
        debug_assert!(self.distance_to_goal().is_some(), "generated layout must be solvable");
    }

    /// Egocentric 7x7 patch with the agent at the bottom-center looking up.
    /// Each cell contributes (object, state, color) scaled to O(1).
    fn observe(&self) -> Vec<f64> {
        let mut obs = vec![0.0; VIEW * VIEW * 3];
        let fwd = self.pose.heading.delta();
        let right = (-fwd.1, fwd.0);
        for row in 0..VIEW {
            for col in 0..VIEW {
                let ahead = (VIEW - 1 - row) as i64;
                let side = col as i64 - (VIEW / 2) as i64;
                let wx = self.pose.x as i64 + ahead * fwd.0 + side * right.0;
                let wy = self.pose.y as i64 + ahead * fwd.1 + side * right.1;
                let enc = if wx < 0 || wy < 0 || wx >= self.config.width as i64 || wy >= self.config.height as i64 {
                    [0.0; 3]
                } else {
                    self.cell(wx as usize, wy as usize).encode()
                };
                let base = (row * VIEW + col) * 3;
                obs[base] = enc[0] / 10.0;
                obs[base + 1] = enc[1] / 2.0;
                obs[base + 2] = enc[2] / 5.0;
            }
        }
        obs
    }
}

impl Env for GridWorld {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.generate(&mut rng);
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let a = match action {
            Action::Discrete(a) if *a < GRID_ACTIONS => *a,
            other => return Err(EnvError::InvalidAction(other.clone())),
        };
        let violation = self.violation_of(a);
        let (next, null) = self.transition(self.pose, a);
        let bumped = null && a == FORWARD;
        self.pose = next;
        self.steps += 1;
        let success = self.is_goal(&self.pose);
        let truncated = !success && self.steps >= self.config.max_steps();
        self.done = success || truncated;
        Ok(StepResult {
            next_obs: self.observe(),
            reward: if success { 1.0 } else { 0.0 },
            cost: bumped as u8,
            done: self.done,
            info: StepInfo {
                success,
                violation,
                truncated,
            },
        })
    }

    fn observation(&self) -> Vec<f64> {
        self.observe()
    }

    fn obs_dim(&self) -> usize {
        VIEW * VIEW * 3
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { n: GRID_ACTIONS }
    }

    fn violation(&self, action: &Action) -> bool {
        match action {
            Action::Discrete(a) => self.violation_of(*a),
            Action::Continuous(_) => true,
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn completion(&self) -> f64 {
        if self.is_goal(&self.pose) {
            1.0
        } else {
            0.0
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        let cells: Vec<Vec<&str>> = (0..self.config.height)
            .map(|y| (0..self.config.width).map(|x| self.cell(x, y).name()).collect())
            .collect();
        json!({
            "kind": "gridworld",
            "width": self.config.width,
            "height": self.config.height,
            "cells": cells,
            "agent": {"x": self.pose.x, "y": self.pose.y, "heading": self.pose.heading},
            "step": self.steps,
            "max_steps": self.config.max_steps(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty6() -> GridWorld {
        GridWorld::new(GridConfig::empty(6)).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = empty6();
        let mut b = empty6();
        assert_eq!(a.reset(0), b.reset(0));
        assert_eq!(a.reset(0), a.reset(0));
        assert_eq!(a.obs_dim(), 147);
    }

    #[test]
    fn two_room_has_exactly_one_closed_door_on_the_dividing_wall() {
        let mut env = GridWorld::new(GridConfig::two_room(9, 7)).unwrap();
        for seed in [7, 0, 1, 99] {
            env.reset(seed);
            let mut doors = Vec::new();
            for y in 0..env.height() {
                for x in 0..env.width() {
                    if let Cell::Door { open } = env.cell(x, y) {
                        doors.push((x, y, open));
                    }
                }
            }
            assert_eq!(doors.len(), 1, "seed {seed}");
            let (dx, dy, open) = doors[0];
            assert!(!open);
            // every other interior cell in the door's column is wall
            for y in 1..env.height() - 1 {
                if y != dy {
                    assert_eq!(env.cell(dx, y), Cell::Wall);
                }
            }
            assert!(env.distance_to_goal().is_some());
        }
    }

    #[test]
    fn forward_onto_goal_succeeds() {
        let mut env = empty6();
        env.reset(0);
        env.set_agent(3, 4, Heading::E).unwrap();
        let r = env.step(&Action::Discrete(FORWARD)).unwrap();
        assert!(r.done && r.info.success);
        assert_eq!(r.reward, 1.0);
        assert!(!r.info.violation);
    }

    #[test]
    fn walking_into_a_wall_is_a_violation() {
        let mut env = empty6();
        env.reset(0);
        env.set_agent(1, 1, Heading::N).unwrap();
        let r = env.step(&Action::Discrete(FORWARD)).unwrap();
        assert_eq!(env.agent(), (1, 1, Heading::N));
        assert!(r.info.violation);
        assert_eq!(r.cost, 1);
    }

    #[test]
    fn stepping_after_done_is_an_error() {
        let mut env = empty6();
        env.reset(0);
        env.set_agent(3, 4, Heading::E).unwrap();
        env.step(&Action::Discrete(FORWARD)).unwrap();
        assert_eq!(env.step(&Action::Discrete(FORWARD)), Err(EnvError::EpisodeDone));
    }

    #[test]
    fn invalid_action_is_rejected() {
        let mut env = empty6();
        env.reset(0);
        assert!(matches!(env.step(&Action::Discrete(4)), Err(EnvError::InvalidAction(_))));
        assert!(matches!(
            env.step(&Action::Continuous(vec![0.0])),
            Err(EnvError::InvalidAction(_))
        ));
    }

    #[test]
    fn distances_match_hand_count() {
        let mut env = empty6();
        env.reset(0);
        // goal (4,4); from (1,1) facing E: 3 forward, right, 3 forward
        env.set_agent(1, 1, Heading::E).unwrap();
        assert_eq!(env.distance_to_goal(), Some(7));
        env.set_agent(4, 3, Heading::S).unwrap();
        assert_eq!(env.distance_to_goal(), Some(1));
        env.set_agent(4, 3, Heading::N).unwrap();
        assert_eq!(env.distance_to_goal(), Some(3));
    }

    #[test]
    fn two_room_path_goes_through_toggle() {
        let mut env = GridWorld::new(GridConfig::two_room(7, 5)).unwrap();
        env.reset(3);
        let (dx, dy) = env.doors[0];
        env.set_agent(dx - 1, dy, Heading::E).unwrap();
        assert_eq!(env.optimal_actions(), vec![TOGGLE]);
        assert!(env.violation(&Action::Discrete(FORWARD)));
    }

    #[test]
    fn snapshot_lists_every_cell() {
        let env = empty6();
        let snap = env.snapshot();
        assert_eq!(snap["cells"].as_array().unwrap().len(), 6);
        assert_eq!(snap["cells"][0].as_array().unwrap().len(), 6);
        assert_eq!(snap["cells"][4][4], "goal");
    }

    #[test]
    fn view_puts_agent_at_bottom_center() {
        let mut env = empty6();
        env.reset(0);
        env.set_agent(1, 4, Heading::N).unwrap();
        let obs = env.observation();
        let at = |row: usize, col: usize| obs[(row * VIEW + col) * 3] * 10.0;
        assert_eq!(at(6, 3), 1.0); // own cell: floor
        assert_eq!(at(6, 2), 2.0); // left of agent: west wall
        assert_eq!(at(6, 1), 0.0); // beyond the grid
        assert_eq!(at(2, 3), 2.0); // four ahead: north wall
    }
}

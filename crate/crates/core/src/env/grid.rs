use std::collections::BTreeSet;

use super::{check_action, finite_spec, stepped_after_done, Environment, StepResult};
use crate::error::{contract, Result};
use crate::mdp::{MdpSpec, Observation, TableReward};

/// `width x height` grid starting at `(0, 0)` with the goal in the opposite
/// corner. Actions: 0 = +y, 1 = -y, 2 = -x, 3 = +x. Moves into walls or off
/// the grid leave the agent in place. Entering the goal pays 1 and ends the
/// episode; episodes are capped at `4 * width * height` steps.
#[derive(Clone, Debug)]
pub struct SparseGrid {
    width: usize,
    height: usize,
    walls: BTreeSet<(usize, usize)>,
    cap: usize,
    pos: (usize, usize),
    t: usize,
    done: bool,
}

impl SparseGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::with_walls(width, height, &[])
    }

    pub fn with_walls(width: usize, height: usize, walls: &[(usize, usize)]) -> Result<Self> {
        if width == 0 || height == 0 || width * height < 2 {
            return Err(contract("grid needs at least two cells"));
        }
        let walls: BTreeSet<_> = walls.iter().copied().collect();
        let goal = (width - 1, height - 1);
        for &(x, y) in &walls {
            if x >= width || y >= height {
                return Err(contract(format!("wall ({x}, {y}) outside the grid")));
            }
            if (x, y) == (0, 0) || (x, y) == goal {
                return Err(contract("walls cannot cover the start or goal cell"));
            }
        }
        Ok(Self {
            width,
            height,
            walls,
            cap: 4 * width * height,
            pos: (0, 0),
            t: 0,
            done: false,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap.max(1);
        self
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    fn goal(&self) -> (usize, usize) {
        (self.width - 1, self.height - 1)
    }

    fn id(&self, (x, y): (usize, usize)) -> usize {
        y * self.width + x
    }

    fn cell(&self, id: usize) -> (usize, usize) {
        (id % self.width, id / self.width)
    }

    fn next(&self, (x, y): (usize, usize), action: usize) -> (usize, usize) {
        if (x, y) == self.goal() {
            return (x, y);
        }
        let target = match action {
            0 if y + 1 < self.height => (x, y + 1),
            1 if y > 0 => (x, y - 1),
            2 if x > 0 => (x - 1, y),
            3 if x + 1 < self.width => (x + 1, y),
            _ => (x, y),
        };
        if self.walls.contains(&target) {
            (x, y)
        } else {
            target
        }
    }

    fn obs(&self, (x, y): (usize, usize)) -> Observation {
        let scale = |v: usize, extent: usize| if extent > 1 { v as f64 / (extent - 1) as f64 } else { 0.0 };
        Observation::new(
            vec![scale(x, self.width), scale(y, self.height)],
            Some(self.id((x, y))),
        )
    }
}

impl Environment for SparseGrid {
    fn name(&self) -> String {
        format!("grid{}x{}", self.width, self.height)
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn feature_dim(&self) -> usize {
        2
    }

    fn step_cap(&self) -> usize {
        self.cap
    }

    fn reset(&mut self) -> Observation {
        self.pos = (0, 0);
        self.t = 0;
        self.done = false;
        self.obs(self.pos)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(stepped_after_done());
        }
        check_action(action, 4)?;
        self.pos = self.next(self.pos, action);
        self.t += 1;
        let reached = self.pos == self.goal();
        let truncated = !reached && self.t >= self.cap;
        self.done = reached || truncated;
        let (gx, gy) = self.goal();
        let distance = gx.abs_diff(self.pos.0) + gy.abs_diff(self.pos.1);
        let span = (self.width + self.height - 2).max(1);
        Ok(StepResult {
            observation: self.obs(self.pos),
            sparse_reward: if reached { 1.0 } else { 0.0 },
            dense_reward_hand: -(distance as f64) / span as f64,
            done: self.done,
            truncated,
        })
    }

    fn num_states(&self) -> Option<usize> {
        Some(self.width * self.height)
    }

    fn observation_of(&self, state: usize) -> Option<Observation> {
        (state < self.width * self.height).then(|| self.obs(self.cell(state)))
    }

    fn rewards_only_on_termination(&self) -> bool {
        true
    }

    fn as_mdp_spec(&self, gamma: f64) -> Result<(MdpSpec, TableReward)> {
        finite_spec(
            self.width * self.height,
            4,
            0,
            self.id(self.goal()),
            |s, a| self.id(self.next(self.cell(s), a)),
            gamma,
        )
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

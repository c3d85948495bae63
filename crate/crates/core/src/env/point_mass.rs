use super::{check_action, stepped_after_done, Environment, StepResult};
use crate::error::{contract, Result};
use crate::mdp::Observation;

#[derive(Clone, Debug, PartialEq)]
pub struct PointMassConfig {
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub dt: f64,
    pub acceleration: f64,
    pub max_speed: f64,
    pub cap: usize,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            goal: [0.5, 0.5],
            goal_radius: 0.1,
            dt: 0.1,
            acceleration: 1.0,
            max_speed: 1.0,
            cap: 200,
        }
    }
}

/// Point mass in the box `[-1, 1]^2` with five discrete accelerations:
/// none, +x, -x, +y, -y. Features are `[x, y, vx, vy]`. Entering the goal
/// disc pays 1 and ends the episode.
#[derive(Clone, Debug)]
pub struct PointMass {
    config: PointMassConfig,
    pos: [f64; 2],
    vel: [f64; 2],
    t: usize,
    done: bool,
}

impl PointMass {
    pub fn new(config: PointMassConfig) -> Result<Self> {
        if !(config.goal_radius > 0.0) || !(config.dt > 0.0) || config.cap == 0 {
            return Err(contract("point mass needs positive goal radius, dt and cap"));
        }
        Ok(Self {
            config,
            pos: [0.0; 2],
            vel: [0.0; 2],
            t: 0,
            done: false,
        })
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.vel
    }

    fn distance_to_goal(&self) -> f64 {
        let dx = self.pos[0] - self.config.goal[0];
        let dy = self.pos[1] - self.config.goal[1];
        (dx * dx + dy * dy).sqrt()
    }

    fn obs(&self) -> Observation {
        Observation::continuous(vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]])
    }
}

impl Environment for PointMass {
    fn name(&self) -> String {
        "pointmass".into()
    }

    fn num_actions(&self) -> usize {
        5
    }

    fn feature_dim(&self) -> usize {
        4
    }

    fn step_cap(&self) -> usize {
        self.config.cap
    }

    fn reset(&mut self) -> Observation {
        self.pos = [0.0; 2];
        self.vel = [0.0; 2];
        self.t = 0;
        self.done = false;
        self.obs()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(stepped_after_done());
        }
        check_action(action, 5)?;
        let c = &self.config;
        let accel = match action {
            1 => [c.acceleration, 0.0],
            2 => [-c.acceleration, 0.0],
            3 => [0.0, c.acceleration],
            4 => [0.0, -c.acceleration],
            _ => [0.0, 0.0],
        };
        for k in 0..2 {
            self.vel[k] = (self.vel[k] + accel[k] * c.dt).clamp(-c.max_speed, c.max_speed);
            self.pos[k] += self.vel[k] * c.dt;
            if self.pos[k].abs() > 1.0 {
                self.pos[k] = self.pos[k].clamp(-1.0, 1.0);
                self.vel[k] = 0.0;
            }
        }
        self.t += 1;
        let distance = self.distance_to_goal();
        let reached = distance <= c.goal_radius;
        let truncated = !reached && self.t >= c.cap;
        self.done = reached || truncated;
        Ok(StepResult {
            observation: self.obs(),
            sparse_reward: if reached { 1.0 } else { 0.0 },
            dense_reward_hand: -distance,
            done: self.done,
            truncated,
        })
    }

    fn rewards_only_on_termination(&self) -> bool {
        true
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

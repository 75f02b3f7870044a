//! Planar point-mass tasks.
//!
//! The agent is a unit-mass disk moving in `[-1, 1]^2`. Observations are
//! `[agent pos, agent vel, object pos, goal]` (plus the last gripper command
//! on the throw task). The object position in the observation, and the
//! object used for rewards, comes from a [`StaleView`] refreshed only every
//! `k` steps; success is judged on the true state.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, NdpError, Result};

pub const DT: f64 = 0.02;
pub const DAMPING: f64 = 0.1;
pub const MASS: f64 = 1.0;
pub const BODY_RADIUS: f64 = 0.05;
pub const RESTITUTION: f64 = 0.5;
pub const GRAVITY: f64 = 9.8;
pub const SUCCESS_RADIUS: f64 = 0.05;
/// The throw target is a wider disk than the reach/push tolerance.
pub const THROW_GOAL_RADIUS: f64 = 0.1;
pub const SUCCESS_BONUS: f64 = 10.0;
pub const POSITION_KP: f64 = 200.0;
pub const POSITION_KD: f64 = 30.0;
pub const FORCE_LIMIT: f64 = 100.0;
pub const GOAL_RADIUS_RANGE: (f64, f64) = (0.3, 0.8);
pub const RELEASE_THRESHOLD: f64 = 0.5;
pub const WORKSPACE: f64 = 1.0;
pub const PUSH_AGENT_START: [f64; 2] = [0.0, -0.3];
/// Push goals lie within this angle of straight ahead (+y) of the start.
pub const PUSH_GOAL_ARC: f64 = std::f64::consts::FRAC_PI_4;
/// Sliding friction of the pushed object, as a viscous coefficient.
pub const PUSH_OBJECT_DAMPING: f64 = 10.0;
/// Push reward also charges this much per unit of agent-object gap.
pub const PUSH_APPROACH_WEIGHT: f64 = 0.5;
pub const THROW_GOAL: [f64; 2] = [0.55, -0.6];
/// During the throw task the agent may not cross this vertical line.
pub const THROW_WALL: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Reach,
    Push,
    Throw,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Reach, EnvKind::Push, EnvKind::Throw];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Reach => "reach",
            EnvKind::Push => "push",
            EnvKind::Throw => "throw",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        let trimmed = name.strip_prefix("point-").unwrap_or(name);
        Self::ALL
            .into_iter()
            .find(|k| k.name() == trimmed)
            .ok_or_else(|| NdpError::Config(format!("unknown environment '{name}' (expected reach, push or throw)")))
    }

    pub fn default_horizon(self) -> usize {
        match self {
            EnvKind::Reach | EnvKind::Throw => 100,
            // divisible by every rollout length in {3, 5, 7, 10, 15}
            EnvKind::Push => 210,
        }
    }

    /// Degrees of freedom the policy commands.
    pub fn action_dim(self) -> usize {
        match self {
            EnvKind::Throw => 3,
            _ => 2,
        }
    }

    pub fn obs_dim(self) -> usize {
        8 + usize::from(self == EnvKind::Throw)
    }
}

/// How `step` interprets the first two action components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Target position tracked by an internal PD loop.
    Position,
    /// Force applied directly, clipped to `FORCE_LIMIT`.
    Force,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub horizon: usize,
    /// Stale-view refresh period.
    pub k: usize,
    pub control: ControlMode,
}

impl EnvConfig {
    pub fn new(kind: EnvKind, k: usize) -> Self {
        Self {
            kind,
            horizon: kind.default_horizon(),
            k,
            control: ControlMode::Position,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.horizon == 0 || !self.horizon.is_multiple_of(self.k) {
            return Err(NdpError::Config(format!(
                "horizon {} must be a positive multiple of k = {}",
                self.horizon, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub agent_pos: [f64; 2],
    pub agent_vel: [f64; 2],
    pub object_pos: [f64; 2],
    pub object_vel: [f64; 2],
    pub goal: [f64; 2],
    /// Last gripper command; the throw task releases when it exceeds 0.5.
    pub gripper: f64,
    pub held: bool,
    pub step: usize,
    pub horizon: usize,
    /// Latched once the success condition has held at any step.
    pub success: bool,
}

/// World (non-agent) state as of the last refresh.
#[derive(Debug, Clone, PartialEq)]
pub struct StaleView {
    pub object_pos: [f64; 2],
    pub object_vel: [f64; 2],
    pub captured_at: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct PointEnv {
    config: EnvConfig,
    state: EnvState,
    stale: StaleView,
    started: bool,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl PointEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let state = EnvState {
            agent_pos: [0.0; 2],
            agent_vel: [0.0; 2],
            object_pos: [0.0; 2],
            object_vel: [0.0; 2],
            goal: [0.0; 2],
            gripper: 0.0,
            held: false,
            step: 0,
            horizon: config.horizon,
            success: false,
        };
        Ok(Self {
            stale: StaleView {
                object_pos: [0.0; 2],
                object_vel: [0.0; 2],
                captured_at: 0,
            },
            config,
            state,
            started: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn stale_view(&self) -> &StaleView {
        &self.stale
    }

    pub fn obs_dim(&self) -> usize {
        self.config.kind.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.config.kind.action_dim()
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.state.horizon
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = self.config.kind;
        let s = &mut self.state;
        *s = EnvState {
            agent_pos: [0.0; 2],
            agent_vel: [0.0; 2],
            object_pos: [0.0; 2],
            object_vel: [0.0; 2],
            goal: [0.0; 2],
            gripper: 0.0,
            held: false,
            step: 0,
            horizon: self.config.horizon,
            success: false,
        };
        match kind {
            EnvKind::Reach | EnvKind::Push => {
                let angle = if kind == EnvKind::Push {
                    std::f64::consts::FRAC_PI_2 + rng.random_range(-PUSH_GOAL_ARC..=PUSH_GOAL_ARC)
                } else {
                    rng.random_range(0.0..std::f64::consts::TAU)
                };
                let radius = rng.random_range(GOAL_RADIUS_RANGE.0..=GOAL_RADIUS_RANGE.1);
                s.goal = [radius * angle.cos(), radius * angle.sin()];
                if kind == EnvKind::Push {
                    s.agent_pos = PUSH_AGENT_START;
                }
            }
            EnvKind::Throw => {
                s.agent_pos = [rng.random_range(-0.8..=-0.4), rng.random_range(-0.3..=0.3)];
                s.object_pos = s.agent_pos;
                s.goal = THROW_GOAL;
                s.held = true;
            }
        }
        self.state.success = self.success_now();
        self.refresh_stale();
        self.started = true;
        self.observe()
    }

    /// Position and velocity of the commanded degrees of freedom.
    pub fn robot_state(&self) -> (Vec<f64>, Vec<f64>) {
        let s = &self.state;
        let mut y = s.agent_pos.to_vec();
        let mut v = s.agent_vel.to_vec();
        if self.config.kind == EnvKind::Throw {
            y.push(s.gripper);
            v.push(0.0);
        }
        (y, v)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if !self.started {
            return Err(NdpError::Contract("step before reset".into()));
        }
        if self.is_done() {
            return Err(NdpError::Contract(format!("step after done (step {})", self.state.step)));
        }
        if action.len() != self.action_dim() {
            return Err(NdpError::Shape(format!(
                "{} expects {} action components, got {}",
                self.config.kind.name(),
                self.action_dim(),
                action.len()
            )));
        }
        ensure_finite(action, "action")?;

        let force = self.actuation(action);
        self.integrate(force);
        if self.config.kind == EnvKind::Throw {
            self.state.gripper = action[2].clamp(-1.0, 1.0);
            if self.state.held && self.state.gripper > RELEASE_THRESHOLD {
                self.state.held = false;
                self.state.object_vel = self.state.agent_vel;
            }
        }
        self.state.step += 1;
        if self.state.step.is_multiple_of(self.config.k) {
            self.refresh_stale();
        }
        if self.success_now() {
            self.state.success = true;
        }
        let reward = self.reward();
        Ok(StepOutcome {
            obs: self.observe(),
            reward,
            done: self.is_done(),
            success: self.state.success,
        })
    }

    fn actuation(&self, action: &[f64]) -> [f64; 2] {
        let s = &self.state;
        match self.config.control {
            ControlMode::Position => {
                let mut f = [0.0; 2];
                for d in 0..2 {
                    let target = action[d].clamp(-WORKSPACE, WORKSPACE);
                    f[d] = POSITION_KP * (target - s.agent_pos[d]) - POSITION_KD * s.agent_vel[d];
                }
                f
            }
            ControlMode::Force => [action[0].clamp(-FORCE_LIMIT, FORCE_LIMIT), action[1].clamp(-FORCE_LIMIT, FORCE_LIMIT)],
        }
    }

    fn agent_bounds(&self) -> [(f64, f64); 2] {
        let hi_x = if self.config.kind == EnvKind::Throw { THROW_WALL } else { WORKSPACE };
        [(-WORKSPACE, hi_x), (-WORKSPACE, WORKSPACE)]
    }

    fn integrate(&mut self, force: [f64; 2]) {
        let bounds = self.agent_bounds();
        let kind = self.config.kind;
        let s = &mut self.state;
        for d in 0..2 {
            let acc = (force[d] - DAMPING * s.agent_vel[d]) / MASS;
            s.agent_vel[d] += acc * DT;
            s.agent_pos[d] += s.agent_vel[d] * DT;
        }
        clamp_body(&mut s.agent_pos, &mut s.agent_vel, bounds);

        match kind {
            EnvKind::Reach => {}
            EnvKind::Push => {
                for d in 0..2 {
                    s.object_vel[d] -= PUSH_OBJECT_DAMPING * s.object_vel[d] / MASS * DT;
                    s.object_pos[d] += s.object_vel[d] * DT;
                }
                collide(s);
                let full = [(-WORKSPACE, WORKSPACE); 2];
                clamp_body(&mut s.object_pos, &mut s.object_vel, full);
            }
            EnvKind::Throw => {
                if s.held {
                    s.object_pos = s.agent_pos;
                    s.object_vel = s.agent_vel;
                } else if s.object_pos[1] > -WORKSPACE {
                    s.object_vel[1] -= GRAVITY * DT;
                    s.object_pos[0] += s.object_vel[0] * DT;
                    s.object_pos[1] += s.object_vel[1] * DT;
                    if s.object_pos[1] <= -WORKSPACE {
                        // landed: the object stays where it hits the floor
                        s.object_pos[1] = -WORKSPACE;
                        s.object_vel = [0.0; 2];
                    }
                    let full = [(-WORKSPACE, WORKSPACE); 2];
                    clamp_body(&mut s.object_pos, &mut s.object_vel, full);
                }
            }
        }
    }

    fn refresh_stale(&mut self) {
        self.stale = StaleView {
            object_pos: self.state.object_pos,
            object_vel: self.state.object_vel,
            captured_at: self.state.step,
        };
    }

    fn relevant_body(&self, object: [f64; 2]) -> [f64; 2] {
        match self.config.kind {
            EnvKind::Reach => self.state.agent_pos,
            EnvKind::Push | EnvKind::Throw => object,
        }
    }

    fn goal_radius(&self) -> f64 {
        match self.config.kind {
            EnvKind::Throw => THROW_GOAL_RADIUS,
            _ => SUCCESS_RADIUS,
        }
    }

    fn hits_goal(&self, object: [f64; 2]) -> bool {
        let in_disk = dist(self.relevant_body(object), self.state.goal) <= self.goal_radius();
        // a throw only counts once the object has left the hand
        in_disk && !(self.config.kind == EnvKind::Throw && self.state.held)
    }

    fn success_now(&self) -> bool {
        self.hits_goal(self.state.object_pos)
    }

    /// Reward against the stale world state. Push adds a charge for the
    /// gap between the agent and the object.
    fn reward(&self) -> f64 {
        let body = self.relevant_body(self.stale.object_pos);
        let mut r = -dist(body, self.state.goal);
        if self.config.kind == EnvKind::Push {
            let gap = dist(self.state.agent_pos, self.stale.object_pos) - 2.0 * BODY_RADIUS;
            r -= PUSH_APPROACH_WEIGHT * gap.max(0.0);
        }
        if self.hits_goal(self.stale.object_pos) {
            r += SUCCESS_BONUS;
        }
        r
    }

    pub fn success(&self) -> bool {
        self.state.success
    }

    fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        let mut obs = Vec::with_capacity(self.obs_dim());
        obs.extend_from_slice(&s.agent_pos);
        obs.extend_from_slice(&s.agent_vel);
        obs.extend_from_slice(&self.stale.object_pos);
        obs.extend_from_slice(&s.goal);
        if self.config.kind == EnvKind::Throw {
            obs.push(s.gripper);
        }
        obs
    }

    /// Place the agent directly; used by tests and scripted demonstrations.
    pub fn set_agent(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.state.agent_pos = pos;
        self.state.agent_vel = vel;
        if self.state.held {
            self.state.object_pos = pos;
            self.state.object_vel = vel;
        }
    }
}

fn clamp_body(pos: &mut [f64; 2], vel: &mut [f64; 2], bounds: [(f64, f64); 2]) {
    for d in 0..2 {
        let (lo, hi) = bounds[d];
        if pos[d] < lo {
            pos[d] = lo;
            vel[d] = vel[d].max(0.0);
        } else if pos[d] > hi {
            pos[d] = hi;
            vel[d] = vel[d].min(0.0);
        }
    }
}

/// Agent-object disk contact with a restitution impulse; the object is
/// moved out of overlap, the agent is not.
fn collide(s: &mut EnvState) {
    let dx = s.object_pos[0] - s.agent_pos[0];
    let dy = s.object_pos[1] - s.agent_pos[1];
    let d = dx.hypot(dy);
    let contact = 2.0 * BODY_RADIUS;
    if d >= contact {
        return;
    }
    let n = if d > 1e-12 { [dx / d, dy / d] } else { [0.0, 1.0] };
    let rel = (s.object_vel[0] - s.agent_vel[0]) * n[0] + (s.object_vel[1] - s.agent_vel[1]) * n[1];
    if rel < 0.0 {
        let j = -(1.0 + RESTITUTION) * rel / (2.0 / MASS);
        for i in 0..2 {
            s.object_vel[i] += j * n[i] / MASS;
            s.agent_vel[i] -= j * n[i] / MASS;
        }
    }
    s.object_pos = [s.agent_pos[0] + n[0] * contact, s.agent_pos[1] + n[1] * contact];
}

/// One row of an episode trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub agent: [f64; 2],
    pub object: [f64; 2],
    pub goal: [f64; 2],
    pub reward: f64,
}

impl TraceRow {
    pub fn capture(env: &PointEnv, reward: f64) -> Self {
        let s = env.state();
        Self {
            t: s.step,
            agent: s.agent_pos,
            object: s.object_pos,
            goal: s.goal,
            reward,
        }
    }
}

pub const TRACE_HEADER: &str = "t,agent_x,agent_y,object_x,object_y,goal_x,goal_y,reward";

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t, r.agent[0], r.agent[1], r.object[0], r.object[1], r.goal[0], r.goal[1], r.reward
        );
    }
    out
}

pub fn trace_from_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        _ => return Err(NdpError::Format("episode trace is missing its header".into())),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(NdpError::Format(format!("trace line {} has {} fields", i + 2, f.len())));
            }
            let num = |j: usize| f[j].trim().parse::<f64>().map_err(|e| NdpError::Format(format!("trace line {}: {e}", i + 2)));
            Ok(TraceRow {
                t: f[0].trim().parse().map_err(|e| NdpError::Format(format!("trace line {}: {e}", i + 2)))?,
                agent: [num(1)?, num(2)?],
                object: [num(3)?, num(4)?],
                goal: [num(5)?, num(6)?],
                reward: num(7)?,
            })
        })
        .collect()
}

/// Hand-written controllers that solve each task; they show the constants
/// leave every task solvable.
pub mod scripted {
    use super::*;

    /// Position command for the current state.
    pub fn action(env: &PointEnv) -> Vec<f64> {
        let s = env.state();
        match env.config().kind {
            EnvKind::Reach => s.goal.to_vec(),
            EnvKind::Push => push(s),
            EnvKind::Throw => throw(s),
        }
    }

    fn push(s: &EnvState) -> Vec<f64> {
        let to_goal = [s.goal[0] - s.object_pos[0], s.goal[1] - s.object_pos[1]];
        let len = to_goal[0].hypot(to_goal[1]).max(1e-9);
        let u = [to_goal[0] / len, to_goal[1] / len];
        let speed = s.object_vel[0].hypot(s.object_vel[1]);
        let heading = (s.object_vel[0] * u[0] + s.object_vel[1] * u[1]) / speed.max(1e-9);
        if speed > 0.05 && heading > 0.995 {
            // already sliding at the goal: stay out of the way
            return s.agent_pos.to_vec();
        }
        let behind = [s.object_pos[0] - u[0] * 0.15, s.object_pos[1] - u[1] * 0.15];
        let off = dist(s.agent_pos, behind);
        let along = (s.agent_pos[0] - s.object_pos[0]) * u[0] + (s.agent_pos[1] - s.object_pos[1]) * u[1];
        if along > -0.1 && off > 0.02 {
            // go around the object instead of through it
            let side = [-u[1], u[0]];
            let cross = (s.agent_pos[0] - s.object_pos[0]) * side[0] + (s.agent_pos[1] - s.object_pos[1]) * side[1];
            let sgn = if cross >= 0.0 { 1.0 } else { -1.0 };
            return vec![
                s.object_pos[0] + sgn * side[0] * 0.18 - u[0] * 0.15,
                s.object_pos[1] + sgn * side[1] * 0.18 - u[1] * 0.15,
            ];
        }
        let lateral = (s.agent_pos[0] - s.object_pos[0]) * -u[1] + (s.agent_pos[1] - s.object_pos[1]) * u[0];
        let lateral_vel = -s.agent_vel[0] * u[1] + s.agent_vel[1] * u[0];
        if lateral.abs() > 0.004 || lateral_vel.abs() > 0.02 || along < -0.16 {
            return behind.to_vec();
        }
        vec![s.object_pos[0] + u[0] * 0.1, s.object_pos[1] + u[1] * 0.1]
    }

    fn throw(s: &EnvState) -> Vec<f64> {
        if !s.held {
            return vec![s.agent_pos[0], s.agent_pos[1], 1.0];
        }
        // sprint toward the wall and let go once the ballistic arc from the
        // current state passes through the goal disk
        let settled = s.agent_vel[1].abs() < 1.0;
        let release = if settled && lands_in_goal(s.agent_pos, s.agent_vel, s.goal) {
            1.0
        } else {
            0.0
        };
        vec![s.agent_pos[0] + 0.25, 0.3, release]
    }

    fn lands_in_goal(mut p: [f64; 2], mut v: [f64; 2], goal: [f64; 2]) -> bool {
        for _ in 0..100 {
            v[1] -= GRAVITY * DT;
            p[0] += v[0] * DT;
            p[1] += v[1] * DT;
            if dist(p, goal) <= 0.8 * THROW_GOAL_RADIUS {
                return true;
            }
            if p[1] <= -WORKSPACE {
                return false;
            }
        }
        false
    }
}

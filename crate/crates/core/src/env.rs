//! Test environments: a single-state manifold bandit and the Smooth World
//! point-mass navigation task.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::manifold_reward;

pub const DEFAULT_SIGMA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Lemniscate,
    TwoMoons,
}

impl std::str::FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemniscate" => Ok(Self::Lemniscate),
            "two_moons" | "two-moons" => Ok(Self::TwoMoons),
            other => Err(Error::InvalidArgument(format!(
                "unknown manifold {other:?} (expected lemniscate or two_moons)"
            ))),
        }
    }
}

const LEMNISCATE_SCALE: f64 = 0.7;
const MOON_RADIUS: f64 = 0.5;
const MOON_OFFSET: [f64; 2] = [0.25, 0.15];

/// Point cloud on a target curve.
///
/// The lemniscate is `0.7·(cos t, sin t cos t)`. The two moons are an upper
/// half circle of radius 0.5 centred at `(−0.25, 0.15)` and a lower one
/// centred at `(0.25, −0.15)`; the first `n/2` points go on the upper moon.
pub fn make_manifold<R: Rng + ?Sized>(kind: ManifoldKind, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
    match kind {
        ManifoldKind::Lemniscate => (0..n)
            .map(|_| {
                let t = rng.gen_range(0.0..2.0 * PI);
                [LEMNISCATE_SCALE * t.cos(), LEMNISCATE_SCALE * t.sin() * t.cos()]
            })
            .collect(),
        ManifoldKind::TwoMoons => {
            let upper = n / 2;
            (0..n)
                .map(|i| {
                    let t = rng.gen_range(0.0..=PI);
                    if i < upper {
                        moon_point(0, t)
                    } else {
                        moon_point(1, t)
                    }
                })
                .collect()
        }
    }
}

fn moon_point(moon: usize, t: f64) -> [f64; 2] {
    let [ox, oy] = MOON_OFFSET;
    if moon == 0 {
        [-ox + MOON_RADIUS * t.cos(), oy + MOON_RADIUS * t.sin()]
    } else {
        [ox - MOON_RADIUS * t.cos(), -oy - MOON_RADIUS * t.sin()]
    }
}

/// Distance from `p` to moon `moon` (0 = upper, 1 = lower) as a continuous arc.
pub fn moon_distance(p: &[f64], moon: usize) -> f64 {
    let [ox, oy] = MOON_OFFSET;
    let (cx, cy, sign) = if moon == 0 { (-ox, oy, 1.0) } else { (ox, -oy, -1.0) };
    let (dx, dy) = (p[0] - cx, p[1] - cy);
    if sign * dy >= 0.0 {
        ((dx * dx + dy * dy).sqrt() - MOON_RADIUS).abs()
    } else {
        let end = |ex: f64| ((dx - ex).powi(2) + dy * dy).sqrt();
        end(MOON_RADIUS).min(end(-MOON_RADIUS))
    }
}

/// Single dummy-state bandit whose reward is the manifold kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditEnv {
    pub target_points: Vec<[f64; 2]>,
    pub sigma: f64,
    pub alpha: f64,
}

impl BanditEnv {
    pub fn new(target_points: Vec<[f64; 2]>, sigma: f64, alpha: f64) -> Result<Self> {
        if target_points.is_empty() {
            return Err(Error::Empty("target point set"));
        }
        if !(sigma > 0.0) || !(alpha > 0.0) {
            return Err(Error::InvalidArgument("sigma and alpha must be positive".into()));
        }
        if target_points.iter().flatten().any(|c| c.abs() > 1.0) {
            return Err(Error::InvalidArgument("target points must lie in [-1, 1]^2".into()));
        }
        Ok(Self {
            target_points,
            sigma,
            alpha,
        })
    }

    pub fn step(&self, action: &[f64]) -> f64 {
        let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        manifold_reward(&a, &self.target_points, self.sigma)
            .expect("constructor guarantees a non-empty point set and positive sigma")
    }
}

/// Axis-aligned rectangle `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    /// Membership in the closed rectangle.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Membership in the open interior; the faces of a wall are walkable.
    pub fn contains_strict(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] > self.min[i] && p[i] < self.max[i])
    }

    /// First time `t ∈ [0, 1]` at which `from + t·delta` enters the open
    /// interior, with the axis whose face was crossed.
    fn entry(&self, from: [f64; 2], delta: [f64; 2]) -> Option<(f64, usize)> {
        let mut t_enter = f64::NEG_INFINITY;
        let mut axis = 0;
        let mut t_exit = f64::INFINITY;
        for i in 0..2 {
            if delta[i] == 0.0 {
                if from[i] <= self.min[i] || from[i] >= self.max[i] {
                    return None;
                }
                continue;
            }
            let a = (self.min[i] - from[i]) / delta[i];
            let b = (self.max[i] - from[i]) / delta[i];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if lo > t_enter {
                t_enter = lo;
                axis = i;
            }
            t_exit = t_exit.min(hi);
        }
        if t_enter < t_exit && t_enter <= 1.0 && t_exit > 0.0 {
            Some((t_enter.max(0.0), axis))
        } else {
            None
        }
    }

    fn face(&self, axis: usize, delta: [f64; 2]) -> f64 {
        if delta[axis] > 0.0 {
            self.min[axis]
        } else {
            self.max[axis]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    #[serde(flatten)]
    pub region: Rect,
    #[serde(default = "default_reward")]
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Death {
    #[serde(flatten)]
    pub region: Rect,
    #[serde(default = "default_reward")]
    pub penalty: f64,
}

fn default_reward() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.1
}
fn default_v_max() -> f64 {
    1.0
}
fn default_max_steps() -> usize {
    64
}

/// A Smooth World layout with its kinematic constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothWorld {
    pub start: [f64; 2],
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub walls: Vec<Rect>,
    #[serde(default)]
    pub goals: Vec<Goal>,
    #[serde(default)]
    pub deaths: Vec<Death>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalCause {
    Goal,
    Death,
    Timeout,
    None,
}

impl TerminalCause {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalCause::Goal => "goal",
            TerminalCause::Death => "death",
            TerminalCause::Timeout => "timeout",
            TerminalCause::None => "none",
        }
    }
}

/// Position plus elapsed steps in the current episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldState {
    pub pos: [f64; 2],
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: [f64; 2],
    pub action: [f64; 2],
    pub reward: f64,
    pub next_state: [f64; 2],
    pub done: bool,
    pub cause: TerminalCause,
    /// Index of the goal region entered, if any.
    pub goal: Option<usize>,
}

pub const TWO_GOALS_LAYOUT: &str = include_str!("../layouts/two_goals.toml");
pub const SLIT_WALL_LAYOUT: &str = include_str!("../layouts/slit_wall.toml");
pub const OBSTACLE_DETOUR_LAYOUT: &str = include_str!("../layouts/obstacle_detour.toml");

/// Parse a built-in layout by name.
pub fn builtin_layout(name: &str) -> Result<SmoothWorld> {
    let text = match name {
        "two_goals" | "two-goals" => TWO_GOALS_LAYOUT,
        "slit_wall" | "slit-wall" => SLIT_WALL_LAYOUT,
        "obstacle_detour" | "obstacle-detour" => OBSTACLE_DETOUR_LAYOUT,
        other => {
            return Err(Error::InvalidArgument(format!("unknown built-in layout {other:?}")))
        }
    };
    load_layout(text)
}

/// Parse and validate a TOML layout.
pub fn load_layout(text: &str) -> Result<SmoothWorld> {
    let world: SmoothWorld = toml::from_str(text).map_err(|e| {
        let location = e
            .span()
            .map(|span| {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}")
            })
            .unwrap_or_else(|| "layout".to_string());
        Error::Layout {
            location,
            message: e.message().to_string(),
        }
    })?;
    world.validate()?;
    Ok(world)
}

impl SmoothWorld {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("layout serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let err = |location: String, message: &str| Error::Layout {
            location,
            message: message.to_string(),
        };
        let in_box = |p: [f64; 2]| p.iter().all(|c| c.is_finite() && c.abs() <= 1.0);
        let check_rect = |name: String, r: &Rect| -> Result<()> {
            if !in_box(r.min) || !in_box(r.max) {
                return Err(err(name, "corners must lie in [-1, 1]^2"));
            }
            if r.min[0] > r.max[0] || r.min[1] > r.max[1] {
                return Err(err(name, "min must not exceed max"));
            }
            Ok(())
        };
        if !in_box(self.start) {
            return Err(err("start".into(), "start must lie in [-1, 1]^2"));
        }
        if !(self.dt > 0.0) {
            return Err(err("dt".into(), "dt must be positive"));
        }
        if !(self.v_max > 0.0) {
            return Err(err("v_max".into(), "v_max must be positive"));
        }
        if self.max_steps == 0 {
            return Err(err("max_steps".into(), "max_steps must be at least 1"));
        }
        for (i, w) in self.walls.iter().enumerate() {
            check_rect(format!("walls[{i}]"), w)?;
            if w.contains_strict(self.start) {
                return Err(err(format!("walls[{i}]"), "start lies inside this wall"));
            }
        }
        for (i, g) in self.goals.iter().enumerate() {
            check_rect(format!("goals[{i}]"), &g.region)?;
        }
        for (i, d) in self.deaths.iter().enumerate() {
            check_rect(format!("deaths[{i}]"), &d.region)?;
            if d.region.contains(self.start) {
                return Err(err(format!("deaths[{i}]"), "start lies inside this death zone"));
            }
        }
        Ok(())
    }

    pub fn reset(&self) -> WorldState {
        WorldState {
            pos: self.start,
            t: 0,
        }
    }

    pub fn in_wall(&self, p: [f64; 2]) -> bool {
        self.solid_walls().any(|w| w.contains_strict(p))
    }

    /// Walls with any side lying on the outer boundary pushed past it, so the
    /// boundary edge itself is solid where a wall meets it.
    fn solid_walls(&self) -> impl Iterator<Item = Rect> + '_ {
        self.walls.iter().map(|w| {
            let mut r = *w;
            for i in 0..2 {
                if r.min[i] <= -1.0 {
                    r.min[i] = -2.0;
                }
                if r.max[i] >= 1.0 {
                    r.max[i] = 2.0;
                }
            }
            r
        })
    }

    /// Move from `from` by `delta`, stopping at the first wall face or box edge.
    pub fn resolve_motion(&self, from: [f64; 2], delta: [f64; 2]) -> [f64; 2] {
        let mut t_hit = 1.0;
        // (axis, coordinate) to snap onto at contact
        let mut snap: Option<(usize, f64)> = None;
        for i in 0..2 {
            let end = from[i] + delta[i];
            if !(-1.0..=1.0).contains(&end) {
                let bound = end.signum();
                let t = ((bound - from[i]) / delta[i]).max(0.0);
                if t < t_hit {
                    t_hit = t;
                    snap = Some((i, bound));
                }
            }
        }
        for w in self.solid_walls() {
            if let Some((t, axis)) = w.entry(from, delta) {
                if t < t_hit {
                    t_hit = t;
                    snap = Some((axis, w.face(axis, delta)));
                }
            }
        }
        let mut next = [from[0] + t_hit * delta[0], from[1] + t_hit * delta[1]];
        if let Some((axis, value)) = snap {
            next[axis] = value;
        }
        for c in next.iter_mut() {
            *c = c.clamp(-1.0, 1.0);
        }
        if self.in_wall(next) {
            from
        } else {
            next
        }
    }

    /// Advance one step of `p ← p + v·dt`, velocity clamped to `±v_max`.
    pub fn step(&self, state: &WorldState, action: [f64; 2]) -> (WorldState, Transition) {
        let v = [
            action[0].clamp(-self.v_max, self.v_max),
            action[1].clamp(-self.v_max, self.v_max),
        ];
        let delta = [v[0] * self.dt, v[1] * self.dt];
        let next = self.resolve_motion(state.pos, delta);
        let t = state.t + 1;
        let mut reward = 0.0;
        let mut cause = TerminalCause::None;
        let mut goal = None;
        if let Some(d) = self.deaths.iter().find(|d| d.region.contains(next)) {
            reward = -d.penalty;
            cause = TerminalCause::Death;
        } else if let Some((i, g)) = self
            .goals
            .iter()
            .enumerate()
            .find(|(_, g)| g.region.contains(next))
        {
            reward = g.reward;
            cause = TerminalCause::Goal;
            goal = Some(i);
        } else if t >= self.max_steps {
            cause = TerminalCause::Timeout;
        }
        let transition = Transition {
            state: state.pos,
            action: v,
            reward,
            next_state: next,
            done: cause != TerminalCause::None,
            cause,
            goal,
        };
        (WorldState { pos: next, t }, transition)
    }
}

/// Functional form of [`SmoothWorld::step`].
pub fn world_step(world: &SmoothWorld, state: &WorldState, action: [f64; 2]) -> Transition {
    world.step(state, action).1
}

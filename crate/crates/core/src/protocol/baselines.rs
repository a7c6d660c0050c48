use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, EpisodeStart, Percept};
use crate::acoustics::{compute_spectrogram, render_source, AcousticParams, Spectrogram};
use crate::engine::{ActionMode, Decision, Engine, RawAction, WAYPOINT_STOP};
use crate::gridmap::{ActionField, Cell, GridMap};
use crate::metrics::intercept_oracle;
use crate::soundbank::{step_slice, SoundBank, Split};

pub const RANDOM_STOP_PROB: f64 = 0.05;

const WAYPOINT_AHEAD: u8 = 1;
const WAYPOINT_LEFT: u8 = 3;
const WAYPOINT_RIGHT: u8 = 5;

fn episode_rng(agent_seed: u64, episode_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(agent_seed);
    rng.set_stream(episode_seed);
    rng
}

/// Uniform over the non-Stop actions, stopping with probability 0.05. The
/// stream is re-derived from the episode seed so results do not depend on
/// episode order.
pub struct RandomAgent {
    seed: u64,
    rng: ChaCha8Rng,
    mode: ActionMode,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: episode_rng(seed, 0),
            mode: ActionMode::Raw,
        }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> String {
        format!("random-{}", self.seed)
    }

    fn begin_episode(&mut self, start: &EpisodeStart, _engine: Option<&Engine>) -> Result<(), AgentError> {
        self.rng = episode_rng(self.seed, start.seed);
        self.mode = start.mode;
        Ok(())
    }

    fn act(&mut self, _percept: &Percept) -> Result<Decision, AgentError> {
        let stop = self.rng.gen_bool(RANDOM_STOP_PROB);
        Ok(match self.mode {
            ActionMode::Raw => Decision::Raw(if stop {
                RawAction::Stop
            } else {
                [RawAction::Forward, RawAction::RotateLeft, RawAction::RotateRight][self.rng.gen_range(0..3)]
            }),
            ActionMode::Waypoint => Decision::Waypoint(if stop {
                WAYPOINT_STOP
            } else {
                let i = self.rng.gen_range(0..8u8);
                if i >= WAYPOINT_STOP {
                    i + 1
                } else {
                    i
                }
            }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyParams {
    /// Relative level difference `|L − R| / (L + R)` treated as centered.
    pub balance_tolerance: f64,
    /// Broadband magnitude at which the agent believes it is on the source.
    pub stop_threshold: f64,
}

fn broadband(spec: &Spectrogram) -> (f64, f64) {
    (spec.channel_magnitude(0), spec.channel_magnitude(1))
}

impl GreedyParams {
    /// Picks the single stop threshold that separates "on the source" from
    /// "one cell away, straight ahead" for as many sounds of `split` as
    /// possible (smallest such threshold on ties).
    pub fn calibrate(bank: &SoundBank, split: Split, acoustics: &AcousticParams, resolution: f64) -> Self {
        let rate = bank.sample_rate();
        let level = |slice: &[f32], d: f64| {
            let frame = render_source(slice, 0.0, d, acoustics, rate);
            let (l, r) = broadband(&compute_spectrogram(&frame).expect("one-second frame"));
            l + r
        };
        let pairs: Vec<(f64, f64)> = bank
            .ids(split)
            .iter()
            .map(|id| {
                let slice = step_slice(bank.get(id).expect("listed id"), 0, rate);
                (level(&slice, 0.0), level(&slice, resolution))
            })
            .collect();
        let mut candidates: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        candidates.sort_by(f64::total_cmp);
        let separated = |thr: f64| pairs.iter().filter(|&&(on, adj)| adj < thr && thr <= on).count();
        let mut best = (0, f64::INFINITY);
        for &c in &candidates {
            let n = separated(c);
            if n > best.0 {
                best = (n, c);
            }
        }
        Self {
            balance_tolerance: 0.1,
            stop_threshold: best.1,
        }
    }
}

/// Follows interaural level differences: turn toward the louder ear, walk
/// when balanced, stop once loud enough; a blocked path triggers a turn.
pub struct GreedyAgent {
    params: GreedyParams,
    mode: ActionMode,
}

impl GreedyAgent {
    pub fn new(params: GreedyParams) -> Self {
        Self {
            params,
            mode: ActionMode::Raw,
        }
    }

    pub fn params(&self) -> GreedyParams {
        self.params
    }

    fn choose(&self, percept: &Percept) -> RawAction {
        let obs = &percept.observation;
        let (l, r) = broadband(&obs.spectrogram);
        if l + r >= self.params.stop_threshold {
            return RawAction::Stop;
        }
        let ild = if l + r > 0.0 { (l - r) / (l + r) } else { 0.0 };
        if ild > self.params.balance_tolerance {
            RawAction::RotateLeft
        } else if ild < -self.params.balance_tolerance || obs.collided || blocked_ahead(obs) {
            RawAction::RotateRight
        } else {
            RawAction::Forward
        }
    }
}

/// The center ray ends on the adjacent cell.
fn blocked_ahead(obs: &crate::engine::Observation) -> bool {
    let scan = &obs.scan;
    let mid = scan.ranges.len() / 2;
    scan.ranges.len() % 2 == 1 && scan.ranges[mid] <= scan.resolution * (1.0 + 1e-9)
}

impl Agent for GreedyAgent {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn begin_episode(&mut self, start: &EpisodeStart, _engine: Option<&Engine>) -> Result<(), AgentError> {
        self.mode = start.mode;
        Ok(())
    }

    fn act(&mut self, percept: &Percept) -> Result<Decision, AgentError> {
        let a = self.choose(percept);
        Ok(match self.mode {
            ActionMode::Raw => Decision::Raw(a),
            ActionMode::Waypoint => Decision::Waypoint(match a {
                RawAction::Stop => WAYPOINT_STOP,
                RawAction::Forward => WAYPOINT_AHEAD,
                RawAction::RotateLeft => WAYPOINT_LEFT,
                RawAction::RotateRight => WAYPOINT_RIGHT,
            }),
        })
    }
}

/// Privileged agent that knows the realized target trajectory: it walks a
/// geodesic to the earliest reachable intersection, waits there and stops
/// when the target arrives.
pub struct OracleAgent {
    plan: VecDeque<RawAction>,
}

impl Default for OracleAgent {
    fn default() -> Self {
        Self::new()
    }
}

const MAX_PLAN_ROUNDS: usize = 32;

impl OracleAgent {
    pub fn new() -> Self {
        Self { plan: VecDeque::new() }
    }

    /// Target cells over the whole step budget when the agent executes
    /// `actions` and then stays put.
    fn rollout(engine: &Engine, actions: &[RawAction], horizon: usize) -> Result<Vec<Cell>, AgentError> {
        let mut sim = engine.clone().headless();
        for k in 0..horizon {
            let a = actions.get(k).copied().unwrap_or(RawAction::RotateLeft);
            sim.step_raw(a)?;
        }
        Ok(sim.trajectory())
    }

    /// Computes the intercept plan. The target's future depends weakly on
    /// where the agent stands (goal draws avoid the agent's cell), so the
    /// plan is iterated until it reproduces its own intercept.
    pub fn plan(engine: &Engine) -> Result<Vec<RawAction>, AgentError> {
        let map: &GridMap = engine.map();
        let start = engine.pose();
        let horizon = engine.config().step_limit.saturating_sub(engine.step_index() + 1);
        let reach = ActionField::along_geodesics(map, start)?;
        let mut actions: Vec<RawAction> = Vec::new();
        let mut previous = None;
        for _ in 0..MAX_PLAN_ROUNDS {
            let trajectory = Self::rollout(engine, &actions, horizon)?;
            let catch = intercept_oracle(map, start, &trajectory)?
                .earliest
                .ok_or(AgentError::NoIntercept)?;
            if previous == Some((catch.t, catch.cell)) {
                actions.push(RawAction::Stop);
                return Ok(actions);
            }
            previous = Some((catch.t, catch.cell));
            actions = reach
                .plan_to(catch.cell)
                .expect("catch cells are reachable")
                .into_iter()
                .map(RawAction::from)
                .collect();
            actions.resize(catch.t, RawAction::RotateLeft);
        }
        Err(AgentError::NoFixedPoint)
    }
}

impl Agent for OracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn begin_episode(&mut self, start: &EpisodeStart, engine: Option<&Engine>) -> Result<(), AgentError> {
        if start.mode != ActionMode::Raw {
            return Err(AgentError::UnsupportedMode(start.mode));
        }
        let engine = engine.ok_or(AgentError::Unprivileged)?;
        self.plan = Self::plan(engine)?.into();
        Ok(())
    }

    fn act(&mut self, _percept: &Percept) -> Result<Decision, AgentError> {
        Ok(Decision::Raw(self.plan.pop_front().unwrap_or(RawAction::Stop)))
    }
}

//! Episode state machine: observation assembly, raw and waypoint action
//! execution, reward and termination, plus the replayable episode log.
//!
//! Within one step the agent acts first, then the target moves, then audio
//! is rendered for the new configuration. Target motion and audio draw from
//! two independent ChaCha streams of the episode seed, so the target's path
//! does not depend on how much audio randomness a step consumed.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::{self, doa_from_field, AcousticError, AcousticParams, BinauralFrame, Spectrogram};
use crate::dynamics::{spawn_target, step_target, DynamicsError, TargetState};
use crate::gridmap::{
    geodesic_field, ray_scan, ActionField, AgentPose, Cell, GeodesicField, GeometricMap, GridMap, MapError, Motion,
    RangeScan, ScanParams,
};
use crate::metrics::intercept_oracle;
use crate::scenario::{
    apply_spec_augment, plan_episode, plan_step, EpisodeAudioPlan, ScenarioConfig, ScenarioError, StepAudioEvents,
};
use crate::soundbank::{step_slice, SoundBank, SoundError, Split};

pub const SUCCESS_REWARD: f64 = 10.0;
pub const DISTANCE_REWARD: f64 = 0.25;
pub const STEP_PENALTY: f64 = 0.01;
pub const DEFAULT_STEP_LIMIT: usize = 500;
/// Raw actions executed for at most one waypoint decision.
pub const MAX_WAYPOINT_ACTIONS: usize = 4;
pub const WAYPOINT_STOP: u8 = 4;

const MOTION_STREAM: u64 = 1;
const AUDIO_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("step limit must be positive")]
    ZeroStepLimit,
    #[error("episode already finished")]
    EpisodeDone,
    #[error("index out of range: waypoint {0}")]
    WaypointOutOfRange(u8),
    #[error("{0:?} decision in {1:?} mode")]
    WrongMode(Decision, ActionMode),
    #[error("target spawned on the agent")]
    CoLocated,
    #[error("target at {target} unreachable from agent at {agent}")]
    Disconnected { agent: Cell, target: Cell },
    #[error("sound bank runs at {bank} Hz, episode expects {config} Hz")]
    RateMismatch { bank: u32, config: u32 },
    #[error("config names map {expected:?}, got {found:?}")]
    MapMismatch { expected: String, found: String },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Sound(#[from] SoundError),
    #[error(transparent)]
    Acoustic(#[from] AcousticError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawAction {
    Forward,
    RotateLeft,
    RotateRight,
    Stop,
}

impl From<Motion> for RawAction {
    fn from(m: Motion) -> Self {
        match m {
            Motion::Forward => RawAction::Forward,
            Motion::RotateLeft => RawAction::RotateLeft,
            Motion::RotateRight => RawAction::RotateRight,
        }
    }
}

/// What an agent returns each decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Raw(RawAction),
    /// Index into the egocentric 3×3 action map, row-major with row 0 ahead
    /// and column 0 to the left; 4 (the agent's own cell) means Stop.
    Waypoint(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    #[default]
    Raw,
    Waypoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Geodesic distance to the target's current cell.
    #[default]
    CurrentPosition,
    /// Geodesic distance to the earliest reachable intersection, predicted
    /// at reset.
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    FailureTimeout,
    FailureWrongStop,
    /// The agent broke the protocol; scored as a failure.
    FailureAborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub map: String,
    pub sample_rate: u32,
    pub target_sound: String,
    pub start: AgentPose,
    pub scenario: ScenarioConfig,
    /// Split that second sounds and distractors are drawn from.
    pub audio_split: Split,
    pub move_prob: f64,
    pub mode: ActionMode,
    pub reward_mode: RewardMode,
    pub step_limit: usize,
    pub seed: u64,
    pub acoustics: AcousticParams,
    pub scan: ScanParams,
}

impl EpisodeConfig {
    pub fn new(map: &GridMap, bank: &SoundBank, target_sound: impl Into<String>, start: AgentPose, seed: u64) -> Self {
        Self {
            map: map.name().to_string(),
            sample_rate: bank.sample_rate(),
            target_sound: target_sound.into(),
            start,
            scenario: ScenarioConfig::for_rate(bank.sample_rate()),
            audio_split: Split::Train,
            move_prob: 0.0,
            mode: ActionMode::Raw,
            reward_mode: RewardMode::CurrentPosition,
            step_limit: DEFAULT_STEP_LIMIT,
            seed,
            acoustics: AcousticParams::default(),
            scan: ScanParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub spectrogram: Spectrogram,
    pub scan: RangeScan,
    pub collided: bool,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    pub collided: bool,
    pub invalid_waypoint: bool,
    pub raw_actions: usize,
    /// Observations of every raw step but the last in a waypoint decision.
    pub intermediate: Vec<Observation>,
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Set on the first raw step of each agent decision.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision: Option<Decision>,
    /// `None` for the no-op step of an invalid waypoint.
    pub action: Option<RawAction>,
    pub pose: AgentPose,
    pub target: Cell,
    pub reward: f64,
    pub collided: bool,
    pub events: StepAudioEvents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub target: Cell,
    pub target_goal: Cell,
    pub plan: EpisodeAudioPlan,
    pub events: StepAudioEvents,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reward_goal: Option<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub config: EpisodeConfig,
    pub initial: InitialState,
    pub records: Vec<StepRecord>,
    pub outcome: Outcome,
    /// Realized target cells, one per elapsed step starting at step 0.
    pub trajectory: Vec<Cell>,
    pub path_length_m: f64,
    pub action_count: usize,
    pub total_reward: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
enum LogLine {
    Header {
        config: EpisodeConfig,
        initial: InitialState,
    },
    Step(StepRecord),
    End {
        outcome: Outcome,
        path_length_m: f64,
        action_count: usize,
        total_reward: f64,
        trajectory: Vec<Cell>,
    },
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("log is missing its {0} record")]
    Missing(&'static str),
    #[error("line {0}: record out of order")]
    Order(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EpisodeLog {
    /// Agent decisions in order, as needed for replay.
    pub fn decisions(&self) -> Vec<Decision> {
        self.records.iter().filter_map(|r| r.decision).collect()
    }

    /// Line-delimited JSON: header, one line per raw step, end record.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = LogLine::Header {
            config: self.config.clone(),
            initial: self.initial.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &LogLine::Step(r.clone()))?;
            w.write_all(b"\n")?;
        }
        let end = LogLine::End {
            outcome: self.outcome,
            path_length_m: self.path_length_m,
            action_count: self.action_count,
            total_reward: self.total_reward,
            trajectory: self.trajectory.clone(),
        };
        serde_json::to_writer(&mut w, &end)?;
        w.write_all(b"\n")
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, LogError> {
        let mut header = None;
        let mut records = Vec::new();
        let mut end = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine =
                serde_json::from_str(&line).map_err(|source| LogError::Json { line: i + 1, source })?;
            match parsed {
                LogLine::Header { config, initial } if header.is_none() && records.is_empty() => {
                    header = Some((config, initial))
                }
                LogLine::Step(s) if header.is_some() && end.is_none() => records.push(s),
                LogLine::End {
                    outcome,
                    path_length_m,
                    action_count,
                    total_reward,
                    trajectory,
                } if header.is_some() && end.is_none() => {
                    end = Some((outcome, path_length_m, action_count, total_reward, trajectory))
                }
                _ => return Err(LogError::Order(i + 1)),
            }
        }
        let (config, initial) = header.ok_or(LogError::Missing("header"))?;
        let (outcome, path_length_m, action_count, total_reward, trajectory) = end.ok_or(LogError::Missing("end"))?;
        Ok(Self {
            config,
            initial,
            records,
            outcome,
            trajectory,
            path_length_m,
            action_count,
            total_reward,
        })
    }

    pub fn from_jsonl_str(s: &str) -> Result<Self, LogError> {
        Self::read_jsonl(s.as_bytes())
    }
}

/// One running episode. Cloning yields an independent copy that continues
/// identically given identical actions.
#[derive(Clone)]
pub struct Engine {
    map: Arc<GridMap>,
    bank: Arc<SoundBank>,
    config: EpisodeConfig,
    pose: AgentPose,
    target: TargetState,
    gmap: GeometricMap,
    motion_rng: ChaCha8Rng,
    audio_rng: ChaCha8Rng,
    plan: EpisodeAudioPlan,
    pool: Vec<String>,
    initial: InitialState,
    step: usize,
    outcome: Option<Outcome>,
    records: Vec<StepRecord>,
    path_cells: usize,
    action_count: usize,
    total_reward: f64,
    reward_goal: Option<Cell>,
    fields: HashMap<Cell, Arc<GeodesicField>>,
    render_audio: bool,
    last_waveform: Option<BinauralFrame>,
}

impl Engine {
    pub fn reset(
        map: Arc<GridMap>,
        bank: Arc<SoundBank>,
        config: EpisodeConfig,
    ) -> Result<(Self, Observation), EngineError> {
        if config.step_limit == 0 {
            return Err(EngineError::ZeroStepLimit);
        }
        if config.map != map.name() {
            return Err(EngineError::MapMismatch {
                expected: config.map.clone(),
                found: map.name().to_string(),
            });
        }
        if bank.sample_rate() != config.sample_rate {
            return Err(EngineError::RateMismatch {
                bank: bank.sample_rate(),
                config: config.sample_rate,
            });
        }
        map.check_free(config.start.cell)?;
        bank.get(&config.target_sound)?;
        config.scenario.validate()?;

        let mut motion_rng = ChaCha8Rng::seed_from_u64(config.seed);
        motion_rng.set_stream(MOTION_STREAM);
        let mut audio_rng = ChaCha8Rng::seed_from_u64(config.seed);
        audio_rng.set_stream(AUDIO_STREAM);

        let target = spawn_target(&mut motion_rng, &map, config.start.cell, config.move_prob)?;
        if target.cell == config.start.cell {
            return Err(EngineError::CoLocated);
        }
        if !geodesic_field(&map, target.cell)?.is_reachable(config.start.cell) {
            return Err(EngineError::Disconnected {
                agent: config.start.cell,
                target: target.cell,
            });
        }

        let pool = bank.ids(config.audio_split);
        let plan = plan_episode(&mut audio_rng, &config.scenario, &config.target_sound, &pool)?;

        let reward_goal = match config.reward_mode {
            RewardMode::CurrentPosition => None,
            RewardMode::Intersection => Some(predict_intersection(
                &map,
                config.start,
                &target,
                &motion_rng,
                config.step_limit,
            )),
        };

        let mut engine = Engine {
            gmap: GeometricMap::for_map(&map),
            pose: config.start,
            initial: InitialState {
                target: target.cell,
                target_goal: target.goal,
                plan: plan.clone(),
                events: StepAudioEvents::default(),
                reward_goal,
            },
            map,
            bank,
            target,
            motion_rng,
            audio_rng,
            plan,
            pool,
            step: 0,
            outcome: None,
            records: Vec::new(),
            path_cells: 0,
            action_count: 0,
            total_reward: 0.0,
            reward_goal,
            fields: HashMap::new(),
            render_audio: true,
            last_waveform: None,
            config,
        };
        let events = engine.draw_events();
        engine.initial.events = events.clone();
        let obs = engine.render_observation(&events, false)?;
        Ok((engine, obs))
    }

    /// Stops rendering audio (observations carry silent spectrograms and
    /// no audio randomness is drawn). Target motion is unaffected, which is
    /// what privileged look-ahead needs.
    pub fn headless(mut self) -> Self {
        self.render_audio = false;
        self
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn bank(&self) -> &SoundBank {
        &self.bank
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn target(&self) -> &TargetState {
        &self.target
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn geometric_map(&self) -> &GeometricMap {
        &self.gmap
    }

    pub fn audio_plan(&self) -> &EpisodeAudioPlan {
        &self.plan
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    /// Goal cell of the intersection reward, if that mode is active.
    pub fn reward_goal(&self) -> Option<Cell> {
        self.reward_goal
    }

    /// Mixed waveform behind the latest observation.
    pub fn last_waveform(&self) -> Option<&BinauralFrame> {
        self.last_waveform.as_ref()
    }

    fn field(&mut self, cell: Cell) -> Arc<GeodesicField> {
        if let Some(f) = self.fields.get(&cell) {
            return f.clone();
        }
        let f = Arc::new(geodesic_field(&self.map, cell).expect("cells queried are free"));
        self.fields.insert(cell, f.clone());
        f
    }

    /// Geodesic distance in cells that the dense reward tracks.
    pub fn reward_distance(&mut self) -> u32 {
        let goal = self.reward_goal.unwrap_or(self.target.cell);
        let agent = self.pose.cell;
        self.field(goal).cells(agent).expect("agent and goal share a component")
    }

    fn draw_events(&mut self) -> StepAudioEvents {
        if !self.render_audio {
            return StepAudioEvents::default();
        }
        plan_step(
            &mut self.audio_rng,
            &self.config.scenario,
            &self.plan,
            &self.config.target_sound,
            &self.pool,
            &self.map,
        )
    }

    fn render_observation(&mut self, events: &StepAudioEvents, collided: bool) -> Result<Observation, EngineError> {
        let scan = ray_scan(&self.map, self.pose, &self.config.scan);
        self.gmap.update(&scan)?;
        let rate = self.config.sample_rate;
        let spectrogram = if self.render_audio {
            let frame = self.render_waveform(events)?;
            let spec = acoustics::compute_spectrogram(&frame)?;
            self.last_waveform = Some(frame);
            apply_spec_augment(&spec, events.augmentation, &mut self.audio_rng, &self.config.scenario)?
        } else {
            let (f, t, _) = acoustics::spectrogram_shape(rate);
            Spectrogram::zeros(f, t, rate)
        };
        Ok(Observation {
            spectrogram,
            scan,
            collided,
            step_index: self.step,
        })
    }

    /// Target (plus optional second sound at the same position) and the
    /// step's distractor, rendered for the current pose and mixed.
    fn render_waveform(&mut self, events: &StepAudioEvents) -> Result<BinauralFrame, EngineError> {
        let rate = self.config.sample_rate;
        let params = self.config.acoustics;
        let target_field = self.field(self.target.cell);
        let doa = doa_from_field(&self.map, &target_field, self.pose)?;
        let bank = self.bank.clone();
        let mut frames = Vec::with_capacity(3);

        let target = bank.get(&self.config.target_sound)?;
        let slice = step_slice(target, self.step, rate);
        frames.push(acoustics::render_source(
            &slice,
            doa.azimuth,
            doa.distance_m,
            &params,
            rate,
        ));

        if let Some(id) = &self.plan.second_sound_id {
            let slice = step_slice(bank.get(id)?, self.step, rate);
            frames.push(acoustics::render_source(
                &slice,
                doa.azimuth,
                doa.distance_m,
                &params,
                rate,
            ));
        }
        if let (true, Some(id), Some(cell)) = (events.distractor_active, &events.distractor_id, events.distractor_cell)
        {
            let field = self.field(cell);
            let d = doa_from_field(&self.map, &field, self.pose)?;
            let slice = step_slice(bank.get(id)?, self.step, rate);
            frames.push(acoustics::render_source(&slice, d.azimuth, d.distance_m, &params, rate));
        }
        Ok(acoustics::mix(&frames)?)
    }

    /// One raw action. `None` is the no-op step of an invalid waypoint.
    fn advance(&mut self, action: Option<RawAction>, decision: Option<Decision>) -> Result<StepResult, EngineError> {
        if self.is_done() {
            return Err(EngineError::EpisodeDone);
        }
        let before = self.reward_distance();
        self.step += 1;
        let mut collided = false;
        let mut reward = -STEP_PENALTY;
        match action {
            Some(RawAction::Stop) => {
                if self.pose.cell == self.target.cell {
                    reward += SUCCESS_REWARD;
                    self.outcome = Some(Outcome::Success);
                } else {
                    self.outcome = Some(Outcome::FailureWrongStop);
                }
            }
            Some(a) => {
                self.action_count += 1;
                match a {
                    RawAction::Forward => match self.pose.cell.step(self.pose.heading).filter(|c| self.map.is_free(*c))
                    {
                        Some(c) => {
                            self.pose.cell = c;
                            self.path_cells += 1;
                        }
                        None => collided = true,
                    },
                    RawAction::RotateLeft => self.pose.heading = self.pose.heading.left(),
                    RawAction::RotateRight => self.pose.heading = self.pose.heading.right(),
                    RawAction::Stop => unreachable!(),
                }
            }
            None => self.action_count += 1,
        }
        if !self.is_done() {
            step_target(
                &mut self.motion_rng,
                &mut self.target,
                &self.map,
                self.pose.cell,
                self.step,
            );
            let after = self.reward_distance();
            if after < before {
                reward += DISTANCE_REWARD;
            } else if after > before {
                reward -= DISTANCE_REWARD;
            }
            if self.step >= self.config.step_limit {
                self.outcome = Some(Outcome::FailureTimeout);
            }
        }
        self.total_reward += reward;

        let events = self.draw_events();
        let observation = self.render_observation(&events, collided)?;
        self.records.push(StepRecord {
            step: self.step,
            decision,
            action,
            pose: self.pose,
            target: self.target.cell,
            reward,
            collided,
            events,
        });
        Ok(StepResult {
            observation,
            reward,
            done: self.is_done(),
            info: StepInfo {
                collided,
                invalid_waypoint: false,
                raw_actions: 1,
                intermediate: Vec::new(),
                outcome: self.outcome,
            },
        })
    }

    pub fn step_raw(&mut self, action: RawAction) -> Result<StepResult, EngineError> {
        self.advance(Some(action), Some(Decision::Raw(action)))
    }

    /// Cell addressed by a waypoint index, if it lies on the map.
    pub fn waypoint_cell(&self, index: u8) -> Option<Cell> {
        let (r, c) = ((index / 3) as isize, (index % 3) as isize);
        let (fwd, lateral) = (1 - r, c - 1);
        let (hr, hc) = self.pose.heading.delta();
        let (rr, rc) = self.pose.heading.right().delta();
        let row = self.pose.cell.row as isize + fwd * hr + lateral * rr;
        let col = self.pose.cell.col as isize + fwd * hc + lateral * rc;
        (row >= 0 && col >= 0).then(|| Cell::new(row as usize, col as usize))
    }

    /// Executes up to four raw actions toward a neighboring cell chosen on
    /// the egocentric 3×3 map; the center index stops.
    pub fn step_waypoint(&mut self, index: u8) -> Result<StepResult, EngineError> {
        if index > 8 {
            return Err(EngineError::WaypointOutOfRange(index));
        }
        if self.is_done() {
            return Err(EngineError::EpisodeDone);
        }
        let decision = Some(Decision::Waypoint(index));
        if index == WAYPOINT_STOP {
            return self.advance(Some(RawAction::Stop), decision);
        }
        let goal = self.waypoint_cell(index).filter(|c| self.map.is_free(*c));
        let Some(goal) = goal else {
            let mut r = self.advance(None, decision)?;
            r.info.invalid_waypoint = true;
            return Ok(r);
        };
        let plan = ActionField::from_pose(&self.map, self.pose)?
            .plan_to(goal)
            .unwrap_or_default();

        let mut intermediate = Vec::new();
        let mut total = 0.0;
        let mut last: Option<StepResult> = None;
        for (i, m) in plan.into_iter().take(MAX_WAYPOINT_ACTIONS).enumerate() {
            if let Some(prev) = last.take() {
                intermediate.push(prev.observation);
            }
            let r = self.advance(Some(m.into()), if i == 0 { decision } else { None })?;
            total += r.reward;
            let stop = r.done || r.info.collided;
            last = Some(r);
            if stop {
                break;
            }
        }
        let mut r = last.expect("waypoint plans to a free neighbor are non-empty");
        r.reward = total;
        r.info.raw_actions = intermediate.len() + 1;
        r.info.intermediate = intermediate;
        Ok(r)
    }

    pub fn step(&mut self, decision: Decision) -> Result<StepResult, EngineError> {
        match (decision, self.config.mode) {
            (Decision::Raw(a), ActionMode::Raw) => self.step_raw(a),
            (Decision::Waypoint(i), ActionMode::Waypoint) => self.step_waypoint(i),
            (d, m) => Err(EngineError::WrongMode(d, m)),
        }
    }

    /// Ends a running episode as aborted (protocol failure).
    pub fn abort(&mut self) {
        if self.outcome.is_none() {
            self.outcome = Some(Outcome::FailureAborted);
        }
    }

    pub fn trajectory(&self) -> Vec<Cell> {
        self.target.cells()
    }

    /// The episode record; `outcome` is only final once the episode is done.
    pub fn log(&self) -> EpisodeLog {
        EpisodeLog {
            config: self.config.clone(),
            initial: self.initial.clone(),
            records: self.records.clone(),
            outcome: self.outcome.unwrap_or(Outcome::FailureAborted),
            trajectory: self.trajectory(),
            path_length_m: self.path_cells as f64 * self.map.resolution(),
            action_count: self.action_count,
            total_reward: self.total_reward,
        }
    }
}

/// Earliest catch cell assuming the agent stays at its start, found by
/// rolling a copy of the target forward with its own random stream.
fn predict_intersection(
    map: &GridMap,
    start: AgentPose,
    target: &TargetState,
    rng: &ChaCha8Rng,
    horizon: usize,
) -> Cell {
    let mut rng = rng.clone();
    let mut t = target.clone();
    for k in 1..=horizon {
        step_target(&mut rng, &mut t, map, start.cell, k);
    }
    intercept_oracle(map, start, &t.cells())
        .ok()
        .and_then(|r| r.earliest)
        .map_or(target.cell, |c| c.cell)
}

/// Re-runs the decisions of `log` on a fresh engine.
pub fn replay(map: Arc<GridMap>, bank: Arc<SoundBank>, log: &EpisodeLog) -> Result<EpisodeLog, EngineError> {
    let (mut engine, _) = Engine::reset(map, bank, log.config.clone())?;
    for d in log.decisions() {
        if engine.is_done() {
            break;
        }
        engine.step(d)?;
    }
    if !engine.is_done() && log.outcome == Outcome::FailureAborted {
        engine.abort();
    }
    Ok(engine.log())
}

//! Agents and the harness side of an episode: the [`Agent`] trait, the
//! line-delimited JSON wire format for external agents, and the scripted
//! baselines.

mod baselines;
mod remote;
mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ActionMode, Decision, Engine, EngineError, EpisodeLog, Observation, Outcome};
use crate::gridmap::MapError;
use crate::metrics::{score_episode, EpisodeScore, MetricsError};

pub use baselines::{GreedyAgent, GreedyParams, OracleAgent, RandomAgent, RANDOM_STOP_PROB};
pub use remote::{play, Connection, RemoteAgent, DEFAULT_TIMEOUT};
pub use wire::{decode_observation, encode_observation, Envelope, Message, Tensor, WireObservation, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("protocol version mismatch: expected {expected}, got {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unexpected {found} message while waiting for {expected}")]
    Unexpected { expected: &'static str, found: String },
    #[error("no reply within {0:?}")]
    Timeout(std::time::Duration),
    #[error("peer closed the connection")]
    Closed,
    #[error("peer reported an error: {0}")]
    Remote(String),
    #[error("tensor dims {dims:?} do not match {bytes} payload bytes")]
    TensorSize { dims: Vec<usize>, bytes: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent needs privileged access to the episode")]
    Unprivileged,
    #[error("agent does not support {0:?} mode")]
    UnsupportedMode(ActionMode),
    #[error("no reachable intersection within the step limit")]
    NoIntercept,
    #[error("intercept plan did not settle")]
    NoFixedPoint,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// What an agent learns when an episode begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStart {
    pub episode_id: String,
    pub map: String,
    pub sample_rate: u32,
    pub seed: u64,
    pub step_limit: usize,
    pub mode: ActionMode,
    pub spectrogram_dims: [usize; 3],
    pub scan_dims: usize,
}

impl EpisodeStart {
    pub fn for_engine(episode_id: impl Into<String>, engine: &Engine) -> Self {
        let cfg = engine.config();
        let (f, t, c) = crate::acoustics::spectrogram_shape(cfg.sample_rate);
        Self {
            episode_id: episode_id.into(),
            map: cfg.map.clone(),
            sample_rate: cfg.sample_rate,
            seed: cfg.seed,
            step_limit: cfg.step_limit,
            mode: cfg.mode,
            spectrogram_dims: [f, t, c],
            scan_dims: cfg.scan.ray_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub episode_id: String,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scores: Option<EpisodeScore>,
}

/// The latest observation plus, after a waypoint decision, the observations
/// of the raw steps executed before it.
#[derive(Debug, Clone, PartialEq)]
pub struct Percept {
    pub observation: Observation,
    pub intermediate: Vec<Observation>,
}

pub trait Agent: Send {
    fn name(&self) -> String;

    /// `engine` is the live episode. Only privileged agents (the oracle)
    /// may read it; remote agents always get `None`.
    fn begin_episode(&mut self, start: &EpisodeStart, engine: Option<&Engine>) -> Result<(), AgentError>;

    fn act(&mut self, percept: &Percept) -> Result<Decision, AgentError>;

    fn end_episode(&mut self, _end: &EpisodeEnd) -> Result<(), AgentError> {
        Ok(())
    }

    /// The harness rejected the agent's last reply; the episode is aborted.
    fn report_error(&mut self, _message: &str) {}
}

/// Drives one episode to completion. Agent and engine errors abort the
/// episode (outcome `FailureAborted`) instead of failing the run.
pub fn run_episode(
    mut engine: Engine,
    first: Observation,
    episode_id: &str,
    agent: &mut dyn Agent,
) -> Result<EpisodeLog, AgentError> {
    let start = EpisodeStart::for_engine(episode_id, &engine);
    let mut percept = Percept {
        observation: first,
        intermediate: Vec::new(),
    };
    if let Err(e) = agent.begin_episode(&start, Some(&engine)) {
        log::warn!("{episode_id}: {} failed to start: {e}", agent.name());
        agent.report_error(&e.to_string());
        engine.abort();
    }
    while !engine.is_done() {
        let decision = match agent.act(&percept) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("{episode_id}: {} aborted: {e}", agent.name());
                agent.report_error(&e.to_string());
                engine.abort();
                break;
            }
        };
        match engine.step(decision) {
            Ok(r) => {
                percept = Percept {
                    observation: r.observation,
                    intermediate: r.info.intermediate,
                };
            }
            Err(e) => {
                log::warn!("{episode_id}: rejected {decision:?}: {e}");
                agent.report_error(&e.to_string());
                engine.abort();
            }
        }
    }
    let log = engine.log();
    let scores = score_episode(&log, engine.map()).ok();
    agent.end_episode(&EpisodeEnd {
        episode_id: episode_id.to_string(),
        outcome: log.outcome,
        scores,
    })?;
    Ok(log)
}

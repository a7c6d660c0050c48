//! Benchmark suites: world construction, episode generation, execution,
//! scoring into results tables, and replay.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{AudioCondition, ConfigError, RunConfig, SoundCondition};
use crate::engine::{self, Engine, EngineError, EpisodeConfig, EpisodeLog, LogError};
use crate::gridmap::{generate_map, parse_map, AgentPose, GridMap, Heading, MapError};
use crate::metrics::{aggregate, intercept_oracle, score_episode, EpisodeScore, MetricsError, ScoreReport};
use crate::protocol::{
    run_episode, Agent, AgentError, Connection, GreedyAgent, GreedyParams, OracleAgent, ProtocolError, RandomAgent,
    RemoteAgent, DEFAULT_TIMEOUT,
};
use crate::scenario::ScenarioConfig;
use crate::soundbank::{synthesize_bank, SoundBank, SoundError, Split};

pub const SUITE_VERSION: u32 = 1;
pub const MAP_EXTENSION: &str = "davmap";
const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Map { path: PathBuf, source: MapError },
    #[error("no maps found in {0}")]
    NoMaps(PathBuf),
    #[error("unknown map {0:?}")]
    UnknownMap(String),
    #[error("the {0} split has no sounds")]
    EmptySplit(Split),
    #[error("no feasible episode after {0} attempts")]
    NoFeasibleEpisode(usize),
    #[error("missing log for episode {0}")]
    MissingLog(String),
    #[error("unknown agent {0:?} (expected random[:seed], greedy, oracle, tcp:host:port or exec:command)")]
    UnknownAgent(String),
    #[error("suite file: {0}")]
    SuiteFormat(serde_json::Error),
    #[error("suite version {0} is not supported")]
    SuiteVersion(u32),
    #[error("replay differs: recorded {recorded}, replayed {replayed}")]
    ChecksumMismatch { recorded: String, replayed: String },
    #[error(transparent)]
    Generate(#[from] MapError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sound(#[from] SoundError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Log(#[from] LogError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Maps and sounds an episode set runs on.
#[derive(Debug, Clone)]
pub struct World {
    pub maps: BTreeMap<String, Arc<GridMap>>,
    pub bank: Arc<SoundBank>,
}

pub fn generate_maps(cfg: &RunConfig) -> Result<Vec<GridMap>, MapError> {
    (0..cfg.maps.count as u64)
        .map(|i| generate_map(cfg.maps.seed + i, &cfg.maps.generator))
        .collect()
}

pub fn generate_sounds(cfg: &RunConfig) -> Result<SoundBank, SoundError> {
    let s = &cfg.sounds;
    synthesize_bank(s.seed, s.count, s.sample_rate, s.duration_s)
}

/// Writes one `<name>.davmap` per map.
pub fn save_maps(maps: &[GridMap], dir: &Path) -> Result<(), SuiteError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for m in maps {
        let path = dir.join(format!("{}.{MAP_EXTENSION}", m.name()));
        write_atomic(&path, m.to_document().as_bytes())?;
    }
    Ok(())
}

pub fn load_maps(dir: &Path) -> Result<Vec<GridMap>, SuiteError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == MAP_EXTENSION))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(SuiteError::NoMaps(dir.to_path_buf()));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            parse_map(&text).map_err(|source| SuiteError::Map {
                path: p.clone(),
                source,
            })
        })
        .collect()
}

impl World {
    pub fn new(maps: Vec<GridMap>, bank: SoundBank) -> Self {
        Self {
            maps: maps.into_iter().map(|m| (m.name().to_string(), Arc::new(m))).collect(),
            bank: Arc::new(bank),
        }
    }

    /// Loads the configured directories or regenerates from seeds.
    pub fn build(cfg: &RunConfig) -> Result<Self, SuiteError> {
        let maps = match &cfg.maps.dir {
            Some(dir) => load_maps(dir)?,
            None => generate_maps(cfg)?,
        };
        let bank = match &cfg.sounds.dir {
            Some(dir) => SoundBank::load_dir(dir, cfg.sounds.sample_rate)?,
            None => generate_sounds(cfg)?,
        };
        Ok(Self::new(maps, bank))
    }

    pub fn map(&self, name: &str) -> Result<Arc<GridMap>, SuiteError> {
        self.maps
            .get(name)
            .cloned()
            .ok_or_else(|| SuiteError::UnknownMap(name.to_string()))
    }

    pub fn reset(&self, config: &EpisodeConfig) -> Result<(Engine, engine::Observation), SuiteError> {
        Ok(Engine::reset(
            self.map(&config.map)?,
            self.bank.clone(),
            config.clone(),
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMotion {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionTags {
    pub sounds: SoundCondition,
    pub audio: AudioCondition,
    pub motion: TargetMotion,
    pub move_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub id: String,
    pub tags: ConditionTags,
    pub config: EpisodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSuite {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub config: RunConfig,
    pub episodes: Vec<EpisodeSpec>,
}

impl BenchmarkSuite {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("suite serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SuiteError> {
        let suite: Self = serde_json::from_str(text).map_err(SuiteError::SuiteFormat)?;
        if suite.version != SUITE_VERSION {
            return Err(SuiteError::SuiteVersion(suite.version));
        }
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self, SuiteError> {
        Self::from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SuiteError> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

fn split_for(c: SoundCondition) -> Split {
    match c {
        SoundCondition::Heard => Split::Train,
        SoundCondition::Unheard => Split::Test,
    }
}

/// True when the target can be caught within the step limit by an agent
/// that plans from its start pose (checked against the trajectory the
/// target realizes while the agent stands still).
pub fn is_feasible(engine: &Engine) -> Result<bool, SuiteError> {
    let mut sim = engine.clone().headless();
    let horizon = sim.config().step_limit - 1;
    for _ in 0..horizon {
        sim.step_raw(engine::RawAction::RotateLeft)?;
    }
    let r = intercept_oracle(sim.map(), engine.pose(), &sim.trajectory())?;
    Ok(r.feasible())
}

/// Draws `cfg.episodes` feasible episodes. The result depends only on
/// `(cfg, world)`; infeasible or invalid draws are resampled.
pub fn generate_suite(cfg: &RunConfig, world: &World) -> Result<BenchmarkSuite, SuiteError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_static = (cfg.episodes as f64 * cfg.static_fraction).round() as usize;
    let mut motions: Vec<TargetMotion> = (0..cfg.episodes)
        .map(|i| {
            if i < n_static {
                TargetMotion::Static
            } else {
                TargetMotion::Dynamic
            }
        })
        .collect();
    motions.shuffle(&mut rng);

    let map_names: Vec<&String> = world.maps.keys().collect();
    let scenario = cfg.scenario_config();
    let mut seeds = HashSet::new();
    let mut episodes = Vec::with_capacity(cfg.episodes);
    for (i, motion) in motions.into_iter().enumerate() {
        let sounds = *cfg.conditions.choose(&mut rng).expect("validated");
        let audio = *cfg.audio.choose(&mut rng).expect("validated");
        let move_prob = match motion {
            TargetMotion::Static => 0.0,
            TargetMotion::Dynamic => *cfg.move_probs.choose(&mut rng).expect("validated"),
        };
        let split = split_for(sounds);
        let pool = world.bank.ids(split);
        if pool.is_empty() {
            return Err(SuiteError::EmptySplit(split));
        }
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let map = world.maps[*map_names.choose(&mut rng).expect("worlds have maps")].clone();
            let cell = *map.free_cells().choose(&mut rng).expect("maps have free cells");
            let heading = Heading::ALL[rng.gen_range(0..4)];
            let target = pool.choose(&mut rng).expect("non-empty").clone();
            let seed: u64 = rng.gen();
            if seeds.contains(&seed) {
                continue;
            }
            let mut config = EpisodeConfig::new(&map, &world.bank, target, AgentPose::new(cell, heading), seed);
            config.scenario = ScenarioConfig {
                complex_enabled: audio == AudioCondition::Complex,
                ..scenario
            };
            config.audio_split = split;
            config.move_prob = move_prob;
            config.mode = cfg.mode;
            config.reward_mode = cfg.reward_mode;
            config.step_limit = cfg.step_limit;
            config.acoustics = cfg.acoustics;
            config.scan = cfg.scan;
            let engine = match Engine::reset(map, world.bank.clone(), config.clone()) {
                Ok((e, _)) => e,
                Err(e) => {
                    log::debug!("episode {i}: resampling invalid draw: {e}");
                    continue;
                }
            };
            if is_feasible(&engine)? {
                accepted = Some(config);
                break;
            }
            log::debug!("episode {i}: resampling infeasible draw");
        }
        let config = accepted.ok_or(SuiteError::NoFeasibleEpisode(MAX_ATTEMPTS))?;
        seeds.insert(config.seed);
        episodes.push(EpisodeSpec {
            id: format!("ep{i:04}"),
            tags: ConditionTags {
                sounds,
                audio,
                motion,
                move_prob,
            },
            config,
        });
    }
    Ok(BenchmarkSuite {
        version: SUITE_VERSION,
        name: cfg.name.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        episodes,
    })
}

/// Which agent drives a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentSpec {
    Random(u64),
    Greedy,
    Oracle,
    /// Listen on this address for one remote agent.
    Tcp(String),
    /// Spawn this command and talk over its stdio.
    Exec(String),
}

impl std::str::FromStr for AgentSpec {
    type Err = SuiteError;

    fn from_str(s: &str) -> Result<Self, SuiteError> {
        let unknown = || SuiteError::UnknownAgent(s.to_string());
        Ok(match s.split_once(':') {
            None => match s {
                "random" => AgentSpec::Random(0),
                "greedy" => AgentSpec::Greedy,
                "oracle" => AgentSpec::Oracle,
                _ => return Err(unknown()),
            },
            Some(("random", seed)) => AgentSpec::Random(seed.parse().map_err(|_| unknown())?),
            Some(("tcp", addr)) if !addr.is_empty() => AgentSpec::Tcp(addr.to_string()),
            Some(("exec", cmd)) if !cmd.is_empty() => AgentSpec::Exec(cmd.to_string()),
            _ => return Err(unknown()),
        })
    }
}

impl AgentSpec {
    pub fn is_remote(&self) -> bool {
        matches!(self, AgentSpec::Tcp(_) | AgentSpec::Exec(_))
    }
}

/// Greedy parameters calibrated on the heard sounds at the map resolution.
pub fn greedy_params(world: &World, config: &EpisodeConfig) -> Result<GreedyParams, SuiteError> {
    let resolution = world.map(&config.map)?.resolution();
    Ok(GreedyParams::calibrate(
        &world.bank,
        Split::Train,
        &config.acoustics,
        resolution,
    ))
}

fn local_agent(spec: &AgentSpec, world: &World, config: &EpisodeConfig) -> Result<Box<dyn Agent>, SuiteError> {
    Ok(match spec {
        AgentSpec::Random(seed) => Box::new(RandomAgent::new(*seed)),
        AgentSpec::Greedy => Box::new(GreedyAgent::new(greedy_params(world, config)?)),
        AgentSpec::Oracle => Box::new(OracleAgent::new()),
        AgentSpec::Tcp(_) | AgentSpec::Exec(_) => unreachable!("remote agents are not per-episode"),
    })
}

pub fn run_one(world: &World, episode: &EpisodeSpec, agent: &mut dyn Agent) -> Result<EpisodeLog, SuiteError> {
    let (engine, obs) = world.reset(&episode.config)?;
    Ok(run_episode(engine, obs, &episode.id, agent)?)
}

/// Runs every episode of the suite. In-process agents run in parallel with
/// a fresh instance per episode; a remote agent runs the episodes in order
/// over one session. When `out` is given each log is written atomically to
/// `out/logs/<id>.jsonl` as soon as its episode ends.
pub fn run_suite(
    suite: &BenchmarkSuite,
    world: &World,
    agent: &AgentSpec,
    out: Option<&Path>,
) -> Result<Vec<EpisodeLog>, SuiteError> {
    if let Some(dir) = out {
        let logs = dir.join("logs");
        std::fs::create_dir_all(&logs).map_err(io_err(&logs))?;
    }
    let save = |id: &str, log: &EpisodeLog| -> Result<(), SuiteError> {
        if let Some(dir) = out {
            write_atomic(&log_path(dir, id), log.to_jsonl().as_bytes())?;
        }
        Ok(())
    };
    if agent.is_remote() {
        let conn = match agent {
            AgentSpec::Tcp(addr) => Connection::listen(addr.as_str(), Some(DEFAULT_TIMEOUT))?,
            AgentSpec::Exec(cmd) => Connection::exec(cmd, Some(DEFAULT_TIMEOUT))?,
            _ => unreachable!(),
        };
        let mut remote = RemoteAgent::handshake(conn)?;
        let mut logs = Vec::with_capacity(suite.episodes.len());
        for ep in &suite.episodes {
            let log = run_one(world, ep, &mut remote)?;
            save(&ep.id, &log)?;
            logs.push(log);
        }
        remote.shutdown()?;
        return Ok(logs);
    }
    suite
        .episodes
        .par_iter()
        .map(|ep| {
            let mut a = local_agent(agent, world, &ep.config)?;
            let log = run_one(world, ep, a.as_mut())?;
            save(&ep.id, &log)?;
            Ok(log)
        })
        .collect()
}

pub fn log_path(run_dir: &Path, episode_id: &str) -> PathBuf {
    run_dir.join("logs").join(format!("{episode_id}.jsonl"))
}

pub fn read_log(path: &Path) -> Result<EpisodeLog, SuiteError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(EpisodeLog::from_jsonl_str(&text)?)
}

/// Loads the logs of every suite episode from a run directory.
pub fn load_run(suite: &BenchmarkSuite, run_dir: &Path) -> Result<Vec<EpisodeLog>, SuiteError> {
    suite
        .episodes
        .iter()
        .map(|ep| {
            let p = log_path(run_dir, &ep.id);
            if !p.exists() {
                return Err(SuiteError::MissingLog(ep.id.clone()));
            }
            read_log(&p)
        })
        .collect()
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SuiteError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub sounds: SoundCondition,
    pub audio: AudioCondition,
    pub motion: TargetMotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub key: RowKey,
    /// `None` when the suite has no episode of this condition.
    pub report: Option<ScoreReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub suite: String,
    pub rows: Vec<ResultRow>,
    pub overall: ScoreReport,
    pub episodes: Vec<(String, EpisodeScore)>,
}

/// Scores `logs` (in suite order) into one row per heard/unheard ×
/// clean/complex × static/dynamic condition. All eight rows are always
/// present.
pub fn score_suite(suite: &BenchmarkSuite, world: &World, logs: &[EpisodeLog]) -> Result<ResultsTable, SuiteError> {
    let mut scores = Vec::with_capacity(logs.len());
    for (ep, log) in suite.episodes.iter().zip(logs) {
        scores.push((ep, score_episode(log, &*world.map(&log.config.map)?)?));
    }
    let mut rows = Vec::new();
    for sounds in [SoundCondition::Heard, SoundCondition::Unheard] {
        for audio in [AudioCondition::Clean, AudioCondition::Complex] {
            for motion in [TargetMotion::Static, TargetMotion::Dynamic] {
                let key = RowKey { sounds, audio, motion };
                let subset: Vec<EpisodeScore> = scores
                    .iter()
                    .filter(|(ep, _)| ep.tags.sounds == sounds && ep.tags.audio == audio && ep.tags.motion == motion)
                    .map(|(_, s)| s.clone())
                    .collect();
                rows.push(ResultRow {
                    key,
                    report: aggregate(&subset).ok(),
                });
            }
        }
    }
    let all: Vec<EpisodeScore> = scores.iter().map(|(_, s)| s.clone()).collect();
    Ok(ResultsTable {
        suite: suite.name.clone(),
        rows,
        overall: aggregate(&all)?,
        episodes: scores.into_iter().map(|(ep, s)| (ep.id.clone(), s)).collect(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

fn name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl ResultsTable {
    /// Fixed-width text table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "suite: {}", self.suite);
        let _ = writeln!(
            s,
            "{:<8} {:<8} {:<8} {:>5} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "sounds", "audio", "target", "n", "SR", "SPL", "SNA", "DSPL", "DSNA"
        );
        let mut line = |a: &str, b: &str, c: &str, r: Option<&ScoreReport>| {
            let _ = writeln!(
                s,
                "{:<8} {:<8} {:<8} {:>5} {:>6} {:>6} {:>6} {:>6} {:>6}",
                a,
                b,
                c,
                r.map_or(0, |r| r.episodes),
                cell(r.map(|r| r.sr)),
                cell(r.and_then(|r| r.spl)),
                cell(r.and_then(|r| r.sna)),
                cell(r.map(|r| r.dspl)),
                cell(r.map(|r| r.dsna)),
            );
        };
        for row in &self.rows {
            line(
                &name(&row.key.sounds),
                &name(&row.key.audio),
                &name(&row.key.motion),
                row.report.as_ref(),
            );
        }
        line("all", "", "", Some(&self.overall));
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Re-executes the decisions recorded in `log_text` and compares checksums
/// of the recorded and replayed logs. Returns the shared digest.
pub fn replay_log(world: &World, log_text: &str) -> Result<String, SuiteError> {
    let log = EpisodeLog::from_jsonl_str(log_text)?;
    let replayed = engine::replay(world.map(&log.config.map)?, world.bank.clone(), &log)?;
    let recorded = sha256_hex(log_text.as_bytes());
    let again = sha256_hex(replayed.to_jsonl().as_bytes());
    if recorded != again {
        return Err(SuiteError::ChecksumMismatch {
            recorded,
            replayed: again,
        });
    }
    Ok(recorded)
}

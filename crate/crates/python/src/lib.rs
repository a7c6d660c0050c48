//! Python bindings: maps, the spectrogram pipeline, suites, the episode
//! simulator and the scoring functions.

use std::path::PathBuf;
use std::sync::Arc;

use davnav::acoustics::{compute_spectrogram, spectrogram_shape as shape_for_rate, BinauralFrame};
use davnav::config::RunConfig;
use davnav::engine::EpisodeLog;
use davnav::engine::{Decision, Engine, Observation, RawAction, StepResult};
use davnav::gridmap::{
    action_distance, generate_map, geodesic_field, parse_map, AgentPose, Cell, GridMap, Heading, MapGenParams,
};
use davnav::metrics::{intercept_oracle as oracle, score_episode, success_weighted as weighted};
use davnav::suite::{generate_suite, run_suite, score_suite, AgentSpec, BenchmarkSuite, World};
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

pub fn parse_heading(s: &str) -> Option<Heading> {
    match s.to_ascii_lowercase().as_str() {
        "north" | "n" => Some(Heading::North),
        "east" | "e" => Some(Heading::East),
        "south" | "s" => Some(Heading::South),
        "west" | "w" => Some(Heading::West),
        _ => None,
    }
}

pub fn parse_raw_action(s: &str) -> Option<RawAction> {
    match s {
        "forward" => Some(RawAction::Forward),
        "rotate_left" | "left" => Some(RawAction::RotateLeft),
        "rotate_right" | "right" => Some(RawAction::RotateRight),
        "stop" => Some(RawAction::Stop),
        _ => None,
    }
}

fn heading_arg(s: &str) -> PyResult<Heading> {
    parse_heading(s).ok_or_else(|| value_err(format!("unknown heading {s:?}")))
}

fn cell((row, col): (usize, usize)) -> Cell {
    Cell::new(row, col)
}

#[pyclass(name = "GridMap", frozen)]
struct PyGridMap {
    inner: Arc<GridMap>,
}

#[pymethods]
impl PyGridMap {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(parse_map(text).map_err(value_err)?),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (seed, width = 16, height = 16, rooms = 4))]
    fn generate(seed: u64, width: usize, height: usize, rooms: usize) -> PyResult<Self> {
        let params = MapGenParams {
            width,
            height,
            rooms,
            ..MapGenParams::default()
        };
        Ok(Self {
            inner: Arc::new(generate_map(seed, &params).map_err(value_err)?),
        })
    }

    #[staticmethod]
    fn open(width: usize, height: usize, resolution: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(GridMap::open(width, height, resolution).map_err(value_err)?),
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.inner.resolution()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    fn is_free(&self, row: usize, col: usize) -> bool {
        self.inner.is_free(Cell::new(row, col))
    }

    fn free_cells(&self) -> Vec<(usize, usize)> {
        self.inner.free_cells().iter().map(|c| (c.row, c.col)).collect()
    }

    fn to_document(&self) -> String {
        self.inner.to_document()
    }

    /// Geodesic distance in meters, or None when unreachable.
    fn geodesic_distance(&self, a: (usize, usize), b: (usize, usize)) -> PyResult<Option<f64>> {
        self.inner.check_free(cell(b)).map_err(value_err)?;
        let field = geodesic_field(&self.inner, cell(a)).map_err(value_err)?;
        Ok(field.meters(cell(b)))
    }

    /// Minimum number of Forward/Rotate actions from a pose to a cell.
    fn action_distance(&self, start: (usize, usize), heading: &str, goal: (usize, usize)) -> PyResult<Option<u32>> {
        let pose = AgentPose::new(cell(start), heading_arg(heading)?);
        action_distance(&self.inner, pose, cell(goal)).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "GridMap(name={:?}, width={}, height={}, resolution={})",
            self.inner.name(),
            self.inner.width(),
            self.inner.height(),
            self.inner.resolution()
        )
    }
}

/// Log-magnitude binaural spectrogram of a one-second frame. Returns the
/// shape and the row-major values (frequency, time, ear).
#[pyfunction]
fn spectrogram(left: Vec<f32>, right: Vec<f32>, sample_rate: u32) -> PyResult<((usize, usize, usize), Vec<f32>)> {
    let frame = BinauralFrame {
        left,
        right,
        sample_rate,
    };
    let s = compute_spectrogram(&frame).map_err(value_err)?;
    Ok((s.shape(), s.values))
}

#[pyfunction]
fn spectrogram_shape(sample_rate: u32) -> (usize, usize, usize) {
    shape_for_rate(sample_rate)
}

#[pyfunction]
fn success_weighted(success: bool, optimal: f64, taken: f64) -> f64 {
    weighted(success, optimal, taken)
}

type PyCatch = (usize, (usize, usize), f64, u32);

/// Earliest catch `(t, cell, g_meters, g_actions)` on a realized
/// trajectory, or None when the target cannot be reached in time.
#[pyfunction]
fn intercept_oracle(
    map: &PyGridMap,
    start: (usize, usize),
    heading: &str,
    trajectory: Vec<(usize, usize)>,
) -> PyResult<Option<PyCatch>> {
    let pose = AgentPose::new(cell(start), heading_arg(heading)?);
    let traj: Vec<Cell> = trajectory.into_iter().map(cell).collect();
    let r = oracle(&map.inner, pose, &traj).map_err(value_err)?;
    Ok(r.earliest
        .map(|c| (c.t, (c.cell.row, c.cell.col), c.g_meters, c.g_actions)))
}

fn observation_dict<'py>(py: Python<'py>, obs: &Observation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("spectrogram", obs.spectrogram.values.clone())?;
    d.set_item("shape", obs.spectrogram.shape())?;
    d.set_item("ranges", obs.scan.ranges.clone())?;
    d.set_item("collided", obs.collided)?;
    d.set_item("step_index", obs.step_index)?;
    Ok(d)
}

fn score_dict<'py>(py: Python<'py>, log: &EpisodeLog, map: &GridMap) -> PyResult<Bound<'py, PyDict>> {
    let s = score_episode(log, map).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("success", s.success)?;
    d.set_item("spl", s.spl)?;
    d.set_item("sna", s.sna)?;
    d.set_item("dspl", s.dspl)?;
    d.set_item("dsna", s.dsna)?;
    d.set_item("g_meters", s.g_meters)?;
    d.set_item("path_length_m", s.p_meters)?;
    d.set_item("actions", s.actions)?;
    Ok(d)
}

#[pyclass(name = "Simulator")]
struct PySimulator {
    engine: Engine,
}

#[pymethods]
impl PySimulator {
    /// Advances the episode. `action` is a raw action name ("forward",
    /// "rotate_left", "rotate_right", "stop") or a waypoint index 0..=8.
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        action: &Bound<'py, PyAny>,
    ) -> PyResult<(Bound<'py, PyDict>, f64, bool, Bound<'py, PyDict>)> {
        let decision = if let Ok(i) = action.extract::<u8>() {
            Decision::Waypoint(i)
        } else if let Ok(name) = action.extract::<String>() {
            Decision::Raw(parse_raw_action(&name).ok_or_else(|| value_err(format!("unknown action {name:?}")))?)
        } else {
            return Err(value_err("action must be a raw action name or a waypoint index"));
        };
        let StepResult {
            observation,
            reward,
            done,
            info,
        } = self.engine.step(decision).map_err(value_err)?;
        let i = PyDict::new(py);
        i.set_item("collided", info.collided)?;
        i.set_item("invalid_waypoint", info.invalid_waypoint)?;
        i.set_item("raw_actions", info.raw_actions)?;
        i.set_item("outcome", info.outcome.map(|o| format!("{o:?}")))?;
        Ok((observation_dict(py, &observation)?, reward, done, i))
    }

    #[getter]
    fn pose(&self) -> ((usize, usize), String) {
        let p = self.engine.pose();
        ((p.cell.row, p.cell.col), format!("{:?}", p.heading).to_lowercase())
    }

    #[getter]
    fn target(&self) -> (usize, usize) {
        let c = self.engine.target().cell;
        (c.row, c.col)
    }

    #[getter]
    fn done(&self) -> bool {
        self.engine.is_done()
    }

    #[getter]
    fn outcome(&self) -> Option<String> {
        self.engine.outcome().map(|o| format!("{o:?}"))
    }

    #[getter]
    fn total_reward(&self) -> f64 {
        self.engine.total_reward()
    }

    /// The episode log as line-delimited JSON.
    fn log_jsonl(&self) -> String {
        self.engine.log().to_jsonl()
    }

    /// Scores of the finished episode.
    fn score<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        score_dict(py, &self.engine.log(), self.engine.map())
    }
}

#[pyclass(name = "Suite", frozen)]
struct PySuite {
    suite: BenchmarkSuite,
    world: World,
}

#[pymethods]
impl PySuite {
    /// Builds maps and sounds and draws feasible episodes from a TOML run
    /// configuration (empty string for the defaults).
    #[staticmethod]
    #[pyo3(signature = (config_toml = ""))]
    fn generate(config_toml: &str) -> PyResult<Self> {
        let cfg = if config_toml.trim().is_empty() {
            RunConfig::default()
        } else {
            RunConfig::from_toml(config_toml).map_err(value_err)?
        };
        let world = World::build(&cfg).map_err(value_err)?;
        let suite = generate_suite(&cfg, &world).map_err(value_err)?;
        Ok(Self { suite, world })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let suite = BenchmarkSuite::load(&path).map_err(value_err)?;
        let world = World::build(&suite.config).map_err(value_err)?;
        Ok(Self { suite, world })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.suite.save(&path).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.suite.episodes.len()
    }

    fn episode_ids(&self) -> Vec<String> {
        self.suite.episodes.iter().map(|e| e.id.clone()).collect()
    }

    /// Starts episode `index`; returns the simulator and first observation.
    fn reset<'py>(&self, py: Python<'py>, index: usize) -> PyResult<(PySimulator, Bound<'py, PyDict>)> {
        let ep = self
            .suite
            .episodes
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("episode {index} of {}", self.suite.episodes.len())))?;
        let (engine, obs) = self.world.reset(&ep.config).map_err(value_err)?;
        let d = observation_dict(py, &obs)?;
        Ok((PySimulator { engine }, d))
    }

    /// Runs a built-in agent ("random[:seed]", "greedy" or "oracle") over
    /// the suite and returns the rendered results table.
    fn run(&self, agent: &str) -> PyResult<String> {
        let spec: AgentSpec = agent.parse().map_err(value_err)?;
        if spec.is_remote() {
            return Err(value_err("remote agents are driven from the command line"));
        }
        let logs = run_suite(&self.suite, &self.world, &spec, None).map_err(value_err)?;
        let table = score_suite(&self.suite, &self.world, &logs).map_err(value_err)?;
        Ok(table.render())
    }

    /// Scores one episode log given as line-delimited JSON.
    fn score_log<'py>(&self, py: Python<'py>, jsonl: &str) -> PyResult<Bound<'py, PyDict>> {
        let log = EpisodeLog::from_jsonl_str(jsonl).map_err(value_err)?;
        let map = self.world.map(&log.config.map).map_err(value_err)?;
        score_dict(py, &log, &map)
    }
}

#[pymodule]
fn davnav_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridMap>()?;
    m.add_class::<PySimulator>()?;
    m.add_class::<PySuite>()?;
    m.add_function(wrap_pyfunction!(spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(spectrogram_shape, m)?)?;
    m.add_function(wrap_pyfunction!(success_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(intercept_oracle, m)?)?;
    Ok(())
}

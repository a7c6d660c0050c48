//! Episode scoring and the interception oracle.
//!
//! The oracle takes the target's realized trajectory `τ(0..=T)` and finds
//! the earliest step `t` at which the agent, starting from its initial pose,
//! could already stand on `τ(t)`. Reach time counts rotations and follows
//! geodesically shortest paths, so an agent that walks the oracle plan
//! covers exactly the geodesic distance `g`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EpisodeLog, Outcome};
use crate::gridmap::{geodesic_field, ActionField, AgentPose, Cell, GridMap, MapError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory entry {index} is not a free cell: {cell}")]
    CorruptTrajectory { index: usize, cell: Cell },
    #[error("no episodes to aggregate")]
    NoEpisodes,
    #[error(transparent)]
    Map(#[from] MapError),
}

/// A catchable `(t, τ(t))` pair with the agent's shortest-path quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Catch {
    pub t: usize,
    pub cell: Cell,
    pub g_cells: u32,
    pub g_meters: f64,
    pub g_actions: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterceptResult {
    /// Earliest catchable step.
    pub earliest: Option<Catch>,
    /// Catchable step with the smallest geodesic distance (earliest on ties).
    pub closest: Option<Catch>,
}

impl InterceptResult {
    pub fn feasible(&self) -> bool {
        self.earliest.is_some()
    }
}

pub fn intercept_oracle(map: &GridMap, start: AgentPose, trajectory: &[Cell]) -> Result<InterceptResult, MetricsError> {
    if trajectory.is_empty() {
        return Err(MetricsError::EmptyTrajectory);
    }
    if let Some((index, &cell)) = trajectory.iter().enumerate().find(|(_, c)| !map.is_free(**c)) {
        return Err(MetricsError::CorruptTrajectory { index, cell });
    }
    let reach = ActionField::along_geodesics(map, start)?;
    let geo = geodesic_field(map, start.cell)?;
    let resolution = map.resolution();

    let mut earliest: Option<Catch> = None;
    let mut closest: Option<Catch> = None;
    for (t, &cell) in trajectory.iter().enumerate() {
        let Some(actions) = reach.to_cell(cell) else { continue };
        if actions as usize > t {
            continue;
        }
        let g_cells = geo.cells(cell).expect("reached cells have a geodesic distance");
        let c = Catch {
            t,
            cell,
            g_cells,
            g_meters: g_cells as f64 * resolution,
            g_actions: actions,
        };
        earliest.get_or_insert(c);
        if closest.is_none_or(|b| c.g_cells < b.g_cells) {
            closest = Some(c);
        }
    }
    Ok(InterceptResult { earliest, closest })
}

/// `S · g / max(p, g)`; a zero-length optimum scores `S`.
pub fn success_weighted(success: bool, optimal: f64, taken: f64) -> f64 {
    if !success {
        0.0
    } else if optimal == 0.0 {
        1.0
    } else {
        optimal / taken.max(optimal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub success: bool,
    pub static_target: bool,
    /// Geodesic length to the earliest reachable intersection.
    pub g_meters: Option<f64>,
    pub g_actions: Option<u32>,
    pub p_meters: f64,
    pub actions: usize,
    /// Only defined for static targets.
    pub spl: Option<f64>,
    pub sna: Option<f64>,
    pub dspl: f64,
    pub dsna: f64,
}

pub fn score_episode(log: &EpisodeLog, map: &GridMap) -> Result<EpisodeScore, MetricsError> {
    let success = log.outcome == Outcome::Success;
    let start = log.config.start;
    let intercept = intercept_oracle(map, start, &log.trajectory)?;
    let static_target = log.config.move_prob == 0.0;

    let (g_meters, g_actions) = match intercept.earliest {
        Some(c) => (Some(c.g_meters), Some(c.g_actions)),
        None => (None, None),
    };
    let dspl = g_meters.map_or(0.0, |g| success_weighted(success, g, log.path_length_m));
    let dsna = g_actions.map_or(0.0, |g| success_weighted(success, g as f64, log.action_count as f64));

    let (spl, sna) = if static_target {
        let goal = log.trajectory[0];
        let g = geodesic_field(map, start.cell)?.meters(goal);
        let ga = ActionField::along_geodesics(map, start)?.to_cell(goal);
        (
            Some(g.map_or(0.0, |g| success_weighted(success, g, log.path_length_m))),
            Some(ga.map_or(0.0, |g| success_weighted(success, g as f64, log.action_count as f64))),
        )
    } else {
        (None, None)
    };

    Ok(EpisodeScore {
        success,
        static_target,
        g_meters,
        g_actions,
        p_meters: log.path_length_m,
        actions: log.action_count,
        spl,
        sna,
        dspl,
        dsna,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub episodes: usize,
    pub sr: f64,
    /// Mean over static-target episodes, if any.
    pub spl: Option<f64>,
    pub sna: Option<f64>,
    pub dspl: f64,
    pub dsna: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(scores: &[EpisodeScore]) -> Result<ScoreReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::NoEpisodes);
    }
    let avg = |f: fn(&EpisodeScore) -> f64| mean(scores.iter().map(f)).expect("non-empty");
    Ok(ScoreReport {
        episodes: scores.len(),
        sr: avg(|s| if s.success { 1.0 } else { 0.0 }),
        spl: mean(scores.iter().filter_map(|s| s.spl)),
        sna: mean(scores.iter().filter_map(|s| s.sna)),
        dspl: avg(|s| s.dspl),
        dsna: avg(|s| s.dsna),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::{parse_map, Heading};

    fn score(success: bool, dspl: f64) -> EpisodeScore {
        EpisodeScore {
            success,
            static_target: false,
            g_meters: Some(1.0),
            g_actions: Some(1),
            p_meters: 1.0,
            actions: 1,
            spl: None,
            sna: None,
            dspl,
            dsna: dspl,
        }
    }

    #[test]
    fn success_weighting() {
        assert_eq!(success_weighted(true, 5.0, 5.0), 1.0);
        assert_eq!(success_weighted(false, 5.0, 5.0), 0.0);
        assert_eq!(success_weighted(true, 4.0, 8.0), 0.5);
        assert_eq!(success_weighted(true, 4.0, 2.0), 1.0);
        assert_eq!(success_weighted(true, 0.0, 3.0), 1.0);
    }

    #[test]
    fn aggregation() {
        assert_eq!(aggregate(&[]), Err(MetricsError::NoEpisodes));
        let one = aggregate(&[score(true, 1.0)]).unwrap();
        assert_eq!((one.sr, one.dspl, one.dsna), (1.0, 1.0, 1.0));
        let pair = [score(true, 1.0), score(false, 0.0)];
        let r = aggregate(&pair).unwrap();
        assert_eq!(r.dspl, 0.5);
        let doubled: Vec<_> = pair.iter().chain(&pair).cloned().collect();
        let r2 = aggregate(&doubled).unwrap();
        assert_eq!((r2.sr, r2.dspl, r2.dsna), (r.sr, r.dspl, r.dsna));
        assert_eq!(r.spl, None);
    }

    #[test]
    fn corridor_head_on_intercept() {
        // cells (1,1)..=(1,11); agent at index 0 faces the target at index 10
        let row: String = ".".repeat(11);
        let m = parse_map(&format!("davmap v1\nresolution 0.5\nname c\n{row}\n")).unwrap();
        let start = AgentPose::new(Cell::new(1, 1), Heading::East);
        let traj: Vec<Cell> = (0..=10).map(|t| Cell::new(1, 11 - t)).collect();
        let r = intercept_oracle(&m, start, &traj).unwrap();
        let c = r.earliest.unwrap();
        assert_eq!(c.t, 5);
        assert_eq!(c.cell, Cell::new(1, 6));
        assert_eq!(c.g_meters, 2.5);
        assert_eq!(c.g_actions, 5);
    }

    #[test]
    fn static_trajectory_matches_reach_time() {
        let m = crate::gridmap::GridMap::open(8, 8, 1.0).unwrap();
        let start = AgentPose::new(Cell::new(1, 1), Heading::South);
        let goal = Cell::new(6, 6);
        let r = intercept_oracle(&m, start, &vec![goal; 40]).unwrap();
        let c = r.earliest.unwrap();
        let reach = crate::gridmap::geodesic_action_distance(&m, start, goal)
            .unwrap()
            .unwrap();
        assert_eq!(c.t, reach as usize);
        assert_eq!(c.cell, goal);
        assert_eq!(c.g_meters, 10.0);
        assert_eq!(r.closest, r.earliest);
    }

    #[test]
    fn sealed_target_is_infeasible() {
        let m = parse_map("davmap v1\nresolution 1\nname s\n#####\n#.#.#\n#####\n").unwrap();
        let start = AgentPose::new(Cell::new(1, 1), Heading::North);
        let r = intercept_oracle(&m, start, &[Cell::new(1, 3); 10]).unwrap();
        assert!(!r.feasible());
        assert!(matches!(
            intercept_oracle(&m, start, &[Cell::new(1, 2)]),
            Err(MetricsError::CorruptTrajectory { index: 0, .. })
        ));
        assert_eq!(intercept_oracle(&m, start, &[]), Err(MetricsError::EmptyTrajectory));
    }
}

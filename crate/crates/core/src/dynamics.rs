//! The moving sound source. It walks a shortest path toward a random goal,
//! advancing one cell per step with probability `move_prob`, and draws a
//! new goal on arrival.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridmap::{geodesic_field, path_toward, Cell, GeodesicField, GridMap, Heading};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("no free cell other than the agent's can host the target")]
    NoSpawnCell,
    #[error("move probability {0} outside [0, 1]")]
    BadProbability(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub cell: Cell,
    pub goal: Cell,
    /// Remaining shortest path, `planned_path[0] == cell`, last is `goal`.
    pub planned_path: Vec<Cell>,
    /// One `(step_index, cell)` entry per elapsed step, starting at step 0.
    pub trajectory: Vec<(usize, Cell)>,
    pub move_prob: f64,
}

impl TargetState {
    pub fn cells(&self) -> Vec<Cell> {
        self.trajectory.iter().map(|&(_, c)| c).collect()
    }

    pub fn is_static(&self) -> bool {
        self.move_prob == 0.0
    }
}

/// Uniform draw from the free cells satisfying `eligible`, by rejection over
/// the whole free list. The number of draws consumed only depends on which
/// cells are rejected.
fn draw_cell<R: Rng + ?Sized>(rng: &mut R, map: &GridMap, eligible: impl Fn(Cell) -> bool) -> Option<Cell> {
    let free = map.free_cells();
    if !free.iter().any(|&c| eligible(c)) {
        return None;
    }
    loop {
        let c = free[rng.gen_range(0..free.len())];
        if eligible(c) {
            return Some(c);
        }
    }
}

fn plan_path(map: &GridMap, from: Cell, goal: Cell) -> Vec<Cell> {
    let field = geodesic_field(map, goal).expect("goals are free cells");
    path_toward(map, &field, from, Heading::North).expect("goals are drawn reachable")
}

fn reachable_from(map: &GridMap, from: Cell) -> GeodesicField {
    geodesic_field(map, from).expect("target cells are free")
}

/// Places the target uniformly on a free cell other than the agent's and
/// draws its first goal (not the agent's cell, not its own start).
pub fn spawn_target<R: Rng + ?Sized>(
    rng: &mut R,
    map: &GridMap,
    agent_cell: Cell,
    move_prob: f64,
) -> Result<TargetState, DynamicsError> {
    if !(0.0..=1.0).contains(&move_prob) {
        return Err(DynamicsError::BadProbability(move_prob));
    }
    let agent_field = geodesic_field(map, agent_cell).ok();
    let start = draw_cell(rng, map, |c| {
        c != agent_cell && agent_field.as_ref().is_none_or(|f| f.is_reachable(c))
    })
    .ok_or(DynamicsError::NoSpawnCell)?;
    let field = reachable_from(map, start);
    // with nowhere else to go the target holds its start cell
    let goal = draw_cell(rng, map, |c| c != agent_cell && c != start && field.is_reachable(c)).unwrap_or(start);
    Ok(TargetState {
        cell: start,
        goal,
        planned_path: plan_path(map, start, goal),
        trajectory: vec![(0, start)],
        move_prob,
    })
}

/// Advances the target one step. On arrival at its goal the target draws a
/// fresh goal (excluding the agent's cell and its own) and replans.
pub fn step_target<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut TargetState,
    map: &GridMap,
    agent_cell: Cell,
    step_index: usize,
) {
    if rng.gen_bool(state.move_prob) && state.planned_path.len() > 1 {
        state.planned_path.remove(0);
        state.cell = state.planned_path[0];
        if state.cell == state.goal {
            let field = reachable_from(map, state.cell);
            let current = state.cell;
            match draw_cell(rng, map, |c| c != agent_cell && c != current && field.is_reachable(c)) {
                Some(goal) => {
                    state.goal = goal;
                    state.planned_path = plan_path(map, current, goal);
                }
                None => state.planned_path = vec![current],
            }
        }
    }
    state.trajectory.push((step_index, state.cell));
}

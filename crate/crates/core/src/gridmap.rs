//! Occupancy-grid worlds, geodesic and action-level shortest paths, range
//! sensing and the allocentric geometric map built from it.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &str = "davmap v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("missing `{0}` header")]
    MissingHeader(&'static str),
    #[error("malformed header on line {line}: {text:?}")]
    BadHeader { line: usize, text: String },
    #[error("row {line} has {found} columns, expected {expected}")]
    NonRectangular { line: usize, expected: usize, found: usize },
    #[error("unknown character {ch:?} at line {line}, column {col}")]
    UnknownChar { line: usize, col: usize, ch: char },
    #[error("map has no rows")]
    Empty,
    #[error("map has no free cells")]
    NoFreeCells,
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("border cell {0} is not occupied")]
    OpenBorder(Cell),
    #[error("occupancy has {found} cells, expected {expected}")]
    OccupancyLength { expected: usize, found: usize },
    #[error("cell {0} is occupied or outside the map")]
    NotFree(Cell),
    #[error("infeasible generator parameters: {0}")]
    InfeasibleParams(String),
    #[error("dimension mismatch: map is {expected:?}, got {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// A grid cell addressed by row (north to south) and column (west to east).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Neighbor one step in `heading`, if it does not underflow.
    pub fn step(self, heading: Heading) -> Option<Cell> {
        let (dr, dc) = heading.delta();
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        Some(Cell { row, col })
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.manhattan(other) == 1
    }
}

impl From<(usize, usize)> for Cell {
    fn from((row, col): (usize, usize)) -> Self {
        Cell { row, col }
    }
}

impl From<Cell> for (usize, usize) {
    fn from(c: Cell) -> Self {
        (c.row, c.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Self::ALL[i % 4]
    }

    /// Counter-clockwise quarter turn.
    pub fn left(self) -> Heading {
        Self::from_index(self.index() + 3)
    }

    /// Clockwise quarter turn.
    pub fn right(self) -> Heading {
        Self::from_index(self.index() + 1)
    }

    pub fn opposite(self) -> Heading {
        Self::from_index(self.index() + 2)
    }

    /// (row, col) offset of one forward step.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    /// World angle in radians, counter-clockwise from east.
    pub fn angle(self) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Heading::East => 0.0,
            Heading::North => FRAC_PI_2,
            Heading::West => PI,
            Heading::South => -FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub cell: Cell,
    pub heading: Heading,
}

impl AgentPose {
    pub const fn new(cell: Cell, heading: Heading) -> Self {
        Self { cell, heading }
    }
}

/// Low-level motions of the agent (the movement part of the action space).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Forward,
    RotateLeft,
    RotateRight,
}

impl Motion {
    /// Order in which pose-graph searches expand successors.
    const EXPANSION: [Motion; 3] = [Motion::Forward, Motion::RotateLeft, Motion::RotateRight];
}

/// Sealed occupancy grid. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    resolution: f64,
    occupied: Vec<bool>,
    name: String,
    free: Vec<Cell>,
}

impl GridMap {
    /// Builds a map from row-major occupancy. The border must already be
    /// occupied.
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        occupied: Vec<bool>,
        name: impl Into<String>,
    ) -> Result<Self, MapError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(MapError::InvalidResolution(resolution));
        }
        if width == 0 || height == 0 {
            return Err(MapError::Empty);
        }
        if occupied.len() != width * height {
            return Err(MapError::OccupancyLength {
                expected: width * height,
                found: occupied.len(),
            });
        }
        for row in 0..height {
            for col in 0..width {
                let border = row == 0 || col == 0 || row + 1 == height || col + 1 == width;
                if border && !occupied[row * width + col] {
                    return Err(MapError::OpenBorder(Cell::new(row, col)));
                }
            }
        }
        let free: Vec<Cell> = (0..height)
            .flat_map(|row| (0..width).map(move |col| Cell::new(row, col)))
            .filter(|c| !occupied[c.row * width + c.col])
            .collect();
        if free.is_empty() {
            return Err(MapError::NoFreeCells);
        }
        Ok(Self {
            width,
            height,
            resolution,
            occupied,
            name: name.into(),
            free,
        })
    }

    /// A rectangular room: `width`×`height` cells including the wall ring.
    pub fn open(width: usize, height: usize, resolution: f64) -> Result<Self, MapError> {
        let occupied = (0..height)
            .flat_map(|r| (0..width).map(move |c| r == 0 || c == 0 || r + 1 == height || c + 1 == width))
            .collect();
        GridMap::new(width, height, resolution, occupied, "open")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.occupied[self.index(c)]
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        !self.is_free(c)
    }

    /// Traversable cells in row-major order.
    pub fn free_cells(&self) -> &[Cell] {
        &self.free
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    /// Free 4-neighbors of `c` in N, E, S, W order.
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        Heading::ALL
            .into_iter()
            .filter_map(move |h| c.step(h))
            .filter(move |n| self.is_free(*n))
    }

    pub fn check_free(&self, c: Cell) -> Result<(), MapError> {
        if self.is_free(c) {
            Ok(())
        } else {
            Err(MapError::NotFree(c))
        }
    }

    /// Serializes to the `davmap v1` text document.
    pub fn to_document(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height + 64);
        out.push_str(MAGIC);
        out.push('\n');
        out.push_str(&format!("resolution {}\n", self.resolution));
        out.push_str(&format!("name {}\n", self.name));
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(if self.occupied[row * self.width + col] {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a `davmap v1` document.
///
/// A grid whose outer ring is already all `#` is taken as-is; otherwise a
/// ring of walls is added around it so the world is always sealed.
pub fn parse_map(text: &str) -> Result<GridMap, MapError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));

    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        Some((line, l)) => {
            return Err(MapError::BadHeader {
                line,
                text: l.to_string(),
            })
        }
        None => return Err(MapError::MissingHeader("davmap v1")),
    }

    let resolution = match lines.next() {
        Some((line, l)) => match l.strip_prefix("resolution ") {
            Some(v) => v.trim().parse::<f64>().map_err(|_| MapError::BadHeader {
                line,
                text: l.to_string(),
            })?,
            None => return Err(MapError::MissingHeader("resolution")),
        },
        None => return Err(MapError::MissingHeader("resolution")),
    };
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(MapError::InvalidResolution(resolution));
    }

    let name = match lines.next() {
        Some((_, l)) => match l.strip_prefix("name ") {
            Some(v) => v.to_string(),
            None if l == "name" => String::new(),
            None => return Err(MapError::MissingHeader("name")),
        },
        None => return Err(MapError::MissingHeader("name")),
    };

    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (line, l) in lines {
        if l.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(l.len());
        for (i, ch) in l.chars().enumerate() {
            match ch {
                '#' => row.push(true),
                '.' => row.push(false),
                other => {
                    return Err(MapError::UnknownChar {
                        line,
                        col: i + 1,
                        ch: other,
                    })
                }
            }
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(MapError::NonRectangular {
                    line,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(MapError::Empty);
    }

    let (h, w) = (rows.len(), rows[0].len());
    let sealed = (0..h).all(|r| rows[r][0] && rows[r][w - 1]) && rows[0].iter().chain(&rows[h - 1]).all(|&o| o);
    let (width, height, occupied) = if sealed {
        (w, h, rows.concat())
    } else {
        let (width, height) = (w + 2, h + 2);
        let mut occ = vec![true; width * height];
        for (r, row) in rows.iter().enumerate() {
            for (c, &o) in row.iter().enumerate() {
                occ[(r + 1) * width + c + 1] = o;
            }
        }
        (width, height, occ)
    };
    GridMap::new(width, height, resolution, occupied, name)
}

/// Rooms-and-corridors generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGenParams {
    pub width: usize,
    pub height: usize,
    pub rooms: usize,
    pub min_room: usize,
    pub max_room: usize,
    pub resolution: f64,
}

impl Default for MapGenParams {
    fn default() -> Self {
        Self {
            width: 16,
            height: 16,
            rooms: 4,
            min_room: 3,
            max_room: 6,
            resolution: 0.5,
        }
    }
}

impl MapGenParams {
    fn validate(&self) -> Result<(), MapError> {
        let bad = |m: String| Err(MapError::InfeasibleParams(m));
        if self.width < 5 || self.height < 5 {
            return bad(format!("dimensions {}x{} below 5x5", self.width, self.height));
        }
        if self.rooms == 0 {
            return bad("at least one room required".into());
        }
        if self.min_room == 0 || self.min_room > self.max_room {
            return bad(format!(
                "room size range {}..={} is empty",
                self.min_room, self.max_room
            ));
        }
        let inner = self.width.min(self.height) - 2;
        if self.max_room > inner {
            return bad(format!("max_room {} exceeds interior {}", self.max_room, inner));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(MapError::InvalidResolution(self.resolution));
        }
        Ok(())
    }
}

/// Carves random rectangular rooms and joins consecutive room centers with
/// L-shaped corridors, so free space is one connected component.
pub fn generate_map(seed: u64, params: &MapGenParams) -> Result<GridMap, MapError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (params.width, params.height);
    let mut occ = vec![true; w * h];
    let mut centers: Vec<Cell> = Vec::with_capacity(params.rooms);

    for _ in 0..params.rooms {
        let rw = rng.gen_range(params.min_room..=params.max_room);
        let rh = rng.gen_range(params.min_room..=params.max_room);
        let top = rng.gen_range(1..=h - 1 - rh);
        let left = rng.gen_range(1..=w - 1 - rw);
        for r in top..top + rh {
            for c in left..left + rw {
                occ[r * w + c] = false;
            }
        }
        let center = Cell::new(top + rh / 2, left + rw / 2);
        if let Some(&prev) = centers.last() {
            carve_corridor(&mut occ, w, prev, center, rng.gen_bool(0.5));
        }
        centers.push(center);
    }
    GridMap::new(w, h, params.resolution, occ, format!("gen-{seed}"))
}

fn carve_corridor(occ: &mut [bool], w: usize, a: Cell, b: Cell, horizontal_first: bool) {
    let corner = if horizontal_first {
        Cell::new(a.row, b.col)
    } else {
        Cell::new(b.row, a.col)
    };
    for (from, to) in [(a, corner), (corner, b)] {
        for r in from.row.min(to.row)..=from.row.max(to.row) {
            for c in from.col.min(to.col)..=from.col.max(to.col) {
                occ[r * w + c] = false;
            }
        }
    }
}

/// Breadth-first distances from a source cell over the 4-connected free
/// graph. Unreachable and occupied cells hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    source: Cell,
    width: usize,
    resolution: f64,
    steps: Vec<Option<u32>>,
}

impl GeodesicField {
    pub fn source(&self) -> Cell {
        self.source
    }

    /// Distance in cells.
    pub fn cells(&self, c: Cell) -> Option<u32> {
        if c.col >= self.width {
            return None;
        }
        self.steps.get(c.row * self.width + c.col).copied().flatten()
    }

    /// Distance in meters.
    pub fn meters(&self, c: Cell) -> Option<f64> {
        self.cells(c).map(|s| s as f64 * self.resolution)
    }

    pub fn is_reachable(&self, c: Cell) -> bool {
        self.cells(c).is_some()
    }
}

pub fn geodesic_field(map: &GridMap, source: Cell) -> Result<GeodesicField, MapError> {
    map.check_free(source)?;
    let mut steps = vec![None; map.width * map.height];
    let mut queue = VecDeque::new();
    steps[map.index(source)] = Some(0u32);
    queue.push_back(source);
    while let Some(c) = queue.pop_front() {
        let d = steps[map.index(c)].expect("queued cells are labelled");
        for n in map.neighbors(c) {
            let i = map.index(n);
            if steps[i].is_none() {
                steps[i] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    Ok(GeodesicField {
        source,
        width: map.width,
        resolution: map.resolution,
        steps,
    })
}

/// First step of one shortest path from `from` toward the source of `field`,
/// preferring ahead, then left, right and behind relative to `heading`.
/// Returns `None` when `from` is the source or unreachable.
pub fn first_step_toward(map: &GridMap, field: &GeodesicField, from: Cell, heading: Heading) -> Option<Heading> {
    let d = field.cells(from)?;
    if d == 0 {
        return None;
    }
    [heading, heading.left(), heading.right(), heading.opposite()]
        .into_iter()
        .find(|&h| {
            from.step(h)
                .filter(|n| map.is_free(*n))
                .and_then(|n| field.cells(n))
                .is_some_and(|nd| nd + 1 == d)
        })
}

/// One BFS shortest cell path from `from` to the source of `field`
/// (inclusive at both ends), using the same tie-break as
/// [`first_step_toward`] with a heading that follows the path.
pub fn path_toward(map: &GridMap, field: &GeodesicField, from: Cell, mut heading: Heading) -> Option<Vec<Cell>> {
    field.cells(from)?;
    let mut path = vec![from];
    let mut cur = from;
    while let Some(h) = first_step_toward(map, field, cur, heading) {
        cur = cur.step(h).expect("step validated by first_step_toward");
        heading = h;
        path.push(cur);
    }
    Some(path)
}

/// Breadth-first search over the pose graph (cell × heading) from a start
/// pose, with parent links for plan extraction.
#[derive(Debug, Clone)]
pub struct ActionField {
    start: AgentPose,
    width: usize,
    steps: Vec<Option<u32>>,
    parent: Vec<Option<(u32, Motion)>>,
}

impl ActionField {
    /// Minimum action counts over the unrestricted pose graph.
    pub fn from_pose(map: &GridMap, start: AgentPose) -> Result<Self, MapError> {
        Self::search(map, start, None)
    }

    /// Minimum action counts when following geodesically shortest cell
    /// paths only: forward moves must increase the distance from the start
    /// by exactly one cell. Reached cells are therefore reached over a path
    /// of geodesic length.
    pub fn along_geodesics(map: &GridMap, start: AgentPose) -> Result<Self, MapError> {
        let field = geodesic_field(map, start.cell)?;
        Self::search(map, start, Some(&field))
    }

    fn search(map: &GridMap, start: AgentPose, restrict: Option<&GeodesicField>) -> Result<Self, MapError> {
        map.check_free(start.cell)?;
        let n = map.width * map.height * 4;
        let state = |p: AgentPose| (map.index(p.cell) * 4 + p.heading.index()) as u32;
        let mut steps = vec![None; n];
        let mut parent = vec![None; n];
        let mut queue = VecDeque::new();
        steps[state(start) as usize] = Some(0u32);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let s = state(p);
            let d = steps[s as usize].expect("queued poses are labelled");
            for m in Motion::EXPANSION {
                let next = match m {
                    Motion::Forward => {
                        let Some(c) = p.cell.step(p.heading).filter(|c| map.is_free(*c)) else {
                            continue;
                        };
                        if let Some(f) = restrict {
                            if f.cells(c) != f.cells(p.cell).map(|x| x + 1) {
                                continue;
                            }
                        }
                        AgentPose::new(c, p.heading)
                    }
                    Motion::RotateLeft => AgentPose::new(p.cell, p.heading.left()),
                    Motion::RotateRight => AgentPose::new(p.cell, p.heading.right()),
                };
                let ns = state(next) as usize;
                if steps[ns].is_none() {
                    steps[ns] = Some(d + 1);
                    parent[ns] = Some((s, m));
                    queue.push_back(next);
                }
            }
        }
        Ok(Self {
            start,
            width: map.width,
            steps,
            parent,
        })
    }

    pub fn start(&self) -> AgentPose {
        self.start
    }

    pub fn to_pose(&self, pose: AgentPose) -> Option<u32> {
        if pose.cell.col >= self.width {
            return None;
        }
        let i = (pose.cell.row * self.width + pose.cell.col) * 4 + pose.heading.index();
        self.steps.get(i).copied().flatten()
    }

    /// Minimum over arrival headings.
    pub fn to_cell(&self, c: Cell) -> Option<u32> {
        self.best_heading(c).map(|(_, d)| d)
    }

    fn best_heading(&self, c: Cell) -> Option<(Heading, u32)> {
        Heading::ALL
            .into_iter()
            .filter_map(|h| self.to_pose(AgentPose::new(c, h)).map(|d| (h, d)))
            .min_by_key(|&(h, d)| (d, h.index()))
    }

    /// Motions realizing [`ActionField::to_cell`].
    pub fn plan_to(&self, c: Cell) -> Option<Vec<Motion>> {
        let (h, _) = self.best_heading(c)?;
        let mut s = ((c.row * self.width + c.col) * 4 + h.index()) as u32;
        let mut plan = Vec::new();
        while let Some((prev, m)) = self.parent[s as usize] {
            plan.push(m);
            s = prev;
        }
        plan.reverse();
        Some(plan)
    }
}

/// Minimum number of Forward/RotateLeft/RotateRight actions taking `start`
/// to any heading at `goal`; `None` when unreachable.
pub fn action_distance(map: &GridMap, start: AgentPose, goal: Cell) -> Result<Option<u32>, MapError> {
    map.check_free(goal)?;
    Ok(ActionField::from_pose(map, start)?.to_cell(goal))
}

/// Number of actions needed to follow a geodesically shortest path from
/// `start` to `goal` (minimized over such paths).
pub fn geodesic_action_distance(map: &GridMap, start: AgentPose, goal: Cell) -> Result<Option<u32>, MapError> {
    map.check_free(goal)?;
    Ok(ActionField::along_geodesics(map, start)?.to_cell(goal))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub ray_count: usize,
    pub fov_deg: f64,
    pub max_range_m: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            ray_count: 9,
            fov_deg: 90.0,
            max_range_m: 5.0,
        }
    }
}

/// Depth-sensor proxy: one range per ray, fanned evenly across the field of
/// view and centered on the heading (leftmost ray first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeScan {
    pub pose: AgentPose,
    pub world_dims: (usize, usize),
    pub resolution: f64,
    pub ray_count: usize,
    pub fov_deg: f64,
    pub max_range_m: f64,
    pub ranges: Vec<f64>,
    pub hit_cells: Vec<Option<Cell>>,
}

impl RangeScan {
    pub fn angles(&self) -> Vec<f64> {
        ray_angles(self.pose.heading, self.ray_count, self.fov_deg)
    }
}

fn ray_angles(heading: Heading, ray_count: usize, fov_deg: f64) -> Vec<f64> {
    let base = heading.angle();
    if ray_count <= 1 {
        return vec![base];
    }
    let fov = fov_deg.to_radians();
    (0..ray_count)
        .map(|i| base + fov / 2.0 - fov * i as f64 / (ray_count - 1) as f64)
        .collect()
}

struct RayTrace {
    traversed: Vec<Cell>,
    hit: Option<(Cell, f64)>,
}

/// Amanatides–Woo traversal from the center of `origin`. Stops at the first
/// blocked cell, or before the first cell whose center lies beyond
/// `max_cells`.
fn walk_ray(
    dims: (usize, usize),
    origin: Cell,
    angle: f64,
    max_cells: f64,
    mut blocked: impl FnMut(Cell) -> bool,
) -> RayTrace {
    let (width, height) = dims;
    let (dx, dy) = (angle.cos(), -angle.sin());
    let (x0, y0) = (origin.col as f64 + 0.5, origin.row as f64 + 0.5);
    let axis = |d: f64, p: f64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, (p.floor() + 1.0 - p) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (p - p.floor()) / -d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_x, delta_x) = axis(dx, x0);
    let (step_y, mut t_y, delta_y) = axis(dy, y0);

    let mut traversed = vec![origin];
    let (mut col, mut row) = (origin.col as i64, origin.row as i64);
    loop {
        if t_x <= t_y {
            col += step_x;
            t_x += delta_x;
        } else {
            row += step_y;
            t_y += delta_y;
        }
        if row < 0 || col < 0 || row as usize >= height || col as usize >= width {
            return RayTrace { traversed, hit: None };
        }
        let cell = Cell::new(row as usize, col as usize);
        let dist = ((row - origin.row as i64) as f64).hypot((col - origin.col as i64) as f64);
        if dist > max_cells + 1e-9 {
            return RayTrace { traversed, hit: None };
        }
        if blocked(cell) {
            return RayTrace {
                traversed,
                hit: Some((cell, dist)),
            };
        }
        traversed.push(cell);
    }
}

/// Casts `params.ray_count` rays from `pose`. A hit's range is the distance
/// between cell centers; rays without a hit report `max_range_m`.
pub fn ray_scan(map: &GridMap, pose: AgentPose, params: &ScanParams) -> RangeScan {
    let max_cells = params.max_range_m / map.resolution;
    let mut ranges = Vec::with_capacity(params.ray_count);
    let mut hit_cells = Vec::with_capacity(params.ray_count);
    for angle in ray_angles(pose.heading, params.ray_count, params.fov_deg) {
        let trace = walk_ray(map.dims(), pose.cell, angle, max_cells, |c| map.is_occupied(c));
        match trace.hit {
            Some((cell, dist)) => {
                ranges.push((dist * map.resolution).min(params.max_range_m));
                hit_cells.push(Some(cell));
            }
            None => {
                ranges.push(params.max_range_m);
                hit_cells.push(None);
            }
        }
    }
    RangeScan {
        pose,
        world_dims: map.dims(),
        resolution: map.resolution,
        ray_count: params.ray_count,
        fov_deg: params.fov_deg,
        max_range_m: params.max_range_m,
        ranges,
        hit_cells,
    }
}

/// Allocentric two-channel map: explored/unexplored and occupied/free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeometricMap {
    width: usize,
    height: usize,
    explored: Vec<bool>,
    occupied: Vec<bool>,
}

impl GeometricMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            explored: vec![false; width * height],
            occupied: vec![false; width * height],
        }
    }

    pub fn for_map(map: &GridMap) -> Self {
        Self::new(map.width, map.height)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn explored(&self, c: Cell) -> bool {
        self.explored[c.row * self.width + c.col]
    }

    pub fn occupied(&self, c: Cell) -> bool {
        self.occupied[c.row * self.width + c.col]
    }

    pub fn explored_count(&self) -> usize {
        self.explored.iter().filter(|&&e| e).count()
    }

    pub fn explored_channel(&self) -> &[bool] {
        &self.explored
    }

    pub fn occupied_channel(&self) -> &[bool] {
        &self.occupied
    }

    /// Marks cells crossed by each ray explored+free and each hit cell
    /// explored+occupied. Needs no ground truth beyond the scan itself.
    pub fn update(&mut self, scan: &RangeScan) -> Result<(), MapError> {
        if scan.world_dims != self.dims() {
            return Err(MapError::DimensionMismatch {
                expected: self.dims(),
                found: scan.world_dims,
            });
        }
        let max_cells = scan.max_range_m / scan.resolution;
        for (angle, hit) in scan.angles().into_iter().zip(&scan.hit_cells) {
            let trace = walk_ray(self.dims(), scan.pose.cell, angle, max_cells, |c| Some(c) == *hit);
            for c in trace.traversed {
                let i = c.row * self.width + c.col;
                self.explored[i] = true;
                self.occupied[i] = false;
            }
            if let Some((c, _)) = trace.hit {
                let i = c.row * self.width + c.col;
                self.explored[i] = true;
                self.occupied[i] = true;
            }
        }
        Ok(())
    }
}

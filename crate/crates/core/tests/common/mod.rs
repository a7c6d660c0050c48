//! Independent reference implementations used as test oracles. Nothing
//! here calls into the library's search, rendering or scoring code.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use davnav::gridmap::{AgentPose, Cell, GridMap, Heading};
use rand::Rng;

/// N, E, S, W
const DELTAS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

pub fn heading_index(h: Heading) -> usize {
    match h {
        Heading::North => 0,
        Heading::East => 1,
        Heading::South => 2,
        Heading::West => 3,
    }
}

fn offset(map: &GridMap, c: Cell, dir: usize) -> Option<Cell> {
    let (dr, dc) = DELTAS[dir];
    let r = c.row as isize + dr;
    let col = c.col as isize + dc;
    if r < 0 || col < 0 || r as usize >= map.height() || col as usize >= map.width() {
        return None;
    }
    let n = Cell::new(r as usize, col as usize);
    map.is_free(n).then_some(n)
}

/// Breadth-first cell distances from `src`.
pub fn bfs(map: &GridMap, src: Cell) -> Vec<Option<u32>> {
    let w = map.width();
    let mut dist = vec![None; w * map.height()];
    dist[src.row * w + src.col] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(c) = q.pop_front() {
        let d = dist[c.row * w + c.col].unwrap();
        for dir in 0..4 {
            if let Some(n) = offset(map, c, dir) {
                if dist[n.row * w + n.col].is_none() {
                    dist[n.row * w + n.col] = Some(d + 1);
                    q.push_back(n);
                }
            }
        }
    }
    dist
}

pub fn dist(map: &GridMap, field: &[Option<u32>], c: Cell) -> Option<u32> {
    field[c.row * map.width() + c.col]
}

/// All-pairs shortest paths over free cells (Floyd–Warshall).
pub fn floyd_warshall(map: &GridMap) -> (Vec<Cell>, Vec<Vec<Option<u32>>>) {
    let cells: Vec<Cell> = (0..map.height())
        .flat_map(|r| (0..map.width()).map(move |c| Cell::new(r, c)))
        .filter(|&c| map.is_free(c))
        .collect();
    let n = cells.len();
    let mut d = vec![vec![None; n]; n];
    for i in 0..n {
        d[i][i] = Some(0);
        for j in 0..n {
            if cells[i].row.abs_diff(cells[j].row) + cells[i].col.abs_diff(cells[j].col) == 1 {
                d[i][j] = Some(1);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|x| a + b < x) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    (cells, d)
}

/// Poses reachable within `t` actions for t = 0, 1, ...; forward moves must
/// increase the distance from the start cell by one (shortest-path walking).
pub struct LayeredReach<'a> {
    map: &'a GridMap,
    from_start: Vec<Option<u32>>,
    frontier: HashSet<(Cell, usize)>,
}

impl<'a> LayeredReach<'a> {
    pub fn new(map: &'a GridMap, start: AgentPose) -> Self {
        Self {
            map,
            from_start: bfs(map, start.cell),
            frontier: HashSet::from([(start.cell, heading_index(start.heading))]),
        }
    }

    pub fn contains_cell(&self, c: Cell) -> bool {
        (0..4).any(|h| self.frontier.contains(&(c, h)))
    }

    pub fn advance(&mut self) {
        let mut next = self.frontier.clone();
        for &(c, h) in &self.frontier {
            next.insert((c, (h + 1) % 4));
            next.insert((c, (h + 3) % 4));
            if let Some(n) = offset(self.map, c, h) {
                if dist(self.map, &self.from_start, n) == dist(self.map, &self.from_start, c).map(|d| d + 1) {
                    next.insert((n, h));
                }
            }
        }
        self.frontier = next;
    }
}

/// Exhaustive earliest `(t, cell, g_cells)` over every `(t, τ(t))` pair.
pub fn brute_force_intercept(map: &GridMap, start: AgentPose, trajectory: &[Cell]) -> Option<(usize, Cell, u32)> {
    let from_start = bfs(map, start.cell);
    let mut reach = LayeredReach::new(map, start);
    for (t, &c) in trajectory.iter().enumerate() {
        if t > 0 {
            reach.advance();
        }
        if reach.contains_cell(c) {
            return Some((t, c, dist(map, &from_start, c).unwrap()));
        }
    }
    None
}

/// A lazy random walk: stay or move to a uniformly drawn free neighbor.
pub fn random_trajectory<R: Rng>(rng: &mut R, map: &GridMap, len: usize) -> Vec<Cell> {
    let free = map.free_cells();
    let mut c = free[rng.gen_range(0..free.len())];
    let mut out = vec![c];
    while out.len() < len {
        if rng.gen_bool(0.7) {
            let opts: Vec<Cell> = (0..4).filter_map(|d| offset(map, c, d)).collect();
            if !opts.is_empty() {
                c = opts[rng.gen_range(0..opts.len())];
            }
        }
        out.push(c);
    }
    out
}

pub fn random_pose<R: Rng>(rng: &mut R, map: &GridMap) -> AgentPose {
    let free = map.free_cells();
    AgentPose::new(free[rng.gen_range(0..free.len())], Heading::ALL[rng.gen_range(0..4)])
}

/// Textbook log-magnitude spectrogram by direct DFT: reflect padding of 256,
/// periodic Hann window of 512, hop 160, every 4th bin and frame.
pub fn direct_spectrogram(x: &[f32]) -> Vec<Vec<f64>> {
    let n = 512usize;
    let pad = n / 2;
    let len = x.len();
    let padded: Vec<f64> = (0..len + 2 * pad)
        .map(|i| {
            let j = i as isize - pad as isize;
            let k = if j < 0 {
                -j
            } else if j as usize >= len {
                2 * (len as isize - 1) - j
            } else {
                j
            };
            x[k as usize] as f64
        })
        .collect();
    let frames = 1 + len / 160;
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let mut out = Vec::new();
    for bin in (0..=n / 2).step_by(4) {
        let mut row = Vec::new();
        for frame in (0..frames).step_by(4) {
            let start = frame * 160;
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for i in 0..n {
                let v = padded[start + i] * window[i];
                let ang = -2.0 * std::f64::consts::PI * (bin * i) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            row.push((re.hypot(im)).ln_1p());
        }
        out.push(row);
    }
    out
}

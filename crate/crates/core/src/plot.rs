//! SVG trajectory figures: agent path in blue, target path in red and the
//! oracle's geodesic to the earliest intersection in green.

use std::fmt::Write as _;

use crate::engine::EpisodeLog;
use crate::gridmap::{ActionField, Cell, GridMap, Motion};
use crate::metrics::{intercept_oracle, MetricsError};

const CELL_PX: usize = 20;
const LEGEND_LINE_PX: usize = 16;

/// Cells visited by walking `plan` from the log's start pose.
fn walk(start: crate::gridmap::AgentPose, plan: &[Motion]) -> Vec<Cell> {
    let mut pose = start;
    let mut cells = vec![pose.cell];
    for m in plan {
        match m {
            Motion::Forward => {
                pose.cell = pose.cell.step(pose.heading).expect("plans stay on the map");
                cells.push(pose.cell);
            }
            Motion::RotateLeft => pose.heading = pose.heading.left(),
            Motion::RotateRight => pose.heading = pose.heading.right(),
        }
    }
    cells
}

fn dedup(cells: impl IntoIterator<Item = Cell>) -> Vec<Cell> {
    let mut out: Vec<Cell> = Vec::new();
    for c in cells {
        if out.last() != Some(&c) {
            out.push(c);
        }
    }
    out
}

fn center(c: Cell) -> (f64, f64) {
    (
        (c.col * CELL_PX) as f64 + CELL_PX as f64 / 2.0,
        (c.row * CELL_PX) as f64 + CELL_PX as f64 / 2.0,
    )
}

fn polyline(svg: &mut String, cells: &[Cell], color: &str, width: f64, dash: &str) {
    let points: Vec<String> = cells
        .iter()
        .map(|&c| {
            let (x, y) = center(c);
            format!("{x},{y}")
        })
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" stroke-linejoin="round"{dash}/>"#,
        points.join(" ")
    );
}

fn fmt_cells(cells: &[Cell]) -> String {
    cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

/// Renders the episode on its map. The legend lists the exact oracle path
/// and its geodesic length `g` so the figure can be checked against scores.
pub fn render_svg(map: &GridMap, log: &EpisodeLog) -> Result<String, MetricsError> {
    let start = log.config.start;
    let agent = dedup(std::iter::once(start.cell).chain(log.records.iter().map(|r| r.pose.cell)));
    let target = dedup(log.trajectory.iter().copied());
    let intercept = intercept_oracle(map, start, &log.trajectory)?;
    let oracle = match intercept.earliest {
        Some(c) => {
            let plan = ActionField::along_geodesics(map, start)?
                .plan_to(c.cell)
                .unwrap_or_default();
            Some((c, walk(start, &plan)))
        }
        None => None,
    };

    let legend = [
        format!(
            "episode seed {} on {} - outcome {:?}",
            log.config.seed, log.config.map, log.outcome
        ),
        format!("agent (blue): {} actions, {:.3} m", log.action_count, log.path_length_m),
        format!("target (red): p = {}", log.config.move_prob),
        match &oracle {
            Some((c, _)) => format!(
                "oracle (green): t* = {}, catch {}, g = {:.3} m",
                c.t, c.cell, c.g_meters
            ),
            None => "oracle (green): no reachable intersection".into(),
        },
        match &oracle {
            Some((_, path)) => format!("g path: {}", fmt_cells(path)),
            None => "g path: -".into(),
        },
    ];

    let (w, h) = map.dims();
    let width = (w * CELL_PX).max(480);
    let height = h * CELL_PX + LEGEND_LINE_PX * (legend.len() + 1);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for row in 0..h {
        for col in 0..w {
            let c = Cell::new(row, col);
            let fill = if map.is_free(c) { "#f4f4f4" } else { "#404040" };
            let _ = writeln!(
                svg,
                r##"<rect x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}" fill="{fill}" stroke="#d0d0d0" stroke-width="0.5"/>"##,
                col * CELL_PX,
                row * CELL_PX
            );
        }
    }
    if let Some((_, path)) = &oracle {
        polyline(&mut svg, path, "green", 5.0, r#" stroke-opacity="0.6""#);
    }
    polyline(&mut svg, &target, "red", 2.5, "");
    polyline(&mut svg, &agent, "blue", 2.0, r#" stroke-dasharray="4 2""#);
    for (c, color) in [(start.cell, "blue"), (log.trajectory[0], "red")] {
        let (x, y) = center(c);
        let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="5" fill="{color}"/>"#);
    }
    if let Some((c, _)) = &oracle {
        let (x, y) = center(c.cell);
        let _ = writeln!(
            svg,
            r#"<circle cx="{x}" cy="{y}" r="6" fill="none" stroke="green" stroke-width="2"/>"#
        );
    }
    for (i, line) in legend.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="4" y="{}" font-family="monospace" font-size="11">{}</text>"#,
            h * CELL_PX + LEGEND_LINE_PX * (i + 1),
            line
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

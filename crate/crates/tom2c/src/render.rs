//! Static SVG frames of a replay, one file per step plus an HTML index.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tom2c_core::geometry::Vec2;
use tom2c_core::metrics::Frame;

use crate::error::{CliError, CliResult};
use crate::replay::{Replay, SceneInfo};

const SIZE: f64 = 640.0;
const MARGIN: f64 = 20.0;
pub const OBSTACLE_FILL: &str = "#808080";

struct Canvas {
    scale: f64,
    side: f64,
}

impl Canvas {
    fn new(scene: &SceneInfo) -> Self {
        Self { scale: (SIZE - 2.0 * MARGIN) / scene.arena_side, side: scene.arena_side }
    }

    fn x(&self, x: f64) -> f64 {
        MARGIN + x * self.scale
    }

    fn y(&self, y: f64) -> f64 {
        MARGIN + (self.side - y) * self.scale
    }

    fn point(&self, p: Vec2) -> (f64, f64) {
        (self.x(p.x), self.y(p.y))
    }
}

/// SVG text of one frame.
pub fn frame_svg(scene: &SceneInfo, frame: &Frame) -> String {
    let c = Canvas::new(scene);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    if !frame.comm.is_empty() {
        s.push_str(
            r##"<defs><marker id="head" markerWidth="8" markerHeight="8" refX="7" refY="4" orient="auto"><path d="M0,0 L8,4 L0,8 z" fill="#d62728"/></marker></defs>"##,
        );
        s.push('\n');
    }
    let (x0, y0) = (c.x(0.0), c.y(scene.arena_side));
    let w = scene.arena_side * c.scale;
    let _ = writeln!(s, r#"<rect x="{x0:.2}" y="{y0:.2}" width="{w:.2}" height="{w:.2}" fill="white" stroke="black"/>"#);

    for o in &frame.obstacles {
        let (cx, cy) = c.point(o.center);
        let _ = writeln!(
            s,
            r#"<circle class="obstacle" cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="{OBSTACLE_FILL}"/>"#,
            o.radius * c.scale
        );
    }

    let reach = scene.sense_radius.min(1.5 * scene.arena_side);
    for pose in &frame.agents {
        let p = pose.position();
        let (cx, cy) = c.point(p);
        let yaw = pose.yaw();
        if scene.sense_radius.is_finite() {
            let edge = |a: f64| c.point(Vec2::new(p.x + reach * a.cos(), p.y + reach * a.sin()));
            let (ax, ay) = edge(yaw - scene.fov_halfangle);
            let (bx, by) = edge(yaw + scene.fov_halfangle);
            let large = u8::from(2.0 * scene.fov_halfangle > PI);
            let r = reach * c.scale;
            let _ = writeln!(
                s,
                r##"<path class="fov" d="M{cx:.2},{cy:.2} L{ax:.2},{ay:.2} A{r:.2},{r:.2} 0 {large} 0 {bx:.2},{by:.2} Z" fill="#1f77b4" fill-opacity="0.15" stroke="#1f77b4" stroke-opacity="0.4"/>"##
            );
        }
        let (hx, hy) = c.point(Vec2::new(p.x + 0.05 * scene.arena_side * yaw.cos(), p.y + 0.05 * scene.arena_side * yaw.sin()));
        let _ = writeln!(s, r##"<line x1="{cx:.2}" y1="{cy:.2}" x2="{hx:.2}" y2="{hy:.2}" stroke="#1f77b4" stroke-width="2"/>"##);
        let _ = writeln!(s, r##"<circle class="agent" cx="{cx:.2}" cy="{cy:.2}" r="6" fill="#1f77b4"/>"##);
    }

    for t in &frame.targets {
        let (cx, cy) = c.point(*t);
        let _ = writeln!(s, r##"<circle class="target" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="#2ca02c"/>"##);
    }

    for &(from, to) in &frame.comm {
        let (x1, y1) = c.point(frame.agents[from].position());
        let (x2, y2) = c.point(frame.agents[to].position());
        let _ = writeln!(
            s,
            r##"<line class="comm" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#d62728" stroke-width="1.5" marker-end="url(#head)"/>"##
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="14" font-family="monospace" font-size="12">step {} coverage {:.3}</text>"#,
        frame.step, frame.coverage
    );
    s.push_str("</svg>\n");
    s
}

pub fn frame_name(k: usize) -> String {
    format!("frame-{k:04}.svg")
}

/// Writes every frame and `index.html` into `out`; returns the frame paths.
pub fn render_replay(replay: &Replay, out: &Path) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut paths = Vec::with_capacity(replay.frames.len());
    let mut index = String::from("<!DOCTYPE html>\n<html><body>\n");
    for (k, frame) in replay.frames.iter().enumerate() {
        let name = frame_name(k);
        let path = out.join(&name);
        fs::write(&path, frame_svg(&replay.scene, frame)).map_err(|e| CliError::io(&path, e))?;
        let _ = writeln!(index, r#"<div><p>step {}</p><img src="{name}"/></div>"#, frame.step);
        paths.push(path);
    }
    index.push_str("</body></html>\n");
    let index_path = out.join("index.html");
    fs::write(&index_path, index).map_err(|e| CliError::io(&index_path, e))?;
    Ok(paths)
}

//! SVG rendering of instances and solution playbacks, for debugging planner
//! output. Element order and float formatting (4 decimals) are fixed so that
//! two renders of the same scene are byte-identical and diffable.

use crate::geom2d::{joint_positions, Config, Position, Side};
use crate::roadmap::home_config;
use crate::world::{Arrangement, Instance, ObjectId};
use std::fmt::Write as _;

/// Pixels per world unit.
const SCALE: f64 = 400.0;
/// World-units of padding around the drawn extent.
const PAD: f64 = 0.15;

/// One playback step: `object` ends up at `to`, with the arm optionally shown
/// at the configuration that placed it (home pose otherwise).
#[derive(Debug, Clone)]
pub struct FrameMove {
    pub object: ObjectId,
    pub to: Position,
    pub arm: Option<Config>,
}

struct Canvas {
    min: Position,
    max: Position,
    out: String,
}

impl Canvas {
    fn new(inst: &Instance, config: Option<&Config>) -> Canvas {
        let rect = inst.ws.rect;
        let mut min = Position { x: rect.min.x, y: rect.min.y };
        let mut max = Position { x: rect.max.x, y: rect.max.y };
        let mut grow = |p: Position| {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        };
        grow(inst.arm.base);
        if let Some(q) = config {
            for p in joint_positions(&inst.arm, q) {
                grow(p);
            }
        }
        min.x -= PAD;
        min.y -= PAD;
        max.x += PAD;
        max.y += PAD;
        Canvas { min, max, out: String::new() }
    }

    fn x(&self, wx: f64) -> f64 {
        (wx - self.min.x) * SCALE
    }

    /// SVG y grows downward; world y grows upward.
    fn y(&self, wy: f64) -> f64 {
        (self.max.y - wy) * SCALE
    }

    fn open(&mut self) {
        let w = (self.max.x - self.min.x) * SCALE;
        let h = (self.max.y - self.min.y) * SCALE;
        let _ = writeln!(
            self.out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.4} {h:.4}\">"
        );
    }

    fn close(&mut self) {
        self.out.push_str("</svg>\n");
    }

    fn line(&mut self, class: &str, a: Position, b: Position, style: &str) {
        let _ = writeln!(
            self.out,
            "<line class=\"{class}\" x1=\"{:.4}\" y1=\"{:.4}\" x2=\"{:.4}\" y2=\"{:.4}\" {style}/>",
            self.x(a.x),
            self.y(a.y),
            self.x(b.x),
            self.y(b.y)
        );
    }

    fn circle(&mut self, class: &str, c: Position, r_world: f64, style: &str) {
        let _ = writeln!(
            self.out,
            "<circle class=\"{class}\" cx=\"{:.4}\" cy=\"{:.4}\" r=\"{:.4}\" {style}/>",
            self.x(c.x),
            self.y(c.y),
            r_world * SCALE
        );
    }

    fn text(&mut self, class: &str, c: Position, label: &str) {
        let _ = writeln!(
            self.out,
            "<text class=\"{class}\" x=\"{:.4}\" y=\"{:.4}\" font-size=\"14\" text-anchor=\"middle\" dominant-baseline=\"central\">{label}</text>",
            self.x(c.x),
            self.y(c.y)
        );
    }
}

fn rect_corners(inst: &Instance) -> [Position; 4] {
    let r = inst.ws.rect;
    [
        Position { x: r.min.x, y: r.min.y }, // SW
        Position { x: r.max.x, y: r.min.y }, // SE
        Position { x: r.max.x, y: r.max.y }, // NE
        Position { x: r.min.x, y: r.max.y }, // NW
    ]
}

/// The open side's endpoints, then the three wall segments.
fn boundary(inst: &Instance) -> ((Position, Position), Vec<(Position, Position)>) {
    let [sw, se, ne, nw] = rect_corners(inst);
    let edges = [(sw, se, Side::South), (se, ne, Side::East), (ne, nw, Side::North), (nw, sw, Side::West)];
    let mut opening = None;
    let mut walls = Vec::with_capacity(3);
    for (a, b, side) in edges {
        if side == inst.ws.open_side {
            opening = Some((a, b));
        } else {
            walls.push((a, b));
        }
    }
    (opening.expect("exactly one open side"), walls)
}

/// Render one arrangement over the instance's furniture: workspace walls and
/// opening, grid cells, goal outlines, current discs, and the arm (at the
/// given configuration, or the home pose).
pub fn render_scene(inst: &Instance, arr: &Arrangement, config: Option<&Config>) -> String {
    let home = home_config(inst);
    let q = config.cloned().unwrap_or(home);
    let mut c = Canvas::new(inst, Some(&q));
    c.open();

    // Workspace interior, then walls, then the dashed opening.
    let [sw, _, ne, _] = rect_corners(inst);
    let _ = writeln!(
        c.out,
        "<rect class=\"shelf\" x=\"{:.4}\" y=\"{:.4}\" width=\"{:.4}\" height=\"{:.4}\" fill=\"#f7f7f5\" stroke=\"none\"/>",
        c.x(sw.x),
        c.y(ne.y),
        (ne.x - sw.x) * SCALE,
        (ne.y - sw.y) * SCALE
    );
    let (opening, walls) = boundary(inst);
    for (a, b) in walls {
        c.line("wall", a, b, "stroke=\"#333333\" stroke-width=\"4\"");
    }
    c.line("opening", opening.0, opening.1, "stroke=\"#aaaaaa\" stroke-width=\"2\" stroke-dasharray=\"6 6\"");

    for &cell in &inst.grid.cells {
        c.circle("cell", cell, 0.008, "fill=\"#c0c0c0\"");
    }

    for (o, g) in inst.goal.iter() {
        c.circle("goal", g, inst.radius, "fill=\"none\" stroke=\"#2a9d2a\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"");
        c.text("goal-label", g, &format!("g{}", o.0));
    }

    for (o, p) in arr.iter() {
        c.circle("disc", p, inst.radius, "fill=\"#4477cc\" fill-opacity=\"0.75\" stroke=\"#1d3f77\" stroke-width=\"1\"");
        c.text("disc-label", p, &format!("{}", o.0));
    }

    let joints = joint_positions(&inst.arm, &q);
    for i in 0..3 {
        let width = 2.0 * inst.arm.link_thickness * SCALE;
        let style = format!(
            "stroke=\"#e07a28\" stroke-width=\"{width:.4}\" stroke-linecap=\"round\" stroke-opacity=\"0.85\""
        );
        c.line("arm", joints[i], joints[i + 1], &style);
    }
    for p in joints {
        c.circle("joint", p, 0.012, "fill=\"#7a3d08\"");
    }

    c.close();
    c.out
}

/// Playback frames: frame 0 is the start arrangement with the arm home,
/// frame `k > 0` is the arrangement after the first `k` moves with the arm at
/// the pose that placed the moved object. Frame count = moves + 1.
pub fn render_frames(inst: &Instance, moves: &[FrameMove]) -> Vec<String> {
    let mut frames = Vec::with_capacity(moves.len() + 1);
    let mut arr = inst.start.clone();
    frames.push(render_scene(inst, &arr, None));
    for m in moves {
        arr = arr.with_moved(m.object, m.to);
        frames.push(render_scene(inst, &arr, m.arm.as_ref()));
    }
    frames
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{gen_instance, GenMode, InstanceParams};

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn empty_instance_renders_furniture_only() {
        let inst = gen_instance(&InstanceParams::default(), 0, GenMode::RowGoals, 1).unwrap();
        let svg = render_scene(&inst, &inst.start, None);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(count(&svg, "class=\"disc\""), 0);
        assert_eq!(count(&svg, "class=\"goal\""), 0);
        assert_eq!(count(&svg, "class=\"wall\""), 3);
        assert_eq!(count(&svg, "class=\"opening\""), 1);
    }

    #[test]
    fn element_counts_match_the_instance() {
        let inst = gen_instance(&InstanceParams::default(), 6, GenMode::RandomGoals, 7).unwrap();
        let svg = render_scene(&inst, &inst.start, None);
        assert_eq!(count(&svg, "class=\"disc\""), 6);
        assert_eq!(count(&svg, "class=\"goal\""), 6);
        assert_eq!(count(&svg, "class=\"cell\""), inst.grid.len());
        assert_eq!(count(&svg, "class=\"arm\""), 3);
    }

    #[test]
    fn frame_count_is_moves_plus_one_and_frames_track_the_moves() {
        let inst = gen_instance(&InstanceParams::default(), 3, GenMode::RowGoals, 0).unwrap();
        let moves: Vec<FrameMove> = inst
            .objects()
            .map(|o| FrameMove { object: o, to: inst.goal[o], arm: None })
            .collect();
        let frames = render_frames(&inst, &moves);
        assert_eq!(frames.len(), moves.len() + 1);
        // Every frame still shows all discs; the final frame's discs sit on
        // the goal outlines (same circle centers appear twice).
        for f in &frames {
            assert_eq!(count(f, "class=\"disc\""), 3);
        }
        assert_ne!(frames[0], frames[3]);
    }

    #[test]
    fn rendering_is_deterministic_and_uses_fixed_precision() {
        let inst = gen_instance(&InstanceParams::default(), 4, GenMode::RandomGoals, 5).unwrap();
        let a = render_scene(&inst, &inst.start, None);
        let b = render_scene(&inst, &inst.start, None);
        assert_eq!(a, b);
        // Coordinates carry exactly four decimals: no raw f64 debris.
        for token in a.split('"') {
            if token.parse::<f64>().is_ok() {
                if let Some(frac) = token.split('.').nth(1) {
                    assert!(frac.len() <= 4, "over-long float {token}");
                }
            }
        }
    }
}

//! Planar geometry: a 3-link revolute arm with capsule links, disc obstacles,
//! workspace walls, and swept-edge collision checks.
//!
//! Orientation convention: angle `0` points along `+y` (into the shelf), and
//! angles grow counter-clockwise. `dir(t) = (-sin t, cos t)`. All collision
//! predicates use strict inequalities, so exact tangency does not collide.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("no grasp configuration reaches ({x:.4}, {y:.4})")]
    EmptyGraspSet { x: f64, y: f64 },
}

/// A point (or displacement) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Position) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Position) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Position) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl std::ops::Add for Position {
    type Output = Position;
    fn add(self, rhs: Position) -> Position {
        Position::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Position {
    type Output = Position;
    fn sub(self, rhs: Position) -> Position {
        Position::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Position {
    type Output = Position;
    fn mul(self, s: f64) -> Position {
        Position::new(self.x * s, self.y * s)
    }
}

/// Unit vector for an orientation (0 = +y, counter-clockwise positive).
pub fn dir(theta: f64) -> Position {
    Position::new(-theta.sin(), theta.cos())
}

/// Orientation of a nonzero vector under the same convention.
pub fn orientation_of(v: Position) -> f64 {
    (-v.x).atan2(v.y)
}

/// Wrap an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// A disc object (or obstacle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Position,
    pub radius: f64,
}

/// A thick segment; the shape of one arm link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Position,
    pub b: Position,
    pub radius: f64,
}

/// Which side of the rectangular workspace is open (no wall).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    North,
    South,
    East,
    West,
}

/// Axis-aligned rectangle given by its min and max corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Position,
    pub max: Position,
}

impl Rect {
    pub fn new(min: Position, max: Position) -> Self {
        assert!(min.x < max.x && min.y < max.y, "degenerate rectangle");
        Self { min, max }
    }

    pub fn contains(&self, p: Position) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Position {
        Position::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }
}

/// The confined workspace: a rectangle walled on three sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceGeom {
    pub rect: Rect,
    pub open_side: Side,
    /// Minimum distance kept between sampled object centers and the walls.
    pub clearance: f64,
}

impl WorkspaceGeom {
    pub fn new(rect: Rect, open_side: Side, clearance: f64) -> Self {
        Self { rect, open_side, clearance }
    }

    /// The three closed walls, as zero-thickness segments.
    pub fn wall_segments(&self) -> [(Position, Position); 3] {
        let bl = self.rect.min;
        let br = Position::new(self.rect.max.x, self.rect.min.y);
        let tl = Position::new(self.rect.min.x, self.rect.max.y);
        let tr = self.rect.max;
        let south = (bl, br);
        let north = (tl, tr);
        let west = (bl, tl);
        let east = (br, tr);
        match self.open_side {
            Side::South => [north, west, east],
            Side::North => [south, west, east],
            Side::West => [south, north, east],
            Side::East => [south, north, west],
        }
    }
}

/// The 3-link planar arm. Its base sits outside the open side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarArm {
    pub base: Position,
    pub link_lengths: [f64; 3],
    pub link_thickness: f64,
    /// Per-joint `[lo, hi]` bounds on the relative joint angle.
    pub joint_limits: [[f64; 2]; 3],
}

impl PlanarArm {
    pub fn within_limits(&self, q: &Config) -> bool {
        const EPS: f64 = 1e-9;
        self.joint_limits
            .iter()
            .zip(q.joints.iter())
            .all(|(lim, &j)| j >= lim[0] - EPS && j <= lim[1] + EPS)
    }

    pub fn max_reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }
}

/// A joint configuration (relative angles, radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub joints: [f64; 3],
}

impl Config {
    pub const fn new(j1: f64, j2: f64, j3: f64) -> Self {
        Self { joints: [j1, j2, j3] }
    }

    /// Euclidean distance in joint space; the roadmap edge cost.
    pub fn distance(&self, other: &Config) -> f64 {
        self.joints
            .iter()
            .zip(other.joints.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_joint_delta(&self, other: &Config) -> f64 {
        self.joints
            .iter()
            .zip(other.joints.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Linear interpolation in raw joint values (no angle wrapping).
    pub fn lerp(&self, other: &Config, t: f64) -> Config {
        let joints =
            std::array::from_fn(|i| self.joints[i] + (other.joints[i] - self.joints[i]) * t);
        Config { joints }
    }

    pub fn approx_eq(&self, other: &Config, tol: f64) -> bool {
        self.joints
            .iter()
            .zip(other.joints.iter())
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// The space occupied by the arm at one configuration: three link capsules
/// plus, in transfer mode, the grasped disc held at the end-effector.
#[derive(Debug, Clone, PartialEq)]
pub struct SweptBody {
    pub capsules: Vec<Capsule>,
    pub grasped_disc: Option<Disc>,
}

impl SweptBody {
    pub fn end_effector(&self) -> Position {
        self.capsules.last().expect("arm has links").b
    }

    pub fn with_grasped_disc(mut self, radius: f64) -> SweptBody {
        self.grasped_disc = Some(Disc { center: self.end_effector(), radius });
        self
    }
}

/// Positions of every joint (base, three articulation points) at `q`.
pub fn joint_positions(arm: &PlanarArm, q: &Config) -> [Position; 4] {
    let mut pts = [arm.base; 4];
    let mut angle = 0.0;
    for i in 0..3 {
        angle += q.joints[i];
        pts[i + 1] = pts[i] + dir(angle) * arm.link_lengths[i];
    }
    pts
}

/// Forward kinematics: the swept body (without a grasped disc) at `q`.
pub fn forward_kinematics(arm: &PlanarArm, q: &Config) -> SweptBody {
    let pts = joint_positions(arm, q);
    let capsules = (0..3)
        .map(|i| Capsule { a: pts[i], b: pts[i + 1], radius: arm.link_thickness })
        .collect();
    SweptBody { capsules, grasped_disc: None }
}

/// Grasp inverse kinematics: up to `k` configurations whose end-effector sits
/// exactly on `target`, drawn from `k` evenly spaced reachable approach
/// orientations. Both elbow branches are admitted (elbow-up for every
/// orientation first, then elbow-down) and the result is truncated to `k`.
///
/// The reachable approach orientations form two arcs symmetric about the
/// base-to-target direction; the arcs are derived from the wrist annulus
/// `|w - base| in [|l1-l2|, l1+l2]` with `w = target - l3*dir(phi)`.
pub fn ik_grasp_configs(
    arm: &PlanarArm,
    target: Position,
    k: usize,
) -> Result<Vec<Config>, GeomError> {
    assert!(k >= 1, "grasp count must be positive");
    let [l1, l2, l3] = arm.link_lengths;
    let d = target - arm.base;
    let dist = d.norm();
    let r_min = (l1 - l2).abs();
    let r_max = l1 + l2;
    let empty = || GeomError::EmptyGraspSet { x: target.x, y: target.y };

    let mut orientations = Vec::with_capacity(k);
    if dist < 1e-12 {
        // Target on the base: the wrist circle has radius l3 regardless of
        // approach orientation, so either every orientation works or none.
        if l3 < r_min - 1e-12 || l3 > r_max + 1e-12 {
            return Err(empty());
        }
        for i in 0..k {
            orientations.push(normalize_angle(TAU * (i as f64 + 0.5) / k as f64));
        }
    } else {
        // |w - base|^2 = dist^2 + l3^2 - 2*l3*dist*cos(psi), psi the angle
        // between the approach direction and the base-to-target direction.
        let denom = 2.0 * l3 * dist;
        let cos_hi = ((dist * dist + l3 * l3 - r_min * r_min) / denom).min(1.0);
        let cos_lo = ((dist * dist + l3 * l3 - r_max * r_max) / denom).max(-1.0);
        if cos_lo > cos_hi {
            return Err(empty());
        }
        let psi_lo = cos_hi.clamp(-1.0, 1.0).acos();
        let psi_hi = cos_lo.clamp(-1.0, 1.0).acos();
        let theta_d = orientation_of(d);
        let span = psi_hi - psi_lo;
        // Sample k midpoints over the concatenated arcs
        // [-psi_hi, -psi_lo] ++ [psi_lo, psi_hi].
        for i in 0..k {
            let s = (i as f64 + 0.5) / k as f64 * 2.0;
            let psi = if span <= 1e-15 {
                if s < 1.0 {
                    -psi_lo
                } else {
                    psi_lo
                }
            } else if s < 1.0 {
                -psi_hi + s * span
            } else {
                psi_lo + (s - 1.0) * span
            };
            orientations.push(normalize_angle(theta_d + psi));
        }
    }

    let mut configs: Vec<Config> = Vec::new();
    'branches: for elbow in [1.0f64, -1.0] {
        for &phi in &orientations {
            let wrist = target - dir(phi) * l3;
            let v = wrist - arm.base;
            let rr = v.norm();
            let c2 = ((rr * rr - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
            let q2 = elbow * c2.acos();
            let a1 = orientation_of(v) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
            let cfg = Config::new(normalize_angle(a1), normalize_angle(q2), normalize_angle(phi - a1 - q2));
            if !arm.within_limits(&cfg) {
                continue;
            }
            // Guard against branch solutions degraded by clamping.
            if forward_kinematics(arm, &cfg).end_effector().distance(target) > 1e-6 {
                continue;
            }
            if configs.iter().any(|c| c.approx_eq(&cfg, 1e-9)) {
                continue;
            }
            configs.push(cfg);
            if configs.len() == k {
                break 'branches;
            }
        }
    }
    if configs.is_empty() {
        return Err(empty());
    }
    Ok(configs)
}

/// Distance from a point to a segment.
pub fn point_segment_distance(p: Position, a: Position, b: Position) -> f64 {
    let ab = b - a;
    let len_sq = ab.dot(ab);
    if len_sq <= 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn on_segment(p: Position, q: Position, r: Position) -> bool {
    q.x >= p.x.min(r.x) && q.x <= p.x.max(r.x) && q.y >= p.y.min(r.y) && q.y <= p.y.max(r.y)
}

fn segments_intersect(p1: Position, p2: Position, p3: Position, p4: Position) -> bool {
    let o = |a: Position, b: Position, c: Position| (b - a).cross(c - a);
    let d1 = o(p3, p4, p1);
    let d2 = o(p3, p4, p2);
    let d3 = o(p1, p2, p3);
    let d4 = o(p1, p2, p4);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p3, p1, p4))
        || (d2 == 0.0 && on_segment(p3, p2, p4))
        || (d3 == 0.0 && on_segment(p1, p3, p2))
        || (d4 == 0.0 && on_segment(p1, p4, p2))
}

/// Distance between two segments (zero when they intersect).
pub fn segment_segment_distance(a1: Position, a2: Position, b1: Position, b2: Position) -> f64 {
    if segments_intersect(a1, a2, b1, b2) {
        return 0.0;
    }
    point_segment_distance(a1, b1, b2)
        .min(point_segment_distance(a2, b1, b2))
        .min(point_segment_distance(b1, a1, a2))
        .min(point_segment_distance(b2, a1, a2))
}

/// Whether the swept body overlaps a disc (strict).
pub fn collides_disc(body: &SweptBody, disc: &Disc) -> bool {
    for cap in &body.capsules {
        if point_segment_distance(disc.center, cap.a, cap.b) < cap.radius + disc.radius {
            return true;
        }
    }
    if let Some(g) = &body.grasped_disc {
        if g.center.distance(disc.center) < g.radius + disc.radius {
            return true;
        }
    }
    false
}

/// Whether the swept body crosses any closed wall (strict).
pub fn collides_workspace(body: &SweptBody, ws: &WorkspaceGeom) -> bool {
    for (wa, wb) in ws.wall_segments() {
        for cap in &body.capsules {
            if segment_segment_distance(cap.a, cap.b, wa, wb) < cap.radius {
                return true;
            }
        }
        if let Some(g) = &body.grasped_disc {
            if point_segment_distance(g.center, wa, wb) < g.radius {
                return true;
            }
        }
    }
    false
}

/// Number of interpolation steps for a joint-space motion of size `delta`,
/// rounded up to a power of two. Dyadic step counts make the sample set at a
/// finer resolution a superset of the sample set at a coarser one, so
/// refining the resolution can only turn a free edge into a colliding one,
/// never the reverse.
pub fn interp_steps(delta: f64, resolution: f64) -> u32 {
    assert!(resolution > 0.0, "resolution must be positive");
    let raw = (delta / resolution).ceil().max(1.0);
    (raw as u32).next_power_of_two()
}

/// Whether the straight joint-space motion from `from` to `to` collides with
/// any obstacle disc, the workspace walls (if given), while optionally
/// carrying a grasped disc of the given radius.
pub fn edge_collides(
    arm: &PlanarArm,
    from: &Config,
    to: &Config,
    obstacles: &[Disc],
    ws: Option<&WorkspaceGeom>,
    grasped_radius: Option<f64>,
    resolution: f64,
) -> bool {
    let steps = interp_steps(from.max_joint_delta(to), resolution);
    for i in 0..=steps {
        let q = from.lerp(to, i as f64 / steps as f64);
        let mut body = forward_kinematics(arm, &q);
        if let Some(r) = grasped_radius {
            body = body.with_grasped_disc(r);
        }
        if obstacles.iter().any(|d| collides_disc(&body, d)) {
            return true;
        }
        if let Some(w) = ws {
            if collides_workspace(&body, w) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_arm() -> PlanarArm {
        PlanarArm {
            base: Position::new(0.0, 0.0),
            link_lengths: [1.0, 1.0, 1.0],
            link_thickness: 0.02,
            joint_limits: [[-PI, PI]; 3],
        }
    }

    #[test]
    fn fk_straight_chain_points_along_y() {
        let body = forward_kinematics(&test_arm(), &Config::new(0.0, 0.0, 0.0));
        assert_eq!(body.capsules.len(), 3);
        let tip = body.end_effector();
        assert!((tip.x - 0.0).abs() < 1e-12 && (tip.y - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fk_quarter_turn_points_along_x() {
        // -pi/2 turns the chain clockwise from +y onto +x.
        let body = forward_kinematics(&test_arm(), &Config::new(-PI / 2.0, 0.0, 0.0));
        let tip = body.end_effector();
        assert!((tip.x - 3.0).abs() < 1e-12 && tip.y.abs() < 1e-12);
    }

    /// Independent FK oracle: chain of 3x3 homogeneous transforms.
    fn fk_oracle(arm: &PlanarArm, q: &Config) -> [Position; 4] {
        type M = [[f64; 3]; 3];
        fn mul(a: &M, b: &M) -> M {
            let mut c = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for (k, bk) in b.iter().enumerate() {
                        c[i][j] += a[i][k] * bk[j];
                    }
                }
            }
            c
        }
        fn rot(t: f64) -> M {
            [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]]
        }
        fn trans(x: f64, y: f64) -> M {
            [[1.0, 0.0, x], [0.0, 1.0, y], [0.0, 0.0, 1.0]]
        }
        let mut m = trans(arm.base.x, arm.base.y);
        let mut out = [arm.base; 4];
        for i in 0..3 {
            m = mul(&m, &rot(q.joints[i]));
            m = mul(&m, &trans(0.0, arm.link_lengths[i]));
            out[i + 1] = Position::new(m[0][2], m[1][2]);
        }
        out
    }

    #[test]
    fn fk_matches_homogeneous_transform_oracle() {
        let arm = PlanarArm {
            base: Position::new(0.3, -0.4),
            link_lengths: [0.5, 0.45, 0.3],
            ..test_arm()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let q = Config::new(
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
            );
            let pts = joint_positions(&arm, &q);
            let oracle = fk_oracle(&arm, &q);
            for (p, o) in pts.iter().zip(oracle.iter()) {
                assert!(p.distance(*o) < 1e-12, "fk mismatch: {:?} vs {:?}", p, o);
            }
        }
    }

    #[test]
    fn ik_roundtrips_through_fk() {
        let arm = test_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut solved = 0;
        for _ in 0..200 {
            let r = rng.gen_range(0.3..2.9);
            let t = rng.gen_range(-PI..PI);
            let target = arm.base + dir(t) * r;
            let Ok(cfgs) = ik_grasp_configs(&arm, target, 4) else {
                continue;
            };
            assert!(!cfgs.is_empty() && cfgs.len() <= 4);
            for c in &cfgs {
                assert!(arm.within_limits(c));
                let tip = forward_kinematics(&arm, c).end_effector();
                assert!(tip.distance(target) < 1e-9, "tip {:?} target {:?}", tip, target);
            }
            solved += 1;
        }
        assert!(solved > 150, "ik failed too often: {solved}/200");
    }

    #[test]
    fn ik_on_reach_boundary_is_single_stretched_config() {
        let arm = test_arm();
        let target = Position::new(0.0, 3.0);
        let cfgs = ik_grasp_configs(&arm, target, 6).unwrap();
        assert_eq!(cfgs.len(), 1, "boundary target admits one config: {cfgs:?}");
        let q = cfgs[0];
        for j in q.joints {
            assert!(j.abs() < 1e-7, "stretched config should be straight: {q:?}");
        }
    }

    #[test]
    fn ik_unreachable_targets_error() {
        let arm = test_arm();
        assert_eq!(
            ik_grasp_configs(&arm, Position::new(0.0, 3.2), 4),
            Err(GeomError::EmptyGraspSet { x: 0.0, y: 3.2 })
        );
        // Inner hole: l3 = 3 cannot fold back onto the base with l1 = l2 = 1.
        let long_wrist = PlanarArm { link_lengths: [1.0, 1.0, 3.0], ..test_arm() };
        assert!(ik_grasp_configs(&long_wrist, Position::new(0.0, 0.0), 4).is_err());
    }

    #[test]
    fn ik_truncates_and_dedupes() {
        let arm = test_arm();
        let target = Position::new(0.4, 1.2);
        for k in [1usize, 2, 3, 4, 8] {
            let cfgs = ik_grasp_configs(&arm, target, k).unwrap();
            assert!(cfgs.len() <= k);
            for i in 0..cfgs.len() {
                for j in (i + 1)..cfgs.len() {
                    assert!(!cfgs[i].approx_eq(&cfgs[j], 1e-9), "duplicate configs at k={k}");
                }
            }
        }
    }

    #[test]
    fn ik_is_deterministic() {
        let arm = test_arm();
        let target = Position::new(-0.7, 1.5);
        let a = ik_grasp_configs(&arm, target, 4).unwrap();
        let b = ik_grasp_configs(&arm, target, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn segment_distance_table() {
        let cases: &[(Position, Position, Position, Position, f64)] = &[
            // crossing segments -> 0
            (
                Position::new(-1.0, 0.0),
                Position::new(1.0, 0.0),
                Position::new(0.0, -1.0),
                Position::new(0.0, 1.0),
                0.0,
            ),
            // parallel horizontal, offset 1
            (
                Position::new(0.0, 0.0),
                Position::new(2.0, 0.0),
                Position::new(0.0, 1.0),
                Position::new(2.0, 1.0),
                1.0,
            ),
            // shared endpoint -> 0
            (
                Position::new(0.0, 0.0),
                Position::new(1.0, 0.0),
                Position::new(1.0, 0.0),
                Position::new(2.0, 1.0),
                0.0,
            ),
            // collinear overlap -> 0
            (
                Position::new(0.0, 0.0),
                Position::new(2.0, 0.0),
                Position::new(1.0, 0.0),
                Position::new(3.0, 0.0),
                0.0,
            ),
            // collinear disjoint -> gap
            (
                Position::new(0.0, 0.0),
                Position::new(1.0, 0.0),
                Position::new(2.5, 0.0),
                Position::new(4.0, 0.0),
                1.5,
            ),
            // endpoint nearest to interior
            (
                Position::new(0.0, 0.0),
                Position::new(2.0, 0.0),
                Position::new(1.0, 0.5),
                Position::new(1.0, 2.0),
                0.5,
            ),
        ];
        for (i, &(a1, a2, b1, b2, want)) in cases.iter().enumerate() {
            let got = segment_segment_distance(a1, a2, b1, b2);
            assert!((got - want).abs() < 1e-12, "case {i}: got {got}, want {want}");
            let sym = segment_segment_distance(b1, b2, a1, a2);
            assert!((got - sym).abs() < 1e-12, "case {i} asymmetric");
        }
    }

    #[test]
    fn disc_collision_matches_point_sampling_oracle() {
        // Oracle: walk the capsule axis at 1e-3 spacing and compare point
        // distances. Cases within 2e-3 of exact tangency are skipped — the
        // sampled oracle cannot decide those.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for _ in 0..1000 {
            let cap = Capsule {
                a: Position::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                b: Position::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                radius: rng.gen_range(0.01..0.2),
            };
            let disc = Disc {
                center: Position::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)),
                radius: rng.gen_range(0.01..0.3),
            };
            let analytic = point_segment_distance(disc.center, cap.a, cap.b);
            let threshold = cap.radius + disc.radius;
            if (analytic - threshold).abs() < 2e-3 {
                continue;
            }
            let len = cap.a.distance(cap.b);
            let n = (len / 1e-3).ceil().max(1.0) as usize;
            let mut sampled = f64::INFINITY;
            for i in 0..=n {
                let p = cap.a + (cap.b - cap.a) * (i as f64 / n as f64);
                sampled = sampled.min(p.distance(disc.center));
            }
            let body = SweptBody { capsules: vec![cap], grasped_disc: None };
            assert_eq!(
                collides_disc(&body, &disc),
                sampled < threshold,
                "analytic {analytic} sampled {sampled} threshold {threshold}"
            );
            checked += 1;
        }
        assert!(checked > 800, "too many skipped marginal cases: {checked}");
    }

    #[test]
    fn grasped_disc_extends_collision_footprint() {
        let arm = test_arm();
        let q = Config::new(0.0, 0.0, 0.0);
        let obstacle = Disc { center: Position::new(0.0, 3.08), radius: 0.05 };
        let bare = forward_kinematics(&arm, &q);
        assert!(!collides_disc(&bare, &obstacle));
        let carrying = forward_kinematics(&arm, &q).with_grasped_disc(0.05);
        assert!(collides_disc(&carrying, &obstacle));
    }

    #[test]
    fn workspace_has_three_walls_and_open_side_is_free() {
        let ws = WorkspaceGeom::new(
            Rect::new(Position::new(0.0, 0.0), Position::new(1.0, 0.6)),
            Side::South,
            0.05,
        );
        assert_eq!(ws.wall_segments().len(), 3);
        let arm = PlanarArm {
            base: Position::new(0.5, -0.5),
            link_lengths: [0.3, 0.3, 0.3],
            ..test_arm()
        };
        // Reaching straight in through the open (south) side is wall-free:
        // the chain ends at (0.5, 0.4), inside the shelf.
        let through_open = forward_kinematics(&arm, &Config::new(0.0, 0.0, 0.0));
        assert!(!collides_workspace(&through_open, &ws));
        // Aiming at the west wall from outside crosses it.
        let toward_wall = orientation_of(Position::new(-0.5, 0.6));
        let sweep = forward_kinematics(&arm, &Config::new(toward_wall, 0.0, 0.0));
        assert!(collides_workspace(&sweep, &ws));
    }

    #[test]
    fn interp_steps_are_dyadic_and_monotone() {
        for &(delta, res) in &[(0.5, 0.02), (0.013, 0.02), (3.0, 0.02), (6.2, 0.01)] {
            let s = interp_steps(delta, res);
            assert!(s.is_power_of_two());
            let finer = interp_steps(delta, res / 2.0);
            assert!(finer >= s && finer.is_multiple_of(s), "dyadic nesting broken: {s} -> {finer}");
        }
    }

    #[test]
    fn edge_refinement_never_unflags_collisions() {
        let arm = test_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let a = Config::new(
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
            );
            let b = Config::new(
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
            );
            let disc = Disc {
                center: Position::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                radius: 0.08,
            };
            let coarse = edge_collides(&arm, &a, &b, &[disc], None, None, 0.08);
            let fine = edge_collides(&arm, &a, &b, &[disc], None, None, 0.04);
            if coarse {
                assert!(fine, "refinement lost a collision: {a:?} -> {b:?}");
            }
        }
    }

    #[test]
    fn edge_collides_detects_midpoint_obstacle() {
        let arm = test_arm();
        let a = Config::new(-0.4, 0.0, 0.0);
        let b = Config::new(0.4, 0.0, 0.0);
        // The tip sweeps through (0, 3) halfway; park a disc there.
        let disc = Disc { center: Position::new(0.0, 3.0), radius: 0.05 };
        assert!(edge_collides(&arm, &a, &b, &[disc], None, None, 0.02));
        assert!(!edge_collides(&arm, &a, &a, &[disc], None, None, 0.02));
        let far = Disc { center: Position::new(0.0, -5.0), radius: 0.05 };
        assert!(!edge_collides(&arm, &a, &b, &[far], None, None, 0.02));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_angle_lands_in_range(a in -50.0f64..50.0) {
                let r = normalize_angle(a);
                prop_assert!(r > -PI - 1e-12 && r <= PI + 1e-12);
                prop_assert!((normalize_angle(r) - r).abs() < 1e-12);
                // Same direction vector.
                prop_assert!(dir(a).distance(dir(r)) < 1e-9);
            }

            #[test]
            fn lerp_hits_endpoints(
                j1 in -3.0f64..3.0, j2 in -3.0f64..3.0, j3 in -3.0f64..3.0,
                k1 in -3.0f64..3.0, k2 in -3.0f64..3.0, k3 in -3.0f64..3.0,
            ) {
                let a = Config::new(j1, j2, j3);
                let b = Config::new(k1, k2, k3);
                prop_assert!(a.lerp(&b, 0.0).approx_eq(&a, 1e-12));
                prop_assert!(a.lerp(&b, 1.0).approx_eq(&b, 1e-12));
            }
        }
    }
}

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{Command, EgoDims, PoseRecord, Scene, ScenarioError, FRAME_DT, HORIZON};
use crate::geometry::{ConvexPolygon, OrientedBox, Point};
use crate::numerics::SeededRng;

/// Knobs for [`generate_scenario`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    /// Full carriageway width, meters (two lanes).
    pub road_width: f64,
    /// Largest |curvature| of straight-command roads, 1/m.
    pub max_curvature: f64,
    pub horizon: usize,
    pub frame_dt: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    /// Largest |offset| added to past-frame timestamps, seconds.
    pub timestamp_jitter: f64,
    /// Probability that a scene's last 1–3 future steps are unannotated.
    pub truncated_fraction: f64,
    /// Probability of a turn (split evenly between left and right).
    pub turn_fraction: f64,
    pub history_frames: usize,
    pub ego: EgoDims,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            min_obstacles: 2,
            max_obstacles: 6,
            road_width: 7.0,
            max_curvature: 0.004,
            horizon: HORIZON,
            frame_dt: FRAME_DT,
            min_speed: 2.0,
            max_speed: 9.0,
            max_accel: 0.8,
            timestamp_jitter: 0.0,
            truncated_fraction: 0.1,
            turn_fraction: 0.6,
            history_frames: 4,
            ego: EgoDims::default(),
        }
    }
}

const MIN_SPEED_FLOOR: f64 = 0.5;
const OBSTACLE_TRIES: usize = 20;
const CLEARANCE: f64 = 1.0;
const DIVIDER_WIDTH: f64 = 1.2;
const CROSSWALK_DEPTH: f64 = 3.0;

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Unsatisfiable(m));
        if self.horizon != HORIZON {
            return bad(format!("horizon must be {HORIZON}, got {}", self.horizon));
        }
        if !(self.frame_dt > 0.0) {
            return bad("frame_dt must be positive".into());
        }
        if self.min_obstacles > self.max_obstacles {
            return bad("min_obstacles exceeds max_obstacles".into());
        }
        if !(self.road_width >= self.ego.width + 0.5) {
            return bad(format!(
                "road width {} m cannot fit a {} m wide ego vehicle",
                self.road_width, self.ego.width
            ));
        }
        if !(self.ego.length > 0.0 && self.ego.width > 0.0) {
            return bad("ego dimensions must be positive".into());
        }
        if !(self.max_curvature >= 0.0 && self.max_curvature < 0.02) {
            return bad("max_curvature must lie in [0, 0.02)".into());
        }
        if !(self.min_speed >= MIN_SPEED_FLOOR && self.min_speed <= self.max_speed) {
            return bad(format!("speed range must satisfy {MIN_SPEED_FLOOR} <= min <= max"));
        }
        if self.max_speed > 15.0 {
            return bad("max_speed above 15 m/s leaves the mapped area".into());
        }
        if !(self.max_accel >= 0.0 && self.max_accel <= 3.0) {
            return bad("max_accel must lie in [0, 3]".into());
        }
        if !(self.timestamp_jitter >= 0.0 && self.timestamp_jitter < 0.5 * self.frame_dt) {
            return bad("timestamp_jitter must be below half a frame".into());
        }
        if self.history_frames < 3 {
            return bad("history_frames must be at least 3".into());
        }
        for (name, p) in [
            ("truncated_fraction", self.truncated_fraction),
            ("turn_fraction", self.turn_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Ego centerline parameterized by arc length; `s = 0` is the current pose.
#[derive(Clone, Copy, Debug)]
enum Path {
    Arc { curvature: f64 },
    Turn { lead_in: f64, radius: f64, sign: f64 },
}

impl Path {
    fn pose(&self, s: f64) -> (Point, f64) {
        match *self {
            Path::Arc { curvature: k } => {
                if k.abs() < 1e-9 {
                    (Point::new(s, 0.0), 0.0)
                } else {
                    let th = k * s;
                    (Point::new(th.sin() / k, (1.0 - th.cos()) / k), th)
                }
            }
            Path::Turn {
                lead_in,
                radius,
                sign,
            } => {
                let arc_len = radius * FRAC_PI_2;
                if s <= lead_in {
                    (Point::new(s, 0.0), 0.0)
                } else if s <= lead_in + arc_len {
                    let phi = (s - lead_in) / radius;
                    let p = Point::new(lead_in + radius * phi.sin(), sign * radius * (1.0 - phi.cos()));
                    (p, sign * phi)
                } else {
                    let end = Point::new(lead_in + radius, sign * radius);
                    (end + Point::new(0.0, sign) * (s - lead_in - arc_len), sign * FRAC_PI_2)
                }
            }
        }
    }

    /// Arc-length breakpoints where the sampling step must land exactly.
    fn knots(&self) -> Vec<f64> {
        match *self {
            Path::Arc { .. } => Vec::new(),
            Path::Turn {
                lead_in, radius, ..
            } => vec![lead_in, lead_in + radius * FRAC_PI_2],
        }
    }

    fn max_step(&self, s: f64) -> f64 {
        match *self {
            Path::Arc { .. } => 4.0,
            Path::Turn {
                lead_in, radius, ..
            } => {
                if s >= lead_in && s < lead_in + radius * FRAC_PI_2 {
                    (0.15 * radius).min(2.0)
                } else {
                    8.0
                }
            }
        }
    }

    fn stations(&self, s0: f64, s1: f64) -> Vec<f64> {
        let mut knots: Vec<f64> = self.knots().into_iter().filter(|&k| k > s0 && k < s1).collect();
        knots.push(s1);
        let mut out = vec![s0];
        let mut s = s0;
        for k in knots {
            let step = self.max_step(0.5 * (s + k));
            let n = ((k - s) / step).ceil().max(1.0) as usize;
            for j in 1..=n {
                out.push(s + (k - s) * j as f64 / n as f64);
            }
            s = k;
        }
        out
    }

    /// Quads covering lateral offsets `[right, left]` (left positive) along
    /// `s0..s1`.
    fn band(&self, s0: f64, s1: f64, right: f64, left: f64) -> Vec<ConvexPolygon> {
        let at = |s: f64| {
            let (p, th) = self.pose(s);
            let n = Point::new(-th.sin(), th.cos());
            (p + n * right, p + n * left)
        };
        let st = self.stations(s0, s1);
        st.windows(2)
            .filter_map(|w| {
                let (r0, l0) = at(w[0]);
                let (r1, l1) = at(w[1]);
                ConvexPolygon::new(vec![r0, r1, l1, l0]).ok()
            })
            .collect()
    }
}

/// Distance travelled after `t` seconds from speed `v0` under acceleration
/// `a`, with speed held at the floor once braking reaches it.
fn travelled(v0: f64, a: f64, t: f64) -> f64 {
    if a < 0.0 {
        let t_floor = (MIN_SPEED_FLOOR - v0) / a;
        if t > t_floor {
            let s_floor = v0 * t_floor + 0.5 * a * t_floor * t_floor;
            return s_floor + MIN_SPEED_FLOOR * (t - t_floor);
        }
    }
    v0 * t + 0.5 * a * t * t
}

/// Deterministic synthetic scene for `seed`.
pub fn generate_scenario(seed: u64, params: &ScenarioParams) -> Result<Scene, ScenarioError> {
    params.validate()?;
    let root = SeededRng::new(seed);
    let mut rng = root.split("scene");
    let w = params.road_width;
    let dt = params.frame_dt;
    let horizon_t = dt * HORIZON as f64;

    let v0 = rng.uniform(params.min_speed, params.max_speed);
    let accel = rng.uniform(-params.max_accel, params.max_accel);
    let total = travelled(v0, accel, horizon_t);

    let roll = rng.uniform(0.0, 1.0);
    let (path, command) = if roll < params.turn_fraction {
        let sign = if roll < 0.5 * params.turn_fraction { 1.0 } else { -1.0 };
        let min_r = 0.75 * w + 1.0;
        let radius = rng.uniform(min_r, min_r + 8.0);
        let lead_in = rng.uniform(0.1 * total, 0.5 * total);
        let cmd = if sign > 0.0 { Command::Left } else { Command::Right };
        (
            Path::Turn {
                lead_in,
                radius,
                sign,
            },
            cmd,
        )
    } else {
        let k = rng.uniform(-params.max_curvature, params.max_curvature);
        (Path::Arc { curvature: k }, Command::Straight)
    };

    // Future ground truth.
    let mut gt_trajectory = Vec::with_capacity(HORIZON);
    let mut gt_headings = Vec::with_capacity(HORIZON);
    let mut gt_stations = Vec::with_capacity(HORIZON);
    for i in 1..=HORIZON {
        let s = travelled(v0, accel, dt * i as f64);
        let (p, th) = path.pose(s);
        gt_trajectory.push(p);
        gt_headings.push(th);
        gt_stations.push(s);
    }

    // Map layers.
    let s_back = -25.0;
    let s_front = total + 20.0;
    let (right, left) = (-0.25 * w, 0.75 * w);
    let divider = (0.25 * w - 0.5 * DIVIDER_WIDTH, 0.25 * w + 0.5 * DIVIDER_WIDTH);
    let mut drivable = path.band(s_back, s_front, right, left);
    let mut lanes = path.band(s_back, s_front, divider.0, divider.1);
    let mut crosswalks = Vec::new();
    match path {
        Path::Turn {
            lead_in,
            radius,
            sign,
        } => {
            // The crossing road runs along the post-turn direction through
            // the junction, plus the through-lanes past it.
            let x_c = lead_in + radius;
            let (x0, x1) = (x_c - 0.75 * w, x_c + 0.25 * w);
            let (x0, x1) = if sign > 0.0 { (x0, x1) } else { (x_c - 0.25 * w, x_c + 0.75 * w) };
            let y_far = sign * (radius + total + 20.0);
            let y_near = -sign * (w + 15.0);
            drivable.push(ConvexPolygon::rectangle(x0, y_near.min(y_far), x1, y_near.max(y_far))?);
            let through = Path::Arc { curvature: 0.0 };
            drivable.extend(through.band(lead_in, x_c + w + 15.0, right, left));
            let zx = 0.5 * (x0 + x1);
            lanes.push(ConvexPolygon::rectangle(
                zx - 0.5 * DIVIDER_WIDTH,
                y_near.min(y_far),
                zx + 0.5 * DIVIDER_WIDTH,
                y_near.max(y_far),
            )?);
            let cw = lead_in - rng.uniform(1.0, 5.0);
            crosswalks.push(ConvexPolygon::rectangle(cw - CROSSWALK_DEPTH, right, cw, left)?);
        }
        Path::Arc { .. } => {
            if rng.chance(0.7) {
                let s = rng.uniform(5.0, (total + 10.0).max(6.0));
                crosswalks.extend(path.band(s, s + CROSSWALK_DEPTH, right, left));
            }
        }
    }

    // Obstacles, rejected when they come within the clearance of the
    // inflated ego footprint at any future step.
    let inflated = EgoDims {
        length: params.ego.length + 2.0 * CLEARANCE,
        width: params.ego.width + 2.0 * CLEARANCE,
    };
    let ego_boxes: Vec<ConvexPolygon> = gt_trajectory
        .iter()
        .zip(&gt_headings)
        .map(|(&p, &h)| inflated.footprint(p, h).polygon())
        .collect();
    let n_obs = rng.int_in(params.min_obstacles, params.max_obstacles);
    let mut obstacles: Vec<Vec<OrientedBox>> = vec![Vec::new(); HORIZON];
    for _ in 0..n_obs {
        for _ in 0..OBSTACLE_TRIES {
            let track = sample_track(&mut rng, &path, total, w, v0);
            let boxes: Vec<OrientedBox> = (1..=HORIZON).map(|i| track(dt * i as f64)).collect();
            let clear = boxes.iter().zip(&ego_boxes).all(|(b, e)| {
                crate::geometry::convex_intersection_area(&b.polygon(), e) == 0.0
            });
            if clear {
                for (step, b) in obstacles.iter_mut().zip(boxes) {
                    step.push(b);
                }
                break;
            }
        }
    }

    let mut validity = vec![true; HORIZON];
    if rng.chance(params.truncated_fraction) {
        let cut = rng.int_in(1, 3);
        for v in validity.iter_mut().rev().take(cut) {
            *v = false;
        }
    }

    // Pose log in the global frame: the current pose plus earlier frames.
    let mut hist = root.split("history");
    let origin = Point::new(hist.uniform(-500.0, 500.0), hist.uniform(-500.0, 500.0));
    let yaw = hist.uniform(-0.5, 0.5);
    let t_now = (hist.below(2000) as f64 + 100.0) * dt;
    let n_hist = params.history_frames;
    let mut poses = Vec::with_capacity(n_hist);
    for k in (0..n_hist).rev() {
        let jitter = if k == 0 || params.timestamp_jitter == 0.0 {
            0.0
        } else {
            hist.uniform(-params.timestamp_jitter, params.timestamp_jitter)
        };
        let rel = -(k as f64) * dt + jitter;
        let s = travelled(v0, accel, rel);
        let (p, th) = path.pose(s);
        let g = p.rotate(yaw) + origin;
        poses.push(PoseRecord {
            t: t_now + rel,
            x: g.x,
            y: g.y,
            heading: wrap_angle(th + yaw),
        });
    }

    let scene = Scene {
        seed,
        frame_dt: dt,
        poses,
        commands: vec![command; n_hist],
        drivable,
        lanes,
        crosswalks,
        obstacles,
        gt_trajectory,
        gt_headings,
        validity,
    };
    debug_assert!(scene.validate().is_ok());
    Ok(scene)
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// Samples one obstacle track: a vehicle that is parked at the kerb, drives
/// in the oncoming lane, or leads in the ego lane.
fn sample_track(
    rng: &mut SeededRng,
    path: &Path,
    total: f64,
    w: f64,
    ego_speed: f64,
) -> impl Fn(f64) -> OrientedBox {
    let length = rng.uniform(3.6, 5.0);
    let width = rng.uniform(1.6, 2.0);
    let kind = rng.below(3);
    let s0 = rng.uniform(-5.0, total + 15.0);
    let (lateral, speed, flip) = match kind {
        0 => {
            let side = if rng.chance(0.5) { -0.25 * w - 0.5 * width - 0.3 } else { 0.75 * w + 0.5 * width + 0.3 };
            (side, 0.0, false)
        }
        1 => (0.5 * w, -rng.uniform(0.0, 8.0), true),
        _ => (0.0, ego_speed * rng.uniform(0.6, 1.2), false),
    };
    let path = *path;
    move |t: f64| {
        let s = s0 + speed * t;
        let (p, th) = path.pose(s);
        let n = Point::new(-th.sin(), th.cos());
        let c = p + n * lateral;
        let heading = if flip { wrap_angle(th + std::f64::consts::PI) } else { th };
        OrientedBox {
            center_x: c.x,
            center_y: c.y,
            length,
            width,
            heading,
        }
    }
}

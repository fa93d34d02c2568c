//! Scene files: one TOML document per scene.
//!
//! ```toml
//! format = "map-scene"
//! version = 1
//! seed = "0x000000000000002a"   # hex, TOML integers are signed
//! frame_dt = 0.5
//!
//! [[poses]]            # pose log, oldest first, global frame
//! t = 50.0
//! x = 12.5
//! y = -3.0
//! heading = 0.1
//! command = "LEFT"
//!
//! [[drivable]]         # also [[lanes]], [[crosswalks]]
//! vertices = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]
//!
//! [[steps]]            # exactly 10 future steps, ego frame
//! gt = [4.0, 0.0]
//! heading = 0.0
//! valid = true
//! [[steps.obstacles]]
//! center_x = 10.0
//! center_y = 3.5
//! length = 4.5
//! width = 1.8
//! heading = 3.14
//! ```
//!
//! Reals are written with shortest round-trip formatting, so a load of a
//! saved scene reproduces it exactly. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Command, PoseRecord, Scene, ScenarioError};
use crate::geometry::{ConvexPolygon, OrientedBox, Point};

pub const SCENE_EXTENSION: &str = "scene";
const FORMAT: &str = "map-scene";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    format: String,
    version: u32,
    seed: String,
    frame_dt: f64,
    poses: Vec<PoseLine>,
    #[serde(default)]
    drivable: Vec<PolygonFile>,
    #[serde(default)]
    lanes: Vec<PolygonFile>,
    #[serde(default)]
    crosswalks: Vec<PolygonFile>,
    steps: Vec<StepFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseLine {
    t: f64,
    x: f64,
    y: f64,
    heading: f64,
    command: Command,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolygonFile {
    vertices: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepFile {
    gt: [f64; 2],
    heading: f64,
    valid: bool,
    #[serde(default)]
    obstacles: Vec<BoxFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxFile {
    center_x: f64,
    center_y: f64,
    length: f64,
    width: f64,
    heading: f64,
}

fn polys_out(ps: &[ConvexPolygon]) -> Vec<PolygonFile> {
    ps.iter()
        .map(|p| PolygonFile {
            vertices: p.vertices().iter().map(|v| [v.x, v.y]).collect(),
        })
        .collect()
}

pub fn scenario_to_string(scene: &Scene) -> String {
    let file = SceneFile {
        format: FORMAT.into(),
        version: VERSION,
        seed: format!("{:#018x}", scene.seed),
        frame_dt: scene.frame_dt,
        poses: scene
            .poses
            .iter()
            .zip(&scene.commands)
            .map(|(p, &command)| PoseLine {
                t: p.t,
                x: p.x,
                y: p.y,
                heading: p.heading,
                command,
            })
            .collect(),
        drivable: polys_out(&scene.drivable),
        lanes: polys_out(&scene.lanes),
        crosswalks: polys_out(&scene.crosswalks),
        steps: (0..scene.gt_trajectory.len())
            .map(|i| StepFile {
                gt: [scene.gt_trajectory[i].x, scene.gt_trajectory[i].y],
                heading: scene.gt_headings[i],
                valid: scene.validity[i],
                obstacles: scene.obstacles[i]
                    .iter()
                    .map(|b| BoxFile {
                        center_x: b.center_x,
                        center_y: b.center_y,
                        length: b.length,
                        width: b.width,
                        heading: b.heading,
                    })
                    .collect(),
            })
            .collect(),
    };
    toml::to_string(&file).expect("scene serializes")
}

pub fn save_scenario(scene: &Scene, path: &Path) -> Result<(), ScenarioError> {
    std::fs::write(path, scenario_to_string(scene)).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scene, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Parses a scene document; `origin` names the source in error messages.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scene, ScenarioError> {
    let file: SceneFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((0, 0));
        ScenarioError::Parse {
            path: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let invalid = |message: String| ScenarioError::Invalid {
        path: origin.to_string(),
        message,
    };
    if file.format != FORMAT {
        return Err(invalid(format!("format is `{}`, expected `{FORMAT}`", file.format)));
    }
    if file.version != VERSION {
        return Err(invalid(format!("unsupported version {}", file.version)));
    }
    let seed = file
        .seed
        .strip_prefix("0x")
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(|| invalid(format!("seed `{}` is not a 0x-prefixed hex integer", file.seed)))?;
    let polys = |list: Vec<PolygonFile>, what: &str| -> Result<Vec<ConvexPolygon>, ScenarioError> {
        list.into_iter()
            .enumerate()
            .map(|(i, p)| {
                ConvexPolygon::new(p.vertices.iter().map(|v| Point::new(v[0], v[1])).collect())
                    .map_err(|e| invalid(format!("{what}[{i}]: {e}")))
            })
            .collect()
    };
    let mut obstacles = Vec::with_capacity(file.steps.len());
    let mut gt_trajectory = Vec::with_capacity(file.steps.len());
    let mut gt_headings = Vec::with_capacity(file.steps.len());
    let mut validity = Vec::with_capacity(file.steps.len());
    for (i, st) in file.steps.into_iter().enumerate() {
        gt_trajectory.push(Point::new(st.gt[0], st.gt[1]));
        gt_headings.push(st.heading);
        validity.push(st.valid);
        let boxes = st
            .obstacles
            .into_iter()
            .map(|b| {
                OrientedBox::new(b.center_x, b.center_y, b.length, b.width, b.heading)
                    .map_err(|e| invalid(format!("steps[{i}].obstacles: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        obstacles.push(boxes);
    }
    let scene = Scene {
        seed,
        frame_dt: file.frame_dt,
        poses: file
            .poses
            .iter()
            .map(|p| PoseRecord {
                t: p.t,
                x: p.x,
                y: p.y,
                heading: p.heading,
            })
            .collect(),
        commands: file.poses.iter().map(|p| p.command).collect(),
        drivable: polys(file.drivable, "drivable")?,
        lanes: polys(file.lanes, "lanes")?,
        crosswalks: polys(file.crosswalks, "crosswalks")?,
        obstacles,
        gt_trajectory,
        gt_headings,
        validity,
    };
    scene.validate().map_err(invalid)?;
    Ok(scene)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

//! Synthetic driving scenes: generation, ego-status derivation, BEV
//! rasterization and the on-disk scene format.

mod bev;
mod ego;
mod generate;
mod io;
mod regions;

pub use bev::{rasterize_bev, BevGrid, SemanticClass, MIN_CHANNELS};
pub use ego::{derive_ego_status, Command, EgoStatus, IntervalMode, PoseRecord};
pub use generate::{generate_scenario, ScenarioParams};
pub use io::{load_scenario, parse_scenario, save_scenario, scenario_to_string, SCENE_EXTENSION};
pub use regions::SceneRegions;

use serde::{Deserialize, Serialize};

use crate::geometry::{ConvexPolygon, GeometryError, GridSpec, OrientedBox, Point};

/// Number of future waypoints.
pub const HORIZON: usize = 10;
/// Nominal spacing between frames, seconds.
pub const FRAME_DT: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("frame {frame}: time step {dt} s is not positive")]
    NonPositiveInterval { frame: usize, dt: f64 },
    #[error("no driving command recorded for frame {0}")]
    MissingCommand(usize),
    #[error("frame index {index} needs two preceding frames (log has {len})")]
    FrameIndex { index: usize, len: usize },
    #[error("unsatisfiable scenario parameters: {0}")]
    Unsatisfiable(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Ego vehicle footprint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoDims {
    pub length: f64,
    pub width: f64,
}

impl Default for EgoDims {
    fn default() -> Self {
        Self {
            length: 4.0,
            width: 1.8,
        }
    }
}

impl EgoDims {
    /// Footprint centered at `p` with heading `heading`.
    pub fn footprint(&self, p: Point, heading: f64) -> OrientedBox {
        OrientedBox {
            center_x: p.x,
            center_y: p.y,
            length: self.length,
            width: self.width,
            heading,
        }
    }
}

/// Grids used for the learned BEV features and for region tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Feature grid fed to both planning branches.
    pub bev: GridSpec,
    /// Finer grid for the drivable and obstacle regions used by the
    /// adaptive loss and the evaluation metrics.
    pub region: GridSpec,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            bev: GridSpec {
                origin_x: -8.0,
                origin_y: -32.0,
                resolution: 1.0,
                rows: 64,
                cols: 64,
            },
            region: GridSpec {
                origin_x: -20.0,
                origin_y: -50.0,
                resolution: 0.5,
                rows: 200,
                cols: 200,
            },
        }
    }
}

/// One planning sample. Map geometry, obstacles and the ground-truth plan
/// are in the ego frame of the current frame (x forward, y left); the pose
/// log is in the global frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub frame_dt: f64,
    pub poses: Vec<PoseRecord>,
    pub commands: Vec<Command>,
    pub drivable: Vec<ConvexPolygon>,
    pub lanes: Vec<ConvexPolygon>,
    pub crosswalks: Vec<ConvexPolygon>,
    /// Obstacle boxes at each future step `1..=HORIZON`.
    pub obstacles: Vec<Vec<OrientedBox>>,
    pub gt_trajectory: Vec<Point>,
    pub gt_headings: Vec<f64>,
    pub validity: Vec<bool>,
}

impl Scene {
    pub fn validate(&self) -> Result<(), String> {
        let n = HORIZON;
        if self.obstacles.len() != n
            || self.gt_trajectory.len() != n
            || self.gt_headings.len() != n
            || self.validity.len() != n
        {
            return Err(format!("every per-step list must have exactly {n} entries"));
        }
        if self.poses.len() < 3 {
            return Err("pose log needs at least 3 frames".into());
        }
        if self.commands.len() != self.poses.len() {
            return Err("command log must have one entry per pose".into());
        }
        if self.poses.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err("pose timestamps must be strictly increasing".into());
        }
        if !(self.frame_dt > 0.0) {
            return Err("frame_dt must be positive".into());
        }
        let finite = self
            .gt_trajectory
            .iter()
            .all(|p| p.x.is_finite() && p.y.is_finite())
            && self.gt_headings.iter().all(|h| h.is_finite());
        if !finite {
            return Err("ground truth contains non-finite values".into());
        }
        for boxes in &self.obstacles {
            for b in boxes {
                b.validate().map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    /// Ego status at the current (last) frame.
    pub fn ego_status(&self, mode: IntervalMode) -> Result<EgoStatus, ScenarioError> {
        derive_ego_status(&self.poses, &self.commands, self.poses.len() - 1, mode)
    }

    pub fn command(&self) -> Command {
        *self.commands.last().expect("validated scene has poses")
    }

    pub fn valid_steps(&self) -> usize {
        self.validity.iter().filter(|&&v| v).count()
    }
}

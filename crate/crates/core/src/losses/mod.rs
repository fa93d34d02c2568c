//! Planning losses on the decoded trajectory: footprint overlap with
//! obstacles, displacement error, the region-indicator loss and their total.

use serde::{Deserialize, Serialize};

use crate::geometry::{intersection_area_and_translation_grad, ConvexPolygon, Point};
use crate::mapping::{mapping_loss, MapConfig, MapTargets, MappingError, MappingLossParts};
use crate::numerics::{sigmoid, NumericsError, Tape, Tensor, Var};
use crate::planner::PlanOutput;
use crate::scenario::{EgoDims, Scene, SceneRegions};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("loss weights must be non-negative, got {0:?}")]
    NegativeWeight(AdaptiveWeights),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("prediction has {got} steps, expected {want}")]
    Length { got: usize, want: usize },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Weights of the displacement, collision and off-road terms of the
/// adaptive loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveWeights {
    pub w_l2: f64,
    pub w_col: f64,
    pub w_off: f64,
}

impl Default for AdaptiveWeights {
    fn default() -> Self {
        Self {
            w_l2: 0.1,
            w_col: 1.0,
            w_off: 1.0,
        }
    }
}

impl AdaptiveWeights {
    pub const ZERO: AdaptiveWeights = AdaptiveWeights {
        w_l2: 0.0,
        w_col: 0.0,
        w_off: 0.0,
    };

    pub fn validate(&self) -> Result<(), LossError> {
        if [self.w_l2, self.w_col, self.w_off].iter().all(|w| *w >= 0.0) {
            Ok(())
        } else {
            Err(LossError::NegativeWeight(*self))
        }
    }
}

/// How region membership is scored in the adaptive loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IndicatorMode {
    /// Hard 0/1 membership in the rasterized regions.
    Exact,
    /// `sigmoid(−d / τ)` of the signed distance `d` to the region.
    Soft { tau: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub adaptive: AdaptiveWeights,
    /// Soft indicator temperature, meters.
    pub tau: f64,
    pub ego: EgoDims,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            adaptive: AdaptiveWeights::default(),
            tau: 0.5,
            ego: EgoDims::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        self.adaptive.validate()?;
        if !(self.tau > 0.0) {
            return Err(LossError::BadTemperature(self.tau));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub collision: f64,
    pub ade: f64,
    pub adaptive: f64,
    pub mapping: f64,
    pub total: f64,
    /// Per-layer mapping terms, when the map branch ran.
    pub mapping_parts: Option<MappingLossParts>,
    pub warnings: Vec<String>,
}

fn mask_column(mask: &[bool]) -> Tensor {
    let v = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Tensor::new(mask.len(), 1, v).expect("non-empty mask")
}

fn points_tensor(pts: &[Point]) -> Tensor {
    let data = pts.iter().flat_map(|p| [p.x, p.y]).collect();
    Tensor::new(pts.len(), 2, data).expect("non-empty trajectory")
}

/// Overlap of the ego footprint at step `i` with that step's obstacles and
/// its gradient with respect to the footprint center.
fn step_overlap(scene: &Scene, ego: &EgoDims, obstacles: &[Vec<ConvexPolygon>], i: usize, p: Point) -> (f64, Point) {
    let own = ego.footprint(p, scene.gt_headings[i]).polygon();
    obstacles[i].iter().fold((0.0, Point::default()), |(a, g), obs| {
        let (da, dg) = intersection_area_and_translation_grad(&own, obs);
        (a + da, g + dg)
    })
}

fn obstacle_polygons(scene: &Scene) -> Vec<Vec<ConvexPolygon>> {
    scene
        .obstacles
        .iter()
        .map(|step| step.iter().map(|b| b.polygon()).collect())
        .collect()
}

/// `Σᵢ mᵢ Σⱼ Ω(B(x̂ᵢ, ŷᵢ, θᵢ_gt), Bᵢⱼ)` for `T × 2` waypoints on the tape.
pub fn collision_loss(tape: &mut Tape, waypoints: Var, scene: &Scene, ego: &EgoDims) -> Var {
    let polys = obstacle_polygons(scene);
    let per_step = tape.row_fn_indexed(waypoints, |i, row| {
        if !scene.validity[i] {
            return (0.0, vec![0.0, 0.0]);
        }
        let (a, g) = step_overlap(scene, ego, &polys, i, Point::new(row[0], row[1]));
        (a, vec![g.x, g.y])
    });
    tape.sum(per_step)
}

pub fn collision_value(pred: &[Point], scene: &Scene, ego: &EgoDims) -> f64 {
    let polys = obstacle_polygons(scene);
    pred.iter()
        .enumerate()
        .filter(|(i, _)| scene.validity[*i])
        .map(|(i, &p)| step_overlap(scene, ego, &polys, i, p).0)
        .sum()
}

/// Masked mean distance between waypoints; 0 when no step is valid.
pub fn ade_loss(tape: &mut Tape, waypoints: Var, gt: &[Point], mask: &[bool]) -> Result<Var, NumericsError> {
    let valid = mask.iter().filter(|&&m| m).count();
    let g = tape.constant(points_tensor(gt));
    let diff = tape.sub(waypoints, g)?;
    let dist = tape.row_norm(diff);
    let m = tape.constant(mask_column(mask));
    let masked = tape.mul(dist, m)?;
    let total = tape.sum(masked);
    Ok(tape.scale(total, if valid == 0 { 0.0 } else { 1.0 / valid as f64 }))
}

pub fn ade_value(pred: &[Point], gt: &[Point], mask: &[bool]) -> f64 {
    let (sum, n) = pred
        .iter()
        .zip(gt)
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((p, g), _)| (s + (*p - *g).norm(), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// The three adaptive terms before weighting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveTerms {
    /// Masked sum of waypoint distances.
    pub l2: f64,
    /// Steps with the prediction inside an obstacle while the ground truth
    /// is not.
    pub col: f64,
    /// Steps with the prediction in the undrivable region.
    pub off: f64,
}

impl AdaptiveTerms {
    pub fn weighted(&self, w: &AdaptiveWeights) -> f64 {
        w.w_l2 * self.l2 + w.w_col * self.col + w.w_off * self.off
    }
}

fn soft_indicator(d: f64, tau: f64) -> f64 {
    sigmoid(-d / tau)
}

/// Adaptive-loss terms for plain waypoints. The region terms run over every
/// step; only the displacement term is masked.
pub fn adaptive_terms(
    pred: &[Point],
    scene: &Scene,
    regions: &SceneRegions,
    mode: IndicatorMode,
) -> AdaptiveTerms {
    let mut t = AdaptiveTerms {
        l2: 0.0,
        col: 0.0,
        off: 0.0,
    };
    for (i, &p) in pred.iter().enumerate() {
        let gt = scene.gt_trajectory[i];
        if scene.validity[i] {
            t.l2 += (p - gt).norm();
        }
        let gt_clear = !regions.in_obstacle(i, gt);
        match mode {
            IndicatorMode::Exact => {
                if gt_clear && regions.in_obstacle(i, p) {
                    t.col += 1.0;
                }
                if regions.is_offroad(p) {
                    t.off += 1.0;
                }
            }
            IndicatorMode::Soft { tau } => {
                if gt_clear {
                    t.col += soft_indicator(regions.obstacle_distance(i, p).0, tau);
                }
                t.off += soft_indicator(regions.undrivable_distance(p).0, tau);
            }
        }
    }
    t
}

pub fn adaptive_loss(
    pred: &[Point],
    scene: &Scene,
    regions: &SceneRegions,
    w: &AdaptiveWeights,
    mode: IndicatorMode,
) -> f64 {
    adaptive_terms(pred, scene, regions, mode).weighted(w)
}

/// Soft adaptive loss of `T × 2` waypoints on the tape.
pub fn adaptive_loss_soft(
    tape: &mut Tape,
    waypoints: Var,
    scene: &Scene,
    regions: &SceneRegions,
    w: &AdaptiveWeights,
    tau: f64,
) -> Result<Var, NumericsError> {
    let g = tape.constant(points_tensor(&scene.gt_trajectory));
    let diff = tape.sub(waypoints, g)?;
    let dist = tape.row_norm(diff);
    let m = tape.constant(mask_column(&scene.validity));
    let masked = tape.mul(dist, m)?;
    let l2 = tape.sum(masked);
    let l2 = tape.scale(l2, w.w_l2);

    let gt_clear: Vec<bool> = (0..scene.gt_trajectory.len())
        .map(|i| !regions.in_obstacle(i, scene.gt_trajectory[i]))
        .collect();
    let (w_col, w_off) = (w.w_col, w.w_off);
    let regions_per_step = tape.row_fn_indexed(waypoints, |i, row| {
        let p = Point::new(row[0], row[1]);
        let mut value = 0.0;
        let mut grad = Point::default();
        if gt_clear[i] && w_col != 0.0 {
            let (d, dd) = regions.obstacle_distance(i, p);
            let s = soft_indicator(d, tau);
            value += w_col * s;
            grad = grad + dd * (-w_col * s * (1.0 - s) / tau);
        }
        if w_off != 0.0 {
            let (d, dd) = regions.undrivable_distance(p);
            let s = soft_indicator(d, tau);
            value += w_off * s;
            grad = grad + dd * (-w_off * s * (1.0 - s) / tau);
        }
        (value, vec![grad.x, grad.y])
    });
    let region_total = tape.sum(regions_per_step);
    tape.add(l2, region_total)
}

/// Everything the planning loss needs besides the network output.
pub struct LossContext<'a> {
    pub scene: &'a Scene,
    pub regions: &'a SceneRegions,
    /// Mapping ground truth; required when the output carries a map branch.
    pub map_targets: Option<&'a MapTargets>,
    pub map_config: &'a MapConfig,
    pub config: &'a LossConfig,
}

/// `mapping + collision + ADE + adaptive(SOFT)` on the decoded trajectory.
/// Nothing here reads the ego-status-guided query on its own.
pub fn planning_loss(
    tape: &mut Tape,
    out: &PlanOutput,
    ctx: &LossContext<'_>,
) -> Result<(Var, LossReport), LossError> {
    let scene = ctx.scene;
    let n = tape.shape(out.plan.waypoints)[0];
    if n != scene.gt_trajectory.len() {
        return Err(LossError::Length {
            got: n,
            want: scene.gt_trajectory.len(),
        });
    }
    let mut report = LossReport::default();
    let wp = out.plan.waypoints;

    let col = collision_loss(tape, wp, scene, &ctx.config.ego);
    let ade = ade_loss(tape, wp, &scene.gt_trajectory, &scene.validity)?;
    if !scene.validity.iter().any(|&v| v) {
        report
            .warnings
            .push("no valid ground-truth step; displacement error set to 0".into());
    }
    let adaptive = adaptive_loss_soft(tape, wp, scene, ctx.regions, &ctx.config.adaptive, ctx.config.tau)?;
    let mut terms = vec![col, ade, adaptive];
    report.collision = tape.value(col).item();
    report.ade = tape.value(ade).item();
    report.adaptive = tape.value(adaptive).item();

    if let (Some(seg), Some(targets)) = (&out.seg, ctx.map_targets) {
        let (m, parts) = mapping_loss(tape, seg, targets, ctx.map_config)?;
        report.mapping = tape.value(m).item();
        report.mapping_parts = Some(parts);
        terms.push(m);
    }
    let all = tape.concat_rows(&terms)?;
    let total = tape.sum(all);
    report.total = report.mapping + report.collision + report.ade + report.adaptive;
    Ok((total, report))
}

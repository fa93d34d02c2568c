use std::fmt::Write as _;
use std::path::Path;

use super::dataset::Sample;
use super::train::predict;
use super::CliError;
use crate::eval::{evaluate, CollisionMode, HorizonSpec, MetricsReport};
use crate::geometry::Point;
use crate::planner::{Ablation, Model};
use crate::scenario::{EgoDims, HORIZON};

pub const PREDICTIONS_FILE: &str = "predictions.csv";
const PREDICTIONS_HEADER: &str = "scene,step,x,y";

/// Where evaluated trajectories come from.
#[derive(Clone, Copy, Debug)]
pub enum Predictor<'a> {
    Model { model: &'a Model, ablation: Ablation },
    /// Ground truth passed through as the prediction.
    GroundTruth,
}

/// Predictions for every sample, computed on up to `workers` threads and
/// returned in sample order.
pub fn predict_all(predictor: Predictor<'_>, samples: &[Sample], workers: usize) -> Result<Vec<Vec<Point>>, CliError> {
    let one = |s: &Sample| match predictor {
        Predictor::Model { model, ablation } => predict(model, s, ablation),
        Predictor::GroundTruth => Ok(s.scene.gt_trajectory.clone()),
    };
    let workers = workers.clamp(1, samples.len().max(1));
    if workers == 1 {
        return samples.iter().map(one).collect();
    }
    let chunk = samples.len().div_ceil(workers);
    let parts: Vec<Result<Vec<Vec<Point>>, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(one).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn evaluate_samples(
    preds: &[Vec<Point>],
    samples: &[Sample],
    h: &HorizonSpec,
    mode: CollisionMode,
    ego: &EgoDims,
) -> Result<MetricsReport, CliError> {
    let scenes: Vec<_> = samples.iter().map(|s| &s.scene).collect();
    let regions: Vec<_> = samples.iter().map(|s| &s.regions).collect();
    Ok(evaluate(preds, &scenes, &regions, h, mode, ego)?)
}

pub fn predictions_csv(samples: &[Sample], preds: &[Vec<Point>]) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for (s, p) in samples.iter().zip(preds) {
        for (i, w) in p.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", s.id, i + 1, w.x, w.y);
        }
    }
    out
}

/// Waypoints recorded for `scene_id` in a predictions file.
pub fn read_predictions(path: &Path, scene_id: &str) -> Result<Vec<Point>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut pts = vec![None; HORIZON];
    for (k, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || CliError::Format {
            path: path.to_path_buf(),
            line: k + 1,
        };
        let [id, step, x, y] = f[..] else { return Err(bad()) };
        if id != scene_id {
            continue;
        }
        let step: usize = step.parse().map_err(|_| bad())?;
        let p = Point::new(x.parse().map_err(|_| bad())?, y.parse().map_err(|_| bad())?);
        *pts.get_mut(step.wrapping_sub(1)).ok_or_else(bad)? = Some(p);
    }
    if pts.iter().all(Option::is_none) {
        return Err(CliError::MissingScene(scene_id.to_string()));
    }
    pts.into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::MissingScene(format!("{scene_id} (incomplete trajectory)")))
}

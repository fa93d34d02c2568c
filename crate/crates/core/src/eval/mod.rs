//! Planning metrics at fixed horizons, the normalized leaderboard score and
//! the metrics table format.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::geometry::{convex_intersection_area, Point};
use crate::scenario::{EgoDims, Scene, SceneRegions, FRAME_DT, HORIZON};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("horizon step {step} is outside 1..={max}")]
    Horizon { step: usize, max: usize },
    #[error("{preds} predictions for {scenes} scenes")]
    Batch { preds: usize, scenes: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

/// Header of the metrics table; bump the version on any layout change.
pub const METRICS_HEADER: &str = "# map-metrics v1\nmetric,horizon,value\n";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Reference values and ranges of the normalized score.
const L2_REF: f64 = 3.5;
const L2_RANGE: f64 = 1.0;
const COL_REF: f64 = 2.0;
const COL_RANGE: f64 = 1.5;
const OFF_REF: f64 = 2.5;
const OFF_RANGE: f64 = 2.5;

/// `0.5·(3.5 − l2)/1 + 0.25·(2 − col)/1.5 + 0.25·(2.5 − off)/2.5`, rates in
/// percent. Not clamped.
pub fn leaderboard_score(l2_avg: f64, col: f64, off: f64) -> f64 {
    0.5 * (L2_REF - l2_avg) / L2_RANGE + 0.25 * (COL_REF - col) / COL_RANGE + 0.25 * (OFF_REF - off) / OFF_RANGE
}

/// 1-based future step indices at which metrics are read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HorizonSpec {
    steps: Vec<usize>,
}

impl Default for HorizonSpec {
    fn default() -> Self {
        Self { steps: vec![5, 7, 9] }
    }
}

impl HorizonSpec {
    pub fn new(steps: Vec<usize>) -> Result<Self, EvalError> {
        match steps.iter().find(|&&s| s == 0 || s > HORIZON) {
            Some(&step) => Err(EvalError::Horizon { step, max: HORIZON }),
            None => Ok(Self { steps }),
        }
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    /// Column label, e.g. `2.5s` for step 5.
    pub fn label(step: usize) -> String {
        format!("{}s", step as f64 * FRAME_DT)
    }
}

/// Which test decides a collision at a horizon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CollisionMode {
    /// Waypoint inside an obstacle cell while the ground-truth waypoint is not.
    #[default]
    Point,
    /// Ego footprint overlaps an obstacle while the ground-truth footprint
    /// does not.
    Footprint,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn check_batch(preds: usize, scenes: usize) -> Result<(), EvalError> {
    if preds == scenes {
        Ok(())
    } else {
        Err(EvalError::Batch { preds, scenes })
    }
}

/// Mean error at each horizon step over the scenes valid there; `None` when
/// no scene is valid.
pub fn l2_metrics(
    preds: &[Vec<Point>],
    gts: &[Vec<Point>],
    masks: &[Vec<bool>],
    h: &HorizonSpec,
) -> Result<Vec<Option<f64>>, EvalError> {
    check_batch(preds.len(), gts.len())?;
    check_batch(masks.len(), gts.len())?;
    Ok(h.steps()
        .iter()
        .map(|&s| {
            let i = s - 1;
            mean(
                (0..preds.len())
                    .filter(|&k| masks[k][i])
                    .map(|k| (preds[k][i] - gts[k][i]).norm()),
            )
        })
        .collect())
}

fn footprint_hits(scene: &Scene, ego: &EgoDims, step: usize, p: Point) -> bool {
    let own = ego.footprint(p, scene.gt_headings[step]).polygon();
    scene.obstacles[step]
        .iter()
        .any(|b| convex_intersection_area(&own, &b.polygon()) > 1e-9)
}

fn rate(hits: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    mean(hits.flatten().map(|h| if h { 100.0 } else { 0.0 }))
}

/// Percent of valid scenes colliding at each horizon.
pub fn collision_rate(
    preds: &[Vec<Point>],
    scenes: &[&Scene],
    regions: &[&SceneRegions],
    h: &HorizonSpec,
    mode: CollisionMode,
    ego: &EgoDims,
) -> Result<Vec<Option<f64>>, EvalError> {
    check_batch(preds.len(), scenes.len())?;
    check_batch(regions.len(), scenes.len())?;
    Ok(h.steps()
        .iter()
        .map(|&s| {
            let i = s - 1;
            rate((0..scenes.len()).map(|k| {
                let scene = scenes[k];
                if !scene.validity[i] {
                    return None;
                }
                let (p, g) = (preds[k][i], scene.gt_trajectory[i]);
                Some(match mode {
                    CollisionMode::Point => regions[k].in_obstacle(i, p) && !regions[k].in_obstacle(i, g),
                    CollisionMode::Footprint => {
                        footprint_hits(scene, ego, i, p) && !footprint_hits(scene, ego, i, g)
                    }
                })
            }))
        })
        .collect())
}

/// Percent of valid scenes whose waypoint is outside the drivable region at
/// each horizon; off-grid counts as off-road.
pub fn offroad_rate(
    preds: &[Vec<Point>],
    scenes: &[&Scene],
    regions: &[&SceneRegions],
    h: &HorizonSpec,
) -> Result<Vec<Option<f64>>, EvalError> {
    check_batch(preds.len(), scenes.len())?;
    check_batch(regions.len(), scenes.len())?;
    Ok(h.steps()
        .iter()
        .map(|&s| {
            let i = s - 1;
            rate((0..scenes.len()).map(|k| scenes[k].validity[i].then(|| regions[k].is_offroad(preds[k][i]))))
        })
        .collect())
}

/// One metric across the horizons plus their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonValues {
    pub values: Vec<Option<f64>>,
    pub avg: Option<f64>,
}

impl HorizonValues {
    pub fn new(values: Vec<Option<f64>>) -> Self {
        let avg = values
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .and_then(|v| mean(v.into_iter()));
        Self { values, avg }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub horizons: HorizonSpec,
    /// Meters.
    pub l2: HorizonValues,
    /// Percent.
    pub collision_rate: HorizonValues,
    /// Percent.
    pub offroad_rate: HorizonValues,
    pub score: Option<f64>,
    pub n_scenes: usize,
}

impl MetricsReport {
    pub fn new(
        horizons: HorizonSpec,
        l2: Vec<Option<f64>>,
        col: Vec<Option<f64>>,
        off: Vec<Option<f64>>,
        n_scenes: usize,
    ) -> Self {
        let (l2, col, off) = (HorizonValues::new(l2), HorizonValues::new(col), HorizonValues::new(off));
        let score = match (l2.avg, col.avg, off.avg) {
            (Some(a), Some(b), Some(c)) => Some(leaderboard_score(a, b, c)),
            _ => None,
        };
        Self {
            horizons,
            l2,
            collision_rate: col,
            offroad_rate: off,
            score,
            n_scenes,
        }
    }

    fn metrics(&self) -> [(&'static str, &HorizonValues); 3] {
        [
            ("l2", &self.l2),
            ("collision_rate", &self.collision_rate),
            ("offroad_rate", &self.offroad_rate),
        ]
    }
}

/// Every metric for a batch of predictions.
pub fn evaluate(
    preds: &[Vec<Point>],
    scenes: &[&Scene],
    regions: &[&SceneRegions],
    h: &HorizonSpec,
    mode: CollisionMode,
    ego: &EgoDims,
) -> Result<MetricsReport, EvalError> {
    let gts: Vec<Vec<Point>> = scenes.iter().map(|s| s.gt_trajectory.clone()).collect();
    let masks: Vec<Vec<bool>> = scenes.iter().map(|s| s.validity.clone()).collect();
    let l2 = l2_metrics(preds, &gts, &masks, h)?;
    let col = collision_rate(preds, scenes, regions, h, mode, ego)?;
    let off = offroad_rate(preds, scenes, regions, h)?;
    Ok(MetricsReport::new(h.clone(), l2, col, off, scenes.len()))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// The metrics table: one `metric,horizon,value` row per metric and
/// horizon, then `avg`, then the score and scene count. Absent values are
/// written as `NA`.
pub fn report_to_csv(r: &MetricsReport) -> String {
    let mut out = String::from(METRICS_HEADER);
    for (name, hv) in r.metrics() {
        for (&s, v) in r.horizons.steps().iter().zip(&hv.values) {
            let _ = writeln!(out, "{name},{},{}", HorizonSpec::label(s), cell(*v));
        }
        let _ = writeln!(out, "{name},avg,{}", cell(hv.avg));
    }
    let _ = writeln!(out, "score,all,{}", cell(r.score));
    let _ = writeln!(out, "n_scenes,all,{}", r.n_scenes);
    out
}

fn fmt_cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"))
}

pub fn report_summary(r: &MetricsReport) -> String {
    let mut out = String::new();
    let labels: Vec<String> = r.horizons.steps().iter().map(|&s| HorizonSpec::label(s)).collect();
    let _ = writeln!(out, "scenes: {}", r.n_scenes);
    let _ = writeln!(out, "{:<16}{}  avg", "", labels.iter().map(|l| format!("{l:>8}")).collect::<String>());
    for (name, hv) in r.metrics() {
        let unit = if name == "l2" { " (m)" } else { " (%)" };
        let cols: String = hv.values.iter().map(|v| format!("{:>8}", fmt_cell(*v, 2))).collect();
        let _ = writeln!(out, "{:<16}{cols}{:>8}", format!("{name}{unit}"), fmt_cell(hv.avg, 2));
    }
    let _ = writeln!(out, "score: {}", fmt_cell(r.score, 3));
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `metrics.csv` and `summary.txt` under `dir`.
pub fn emit_report(r: &MetricsReport, dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv = dir.join(METRICS_FILE);
    std::fs::write(&csv, report_to_csv(r)).map_err(io_err(&csv))?;
    let txt = dir.join(SUMMARY_FILE);
    std::fs::write(&txt, report_summary(r)).map_err(io_err(&txt))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<MetricsReport, EvalError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_report(&text, path)
}

pub fn parse_report(text: &str, path: &Path) -> Result<MetricsReport, EvalError> {
    let fail = |line: usize, message: String| EvalError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    if !text.starts_with(METRICS_HEADER) {
        return Err(fail(1, "missing `# map-metrics v1` header".into()));
    }
    let mut steps = Vec::new();
    let mut values: [Vec<Option<f64>>; 3] = Default::default();
    let mut n_scenes = None;
    let names = ["l2", "collision_rate", "offroad_rate"];
    for (k, line) in text.lines().enumerate().skip(2) {
        let lineno = k + 1;
        let parts: Vec<&str> = line.split(',').collect();
        let [metric, horizon, value] = parts[..] else {
            return Err(fail(lineno, format!("expected 3 fields, got {}", parts.len())));
        };
        let parsed = if value == "NA" {
            None
        } else {
            Some(value.parse::<f64>().map_err(|e| fail(lineno, format!("{value}: {e}")))?)
        };
        match (metric, horizon) {
            ("n_scenes", _) => {
                n_scenes = Some(value.parse::<usize>().map_err(|e| fail(lineno, format!("{value}: {e}")))?)
            }
            ("score", _) | (_, "avg") => {}
            _ => {
                let idx = names
                    .iter()
                    .position(|n| *n == metric)
                    .ok_or_else(|| fail(lineno, format!("unknown metric `{metric}`")))?;
                if idx == 0 {
                    let secs: f64 = horizon
                        .strip_suffix('s')
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| fail(lineno, format!("bad horizon `{horizon}`")))?;
                    steps.push((secs / FRAME_DT).round() as usize);
                }
                values[idx].push(parsed);
            }
        }
    }
    let horizons = HorizonSpec::new(steps).map_err(|e| fail(0, e.to_string()))?;
    let [l2, col, off] = values;
    if col.len() != l2.len() || off.len() != l2.len() {
        return Err(fail(0, "metrics disagree on the number of horizons".into()));
    }
    let n_scenes = n_scenes.ok_or_else(|| fail(0, "missing n_scenes row".into()))?;
    Ok(MetricsReport::new(horizons, l2, col, off, n_scenes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_reference_rows() {
        assert!((leaderboard_score(3.07, 0.71, 0.89) - 0.591).abs() < 1e-3);
        assert!((leaderboard_score(2.56, 0.96, 0.39) - 0.854).abs() < 1e-3);
        assert!((leaderboard_score(2.67, 0.67, 0.46) - 0.841).abs() < 1e-3);
        assert_eq!(leaderboard_score(3.5, 2.0, 2.5), 0.0);
        assert!((leaderboard_score(0.0, 0.0, 0.0) - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn l2_horizon_cases() {
        let h = HorizonSpec::default();
        let gt: Vec<Point> = (0..HORIZON).map(|i| Point::new(i as f64, 0.0)).collect();
        let off1: Vec<Point> = gt.iter().map(|p| *p + Point::new(0.0, 1.0)).collect();
        let off3: Vec<Point> = gt.iter().map(|p| *p + Point::new(3.0, 0.0)).collect();
        let m = vec![vec![true; HORIZON]; 2];
        let v = l2_metrics(&[off1.clone(), off3], &[gt.clone(), gt.clone()], &m, &h).unwrap();
        assert_eq!(v[0], Some(2.0));
        let v = l2_metrics(&[off1], &[gt.clone()], &m[..1], &h).unwrap();
        assert_eq!(HorizonValues::new(v).avg, Some(1.0));
        let v = l2_metrics(&[gt.clone()], &[gt], &[vec![false; HORIZON]], &h).unwrap();
        assert_eq!(v, vec![None; 3]);
    }

    #[test]
    fn horizon_bounds() {
        assert!(HorizonSpec::new(vec![11]).is_err());
        assert!(HorizonSpec::new(vec![0]).is_err());
        assert_eq!(HorizonSpec::label(7), "3.5s");
    }

    #[test]
    fn csv_round_trip() {
        let r = MetricsReport::new(
            HorizonSpec::default(),
            vec![Some(0.1 + 0.2), Some(1.0 / 3.0), Some(2.5)],
            vec![Some(0.0), None, Some(12.5)],
            vec![Some(50.0), Some(0.0), Some(100.0)],
            40,
        );
        let back = parse_report(&report_to_csv(&r), Path::new("m")).unwrap();
        assert_eq!(back, r);
        assert!(report_to_csv(&r).starts_with(METRICS_HEADER));
    }
}

//! Helpers shared by the integration suites.
#![allow(dead_code)]

use map_planner::cli::dataset::Sample;
use map_planner::geometry::Point;
use map_planner::losses::{
    ade_loss, adaptive_loss_soft, collision_loss, planning_loss, AdaptiveWeights, LossConfig, LossContext,
};
use map_planner::mapping::{detection_loss, dice_loss, focal_loss, DetectionWeights, LayerPrediction, MapConfig};
use map_planner::numerics::{finite_diff_check, finite_diff_check_coords, Gradients, ParamStore, SeededRng, Tape, Tensor};
use map_planner::planner::{forward_plan, Ablation, ForwardOptions, Model, ModelConfig};
use map_planner::scenario::{generate_scenario, EgoDims, GridConfig, IntervalMode, ScenarioParams, Scene, HORIZON};

pub const FD_EPS: f64 = 1e-6;

/// A model small enough for finite differences over many coordinates.
pub fn small_model_config() -> ModelConfig {
    ModelConfig {
        channels: 6,
        token_stride: 8,
        d_model: 12,
        d_lin: 8,
        d_cmd: 4,
        d_att: 8,
        d_adapter: 8,
        d_decoder: 12,
        map: MapConfig {
            layers: 2,
            d_map: 8,
            n_queries: 4,
            ..Default::default()
        },
    }
}

pub fn scene(seed: u64) -> Scene {
    generate_scenario(seed, &ScenarioParams::default()).unwrap()
}

pub fn sample(seed: u64, cfg: &ModelConfig) -> Sample {
    Sample::prepare(
        format!("s{seed}"),
        scene(seed),
        &GridConfig::default(),
        cfg.channels,
        cfg.token_stride,
        IntervalMode::ActualDt,
    )
    .unwrap()
}

pub fn points_tensor(pts: &[Point]) -> Tensor {
    Tensor::new(pts.len(), 2, pts.iter().flat_map(|p| [p.x, p.y]).collect()).unwrap()
}

pub fn to_points(flat: &[f64]) -> Vec<Point> {
    flat.chunks(2).map(|c| Point::new(c[0], c[1])).collect()
}

/// Gradient of a tape loss in [`ParamStore::flatten`] order.
pub fn flat_grad(store: &ParamStore, tape: &Tape, grads: &Gradients) -> Vec<f64> {
    let bound: std::collections::BTreeMap<&str, _> = tape.bound_params().collect();
    store
        .iter()
        .flat_map(|(name, t)| match bound.get(name) {
            Some(&v) => grads.get(v).into_data(),
            None => vec![0.0; t.len()],
        })
        .collect()
}

fn random_vec(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

pub fn dice_check(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let n = 30;
    let x = random_vec(&mut rng, n, 0.02, 0.98);
    let g: Vec<f64> = (0..n).map(|_| if rng.chance(0.4) { 1.0 } else { rng.uniform(0.0, 0.5) }).collect();
    let eval = |x: &[f64]| {
        let mut t = Tape::new();
        let p = t.leaf(Tensor::new(n, 1, x.to_vec()).unwrap());
        let gv = t.constant(Tensor::new(n, 1, g.clone()).unwrap());
        let l = dice_loss(&mut t, p, gv).unwrap();
        let grad = t.backward(l).unwrap().get(p).into_data();
        (t.value(l).item(), grad)
    };
    let (_, grad) = eval(&x);
    finite_diff_check(|x| eval(x).0, &x, &grad, FD_EPS).unwrap()
}

pub fn focal_check(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let n = 20;
    let x = random_vec(&mut rng, n, -3.0, 3.0);
    let labels: Vec<bool> = (0..n).map(|_| rng.chance(0.3)).collect();
    let eval = |x: &[f64]| {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::new(n, 1, x.to_vec()).unwrap());
        let p = t.sigmoid(z);
        let l = focal_loss(&mut t, p, &labels, 0.25, 2.0).unwrap();
        let grad = t.backward(l).unwrap().get(z).into_data();
        (t.value(l).item(), grad)
    };
    let (_, grad) = eval(&x);
    finite_diff_check(|x| eval(x).0, &x, &grad, FD_EPS).unwrap()
}

pub fn detection_check(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let nq = 5;
    let x = random_vec(&mut rng, nq * 5, -2.0, 2.0);
    let gt: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.uniform(0.1, 0.9),
                rng.uniform(0.1, 0.9),
                rng.uniform(0.03, 0.2),
                rng.uniform(0.03, 0.2),
            ]
        })
        .collect();
    let w = DetectionWeights::default();
    let eval = |x: &[f64]| {
        let mut t = Tape::new();
        let raw = t.leaf(Tensor::new(nq, 5, x.to_vec()).unwrap());
        let b = t.slice_cols(raw, 0, 4).unwrap();
        let boxes = t.sigmoid(b);
        let score_logits = t.slice_cols(raw, 4, 5).unwrap();
        let mask_logits = t.constant(Tensor::zeros(1, 4));
        let pred = LayerPrediction {
            mask_logits,
            boxes,
            score_logits,
        };
        let l = detection_loss(&mut t, &pred, &gt, &w).unwrap();
        let grad = t.backward(l).unwrap().get(raw).into_data();
        (t.value(l).item(), grad)
    };
    let (_, grad) = eval(&x);
    finite_diff_check(|x| eval(x).0, &x, &grad, FD_EPS).unwrap()
}

/// A scene seed whose obstacles are numerous enough to place overlapping
/// waypoints.
fn collision_setup(seed: u64) -> (Scene, Vec<f64>) {
    let s = scene(seed);
    let mut rng = SeededRng::new(seed ^ 0x5eed);
    let mut pts = s.gt_trajectory.clone();
    for (i, p) in pts.iter_mut().enumerate() {
        if let Some(b) = s.obstacles[i].first() {
            // partial overlap: center within a box length but not coincident
            *p = Point::new(
                b.center_x + rng.uniform(1.0, 2.5) * if rng.chance(0.5) { 1.0 } else { -1.0 },
                b.center_y + rng.uniform(-0.8, 0.8),
            );
        }
    }
    (s, points_tensor(&pts).into_data())
}

pub fn collision_check(seed: u64) -> (f64, f64) {
    let (s, x) = collision_setup(seed);
    let ego = EgoDims::default();
    let eval = |x: &[f64]| {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::new(HORIZON, 2, x.to_vec()).unwrap());
        let l = collision_loss(&mut t, w, &s, &ego);
        let grad = t.backward(l).unwrap().get(w).into_data();
        (t.value(l).item(), grad)
    };
    let (value, grad) = eval(&x);
    (finite_diff_check(|x| eval(x).0, &x, &grad, FD_EPS).unwrap(), value)
}

pub fn ade_check(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let s = scene(seed);
    let x: Vec<f64> = points_tensor(&s.gt_trajectory)
        .into_data()
        .into_iter()
        .map(|v| v + rng.uniform(-2.0, 2.0))
        .collect();
    let mut mask: Vec<bool> = (0..HORIZON).map(|_| rng.chance(0.7)).collect();
    mask[0] = true;
    let eval = |x: &[f64]| {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::new(HORIZON, 2, x.to_vec()).unwrap());
        let l = ade_loss(&mut t, w, &s.gt_trajectory, &mask).unwrap();
        let grad = t.backward(l).unwrap().get(w).into_data();
        (t.value(l).item(), grad)
    };
    let (_, grad) = eval(&x);
    finite_diff_check(|x| eval(x).0, &x, &grad, FD_EPS).unwrap()
}

pub fn adaptive_soft_check(seed: u64) -> f64 {
    let cfg = small_model_config();
    let smp = sample(seed, &cfg);
    let mut rng = SeededRng::new(seed);
    // spread the waypoints so that road edges and obstacles are in reach
    let x: Vec<f64> = points_tensor(&smp.scene.gt_trajectory)
        .into_data()
        .into_iter()
        .map(|v| v + rng.uniform(-4.0, 4.0))
        .collect();
    let w = AdaptiveWeights::default();
    let eval = |x: &[f64]| {
        let mut t = Tape::new();
        let wp = t.leaf(Tensor::new(HORIZON, 2, x.to_vec()).unwrap());
        let l = adaptive_loss_soft(&mut t, wp, &smp.scene, &smp.regions, &w, 0.5).unwrap();
        let grad = t.backward(l).unwrap().get(wp).into_data();
        (t.value(l).item(), grad)
    };
    let (_, grad) = eval(&x);
    finite_diff_check(|x| eval(x).0, &x, &grad, FD_EPS).unwrap()
}

/// Full composed planning loss (FULL mode, random init) against finite
/// differences on one random coordinate of every parameter tensor.
pub fn planning_check(seed: u64) -> f64 {
    let cfg = small_model_config();
    let model = Model::init(cfg, seed).unwrap();
    let smp = sample(seed, &cfg);
    let loss_cfg = LossConfig::default();
    let total = |store: &ParamStore| {
        let m = Model {
            config: cfg,
            params: store.clone(),
        };
        let mut t = Tape::new();
        let out = forward_plan(&mut t, &m, &smp.input, ForwardOptions::default()).unwrap();
        let ctx = LossContext {
            scene: &smp.scene,
            regions: &smp.regions,
            map_targets: Some(&smp.targets),
            map_config: &cfg.map,
            config: &loss_cfg,
        };
        let (l, _) = planning_loss(&mut t, &out, &ctx).unwrap();
        (t, l)
    };
    let (t, l) = total(&model.params);
    let grads = t.backward(l).unwrap();
    let g = flat_grad(&model.params, &t, &grads);
    let x = model.params.flatten();
    let mut rng = SeededRng::new(seed).split("coords");
    let mut coords = Vec::new();
    let mut offset = 0;
    for (_, tensor) in model.params.iter() {
        coords.push(offset + rng.below(tensor.len()));
        offset += tensor.len();
    }
    let mut store = model.params.clone();
    finite_diff_check_coords(
        |x| {
            store.unflatten(x);
            let (t, l) = total(&store);
            t.value(l).item()
        },
        &x,
        &g,
        FD_EPS,
        &coords,
    )
    .unwrap()
}

pub fn ablation_forward(model: &Model, sample: &Sample, ablation: Ablation, alpha: Option<f64>) -> (Tape, map_planner::planner::PlanOutput) {
    let mut t = Tape::new();
    let out = forward_plan(
        &mut t,
        model,
        &sample.input,
        ForwardOptions {
            ablation,
            alpha_override: alpha,
        },
    )
    .unwrap();
    (t, out)
}

/// Overlap area of two boxes estimated from `n` uniform samples over the
/// intersection of their bounding rectangles.
pub fn monte_carlo_overlap(
    a: &map_planner::geometry::OrientedBox,
    b: &map_planner::geometry::OrientedBox,
    n: usize,
    rng: &mut SeededRng,
) -> f64 {
    let (pa, pb) = (a.polygon(), b.polygon());
    let ((alo, ahi), (blo, bhi)) = (pa.bounds(), pb.bounds());
    let lo = Point::new(alo.x.max(blo.x), alo.y.max(blo.y));
    let hi = Point::new(ahi.x.min(bhi.x), ahi.y.min(bhi.y));
    if lo.x >= hi.x || lo.y >= hi.y {
        return 0.0;
    }
    // jittered grid: one uniform sample per cell of a k×k stratification
    let k = (n as f64).sqrt().ceil().max(1.0) as usize;
    let (dx, dy) = ((hi.x - lo.x) / k as f64, (hi.y - lo.y) / k as f64);
    let mut hits = 0usize;
    for i in 0..k {
        for j in 0..k {
            let p = Point::new(
                lo.x + (i as f64 + rng.uniform(0.0, 1.0)) * dx,
                lo.y + (j as f64 + rng.uniform(0.0, 1.0)) * dy,
            );
            if pa.contains(p) && pb.contains(p) {
                hits += 1;
            }
        }
    }
    hits as f64 / (k * k) as f64 * (hi.x - lo.x) * (hi.y - lo.y)
}

pub fn random_box(rng: &mut SeededRng, spread: f64) -> map_planner::geometry::OrientedBox {
    map_planner::geometry::OrientedBox::new(
        rng.uniform(-spread, spread),
        rng.uniform(-spread, spread),
        rng.uniform(1.0, 5.0),
        rng.uniform(0.5, 3.0),
        rng.uniform(-std::f64::consts::PI, std::f64::consts::PI),
    )
    .unwrap()
}

/// Worst oracle disagreement over `pairs` random box pairs: relative error
/// for areas ≥ 0.1 m², absolute error (m²) below. Returns
/// `(worst_relative, worst_absolute_small)`.
pub fn overlap_oracle_errors(seed: u64, pairs: usize, samples: usize) -> (f64, f64) {
    let mut rng = SeededRng::new(seed);
    let mut mc_rng = rng.split("mc");
    let (mut rel, mut abs) = (0.0f64, 0.0f64);
    for _ in 0..pairs {
        let (a, b) = (random_box(&mut rng, 2.0), random_box(&mut rng, 2.0));
        let exact = map_planner::geometry::convex_intersection_area(&a.polygon(), &b.polygon());
        let mc = monte_carlo_overlap(&a, &b, samples, &mut mc_rng);
        if exact < 0.1 {
            abs = abs.max((exact - mc).abs());
        } else {
            rel = rel.max((exact - mc).abs() / exact);
        }
    }
    (rel, abs)
}

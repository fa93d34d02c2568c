//! Acceptance suite: one PASS/FAIL line per criterion. Criterion 7 is
//! reported but never fails the run.

mod common;

use std::io::Write as _;
use std::time::{Duration, Instant};

use common::*;
use map_planner::cli::dataset::{prepare_all, scene_seed, Sample};
use map_planner::cli::train::{train, EpochLog, TrainState};
use map_planner::cli::{checkpoint, config::RunConfig};
use map_planner::eval::{collision_rate, evaluate, leaderboard_score, CollisionMode, HorizonSpec};
use map_planner::geometry::{giou, AxisBox, OrientedBox, Point};
use map_planner::losses::{ade_value, collision_value};
use map_planner::mapping::dice_loss;
use map_planner::numerics::{SeededRng, Tape, Tensor};
use map_planner::planner::{fuse_values, Ablation, Model};
use map_planner::scenario::{
    derive_ego_status, generate_scenario, Command, EgoDims, GridConfig, IntervalMode, PoseRecord, ScenarioParams,
    Scene, SceneRegions, HORIZON,
};

const SCORE_TOL: f64 = 1e-3;
const ORACLE_PAIRS: usize = 100;
const ORACLE_SAMPLES: usize = 1_000_000;
const ORACLE_REL_TOL: f64 = 1e-2;
const ORACLE_ABS_TOL: f64 = 1e-3;
const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 10;
const ANALYTIC_TOL: f64 = 1e-9;
const FUSION_DRAWS: usize = 10_000;
const TRAIN_SCENES: usize = 200;
const VAL_SCENES: usize = 40;
const TRAIN_EPOCHS: usize = 30;
const DATA_SEED_TRAIN: u64 = 1000;
const DATA_SEED_VAL: u64 = 2000;
const EGO_TOL: f64 = 1e-12;

struct Outcome {
    lines: Vec<String>,
    failed: Vec<usize>,
}

impl Outcome {
    fn record(&mut self, id: usize, pass: bool, soft: bool, detail: String, took: Duration) {
        let status = match (pass, soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "MISS (soft, not gated)",
        };
        let line = format!("criterion {id}: {status} ({:.1} s) {detail}", took.as_secs_f64());
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        if !pass && !soft {
            self.failed.push(id);
        }
        self.lines.push(line);
    }
}

fn c1_score() -> (bool, String) {
    let rows = [
        ((3.07, 0.71, 0.89), 0.591),
        ((2.56, 0.96, 0.39), 0.854),
        ((2.67, 0.67, 0.46), 0.841),
    ];
    let got: Vec<f64> = rows.iter().map(|((a, b, c), _)| leaderboard_score(*a, *b, *c)).collect();
    let pass = rows.iter().zip(&got).all(|((_, want), g)| (g - want).abs() <= SCORE_TOL);
    (pass, format!("scores {:.4} {:.4} {:.4}", got[0], got[1], got[2]))
}

fn c2_oracle() -> (bool, String) {
    let (rel, abs) = overlap_oracle_errors(2024, ORACLE_PAIRS, ORACLE_SAMPLES);
    (
        rel < ORACLE_REL_TOL && abs < ORACLE_ABS_TOL,
        format!("{ORACLE_PAIRS} pairs, worst relative {rel:.2e}, worst absolute (area < 0.1) {abs:.2e}"),
    )
}

fn c3_gradients() -> (bool, String) {
    let suites: [(&str, &dyn Fn(u64) -> f64); 7] = [
        ("dice", &dice_check),
        ("focal", &focal_check),
        ("detection", &detection_check),
        ("collision", &|s| collision_check(s).0),
        ("ade", &ade_check),
        ("adaptive_soft", &adaptive_soft_check),
        ("planning_total", &planning_check),
    ];
    let mut worst = Vec::new();
    let mut pass = true;
    for (name, f) in suites {
        let w = (0..GRAD_SEEDS).map(f).fold(0.0f64, f64::max);
        pass &= w < GRAD_TOL;
        worst.push(format!("{name} {w:.1e}"));
    }
    (pass, format!("max relative error: {}", worst.join(", ")))
}

fn c4_analytic() -> (bool, String) {
    let mut t = Tape::new();
    let g: Vec<f64> = (0..100).map(|i| if i < 50 { 1.0 } else { 0.0 }).collect();
    let p: Vec<f64> = (0..100).map(|i| if (25..75).contains(&i) { 1.0 } else { 0.0 }).collect();
    let pv = t.leaf(Tensor::new(100, 1, p).unwrap());
    let gv = t.constant(Tensor::new(100, 1, g).unwrap());
    let d = dice_loss(&mut t, pv, gv).unwrap();
    let dice = t.value(d).item();

    let a = AxisBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let b = AxisBox::new(2.0, 2.0, 3.0, 3.0).unwrap();
    let gi = giou(&a, &b).unwrap();

    let gt: Vec<Point> = (0..HORIZON).map(|i| Point::new(i as f64, 0.0)).collect();
    let mut pred = gt.clone();
    pred[2] = pred[2] + Point::new(3.0, 4.0);
    let mut mask = vec![false; HORIZON];
    mask[2] = true;
    mask[6] = true;
    let ade = ade_value(&pred, &gt, &mask);

    let ego = EgoDims::default();
    let mut s = scene(0);
    for o in s.obstacles.iter_mut() {
        o.clear();
    }
    let c = Point::new(20.0, 5.0);
    s.gt_headings[4] = 0.3;
    s.obstacles[4].push(ego.footprint(c, 0.3));
    s.validity[4] = true;
    let mut cp = s.gt_trajectory.clone();
    cp[4] = c;
    let col = collision_value(&cp, &s, &ego);

    let pass = (dice - 0.5).abs() < 1e-8
        && (gi + 7.0 / 9.0).abs() < ANALYTIC_TOL
        && (ade - 2.5).abs() < ANALYTIC_TOL
        && (col - ego.length * ego.width).abs() < ANALYTIC_TOL;
    (pass, format!("dice {dice:.9}, giou {gi:.12}, ade {ade}, collision {col:.12} m²"))
}

fn c5_fusion() -> (bool, String) {
    let cfg = small_model_config();
    let mut bitwise = true;
    for seed in 0..5 {
        let model = Model::init(cfg, seed).unwrap();
        let smp = sample(seed + 50, &cfg);
        for (alpha, single) in [(0.0, Ablation::NoEp), (1.0, Ablation::NoPom)] {
            let (ta, fa) = ablation_forward(&model, &smp, Ablation::Full, Some(alpha));
            let (tb, fb) = ablation_forward(&model, &smp, single, None);
            bitwise &= ta.value(fa.plan.waypoints).data() == tb.value(fb.plan.waypoints).data();
            bitwise &= ta.value(fa.fused).data() == tb.value(fb.fused).data();
        }
    }
    let mut rng = SeededRng::new(77);
    let mut inside = 0;
    for _ in 0..FUSION_DRAWS {
        let d = 1 + rng.below(16);
        let qp: Vec<f64> = (0..d).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let qm: Vec<f64> = (0..d).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let f = fuse_values(&qp, &qm, rng.uniform(0.0, 1.0));
        if f.iter().zip(&qp).zip(&qm).all(|((f, p), m)| *f >= p.min(*m) && *f <= p.max(*m)) {
            inside += 1;
        }
    }
    (
        bitwise && inside == FUSION_DRAWS,
        format!("forced-α bitwise match {bitwise}, {inside}/{FUSION_DRAWS} fused draws inside the branch interval"),
    )
}

fn dataset(base: u64, n: usize, cfg: &RunConfig) -> Vec<Sample> {
    let params = ScenarioParams::default();
    let scenes = (0..n)
        .map(|i| (format!("scene_{i:05}"), generate_scenario(scene_seed(base, i), &params).unwrap()))
        .collect();
    prepare_all(scenes, &cfg.grid, cfg.model.channels, cfg.model.token_stride, cfg.interval_mode).unwrap()
}

struct Run {
    logs: Vec<EpochLog>,
    bytes: Vec<u8>,
    took: Duration,
}

fn train_run(cfg: &RunConfig, train_set: &[Sample], val: &[Sample]) -> Run {
    let start = Instant::now();
    let mut state = TrainState::fresh(cfg.clone()).unwrap();
    let logs = train(&mut state, train_set, val, |_| {}).unwrap();
    Run {
        logs,
        bytes: checkpoint::encode(&state),
        took: start.elapsed(),
    }
}

fn final_val(r: &Run) -> f64 {
    r.logs.last().and_then(|l| l.val_ade).unwrap()
}

fn best_val(r: &Run) -> f64 {
    r.logs.iter().filter_map(|l| l.val_ade).fold(f64::INFINITY, f64::min)
}

fn c6_training(cfg: &RunConfig, train_set: &[Sample], val: &[Sample]) -> (bool, String, Run) {
    let a = train_run(cfg, train_set, val);
    let b = train_run(cfg, train_set, val);
    let first = a.logs[0].val_ade.unwrap();
    let halved_at = a.logs.iter().find(|l| l.val_ade.unwrap() <= 0.5 * first).map(|l| l.epoch);
    let deterministic = a.bytes == b.bytes && a.logs == b.logs;
    let fast = a.took < Duration::from_secs(600);
    let detail = format!(
        "val ADE epoch 1 {first:.3} m, epoch {} {:.3} m, halved at epoch {}; identical reruns {deterministic}; {:.0} s per run",
        a.logs.len(),
        final_val(&a),
        halved_at.map_or_else(|| "never".into(), |e| e.to_string()),
        a.took.as_secs_f64(),
    );
    (halved_at.is_some() && deterministic && fast, detail, a)
}

fn c7_ablation(cfg: &RunConfig, full: &Run, train_set: &[Sample], val: &[Sample]) -> (bool, String) {
    let run = |ablation| {
        let c = RunConfig {
            ablation,
            ..cfg.clone()
        };
        let r = train_run(&c, train_set, val);
        (final_val(&r), best_val(&r))
    };
    let (f, no_pom, no_ep) = ((final_val(full), best_val(full)), run(Ablation::NoPom), run(Ablation::NoEp));
    (
        f.0 <= no_pom.0.min(no_ep.0),
        format!(
            "final (best) val ADE FULL {:.3} ({:.3}) m, NO_POM {:.3} ({:.3}) m, NO_EP {:.3} ({:.3}) m",
            f.0, f.1, no_pom.0, no_pom.1, no_ep.0, no_ep.1
        ),
    )
}

fn regions_of(scenes: &[Scene]) -> Vec<SceneRegions> {
    scenes
        .iter()
        .map(|s| SceneRegions::new(s, &GridConfig::default().region))
        .collect()
}

fn c8_metrics(val: &[Sample]) -> (bool, String) {
    let h = HorizonSpec::default();
    let ego = EgoDims::default();
    let preds: Vec<Vec<Point>> = val.iter().map(|s| s.scene.gt_trajectory.clone()).collect();
    let scenes: Vec<&Scene> = val.iter().map(|s| &s.scene).collect();
    let regions: Vec<&SceneRegions> = val.iter().map(|s| &s.regions).collect();
    let r = evaluate(&preds, &scenes, &regions, &h, CollisionMode::Point, &ego).unwrap();
    let score = r.score.unwrap();
    let gt_ok = r.l2.avg == Some(0.0)
        && r.collision_rate.avg == Some(0.0)
        && r.offroad_rate.avg == Some(0.0)
        && (score - 2.333).abs() <= SCORE_TOL;

    // ground truth and prediction share an obstacle at step 5
    let step = 4;
    let mut built = Vec::new();
    let mut hit_preds = Vec::new();
    for smp in val.iter().take(10) {
        let mut s = smp.scene.clone();
        let g = s.gt_trajectory[step];
        s.obstacles[step].push(OrientedBox::new(g.x, g.y, 6.0, 3.0, 0.0).unwrap());
        s.validity[step] = true;
        let mut p = s.gt_trajectory.clone();
        p[step] = g + Point::new(0.6, 0.3);
        hit_preds.push(p);
        built.push(s);
    }
    let regions = regions_of(&built);
    let sc: Vec<&Scene> = built.iter().collect();
    let rg: Vec<&SceneRegions> = regions.iter().collect();
    let one = HorizonSpec::new(vec![step + 1]).unwrap();
    let excluded = collision_rate(&hit_preds, &sc, &rg, &one, CollisionMode::Point, &ego).unwrap();
    let preds_inside = built
        .iter()
        .zip(&regions)
        .zip(&hit_preds)
        .all(|((_, r), p)| r.in_obstacle(step, p[step]));
    let pass = gt_ok && preds_inside && excluded == vec![Some(0.0)];
    (
        pass,
        format!(
            "GT pass-through: L2 {:?} m, col {:?} %, off {:?} %, score {score:.4}; GT-in-collision batch col {:?} %",
            r.l2.avg, r.collision_rate.avg, r.offroad_rate.avg, excluded[0]
        ),
    )
}

fn c9_interval() -> (bool, String) {
    let log = |ts: [f64; 3]| -> Vec<PoseRecord> {
        ts.iter()
            .zip([0.0, 1.0, 3.0])
            .map(|(&t, x)| PoseRecord {
                t,
                x,
                y: 0.0,
                heading: 0.0,
            })
            .collect()
    };
    let cmds = [Command::Straight; 3];
    let exact = log([0.0, 0.5, 1.0]);
    let jit = log([0.0, 0.4, 0.8]);
    let st = |l: &[PoseRecord], m| derive_ego_status(l, &cmds, 2, m).unwrap();
    let (ea, ef) = (st(&exact, IntervalMode::ActualDt), st(&exact, IntervalMode::FixedDt));
    let (ja, jf) = (st(&jit, IntervalMode::ActualDt), st(&jit, IntervalMode::FixedDt));
    let near = |a: f64, b: f64| (a - b).abs() < EGO_TOL;
    let hand = near(ea.vx, 4.0) && near(ea.ax, 4.0) && near(ja.vx, 5.0) && near(ja.ax, 6.25);
    let fixed_matches = jf == ea;
    let deltas = (ja.vx - jf.vx, ja.ax - jf.ax);

    let params = ScenarioParams::default();
    let mut generated_equal = true;
    for seed in 0..200 {
        let s = generate_scenario(seed, &params).unwrap();
        generated_equal &= s.ego_status(IntervalMode::ActualDt).unwrap() == s.ego_status(IntervalMode::FixedDt).unwrap();
    }
    let pass = ea == ef && hand && fixed_matches && near(deltas.0, 1.0) && near(deltas.1, 2.25) && generated_equal;
    (
        pass,
        format!(
            "exact log equal {}, 200 generated 0.5 s logs equal {generated_equal}; jittered ACTUAL vx {} ax {} vs FIXED vx {} ax {} (Δvx {:.2}, Δax {:.2})",
            ea == ef,
            ja.vx,
            ja.ax,
            jf.vx,
            jf.ax,
            deltas.0,
            deltas.1
        ),
    )
}

#[test]
fn acceptance() {
    let mut out = Outcome {
        lines: Vec::new(),
        failed: Vec::new(),
    };
    let timed = |f: &dyn Fn() -> (bool, String)| {
        let t = Instant::now();
        let (p, d) = f();
        (p, d, t.elapsed())
    };

    let (p, d, t) = timed(&c1_score);
    out.record(1, p && t < Duration::from_secs(1), false, d, t);
    let (p, d, t) = timed(&c2_oracle);
    out.record(2, p && t < Duration::from_secs(60), false, d, t);
    let (p, d, t) = timed(&c3_gradients);
    out.record(3, p && t < Duration::from_secs(120), false, d, t);
    let (p, d, t) = timed(&c4_analytic);
    out.record(4, p, false, d, t);
    let (p, d, t) = timed(&c5_fusion);
    out.record(5, p, false, d, t);

    let cfg = RunConfig {
        epochs: TRAIN_EPOCHS,
        ..RunConfig::default()
    };
    let train_set = dataset(DATA_SEED_TRAIN, TRAIN_SCENES, &cfg);
    let val = dataset(DATA_SEED_VAL, VAL_SCENES, &cfg);
    let start = Instant::now();
    let (p, d, full) = c6_training(&cfg, &train_set, &val);
    out.record(6, p, false, d, start.elapsed());
    let start = Instant::now();
    let (p, d) = c7_ablation(&cfg, &full, &train_set, &val);
    out.record(7, p, true, d, start.elapsed());

    let (p, d, t) = timed(&|| c8_metrics(&val));
    out.record(8, p, false, d, t);
    let (p, d, t) = timed(&c9_interval);
    out.record(9, p, false, d, t);

    assert!(out.failed.is_empty(), "failed criteria {:?}\n{}", out.failed, out.lines.join("\n"));
}

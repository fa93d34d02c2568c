mod common;

use std::path::Path;

use common::scene;
use map_planner::eval::{
    collision_rate, emit_report, evaluate, l2_metrics, leaderboard_score, offroad_rate, parse_report, read_report,
    report_to_csv, CollisionMode, HorizonSpec, MetricsReport, METRICS_FILE, METRICS_HEADER,
};
use map_planner::geometry::{OrientedBox, Point};
use map_planner::scenario::{EgoDims, GridConfig, Scene, SceneRegions, HORIZON};
use proptest::prelude::*;

fn batch(n: u64) -> (Vec<Scene>, Vec<SceneRegions>) {
    let scenes: Vec<Scene> = (0..n).map(scene).collect();
    let regions = scenes
        .iter()
        .map(|s| SceneRegions::new(s, &GridConfig::default().region))
        .collect();
    (scenes, regions)
}

fn refs<T>(v: &[T]) -> Vec<&T> {
    v.iter().collect()
}

#[test]
fn ground_truth_scores_perfectly() {
    let (scenes, regions) = batch(30);
    let preds: Vec<Vec<Point>> = scenes.iter().map(|s| s.gt_trajectory.clone()).collect();
    let h = HorizonSpec::default();
    for mode in [CollisionMode::Point, CollisionMode::Footprint] {
        let r = evaluate(&preds, &refs(&scenes), &refs(&regions), &h, mode, &EgoDims::default()).unwrap();
        assert_eq!(r.l2.avg, Some(0.0));
        assert_eq!(r.collision_rate.avg, Some(0.0));
        assert_eq!(r.offroad_rate.avg, Some(0.0));
        assert!((r.score.unwrap() - 7.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn collision_rate_constructed_batches() {
    let (mut scenes, _) = batch(6);
    let i = 4; // step 5
    let mut preds = Vec::new();
    for s in scenes.iter_mut() {
        let p = s.gt_trajectory[i] + Point::new(0.0, 9.0);
        s.obstacles[i].push(OrientedBox::new(p.x, p.y, 4.0, 2.0, 0.0).unwrap());
        s.validity[i] = true;
        let mut pred = s.gt_trajectory.clone();
        pred[i] = p;
        preds.push(pred);
    }
    let regions: Vec<SceneRegions> = scenes
        .iter()
        .map(|s| SceneRegions::new(s, &GridConfig::default().region))
        .collect();
    let h = HorizonSpec::new(vec![5]).unwrap();
    let ego = EgoDims::default();
    let r = collision_rate(&preds, &refs(&scenes), &refs(&regions), &h, CollisionMode::Point, &ego).unwrap();
    assert_eq!(r, vec![Some(100.0)]);

    // ground truth inside the same obstacles: excluded from the numerator
    let gt_in: Vec<Scene> = scenes
        .iter()
        .zip(&preds)
        .map(|(s, p)| {
            let mut s = s.clone();
            s.gt_trajectory[i] = p[i];
            s
        })
        .collect();
    let regions: Vec<SceneRegions> = gt_in
        .iter()
        .map(|s| SceneRegions::new(s, &GridConfig::default().region))
        .collect();
    let r = collision_rate(&preds, &refs(&gt_in), &refs(&regions), &h, CollisionMode::Point, &ego).unwrap();
    assert_eq!(r, vec![Some(0.0)]);
}

#[test]
fn offroad_rate_cases() {
    let (scenes, regions) = batch(10);
    let h = HorizonSpec::default();
    let far: Vec<Vec<Point>> = scenes
        .iter()
        .map(|s| s.gt_trajectory.iter().map(|p| *p + Point::new(0.0, 1000.0)).collect())
        .collect();
    let valid = |k: usize| scenes.iter().any(|s| s.validity[k]);
    let r = offroad_rate(&far, &refs(&scenes), &refs(&regions), &h).unwrap();
    for (v, &s) in r.iter().zip(h.steps()) {
        if valid(s - 1) {
            assert_eq!(*v, Some(100.0));
        }
    }
    let full: Vec<usize> = (0..scenes.len()).filter(|&k| scenes[k].validity[8]).collect();
    let keep = &full[..full.len() / 2 * 2];
    let half: Vec<Vec<Point>> = keep
        .iter()
        .enumerate()
        .map(|(j, &k)| if j % 2 == 0 { far[k].clone() } else { scenes[k].gt_trajectory.clone() })
        .collect();
    let sc: Vec<&Scene> = keep.iter().map(|&k| &scenes[k]).collect();
    let rg: Vec<&SceneRegions> = keep.iter().map(|&k| &regions[k]).collect();
    let r = offroad_rate(&half, &sc, &rg, &HorizonSpec::new(vec![9]).unwrap()).unwrap();
    assert_eq!(r, vec![Some(50.0)]);
}

#[test]
fn absent_horizons_are_not_zero() {
    let mut s = scene(1);
    s.validity = vec![false; HORIZON];
    let r = l2_metrics(&[s.gt_trajectory.clone()], &[s.gt_trajectory.clone()], &[s.validity.clone()], &HorizonSpec::default()).unwrap();
    assert_eq!(r, vec![None, None, None]);
    let rep = MetricsReport::new(HorizonSpec::default(), r.clone(), r.clone(), r, 1);
    assert_eq!(rep.score, None);
    assert!(report_to_csv(&rep).contains("l2,2.5s,NA"));
}

#[test]
fn report_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rep = MetricsReport::new(
        HorizonSpec::default(),
        vec![Some(1.25), Some(2.0 / 3.0), Some(3.1)],
        vec![Some(0.0), Some(2.5), Some(5.0)],
        vec![Some(10.0), Some(0.0), None],
        40,
    );
    emit_report(&rep, dir.path()).unwrap();
    let path = dir.path().join(METRICS_FILE);
    assert_eq!(read_report(&path).unwrap(), rep);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(METRICS_HEADER));
    assert!(read_report(&dir.path().join("nope.csv")).is_err());
    assert!(parse_report("metric,horizon,value\n", Path::new("x")).is_err());
}

#[test]
fn score_is_decreasing_in_each_argument() {
    let base = leaderboard_score(3.0, 1.0, 1.0);
    assert!(leaderboard_score(3.1, 1.0, 1.0) < base);
    assert!(leaderboard_score(3.0, 1.1, 1.0) < base);
    assert!(leaderboard_score(3.0, 1.0, 1.1) < base);
    assert!(leaderboard_score(10.0, 50.0, 50.0) < 0.0, "no clamping");
}

fn opt_value() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![Just(None), (0.0f64..100.0).prop_map(Some)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_random(l2 in prop::collection::vec(opt_value(), 3), col in prop::collection::vec(opt_value(), 3),
                             off in prop::collection::vec(opt_value(), 3), n in 0usize..1000) {
        let rep = MetricsReport::new(HorizonSpec::default(), l2, col, off, n);
        let csv = report_to_csv(&rep);
        let back = parse_report(&csv, Path::new("r")).unwrap();
        prop_assert_eq!(&back, &rep);
        if let (Some(a), Some(b), Some(c)) = (rep.l2.avg, rep.collision_rate.avg, rep.offroad_rate.avg) {
            prop_assert_eq!(rep.score, Some(leaderboard_score(a, b, c)));
        }
    }

    #[test]
    fn rates_ignore_scene_order(seed in 0u64..1000, shift in -4f64..4.0) {
        let (scenes, regions) = batch(6);
        let preds: Vec<Vec<Point>> = scenes.iter().enumerate()
            .map(|(k, s)| s.gt_trajectory.iter().map(|p| *p + Point::new(0.0, shift * (k as f64 - 2.5))).collect())
            .collect();
        let mut order: Vec<usize> = (0..scenes.len()).collect();
        map_planner::numerics::SeededRng::new(seed).shuffle(&mut order);
        let h = HorizonSpec::default();
        let ego = EgoDims::default();
        let a = evaluate(&preds, &refs(&scenes), &refs(&regions), &h, CollisionMode::Point, &ego).unwrap();
        let p2: Vec<Vec<Point>> = order.iter().map(|&k| preds[k].clone()).collect();
        let s2: Vec<&Scene> = order.iter().map(|&k| &scenes[k]).collect();
        let r2: Vec<&SceneRegions> = order.iter().map(|&k| &regions[k]).collect();
        let b = evaluate(&p2, &s2, &r2, &h, CollisionMode::Point, &ego).unwrap();
        prop_assert_eq!(a.collision_rate, b.collision_rate);
        prop_assert_eq!(a.offroad_rate, b.offroad_rate);
    }
}

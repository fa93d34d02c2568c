//! Horizon metrics for ground truth passed through as the prediction and
//! for a briefly trained planner, on the same validation scenes.

use map_planner::cli::config::RunConfig;
use map_planner::cli::dataset::{prepare_all, scene_seed, Sample};
use map_planner::cli::evaluate::{evaluate_samples, predict_all, Predictor};
use map_planner::cli::train::{train, TrainState};
use map_planner::eval::{report_summary, CollisionMode, HorizonSpec};
use map_planner::scenario::{generate_scenario, EgoDims, ScenarioParams};

fn scenes(base: u64, n: usize, cfg: &RunConfig) -> Vec<Sample> {
    let params = ScenarioParams::default();
    let raw = (0..n)
        .map(|i| (format!("scene_{i:05}"), generate_scenario(scene_seed(base, i), &params).unwrap()))
        .collect();
    prepare_all(raw, &cfg.grid, cfg.model.channels, cfg.model.token_stride, cfg.interval_mode).unwrap()
}

fn main() {
    let cfg = RunConfig {
        epochs: 6,
        ..RunConfig::default()
    };
    let (train_set, val) = (scenes(1, 40, &cfg), scenes(2, 20, &cfg));
    let mut state = TrainState::fresh(cfg.clone()).unwrap();
    train(&mut state, &train_set, &val, |_| {}).unwrap();

    let h = HorizonSpec::default();
    let ego = EgoDims::default();
    for (name, predictor) in [
        ("ground truth", Predictor::GroundTruth),
        (
            "trained planner",
            Predictor::Model {
                model: &state.model,
                ablation: cfg.ablation,
            },
        ),
    ] {
        let preds = predict_all(predictor, &val, 1).unwrap();
        let report = evaluate_samples(&preds, &val, &h, CollisionMode::Point, &ego).unwrap();
        println!("== {name}\n{}", report_summary(&report));
    }
}

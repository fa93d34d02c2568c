//! Trains the full planner on freshly generated scenes and reports the
//! validation ADE after every epoch.
//!
//! cargo run --release --example train_small -- 60 10

use map_planner::cli::config::RunConfig;
use map_planner::cli::dataset::{prepare_all, scene_seed, Sample};
use map_planner::cli::train::{train, TrainState};
use map_planner::scenario::{generate_scenario, ScenarioParams};

fn scenes(base: u64, n: usize, cfg: &RunConfig) -> Vec<Sample> {
    let params = ScenarioParams::default();
    let raw = (0..n)
        .map(|i| (format!("scene_{i:05}"), generate_scenario(scene_seed(base, i), &params).unwrap()))
        .collect();
    prepare_all(raw, &cfg.grid, cfg.model.channels, cfg.model.token_stride, cfg.interval_mode).unwrap()
}

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(60, |a| a.parse().expect("scene count"));
    let epochs: usize = args.next().map_or(10, |a| a.parse().expect("epoch count"));
    let cfg = RunConfig {
        epochs,
        ..RunConfig::default()
    };
    let (train_set, val) = (scenes(1, n, &cfg), scenes(2, (n / 5).max(1), &cfg));

    let mut state = TrainState::fresh(cfg).unwrap();
    println!("epoch  total    ade      val_ade");
    train(&mut state, &train_set, &val, |l| {
        println!("{:>5}  {:<7.3}  {:<7.3}  {:.3}", l.epoch, l.total, l.ade, l.val_ade.unwrap_or(f64::NAN));
    })
    .unwrap();
}

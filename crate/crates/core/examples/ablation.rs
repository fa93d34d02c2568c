//! Trains FULL, NO_POM and NO_EP with identical data and seeds and
//! compares validation ADE.
//!
//! cargo run --release --example ablation -- 60 8

use map_planner::cli::config::RunConfig;
use map_planner::cli::dataset::{prepare_all, scene_seed, Sample};
use map_planner::cli::train::{train, TrainState};
use map_planner::planner::Ablation;
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
    let epochs: usize = args.next().map_or(8, |a| a.parse().expect("epoch count"));
    let base = RunConfig {
        epochs,
        ..RunConfig::default()
    };
    let (train_set, val) = (scenes(1, n, &base), scenes(2, (n / 5).max(1), &base));
    for ablation in [Ablation::Full, Ablation::NoPom, Ablation::NoEp] {
        let cfg = RunConfig { ablation, ..base.clone() };
        let t = std::time::Instant::now();
        let mut state = TrainState::fresh(cfg).unwrap();
        let logs = train(&mut state, &train_set, &val, |_| {}).unwrap();
        let vals: Vec<f64> = logs.iter().filter_map(|l| l.val_ade).collect();
        let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:<7} final val ADE {:.3} m, best {best:.3} m ({:.1} s)",
            ablation.label(),
            vals.last().unwrap(),
            t.elapsed().as_secs_f64()
        );
    }
}

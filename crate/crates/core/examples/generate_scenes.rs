//! Generates a small dataset directory and summarizes what is in it.
//!
//! cargo run --release --example generate_scenes -- /tmp/scenes 20

use std::path::PathBuf;

use map_planner::cli::dataset::{generate_dataset, load_scenes};
use map_planner::scenario::{rasterize_bev, GridConfig, IntervalMode, ScenarioParams, SemanticClass};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("map-scenes"));
    let count: usize = args.next().map_or(10, |n| n.parse().expect("scene count"));

    let manifest = generate_dataset(&out, 42, count, &ScenarioParams::default()).unwrap();
    println!("wrote {} scenes to {}", manifest.scenes.len(), out.display());

    let grid = GridConfig::default();
    for (id, scene) in load_scenes(&out).unwrap().iter().take(5) {
        let bev = rasterize_bev(scene, &grid.bev, 6).unwrap();
        let frac = |c| {
            let m = bev.mask(c).bits();
            m.iter().filter(|&&b| b).count() as f64 / m.len() as f64
        };
        let ego = scene.ego_status(IntervalMode::ActualDt).unwrap();
        println!(
            "{id}: {:?}, speed {:.1} m/s, {} obstacles, {} valid steps, drivable {:.0}%, lane {:.0}%",
            scene.command(),
            ego.vx.hypot(ego.vy),
            scene.obstacles[0].len(),
            scene.valid_steps(),
            100.0 * frac(SemanticClass::Drivable),
            100.0 * frac(SemanticClass::Lane),
        );
    }
}

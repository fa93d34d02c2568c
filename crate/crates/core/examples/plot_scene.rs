//! Writes an SVG of a generated scene with its ground-truth plan and a
//! constant-velocity extrapolation drawn as the prediction.
//!
//! cargo run --example plot_scene -- /tmp/scene.svg

use map_planner::cli::plot::{render_svg, Canvas};
use map_planner::geometry::Point;
use map_planner::scenario::{generate_scenario, IntervalMode, ScenarioParams, FRAME_DT};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "scene.svg".into());
    let scene = generate_scenario(9, &ScenarioParams::default()).unwrap();
    let ego = scene.ego_status(IntervalMode::ActualDt).unwrap();
    // ego frame: the current heading is the x axis
    let speed = ego.vx.hypot(ego.vy);
    let pred: Vec<Point> = (1..=scene.gt_trajectory.len())
        .map(|k| Point::new(speed * FRAME_DT * k as f64, 0.0))
        .collect();
    std::fs::write(&out, render_svg(&scene, &pred, &Canvas::default())).unwrap();
    println!("wrote {out} ({:?}, {} obstacles)", scene.command(), scene.obstacles[0].len());
}

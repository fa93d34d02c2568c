//! One forward pass of an untrained planner on a generated scene: both
//! branch queries, the fusion weight, the decoded waypoints and the loss
//! breakdown.

use map_planner::cli::dataset::Sample;
use map_planner::losses::{planning_loss, LossConfig, LossContext};
use map_planner::numerics::Tape;
use map_planner::planner::{forward_plan, ForwardOptions, Model, ModelConfig};
use map_planner::scenario::{generate_scenario, GridConfig, IntervalMode, ScenarioParams};

fn main() {
    let cfg = ModelConfig::default();
    let model = Model::init(cfg, 1).unwrap();
    let scene = generate_scenario(5, &ScenarioParams::default()).unwrap();
    let sample = Sample::prepare(
        "demo".into(),
        scene,
        &GridConfig::default(),
        cfg.channels,
        cfg.token_stride,
        IntervalMode::ActualDt,
    )
    .unwrap();
    println!(
        "{} BEV tokens of width {}, command {:?}",
        sample.input.tokens.rows(),
        sample.input.tokens.cols(),
        sample.scene.command()
    );

    let mut tape = Tape::new();
    let out = forward_plan(&mut tape, &model, &sample.input, ForwardOptions::default()).unwrap();
    println!("fusion weight α = {:.3}", out.alpha_value(&tape).unwrap());
    for (step, (p, g)) in out.trajectory(&tape).waypoints.iter().zip(&sample.scene.gt_trajectory).enumerate() {
        println!("step {:>2}: pred ({:6.2}, {:6.2})  gt ({:6.2}, {:6.2})", step + 1, p.x, p.y, g.x, g.y);
    }

    let loss_cfg = LossConfig::default();
    let ctx = LossContext {
        scene: &sample.scene,
        regions: &sample.regions,
        map_targets: Some(&sample.targets),
        map_config: &cfg.map,
        config: &loss_cfg,
    };
    let (_, r) = planning_loss(&mut tape, &out, &ctx).unwrap();
    println!(
        "loss: mapping {:.3}, collision {:.3}, ade {:.3}, adaptive {:.3}, total {:.3}",
        r.mapping, r.collision, r.ade, r.adaptive, r.total
    );
}

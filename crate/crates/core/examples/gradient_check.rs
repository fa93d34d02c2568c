//! Compares tape gradients of the full planning loss with central
//! differences on a small model, one random coordinate per parameter.

use map_planner::cli::dataset::Sample;
use map_planner::losses::{planning_loss, LossConfig, LossContext};
use map_planner::numerics::{finite_diff_check_coords, ParamStore, SeededRng, Tape};
use map_planner::planner::{forward_plan, ForwardOptions, Model, ModelConfig};
use map_planner::scenario::{generate_scenario, GridConfig, IntervalMode, ScenarioParams};

fn main() {
    let mut cfg = ModelConfig::default();
    cfg.d_model = 16;
    cfg.map.d_map = 8;
    let model = Model::init(cfg, 11).unwrap();
    let scene = generate_scenario(11, &ScenarioParams::default()).unwrap();
    let grids = GridConfig::default();
    let sample = Sample::prepare("g".into(), scene, &grids, cfg.channels, cfg.token_stride, IntervalMode::ActualDt).unwrap();
    let loss_cfg = LossConfig::default();

    let total = |store: &ParamStore| {
        let m = Model {
            config: cfg,
            params: store.clone(),
        };
        let mut t = Tape::new();
        let out = forward_plan(&mut t, &m, &sample.input, ForwardOptions::default()).unwrap();
        let ctx = LossContext {
            scene: &sample.scene,
            regions: &sample.regions,
            map_targets: Some(&sample.targets),
            map_config: &cfg.map,
            config: &loss_cfg,
        };
        let (l, _) = planning_loss(&mut t, &out, &ctx).unwrap();
        (t, l)
    };

    let (t, l) = total(&model.params);
    let grads = t.backward(l).unwrap();
    let bound: std::collections::BTreeMap<&str, _> = t.bound_params().collect();
    let analytic: Vec<f64> = model
        .params
        .iter()
        .flat_map(|(name, p)| match bound.get(name) {
            Some(&v) => grads.get(v).into_data(),
            None => vec![0.0; p.len()],
        })
        .collect();

    let mut rng = SeededRng::new(0);
    let mut coords = Vec::new();
    let mut offset = 0;
    for (_, p) in model.params.iter() {
        coords.push(offset + rng.below(p.len()));
        offset += p.len();
    }
    let x = model.params.flatten();
    let mut store = model.params.clone();
    let worst = finite_diff_check_coords(
        |x| {
            store.unflatten(x);
            let (t, l) = total(&store);
            t.value(l).item()
        },
        &x,
        &analytic,
        1e-6,
        &coords,
    )
    .unwrap();
    println!("loss {:.4}, {} coordinates checked, worst relative error {worst:.2e}", t.value(l).item(), coords.len());
}

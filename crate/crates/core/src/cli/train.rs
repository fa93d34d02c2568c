use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::config::RunConfig;
use super::dataset::Sample;
use super::CliError;
use crate::geometry::Point;
use crate::losses::{ade_value, planning_loss, LossContext};
use crate::numerics::{AdamState, SeededRng, Tape, Tensor};
use crate::planner::{forward_plan, Ablation, ForwardOptions, Model};

/// Mean training losses of one epoch and the validation ADE after it.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub collision: f64,
    pub ade: f64,
    pub adaptive: f64,
    pub mapping: f64,
    pub total: f64,
    pub val_ade: Option<f64>,
}

pub const LOSS_LOG_HEADER: &str = "epoch,collision,ade,adaptive,mapping,total,val_ade";

pub fn loss_log_csv(rows: &[EpochLog]) -> String {
    let mut out = format!("{LOSS_LOG_HEADER}\n");
    for r in rows {
        let val = r.val_ade.map_or_else(|| "NA".into(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{val}",
            r.epoch, r.collision, r.ade, r.adaptive, r.mapping, r.total
        );
    }
    out
}

/// Model, optimizer state and progress; what a checkpoint stores.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: RunConfig,
    pub model: Model,
    pub adam: AdamState,
    pub epochs_done: usize,
}

impl TrainState {
    pub fn fresh(config: RunConfig) -> Result<Self, CliError> {
        let model = Model::init(config.model, config.seed)?;
        Ok(Self {
            config,
            model,
            adam: AdamState::new(),
            epochs_done: 0,
        })
    }
}

/// Predicted waypoints for one sample.
pub fn predict(model: &Model, sample: &Sample, ablation: Ablation) -> Result<Vec<Point>, CliError> {
    let mut tape = Tape::new();
    let out = forward_plan(
        &mut tape,
        model,
        &sample.input,
        ForwardOptions {
            ablation,
            alpha_override: None,
        },
    )?;
    Ok(out.trajectory(&tape).waypoints)
}

/// Mean ADE over `samples`; `None` for an empty set.
pub fn mean_ade(model: &Model, samples: &[Sample], ablation: Ablation) -> Result<Option<f64>, CliError> {
    if samples.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for s in samples {
        let pred = predict(model, s, ablation)?;
        sum += ade_value(&pred, &s.scene.gt_trajectory, &s.scene.validity);
    }
    Ok(Some(sum / samples.len() as f64))
}

/// Per-sample loss gradients summed into `acc`; returns the loss report.
fn accumulate(
    state: &TrainState,
    sample: &Sample,
    acc: &mut BTreeMap<String, Tensor>,
    step: u64,
) -> Result<crate::losses::LossReport, CliError> {
    let cfg = &state.config;
    let mut tape = Tape::new();
    let out = forward_plan(
        &mut tape,
        &state.model,
        &sample.input,
        ForwardOptions {
            ablation: cfg.ablation,
            alpha_override: None,
        },
    )?;
    let ctx = LossContext {
        scene: &sample.scene,
        regions: &sample.regions,
        map_targets: Some(&sample.targets),
        map_config: &cfg.model.map,
        config: &cfg.loss,
    };
    let (total, report) = planning_loss(&mut tape, &out, &ctx)?;
    if !report.total.is_finite() {
        return Err(CliError::NonFinite {
            step,
            scene: sample.id.clone(),
        });
    }
    let grads = tape.backward(total)?;
    for (name, v) in tape.bound_params() {
        if let Some(g) = grads.get_ref(v) {
            match acc.get_mut(name) {
                Some(a) => a.add_assign(g),
                None => {
                    acc.insert(name.to_string(), g.clone());
                }
            }
        }
    }
    Ok(report)
}

/// Runs the remaining epochs of `state`: shuffled minibatches, mean
/// gradient per batch, one optimizer step per batch. `on_epoch` sees each
/// log row as it is produced.
pub fn train(
    state: &mut TrainState,
    train: &[Sample],
    val: &[Sample],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, CliError> {
    if train.is_empty() {
        return Err(CliError::EmptyData("training set".into()));
    }
    let cfg = state.config.clone();
    let shuffle_root = SeededRng::new(cfg.seed).split("shuffle");
    let mut logs = Vec::new();
    while state.epochs_done < cfg.epochs {
        let epoch = state.epochs_done + 1;
        let mut rng = SeededRng::new(SeededRng::derive_seed(shuffle_root.seed(), epoch as u64));
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        let mut sums = [0.0; 5];
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = BTreeMap::new();
            for &i in batch {
                let r = accumulate(state, &train[i], &mut acc, state.adam.step + 1)?;
                for (s, v) in sums.iter_mut().zip([r.collision, r.ade, r.adaptive, r.mapping, r.total]) {
                    *s += v;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in acc.values_mut() {
                *g = g.map(|x| x * inv);
            }
            state.adam.step(&mut state.model.params, &acc, &cfg.optimizer)?;
        }
        state.epochs_done = epoch;
        let n = train.len() as f64;
        let log = EpochLog {
            epoch,
            collision: sums[0] / n,
            ade: sums[1] / n,
            adaptive: sums[2] / n,
            mapping: sums[3] / n,
            total: sums[4] / n,
            val_ade: mean_ade(&state.model, val, cfg.ablation)?,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

//! Ego-status encoding, the ego-status-guided branch, the fusion adapter and
//! trajectory decoding, plus the whole-model forward pass.

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::mapping::{self, init_mapping_params, init_pom_params, MapConfig, MapMemory, MapQuery, MappingError, SegPrediction};
use crate::numerics::{glorot_uniform, NumericsError, ParamStore, SeededRng, Tape, Tensor, Var};
use crate::scenario::{BevGrid, Command, EgoStatus, HORIZON};

/// Raw ego inputs: `vx, vy, ax, ay, sin θ, cos θ`.
pub const EGO_INPUTS: usize = 6;
/// Per-step decoder outputs: `μx, μy, σx, σy, ρ` (raw).
pub const STEP_OUTPUTS: usize = 5;
const SIGMA_FLOOR: f64 = 1e-3;
const RHO_SCALE: f64 = 0.999;
/// Speeds enter the encoder divided by this.
const SPEED_SCALE: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("query dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("fusion weight {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Ablation {
    /// Both branches, fused by the adapter.
    #[default]
    Full,
    /// Ego-status-guided branch only.
    NoPom,
    /// Map-guided branch only.
    NoEp,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Full, Ablation::NoPom, Ablation::NoEp];

    pub fn uses_map(self) -> bool {
        self != Ablation::NoPom
    }

    pub fn uses_ep(self) -> bool {
        self != Ablation::NoEp
    }

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "FULL",
            Ablation::NoPom => "NO_POM",
            Ablation::NoEp => "NO_EP",
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "FULL" => Ok(Ablation::Full),
            "NO_POM" => Ok(Ablation::NoPom),
            "NO_EP" => Ok(Ablation::NoEp),
            other => Err(format!("unknown ablation `{other}` (FULL, NO_POM or NO_EP)")),
        }
    }
}

/// Sizes of every learned block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// BEV feature channels `C`.
    pub channels: usize,
    /// Side of the square BEV patch pooled into one token.
    pub token_stride: usize,
    pub d_model: usize,
    pub d_lin: usize,
    pub d_cmd: usize,
    /// Key/query width of the branch attention.
    pub d_att: usize,
    pub d_adapter: usize,
    pub d_decoder: usize,
    pub map: MapConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            token_stride: 4,
            d_model: 64,
            d_lin: 32,
            d_cmd: 16,
            d_att: 32,
            d_adapter: 64,
            d_decoder: 64,
            map: MapConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn d_ego(&self) -> usize {
        self.d_lin + self.d_cmd
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let dims = [
            ("channels", self.channels),
            ("token_stride", self.token_stride),
            ("d_model", self.d_model),
            ("d_lin", self.d_lin),
            ("d_cmd", self.d_cmd),
            ("d_att", self.d_att),
            ("d_adapter", self.d_adapter),
            ("d_decoder", self.d_decoder),
            ("map.d_map", self.map.d_map),
            ("map.n_queries", self.map.n_queries),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(PlannerError::Config(format!("{name} must be positive")));
        }
        if self.channels < crate::scenario::MIN_CHANNELS {
            return Err(PlannerError::Config(format!(
                "channels must be at least {}",
                crate::scenario::MIN_CHANNELS
            )));
        }
        if self.map.layers < 2 {
            return Err(MappingError::TooFewLayers(self.map.layers).into());
        }
        Ok(())
    }
}

/// Config plus the named weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Fresh weights; each block draws from its own stream so that adding a
    /// block never perturbs the others.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, PlannerError> {
        config.validate()?;
        let root = SeededRng::new(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let d_ego = c.d_ego();

        let mut r = root.split("map");
        init_mapping_params(&c.map, c.channels, &mut r, &mut store);
        let mut r = root.split("pom");
        init_pom_params(d_ego, c.d_att, c.map.d_map, c.d_model, &mut r, &mut store);

        let mut r = root.split("ego");
        store.insert("ego.w1", glorot_uniform(&mut r, EGO_INPUTS, c.d_lin));
        store.insert("ego.b1", Tensor::zeros(1, c.d_lin));
        store.insert("ego.w2", glorot_uniform(&mut r, c.d_lin, c.d_lin));
        store.insert("ego.b2", Tensor::zeros(1, c.d_lin));
        store.insert("ego.cmd", glorot_uniform(&mut r, Command::ALL.len(), c.d_cmd));

        let mut r = root.split("ep");
        store.insert("ep.wq", glorot_uniform(&mut r, d_ego, c.d_att));
        store.insert("ep.wk", glorot_uniform(&mut r, c.channels, c.d_att));
        store.insert("ep.wv", glorot_uniform(&mut r, c.channels, c.d_model));
        store.insert("ep.head.w", glorot_uniform(&mut r, c.d_model, c.d_model));
        store.insert("ep.head.b", Tensor::zeros(1, c.d_model));
        store.insert("ep.skip.w", glorot_uniform(&mut r, d_ego, c.d_model));

        let mut r = root.split("adapter");
        store.insert("adapter.w1", glorot_uniform(&mut r, d_ego, c.d_adapter));
        store.insert("adapter.b1", Tensor::zeros(1, c.d_adapter));
        store.insert("adapter.w2", glorot_uniform(&mut r, c.d_adapter, 1));
        store.insert("adapter.b2", Tensor::zeros(1, 1));

        let mut r = root.split("dec");
        store.insert("dec.w1", glorot_uniform(&mut r, c.d_model, c.d_decoder));
        store.insert("dec.b1", Tensor::zeros(1, c.d_decoder));
        store.insert("dec.w2", glorot_uniform(&mut r, c.d_decoder, HORIZON * STEP_OUTPUTS));
        store.insert("dec.b2", Tensor::zeros(1, HORIZON * STEP_OUTPUTS));
        Ok(Self {
            config,
            params: store,
        })
    }
}

/// `E_ego`, `1 × (d_lin + d_cmd)`.
#[derive(Clone, Copy, Debug)]
pub struct EgoEmbedding(pub Var);

/// `Q_plan`, `1 × d_model`.
#[derive(Clone, Copy, Debug)]
pub struct PlanQuery(pub Var);

/// Sigmoid output of the adapter, `1 × 1`.
#[derive(Clone, Copy, Debug)]
pub struct FusionWeight(pub Var);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianStep {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

/// `HORIZON` waypoints in the ego frame, 0.5 s apart.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Point>,
    pub gaussians: Option<Vec<GaussianStep>>,
}

impl Trajectory {
    pub fn from_points(waypoints: Vec<Point>) -> Self {
        Self {
            waypoints,
            gaussians: None,
        }
    }
}

/// Network-side inputs for one scene.
#[derive(Clone, Debug)]
pub struct PlanInput {
    /// Pooled BEV tokens, `n_tokens × C`.
    pub tokens: Tensor,
    pub token_cols: usize,
    pub ego: EgoStatus,
}

impl PlanInput {
    pub fn new(bev: &BevGrid, ego: EgoStatus, stride: usize) -> Self {
        Self {
            tokens: bev.tokens(stride),
            token_cols: bev.token_grid(stride).1,
            ego,
        }
    }
}

fn mlp2(tape: &mut Tape, store: &ParamStore, x: Var, prefix: &str) -> Result<Var, NumericsError> {
    let w1 = tape.param(store, &format!("{prefix}.w1"))?;
    let b1 = tape.param(store, &format!("{prefix}.b1"))?;
    let h = tape.linear(x, w1, b1)?;
    let h = tape.relu(h);
    let w2 = tape.param(store, &format!("{prefix}.w2"))?;
    let b2 = tape.param(store, &format!("{prefix}.b2"))?;
    tape.linear(h, w2, b2)
}

pub fn ego_features(ego: &EgoStatus) -> [f64; EGO_INPUTS] {
    let (s, c) = ego.heading.sin_cos();
    [ego.vx / SPEED_SCALE, ego.vy / SPEED_SCALE, ego.ax, ego.ay, s, c]
}

/// MLP over the kinematic part concatenated with the command's embedding
/// row.
pub fn encode_ego_status(tape: &mut Tape, store: &ParamStore, ego: &EgoStatus) -> Result<EgoEmbedding, PlannerError> {
    let x = tape.constant(Tensor::row(&ego_features(ego)));
    let lin = mlp2(tape, store, x, "ego")?;
    let table = tape.param(store, "ego.cmd")?;
    let cmd = tape.gather_rows(table, &[ego.command.index()])?;
    Ok(EgoEmbedding(tape.concat_cols(&[lin, cmd])?))
}

/// Attention output of the ego-status-guided branch before its head:
/// ego embedding as query, projected BEV tokens as keys and values.
pub fn ep_attention(tape: &mut Tape, store: &ParamStore, tokens: Var, ego: EgoEmbedding) -> Result<Var, PlannerError> {
    let wq = tape.param(store, "ep.wq")?;
    let wk = tape.param(store, "ep.wk")?;
    let wv = tape.param(store, "ep.wv")?;
    let q = tape.matmul(ego.0, wq)?;
    let k = tape.matmul(tokens, wk)?;
    let v = tape.matmul(tokens, wv)?;
    Ok(tape.scaled_dot_attention(q, k, v)?)
}

/// `Q_plan = head(attention) + skip(E_ego)`. Reads no mapping output.
pub fn ep_query(tape: &mut Tape, store: &ParamStore, tokens: Var, ego: EgoEmbedding) -> Result<PlanQuery, PlannerError> {
    let att = ep_attention(tape, store, tokens, ego)?;
    let hw = tape.param(store, "ep.head.w")?;
    let hb = tape.param(store, "ep.head.b")?;
    let head = tape.linear(att, hw, hb)?;
    let sw = tape.param(store, "ep.skip.w")?;
    let skip = tape.matmul(ego.0, sw)?;
    Ok(PlanQuery(tape.add(head, skip)?))
}

/// `α = sigmoid(MLP(E_ego))` with a `d_adapter` hidden layer.
pub fn fusion_weight(tape: &mut Tape, store: &ParamStore, ego: EgoEmbedding) -> Result<FusionWeight, PlannerError> {
    let logit = mlp2(tape, store, ego.0, "adapter")?;
    Ok(FusionWeight(tape.sigmoid(logit)))
}

/// `α · Q_plan + (1 − α) · Q_map`.
pub fn fuse(tape: &mut Tape, qp: PlanQuery, qm: MapQuery, alpha: FusionWeight) -> Result<Var, PlannerError> {
    let (dp, dm) = (tape.shape(qp.0), tape.shape(qm.0));
    if dp != dm {
        return Err(PlannerError::DimMismatch(dp[1], dm[1]));
    }
    let a = tape.value(alpha.0).item();
    if !(0.0..=1.0).contains(&a) {
        return Err(PlannerError::BadAlpha(a));
    }
    let one_minus = tape.affine(alpha.0, -1.0, 1.0);
    let p = tape.scale_by(qp.0, alpha.0)?;
    let m = tape.scale_by(qm.0, one_minus)?;
    Ok(tape.add(p, m)?)
}

/// Decoded trajectory: waypoints `T × 2` on the tape plus the activated
/// Gaussian parameters.
#[derive(Clone, Copy, Debug)]
pub struct DecodedPlan {
    pub waypoints: Var,
    pub sigma: Var,
    pub rho: Var,
    pub offsets: Var,
}

/// MLP head to `T × 5`; the means are per-step offsets whose running sum
/// gives the waypoints, `σ = softplus + 1e-3`, `ρ = 0.999 · tanh`.
pub fn decode_trajectory(tape: &mut Tape, store: &ParamStore, q: Var) -> Result<DecodedPlan, PlannerError> {
    let raw = mlp2(tape, store, q, "dec")?;
    let raw = tape.reshape(raw, HORIZON, STEP_OUTPUTS)?;
    let offsets = tape.slice_cols(raw, 0, 2)?;
    let waypoints = tape.cumsum_rows(offsets);
    let s = tape.slice_cols(raw, 2, 4)?;
    let s = tape.softplus(s);
    let sigma = tape.affine(s, 1.0, SIGMA_FLOOR);
    let r = tape.slice_cols(raw, 4, 5)?;
    let r = tape.tanh(r);
    let rho = tape.scale(r, RHO_SCALE);
    Ok(DecodedPlan {
        waypoints,
        sigma,
        rho,
        offsets,
    })
}

impl DecodedPlan {
    pub fn trajectory(&self, tape: &Tape) -> Trajectory {
        let w = tape.value(self.waypoints);
        let o = tape.value(self.offsets);
        let s = tape.value(self.sigma);
        let r = tape.value(self.rho);
        let waypoints = (0..HORIZON).map(|i| Point::new(w.get(i, 0), w.get(i, 1))).collect();
        let gaussians = (0..HORIZON)
            .map(|i| GaussianStep {
                mu_x: o.get(i, 0),
                mu_y: o.get(i, 1),
                sigma_x: s.get(i, 0),
                sigma_y: s.get(i, 1),
                rho: r.get(i, 0),
            })
            .collect();
        Trajectory {
            waypoints,
            gaussians: Some(gaussians),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForwardOptions {
    pub ablation: Ablation,
    /// Replaces the adapter output in FULL mode.
    pub alpha_override: Option<f64>,
}

/// Everything one forward pass leaves on the tape.
#[derive(Clone, Debug)]
pub struct PlanOutput {
    pub plan: DecodedPlan,
    pub ego: EgoEmbedding,
    pub plan_query: Option<PlanQuery>,
    pub map_query: Option<MapQuery>,
    pub alpha: Option<FusionWeight>,
    pub fused: Var,
    pub seg: Option<SegPrediction>,
    pub memory: Option<MapMemory>,
}

impl PlanOutput {
    pub fn trajectory(&self, tape: &Tape) -> Trajectory {
        self.plan.trajectory(tape)
    }

    pub fn alpha_value(&self, tape: &Tape) -> Option<f64> {
        self.alpha.map(|a| tape.value(a.0).item())
    }
}

/// FULL decodes the fused query, NO_POM the ego-status-guided query alone
/// and NO_EP the map-guided query alone.
pub fn forward_plan(
    tape: &mut Tape,
    model: &Model,
    input: &PlanInput,
    opts: ForwardOptions,
) -> Result<PlanOutput, PlannerError> {
    let store = &model.params;
    let cfg = &model.config;
    let tokens = tape.constant(input.tokens.clone());
    let ego = encode_ego_status(tape, store, &input.ego)?;

    let plan_query = if opts.ablation.uses_ep() {
        Some(ep_query(tape, store, tokens, ego)?)
    } else {
        None
    };
    let (seg, memory, map_query) = if opts.ablation.uses_map() {
        let (seg, mem) = mapping::map_decode(tape, store, &cfg.map, tokens, input.token_cols)?;
        let q = mapping::pom_query(tape, store, &mem, ego)?;
        (Some(seg), Some(mem), Some(q))
    } else {
        (None, None, None)
    };

    let (fused, alpha) = match (plan_query, map_query) {
        (Some(qp), Some(qm)) => {
            let alpha = match opts.alpha_override {
                Some(a) => {
                    if !(0.0..=1.0).contains(&a) {
                        return Err(PlannerError::BadAlpha(a));
                    }
                    FusionWeight(tape.scalar(a))
                }
                None => fusion_weight(tape, store, ego)?,
            };
            (fuse(tape, qp, qm, alpha)?, Some(alpha))
        }
        (Some(qp), None) => (qp.0, None),
        (None, Some(qm)) => (qm.0, None),
        (None, None) => unreachable!("every ablation keeps one branch"),
    };
    let plan = decode_trajectory(tape, store, fused)?;
    Ok(PlanOutput {
        plan,
        ego,
        plan_query,
        map_query,
        alpha,
        fused,
        seg,
        memory,
    })
}

/// Plain-value fusion, for checking the tape version.
pub fn fuse_values(qp: &[f64], qm: &[f64], alpha: f64) -> Vec<f64> {
    qp.iter().zip(qm).map(|(p, m)| alpha * p + (1.0 - alpha) * m).collect()
}

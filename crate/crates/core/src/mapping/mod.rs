//! Online mapping branch: an L-layer token decoder over the BEV features with
//! per-layer segmentation and detection heads, its loss, and the map-guided
//! planning query.

mod loss;

pub use loss::{
    detection_loss, dice_loss, focal_loss, greedy_match, layer_loss, mapping_loss, tape_giou, MappingLossParts,
};

use serde::{Deserialize, Serialize};

use crate::geometry::AxisBox;
use crate::numerics::{glorot_uniform, NumericsError, ParamStore, SeededRng, Tape, Tensor, Var};
use crate::planner::EgoEmbedding;
use crate::scenario::{BevGrid, SemanticClass};

pub const N_CLASSES: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("the decoder needs at least 2 layers, got {0}")]
    TooFewLayers(usize),
    #[error("map memory is empty")]
    EmptyMemory,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Detection-head loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionWeights {
    pub l1: f64,
    pub giou: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for DetectionWeights {
    fn default() -> Self {
        Self {
            l1: 5.0,
            giou: 2.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Decoder depth `L`.
    pub layers: usize,
    pub d_map: usize,
    pub n_queries: usize,
    /// Also supervise heads applied to the encoder output.
    pub encoder_aux: bool,
    pub detection: DetectionWeights,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            d_map: 32,
            n_queries: 8,
            encoder_aux: false,
            detection: DetectionWeights::default(),
        }
    }
}

/// Heads' output for one decoder layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerPrediction {
    /// `n_tokens × 4` class logits, one column per [`SemanticClass`].
    pub mask_logits: Var,
    /// `n_queries × 4` boxes as `(cx, cy, w, h)` in `[0, 1]` grid units.
    pub boxes: Var,
    /// `n_queries × 1` obstacle logits.
    pub score_logits: Var,
}

#[derive(Clone, Debug)]
pub struct SegPrediction {
    /// One entry per decoder layer, last = final layer.
    pub layers: Vec<LayerPrediction>,
    /// Heads on the encoder output, when enabled.
    pub encoder: Option<LayerPrediction>,
}

impl SegPrediction {
    pub fn final_layer(&self) -> &LayerPrediction {
        self.layers.last().expect("at least one layer")
    }
}

/// Final-layer token features with their token-grid positions.
#[derive(Clone, Debug)]
pub struct MapMemory {
    pub features: Var,
    pub positions: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug)]
pub struct MapQuery(pub Var);

/// Ground truth for the mapping loss at token resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct MapTargets {
    /// `n_tokens × 4` per-patch class fractions.
    pub masks: Tensor,
    /// Obstacle boxes as `(cx, cy, w, h)` in grid units.
    pub boxes: Vec<[f64; 4]>,
}

impl MapTargets {
    pub fn from_bev(bev: &BevGrid, stride: usize) -> Self {
        let g = bev.grid();
        let (w, h) = (g.width(), g.height());
        let boxes = bev
            .things()
            .iter()
            .map(|b: &AxisBox| {
                let c = b.center();
                [
                    (c.x - g.origin_x) / w,
                    (c.y - g.origin_y) / h,
                    b.width() / w,
                    b.height() / h,
                ]
            })
            .collect();
        Self {
            masks: bev.token_targets(stride),
            boxes,
        }
    }
}

/// Registers the mapping decoder's weights under `map.`.
pub fn init_mapping_params(cfg: &MapConfig, channels: usize, rng: &mut SeededRng, store: &mut ParamStore) {
    let d = cfg.d_map;
    store.insert("map.in.w", glorot_uniform(rng, channels, d));
    store.insert("map.in.b", Tensor::zeros(1, d));
    for k in 0..cfg.layers {
        store.insert(format!("map.layer{k}.w1"), glorot_uniform(rng, d, d));
        store.insert(format!("map.layer{k}.b1"), Tensor::zeros(1, d));
        for m in ["wq", "wk", "wv"] {
            store.insert(format!("map.layer{k}.{m}"), glorot_uniform(rng, d, d));
        }
    }
    store.insert("map.seg.w", glorot_uniform(rng, d, N_CLASSES));
    store.insert("map.seg.b", Tensor::zeros(1, N_CLASSES));
    store.insert("map.det.queries", glorot_uniform(rng, cfg.n_queries, d));
    store.insert("map.det.wq", glorot_uniform(rng, d, d));
    store.insert("map.det.wk", glorot_uniform(rng, d, d));
    store.insert("map.det.w", glorot_uniform(rng, d, 5));
    store.insert("map.det.b", Tensor::zeros(1, 5));
}

/// Registers the map-guided query head under `pom.`.
pub fn init_pom_params(d_ego: usize, d_att: usize, d_map: usize, d_model: usize, rng: &mut SeededRng, store: &mut ParamStore) {
    store.insert("pom.wq", glorot_uniform(rng, d_ego, d_att));
    store.insert("pom.wk", glorot_uniform(rng, d_map, d_att));
    store.insert("pom.head.w", glorot_uniform(rng, d_map, d_model));
    store.insert("pom.head.b", Tensor::zeros(1, d_model));
    store.insert("pom.skip.w", glorot_uniform(rng, d_ego, d_model));
}

fn heads(tape: &mut Tape, store: &ParamStore, h: Var) -> Result<LayerPrediction, MappingError> {
    let sw = tape.param(store, "map.seg.w")?;
    let sb = tape.param(store, "map.seg.b")?;
    let mask_logits = tape.linear(h, sw, sb)?;

    let queries = tape.param(store, "map.det.queries")?;
    let wq = tape.param(store, "map.det.wq")?;
    let wk = tape.param(store, "map.det.wk")?;
    let q = tape.matmul(queries, wq)?;
    let k = tape.matmul(h, wk)?;
    let att = tape.scaled_dot_attention(q, k, h)?;
    let dw = tape.param(store, "map.det.w")?;
    let db = tape.param(store, "map.det.b")?;
    let raw = tape.linear(att, dw, db)?;
    let box_raw = tape.slice_cols(raw, 0, 4)?;
    let boxes = tape.sigmoid(box_raw);
    let score_logits = tape.slice_cols(raw, 4, 5)?;
    Ok(LayerPrediction {
        mask_logits,
        boxes,
        score_logits,
    })
}

/// Runs the decoder on `n_tokens × C` BEV tokens.
///
/// Each layer is `U = relu(H W₁ + b₁)`, `H ← U + attention(U)`, and the
/// shared heads read every layer's `H`. The final `H` is the memory.
pub fn map_decode(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &MapConfig,
    tokens: Var,
    token_cols: usize,
) -> Result<(SegPrediction, MapMemory), MappingError> {
    if cfg.layers < 2 {
        return Err(MappingError::TooFewLayers(cfg.layers));
    }
    let w_in = tape.param(store, "map.in.w")?;
    let b_in = tape.param(store, "map.in.b")?;
    let pre = tape.linear(tokens, w_in, b_in)?;
    let mut h = tape.relu(pre);
    let encoder = if cfg.encoder_aux {
        Some(heads(tape, store, h)?)
    } else {
        None
    };
    let mut layers = Vec::with_capacity(cfg.layers);
    for k in 0..cfg.layers {
        let w1 = tape.param(store, &format!("map.layer{k}.w1"))?;
        let b1 = tape.param(store, &format!("map.layer{k}.b1"))?;
        let pre = tape.linear(h, w1, b1)?;
        let u = tape.relu(pre);
        let wq = tape.param(store, &format!("map.layer{k}.wq"))?;
        let wk = tape.param(store, &format!("map.layer{k}.wk"))?;
        let wv = tape.param(store, &format!("map.layer{k}.wv"))?;
        let q = tape.matmul(u, wq)?;
        let kk = tape.matmul(u, wk)?;
        let v = tape.matmul(u, wv)?;
        let a = tape.scaled_dot_attention(q, kk, v)?;
        h = tape.add(u, a)?;
        layers.push(heads(tape, store, h)?);
    }
    let n = tape.shape(h)[0];
    let positions = (0..n).map(|i| (i / token_cols, i % token_cols)).collect();
    Ok((
        SegPrediction { layers, encoder },
        MapMemory {
            features: h,
            positions,
        },
    ))
}

/// Attention output of the map-guided query before the head: the ego
/// embedding attends over the memory tokens, values are the raw tokens.
pub fn pom_attention(
    tape: &mut Tape,
    store: &ParamStore,
    mem: &MapMemory,
    ego: EgoEmbedding,
) -> Result<Var, MappingError> {
    if tape.shape(mem.features)[0] == 0 {
        return Err(MappingError::EmptyMemory);
    }
    let wq = tape.param(store, "pom.wq")?;
    let wk = tape.param(store, "pom.wk")?;
    let q = tape.matmul(ego.0, wq)?;
    let k = tape.matmul(mem.features, wk)?;
    Ok(tape.scaled_dot_attention(q, k, mem.features)?)
}

/// `Q_map = head(attention) + skip(E_ego)`.
pub fn pom_query(
    tape: &mut Tape,
    store: &ParamStore,
    mem: &MapMemory,
    ego: EgoEmbedding,
) -> Result<MapQuery, MappingError> {
    let att = pom_attention(tape, store, mem, ego)?;
    let hw = tape.param(store, "pom.head.w")?;
    let hb = tape.param(store, "pom.head.b")?;
    let head = tape.linear(att, hw, hb)?;
    let sw = tape.param(store, "pom.skip.w")?;
    let skip = tape.matmul(ego.0, sw)?;
    Ok(MapQuery(tape.add(head, skip)?))
}

/// Class probabilities of a layer's mask logits, `n_tokens × 4`.
pub fn mask_probabilities(tape: &Tape, pred: &LayerPrediction) -> Tensor {
    tape.value(pred.mask_logits).map(crate::numerics::sigmoid)
}

/// Column of `class` in mask tensors.
pub fn class_column(class: SemanticClass) -> usize {
    class.index()
}

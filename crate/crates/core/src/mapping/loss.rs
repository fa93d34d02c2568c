use super::{DetectionWeights, LayerPrediction, MapConfig, MapTargets, MappingError, SegPrediction, N_CLASSES};
use crate::numerics::{NumericsError, Tape, Tensor, Var};
use crate::scenario::SemanticClass;

const DICE_EPS: f64 = 1e-6;
const FOCAL_CLAMP: f64 = 1e-7;

/// `1 − (2 Σ p g + ε) / (Σ p + Σ g + ε)` over two `n × 1` columns; an
/// empty prediction of an empty mask scores 0.
pub fn dice_loss(tape: &mut Tape, probs: Var, gt: Var) -> Result<Var, NumericsError> {
    let inter = tape.mul(probs, gt)?;
    let inter = tape.sum(inter);
    let inter = tape.affine(inter, 2.0, DICE_EPS);
    let sp = tape.sum(probs);
    let sg = tape.sum(gt);
    let denom = tape.add(sp, sg)?;
    let denom = tape.affine(denom, 1.0, DICE_EPS);
    let ratio = tape.div(inter, denom)?;
    Ok(tape.affine(ratio, -1.0, 1.0))
}

/// Mean sigmoid focal loss of `n × 1` probabilities against `labels`.
/// Probabilities are clamped to `[1e-7, 1 − 1e-7]` first.
pub fn focal_loss(
    tape: &mut Tape,
    probs: Var,
    labels: &[bool],
    alpha: f64,
    gamma: f64,
) -> Result<Var, NumericsError> {
    let n = tape.shape(probs)[0];
    if labels.len() != n {
        return Err(NumericsError::ShapeMismatch {
            op: "focal labels",
            lhs: tape.shape(probs),
            rhs: [labels.len(), 1],
        });
    }
    let p = tape.clamp(probs, FOCAL_CLAMP, 1.0 - FOCAL_CLAMP);
    let q = tape.affine(p, -1.0, 1.0);
    let ln_p = tape.ln(p);
    let ln_q = tape.ln(q);
    // (1 − p)^γ and p^γ through exp(γ ln ·)
    let q_pow = tape.scale(ln_q, gamma);
    let q_pow = tape.exp(q_pow);
    let p_pow = tape.scale(ln_p, gamma);
    let p_pow = tape.exp(p_pow);
    let pos = tape.mul(q_pow, ln_p)?;
    let pos = tape.scale(pos, -alpha);
    let neg = tape.mul(p_pow, ln_q)?;
    let neg = tape.scale(neg, -(1.0 - alpha));
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let not_y: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
    let y = tape.constant(Tensor::new(n, 1, y)?);
    let not_y = tape.constant(Tensor::new(n, 1, not_y)?);
    let a = tape.mul(y, pos)?;
    let b = tape.mul(not_y, neg)?;
    let both = tape.add(a, b)?;
    Ok(tape.mean(both))
}

/// Row-wise GIoU of `(cx, cy, w, h)` boxes, `m × 4` each, giving `m × 1`.
pub fn tape_giou(tape: &mut Tape, a: Var, b: Var) -> Result<Var, NumericsError> {
    let corners = |tape: &mut Tape, x: Var| -> Result<[Var; 6], NumericsError> {
        let cx = tape.slice_cols(x, 0, 1)?;
        let cy = tape.slice_cols(x, 1, 2)?;
        let w = tape.slice_cols(x, 2, 3)?;
        let h = tape.slice_cols(x, 3, 4)?;
        let hw = tape.scale(w, 0.5);
        let hh = tape.scale(h, 0.5);
        let x1 = tape.sub(cx, hw)?;
        let x2 = tape.add(cx, hw)?;
        let y1 = tape.sub(cy, hh)?;
        let y2 = tape.add(cy, hh)?;
        let area = tape.mul(w, h)?;
        Ok([x1, y1, x2, y2, area, w])
    };
    let [ax1, ay1, ax2, ay2, a_area, _] = corners(tape, a)?;
    let [bx1, by1, bx2, by2, b_area, _] = corners(tape, b)?;

    let ix2 = tape.minimum(ax2, bx2)?;
    let ix1 = tape.maximum(ax1, bx1)?;
    let iw = tape.sub(ix2, ix1)?;
    let iw = tape.relu(iw);
    let iy2 = tape.minimum(ay2, by2)?;
    let iy1 = tape.maximum(ay1, by1)?;
    let ih = tape.sub(iy2, iy1)?;
    let ih = tape.relu(ih);
    let inter = tape.mul(iw, ih)?;
    let sum_area = tape.add(a_area, b_area)?;
    let union = tape.sub(sum_area, inter)?;
    let iou = tape.div(inter, union)?;

    let hx2 = tape.maximum(ax2, bx2)?;
    let hx1 = tape.minimum(ax1, bx1)?;
    let hw = tape.sub(hx2, hx1)?;
    let hy2 = tape.maximum(ay2, by2)?;
    let hy1 = tape.minimum(ay1, by1)?;
    let hh = tape.sub(hy2, hy1)?;
    let hull = tape.mul(hw, hh)?;
    let empty = tape.sub(hull, union)?;
    let frac = tape.div(empty, hull)?;
    tape.sub(iou, frac)
}

/// One-to-one matching of predictions to targets by ascending center
/// distance. Returns `(prediction, target)` pairs in match order.
pub fn greedy_match(pred: &[[f64; 4]], gt: &[[f64; 4]]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(pred.len() * gt.len());
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            pairs.push(((p[0] - g[0]).hypot(p[1] - g[1]), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// `Σ_matched [λ₁·L1 + λ_g·(1 − GIoU)] + focal(scores)`.
pub fn detection_loss(
    tape: &mut Tape,
    pred: &LayerPrediction,
    gt: &[[f64; 4]],
    w: &DetectionWeights,
) -> Result<Var, NumericsError> {
    let boxes = tape.value(pred.boxes);
    let pred_rows: Vec<[f64; 4]> = (0..boxes.rows())
        .map(|r| {
            let s = boxes.row_slice(r);
            [s[0], s[1], s[2], s[3]]
        })
        .collect();
    let matches = greedy_match(&pred_rows, gt);
    let mut labels = vec![false; pred_rows.len()];
    for &(i, _) in &matches {
        labels[i] = true;
    }
    let probs = tape.sigmoid(pred.score_logits);
    let mut total = focal_loss(tape, probs, &labels, w.focal_alpha, w.focal_gamma)?;
    if !matches.is_empty() {
        let idx: Vec<usize> = matches.iter().map(|m| m.0).collect();
        let targets: Vec<Vec<f64>> = matches.iter().map(|m| gt[m.1].to_vec()).collect();
        let p = tape.gather_rows(pred.boxes, &idx)?;
        let g = tape.constant(Tensor::from_rows(&targets)?);
        let diff = tape.sub(p, g)?;
        let l1 = tape.abs(diff);
        let l1 = tape.sum(l1);
        let l1 = tape.scale(l1, w.l1);
        let giou = tape_giou(tape, p, g)?;
        let giou_term = tape.affine(giou, -1.0, 1.0);
        let giou_term = tape.sum(giou_term);
        let giou_term = tape.scale(giou_term, w.giou);
        total = tape.add(total, l1)?;
        total = tape.add(total, giou_term)?;
    }
    Ok(total)
}

/// Detection and segmentation loss of one layer. Segmentation is the Dice
/// loss of the obstacle class plus the mean Dice loss of the three region
/// classes.
pub fn layer_loss(
    tape: &mut Tape,
    pred: &LayerPrediction,
    targets: &MapTargets,
    w: &DetectionWeights,
) -> Result<(Var, Var), NumericsError> {
    let det = detection_loss(tape, pred, &targets.boxes, w)?;
    let probs = tape.sigmoid(pred.mask_logits);
    let gt = tape.constant(targets.masks.clone());
    let mut stuff = Vec::with_capacity(N_CLASSES - 1);
    let mut things = None;
    for class in SemanticClass::ALL {
        let c = class.index();
        let p = tape.slice_cols(probs, c, c + 1)?;
        let g = tape.slice_cols(gt, c, c + 1)?;
        let d = dice_loss(tape, p, g)?;
        if class.is_thing() {
            things = Some(d);
        } else {
            stuff.push(d);
        }
    }
    let stuff_cat = tape.concat_rows(&stuff)?;
    let stuff_mean = tape.mean(stuff_cat);
    let seg = tape.add(things.expect("obstacle class present"), stuff_mean)?;
    Ok((det, seg))
}

/// Per-layer values behind a mapping loss, final layer last.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingLossParts {
    pub det: Vec<f64>,
    pub seg: Vec<f64>,
    pub encoder: Option<(f64, f64)>,
}

/// Final-layer det+seg loss plus the same for each earlier layer, plus the
/// encoder heads when enabled.
pub fn mapping_loss(
    tape: &mut Tape,
    seg: &SegPrediction,
    targets: &MapTargets,
    cfg: &MapConfig,
) -> Result<(Var, MappingLossParts), MappingError> {
    let mut terms = Vec::new();
    let mut parts = MappingLossParts {
        det: Vec::new(),
        seg: Vec::new(),
        encoder: None,
    };
    for layer in &seg.layers {
        let (d, s) = layer_loss(tape, layer, targets, &cfg.detection)?;
        parts.det.push(tape.value(d).item());
        parts.seg.push(tape.value(s).item());
        terms.push(d);
        terms.push(s);
    }
    if let Some(enc) = &seg.encoder {
        let (d, s) = layer_loss(tape, enc, targets, &cfg.detection)?;
        parts.encoder = Some((tape.value(d).item(), tape.value(s).item()));
        terms.push(d);
        terms.push(s);
    }
    let all = tape.concat_rows(&terms)?;
    Ok((tape.sum(all), parts))
}

use std::f64::consts::PI;

use super::{Scene, ScenarioError};
use crate::geometry::{rasterize, AxisBox, ConvexPolygon, GridSpec, RegionMask};
use crate::numerics::{SeededRng, Tensor};

/// Ground-truth map classes; the discriminant is the feature channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SemanticClass {
    Drivable = 0,
    Lane = 1,
    Crosswalk = 2,
    Obstacle = 3,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 4] = [
        SemanticClass::Drivable,
        SemanticClass::Lane,
        SemanticClass::Crosswalk,
        SemanticClass::Obstacle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Drivable => "drivable",
            SemanticClass::Lane => "lane",
            SemanticClass::Crosswalk => "crosswalk",
            SemanticClass::Obstacle => "obstacle",
        }
    }

    /// Countable instances (detected as boxes) as opposed to regions.
    pub fn is_thing(self) -> bool {
        self == SemanticClass::Obstacle
    }
}

/// Synthetic BEV feature grid with its per-class ground truth.
#[derive(Clone, Debug)]
pub struct BevGrid {
    grid: GridSpec,
    /// `rows·cols × C`, row-major over cells.
    features: Tensor,
    masks: [RegionMask; 4],
    /// Axis-aligned hulls of the obstacles at the first future step whose
    /// centers fall on the grid.
    things: Vec<AxisBox>,
}

pub const MIN_CHANNELS: usize = 6;
const NOISE_WAVES: usize = 3;

/// Channels 0–3 hold the class masks as 0/1, channels 4–5 the normalized
/// cell coordinates, and any further channels a smooth noise texture seeded
/// from the scene.
pub fn rasterize_bev(scene: &Scene, g: &GridSpec, channels: usize) -> Result<BevGrid, ScenarioError> {
    if channels < MIN_CHANNELS {
        return Err(ScenarioError::Unsatisfiable(format!(
            "BEV needs at least {MIN_CHANNELS} channels, got {channels}"
        )));
    }
    g.validate()?;
    let step1: Vec<ConvexPolygon> = scene.obstacles[0].iter().map(|b| b.polygon()).collect();
    let masks = [
        rasterize(&scene.drivable, g),
        rasterize(&scene.lanes, g),
        rasterize(&scene.crosswalks, g),
        rasterize(&step1, g),
    ];
    let things = scene.obstacles[0]
        .iter()
        .filter(|b| g.cell_of(b.center()).is_some())
        .map(|b| b.axis_hull())
        .collect();

    let rng = SeededRng::new(scene.seed).split("bev-noise");
    let waves: Vec<Vec<[f64; 4]>> = (MIN_CHANNELS..channels)
        .map(|ch| {
            let mut r = rng.split(&format!("channel-{ch}"));
            (0..NOISE_WAVES)
                .map(|_| {
                    [
                        r.uniform(-3.0, 3.0),
                        r.uniform(-3.0, 3.0),
                        r.uniform(0.0, 2.0 * PI),
                        r.uniform(0.1, 0.4),
                    ]
                })
                .collect()
        })
        .collect();

    let mut data = Vec::with_capacity(g.len() * channels);
    for row in 0..g.rows {
        for col in 0..g.cols {
            for m in &masks {
                data.push(if m.get(row, col) { 1.0 } else { 0.0 });
            }
            let (xn, yn) = g.normalized(row, col);
            data.push(xn);
            data.push(yn);
            for w in &waves {
                let v: f64 = w
                    .iter()
                    .map(|&[fx, fy, phase, amp]| amp * (PI * (fx * xn + fy * yn) + phase).sin())
                    .sum();
                data.push(v);
            }
        }
    }
    let features = Tensor::new(g.len(), channels, data).expect("sized above");
    Ok(BevGrid {
        grid: *g,
        features,
        masks,
        things,
    })
}

impl BevGrid {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.features.get(self.grid.index(row, col), channel)
    }

    pub fn mask(&self, class: SemanticClass) -> &RegionMask {
        &self.masks[class.index()]
    }

    pub fn things(&self) -> &[AxisBox] {
        &self.things
    }

    /// Replaces every feature value; used to probe the model with synthetic
    /// inputs.
    pub fn with_features(&self, features: Tensor) -> BevGrid {
        assert_eq!(features.rows(), self.grid.len(), "one feature row per cell");
        BevGrid {
            features,
            ..self.clone()
        }
    }

    pub fn token_grid(&self, stride: usize) -> (usize, usize) {
        (self.grid.rows.div_ceil(stride), self.grid.cols.div_ceil(stride))
    }

    /// Features averaged over `stride × stride` patches: one token per patch,
    /// `n_tokens × C`.
    pub fn tokens(&self, stride: usize) -> Tensor {
        self.pool(stride, self.channels(), |cell, out| {
            out.copy_from_slice(self.features.row_slice(cell));
        })
    }

    /// Per-patch fraction of cells in each class, `n_tokens × 4`.
    pub fn token_targets(&self, stride: usize) -> Tensor {
        self.pool(stride, 4, |cell, out| {
            for (o, m) in out.iter_mut().zip(&self.masks) {
                *o = if m.bits()[cell] { 1.0 } else { 0.0 };
            }
        })
    }

    fn pool(&self, stride: usize, width: usize, read: impl Fn(usize, &mut [f64])) -> Tensor {
        assert!(stride > 0, "stride must be positive");
        let g = &self.grid;
        let (tr, tc) = self.token_grid(stride);
        let mut out = vec![0.0; tr * tc * width];
        let mut buf = vec![0.0; width];
        for i in 0..tr {
            for j in 0..tc {
                let acc = &mut out[(i * tc + j) * width..(i * tc + j + 1) * width];
                let mut n = 0usize;
                for r in i * stride..((i + 1) * stride).min(g.rows) {
                    for c in j * stride..((j + 1) * stride).min(g.cols) {
                        read(g.index(r, c), &mut buf);
                        for (a, b) in acc.iter_mut().zip(&buf) {
                            *a += b;
                        }
                        n += 1;
                    }
                }
                let inv = 1.0 / n as f64;
                acc.iter_mut().for_each(|a| *a *= inv);
            }
        }
        Tensor::new(tr * tc, width, out).expect("sized above")
    }
}

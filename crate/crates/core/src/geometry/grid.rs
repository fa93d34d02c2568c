use serde::{Deserialize, Serialize};

use super::{ConvexPolygon, GeometryError, Point};

/// Regular BEV grid. Cell `(0, 0)` has its lower-left corner at the origin;
/// rows advance along +y and columns along +x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub resolution: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        resolution: f64,
        rows: usize,
        cols: usize,
    ) -> Result<Self, GeometryError> {
        let g = Self {
            origin_x,
            origin_y,
            resolution,
            rows,
            cols,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.resolution > 0.0) || self.rows == 0 || self.cols == 0 {
            return Err(GeometryError::InvalidGrid);
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        self.cols as f64 * self.resolution
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.resolution
    }

    /// `(row, col)` of the cell containing `p`, by `floor`; points on a cell
    /// boundary belong to the cell above/right of it.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin_x) / self.resolution).floor();
        let r = ((p.y - self.origin_y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    pub fn center_of(&self, row: usize, col: usize) -> Point {
        Point::new(
            self.origin_x + (col as f64 + 0.5) * self.resolution,
            self.origin_y + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell index mapped to `[-1, 1]²`: cell `(0, 0)` gives `(-1, -1)` and the
    /// last row/column gives `+1`. A single row or column maps to 0.
    pub fn normalized(&self, row: usize, col: usize) -> (f64, f64) {
        let f = |i: usize, n: usize| {
            if n > 1 {
                2.0 * i as f64 / (n - 1) as f64 - 1.0
            } else {
                0.0
            }
        };
        (f(col, self.cols), f(row, self.rows))
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

/// One bit per grid cell, plus the value reported for points off the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    grid: GridSpec,
    bits: Vec<bool>,
    off_grid: bool,
}

impl RegionMask {
    /// All-clear mask; off-grid points report `off_grid`.
    pub fn new(grid: GridSpec, off_grid: bool) -> Self {
        Self {
            grid,
            bits: vec![false; grid.len()],
            off_grid,
        }
    }

    pub fn filled(grid: GridSpec, value: bool, off_grid: bool) -> Self {
        Self {
            grid,
            bits: vec![value; grid.len()],
            off_grid,
        }
    }

    pub fn from_bits(grid: GridSpec, bits: Vec<bool>, off_grid: bool) -> Result<Self, GeometryError> {
        if bits.len() != grid.len() {
            return Err(GeometryError::InvalidGrid);
        }
        Ok(Self {
            grid,
            bits,
            off_grid,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn off_grid_value(&self) -> bool {
        self.off_grid
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[self.grid.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        let i = self.grid.index(row, col);
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Flips every cell and the off-grid value.
    pub fn complement(&self) -> RegionMask {
        RegionMask {
            grid: self.grid,
            bits: self.bits.iter().map(|b| !b).collect(),
            off_grid: !self.off_grid,
        }
    }

    pub fn union_with(&mut self, other: &RegionMask) {
        assert_eq!(self.grid, other.grid, "union of masks on different grids");
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
        self.off_grid |= other.off_grid;
    }

    pub fn contains(&self, p: Point) -> bool {
        point_in_mask(p, self)
    }
}

/// True when the cell holding `p` is set. Points off the grid report the
/// mask's off-grid value: set for undrivable masks, clear for obstacle masks.
pub fn point_in_mask(p: Point, m: &RegionMask) -> bool {
    match m.grid.cell_of(p) {
        Some((r, c)) => m.get(r, c),
        None => m.off_grid,
    }
}

/// Sets every cell whose center lies in (or on the boundary of) any polygon.
pub fn rasterize(polys: &[ConvexPolygon], g: &GridSpec) -> RegionMask {
    let mut mask = RegionMask::new(*g, false);
    for poly in polys {
        rasterize_into(poly, &mut mask);
    }
    mask
}

fn rasterize_into(poly: &ConvexPolygon, mask: &mut RegionMask) {
    let g = mask.grid;
    let (lo, hi) = poly.bounds();
    let to_col = |x: f64| ((x - g.origin_x) / g.resolution - 0.5).floor();
    let to_row = |y: f64| ((y - g.origin_y) / g.resolution - 0.5).floor();
    let c0 = to_col(lo.x).max(0.0) as usize;
    let c1 = (to_col(hi.x) + 1.0).min(g.cols as f64 - 1.0);
    let r0 = to_row(lo.y).max(0.0) as usize;
    let r1 = (to_row(hi.y) + 1.0).min(g.rows as f64 - 1.0);
    if c1 < 0.0 || r1 < 0.0 {
        return;
    }
    for r in r0..=r1 as usize {
        for c in c0..=c1 as usize {
            if !mask.get(r, c) && poly.contains(g.center_of(r, c)) {
                mask.set(r, c, true);
            }
        }
    }
}

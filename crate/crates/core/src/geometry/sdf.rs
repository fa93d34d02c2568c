use super::{GridSpec, Point, RegionMask};

const FAR: f64 = 1e3;

/// Signed distance to a rasterized region, bilinearly interpolated between
/// cell centers: negative inside, positive outside, zero halfway between a
/// set cell and a clear one.
#[derive(Clone, Debug)]
pub struct SignedDistanceField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl SignedDistanceField {
    pub fn from_mask(mask: &RegionMask) -> Self {
        let g = *mask.grid();
        let inside: Vec<bool> = mask.bits().to_vec();
        let outside: Vec<bool> = inside.iter().map(|b| !b).collect();
        let to_inside = distance_transform(&inside, g.rows, g.cols);
        let to_outside = distance_transform(&outside, g.rows, g.cols);
        let half = 0.5;
        let values = inside
            .iter()
            .enumerate()
            .map(|(i, &is_in)| {
                let d = if is_in {
                    -(to_outside[i] - half)
                } else {
                    to_inside[i] - half
                };
                (d * g.resolution).clamp(-FAR, FAR)
            })
            .collect();
        Self { grid: g, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn at_cell(&self, row: usize, col: usize) -> f64 {
        self.values[self.grid.index(row, col)]
    }

    /// Value and spatial gradient at `p`. Off the grid the field continues as
    /// the border value plus the distance to the grid's center lattice.
    pub fn eval(&self, p: Point) -> (f64, Point) {
        let g = &self.grid;
        let u = (p.x - g.origin_x) / g.resolution - 0.5;
        let v = (p.y - g.origin_y) / g.resolution - 0.5;
        let (uc, du_out) = clamp_axis(u, g.cols);
        let (vc, dv_out) = clamp_axis(v, g.rows);

        let (c0, fu) = split(uc, g.cols);
        let (r0, fv) = split(vc, g.rows);
        let c1 = (c0 + 1).min(g.cols - 1);
        let r1 = (r0 + 1).min(g.rows - 1);
        let f00 = self.at_cell(r0, c0);
        let f01 = self.at_cell(r0, c1);
        let f10 = self.at_cell(r1, c0);
        let f11 = self.at_cell(r1, c1);
        let val = (1.0 - fv) * ((1.0 - fu) * f00 + fu * f01) + fv * ((1.0 - fu) * f10 + fu * f11);
        let mut gx = ((1.0 - fv) * (f01 - f00) + fv * (f11 - f10)) / g.resolution;
        let mut gy = ((1.0 - fu) * (f10 - f00) + fu * (f11 - f01)) / g.resolution;
        if du_out != 0.0 {
            gx = 0.0;
        }
        if dv_out != 0.0 {
            gy = 0.0;
        }

        let out = Point::new(du_out * g.resolution, dv_out * g.resolution);
        let dist = out.norm();
        if dist > 0.0 {
            gx += out.x / dist;
            gy += out.y / dist;
        }
        (val + dist, Point::new(gx, gy))
    }
}

fn clamp_axis(u: f64, n: usize) -> (f64, f64) {
    let hi = (n - 1) as f64;
    if u < 0.0 {
        (0.0, u)
    } else if u > hi {
        (hi, u - hi)
    } else {
        (u, 0.0)
    }
}

fn split(u: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

/// Euclidean distance (in cells) from every cell center to the nearest
/// feature cell, via the separable lower-envelope transform of
/// Felzenszwalb and Huttenlocher.
fn distance_transform(feature: &[bool], rows: usize, cols: usize) -> Vec<f64> {
    let inf = 1e20;
    if !feature.iter().any(|&b| b) {
        return vec![FAR * 1e3; feature.len()];
    }
    let mut sq: Vec<f64> = feature.iter().map(|&b| if b { 0.0 } else { inf }).collect();
    let mut buf = vec![0.0; rows.max(cols)];
    for c in 0..cols {
        let col: Vec<f64> = (0..rows).map(|r| sq[r * cols + c]).collect();
        edt_1d(&col, &mut buf[..rows]);
        for r in 0..rows {
            sq[r * cols + c] = buf[r];
        }
    }
    for r in 0..rows {
        let row = sq[r * cols..(r + 1) * cols].to_vec();
        edt_1d(&row, &mut buf[..cols]);
        sq[r * cols..(r + 1) * cols].copy_from_slice(&buf[..cols]);
    }
    sq.into_iter().map(f64::sqrt).collect()
}

fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: replace the only parabola
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

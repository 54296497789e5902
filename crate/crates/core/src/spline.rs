//! Natural cubic spline on the uniform space grid, used to evaluate a density
//! at points shifted by the common factor.

use crate::discretization::SpaceGrid;
use crate::error::Result;
use crate::linalg::TridiagLu;

/// Spline solver for one grid: the knots are all `d + 2` nodes, the end
/// values are zero and the end second derivatives vanish.
#[derive(Debug, Clone)]
pub struct SplineShifter {
    grid: SpaceGrid,
    lu: TridiagLu,
}

impl SplineShifter {
    pub fn new(grid: &SpaceGrid) -> Result<Self> {
        let d = grid.d();
        let lu = TridiagLu::factor(&vec![1.0; d], &vec![4.0; d], &vec![1.0; d])?;
        Ok(SplineShifter { grid: *grid, lu })
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    /// Second derivatives at the interior knots; `curv` must have length `d`.
    fn curvature(&self, u: &[f64], curv: &mut [f64]) {
        let d = self.grid.d();
        let h = self.grid.dx();
        let c = 6.0 / (h * h);
        for i in 0..d {
            let left = if i == 0 { 0.0 } else { u[i - 1] };
            let right = if i + 1 == d { 0.0 } else { u[i + 1] };
            curv[i] = c * (left - 2.0 * u[i] + right);
        }
        self.lu.solve_in_place(curv);
    }

    /// Writes `S(x_i - shift)` for every interior node into `out`; points
    /// outside `[a, b]` get zero. `work` is scratch of length `d`.
    pub fn shift_into(&self, u: &[f64], shift: f64, out: &mut [f64], work: &mut [f64]) {
        let d = self.grid.d();
        debug_assert_eq!(u.len(), d);
        if shift == 0.0 {
            out.copy_from_slice(u);
            return;
        }
        self.curvature(u, work);
        let h = self.grid.dx();
        // x_i - shift = x_{i - q} + t h with integer q and t in [0, 1)
        let s = shift / h;
        let fl = s.ceil();
        let q = fl as i64;
        let t = fl - s;
        let (w0, w1) = (1.0 - t, t);
        let c = h * h / 6.0;
        let (c0, c1) = (c * (w0 * w0 * w0 - w0), c * (w1 * w1 * w1 - w1));
        // node values / curvatures over the full index range 0..=d+1
        let y = |j: i64| -> f64 {
            if j >= 1 && j <= d as i64 {
                u[(j - 1) as usize]
            } else {
                0.0
            }
        };
        let m = |j: i64, work: &[f64]| -> f64 {
            if j >= 1 && j <= d as i64 {
                work[(j - 1) as usize]
            } else {
                0.0
            }
        };
        let last = d as i64 + 1;
        for (k, o) in out.iter_mut().enumerate() {
            let j = k as i64 + 1 - q;
            // interval [x_j, x_{j+1}] must lie in [x_0, x_{d+1}]
            *o = if j < 0 || j >= last {
                0.0
            } else if t == 0.0 {
                y(j)
            } else {
                w0 * y(j) + w1 * y(j + 1) + c0 * m(j, work) + c1 * m(j + 1, work)
            };
        }
    }

    /// [`shift_into`](Self::shift_into) for every vector of a path-major
    /// block, in place, path `j` moving by `shifts[j]`. The curvature solves
    /// run node-major across the block; results are bitwise those of
    /// `shift_into`.
    pub fn shift_block(&self, block: &mut [f64], shifts: &[f64], scratch: &mut ShiftScratch) {
        let d = self.grid.d();
        let k = shifts.len();
        debug_assert_eq!(block.len(), d * k);
        let h = self.grid.dx();
        let c = 6.0 / (h * h);
        scratch.curv.resize(d * k, 0.0);
        scratch.y.resize(d + 2, 0.0);
        scratch.m.resize(d + 2, 0.0);
        let curv = &mut scratch.curv[..d * k];
        for (j, u) in block.chunks(d).enumerate() {
            for i in 0..d {
                let left = if i == 0 { 0.0 } else { u[i - 1] };
                let right = if i + 1 == d { 0.0 } else { u[i + 1] };
                curv[i * k + j] = c * (left - 2.0 * u[i] + right);
            }
        }
        self.lu.solve_interleaved(k, curv);
        let (y, m) = (&mut scratch.y, &mut scratch.m);
        for (j, (u, &shift)) in block.chunks_mut(d).zip(shifts).enumerate() {
            if shift == 0.0 {
                continue;
            }
            y[1..=d].copy_from_slice(u);
            for i in 0..d {
                m[i + 1] = curv[i * k + j];
            }
            let s = shift / h;
            let fl = s.ceil();
            let q = fl as i64;
            let t = fl - s;
            let (w0, w1) = (1.0 - t, t);
            let cc = h * h / 6.0;
            let (c0, c1) = (cc * (w0 * w0 * w0 - w0), cc * (w1 * w1 * w1 - w1));
            // node k reads knot interval j = k + 1 - q, valid for 0 <= j <= d
            let lo = (q - 1).clamp(0, d as i64) as usize;
            let hi = (d as i64 + q).clamp(0, d as i64) as usize;
            u[..lo].fill(0.0);
            u[hi..].fill(0.0);
            if lo < hi {
                let off = (lo as i64 + 1 - q) as usize;
                let n = hi - lo;
                if t == 0.0 {
                    u[lo..hi].copy_from_slice(&y[off..off + n]);
                } else {
                    let (y0, y1) = (&y[off..off + n], &y[off + 1..off + n + 1]);
                    let (m0, m1) = (&m[off..off + n], &m[off + 1..off + n + 1]);
                    for (i, o) in u[lo..hi].iter_mut().enumerate() {
                        *o = w0 * y0[i] + w1 * y1[i] + c0 * m0[i] + c1 * m1[i];
                    }
                }
            }
        }
    }

    pub fn shift(&self, u: &[f64], shift: f64) -> Vec<f64> {
        let d = self.grid.d();
        let mut out = vec![0.0; d];
        let mut work = vec![0.0; d];
        self.shift_into(u, shift, &mut out, &mut work);
        out
    }
}

/// Reusable buffers for [`SplineShifter::shift_block`].
#[derive(Debug, Clone, Default)]
pub struct ShiftScratch {
    curv: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

/// Natural cubic spline of `u` (zero end values) sampled at `x_i - shift`.
pub fn spline_shift(u: &[f64], grid: &SpaceGrid, shift: f64) -> Result<Vec<f64>> {
    Ok(SplineShifter::new(grid)?.shift(u, shift))
}

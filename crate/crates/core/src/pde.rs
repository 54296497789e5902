//! Shifted-PDE formulation: between resettlement dates the density solves the
//! deterministic equation `u_t = C u` and is then evaluated at points shifted
//! by `sqrt(rho) * dM`. Two propagators for `C` are provided: the theta
//! scheme (with Rannacher start-up) and the exact exponential.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DMatrixView};

use crate::discretization::{mass, DensityEnsemble, SpaceGrid};
use crate::driver::CommonFactorDriver;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{expm_dense, TridiagLu, TridiagOperator};
use crate::spline::{ShiftScratch, SplineShifter};

/// Paths per dense block in the exponential scheme.
const DM_BLOCK: usize = 64;

/// One theta step `(I - theta C dt) u' = (I + (1 - theta) C dt) u`.
#[derive(Debug, Clone)]
pub struct ThetaSolverPlan {
    theta: f64,
    dt: f64,
    lhs: TridiagOperator,
    lhs_lu: TridiagLu,
    rhs: TridiagOperator,
}

impl ThetaSolverPlan {
    pub fn new(c: &TridiagOperator, theta: f64, dt: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!("theta must lie in [0, 1], got {theta}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        let id = TridiagOperator::identity(c.d);
        let lhs = id.add(&c.scale(-theta * dt));
        let rhs = id.add(&c.scale((1.0 - theta) * dt));
        let lhs_lu = TridiagLu::factor_toeplitz(&lhs)?;
        Ok(ThetaSolverPlan {
            theta,
            dt,
            lhs,
            lhs_lu,
            rhs,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `I - theta C dt`.
    pub fn lhs(&self) -> &TridiagOperator {
        &self.lhs
    }

    /// `I + (1 - theta) C dt`.
    pub fn rhs(&self) -> &TridiagOperator {
        &self.rhs
    }
}

/// [`step_theta`] on `k` node-major interleaved vectors.
fn step_theta_interleaved(plan: &ThetaSolverPlan, k: usize, u: &mut [f64], scratch: &mut [f64]) {
    if plan.theta == 1.0 {
        plan.lhs_lu.solve_interleaved(k, u);
        return;
    }
    plan.rhs.apply_interleaved(k, u, scratch);
    plan.lhs_lu.solve_interleaved(k, scratch);
    u.copy_from_slice(scratch);
}

/// One theta step in place; `scratch` has the length of `u`.
pub fn step_theta(plan: &ThetaSolverPlan, u: &mut [f64], scratch: &mut [f64]) {
    if plan.theta == 1.0 {
        plan.lhs_lu.solve_in_place(u);
        return;
    }
    plan.rhs.apply(u, scratch);
    plan.lhs_lu.solve_in_place(scratch);
    u.copy_from_slice(scratch);
}

/// Theta integration over one period: `points - 1` steps, the first
/// `startup_half_steps / 2` of which are replaced by implicit Euler half
/// steps.
#[derive(Debug, Clone)]
pub struct ThetaQuarter {
    main: ThetaSolverPlan,
    startup: Option<ThetaSolverPlan>,
    steps: usize,
    startup_half_steps: usize,
}

impl ThetaQuarter {
    pub fn new(c: &TridiagOperator, period: f64, points: usize, theta: f64, startup_half_steps: usize) -> Result<Self> {
        let steps = points.checked_sub(1).filter(|s| *s > 0).ok_or_else(|| Error::invalid("theta scheme needs at least 2 points per period"))?;
        if !startup_half_steps.is_multiple_of(2) || startup_half_steps > 2 * steps {
            return Err(Error::invalid(format!(
                "Rannacher start-up needs an even number of half steps not exceeding {}, got {startup_half_steps}",
                2 * steps
            )));
        }
        let dt = period / steps as f64;
        let main = ThetaSolverPlan::new(c, theta, dt)?;
        let startup = if startup_half_steps > 0 {
            Some(ThetaSolverPlan::new(c, 1.0, 0.5 * dt)?)
        } else {
            None
        };
        Ok(ThetaQuarter {
            main,
            startup,
            steps,
            startup_half_steps,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn evolve(&self, u: &mut [f64], scratch: &mut [f64]) {
        if let Some(s) = &self.startup {
            for _ in 0..self.startup_half_steps {
                step_theta(s, u, scratch);
            }
        }
        for _ in self.startup_half_steps / 2..self.steps {
            step_theta(&self.main, u, scratch);
        }
    }

    /// [`evolve`](Self::evolve) on a path-major block of `k` vectors of
    /// length `d`. The solves run node-major across the block so the
    /// recurrences vectorize over paths; results are bitwise those of
    /// `evolve`. `work` and `scratch` hold `d * k` values each.
    pub fn evolve_block(&self, d: usize, block: &mut [f64], work: &mut [f64], scratch: &mut [f64]) {
        let k = block.len() / d;
        let (work, scratch) = (&mut work[..d * k], &mut scratch[..d * k]);
        for (j, u) in block.chunks(d).enumerate() {
            for (i, x) in u.iter().enumerate() {
                work[i * k + j] = *x;
            }
        }
        if let Some(s) = &self.startup {
            for _ in 0..self.startup_half_steps {
                step_theta_interleaved(s, k, work, scratch);
            }
        }
        for _ in self.startup_half_steps / 2..self.steps {
            step_theta_interleaved(&self.main, k, work, scratch);
        }
        for (j, u) in block.chunks_mut(d).enumerate() {
            for (i, x) in u.iter_mut().enumerate() {
                *x = work[i * k + j];
            }
        }
    }
}

/// Rows per tile in [`Propagator::apply_block`].
const ROW_TILE: usize = 32;

/// Entries below this fraction of the largest one are left out of the
/// product; they are far below the rounding error of the dense sum.
const NEGLIGIBLE: f64 = 1.0 / (1u64 << 60) as f64;

/// Dense `exp(C delta)`.
#[derive(Debug, Clone)]
pub struct Propagator {
    matrix: DMatrix<f64>,
    delta: f64,
    /// `(first row, rows, first column, end column)` of each row tile;
    /// columns outside the range hold only negligible entries.
    tiles: Vec<(usize, usize, usize, usize)>,
}

impl Propagator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Applies the propagator to a path-major block of vectors. Leading
    /// entries that are zero in every vector (the truncated region below the
    /// barrier) and negligible matrix entries are skipped.
    pub fn apply_block(&self, block: &mut [f64]) {
        let d = self.dim();
        let k = block.len() / d;
        let z = block.chunks(d).map(|u| u.iter().take_while(|x| **x == 0.0).count()).min().unwrap_or(0);
        if z == d {
            return;
        }
        let view = DMatrixView::from_slice(block, d, k);
        let mut out = DMatrix::<f64>::zeros(d, k);
        for &(r0, rows, c0, c1) in &self.tiles {
            let c0 = c0.max(z);
            if c0 >= c1 {
                continue;
            }
            out.rows_mut(r0, rows).gemm(1.0, &self.matrix.view((r0, c0), (rows, c1 - c0)), &view.rows(c0, c1 - c0), 0.0);
        }
        block.copy_from_slice(out.as_slice());
    }
}

fn row_tiles(m: &DMatrix<f64>) -> Vec<(usize, usize, usize, usize)> {
    let d = m.nrows();
    let cut = NEGLIGIBLE * m.amax();
    (0..d)
        .step_by(ROW_TILE)
        .map(|r0| {
            let rows = ROW_TILE.min(d - r0);
            let live = |j: usize| (r0..r0 + rows).any(|i| m[(i, j)].abs() > cut);
            let c0 = (0..d).find(|&j| live(j)).unwrap_or(d);
            let c1 = (0..d).rev().find(|&j| live(j)).map_or(c0, |j| j + 1);
            (r0, rows, c0, c1)
        })
        .collect()
}

pub fn build_propagator(c: &TridiagOperator, delta: f64) -> Result<Propagator> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("propagator length must be positive, got {delta}")));
    }
    let matrix = expm_dense(&(c.to_dense() * delta))?;
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("propagator has non-finite entries"));
    }
    let tiles = row_tiles(&matrix);
    Ok(Propagator { matrix, delta, tiles })
}

type PropagatorKey = (usize, u64, u64, u64, u64);

/// Propagators kept before the oldest is evicted; calibration visits a new
/// operator on every evaluation.
pub const CACHE_CAPACITY: usize = 8;

/// Memoizes [`build_propagator`] per `(C, delta)` and counts actual builds.
#[derive(Debug, Default)]
pub struct PropagatorCache {
    entries: Mutex<Vec<(PropagatorKey, Arc<Propagator>)>>,
    builds: AtomicUsize,
}

impl PropagatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, c: &TridiagOperator, delta: f64) -> Result<Arc<Propagator>> {
        let key = (c.d, c.sub.to_bits(), c.diag.to_bits(), c.sup.to_bits(), delta.to_bits());
        let mut entries = self.entries.lock().expect("propagator cache poisoned");
        if let Some((_, p)) = entries.iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(build_propagator(c, delta)?);
        self.builds.fetch_add(1, Ordering::Relaxed);
        if entries.len() == CACHE_CAPACITY {
            entries.remove(0);
        }
        entries.push((key, Arc::clone(&p)));
        Ok(p)
    }

    pub fn builds(&self) -> usize {
        self.builds.load(Ordering::Relaxed)
    }
}

/// How `u_t = C u` is advanced over one period.
#[derive(Debug, Clone)]
pub enum PdePropagation {
    Theta(Box<ThetaQuarter>),
    Exponential(Arc<Propagator>),
}

/// Shift statistics of one period.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShiftDiagnostics {
    pub max_abs_shift: f64,
    /// Paths shifted by more than half the grid width.
    pub far_shifts: usize,
    /// Mass removed by zero extrapolation on those paths, summed.
    pub far_mass_lost: f64,
}

impl ShiftDiagnostics {
    pub fn merge(&mut self, other: &ShiftDiagnostics) {
        self.max_abs_shift = self.max_abs_shift.max(other.max_abs_shift);
        self.far_shifts += other.far_shifts;
        self.far_mass_lost += other.far_mass_lost;
    }
}

/// Advances every path of `ensemble` by one period: propagate with `C`, then
/// evaluate at `x - sqrt(rho) dM` by spline.
pub fn evolve_quarter_pde(
    ensemble: &mut DensityEnsemble,
    propagation: &PdePropagation,
    shifter: &SplineShifter,
    driver: &CommonFactorDriver,
    period: usize,
    sqrt_rho: f64,
    exec: Execution,
) -> Result<ShiftDiagnostics> {
    let d = ensemble.dim();
    let grid: SpaceGrid = *shifter.grid();
    if grid.d() != d {
        return Err(Error::invalid("spline grid does not match the ensemble"));
    }
    if ensemble.paths() != driver.paths() {
        return Err(Error::invalid("ensemble and driver path counts differ"));
    }
    if let PdePropagation::Exponential(p) = propagation {
        if p.dim() != d {
            return Err(Error::invalid("propagator dimension does not match the ensemble"));
        }
        if (p.delta() - driver.period_length()).abs() > 1e-12 * p.delta() {
            return Err(Error::invalid("propagator length differs from the period length"));
        }
    }
    let half_width = 0.5 * (grid.b() - grid.a());
    let parts = exec.try_map_chunks_mut(ensemble.as_mut_slice(), d * DM_BLOCK, |block_idx, block| -> Result<ShiftDiagnostics> {
        match propagation {
            PdePropagation::Theta(q) => {
                let mut a = vec![0.0; block.len()];
                let mut b = vec![0.0; block.len()];
                q.evolve_block(d, block, &mut a, &mut b);
            }
            PdePropagation::Exponential(p) => p.apply_block(block),
        }
        let k = block.len() / d;
        let shifts: Vec<f64> = (0..k).map(|j| sqrt_rho * driver.period_increment(block_idx * DM_BLOCK + j, period)).collect();
        let mut diag = ShiftDiagnostics::default();
        let mut far = Vec::new();
        for (j, (u, s)) in block.chunks(d).zip(&shifts).enumerate() {
            diag.max_abs_shift = diag.max_abs_shift.max(s.abs());
            if s.abs() > half_width {
                far.push((j, mass(u, &grid)));
            }
        }
        shifter.shift_block(block, &shifts, &mut ShiftScratch::default());
        for (j, before) in far {
            diag.far_shifts += 1;
            diag.far_mass_lost += before - mass(&block[j * d..(j + 1) * d], &grid);
        }
        if block.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("non-finite density after PDE step"));
        }
        Ok(diag)
    })?;
    let mut total = ShiftDiagnostics::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

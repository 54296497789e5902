use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::BandedMatrix;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dense matrix exponential by scaling and squaring with the degree-13 Padé
/// approximant.
pub fn expm_dense(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("matrix exponential of non-finite matrix"));
    }
    let norm = norm1(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    if s > 1000 {
        return Err(Error::numeric(format!("matrix exponential overflow: 1-norm {norm:e}")));
    }
    let a = a * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::numeric("singular Padé denominator in matrix exponential"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric(format!("matrix exponential overflow: 1-norm {norm:e}")));
    }
    Ok(r)
}

/// Work counters from one exponential action.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExpmActionStats {
    pub stages: usize,
    pub matvecs: usize,
    pub shifted_norm: f64,
}

// Per-stage norm bound; the Taylor tail at this radius falls below 2^-53 well
// inside MAX_TERMS.
const STAGE_NORM: f64 = 3.5;
const MAX_TERMS: usize = 60;
const TOL: f64 = 1.1102230246251565e-16;

/// `exp(y) v` without forming the exponential.
///
/// The diagonal mean `mu` is shifted out, the remainder is split into `s`
/// stages of norm at most 3.5, and each stage applies a truncated Taylor
/// series that stops once two consecutive terms are below unit roundoff
/// relative to the partial sum.
pub fn expm_action(y: &BandedMatrix, v: &mut [f64]) -> Result<ExpmActionStats> {
    let d = y.dim();
    assert_eq!(v.len(), d, "vector length mismatch");
    if !y.is_finite() {
        return Err(Error::numeric("exponential action of non-finite matrix"));
    }
    let mu = y.trace() / d as f64;
    let mut shifted = y.clone();
    shifted.shift_diagonal(-mu);
    let norm = shifted.norm1();
    let stages = if norm == 0.0 { 1 } else { (norm / STAGE_NORM).ceil() as usize };
    let scale = 1.0 / stages as f64;
    let eta = (mu * scale).exp();

    let mut term = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut stats = ExpmActionStats {
        stages,
        matvecs: 0,
        shifted_norm: norm,
    };
    for _ in 0..stages {
        term.copy_from_slice(v);
        let mut prev_norm = inf_norm(&term);
        let mut converged = norm == 0.0;
        for k in 1..=MAX_TERMS {
            if converged {
                break;
            }
            shifted.apply(&term, &mut next);
            stats.matvecs += 1;
            let c = scale / k as f64;
            let mut tnorm = 0.0f64;
            for (t, n) in term.iter_mut().zip(&next) {
                *t = c * n;
                tnorm = tnorm.max(t.abs());
            }
            let mut fnorm = 0.0f64;
            for (f, t) in v.iter_mut().zip(&term) {
                *f += t;
                fnorm = fnorm.max(f.abs());
            }
            if prev_norm + tnorm <= TOL * fnorm || (fnorm == 0.0 && tnorm == 0.0) {
                converged = true;
            }
            prev_norm = tnorm;
        }
        if !converged {
            return Err(Error::numeric(format!(
                "exponential action did not converge in {MAX_TERMS} terms (shifted 1-norm {norm:e}, {stages} stages)"
            )));
        }
        for f in v.iter_mut() {
            *f *= eta;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("exponential action overflow (shifted 1-norm {norm:e})")));
        }
    }
    Ok(stats)
}

/// [`expm_action`] over a column-major batch of vectors of length `y.dim()`.
pub fn expm_action_batch(y: &BandedMatrix, batch: &mut [f64]) -> Result<ExpmActionStats> {
    let d = y.dim();
    assert_eq!(batch.len() % d, 0, "batch is not a whole number of columns");
    let mut total = ExpmActionStats::default();
    for col in batch.chunks_mut(d) {
        let s = expm_action(y, col)?;
        total.stages = s.stages;
        total.shifted_norm = s.shifted_norm;
        total.matvecs += s.matvecs;
    }
    Ok(total)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

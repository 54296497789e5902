use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::BandedMatrix;

/// `d x d` tridiagonal Toeplitz matrix `tridiag(sub, diag, sup)`. Rows at the
/// ends simply drop the out-of-range neighbour (zero Dirichlet data).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TridiagOperator {
    pub d: usize,
    pub sub: f64,
    pub diag: f64,
    pub sup: f64,
}

impl TridiagOperator {
    pub fn new(d: usize, sub: f64, diag: f64, sup: f64) -> Self {
        TridiagOperator { d, sub, diag, sup }
    }

    pub fn zero(d: usize) -> Self {
        Self::new(d, 0.0, 0.0, 0.0)
    }

    pub fn identity(d: usize) -> Self {
        Self::new(d, 0.0, 1.0, 0.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.d, self.sub * s, self.diag * s, self.sup * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d, "dimension mismatch");
        Self::new(self.d, self.sub + other.sub, self.diag + other.diag, self.sup + other.sup)
    }

    pub fn is_zero(&self) -> bool {
        self.sub == 0.0 && self.diag == 0.0 && self.sup == 0.0
    }

    /// `out = self * v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let d = self.d;
        debug_assert_eq!(v.len(), d);
        debug_assert_eq!(out.len(), d);
        if d == 1 {
            out[0] = self.diag * v[0];
            return;
        }
        out[0] = self.diag * v[0] + self.sup * v[1];
        for i in 1..d - 1 {
            out[i] = self.sub * v[i - 1] + self.diag * v[i] + self.sup * v[i + 1];
        }
        out[d - 1] = self.sub * v[d - 2] + self.diag * v[d - 1];
    }

    /// [`apply`](Self::apply) on `k` interleaved vectors, `v[i * k + j]`
    /// being entry `i` of vector `j`. Bitwise equal to applying each vector
    /// on its own.
    pub fn apply_interleaved(&self, k: usize, v: &[f64], out: &mut [f64]) {
        let d = self.d;
        debug_assert_eq!(v.len(), d * k);
        debug_assert_eq!(out.len(), d * k);
        if d == 1 {
            for (o, x) in out.iter_mut().zip(v) {
                *o = self.diag * x;
            }
            return;
        }
        let (a, b, c) = (self.sub, self.diag, self.sup);
        for j in 0..k {
            out[j] = b * v[j] + c * v[k + j];
        }
        for i in 1..d - 1 {
            let (prev, rest) = v[(i - 1) * k..(i + 2) * k].split_at(k);
            let (cur, next) = rest.split_at(k);
            for (j, o) in out[i * k..(i + 1) * k].iter_mut().enumerate() {
                *o = a * prev[j] + b * cur[j] + c * next[j];
            }
        }
        for j in 0..k {
            out[(d - 1) * k + j] = a * v[(d - 2) * k + j] + b * v[(d - 1) * k + j];
        }
    }

    /// `out += s * self * v`.
    pub fn apply_add(&self, s: f64, v: &[f64], out: &mut [f64]) {
        let d = self.d;
        if d == 1 {
            out[0] += s * self.diag * v[0];
            return;
        }
        let (a, b, c) = (s * self.sub, s * self.diag, s * self.sup);
        out[0] += b * v[0] + c * v[1];
        for i in 1..d - 1 {
            out[i] += a * v[i - 1] + b * v[i] + c * v[i + 1];
        }
        out[d - 1] += a * v[d - 2] + b * v[d - 1];
    }

    pub fn to_banded(&self) -> BandedMatrix {
        let mut m = BandedMatrix::zeros(self.d, 1);
        for i in 0..self.d {
            if i > 0 {
                m.set(i, i - 1, self.sub);
            }
            m.set(i, i, self.diag);
            if i + 1 < self.d {
                m.set(i, i + 1, self.sup);
            }
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.to_banded().to_dense()
    }
}

/// LU factorization of a general tridiagonal matrix without pivoting
/// (Thomas algorithm with the eliminations precomputed).
#[derive(Debug, Clone)]
pub struct TridiagLu {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagLu {
    /// Factors `tridiag(sub, diag, sup)` given as full bands of length `d`
    /// (`sub[0]` and `sup[d-1]` are ignored).
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut lower = vec![0.0; d];
        let mut inv_pivot = vec![0.0; d];
        let mut pivot = diag[0];
        for i in 0..d {
            if i > 0 {
                let l = sub[i] / pivot;
                lower[i] = l;
                pivot = diag[i] - l * sup[i - 1];
            }
            if !pivot.is_finite() || pivot.abs() < 1e-300 {
                return Err(Error::numeric(format!("singular tridiagonal factorization at row {i}")));
            }
            inv_pivot[i] = 1.0 / pivot;
        }
        Ok(TridiagLu {
            lower,
            inv_pivot,
            upper: sup.to_vec(),
        })
    }

    pub fn factor_toeplitz(op: &TridiagOperator) -> Result<Self> {
        let d = op.d;
        Self::factor(&vec![op.sub; d], &vec![op.diag; d], &vec![op.sup; d])
    }

    pub fn dim(&self) -> usize {
        self.inv_pivot.len()
    }

    /// Solves in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        for i in 1..d {
            x[i] -= self.lower[i] * x[i - 1];
        }
        x[d - 1] *= self.inv_pivot[d - 1];
        for i in (0..d - 1).rev() {
            x[i] = (x[i] - self.upper[i] * x[i + 1]) * self.inv_pivot[i];
        }
    }

    /// [`solve_in_place`](Self::solve_in_place) on `k` interleaved
    /// right-hand sides; bitwise equal to solving each on its own.
    pub fn solve_interleaved(&self, k: usize, x: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d * k);
        for i in 1..d {
            let l = self.lower[i];
            let (prev, cur) = x[(i - 1) * k..(i + 1) * k].split_at_mut(k);
            for (c, p) in cur.iter_mut().zip(prev.iter()) {
                *c -= l * p;
            }
        }
        let ip = self.inv_pivot[d - 1];
        for v in x[(d - 1) * k..].iter_mut() {
            *v *= ip;
        }
        for i in (0..d - 1).rev() {
            let (u, ip) = (self.upper[i], self.inv_pivot[i]);
            let (cur, next) = x[i * k..(i + 2) * k].split_at_mut(k);
            for (c, n) in cur.iter_mut().zip(next.iter()) {
                *c = (*c - u * n) * ip;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn apply_matches_dense() {
        let op = TridiagOperator::new(7, 0.3, -1.1, 2.0);
        let v: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let mut out = vec![0.0; 7];
        op.apply(&v, &mut out);
        let dense = op.to_dense() * DVector::from_vec(v.clone());
        for i in 0..7 {
            assert!((out[i] - dense[i]).abs() < 1e-14);
        }
        let mut acc = vec![1.0; 7];
        op.apply_add(2.0, &v, &mut acc);
        for i in 0..7 {
            assert!((acc[i] - 1.0 - 2.0 * dense[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn lu_reconstructs_and_solves() {
        let d = 9;
        let op = TridiagOperator::new(d, -0.4, 2.2, -0.7);
        let lu = TridiagLu::factor_toeplitz(&op).unwrap();
        let b: Vec<f64> = (0..d).map(|i| 1.0 + i as f64).collect();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let mut back = vec![0.0; d];
        op.apply(&x, &mut back);
        for i in 0..d {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn interleaved_matches_per_vector_bitwise() {
        let (d, k) = (11, 5);
        let op = TridiagOperator::new(d, -0.37, 2.1, -0.91);
        let lu = TridiagLu::factor_toeplitz(&op).unwrap();
        let vecs: Vec<Vec<f64>> = (0..k).map(|j| (0..d).map(|i| ((i * 7 + j * 3) as f64).sin()).collect()).collect();
        let mut inter = vec![0.0; d * k];
        for i in 0..d {
            for j in 0..k {
                inter[i * k + j] = vecs[j][i];
            }
        }
        let mut applied = vec![0.0; d * k];
        op.apply_interleaved(k, &inter, &mut applied);
        let mut solved = inter.clone();
        lu.solve_interleaved(k, &mut solved);
        for (j, v) in vecs.iter().enumerate() {
            let mut a = vec![0.0; d];
            op.apply(v, &mut a);
            let mut x = v.clone();
            lu.solve_in_place(&mut x);
            for i in 0..d {
                assert_eq!(applied[i * k + j].to_bits(), a[i].to_bits());
                assert_eq!(solved[i * k + j].to_bits(), x[i].to_bits());
            }
        }
    }

    #[test]
    fn singular_detected() {
        let op = TridiagOperator::new(4, 0.0, 0.0, 0.0);
        assert!(TridiagLu::factor_toeplitz(&op).is_err());
    }
}

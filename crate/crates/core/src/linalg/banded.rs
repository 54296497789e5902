use nalgebra::DMatrix;

/// Square band matrix with half-bandwidth `p`, stored row-wise as
/// `d x (2p+1)` with entry `(i, j)` at column `j + p - i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    d: usize,
    p: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(d: usize, p: usize) -> Self {
        BandedMatrix {
            d,
            p,
            data: vec![0.0; d * (2 * p + 1)],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, 0);
        m.data.fill(1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_bandwidth(&self) -> usize {
        self.p
    }

    #[inline]
    fn width(&self) -> usize {
        2 * self.p + 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.p {
            return 0.0;
        }
        self.data[i * self.width() + j + self.p - i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i.abs_diff(j) <= self.p, "({i},{j}) outside band {}", self.p);
        let w = self.width();
        self.data[i * w + j + self.p - i] = v;
    }

    /// Same matrix stored with a wider band.
    pub fn widen(&self, p: usize) -> Self {
        if p <= self.p {
            return self.clone();
        }
        let mut out = Self::zeros(self.d, p);
        for i in 0..self.d {
            for j in i.saturating_sub(self.p)..(i + self.p + 1).min(self.d) {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }

    /// `self + s * other`, on the wider of the two bands.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        assert_eq!(self.d, other.d, "dimension mismatch");
        let p = self.p.max(other.p);
        let mut out = self.widen(p);
        out.axpy(s, other);
        out
    }

    /// `self += s * other`; `other` must fit inside this band.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert!(other.p <= self.p && other.d == self.d);
        if other.p == self.p {
            for (a, b) in self.data.iter_mut().zip(&other.data) {
                *a += s * b;
            }
            return;
        }
        for i in 0..self.d {
            for j in i.saturating_sub(other.p)..(i + other.p + 1).min(self.d) {
                let v = self.get(i, j) + s * other.get(i, j);
                self.set(i, j, v);
            }
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        BandedMatrix {
            d: self.d,
            p: self.p,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// Matrix product; the band of the result is the sum of the bands.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d, "dimension mismatch");
        let d = self.d;
        let p = (self.p + other.p).min(d.saturating_sub(1));
        let mut out = Self::zeros(d, p);
        for i in 0..d {
            for k in i.saturating_sub(self.p)..(i + self.p + 1).min(d) {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in k.saturating_sub(other.p)..(k + other.p + 1).min(d) {
                    let w = out.width();
                    out.data[i * w + j + p - i] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// `[self, other] = self*other - other*self`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).add_scaled(-1.0, &other.mul(self))
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    /// Adds `s` to every diagonal entry.
    pub fn shift_diagonal(&mut self, s: f64) {
        for i in 0..self.d {
            let v = self.get(i, i) + s;
            self.set(i, i, v);
        }
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0f64; self.d];
        for i in 0..self.d {
            for j in i.saturating_sub(self.p)..(i + self.p + 1).min(self.d) {
                col[j] += self.get(i, j).abs();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `out = self * v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (d, p, w) = (self.d, self.p, self.width());
        debug_assert_eq!(v.len(), d);
        debug_assert_eq!(out.len(), d);
        for i in 0..d {
            let row = &self.data[i * w..(i + 1) * w];
            let lo = i.saturating_sub(p);
            let hi = (i + p + 1).min(d);
            let mut acc = 0.0;
            for j in lo..hi {
                acc += row[j + p - i] * v[j];
            }
            out[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.get(i, j))
    }

    /// Dense matrix restricted to band `p`; entries outside the band must be
    /// zero.
    pub fn from_dense(m: &DMatrix<f64>, p: usize) -> Self {
        let d = m.nrows();
        let mut out = Self::zeros(d, p);
        for i in 0..d {
            for j in 0..d {
                if i.abs_diff(j) <= p {
                    out.set(i, j, m[(i, j)]);
                } else {
                    debug_assert!(m[(i, j)] == 0.0, "entry ({i},{j}) outside band");
                }
            }
        }
        out
    }
}

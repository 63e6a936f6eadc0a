//! Symmetric banded matrices and a shifted Cholesky solve.

#[derive(Debug, Clone)]
pub(crate) struct Banded {
    n: usize,
    bw: usize,
    /// Row `i` stores `A[i][i−bw..=i]` at `data[i*(bw+1) + (bw − (i − j))]`.
    data: Vec<f64>,
}

impl Banded {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        Banded { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw - (i - j)
    }

    /// Adds `v` to `A[i][j]` (and implicitly `A[j][i]`); requires `|i − j| ≤ bw`.
    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub(crate) fn set_identity_row(&mut self, i: usize) {
        for j in i.saturating_sub(self.bw)..=i {
            let k = self.idx(i, j);
            self.data[k] = 0.0;
        }
        for r in i + 1..(i + self.bw + 1).min(self.n) {
            let k = self.idx(r, i);
            self.data[k] = 0.0;
        }
        let k = self.idx(i, i);
        self.data[k] = 1.0;
    }

    pub(crate) fn max_diag(&self) -> f64 {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).fold(0.0, f64::max)
    }

    #[cfg(test)]
    pub(crate) fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place Cholesky of `D A D + shift·I` with `D = diag(A)^{-1/2}`.
    fn factor_scaled(&self, scale: &[f64], shift: f64) -> Option<Banded> {
        let mut l = self.clone();
        let bw = self.bw;
        for i in 0..self.n {
            for j in i.saturating_sub(bw)..=i {
                let k = l.idx(i, j);
                l.data[k] *= scale[i] * scale[j];
            }
            let k = l.idx(i, i);
            l.data[k] += shift;
        }
        for j in 0..self.n {
            let lo = j.saturating_sub(bw);
            let mut d = l.data[l.idx(j, j)];
            for k in lo..j {
                let v = l.data[l.idx(j, k)];
                d -= v * v;
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            let kjj = l.idx(j, j);
            l.data[kjj] = d;
            for i in j + 1..(j + bw + 1).min(self.n) {
                let mut s = l.data[l.idx(i, j)];
                for k in i.saturating_sub(bw).max(lo)..j {
                    s -= l.data[l.idx(i, k)] * l.data[l.idx(j, k)];
                }
                let kij = l.idx(i, j);
                l.data[kij] = s / d;
            }
        }
        Some(l)
    }

    fn solve_factored(&self, b: &mut [f64]) {
        let bw = self.bw;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[self.idx(i, k)] * b[k];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(self.n) {
                s -= self.data[self.idx(k, i)] * b[k];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }

    /// Solves `(A + σ D⁻²) x = b` for the smallest shift `σ ≥ 0` from a
    /// geometric ladder that makes the scaled matrix positive definite.
    /// Returns the solution and the shift used.
    pub(crate) fn solve_regularized(&self, b: &[f64]) -> Option<(Vec<f64>, f64)> {
        let scale: Vec<f64> = (0..self.n)
            .map(|i| {
                let d = self.data[self.idx(i, i)];
                if d > 0.0 && d.is_finite() {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut shift = 0.0;
        for _ in 0..40 {
            if let Some(l) = self.factor_scaled(&scale, shift) {
                let mut y: Vec<f64> = b.iter().zip(&scale).map(|(b, s)| b * s).collect();
                l.solve_factored(&mut y);
                let x = y.iter().zip(&scale).map(|(y, s)| y * s).collect();
                return Some((x, shift));
            }
            shift = if shift == 0.0 { 1e-10 } else { shift * 10.0 };
        }
        None
    }
}

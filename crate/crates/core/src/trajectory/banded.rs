use nalgebra::Vector3;

/// Square band matrix with `kl` sub- and `ku` super-diagonals, factored in place
/// by Gaussian elimination with row pivoting restricted to the band.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major windows of width `2 * kl + ku + 1`; entry (i, j) lives at
    /// `i * width + (j + kl - i)`. The extra `kl` columns hold pivoting fill-in.
    data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    upper: BandedMatrix,
    /// `kl` multipliers per column.
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularMatrix {
    pub column: usize,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![0.0; n * (2 * kl + ku + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku, "({i}, {j}) outside band");
        i * self.width() + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = value;
    }

    pub fn factor(mut self) -> Result<BandedLu, SingularMatrix> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut lower = vec![0.0; n * kl];
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let p = (k..=last_row)
                .max_by(|&a, &b| self.get(a, k).abs().total_cmp(&self.get(b, k).abs()).then(b.cmp(&a)))
                .unwrap_or(k);
            pivots[k] = p;
            let pivot = self.get(p, k);
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(SingularMatrix { column: k });
            }
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            for i in k + 1..=last_row {
                let m = self.get(i, k) / pivot;
                lower[k * kl + (i - k - 1)] = m;
                if m != 0.0 {
                    for j in k + 1..=last_col {
                        let s = self.slot(i, j);
                        self.data[s] -= m * self.data[self.slot(k, j)];
                    }
                }
            }
        }
        Ok(BandedLu { upper: self, lower, pivots })
    }
}

impl BandedLu {
    pub fn dim(&self) -> usize {
        self.upper.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [Vector3<f64>]) {
        let BandedMatrix { n, kl, ku, .. } = self.upper;
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.pivots[k]);
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= bk * self.lower[k * kl + (i - k - 1)];
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= b[j] * self.upper.get(k, j);
            }
            b[k] = acc / self.upper.get(k, k);
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose(&self, b: &mut [Vector3<f64>]) {
        let BandedMatrix { n, kl, ku, .. } = self.upper;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let mut acc = b[k];
            for i in k.saturating_sub(kl + ku)..k {
                acc -= b[i] * self.upper.get(i, k);
            }
            b[k] = acc / self.upper.get(k, k);
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                acc -= b[i] * self.lower[k * kl + (i - k - 1)];
            }
            b[k] = acc;
            b.swap(k, self.pivots[k]);
        }
    }
}

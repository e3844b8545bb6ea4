/// Streaming covariance of `D` jointly observed variables.
///
/// Mergeable: splitting a stream anywhere and merging the parts gives the
/// same moments up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovAccumulator<const D: usize> {
    pub n: u64,
    pub mean: [f64; D],
    pub m2: [[f64; D]; D],
}

impl<const D: usize> Default for CovAccumulator<D> {
    fn default() -> Self {
        Self {
            n: 0,
            mean: [0.0; D],
            m2: [[0.0; D]; D],
        }
    }
}

impl<const D: usize> CovAccumulator<D> {
    pub fn push(&mut self, v: [f64; D]) {
        self.n += 1;
        let n = self.n as f64;
        let mut d = [0.0; D];
        for i in 0..D {
            d[i] = v[i] - self.mean[i];
            self.mean[i] += d[i] / n;
        }
        for i in 0..D {
            let after = v[i] - self.mean[i];
            for j in 0..D {
                self.m2[j][i] += d[j] * after;
            }
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let mut out = Self {
            n: self.n + other.n,
            ..Self::default()
        };
        let mut d = [0.0; D];
        for i in 0..D {
            d[i] = other.mean[i] - self.mean[i];
            out.mean[i] = self.mean[i] + d[i] * nb / n;
        }
        for i in 0..D {
            for j in 0..D {
                out.m2[i][j] = self.m2[i][j] + other.m2[i][j] + d[i] * d[j] * na * nb / n;
            }
        }
        out
    }

    /// Unbiased covariance; NaN with fewer than two observations.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.m2[i][j] / (self.n - 1) as f64
    }

    pub fn var(&self, i: usize) -> f64 {
        self.cov(i, i)
    }

    pub fn corr(&self, i: usize, j: usize) -> f64 {
        self.cov(i, j) / (self.var(i) * self.var(j)).sqrt()
    }
}

/// Pearson correlation of two equally long series.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = CovAccumulator::<2>::default();
    a.iter().zip(b).for_each(|(x, y)| acc.push([*x, *y]));
    acc.corr(0, 1)
}

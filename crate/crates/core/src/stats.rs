use crate::scalar::Scalar;

/// Mean and unbiased sample variance (Welford).
pub fn mean_variance<T: Scalar>(xs: &[T]) -> (T, T) {
    let mut acc = Welford::default();
    for &x in xs {
        acc.push(x);
    }
    (acc.mean(), acc.variance())
}

/// Mean and standard error of the mean.
pub fn mean_se<T: Scalar>(xs: &[T]) -> (T, T) {
    let (m, v) = mean_variance(xs);
    let n = T::from_usize_lossy(xs.len().max(1));
    (m, (v / n).sqrt())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Welford<T> {
    n: usize,
    mean: T,
    m2: T,
}

impl<T: Scalar> Welford<T> {
    #[inline]
    pub fn push(&mut self, x: T) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / T::from_usize_lossy(self.n);
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    /// Unbiased variance; zero with fewer than two observations.
    pub fn variance(&self) -> T {
        if self.n < 2 {
            T::zero()
        } else {
            self.m2 / T::from_usize_lossy(self.n - 1)
        }
    }

    pub fn std_err(&self) -> T {
        (self.variance() / T::from_usize_lossy(self.n.max(1))).sqrt()
    }
}

/// Centered moving average; the window is truncated at both ends.
pub fn moving_average<T: Scalar>(xs: &[T], window: usize) -> Vec<T> {
    let half = window / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(xs.len());
            xs[lo..hi].iter().copied().sum::<T>() / T::from_usize_lossy(hi - lo)
        })
        .collect()
}

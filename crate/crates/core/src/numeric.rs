//! Small numerical helpers shared across modules.

/// Neumaier-compensated accumulator.
///
/// Terms like `λ^{-2}(k)` span hundreds of orders of magnitude on ill-posed
/// spectra, so every sum over coordinates goes through this.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator of terms.
pub fn csum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    terms.into_iter().collect::<CompensatedSum>().value()
}

/// Euclidean norm computed with a max-abs rescaling so that entries near the
/// overflow threshold do not overflow when squared.
///
/// Returns `(norm, scale)` where `scale = max |v_k|`; `norm == 0` iff every
/// entry is zero.
pub fn scaled_norm(v: &[f64]) -> (f64, f64) {
    let (ss, scale) = scaled_sum_squares(v);
    (scale * ss.sqrt(), scale)
}

/// `(Σ (v/s)², s)` with `s = max |v|`; both zero for a zero vector.
pub fn scaled_sum_squares(v: &[f64]) -> (f64, f64) {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return (0.0, 0.0);
    }
    let ss = csum(v.iter().map(|x| {
        let r = x / scale;
        r * r
    }));
    (ss, scale)
}

/// Sample mean and standard error of the mean.
///
/// The standard error is zero for a single sample.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = csum(xs.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = csum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut terms = vec![1e16];
        terms.extend(std::iter::repeat_n(1.0, 1000));
        terms.push(-1e16);
        assert_eq!(csum(terms.iter().copied()), 1000.0);
        // naive summation loses every unit term
        assert_eq!(terms.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn scaled_norm_survives_huge_entries() {
        let v = [1e200, 1e200];
        let (norm, scale) = scaled_norm(&v);
        assert_eq!(scale, 1e200);
        assert!((norm / 1e200 - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(scaled_norm(&[0.0, 0.0]).0, 0.0);
    }

    #[test]
    fn mean_and_se_basic() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_se(&[7.0]), (7.0, 0.0));
    }
}

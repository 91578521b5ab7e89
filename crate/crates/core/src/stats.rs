//! Streaming moments, deterministic tree reduction and KS tests.

/// Running count, mean and sum of squared deviations (Welford).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Pairwise combination of two partial accumulators (Chan et al.).
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let (na, nb, nf) = (self.count as f64, other.count as f64, n as f64);
        let delta = other.mean - self.mean;
        Moments {
            count: n,
            mean: self.mean + delta * (nb / nf),
            m2: self.m2 + other.m2 + delta * delta * (na * nb / nf),
        }
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Merges per-block accumulators with a fixed binary-tree topology that
/// depends only on the number of blocks.
pub fn tree_merge(blocks: &[Moments]) -> Moments {
    match blocks.len() {
        0 => Moments::default(),
        1 => blocks[0],
        n => {
            let (l, r) = blocks.split_at(n / 2);
            tree_merge(l).merge(&tree_merge(r))
        }
    }
}

/// Element-wise [`tree_merge`] over vectors of accumulators.
pub fn tree_merge_vec(blocks: &[Vec<Moments>]) -> Vec<Moments> {
    match blocks.len() {
        0 => Vec::new(),
        1 => blocks[0].clone(),
        n => {
            let (l, r) = blocks.split_at(n / 2);
            let (a, b) = (tree_merge_vec(l), tree_merge_vec(r));
            a.iter().zip(&b).map(|(x, y)| x.merge(y)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{j−1} e^{−2j²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let s = effective_n.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs non-empty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    }
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> KsResult {
    assert!(!sample.is_empty(), "KS test needs a non-empty sample");
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::RandomStream;

    #[test]
    fn identical_values_have_zero_variance_exactly() {
        let blocks: Vec<Moments> = (0..7)
            .map(|k| std::iter::repeat(0.1 * 3.0).take(10 + k).collect())
            .collect();
        let m = tree_merge(&blocks);
        assert_eq!(m.mean, 0.1 * 3.0);
        assert_eq!(m.m2, 0.0);
        assert_eq!(m.stderr(), 0.0);
    }

    #[test]
    fn known_variance() {
        let m: Moments = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0].into_iter().collect();
        assert_eq!(m.mean, 5.0);
        assert!((m.variance() - 32.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // tabulated: Q(1.36) ≈ 0.0494, Q(1.63) ≈ 0.0098
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 3e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_accepts_same_distribution_and_rejects_shift() {
        let mut r = RandomStream::new(11, 0).rng();
        let a: Vec<f64> = (0..20_000).map(|_| r.uniform()).collect();
        let b: Vec<f64> = (0..20_000).map(|_| r.uniform()).collect();
        let c: Vec<f64> = (0..20_000).map(|_| r.uniform() + 0.03).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
        assert!(ks_two_sample(&a, &c).p_value < 1e-6);
        let one = ks_one_sample(&a, |x| x.clamp(0.0, 1.0));
        assert!(one.statistic < 0.015 && one.p_value > 0.01);
    }

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in prop::collection::vec(-1e3..1e3f64, 1..300), split in 0usize..300) {
            let split = split.min(xs.len());
            let all: Moments = xs.iter().copied().collect();
            let l: Moments = xs[..split].iter().copied().collect();
            let r: Moments = xs[split..].iter().copied().collect();
            let m = l.merge(&r);
            prop_assert_eq!(m.count, all.count);
            prop_assert!((m.mean - all.mean).abs() <= 1e-9 * (1.0 + all.mean.abs()));
            prop_assert!((m.m2 - all.m2).abs() <= 1e-8 * (1.0 + all.m2));
        }
    }
}

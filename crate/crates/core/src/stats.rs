//! Histograms and test statistics over detection records.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::bohm::DetectionRecord;
use crate::error::{Error, Result};
use crate::sampler::event_rng;

pub const DEFAULT_BINS: usize = 200;
/// Fraction of each time sample the default binning spans.
pub const DEFAULT_COVERAGE: f64 = 0.995;
/// Gaussian smoothing bandwidth for fringe extrema, in bins.
pub const SMOOTHING_BINS: f64 = 2.0;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

const DOMAIN_BOOTSTRAP: u64 = 0x626f_6f74;

/// Uniform bins on `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Binning {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        assert!(hi > lo && n > 0);
        Binning { lo, hi, n }
    }

    /// Bins spanning the central `coverage` fraction of `sample`.
    pub fn central(sample: &[f64], n: usize, coverage: f64) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample("binning"));
        }
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - coverage);
        let lo = quantile_sorted(&s, tail);
        let mut hi = quantile_sorted(&s, 1.0 - tail);
        if hi <= lo {
            hi = lo + lo.abs().max(1.0) * 1e-9;
        }
        Ok(Binning::new(lo, hi, n))
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            // the upper quantile itself belongs to the last bin
            return (x == self.hi).then_some(self.n - 1);
        }
        Some((((x - self.lo) / self.width()) as usize).min(self.n - 1))
    }

    pub fn left_edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.width()
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < s.len() {
        s[i] * (1.0 - f) + s[i + 1] * f
    } else {
        s[i]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub binning: Binning,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(binning: Binning) -> Self {
        Histogram {
            binning,
            counts: vec![0; binning.n],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn from_sample(sample: &[f64], binning: Binning) -> Self {
        let mut h = Histogram::new(binning);
        for &x in sample {
            h.add(x);
        }
        h
    }

    pub fn add(&mut self, x: f64) {
        match self.binning.index(x) {
            Some(i) => self.counts[i] += 1,
            None if x < self.binning.lo => self.underflow += 1,
            None => self.overflow += 1,
        }
    }

    /// Merge a partial histogram on the same bins.
    pub fn merge(&mut self, other: &Histogram) {
        assert_eq!(self.binning, other.binning);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Joint histogram of `(t_L, t_R)` over kept events.
#[derive(Clone, Debug, Serialize)]
pub struct JointDistribution {
    pub left: Binning,
    pub right: Binning,
    /// row-major, `counts[i * right.n + j]` for left bin `i`, right bin `j`
    pub counts: Vec<u64>,
    pub marginal_left: Vec<u64>,
    pub marginal_right: Vec<u64>,
    pub kept: usize,
    pub lost: usize,
    /// kept events outside the joint window
    pub outside: usize,
}

impl JointDistribution {
    pub fn build(records: &[DetectionRecord], n_bins: usize) -> Result<Self> {
        let (tl, tr) = kept_times(records);
        if tl.is_empty() {
            return Err(Error::NoEvents(format!(
                "0 kept events out of {}",
                records.len()
            )));
        }
        let left = Binning::central(&tl, n_bins, DEFAULT_COVERAGE)?;
        let right = Binning::central(&tr, n_bins, DEFAULT_COVERAGE)?;
        let mut j = Self::with_binning(&tl, &tr, left, right);
        j.lost = records.len() - tl.len();
        Ok(j)
    }

    pub fn with_binning(tl: &[f64], tr: &[f64], left: Binning, right: Binning) -> Self {
        let mut counts = vec![0u64; left.n * right.n];
        let mut outside = 0;
        for (a, b) in tl.iter().zip(tr) {
            match (left.index(*a), right.index(*b)) {
                (Some(i), Some(j)) => counts[i * right.n + j] += 1,
                _ => outside += 1,
            }
        }
        let marginal_left = (0..left.n)
            .map(|i| counts[i * right.n..(i + 1) * right.n].iter().sum())
            .collect();
        let marginal_right = (0..right.n)
            .map(|j| (0..left.n).map(|i| counts[i * right.n + j]).sum())
            .collect();
        JointDistribution {
            left,
            right,
            counts,
            marginal_left,
            marginal_right,
            kept: tl.len(),
            lost: 0,
            outside,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn marginal_right_histogram(&self) -> Histogram {
        Histogram {
            binning: self.right,
            counts: self.marginal_right.clone(),
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn marginal_left_histogram(&self) -> Histogram {
        Histogram {
            binning: self.left,
            counts: self.marginal_left.clone(),
            underflow: 0,
            overflow: 0,
        }
    }

    /// Histogram of `t_R` over events whose `t_L` falls in `[lo, hi)`.
    pub fn right_given_left(&self, lo: f64, hi: f64) -> Result<Histogram> {
        let mut h = Histogram::new(self.right);
        for i in 0..self.left.n {
            let c = self.left.left_edge(i) + 0.5 * self.left.width();
            if c >= lo && c < hi {
                for j in 0..self.right.n {
                    h.counts[j] += self.counts[i * self.right.n + j];
                }
            }
        }
        if h.total() == 0 {
            return Err(Error::EmptySample("conditioning slice"));
        }
        Ok(h)
    }

    /// `Σ |P(i,j) − P_L(i) P_R(j)|` over the window.
    pub fn factorization_l1(&self) -> f64 {
        let n = self.total() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mut l1 = 0.0;
        for i in 0..self.left.n {
            let pl = self.marginal_left[i] as f64 / n;
            for j in 0..self.right.n {
                let pr = self.marginal_right[j] as f64 / n;
                l1 += (self.counts[i * self.right.n + j] as f64 / n - pl * pr).abs();
            }
        }
        l1
    }
}

/// `(t_L, t_R)` of every kept record.
pub fn kept_times(records: &[DetectionRecord]) -> (Vec<f64>, Vec<f64>) {
    records
        .iter()
        .filter(|r| r.is_kept())
        .filter_map(|r| Some((r.t_left()?, r.t_right()?)))
        .unzip()
}

/// Dependence test: the observed factorization distance next to the same
/// distance for `replicates` permutations of `t_R` against `t_L`, which keep
/// both marginals but destroy any dependence.
#[derive(Clone, Debug, Serialize)]
pub struct FactorizationTest {
    pub l1: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    pub ratio: f64,
}

pub fn factorization_test(
    tl: &[f64],
    tr: &[f64],
    n_bins: usize,
    replicates: usize,
    seed: u64,
) -> Result<FactorizationTest> {
    let left = Binning::central(tl, n_bins, DEFAULT_COVERAGE)?;
    let right = Binning::central(tr, n_bins, DEFAULT_COVERAGE)?;
    let l1 = JointDistribution::with_binning(tl, tr, left, right).factorization_l1();
    let mut null = Vec::with_capacity(replicates);
    let mut shuffled = tr.to_vec();
    for k in 0..replicates {
        let mut rng = event_rng(seed, DOMAIN_BOOTSTRAP, k as u64);
        shuffled.shuffle(&mut rng);
        null.push(JointDistribution::with_binning(tl, &shuffled, left, right).factorization_l1());
    }
    let (mean, sd) = mean_sd(&null);
    Ok(FactorizationTest {
        l1,
        null_mean: mean,
        null_sd: sd,
        ratio: l1 / mean,
    })
}

pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v.sqrt())
}

/// Gaussian kernel smoothing with edge renormalization.
pub fn smooth(counts: &[f64], bandwidth: f64) -> Vec<f64> {
    if bandwidth <= 0.0 {
        return counts.to_vec();
    }
    let reach = (4.0 * bandwidth).ceil() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|d| (-0.5 * (d as f64 / bandwidth).powi(2)).exp())
        .collect();
    let n = counts.len() as isize;
    (0..n)
        .map(|i| {
            let (mut s, mut w) = (0.0, 0.0);
            for d in -reach..=reach {
                let j = i + d;
                if (0..n).contains(&j) {
                    let k = kernel[(d + reach) as usize];
                    s += k * counts[j as usize];
                    w += k;
                }
            }
            s / w
        })
        .collect()
}

/// Fringe visibility `(Ī_max − Ī_min) / (Ī_max + Ī_min)` from the local
/// extrema of the smoothed histogram inside `window` (bin indices).
pub fn visibility(counts: &[f64], window: std::ops::Range<usize>) -> Result<f64> {
    let s = smooth(counts, SMOOTHING_BINS);
    let w = &s[window.start.min(s.len())..window.end.min(s.len())];
    let peak = w.iter().cloned().fold(0.0, f64::max);
    let low = w.iter().cloned().fold(f64::INFINITY, f64::min);
    if w.is_empty() || peak - low <= 1e-12 * peak.abs().max(f64::MIN_POSITIVE) {
        return Ok(0.0);
    }
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for i in 1..w.len().saturating_sub(1) {
        if w[i] > w[i - 1] && w[i] >= w[i + 1] {
            maxima.push(w[i]);
        } else if w[i] < w[i - 1] && w[i] <= w[i + 1] {
            minima.push(w[i]);
        }
    }
    let found = maxima.len() + minima.len();
    if found < 3 || maxima.is_empty() || minima.is_empty() {
        return Err(Error::UndefinedVisibility { found });
    }
    let imax = maxima.iter().sum::<f64>() / maxima.len() as f64;
    let imin = minima.iter().sum::<f64>() / minima.len() as f64;
    Ok((imax - imin) / (imax + imin))
}

/// Bins holding the central `fraction` of the histogram's counts.
pub fn central_window(counts: &[f64], fraction: f64) -> std::ops::Range<usize> {
    let total: f64 = counts.iter().sum();
    let tail = 0.5 * (1.0 - fraction) * total;
    let mut acc = 0.0;
    let mut start = 0;
    for (i, c) in counts.iter().enumerate() {
        acc += c;
        if acc > tail {
            start = i;
            break;
        }
    }
    acc = 0.0;
    let mut end = counts.len();
    for (i, c) in counts.iter().enumerate().rev() {
        acc += c;
        if acc > tail {
            end = i + 1;
            break;
        }
    }
    start..end.max(start)
}

/// Fraction of counts the visibility window covers.
pub const VISIBILITY_WINDOW: f64 = 0.8;

pub fn histogram_visibility(h: &Histogram) -> Result<f64> {
    let c: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    let w = central_window(&c, VISIBILITY_WINDOW);
    visibility(&c, w)
}

/// Visibility of `Π(t_R | t_L ∈ [lo, hi))`.
pub fn conditional_visibility(joint: &JointDistribution, lo: f64, hi: f64) -> Result<f64> {
    histogram_visibility(&joint.right_given_left(lo, hi)?)
}

/// Count-weighted mean of the conditional visibility over the `n_slices`
/// most populated single left bins. Slices whose visibility is undefined
/// are skipped.
pub fn sliced_conditional_visibility(joint: &JointDistribution, n_slices: usize) -> Result<f64> {
    let mut order: Vec<usize> = (0..joint.left.n).collect();
    order.sort_by(|&a, &b| joint.marginal_left[b].cmp(&joint.marginal_left[a]).then(a.cmp(&b)));
    let (mut sum, mut weight) = (0.0, 0.0);
    let mut found = 0;
    for &i in order.iter().take(n_slices) {
        let lo = joint.left.left_edge(i);
        let Ok(v) = conditional_visibility(joint, lo, lo + joint.left.width()) else {
            continue;
        };
        let w = joint.marginal_left[i] as f64;
        sum += w * v;
        weight += w;
        found += 1;
    }
    if found == 0 {
        return Err(Error::UndefinedVisibility { found: 0 });
    }
    Ok(sum / weight)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// critical distance at α = 0.01
    pub critical: f64,
    pub reject: bool,
}

/// Asymptotic `c(α)` of the two-sample test at α = 0.01.
pub const KS_C_001: f64 = 1.628;

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() {
        return Err(Error::EmptySample("first KS sample"));
    }
    if b.is_empty() {
        return Err(Error::EmptySample("second KS sample"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let critical = KS_C_001 / ne.sqrt();
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        critical,
        reject: d > critical,
    })
}

/// `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Statistic of `B` resamples (with replacement) of the event indices.
pub fn bootstrap<F>(n: usize, resamples: usize, seed: u64, mut stat: F) -> Vec<f64>
where
    F: FnMut(&[usize]) -> f64,
{
    let mut idx = vec![0usize; n];
    (0..resamples)
        .map(|b| {
            let mut rng = event_rng(seed, DOMAIN_BOOTSTRAP ^ 1, b as u64);
            for v in idx.iter_mut() {
                *v = rng.gen_range(0..n);
            }
            stat(&idx)
        })
        .collect()
}

/// Percentile band of a bootstrap distribution.
pub fn band(values: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let mut s: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if s.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    s.sort_by(f64::total_cmp);
    (quantile_sorted(&s, lo), quantile_sorted(&s, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn binning_edges() {
        let b = Binning::new(0.0, 10.0, 5);
        assert_eq!(b.index(0.0), Some(0));
        assert_eq!(b.index(9.99), Some(4));
        assert_eq!(b.index(10.0), Some(4));
        assert_eq!(b.index(10.1), None);
        assert_eq!(b.index(-1e-9), None);
        assert_eq!(b.left_edge(2), 4.0);
    }

    #[test]
    fn constant_histogram_has_zero_visibility() {
        let c = vec![7.0; 100];
        assert_eq!(visibility(&c, 0..100).unwrap(), 0.0);
    }

    #[test]
    fn synthetic_fringes() {
        let n = 400;
        let full: Vec<f64> = (0..n)
            .map(|i| 1.0 + (2.0 * std::f64::consts::PI * i as f64 / 80.0).cos())
            .collect();
        let v = visibility(&full, 40..360).unwrap();
        assert!((v - 1.0).abs() <= 0.02, "{v}");
        let partial: Vec<f64> = (0..n)
            .map(|i| 0.5 + 0.25 * (2.0 * std::f64::consts::PI * i as f64 / 80.0).cos())
            .collect();
        let v = visibility(&partial, 40..360).unwrap();
        // (0.75 - 0.25) / (0.75 + 0.25)
        assert!((v - 0.5).abs() < 0.02, "{v}");
    }

    #[test]
    fn too_few_extrema_is_an_error() {
        let bump: Vec<f64> = (0..100).map(|i| (-((i as f64 - 50.0) / 10.0).powi(2)).exp()).collect();
        assert!(matches!(
            visibility(&bump, 0..100),
            Err(Error::UndefinedVisibility { found: 1 })
        ));
    }

    #[test]
    fn ks_limits() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        let b: Vec<f64> = (0..50).map(|i| 1000.0 + i as f64).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.reject);
        assert!(ks_two_sample(&a, &[]).is_err());
    }

    #[test]
    fn ks_detects_shift() {
        let mut rng = event_rng(1, 2, 3);
        let n0 = Normal::new(0.0, 1.0).unwrap();
        let n1 = Normal::new(0.5, 1.0).unwrap();
        let a: Vec<f64> = (0..10_000).map(|_| n0.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| n1.sample(&mut rng)).collect();
        let c: Vec<f64> = (0..10_000).map(|_| n0.sample(&mut rng)).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!(r.reject && r.p_value < 1e-10);
        let r = ks_two_sample(&a, &c).unwrap();
        assert!(!r.reject, "{r:?}");
    }

    #[test]
    fn joint_marginals_are_row_and_column_sums() {
        let mut rng = event_rng(4, 5, 6);
        let tl: Vec<f64> = (0..5000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let tr: Vec<f64> = tl.iter().map(|x| x + rng.gen_range(0.0..0.5)).collect();
        let j = JointDistribution::with_binning(&tl, &tr, Binning::new(0.0, 1.0, 20), Binning::new(0.0, 1.5, 30));
        assert_eq!(j.marginal_left.iter().sum::<u64>(), j.total());
        assert_eq!(j.marginal_right.iter().sum::<u64>(), j.total());
        assert_eq!(j.total() as usize + j.outside, 5000);
        let single = JointDistribution::with_binning(&[0.3], &[0.7], Binning::new(0.0, 1.0, 10), Binning::new(0.0, 1.0, 10));
        assert_eq!(single.counts.iter().filter(|&&c| c > 0).count(), 1);
    }

    #[test]
    fn factorization_separates_dependent_from_independent() {
        let mut rng = event_rng(7, 8, 9);
        let n = 20_000;
        let tl: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let indep: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let dep: Vec<f64> = tl.iter().map(|x| (x + rng.gen_range(0.0..0.2)) % 1.0).collect();
        let a = factorization_test(&tl, &indep, 20, 50, 1).unwrap();
        let b = factorization_test(&tl, &dep, 20, 50, 1).unwrap();
        assert!(a.ratio < 1.3, "{a:?}");
        assert!(b.ratio > 3.0, "{b:?}");
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(JointDistribution::build(&[], 10), Err(Error::NoEvents(_))));
        let j = JointDistribution::with_binning(&[0.5], &[0.5], Binning::new(0.0, 1.0, 4), Binning::new(0.0, 1.0, 4));
        assert!(j.right_given_left(2.0, 3.0).is_err());
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let mean = |idx: &[usize]| idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64;
        let a = bootstrap(100, 50, 3, mean);
        let b = bootstrap(100, 50, 3, mean);
        assert_eq!(a, b);
        let (lo, hi) = band(&a, 0.025, 0.975);
        assert!(lo < 49.5 && hi > 49.5);
    }
}

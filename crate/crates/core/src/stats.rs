//! Two-sample and k-sample tests plus kernel density estimation, for
//! checking latent components against outcome metadata.

use crate::error::{Error, Result};
use crate::special::{chi2_sf, f_sf, kolmogorov_q, student_t_sf_two_sided};

/// Labeled sample of metric values for one group of individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.is_empty() {
            return Err(Error::invalid(format!("group {label:?} has no values")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("group {label:?} contains non-finite values")));
        }
        Ok(SampleGroup { label, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    /// Sample variance (n-1 divisor); needs n >= 2.
    pub fn variance(&self) -> f64 {
        debug_assert!(self.n() >= 2);
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (self.n() - 1) as f64
    }
}

/// Degrees of freedom attached to a test statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreesOfFreedom {
    /// The statistic has no df (Kolmogorov-Smirnov).
    None,
    Single(f64),
    Pair(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    pub df: DegreesOfFreedom,
    pub p_value: f64,
    pub group_labels: Vec<String>,
    /// Set when the inputs made the statistic trivial (e.g. both groups
    /// constant with equal means): reported as no evidence, p = 1.
    pub degenerate: bool,
}

fn require_n(group: &SampleGroup, min: usize) -> Result<()> {
    if group.n() < min {
        return Err(Error::invalid(format!(
            "group {:?} needs at least {min} values, got {}",
            group.label,
            group.n()
        )));
    }
    Ok(())
}

/// Welch's unequal-variance t-test, two-sided, with Welch-Satterthwaite
/// degrees of freedom. Two constant groups with equal means are reported as
/// degenerate (t = 0, p = 1); with different means the statistic is
/// undefined and the call errors.
pub fn welch_t_test(a: &SampleGroup, b: &SampleGroup) -> Result<TestResult> {
    require_n(a, 2)?;
    require_n(b, 2)?;
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let (ma, mb) = (a.mean(), b.mean());
    let (va, vb) = (a.variance(), b.variance());
    let labels = vec![a.label.clone(), b.label.clone()];
    if va == 0.0 && vb == 0.0 {
        if ma == mb {
            return Ok(TestResult {
                test: "welch_t".to_string(),
                statistic: 0.0,
                df: DegreesOfFreedom::Single(na + nb - 2.0),
                p_value: 1.0,
                group_labels: labels,
                degenerate: true,
            });
        }
        return Err(Error::numerical(format!(
            "groups {:?} and {:?} are both constant with different means; t is undefined",
            a.label, b.label
        )));
    }
    let sa = va / na;
    let sb = vb / nb;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = student_t_sf_two_sided(t, df)?;
    Ok(TestResult {
        test: "welch_t".to_string(),
        statistic: t,
        df: DegreesOfFreedom::Single(df),
        p_value: p,
        group_labels: labels,
        degenerate: false,
    })
}

/// One-way fixed-effects ANOVA over k >= 2 groups.
pub fn one_way_anova(groups: &[SampleGroup]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::invalid(format!("anova needs at least 2 groups, got {}", groups.len())));
    }
    for g in groups {
        require_n(g, 2)?;
    }
    let n_total: usize = groups.iter().map(|g| g.n()).sum();
    let grand = groups.iter().flat_map(|g| g.values.iter()).sum::<f64>() / n_total as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.mean();
        ssb += g.n() as f64 * (m - grand) * (m - grand);
        ssw += g.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    if ssw == 0.0 {
        return Err(Error::numerical(
            "all groups are constant; the F statistic is undefined".to_string(),
        ));
    }
    let d1 = (groups.len() - 1) as f64;
    let d2 = (n_total - groups.len()) as f64;
    let f = (ssb / d1) / (ssw / d2);
    let p = f_sf(f, d1, d2)?;
    Ok(TestResult {
        test: "anova_f".to_string(),
        statistic: f,
        df: DegreesOfFreedom::Pair(d1, d2),
        p_value: p,
        group_labels: groups.iter().map(|g| g.label.clone()).collect(),
        degenerate: false,
    })
}

/// Kruskal-Wallis H with mid-rank ties and tie correction, chi-squared
/// approximation with k-1 degrees of freedom.
pub fn kruskal_wallis(groups: &[SampleGroup]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::invalid(format!(
            "kruskal-wallis needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    let n_total: usize = groups.iter().map(|g| g.n()).sum();
    if n_total < 3 {
        return Err(Error::invalid("kruskal-wallis needs at least 3 values overall".to_string()));
    }

    // pool, sort, mid-rank
    let mut pooled: Vec<(f64, usize)> = Vec::with_capacity(n_total);
    for (gi, g) in groups.iter().enumerate() {
        for &v in &g.values {
            pooled.push((v, gi));
        }
    }
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
    let mut rank_sums = vec![0.0; groups.len()];
    let mut tie_term = 0.0;
    let mut pos = 0;
    while pos < pooled.len() {
        let mut end = pos + 1;
        while end < pooled.len() && pooled[end].0 == pooled[pos].0 {
            end += 1;
        }
        let t = (end - pos) as f64;
        // mid-rank of positions pos..end (1-based)
        let rank = (pos + 1 + end) as f64 / 2.0;
        for &(_, gi) in &pooled[pos..end] {
            rank_sums[gi] += rank;
        }
        tie_term += t * t * t - t;
        pos = end;
    }

    let n = n_total as f64;
    let correction = 1.0 - tie_term / (n * n * n - n);
    if correction == 0.0 {
        return Err(Error::numerical(
            "all values are identical; the H statistic is undefined".to_string(),
        ));
    }
    let mut h = 0.0;
    for (gi, g) in groups.iter().enumerate() {
        h += rank_sums[gi] * rank_sums[gi] / g.n() as f64;
    }
    h = (12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0)) / correction;
    h = h.max(0.0); // guard float cancellation near H = 0
    let df = (groups.len() - 1) as f64;
    let p = chi2_sf(h, df)?;
    Ok(TestResult {
        test: "kruskal_wallis_h".to_string(),
        statistic: h,
        df: DegreesOfFreedom::Single(df),
        p_value: p,
        group_labels: groups.iter().map(|g| g.label.clone()).collect(),
        degenerate: false,
    })
}

/// Two-sample Kolmogorov-Smirnov test with the classic asymptotic tail.
pub fn ks_two_sample(a: &SampleGroup, b: &SampleGroup) -> Result<TestResult> {
    require_n(a, 1)?;
    require_n(b, 1)?;
    let mut xa = a.values.clone();
    let mut xb = b.values.clone();
    xa.sort_by(|p, q| p.partial_cmp(q).expect("finite values"));
    xb.sort_by(|p, q| p.partial_cmp(q).expect("finite values"));
    let (na, nb) = (xa.len(), xb.len());
    let mut d: f64 = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    while ia < na && ib < nb {
        let x = xa[ia].min(xb[ib]);
        while ia < na && xa[ia] == x {
            ia += 1;
        }
        while ib < nb && xb[ib] == x {
            ib += 1;
        }
        let cdf_a = ia as f64 / na as f64;
        let cdf_b = ib as f64 / nb as f64;
        d = d.max((cdf_a - cdf_b).abs());
    }
    let lambda = d * ((na * nb) as f64 / (na + nb) as f64).sqrt();
    Ok(TestResult {
        test: "ks_d".to_string(),
        statistic: d,
        df: DegreesOfFreedom::None,
        p_value: kolmogorov_q(lambda),
        group_labels: vec![a.label.clone(), b.label.clone()],
        degenerate: false,
    })
}

/// Gaussian kernel density estimate on an even grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

pub const KDE_GRID_SIZE: usize = 256;
pub const KDE_SPAN_FACTOR: f64 = 4.0;

/// Linear-interpolation quantile of a sorted slice (the common "type 7"
/// definition), q in [0, 1].
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Silverman-style bandwidth `1.06 * min(s, IQR/1.34) * n^(-1/5)`, falling
/// back to `max(1e-3, 1e-3 |mean|)` when the spread is zero. Grid spans the
/// data extended by `span_factor` bandwidths on each side.
pub fn kde(sample: &[f64], grid_size: usize, span_factor: f64) -> Result<KdeCurve> {
    if sample.len() < 2 {
        return Err(Error::invalid(format!("kde needs at least 2 values, got {}", sample.len())));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("kde sample contains non-finite values".to_string()));
    }
    if grid_size < 2 {
        return Err(Error::invalid(format!("kde grid needs at least 2 points, got {grid_size}")));
    }
    if !(span_factor > 0.0 && span_factor.is_finite()) {
        return Err(Error::invalid(format!("span factor must be positive, got {span_factor}")));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = var.sqrt().min(iqr / 1.34);
    let mut bandwidth = 1.06 * spread * n.powf(-0.2);
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        bandwidth = (1e-3 * mean.abs()).max(1e-3);
    }

    let lo = sorted[0] - span_factor * bandwidth;
    let hi = sorted[sorted.len() - 1] + span_factor * bandwidth;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * n * bandwidth);
    let mut grid = Vec::with_capacity(grid_size);
    let mut density = Vec::with_capacity(grid_size);
    for g in 0..grid_size {
        let x = lo + g as f64 * step;
        let mut acc = 0.0;
        for &v in sample {
            let z = (x - v) / bandwidth;
            acc += (-0.5 * z * z).exp();
        }
        grid.push(x);
        density.push(acc * norm);
    }
    Ok(KdeCurve { grid, density, bandwidth })
}

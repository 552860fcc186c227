//! Classical paired tests used as benchmarks. Both take "X is smaller than
//! Y" as the null and reject for evidence that `Y − X` sits below zero.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::empirical::PairedSample;
use crate::error::{Error, Result};

/// Largest number of nonzero differences for which the signed-rank null
/// distribution is enumerated exactly.
pub const WILCOXON_EXACT_MAX: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    StudentsT,
    Wilcoxon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
}

impl BaselineResult {
    pub fn rejects_at(&self, level: f64) -> bool {
        self.p_value < level
    }
}

fn y_minus_x(s: &PairedSample) -> Vec<f64> {
    s.pairs().map(|(x, y)| y - x).collect()
}

/// One-sided paired t-test of `E[Y − X] ≥ 0` against `E[Y − X] < 0`.
pub fn paired_t_test(s: &PairedSample) -> Result<BaselineResult> {
    let d = y_minus_x(s);
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidSample("t-test needs at least 2 pairs".into()));
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(Error::Degenerate("differences y - x have zero variance".into()));
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(BaselineResult {
        method: BaselineMethod::StudentsT,
        statistic: t,
        p_value: dist.cdf(t),
        n_effective: n,
    })
}

/// Midranks of `values` (1-based), ties sharing the average rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// One-sided Wilcoxon signed-rank test on `Y − X` for the alternative that
/// its median is below zero. Zero differences are dropped.
pub fn wilcoxon_signed_rank(s: &PairedSample) -> Result<BaselineResult> {
    let d: Vec<f64> = y_minus_x(s).into_iter().filter(|&v| v != 0.0).collect();
    if d.is_empty() {
        return Err(Error::Degenerate("every difference y - x is zero".into()));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    let p_value = if d.len() <= WILCOXON_EXACT_MAX {
        exact_lower_tail(&ranks, w_plus)
    } else {
        normal_lower_tail(&abs, w_plus)
    };
    Ok(BaselineResult {
        method: BaselineMethod::Wilcoxon,
        statistic: w_plus,
        p_value,
        n_effective: d.len(),
    })
}

/// `P(W+ ≤ w)` over all `2^n` equally likely sign assignments.
fn exact_lower_tail(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len();
    let total = 1u64 << n;
    let hits = (0..total)
        .filter(|mask| {
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            s <= w + 1e-9
        })
        .count();
    hits as f64 / total as f64
}

/// Normal approximation with tie-corrected variance and continuity
/// correction.
pub(crate) fn normal_lower_tail(abs: &[f64], w: f64) -> f64 {
    let n = abs.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if !(var > 0.0) {
        return if w >= mean { 1.0 } else { 0.0 };
    }
    let z = (w - mean + 0.5) / var.sqrt();
    Normal::standard().cdf(z).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_diffs(d: &[f64]) -> PairedSample {
        PairedSample::new(vec![0.0; d.len()], d.to_vec()).unwrap()
    }

    #[test]
    fn t_test_by_hand() {
        let r = paired_t_test(&from_diffs(&[1.0, -1.0, 2.0])).unwrap();
        // mean 2/3, sd √(7/3): t = (2/3)/(√(7/3)/√3) = 2/√7
        let t = 2.0 / 7f64.sqrt();
        assert!((r.statistic - t).abs() < 1e-12);
        assert!((r.statistic - 0.7559).abs() < 1e-4);
        // closed-form Student t CDF with 2 degrees of freedom
        let p = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
        assert!((r.p_value - p).abs() < 1e-10);
        assert_eq!(r.n_effective, 3);
    }

    #[test]
    fn t_test_directions() {
        let neg = paired_t_test(&from_diffs(&[-5.0, -4.0, -6.0, -5.5, -4.5])).unwrap();
        assert!(neg.p_value < 0.001);
        let sym: Vec<f64> = (1..=200).map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) + 1.0 }).collect();
        let r = paired_t_test(&from_diffs(&sym)).unwrap();
        assert!((r.p_value - 0.5).abs() < 0.1);
        assert!(matches!(paired_t_test(&from_diffs(&[1.0, 1.0])), Err(Error::Degenerate(_))));
        assert!(paired_t_test(&from_diffs(&[1.0])).is_err());
    }

    /// Student t CDF by Simpson quadrature of the density, an oracle
    /// independent of the incomplete-beta route.
    fn t_cdf_quadrature(t: f64, df: f64) -> f64 {
        use statrs::function::gamma::ln_gamma;
        let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
        let dens = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let m = 20_000;
        let (a, b) = (0.0, t.abs());
        let h = (b - a) / m as f64;
        let mut acc = dens(a) + dens(b);
        for i in 1..m {
            acc += dens(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let half = acc * h / 3.0;
        if t >= 0.0 { 0.5 + half } else { 0.5 - half }
    }

    #[test]
    fn t_cdf_matches_quadrature() {
        for df in [1.0, 2.0, 5.0, 19.0, 99.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for t in [-3.0, -1.2, -0.1, 0.0, 0.7, 2.5] {
                assert!((dist.cdf(t) - t_cdf_quadrature(t, df)).abs() < 1e-9, "df {df} t {t}");
            }
        }
    }

    #[test]
    fn wilcoxon_exact_by_enumeration() {
        let r = wilcoxon_signed_rank(&from_diffs(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(r.statistic, 6.0);
        assert_eq!(r.p_value, 1.0);

        let r = wilcoxon_signed_rank(&from_diffs(&[-1.0, -2.0, -3.0])).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.125);

        let r = wilcoxon_signed_rank(&from_diffs(&[5.0])).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn wilcoxon_zeros_and_ties() {
        let r = wilcoxon_signed_rank(&from_diffs(&[0.0, -2.0, 2.0, 0.0, 1.0])).unwrap();
        assert_eq!(r.n_effective, 3);
        // |d| = (2, 2, 1) -> ranks (2.5, 2.5, 1); W+ = 2.5 + 1
        assert_eq!(r.statistic, 3.5);
        // sign sums: 0, 1, 2.5, 2.5, 3.5, 3.5, 5, 6 -> 6 of 8 are ≤ 3.5
        assert_eq!(r.p_value, 0.75);
        assert!(matches!(wilcoxon_signed_rank(&from_diffs(&[0.0, 0.0])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn midrank_assignment() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn exact_and_normal_paths_agree_at_twelve() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(2024, 0);
        for _ in 0..100 {
            let shift: f64 = rng.random_range(-1.0..1.0);
            let d: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0) + shift).collect();
            let abs: Vec<f64> = d.iter().map(|v: &f64| v.abs()).collect();
            let ranks = midranks(&abs);
            let w: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
            let exact = exact_lower_tail(&ranks, w);
            let approx = normal_lower_tail(&abs, w);
            assert!((exact - approx).abs() < 0.03, "exact {exact} approx {approx}");
        }
    }

    #[test]
    fn swap_antisymmetry_of_t() {
        let s = PairedSample::new(vec![1.0, 2.5, 0.3, 4.0, 2.2], vec![2.0, 2.0, 1.1, 3.0, 5.0]).unwrap();
        let a = paired_t_test(&s).unwrap().p_value;
        let b = paired_t_test(&s.swapped()).unwrap().p_value;
        assert!((a + b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shift_invariance() {
        let s = PairedSample::new(vec![1.0, 2.5, 0.3, 4.0, 2.2], vec![2.0, 2.0, 1.1, 3.0, 5.0]).unwrap();
        let shifted = PairedSample::new(
            s.x().iter().map(|v| v + 8.0).collect(),
            s.y().iter().map(|v| v + 8.0).collect(),
        )
        .unwrap();
        assert!((paired_t_test(&s).unwrap().p_value - paired_t_test(&shifted).unwrap().p_value).abs() < 1e-9);
        assert_eq!(
            wilcoxon_signed_rank(&s).unwrap().p_value,
            wilcoxon_signed_rank(&shifted).unwrap().p_value
        );
    }

    #[test]
    fn json_keys() {
        let r = wilcoxon_signed_rank(&from_diffs(&[1.0, -2.0])).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["method"], "wilcoxon");
        assert!(v.get("statistic").is_some() && v.get("p_value").is_some() && v.get("n_effective").is_some());
    }
}

//! Asymptotic test of `X ≤st:wj Y`.
//!
//! The centered empirical gap `√n (F̄_n − Ḡ_n)` converges to a zero-mean
//! Gaussian process whose supremum tail bounds the null tail of the
//! statistic. The process is evaluated on a grid, its covariance estimated
//! by plugging in the empirical survivals, and the tail probability
//! simulated from the Cholesky factor.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::{statistic_from_survivals, DifferenceSurvivals, PairedSample};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_N_SIMS: usize = 10_000;
pub const DEFAULT_JITTER: f64 = 1e-10;
pub const MAX_JITTER: f64 = 1e-6;
pub const MIN_N_SIMS: usize = 100;

/// Simulation draws per random sub-stream. Fixed so that results do not
/// depend on how rayon splits the work.
const DRAWS_PER_STREAM: usize = 512;

/// Evaluation points `0 = t_0 < t_1 < … < t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter("grid needs at least two points".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::Parameter("grid must start at 0".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) || !points.iter().all(|p| p.is_finite()) {
            return Err(Error::Parameter("grid must be finite and strictly increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of intervals `k` (one less than the number of points).
    pub fn k(&self) -> usize {
        self.points.len() - 1
    }
}

fn nondegenerate_max(surv: &DifferenceSurvivals) -> Result<f64> {
    let max_z = surv.max_abs();
    if max_z > 0.0 {
        Ok(max_z)
    } else {
        Err(Error::Degenerate("every difference x - y is zero".into()))
    }
}

/// `k + 1` equally spaced points on `[0, max Z]`.
pub fn build_grid(s: &PairedSample, k: usize) -> Result<Grid> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let max_z = nondegenerate_max(&DifferenceSurvivals::new(s))?;
    equally_spaced(max_z, k)
}

fn equally_spaced(max_z: f64, k: usize) -> Result<Grid> {
    let mut points: Vec<f64> = (0..=k).map(|i| max_z * i as f64 / k as f64).collect();
    points[k] = max_z;
    Grid::new(points)
}

/// Grid made of `0` and every distinct nonnegative realized difference.
pub fn support_grid(s: &PairedSample) -> Result<Grid> {
    let surv = DifferenceSurvivals::new(s);
    nondegenerate_max(&surv)?;
    let mut points: Vec<f64> = std::iter::once(0.0)
        .chain(surv.xy.sorted_values().iter().copied().filter(|&z| z > 0.0))
        .chain(surv.yx.sorted_values().iter().copied().filter(|&z| z > 0.0))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    Grid::new(points)
}

/// Plug-in covariance of the limiting process on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GpCovariance {
    dim: usize,
    // row-major
    matrix: Vec<f64>,
    jitter_applied: f64,
}

impl GpCovariance {
    pub fn from_matrix(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(Error::Parameter(format!(
                "expected a {dim}x{dim} matrix, got {} entries",
                matrix.len()
            )));
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (matrix[i * dim + j], matrix[j * dim + i]);
                if (a - b).abs() > 1e-12 {
                    return Err(Error::Parameter(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { dim, matrix, jitter_applied: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim + j]
    }

    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }
}

/// `Σ_ij = F̄(t_i ∨ t_j) + Ḡ(t_i ∨ t_j) − (F̄(t_i) − Ḡ(t_i))(F̄(t_j) − Ḡ(t_j))`
/// with the empirical survivals of the sample.
pub fn build_covariance(g: &Grid, s: &PairedSample) -> GpCovariance {
    covariance_from_survivals(g, &DifferenceSurvivals::new(s))
}

fn covariance_from_survivals(g: &Grid, surv: &DifferenceSurvivals) -> GpCovariance {
    let pts = g.points();
    let m = pts.len();
    let f: Vec<f64> = pts.iter().map(|&t| surv.xy.survival_at(t)).collect();
    let gg: Vec<f64> = pts.iter().map(|&t| surv.yx.survival_at(t)).collect();
    let mut matrix = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            // grid is increasing, so t_i ∨ t_j = t_i for j ≤ i
            let v = f[i] + gg[i] - (f[i] - gg[i]) * (f[j] - gg[j]);
            matrix[i * m + j] = v;
            matrix[j * m + i] = v;
        }
    }
    GpCovariance { dim: m, matrix, jitter_applied: 0.0 }
}

/// Lower-triangular Cholesky factor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `L z` written into `out`.
    fn apply(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.lower[i * self.dim..i * self.dim + i + 1];
            *o = row.iter().zip(&z[..=i]).map(|(l, v)| l * v).sum();
        }
    }
}

fn cholesky_with_jitter(c: &GpCovariance, eps: f64) -> Option<Vec<f64>> {
    let m = c.dim;
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut sum = c.matrix[i * m + j];
            if i == j {
                sum += eps;
            }
            for k in 0..j {
                sum -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * m + i] = sum.sqrt();
            } else {
                l[i * m + j] = sum / l[j * m + j];
            }
        }
    }
    Some(l)
}

/// Factors `matrix + eps·I`, growing `eps` tenfold on failure up to
/// [`MAX_JITTER`]. The jitter that succeeded is recorded on `c`.
pub fn regularized_cholesky(c: &mut GpCovariance, eps: f64) -> Result<CholeskyFactor> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("jitter must be > 0, got {eps}")));
    }
    let mut jitter = eps;
    loop {
        if let Some(lower) = cholesky_with_jitter(c, jitter) {
            c.jitter_applied = jitter;
            return Ok(CholeskyFactor { dim: c.dim, lower, jitter });
        }
        if jitter >= MAX_JITTER * (1.0 - 1e-9) {
            let min_diag = (0..c.dim).map(|i| c.get(i, i)).fold(f64::INFINITY, f64::min);
            return Err(Error::Numerical(format!(
                "cholesky of {}x{} covariance failed at jitter {jitter:e} (smallest diagonal {min_diag:e})",
                c.dim, c.dim
            )));
        }
        jitter = (jitter * 10.0).min(MAX_JITTER);
    }
}

/// Simulated upper bounds `(p1, p2)` for the p-value of `stat`.
///
/// `p1` is the fraction of simulated maxima exceeding `stat`; `p2` is one
/// minus the fraction of draws lying in the orthant `{g ≤ stat}`. Both are
/// estimated from the same draws.
pub fn pvalue_bounds(
    c: &mut GpCovariance,
    stat: f64,
    n_sims: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let factor = regularized_cholesky(c, DEFAULT_JITTER)?;
    pvalue_bounds_with_factor(&factor, stat, n_sims, seed)
}

pub fn pvalue_bounds_with_factor(
    factor: &CholeskyFactor,
    stat: f64,
    n_sims: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if stat.is_nan() {
        return Err(Error::Parameter("statistic is NaN".into()));
    }
    if n_sims < MIN_N_SIMS {
        return Err(Error::Parameter(format!("n_sims must be at least {MIN_N_SIMS}")));
    }
    let maxima = simulate_maxima(factor, n_sims, seed);
    let exceed = maxima.iter().filter(|&&s| s > stat).count();
    let inside = maxima.iter().filter(|&&s| s <= stat).count();
    let n = n_sims as f64;
    Ok((exceed as f64 / n, (n_sims - inside) as f64 / n))
}

/// Maxima of `n_sims` draws of `L z`, in draw order.
pub fn simulate_maxima(factor: &CholeskyFactor, n_sims: usize, seed: u64) -> Vec<f64> {
    let streams = n_sims.div_ceil(DRAWS_PER_STREAM);
    let dim = factor.dim;
    (0..streams)
        .into_par_iter()
        .flat_map_iter(|stream| {
            let mut rng = stream_rng(seed, stream as u64);
            let draws = DRAWS_PER_STREAM.min(n_sims - stream * DRAWS_PER_STREAM);
            let mut z = vec![0.0; dim];
            let mut g = vec![0.0; dim];
            (0..draws)
                .map(|_| {
                    z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    factor.apply(&z, &mut g);
                    g.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Outcome of the dominance test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub n: usize,
    pub k: usize,
    pub n_sims: usize,
    pub seed: u64,
    pub jitter: f64,
    pub reject_at_0_05: bool,
    pub reject_at_0_01: bool,
}

impl TestResult {
    fn new(statistic: f64, p1: f64, p2: f64, n: usize, k: usize, n_sims: usize, seed: u64, jitter: f64) -> Self {
        let mut r = Self {
            statistic,
            p1: Some(p1),
            p2: Some(p2),
            n,
            k,
            n_sims,
            seed,
            jitter,
            reject_at_0_05: false,
            reject_at_0_01: false,
        };
        r.reject_at_0_05 = r.rejects_at(0.05);
        r.reject_at_0_01 = r.rejects_at(0.01);
        r
    }

    /// Smaller of the available p-value bounds.
    pub fn p_value(&self) -> Option<f64> {
        match (self.p1, self.p2) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn rejects_at(&self, level: f64) -> bool {
        self.p_value().is_some_and(|p| p < level)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn run_on_grid(s: &PairedSample, surv: &DifferenceSurvivals, grid: &Grid, n_sims: usize, seed: u64) -> Result<TestResult> {
    let stat = statistic_from_survivals(surv, s.len());
    let mut cov = covariance_from_survivals(grid, surv);
    let factor = regularized_cholesky(&mut cov, DEFAULT_JITTER)?;
    let (p1, p2) = pvalue_bounds_with_factor(&factor, stat, n_sims, seed)?;
    Ok(TestResult::new(stat, p1, p2, s.len(), grid.k(), n_sims, seed, factor.jitter()))
}

fn check_test_input(s: &PairedSample) -> Result<()> {
    if s.len() < 2 {
        return Err(Error::InvalidSample("the test needs at least 2 pairs".into()));
    }
    Ok(())
}

/// Tests `H0: X ≤st:wj Y` on an equally spaced grid with `k` intervals.
pub fn test_st_wj(s: &PairedSample, k: usize, n_sims: usize, seed: u64) -> Result<TestResult> {
    check_test_input(s)?;
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let surv = DifferenceSurvivals::new(s);
    let grid = equally_spaced(nondegenerate_max(&surv)?, k)?;
    run_on_grid(s, &surv, &grid, n_sims, seed)
}

/// Variant for integer-valued or ordinal data: the process is evaluated at
/// every realized nonnegative difference instead of an interpolation grid.
pub fn test_st_wj_discrete_support(s: &PairedSample, n_sims: usize, seed: u64) -> Result<TestResult> {
    check_test_input(s)?;
    let surv = DifferenceSurvivals::new(s);
    let grid = support_grid(s)?;
    run_on_grid(s, &surv, &grid, n_sims, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn sample(x: &[f64], y: &[f64]) -> PairedSample {
        PairedSample::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn grid_spacing() {
        let s = sample(&[2.0, 0.0], &[0.0, 1.0]);
        assert_eq!(build_grid(&s, 4).unwrap().points(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        let s = sample(&[1.0], &[0.0]);
        assert_eq!(build_grid(&s, 1).unwrap().points(), &[0.0, 1.0]);
        assert!(matches!(build_grid(&sample(&[1.0, 2.0], &[1.0, 2.0]), 4), Err(Error::Degenerate(_))));
        assert!(build_grid(&s, 0).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![0.0]).is_err());
        assert!(Grid::new(vec![0.5, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn support_grids() {
        let s = sample(&[3.0, 4.0, 2.0], &[1.0, 1.0, 5.0]);
        assert_eq!(support_grid(&s).unwrap().points(), &[0.0, 2.0, 3.0]);
        let s = sample(&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0]);
        assert_eq!(support_grid(&s).unwrap().points(), &[0.0, 1.0]);
        let s = sample(&[2.0, 2.0], &[2.0, 2.0]);
        assert!(matches!(test_st_wj_discrete_support(&s, 1000, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn covariance_entries() {
        // x - y = (2, 3): F̄_n(0) = 1, Ḡ_n(0) = 0 so Σ_00 = 1 + 0 - 1 = 0
        let s = sample(&[3.0, 4.0], &[1.0, 1.0]);
        let g = Grid::new(vec![0.0, 3.0]).unwrap();
        let c = build_covariance(&g, &s);
        assert_eq!(c.get(0, 0), 0.0);
        // beyond every difference both survivals vanish
        assert_eq!(c.get(1, 1), 0.0);
        assert_eq!(c.get(0, 1), c.get(1, 0));
    }

    #[test]
    fn covariance_under_equal_survivals() {
        // symmetric differences: F̄_n = Ḡ_n everywhere
        let s = sample(&[1.0, -1.0, 2.0, -2.0, 0.5, -0.5], &[0.0; 6]);
        let g = build_grid(&s, 8).unwrap();
        let surv = DifferenceSurvivals::new(&s);
        let c = build_covariance(&g, &s);
        for (i, &t) in g.points().iter().enumerate() {
            assert!((c.get(i, i) - 2.0 * surv.xy.survival_at(t)).abs() < 1e-15);
        }
    }

    fn reconstruct(l: &CholeskyFactor) -> Vec<f64> {
        let m = l.dim();
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = (0..m).map(|k| l.get(i, k) * l.get(j, k)).sum();
            }
        }
        out
    }

    #[test]
    fn cholesky_cases() {
        let mut id = GpCovariance::from_matrix(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let l = regularized_cholesky(&mut id, 1e-10).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((l.get(i, j) - want).abs() < 1e-9);
            }
        }

        let mut zero = GpCovariance::from_matrix(2, vec![0.0; 4]).unwrap();
        let l = regularized_cholesky(&mut zero, 1e-10).unwrap();
        assert!((l.get(0, 0) - 1e-5).abs() < 1e-18);
        assert!((l.get(1, 1) - 1e-5).abs() < 1e-18);
        assert_eq!(zero.jitter_applied(), 1e-10);

        assert!(regularized_cholesky(&mut zero, 0.0).is_err());

        let mut indefinite = GpCovariance::from_matrix(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(regularized_cholesky(&mut indefinite, 1e-10), Err(Error::Numerical(_))));
        assert!(GpCovariance::from_matrix(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
    }

    #[test]
    fn cholesky_reconstructs_sample_covariance() {
        let s = sample(&[0.3, 1.7, -0.4, 2.2, 0.9, 1.1, -1.5], &[1.0, 0.2, 0.5, 0.1, 1.9, 1.0, 0.0]);
        let g = build_grid(&s, 20).unwrap();
        let mut c = build_covariance(&g, &s);
        let l = regularized_cholesky(&mut c, 1e-10).unwrap();
        let rec = reconstruct(&l);
        let m = c.dim();
        for i in 0..m {
            for j in 0..m {
                let want = c.get(i, j) + if i == j { c.jitter_applied() } else { 0.0 };
                assert!((rec[i * m + j] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn extreme_statistics() {
        let mut c = GpCovariance::from_matrix(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        assert_eq!(pvalue_bounds(&mut c, 1e9, 1000, 3).unwrap(), (0.0, 0.0));
        assert_eq!(pvalue_bounds(&mut c, -1e9, 1000, 3).unwrap(), (1.0, 1.0));
        assert!(pvalue_bounds(&mut c, 0.0, 10, 3).is_err());
        assert!(pvalue_bounds(&mut c, f64::NAN, 1000, 3).is_err());
    }

    #[test]
    fn univariate_tail() {
        let mut c = GpCovariance::from_matrix(1, vec![1.0]).unwrap();
        let (p1, p2) = pvalue_bounds(&mut c, 1.645, 200_000, 17).unwrap();
        let exact = 1.0 - Normal::standard().cdf(1.645);
        assert!((p1 - exact).abs() < 0.003, "{p1} vs {exact}");
        assert_eq!(p1, p2);
    }

    #[test]
    fn bound_is_monotone_in_statistic() {
        let s = sample(&[0.3, 1.7, -0.4, 2.2, 0.9], &[1.0, 0.2, 0.5, 0.1, 1.9]);
        let g = build_grid(&s, 10).unwrap();
        let mut c = build_covariance(&g, &s);
        let mut prev = 1.0;
        for i in -20..40 {
            let (p1, _) = pvalue_bounds(&mut c, i as f64 * 0.1, 2000, 5).unwrap();
            assert!(p1 <= prev);
            prev = p1;
        }
    }

    #[test]
    fn draws_do_not_depend_on_thread_count() {
        let mut c = GpCovariance::from_matrix(2, vec![1.0, 0.3, 0.3, 2.0]).unwrap();
        let l = regularized_cholesky(&mut c, 1e-10).unwrap();
        let a = simulate_maxima(&l, 5000, 9);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_maxima(&l, 5000, 9));
        assert_eq!(a, b);
    }

    #[test]
    fn decisions_follow_p_values() {
        let r = TestResult::new(1.0, 0.03, 0.03, 10, 4, 1000, 1, 1e-10);
        assert!(r.reject_at_0_05 && !r.reject_at_0_01);
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for key in ["statistic", "p1", "p2", "n", "k", "n_sims", "seed", "jitter", "reject_at_0_05", "reject_at_0_01"] {
            assert!(keys.contains(&key), "missing {key}");
        }
        assert_eq!(keys.len(), 10);
    }

    #[test]
    fn symmetric_differences_give_large_p() {
        // x = -y, sign alternating: X - Y and Y - X share one law
        let x: Vec<f64> = (1..=60).map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) } / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let s = PairedSample::new(x, y).unwrap();
        let r = test_st_wj(&s, 100, 4000, 3).unwrap();
        assert!(r.statistic.abs() < 0.5);
        assert!(r.p1.unwrap() > 0.2);
        assert!(!r.reject_at_0_05);
    }

    #[test]
    fn small_inputs_rejected() {
        assert!(test_st_wj(&sample(&[1.0], &[0.0]), 10, 1000, 1).is_err());
        assert!(matches!(test_st_wj(&sample(&[1.0, 2.0], &[1.0, 2.0]), 10, 1000, 1), Err(Error::Degenerate(_))));
    }
}

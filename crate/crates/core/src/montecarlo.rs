//! The eight benchmark scenarios and the rejection-rate harness.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{paired_t_test, wilcoxon_signed_rank};
use crate::distributions::{
    sample_bivariate_normal, sample_clayton_bivariate, BivariateNormalParams, MarginalDist,
};
use crate::empirical::PairedSample;
use crate::error::{Error, Result};
use crate::gptest::test_st_wj;
use crate::rng::mix_seed;

/// Clayton parameter shared by cases 4 to 8.
pub const CLAYTON_THETA: f64 = 0.5;
/// Covariance shared by cases 1 to 3.
pub const NORMAL_COV: [[f64; 2]; 2] = [[2.0, 1.5], [1.5, 1.5]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
}

impl CaseId {
    pub const ALL: [CaseId; 8] = [
        CaseId::C1,
        CaseId::C2,
        CaseId::C3,
        CaseId::C4,
        CaseId::C5,
        CaseId::C6,
        CaseId::C7,
        CaseId::C8,
    ];

    pub fn scenario(self) -> Scenario {
        use MarginalDist::{Pareto, Weibull};
        let normal = |mu| Scenario::Normal(BivariateNormalParams { mu, cov: NORMAL_COV });
        let clayton = |x, y| Scenario::Clayton { theta: CLAYTON_THETA, x, y };
        match self {
            CaseId::C1 => normal([2.0, 4.0]),
            CaseId::C2 => normal([3.0, 1.0]),
            CaseId::C3 => normal([2.0, 2.01]),
            CaseId::C4 => clayton(
                Pareto { shape: 2.0, scale: 1.0 },
                Pareto { shape: 1.5, scale: 1.0 },
            ),
            CaseId::C5 => clayton(
                Pareto { shape: 5.0, scale: 4.0 },
                Pareto { shape: 1.5, scale: 1.0 },
            ),
            CaseId::C6 => clayton(
                Weibull { shape: 6.0, scale: 2.0 },
                Weibull { shape: 1.5, scale: 1.5 },
            ),
            CaseId::C7 => clayton(
                Weibull { shape: 0.75, scale: 4.0 },
                Weibull { shape: 0.25, scale: 1.5 },
            ),
            CaseId::C8 => clayton(
                Weibull { shape: 0.5, scale: 2.0 },
                Weibull { shape: 0.9, scale: 1.5 },
            ),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown case `{s}` (expected C1..C8)")))
    }
}

/// Law of `(X, Y)` for a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scenario {
    Normal(BivariateNormalParams),
    Clayton {
        theta: f64,
        x: MarginalDist,
        y: MarginalDist,
    },
}

pub fn generate_scenario(case: CaseId, n: usize, seed: u64) -> Result<PairedSample> {
    if n < 2 {
        return Err(Error::Parameter("scenario samples need n >= 2".into()));
    }
    match case.scenario() {
        Scenario::Normal(p) => sample_bivariate_normal(&p, n, seed),
        Scenario::Clayton { theta, x, y } => sample_clayton_bivariate(theta, &x, &y, n, seed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Stwj,
    T,
    Wilcoxon,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Stwj, TestKind::T, TestKind::Wilcoxon];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Stwj => "stwj",
            TestKind::T => "t",
            TestKind::Wilcoxon => "wilcoxon",
        }
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown test `{s}` (expected stwj, t, wilcoxon)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub case: CaseId,
    pub n: usize,
    pub replications: usize,
    pub k: usize,
    pub n_sims: usize,
    pub levels: Vec<f64>,
    pub master_seed: u64,
    pub tests: Vec<TestKind>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 200 replications, 2000 simulations, `k = 100`.
    pub fn desk(case: CaseId, n: usize, master_seed: u64) -> Self {
        Self {
            case,
            n,
            replications: 200,
            k: 100,
            n_sims: 2000,
            levels: vec![0.05, 0.01],
            master_seed,
            tests: TestKind::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Parameter("replications must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Parameter("n must be at least 2".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Parameter("levels must lie in (0, 1)".into()));
        }
        if self.tests.is_empty() {
            return Err(Error::Parameter("select at least one test".into()));
        }
        Ok(())
    }
}

/// Rejection count of one test at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub test: TestKind,
    pub level: f64,
    pub rejections: usize,
    pub rate: f64,
    /// Replications where the test could not be evaluated.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub config: ExperimentConfig,
    pub rows: Vec<RateRow>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RejectionReport {
    pub fn rate(&self, test: TestKind, level: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.test == test && r.level == level)
            .map(|r| r.rate)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["case", "n", "test", "level", "rate", "failures"])
            .map_err(Error::from_csv)?;
        for r in &self.rows {
            wtr.write_record([
                self.config.case.to_string(),
                self.config.n.to_string(),
                r.test.name().to_string(),
                r.level.to_string(),
                r.rate.to_string(),
                r.failures.to_string(),
            ])
            .map_err(Error::from_csv)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-replication outcome: for each selected test, `None` on failure or
/// the p-value.
fn replicate(cfg: &ExperimentConfig, r: usize) -> Result<Vec<Option<f64>>> {
    let seed = mix_seed(cfg.master_seed, r as u64);
    let sample = generate_scenario(cfg.case, cfg.n, seed)?;
    Ok(cfg
        .tests
        .iter()
        .map(|t| match t {
            TestKind::Stwj => test_st_wj(&sample, cfg.k, cfg.n_sims, mix_seed(seed, 1))
                .ok()
                .and_then(|res| res.p_value()),
            TestKind::T => paired_t_test(&sample).ok().map(|b| b.p_value),
            TestKind::Wilcoxon => wilcoxon_signed_rank(&sample).ok().map(|b| b.p_value),
        })
        .collect())
}

pub fn run_rejection_experiment(cfg: &ExperimentConfig) -> Result<RejectionReport> {
    cfg.validate()?;
    let start = Instant::now();
    let outcomes: Vec<Vec<Option<f64>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| replicate(cfg, r))
        .collect::<Result<_>>()?;

    let reps = cfg.replications as f64;
    let mut rows = Vec::new();
    for (ti, &test) in cfg.tests.iter().enumerate() {
        let failures = outcomes.iter().filter(|o| o[ti].is_none()).count();
        for &level in &cfg.levels {
            let rejections = outcomes
                .iter()
                .filter(|o| o[ti].is_some_and(|p| p < level))
                .count();
            rows.push(RateRow {
                test,
                level,
                rejections,
                rate: rejections as f64 / reps,
                failures,
            });
        }
    }
    Ok(RejectionReport {
        config: cfg.clone(),
        rows,
        wall_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn case_parameters() {
        match CaseId::C3.scenario() {
            Scenario::Normal(p) => {
                assert_eq!(p.mu, [2.0, 2.01]);
                assert_eq!(p.cov, NORMAL_COV);
            }
            _ => panic!("C3 is normal"),
        }
        match CaseId::C7.scenario() {
            Scenario::Clayton { theta, x, y } => {
                assert_eq!(theta, 0.5);
                assert_eq!(x, MarginalDist::Weibull { shape: 0.75, scale: 4.0 });
                assert_eq!(y, MarginalDist::Weibull { shape: 0.25, scale: 1.5 });
            }
            _ => panic!("C7 is clayton"),
        }
        assert_eq!("c5".parse::<CaseId>().unwrap(), CaseId::C5);
        assert!("C9".parse::<CaseId>().is_err());
    }

    #[test]
    fn scenario_means() {
        let s = generate_scenario(CaseId::C1, 100_000, 1).unwrap();
        assert!((mean(s.x()) - 2.0).abs() < 0.05 && (mean(s.y()) - 4.0).abs() < 0.05);

        let s = generate_scenario(CaseId::C4, 100_000, 2).unwrap();
        assert!((mean(s.x()) - 2.0).abs() < 0.1);

        let s = generate_scenario(CaseId::C6, 100_000, 3).unwrap();
        let want = 2.0 * statrs::function::gamma::gamma(1.0 + 1.0 / 6.0);
        assert!((mean(s.x()) - want).abs() < 0.02);
        assert!(generate_scenario(CaseId::C6, 1, 3).is_err());
    }

    #[test]
    fn single_replication_rates_are_binary() {
        let mut cfg = ExperimentConfig::desk(CaseId::C2, 30, 5);
        cfg.replications = 1;
        cfg.n_sims = 500;
        let rep = run_rejection_experiment(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 6);
        assert!(rep.rows.iter().all(|r| r.rate == 0.0 || r.rate == 1.0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::desk(CaseId::C1, 30, 5);
        cfg.replications = 0;
        assert!(run_rejection_experiment(&cfg).is_err());
        let mut cfg = ExperimentConfig::desk(CaseId::C1, 30, 5);
        cfg.levels = vec![1.5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_layout() {
        let mut cfg = ExperimentConfig::desk(CaseId::C1, 20, 5);
        cfg.replications = 3;
        cfg.n_sims = 200;
        cfg.tests = vec![TestKind::T];
        let rep = run_rejection_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("case,n,test,level,rate,failures"));
        assert_eq!(lines.next(), Some("C1,20,t,0.05,0,0"));
        assert_eq!(lines.next(), Some("C1,20,t,0.01,0,0"));
    }
}

//! Returns, paired alignment, portfolio composition and the pair-analysis
//! workflow built on the dominance test.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baselines::{paired_t_test, BaselineResult};
use crate::empirical::{check_header, differences, parse_real, PairedSample};
use crate::error::{Error, Result};
use crate::gptest::{test_st_wj, TestResult};

/// Significance level used for the verdict of [`analyze_pair`].
pub const ANALYSIS_LEVEL: f64 = 0.05;

/// Dated closing prices, strictly increasing in date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    entries: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    pub fn new(entries: Vec<(NaiveDate, f64)>) -> Result<Self> {
        if let Some(w) = entries.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidSample(format!("dates not strictly increasing at {}", w[1].0)));
        }
        if let Some((d, c)) = entries.iter().find(|(_, c)| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidSample(format!("close {c} on {d} is not positive")));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(NaiveDate, f64)] {
        &self.entries
    }

    /// Reads the `date,close` CSV format with ISO-8601 dates.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(&mut rdr, &["date", "close"])?;
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(Error::from_csv)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 2 fields, found {}", rec.len()),
                });
            }
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| Error::Parse {
                line,
                message: format!("bad date `{}`: {e}", &rec[0]),
            })?;
            entries.push((date, parse_real(&rec[1], line)?));
        }
        Self::new(entries)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["date", "close"]).map_err(Error::from_csv)?;
        for (d, c) in &self.entries {
            wtr.write_record([d.format("%Y-%m-%d").to_string(), c.to_string()])
                .map_err(Error::from_csv)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    entries: Vec<(NaiveDate, f64)>,
}

impl ReturnSeries {
    pub fn new(entries: Vec<(NaiveDate, f64)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(NaiveDate, f64)] {
        &self.entries
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }
}

/// Simple returns `(c_t − c_{t−1}) / c_{t−1}`, dated at the later date.
pub fn weekly_returns(p: &PriceSeries) -> Result<ReturnSeries> {
    if p.entries.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 closes for a return".into()));
    }
    Ok(ReturnSeries::new(
        p.entries
            .windows(2)
            .map(|w| (w[1].0, (w[1].1 - w[0].1) / w[0].1))
            .collect(),
    ))
}

/// Inner join on date.
fn join(a: &ReturnSeries, b: &ReturnSeries) -> Result<Vec<(NaiveDate, f64, f64)>> {
    if a.entries.is_empty() || b.entries.is_empty() {
        return Err(Error::Alignment("empty return series".into()));
    }
    let other: BTreeMap<NaiveDate, f64> = b.entries.iter().copied().collect();
    let mut joined: Vec<(NaiveDate, f64, f64)> = a
        .entries
        .iter()
        .filter_map(|&(d, ra)| other.get(&d).map(|&rb| (d, ra, rb)))
        .collect();
    joined.sort_by_key(|e| e.0);
    if joined.is_empty() {
        return Err(Error::Alignment("series share no dates".into()));
    }
    Ok(joined)
}

/// Pairs the returns of two series on their common dates, ordered by date.
pub fn align(a: &ReturnSeries, b: &ReturnSeries) -> Result<PairedSample> {
    let joined = join(a, b)?;
    PairedSample::new(
        joined.iter().map(|e| e.1).collect(),
        joined.iter().map(|e| e.2).collect(),
    )
}

/// Common dates of two series.
pub fn common_dates(a: &ReturnSeries, b: &ReturnSeries) -> Result<Vec<NaiveDate>> {
    Ok(join(a, b)?.into_iter().map(|e| e.0).collect())
}

/// Returns of the portfolio `(1 − alpha)·base + alpha·other` on common dates.
pub fn portfolio_returns(alpha: f64, base: &ReturnSeries, other: &ReturnSeries) -> Result<ReturnSeries> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(ReturnSeries::new(
        join(base, other)?
            .into_iter()
            .map(|(d, b, o)| (d, (1.0 - alpha) * b + alpha * o))
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QqMode {
    Marginals,
    Differences,
}

/// Matched order statistics of two equal-length samples.
#[derive(Debug, Clone, PartialEq)]
pub struct QqData {
    pub pairs: Vec<(f64, f64)>,
}

impl QqData {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["qa", "qb"]).map_err(Error::from_csv)?;
        for (a, b) in &self.pairs {
            wtr.write_record([a.to_string(), b.to_string()]).map_err(Error::from_csv)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn qq_export(s: &PairedSample, mode: QqMode) -> QqData {
    let (mut a, mut b) = match mode {
        QqMode::Marginals => (s.x().to_vec(), s.y().to_vec()),
        QqMode::Differences => differences(s),
    };
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    QqData {
        pairs: a.into_iter().zip(b).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `X ≤st:wj Y` retained, the reverse rejected or the means significantly
    /// ordered.
    StrictDominanceConsistent,
    /// Neither direction rejected and the means are not distinguishable.
    PossiblyEqualInDistributionOfDifferences,
    /// `X ≤st:wj Y` retained without further evidence of strictness.
    ForwardRetained,
    /// Evidence against `X ≤st:wj Y` only.
    EvidenceAgainstForward,
    /// Evidence against both directions.
    EvidenceAgainstBoth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub stwj_forward: TestResult,
    pub stwj_reverse: TestResult,
    pub t_test: BaselineResult,
    pub verdict: Verdict,
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Tests the order in both directions and classifies the pair, using a
/// two-sided paired t-test to decide whether the means differ.
pub fn analyze_pair(s: &PairedSample, k: usize, n_sims: usize, seed: u64) -> Result<AnalysisReport> {
    let forward = test_st_wj(s, k, n_sims, seed)?;
    let reverse = test_st_wj(&s.swapped(), k, n_sims, seed.wrapping_add(1))?;
    let t_test = paired_t_test(s)?;

    let against_forward = forward.rejects_at(ANALYSIS_LEVEL);
    let against_reverse = reverse.rejects_at(ANALYSIS_LEVEL);
    // t_test.p_value is P(T ≤ t_obs); the upper tail favours E[Y − X] > 0
    let two_sided = 2.0 * t_test.p_value.min(1.0 - t_test.p_value);
    let means_differ = two_sided < ANALYSIS_LEVEL;
    let y_larger = t_test.statistic > 0.0;

    let verdict = match (against_forward, against_reverse) {
        (true, true) => Verdict::EvidenceAgainstBoth,
        (true, false) => Verdict::EvidenceAgainstForward,
        (false, _) if means_differ && y_larger => Verdict::StrictDominanceConsistent,
        (false, false) if !means_differ => Verdict::PossiblyEqualInDistributionOfDifferences,
        (false, _) => Verdict::ForwardRetained,
    };
    Ok(AnalysisReport {
        stwj_forward: forward,
        stwj_reverse: reverse,
        t_test,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{generate_scenario, CaseId};

    fn day(i: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::weeks(i as i64)
    }

    fn prices(closes: &[f64]) -> PriceSeries {
        PriceSeries::new(closes.iter().enumerate().map(|(i, &c)| (day(i as u32), c)).collect()).unwrap()
    }

    fn returns(days: &[u32], values: &[f64]) -> ReturnSeries {
        ReturnSeries::new(days.iter().zip(values).map(|(&d, &v)| (day(d), v)).collect())
    }

    #[test]
    fn simple_returns() {
        let r = weekly_returns(&prices(&[100.0, 110.0])).unwrap();
        assert_eq!(r.entries().len(), 1);
        assert!((r.values()[0] - 0.10).abs() < 1e-15);
        assert_eq!(r.entries()[0].0, day(1));

        let r = weekly_returns(&prices(&[100.0, 110.0, 99.0])).unwrap();
        assert!((r.values()[0] - 0.10).abs() < 1e-15 && (r.values()[1] + 0.10).abs() < 1e-15);

        let r = weekly_returns(&prices(&[50.0; 5])).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));
        assert!(matches!(weekly_returns(&prices(&[1.0])), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn price_validation() {
        assert!(PriceSeries::new(vec![(day(1), 1.0), (day(0), 2.0)]).is_err());
        assert!(PriceSeries::new(vec![(day(0), 1.0), (day(1), 0.0)]).is_err());
        let text = "date,close\n2021-01-04,10.5\n2021-01-11,11\n";
        let p = PriceSeries::read_csv(text.as_bytes()).unwrap();
        assert_eq!(p.entries().len(), 2);
        match PriceSeries::read_csv("date,close\n2021-01-04,10.5\n2021-13-11,11\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn alignment() {
        let a = returns(&[1, 2, 3], &[0.1, 0.2, 0.3]);
        let s = align(&a, &a).unwrap();
        assert_eq!(s.len(), 3);
        let b = returns(&[2, 3, 4], &[-0.2, -0.3, -0.4]);
        let s = align(&a, &b).unwrap();
        assert_eq!(s.x(), &[0.2, 0.3]);
        assert_eq!(s.y(), &[-0.2, -0.3]);
        assert_eq!(common_dates(&a, &b).unwrap(), vec![day(2), day(3)]);
        let c = returns(&[7, 8], &[0.0, 0.0]);
        assert!(matches!(align(&a, &c), Err(Error::Alignment(_))));
    }

    #[test]
    fn portfolios() {
        let base = returns(&[1, 2], &[0.1, -0.2]);
        let other = returns(&[1, 2], &[0.3, 0.05]);
        assert_eq!(portfolio_returns(0.0, &base, &other).unwrap(), base);
        assert_eq!(portfolio_returns(1.0, &base, &other).unwrap(), other);
        let p = portfolio_returns(0.2, &returns(&[5], &[0.10]), &returns(&[5], &[-0.05])).unwrap();
        assert!((p.values()[0] - 0.07).abs() < 1e-15);
        assert!(portfolio_returns(1.5, &base, &other).is_err());
        assert!(portfolio_returns(0.5, &base, &returns(&[9], &[0.0])).is_err());
    }

    #[test]
    fn qq_modes() {
        let s = PairedSample::new(vec![1.0, 3.0], vec![2.0, 2.0]).unwrap();
        let q = qq_export(&s, QqMode::Differences);
        assert_eq!(q.pairs, vec![(-1.0, -1.0), (1.0, 1.0)]);

        let s = PairedSample::new(vec![0.3, -1.0, 2.0, 0.1], vec![0.3, -1.0, 2.0, 0.1]).unwrap();
        assert!(qq_export(&s, QqMode::Marginals).pairs.iter().all(|(a, b)| a == b));

        let s = PairedSample::new(vec![0.3, -1.0, 2.0, 0.1], vec![1.3, 1.0, -2.0, 0.0]).unwrap();
        let q = qq_export(&s, QqMode::Differences);
        let n = q.pairs.len();
        for i in 0..n {
            assert_eq!(q.pairs[i].0, -q.pairs[n - 1 - i].1);
        }
        assert!(q.pairs.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn case_one_pair_is_strict() {
        let s = generate_scenario(CaseId::C1, 331, 77).unwrap();
        let r = analyze_pair(&s, 100, 4000, 1).unwrap();
        assert!(!r.stwj_forward.reject_at_0_05);
        assert!(r.stwj_reverse.reject_at_0_05);
        assert_eq!(r.verdict, Verdict::StrictDominanceConsistent);
    }

    #[test]
    fn symmetric_pair_is_possibly_equal() {
        // y - x alternates ±i/10 with x varying, so X - Y and Y - X share one law
        let x: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v + if i % 2 == 0 { 1.0 } else { -1.0 } * (i / 2 + 1) as f64 / 10.0)
            .collect();
        let s = PairedSample::new(x, y).unwrap();
        let r = analyze_pair(&s, 100, 4000, 2).unwrap();
        assert!(!r.stwj_forward.reject_at_0_05 && !r.stwj_reverse.reject_at_0_05);
        assert_eq!(r.verdict, Verdict::PossiblyEqualInDistributionOfDifferences);
    }

    #[test]
    fn identical_pair_is_degenerate() {
        let s = PairedSample::new(vec![0.1, 0.2, 0.3], vec![0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(analyze_pair(&s, 10, 1000, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn report_json_keys() {
        let s = generate_scenario(CaseId::C1, 40, 3).unwrap();
        let r = analyze_pair(&s, 20, 500, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for key in ["stwj_forward", "stwj_reverse", "t_test", "verdict"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["verdict"].is_string());
    }
}

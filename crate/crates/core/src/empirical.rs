//! Paired samples, difference samples, empirical survival functions and the
//! Kolmogorov-Smirnov type dominance statistic.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` index-aligned observations of a dependent pair `(X, Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PairedSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidSample(format!(
                "length mismatch: {} x values, {} y values",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidSample("sample is empty".into()));
        }
        if let Some(i) = x.iter().zip(&y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite value in pair {i}")));
        }
        Ok(Self { x, y })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    /// Exchanges the roles of `X` and `Y`.
    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }

    /// Reads the `x,y` CSV format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(&mut rdr, &["x", "y"])?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(Error::from_csv)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 2 fields, found {}", rec.len()),
                });
            }
            x.push(parse_real(&rec[0], line)?);
            y.push(parse_real(&rec[1], line)?);
        }
        Self::new(x, y)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().from_writer(writer);
        wtr.write_record(["x", "y"]).map_err(Error::from_csv)?;
        for (a, b) in self.pairs() {
            wtr.write_record([a.to_string(), b.to_string()])
                .map_err(Error::from_csv)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(Error::from_csv)?;
    let names: Vec<&str> = header.iter().collect();
    if names != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), names.join(",")),
        });
    }
    Ok(())
}

pub(crate) fn parse_real(field: &str, line: u64) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{field}` is not a real number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("`{field}` is not finite"),
        });
    }
    Ok(v)
}

/// Returns `(x - y, y - x)` elementwise.
pub fn differences(s: &PairedSample) -> (Vec<f64>, Vec<f64>) {
    let d_xy: Vec<f64> = s.pairs().map(|(a, b)| a - b).collect();
    let d_yx = d_xy.iter().map(|d| -d).collect();
    (d_xy, d_yx)
}

/// Right-continuous step survival function `t -> #{v > t} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSurvival {
    sorted: Vec<f64>,
}

impl EmpiricalSurvival {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { sorted: values }
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn survival_at(&self, t: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        let at_most = self.sorted.partition_point(|&v| v <= t);
        (self.sorted.len() - at_most) as f64 / self.sorted.len() as f64
    }
}

/// Survival functions of `X - Y` and `Y - X` for a sample.
#[derive(Debug, Clone)]
pub struct DifferenceSurvivals {
    pub xy: EmpiricalSurvival,
    pub yx: EmpiricalSurvival,
}

impl DifferenceSurvivals {
    pub fn new(s: &PairedSample) -> Self {
        let (d_xy, d_yx) = differences(s);
        Self {
            xy: EmpiricalSurvival::new(d_xy),
            yx: EmpiricalSurvival::new(d_yx),
        }
    }

    /// `F̄_n(t) - Ḡ_n(t)`.
    pub fn gap(&self, t: f64) -> f64 {
        self.xy.survival_at(t) - self.yx.survival_at(t)
    }

    /// Largest value in the combined difference multiset.
    pub fn max_abs(&self) -> f64 {
        let a = self.xy.sorted.last().copied().unwrap_or(0.0);
        let b = self.yx.sorted.last().copied().unwrap_or(0.0);
        a.max(b)
    }
}

/// `√n · sup_{t ≥ 0} (F̄_n(t) − Ḡ_n(t))`.
///
/// Both survivals are right-continuous and only jump at realized
/// differences, so the supremum over `[0, ∞)` is attained on `{0}` together
/// with the nonnegative realized values. A negative supremum is returned as
/// is.
pub fn statistic_stwj(s: &PairedSample) -> f64 {
    let surv = DifferenceSurvivals::new(s);
    statistic_from_survivals(&surv, s.len())
}

pub(crate) fn statistic_from_survivals(surv: &DifferenceSurvivals, n: usize) -> f64 {
    let candidates = std::iter::once(0.0).chain(
        surv.xy
            .sorted
            .iter()
            .chain(&surv.yx.sorted)
            .copied()
            .filter(|&z| z >= 0.0),
    );
    let sup = candidates
        .map(|t| surv.gap(t))
        .fold(f64::NEG_INFINITY, f64::max);
    (n as f64).sqrt() * sup
}

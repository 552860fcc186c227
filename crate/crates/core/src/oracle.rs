//! Exact order checks on finite bivariate laws, plus the analytic criteria
//! (Clayton copula condition, bivariate normal) used as ground truth.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::distributions::{BivariateNormalParams, ClaytonParams};
use crate::empirical::{check_header, parse_real, PairedSample};
use crate::error::{Error, Result};

/// Absolute slack used when comparing two probabilities that are sums of
/// atom weights.
pub const PROB_TOL: f64 = 1e-12;

/// Default cap on the number of atoms produced by [`convolve_independent`].
pub const DEFAULT_ATOM_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub y: f64,
    pub p: f64,
}

/// A finite law of `(X, Y)` given by weighted atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBivariate {
    atoms: Vec<Atom>,
}

impl DiscreteBivariate {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Parameter("law has no atoms".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !a.x.is_finite() || !a.y.is_finite() {
                return Err(Error::Parameter(format!("atom {i} has non-finite coordinates")));
            }
            if !(a.p > 0.0 && a.p.is_finite()) {
                return Err(Error::Parameter(format!("atom {i} has weight {}", a.p)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.p).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Parameter(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(triples.iter().map(|&(x, y, p)| Atom { x, y, p }).collect())
    }

    /// Empirical law of a paired sample: weight `1/n` on every pair, with
    /// repeated pairs merged.
    pub fn empirical(s: &PairedSample) -> Self {
        let w = 1.0 / s.len() as f64;
        let atoms = s.pairs().map(|(x, y)| Atom { x, y, p: w }).collect();
        Self { atoms: merge_atoms(atoms) }
    }

    /// Discretizes a bivariate normal law onto an `m × m` lattice spanning
    /// six standard deviations of the wider marginal around each mean. Both
    /// axes share the same spacing and the lattice is centrally symmetric
    /// about the mean, so the law of `X - Y - (μ1 - μ2)` stays symmetric.
    pub fn discretize_normal(params: &BivariateNormalParams, m: usize) -> Result<Self> {
        params.validate()?;
        if m < 2 {
            return Err(Error::Parameter("discretization needs at least 2 cells per axis".into()));
        }
        let (s11, s12, s22) = (params.s11(), params.s12(), params.s22());
        let det = s11 * s22 - s12 * s12;
        if det <= 0.0 {
            return Err(Error::Parameter("discretization needs a nonsingular covariance".into()));
        }
        let half = 6.0 * s11.max(s22).sqrt();
        let h = 2.0 * half / m as f64;
        let mut offsets: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) * h - half).collect();
        for i in 0..m / 2 {
            offsets[m - 1 - i] = -offsets[i];
        }
        let mut atoms = Vec::with_capacity(m * m);
        for &dx in &offsets {
            for &dy in &offsets {
                let q = (s22 * dx * dx - 2.0 * s12 * dx * dy + s11 * dy * dy) / det;
                let w = (-0.5 * q).exp();
                if w > 0.0 {
                    atoms.push(Atom { x: params.mu[0] + dx, y: params.mu[1] + dy, p: w });
                }
            }
        }
        let total: f64 = atoms.iter().map(|a| a.p).sum();
        for a in &mut atoms {
            a.p /= total;
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn swapped(&self) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| Atom { x: a.y, y: a.x, p: a.p }).collect(),
        }
    }

    pub fn mean_x(&self) -> f64 {
        self.atoms.iter().map(|a| a.p * a.x).sum()
    }

    pub fn mean_y(&self) -> f64 {
        self.atoms.iter().map(|a| a.p * a.y).sum()
    }

    /// Reads the `x,y,p` CSV format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(&mut rdr, &["x", "y", "p"])?;
        let mut atoms = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(Error::from_csv)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 3 fields, found {}", rec.len()),
                });
            }
            atoms.push(Atom {
                x: parse_real(&rec[0], line)?,
                y: parse_real(&rec[1], line)?,
                p: parse_real(&rec[2], line)?,
            });
        }
        Self::new(atoms)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["x", "y", "p"]).map_err(Error::from_csv)?;
        for a in &self.atoms {
            wtr.write_record([a.x.to_string(), a.y.to_string(), a.p.to_string()])
                .map_err(Error::from_csv)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if (last.x - a.x).abs() <= 1e-12 && (last.y - a.y).abs() <= 1e-12 => {
                last.p += a.p
            }
            _ => out.push(a),
        }
    }
    out
}

/// Which difference a survival probability refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difference {
    XMinusY,
    YMinusX,
}

/// Outcome of an exact order check. `witness` carries a point at which the
/// defining inequality fails; it is present exactly when `holds` is false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderVerdict {
    pub holds: bool,
    pub witness: Option<f64>,
}

impl OrderVerdict {
    fn holds() -> Self {
        Self { holds: true, witness: None }
    }

    fn fails_at(t: f64) -> Self {
        Self { holds: false, witness: Some(t) }
    }
}

/// Exact `P(X − Y > t)` or `P(Y − X > t)`.
pub fn survival_of_difference(d: &DiscreteBivariate, which: Difference, t: f64) -> f64 {
    d.atoms
        .iter()
        .filter(|a| match which {
            Difference::XMinusY => a.x - a.y > t,
            Difference::YMinusX => a.y - a.x > t,
        })
        .map(|a| a.p)
        .sum()
}

/// Finite law on the line, kept sorted with cumulative weights so that
/// `P(V > t)` and `P(V ≥ t)` are binary searches.
struct StepLaw {
    values: Vec<f64>,
    // tail[i] = total weight of values[i..]
    tail: Vec<f64>,
}

impl StepLaw {
    fn new(mut pts: Vec<(f64, f64)>) -> Self {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let values: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mut tail = vec![0.0; pts.len() + 1];
        for i in (0..pts.len()).rev() {
            tail[i] = tail[i + 1] + pts[i].1;
        }
        Self { values, tail }
    }

    fn greater(&self, t: f64) -> f64 {
        self.tail[self.values.partition_point(|&v| v <= t)]
    }

    fn at_least(&self, t: f64) -> f64 {
        self.tail[self.values.partition_point(|&v| v < t)]
    }
}

/// True when the survival function of `lo` lies below that of `hi` at every
/// real point; otherwise the first support value where it does not.
///
/// Both survivals are right-continuous steps that only move at support
/// points, so comparing `P(· > c)` and `P(· ≥ c)` at every support value `c`
/// covers every interval of constancy.
fn dominated(lo: &StepLaw, hi: &StepLaw) -> OrderVerdict {
    let mut points: Vec<f64> = lo.values.iter().chain(&hi.values).copied().collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    for c in points {
        if lo.greater(c) > hi.greater(c) + PROB_TOL || lo.at_least(c) > hi.at_least(c) + PROB_TOL {
            return OrderVerdict::fails_at(c);
        }
    }
    OrderVerdict::holds()
}

fn difference_laws(d: &DiscreteBivariate) -> (StepLaw, StepLaw) {
    let xy = d.atoms.iter().map(|a| (a.x - a.y, a.p)).collect();
    let yx = d.atoms.iter().map(|a| (a.y - a.x, a.p)).collect();
    (StepLaw::new(xy), StepLaw::new(yx))
}

/// Exact check of `P(X − Y > t) ≤ P(Y − X > t)` for all real `t`.
pub fn check_st_wj_discrete(d: &DiscreteBivariate) -> OrderVerdict {
    let (xy, yx) = difference_laws(d);
    dominated(&xy, &yx)
}

/// Exact `(P(X > Y), P(Y > X))`.
pub fn check_precedence(d: &DiscreteBivariate) -> (f64, f64) {
    let p_xy = d.atoms.iter().filter(|a| a.x > a.y).map(|a| a.p).sum();
    let p_yx = d.atoms.iter().filter(|a| a.y > a.x).map(|a| a.p).sum();
    (p_xy, p_yx)
}

/// Usual stochastic order between the marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalOrder {
    /// Both survivals coincide.
    Equal,
    XBelowY,
    YBelowX,
    Incomparable,
}

pub fn check_st_marginals_discrete(d: &DiscreteBivariate) -> MarginalOrder {
    let x = StepLaw::new(d.atoms.iter().map(|a| (a.x, a.p)).collect());
    let y = StepLaw::new(d.atoms.iter().map(|a| (a.y, a.p)).collect());
    match (dominated(&x, &y).holds, dominated(&y, &x).holds) {
        (true, true) => MarginalOrder::Equal,
        (true, false) => MarginalOrder::XBelowY,
        (false, true) => MarginalOrder::YBelowX,
        (false, false) => MarginalOrder::Incomparable,
    }
}

/// Law of `(ΣX_i, ΣY_i)` for mutually independent inputs. Coincident atoms
/// are merged after each product step; fails once an intermediate product
/// would exceed `cap` atoms.
pub fn convolve_independent(ds: &[DiscreteBivariate], cap: usize) -> Result<DiscreteBivariate> {
    let (first, rest) = ds
        .split_first()
        .ok_or_else(|| Error::Parameter("nothing to convolve".into()))?;
    let mut acc = first.atoms.clone();
    for d in rest {
        let size = acc.len().checked_mul(d.atoms.len()).filter(|&s| s <= cap);
        let Some(size) = size else {
            return Err(Error::Capacity(format!(
                "convolution of {} by {} atoms exceeds the cap of {cap}",
                acc.len(),
                d.atoms.len()
            )));
        };
        let mut next = Vec::with_capacity(size);
        for a in &acc {
            for b in &d.atoms {
                next.push(Atom { x: a.x + b.x, y: a.y + b.y, p: a.p * b.p });
            }
        }
        acc = merge_atoms(next);
    }
    Ok(DiscreteBivariate { atoms: acc })
}

/// Uniform interior grid `i / (m + 1)`, `i = 1..=m`.
fn interior_grid(m: usize) -> Vec<f64> {
    (1..=m).map(|i| i as f64 / (m + 1) as f64).collect()
}

/// Grid check of `∂C/∂u(u, v1) ≤ ∂C/∂v(v2, u)` for the Clayton copula over
/// all grid triples with `v1 ≤ v2`. A failing triple is reported as the
/// flattened index `(iu · m + i1) · m + i2`.
pub fn check_copula_condition(theta: f64, grid_size: usize) -> Result<OrderVerdict> {
    let cop = ClaytonParams::new(theta)?;
    if grid_size < 2 {
        return Err(Error::Parameter("grid_size must be at least 2".into()));
    }
    let t = cop.theta();
    let first_partial = |u: f64, v: f64| cop.partial_u(u, v);
    let second_partial =
        |u: f64, v: f64| v.powf(-t - 1.0) * (u.powf(-t) + v.powf(-t) - 1.0).powf(-1.0 / t - 1.0);
    let grid = interior_grid(grid_size);
    let m = grid_size;
    for (iu, &u) in grid.iter().enumerate() {
        for (i1, &v1) in grid.iter().enumerate() {
            let lhs = first_partial(u, v1);
            for (i2, &v2) in grid.iter().enumerate().skip(i1) {
                let rhs = second_partial(v2, u);
                if lhs > rhs * (1.0 + 1e-12) {
                    return Ok(OrderVerdict::fails_at(((iu * m + i1) * m + i2) as f64));
                }
            }
        }
    }
    Ok(OrderVerdict::holds())
}

/// Under bivariate normality `X − Y` and `Y − X` differ only in location, so
/// the order reduces to `μ1 ≤ μ2`.
pub fn analytic_st_wj_bivariate_normal(params: &BivariateNormalParams) -> Result<bool> {
    params.validate()?;
    let var_diff = params.s11() + params.s22() - 2.0 * params.s12();
    if var_diff < -1e-12 {
        return Err(Error::Parameter(format!("Var(X - Y) = {var_diff} is negative")));
    }
    Ok(params.mu[0].partial_cmp(&params.mu[1]) != Some(Ordering::Greater))
}

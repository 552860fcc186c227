//! Parametric marginals and the two bivariate generators used by the
//! scenarios: a Cholesky-based bivariate normal and a Clayton copula sampled
//! by conditional inversion.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::empirical::PairedSample;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// A univariate marginal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum MarginalDist {
    Normal { mu: f64, sigma: f64 },
    /// `F(x) = 1 - (scale / x)^shape` for `x >= scale`.
    Pareto { shape: f64, scale: f64 },
    /// `F(x) = 1 - exp(-(x / scale)^shape)` for `x >= 0`.
    Weibull { shape: f64, scale: f64 },
}

impl MarginalDist {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        let d = MarginalDist::Normal { mu, sigma };
        d.validate()?;
        Ok(d)
    }

    pub fn pareto(shape: f64, scale: f64) -> Result<Self> {
        let d = MarginalDist::Pareto { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        let d = MarginalDist::Weibull { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match *self {
            MarginalDist::Normal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(Error::Parameter(format!("normal mean must be finite, got {mu}")));
                }
                positive("normal sigma", sigma)
            }
            MarginalDist::Pareto { shape, scale } => {
                positive("pareto shape", shape)?;
                positive("pareto scale", scale)
            }
            MarginalDist::Weibull { shape, scale } => {
                positive("weibull shape", shape)?;
                positive("weibull scale", scale)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            MarginalDist::Normal { mu, sigma } => std_normal().cdf((x - mu) / sigma),
            MarginalDist::Pareto { shape, scale } => {
                if x <= scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(shape)
                }
            }
            MarginalDist::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
        })
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.validate()?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(p));
        }
        Ok(self.quantile_unchecked(p))
    }

    /// Quantile for parameters already validated and `p` in `(0, 1)`.
    fn quantile_unchecked(&self, p: f64) -> f64 {
        match *self {
            MarginalDist::Normal { mu, sigma } => mu + sigma * std_normal().inverse_cdf(p),
            // 1 - p computed as the log of the upper tail keeps precision near p = 1
            MarginalDist::Pareto { shape, scale } => scale * (-(-p).ln_1p() / shape).exp(),
            MarginalDist::Weibull { shape, scale } => scale * (-(-p).ln_1p()).powf(1.0 / shape),
        }
    }

    /// Mean of the law, `None` when it is infinite.
    pub fn mean(&self) -> Option<f64> {
        match *self {
            MarginalDist::Normal { mu, .. } => Some(mu),
            MarginalDist::Pareto { shape, scale } => {
                (shape > 1.0).then(|| shape * scale / (shape - 1.0))
            }
            MarginalDist::Weibull { shape, scale } => {
                Some(scale * statrs::function::gamma::gamma(1.0 + 1.0 / shape))
            }
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Mean vector and covariance matrix of a bivariate normal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateNormalParams {
    pub mu: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl BivariateNormalParams {
    pub fn new(mu: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let p = Self { mu, cov };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let [[s11, s12], [s21, s22]] = self.cov;
        if self.mu.iter().chain(self.cov.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite normal parameter".into()));
        }
        if (s12 - s21).abs() > 1e-12 * (1.0 + s12.abs()) {
            return Err(Error::Parameter(format!("covariance not symmetric: {s12} vs {s21}")));
        }
        if s11 < 0.0 || s22 < 0.0 {
            return Err(Error::Parameter("negative variance".into()));
        }
        if s11 * s22 - s12 * s12 < -1e-12 {
            return Err(Error::Parameter("covariance not positive semidefinite".into()));
        }
        Ok(())
    }

    pub fn s11(&self) -> f64 {
        self.cov[0][0]
    }

    pub fn s12(&self) -> f64 {
        self.cov[0][1]
    }

    pub fn s22(&self) -> f64 {
        self.cov[1][1]
    }

    /// Lower Cholesky factor `[l11, l21, l22]`. A vanishing pivot is set to
    /// zero, which handles singular but PSD matrices.
    pub fn cholesky(&self) -> Result<[f64; 3]> {
        let (s11, s12, s22) = (self.s11(), self.s12(), self.s22());
        let tol = 1e-12 * (1.0 + s11.abs().max(s22.abs()));
        if s11 < -tol {
            return Err(Error::Factorization(format!("negative pivot {s11}")));
        }
        let (l11, l21) = if s11 <= tol {
            if s12.abs() > tol {
                return Err(Error::Factorization(
                    "zero variance with nonzero covariance".into(),
                ));
            }
            (0.0, 0.0)
        } else {
            let l11 = s11.sqrt();
            (l11, s12 / l11)
        };
        let rem = s22 - l21 * l21;
        if rem < -tol {
            return Err(Error::Factorization(format!("negative pivot {rem}")));
        }
        Ok([l11, l21, rem.max(0.0).sqrt()])
    }
}

/// Draws `n` pairs from a bivariate normal law.
pub fn sample_bivariate_normal(
    params: &BivariateNormalParams,
    n: usize,
    seed: u64,
) -> Result<PairedSample> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    let [l11, l21, l22] = params.cholesky()?;
    let mut rng = stream_rng(seed, 0);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        x.push(params.mu[0] + l11 * z1);
        y.push(params.mu[1] + l21 * z1 + l22 * z2);
    }
    PairedSample::new(x, y)
}

/// Clayton copula `C(u, v) = (u^-θ + v^-θ - 1)^(-1/θ)` with `θ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaytonParams {
    theta: f64,
}

impl ClaytonParams {
    pub fn new(theta: f64) -> Result<Self> {
        if theta.is_finite() && theta > 0.0 {
            Ok(Self { theta })
        } else {
            Err(Error::Parameter(format!("clayton theta must be > 0, got {theta}")))
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        let t = self.theta;
        (u.powf(-t) + v.powf(-t) - 1.0).powf(-1.0 / t)
    }

    /// `∂C/∂u` at `(u, v)`, the conditional law of `V` given `U = u`.
    pub fn partial_u(&self, u: f64, v: f64) -> f64 {
        let t = self.theta;
        u.powf(-t - 1.0) * (u.powf(-t) + v.powf(-t) - 1.0).powf(-1.0 / t - 1.0)
    }

    /// Solves `∂C/∂u(u, v) = w` for `v`.
    pub fn conditional_inverse(&self, u: f64, w: f64) -> f64 {
        let t = self.theta;
        ((w.powf(-t / (1.0 + t)) - 1.0) * u.powf(-t) + 1.0).powf(-1.0 / t)
    }

    /// Kendall's tau, `θ / (θ + 2)`.
    pub fn kendall_tau(&self) -> f64 {
        self.theta / (self.theta + 2.0)
    }
}

/// Draws `n` pairs `(U, V)` on the unit square from the Clayton copula.
pub fn sample_clayton_uniforms(theta: f64, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let cop = ClaytonParams::new(theta)?;
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    Ok((0..n)
        .map(|_| {
            let u = open_unit(&mut rng);
            let w = open_unit(&mut rng);
            // clamp guards the rare rounding to exactly 0 or 1 for extreme draws
            let v = cop.conditional_inverse(u, w).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            (u, v)
        })
        .collect())
}

/// Draws `n` pairs with the given marginals joined by a Clayton copula.
pub fn sample_clayton_bivariate(
    theta: f64,
    mx: &MarginalDist,
    my: &MarginalDist,
    n: usize,
    seed: u64,
) -> Result<PairedSample> {
    mx.validate()?;
    my.validate()?;
    let uv = sample_clayton_uniforms(theta, n, seed)?;
    let (x, y) = uv
        .into_iter()
        .map(|(u, v)| (mx.quantile_unchecked(u), my.quantile_unchecked(v)))
        .unzip();
    PairedSample::new(x, y)
}

/// Uniform draw on the open interval (0, 1).
fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

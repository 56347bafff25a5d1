use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use super::normal;
use crate::error::{Error, Result};

/// Marginal distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Normal,
    Lognormal,
    /// Four-parameter beta on `[lower, upper]`.
    ScaledBeta,
}

/// Which marginal function [`RandomVariable::evaluate`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    Pdf,
    Cdf,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToStandardNormal,
    FromStandardNormal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Normal,
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    ScaledBeta {
        lower: f64,
        upper: f64,
        alpha: f64,
        beta: f64,
        ln_beta: f64,
    },
}

/// A named marginal distribution parameterized by its mean and standard
/// deviation. Shape parameters are derived by exact moment matching.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomVariable {
    name: String,
    mean: f64,
    std: f64,
    shape: Shape,
}

impl RandomVariable {
    pub fn new(
        name: impl Into<String>,
        kind: DistributionKind,
        mean: f64,
        std: f64,
        support: Option<(f64, f64)>,
    ) -> Result<Self> {
        let name = name.into();
        if !(mean.is_finite() && std.is_finite()) {
            return Err(Error::Domain(format!("{name}: mean and std must be finite")));
        }
        if std <= 0.0 {
            return Err(Error::Domain(format!("{name}: std must be > 0, got {std}")));
        }
        let shape = match kind {
            DistributionKind::Normal => Shape::Normal,
            DistributionKind::Lognormal => {
                if mean <= 0.0 {
                    return Err(Error::Domain(format!(
                        "{name}: lognormal mean must be > 0, got {mean}"
                    )));
                }
                let cv2 = (std / mean).powi(2);
                let sigma = cv2.ln_1p().sqrt();
                let mu = mean.ln() - 0.5 * cv2.ln_1p();
                Shape::Lognormal { mu, sigma }
            }
            DistributionKind::ScaledBeta => {
                let (lower, upper) = support.ok_or_else(|| {
                    Error::Domain(format!("{name}: scaled_beta requires a support (lower, upper)"))
                })?;
                if !(lower < mean && mean < upper) {
                    return Err(Error::Domain(format!(
                        "{name}: scaled_beta needs lower < mean < upper, got {lower} < {mean} < {upper}"
                    )));
                }
                if std * std >= (mean - lower) * (upper - mean) {
                    return Err(Error::Domain(format!(
                        "{name}: variance {} too large for support [{lower}, {upper}]",
                        std * std
                    )));
                }
                let width = upper - lower;
                let m = (mean - lower) / width;
                let v = (std / width).powi(2);
                let common = m * (1.0 - m) / v - 1.0;
                let alpha = m * common;
                let beta = (1.0 - m) * common;
                Shape::ScaledBeta {
                    lower,
                    upper,
                    alpha,
                    beta,
                    ln_beta: ln_beta(alpha, beta),
                }
            }
        };
        Ok(Self {
            name,
            mean,
            std,
            shape,
        })
    }

    pub fn normal(name: impl Into<String>, mean: f64, std: f64) -> Result<Self> {
        Self::new(name, DistributionKind::Normal, mean, std, None)
    }

    pub fn lognormal(name: impl Into<String>, mean: f64, std: f64) -> Result<Self> {
        Self::new(name, DistributionKind::Lognormal, mean, std, None)
    }

    pub fn scaled_beta(
        name: impl Into<String>,
        mean: f64,
        std: f64,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        Self::new(
            name,
            DistributionKind::ScaledBeta,
            mean,
            std,
            Some((lower, upper)),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> DistributionKind {
        match self.shape {
            Shape::Normal => DistributionKind::Normal,
            Shape::Lognormal { .. } => DistributionKind::Lognormal,
            Shape::ScaledBeta { .. } => DistributionKind::ScaledBeta,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::ScaledBeta { lower, upper, .. } => Some((lower, upper)),
            _ => None,
        }
    }

    /// Log-scale parameters `(μ_ln, σ_ln)` of a lognormal variable.
    pub fn log_params(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Lognormal { mu, sigma } => Some((mu, sigma)),
            _ => None,
        }
    }

    /// Unit-support shape parameters `(α, β)` of a scaled beta variable.
    pub fn beta_shape(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::ScaledBeta { alpha, beta, .. } => Some((alpha, beta)),
            _ => None,
        }
    }

    /// Mean and standard deviation recomputed from the internal shape parameters.
    pub fn implied_moments(&self) -> (f64, f64) {
        match self.shape {
            Shape::Normal => (self.mean, self.std),
            Shape::Lognormal { mu, sigma } => {
                let s2 = sigma * sigma;
                let m = (mu + 0.5 * s2).exp();
                (m, m * s2.exp_m1().sqrt())
            }
            Shape::ScaledBeta {
                lower,
                upper,
                alpha,
                beta,
                ..
            } => {
                let w = upper - lower;
                let t = alpha + beta;
                (
                    lower + w * alpha / t,
                    w * (alpha * beta / (t * t * (t + 1.0))).sqrt(),
                )
            }
        }
    }

    pub fn evaluate(&self, x: f64, which: Evaluation) -> Result<f64> {
        match which {
            Evaluation::Pdf => self.pdf(x),
            Evaluation::Cdf => self.cdf(x),
            Evaluation::Quantile => self.quantile(x),
        }
    }

    pub fn transform(&self, value: f64, direction: Direction) -> Result<f64> {
        match direction {
            Direction::ToStandardNormal => self.to_standard_normal(value),
            Direction::FromStandardNormal => self.from_standard_normal(value),
        }
    }

    fn check_support(&self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("{}: non-finite input {x}", self.name)));
        }
        match self.shape {
            Shape::Normal => Ok(()),
            Shape::Lognormal { .. } if x <= 0.0 => Err(Error::Domain(format!(
                "{}: {x} is outside the lognormal support (0, inf)",
                self.name
            ))),
            Shape::ScaledBeta { lower, upper, .. } if x < lower || x > upper => {
                Err(Error::Domain(format!(
                    "{}: {x} is outside the support [{lower}, {upper}]",
                    self.name
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        Ok(match self.shape {
            Shape::Normal => normal::pdf((x - self.mean) / self.std) / self.std,
            Shape::Lognormal { mu, sigma } => normal::pdf((x.ln() - mu) / sigma) / (sigma * x),
            Shape::ScaledBeta {
                lower,
                upper,
                alpha,
                beta,
                ln_beta,
            } => {
                let w = upper - lower;
                let y = (x - lower) / w;
                if (y == 0.0 && alpha < 1.0) || (y == 1.0 && beta < 1.0) {
                    f64::INFINITY
                } else if y == 0.0 || y == 1.0 {
                    0.0
                } else {
                    ((alpha - 1.0) * y.ln() + (beta - 1.0) * (-y).ln_1p() - ln_beta).exp() / w
                }
            }
        })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        Ok(match self.shape {
            Shape::ScaledBeta {
                lower,
                upper,
                alpha,
                beta,
                ..
            } => beta_reg(alpha, beta, ((x - lower) / (upper - lower)).clamp(0.0, 1.0)),
            _ => normal::cdf(self.standardize(x)),
        })
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "{}: quantile input must lie in (0, 1), got {p}",
                self.name
            )));
        }
        Ok(match self.shape {
            Shape::ScaledBeta {
                lower,
                upper,
                alpha,
                beta,
                ..
            } => {
                let y = if p <= 0.5 {
                    inverse_beta_reg(p, alpha, beta)
                } else {
                    1.0 - inverse_beta_reg(1.0 - p, beta, alpha)
                };
                lower + (upper - lower) * y
            }
            _ => self.unstandardize(normal::quantile(p)),
        })
    }

    /// `u = Φ⁻¹(F(x))`, computed from the smaller tail so the round trip
    /// stays accurate far from the median.
    pub fn to_standard_normal(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        Ok(match self.shape {
            Shape::ScaledBeta {
                lower,
                upper,
                alpha,
                beta,
                ..
            } => {
                let y = ((x - lower) / (upper - lower)).clamp(0.0, 1.0);
                let p = beta_reg(alpha, beta, y);
                if p <= 0.5 {
                    normal::quantile(p)
                } else {
                    normal::isf(beta_reg(beta, alpha, 1.0 - y))
                }
            }
            _ => self.standardize(x),
        })
    }

    pub fn from_standard_normal(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::Domain(format!("{}: non-finite input {u}", self.name)));
        }
        Ok(self.from_standard_normal_unchecked(u))
    }

    /// Same as [`from_standard_normal`](Self::from_standard_normal) without
    /// the finiteness check; used in sampling loops.
    pub fn from_standard_normal_unchecked(&self, u: f64) -> f64 {
        match self.shape {
            Shape::ScaledBeta {
                lower,
                upper,
                alpha,
                beta,
                ..
            } => {
                let y = if u <= 0.0 {
                    inverse_beta_reg(normal::cdf(u), alpha, beta)
                } else {
                    1.0 - inverse_beta_reg(normal::sf(u), beta, alpha)
                };
                lower + (upper - lower) * y
            }
            _ => self.unstandardize(u),
        }
    }

    #[inline]
    fn standardize(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Lognormal { mu, sigma } => (x.ln() - mu) / sigma,
            _ => (x - self.mean) / self.std,
        }
    }

    #[inline]
    fn unstandardize(&self, u: f64) -> f64 {
        match self.shape {
            Shape::Lognormal { mu, sigma } => (mu + sigma * u).exp(),
            _ => self.mean + self.std * u,
        }
    }
}

/// Solves `I_y(a, b) = p` for `y`, intended for `p ≤ 0.5`.
///
/// Newton on `ln I_y(a, b)` with a maintained bracket; bisection whenever a
/// step leaves the bracket.
fn inverse_beta_reg(p: f64, a: f64, b: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let ln_b = ln_beta(a, b);
    let ln_p = p.ln();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let t = a + b;
    let mean = a / t;
    let sd = (a * b / (t * t * (t + 1.0))).sqrt();
    let mut y = (mean + sd * normal::quantile(p)).clamp(1e-12, 1.0 - 1e-12);
    for _ in 0..200 {
        let f = beta_reg(a, b, y);
        if f < p {
            lo = y;
        } else {
            hi = y;
        }
        if f <= 0.0 {
            y = 0.5 * (lo + hi);
            continue;
        }
        let ln_dens = (a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p() - ln_b;
        let step = (f.ln() - ln_p) * f / ln_dens.exp();
        let mut next = y - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * y.max(1e-300) || hi - lo <= 1e-15 * y {
            return next;
        }
        y = next;
    }
    y
}

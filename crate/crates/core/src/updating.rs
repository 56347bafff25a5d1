//! Reliability updating with equality information.
//!
//! A measurement `z = s(X) + E` with Gaussian error `E` enters through the
//! auxiliary-variable identity `L(x) = P(U ≤ Φ⁻¹(c·L(x))) / c`, which turns
//! the likelihood into an ordinary limit state `h(U, X) = U − Φ⁻¹(c·L(X))`.
//! The posterior failure probability is assembled as
//!
//! ```text
//! P(F|Z) = (c1 / c2) · P(h2 ≤ 0 | F) · P(F) / P(h1 ≤ 0)
//! ```
//!
//! with `P(F)` from subset simulation, `P(h1 ≤ 0)` from quadrature (or crude
//! Monte Carlo) over the prior, and `P(h2 ≤ 0 | F)` from the failure samples that subset
//! simulation retained. The subset-simulation sample size grows until the
//! COV of `P(F|Z)` meets the target.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground::GroundPoint;
use crate::prob::{derive_seed, index, normal, stream};
use crate::scenario::Scenario;
use crate::soi::r_up;
use crate::subset::{run_subset_simulation, SubsetSimParams, SubsetSimResult};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standard deviations of the two additive settlement errors (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModel {
    /// Measurement error.
    pub sigma_m: f64,
    /// Settlement-model error.
    pub sigma_f: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            sigma_m: 1.0,
            sigma_f: 2.0,
        }
    }
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_m", self.sigma_m), ("sigma_f", self.sigma_f)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("errors.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Standard deviation of the combined error.
    pub fn sigma_e(&self) -> f64 {
        self.sigma_m.hypot(self.sigma_f)
    }
}

/// A settlement measurement at a surface or subsurface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub location: GroundPoint,
    /// Settlement magnitude (mm).
    pub value: f64,
    pub errors: ErrorModel,
}

/// Gaussian likelihood of an observed value given the model prediction,
/// together with the scale constant `c` of the auxiliary-variable identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLikelihood {
    pub observed: f64,
    pub sigma: f64,
    c: f64,
}

impl GaussianLikelihood {
    /// Uses `c = 1 / sup L`.
    pub fn new(observed: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !observed.is_finite() {
            return Err(Error::Domain(format!(
                "likelihood needs a finite observation and positive sigma, got {observed} and {sigma}"
            )));
        }
        Ok(Self {
            observed,
            sigma,
            c: SQRT_2PI * sigma,
        })
    }

    pub fn for_measurement(m: &Measurement) -> Result<Self> {
        Self::new(m.value, m.errors.sigma_e())
    }

    /// Replaces the scale constant; `c · sup L` must not exceed 1.
    pub fn with_scale_constant(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) || c * self.sup() > 1.0 + 1e-12 {
            return Err(Error::Contract(format!(
                "scale constant {c} violates 0 < c·sup L ≤ 1 (sup L = {})",
                self.sup()
            )));
        }
        self.c = c;
        Ok(self)
    }

    pub fn scale_constant(&self) -> f64 {
        self.c
    }

    pub fn sup(&self) -> f64 {
        1.0 / (SQRT_2PI * self.sigma)
    }

    /// Likelihood of the prediction (mm⁻¹).
    pub fn eval(&self, predicted: f64) -> f64 {
        normal::pdf((self.observed - predicted) / self.sigma) / self.sigma
    }

    /// `c / c_max ∈ (0, 1]`.
    fn kappa(&self) -> f64 {
        self.c * self.sup()
    }

    /// `2σ²(ln κ − ln Φ(u))`: the auxiliary draw `u` accepts a prediction
    /// iff its squared residual does not exceed this bound.
    fn acceptance_bound(&self, log_cdf_u: f64) -> f64 {
        2.0 * self.sigma * self.sigma * (self.kappa().ln() - log_cdf_u)
    }

    fn accepts(&self, predicted: f64, log_cdf_u: f64) -> bool {
        let r = self.observed - predicted;
        r * r <= self.acceptance_bound(log_cdf_u)
    }
}

/// Likelihood of a settlement magnitude (mm) under the combined Gaussian error.
pub fn likelihood(model_magnitude: f64, meas: &Measurement) -> Result<f64> {
    Ok(GaussianLikelihood::for_measurement(meas)?.eval(model_magnitude))
}

/// `c = √(2π)·σ_E`, the reciprocal of the likelihood's peak.
pub fn scale_constant(meas: &Measurement) -> f64 {
    SQRT_2PI * meas.errors.sigma_e()
}

/// `h = u − Φ⁻¹(c·L)`. `c·L = 0` yields `+∞` (never in the event) and
/// `c·L = 1` yields `−∞` (always in the event).
pub fn augmented_lsf(u_aux: f64, c_times_l: f64) -> Result<f64> {
    if !(0.0..=1.0 + 1e-12).contains(&c_times_l) {
        return Err(Error::Contract(format!("c·L must lie in [0, 1], got {c_times_l}")));
    }
    if c_times_l <= 0.0 {
        return Ok(f64::INFINITY);
    }
    if c_times_l >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(u_aux - normal::quantile(c_times_l))
}

/// A reliability problem with one observable quantity.
pub trait ObservationModel: Sync {
    /// Dimension of the standard-normal space of `X`.
    fn dim(&self) -> usize;
    /// `g(u)` in standard-normal space; failure when `g ≤ 0`.
    fn limit_state(&self, u: &[f64]) -> f64;
    /// Model prediction of the observed quantity.
    fn predicted(&self, u: &[f64]) -> f64;
    /// `predicted` only reads `u[..predicted_dims()]`.
    fn predicted_dims(&self) -> usize {
        self.dim()
    }
}

/// Settlement at a monitoring point for the case-study scenario.
pub struct SettlementObservation<'a> {
    pub scenario: &'a Scenario,
    pub location: GroundPoint,
}

impl ObservationModel for SettlementObservation<'_> {
    fn dim(&self) -> usize {
        self.scenario.model.dim()
    }

    fn limit_state(&self, u: &[f64]) -> f64 {
        self.scenario.limit_state_standard(u)
    }

    fn predicted(&self, u: &[f64]) -> f64 {
        self.scenario
            .settlement_magnitude_standard(self.location, u[index::VOLUME_LOSS], u[index::TROUGH_WIDTH])
            .unwrap_or(f64::NAN)
    }

    fn predicted_dims(&self) -> usize {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpdateParams {
    pub cov_thr: f64,
    pub n_ss_initial: usize,
    pub delta_n_ss: usize,
    pub max_outer_iterations: usize,
    pub reciprocal_sim_n: usize,
    /// Prior samples for the crude Monte Carlo estimate of `P(h1 ≤ 0)`.
    pub n_mcs_pz: usize,
    /// Auxiliary draws per retained failure sample (sampled estimator only).
    pub aux_draws: usize,
    pub aux_estimator: AuxEstimator,
    pub evidence: EvidenceMethod,
    /// Nodes per dimension of the evidence quadrature (odd).
    pub quadrature_nodes: usize,
}

/// How `P(Z)` is computed.
///
/// `Quadrature` integrates `c·L` over the standard normal space of the
/// predicted variables on a tensor trapezoid grid (at most two dimensions)
/// and reports the difference to the half-resolution grid as its error.
/// `MonteCarlo` averages over `n_mcs_pz` prior draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceMethod {
    #[default]
    Quadrature,
    MonteCarlo,
}

/// How the auxiliary variable of `h` is handled.
///
/// `Sampled` draws it and counts `h ≤ 0`. `Integrated` replaces each
/// indicator by its conditional expectation `c·L(x)`: same mean, smaller
/// variance, and positive even where no sampled indicator would hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxEstimator {
    #[default]
    Integrated,
    Sampled,
}

impl Default for UpdateParams {
    fn default() -> Self {
        Self {
            cov_thr: 0.05,
            n_ss_initial: 10_000,
            delta_n_ss: 10_000,
            max_outer_iterations: 5,
            reciprocal_sim_n: 1_000_000,
            n_mcs_pz: 1_000_000,
            aux_draws: 1,
            aux_estimator: AuxEstimator::Integrated,
            evidence: EvidenceMethod::Quadrature,
            quadrature_nodes: 513,
        }
    }
}

impl UpdateParams {
    /// Auxiliary draws per failure sample; the integrated estimator needs one
    /// slot per sample only.
    pub fn aux_draws_for(&self) -> usize {
        match self.aux_estimator {
            AuxEstimator::Sampled => self.aux_draws,
            AuxEstimator::Integrated => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cov_thr > 0.0 && self.cov_thr <= 0.3) {
            return Err(Error::Config(format!("update.cov_thr must lie in (0, 0.3], got {}", self.cov_thr)));
        }
        if self.delta_n_ss < 1000 {
            return Err(Error::Config(format!("update.delta_n_ss must be at least 1000, got {}", self.delta_n_ss)));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::Config("update.max_outer_iterations must be at least 1".into()));
        }
        if self.n_mcs_pz < 1000 || self.reciprocal_sim_n < 1000 {
            return Err(Error::Config("update sample sizes must be at least 1000".into()));
        }
        if self.quadrature_nodes < 65 || self.quadrature_nodes % 2 == 0 {
            return Err(Error::Config(format!(
                "update.quadrature_nodes must be odd and at least 65, got {}",
                self.quadrature_nodes
            )));
        }
        if self.aux_draws == 0 {
            return Err(Error::Config("update.aux_draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// One pass of the adaptive loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterIteration {
    pub n_ss: usize,
    pub p_f: f64,
    pub cov_pf: f64,
    pub p_h2_given_f: f64,
    pub p_f_given_z: f64,
    pub cov_pfz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateResult {
    pub p_f: f64,
    pub cov_pf: f64,
    /// Scaled evidence `P(h1 ≤ 0) = c1·P(Z)`.
    pub p_h1: f64,
    pub cov_ph1: f64,
    /// Scaled `P(h2 ≤ 0 | F) = c2·P(Z|F)`.
    pub p_h2_given_f: f64,
    /// Number of auxiliary trials behind `p_h2_given_f`.
    pub n_zf: usize,
    pub c1: f64,
    pub c2: f64,
    pub p_f_given_z: f64,
    pub cov_pfz: f64,
    /// Relative change of the reliability index; NaN when `P(F|Z)` is 0.
    pub r_up: f64,
    /// Limit-state evaluations over all outer iterations.
    pub n_evaluations: usize,
    /// Final subset-simulation sample size per level.
    pub n_ss: usize,
    /// Fraction of reciprocal-moment draws removed by the positivity floor.
    pub truncated_fraction: f64,
    pub trace: Vec<OuterIteration>,
}

/// Inputs of the COV of `P(F|Z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovComponents {
    pub p_f: f64,
    pub cov_pf: f64,
    pub p_zf: f64,
    pub n_zf: usize,
    /// Variance of the `P(Z|F)` estimate; `None` uses the binomial
    /// `p(1 − p)/n_zf`.
    pub var_zf: Option<f64>,
    pub p_z: f64,
    pub cov_pz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalCov {
    pub cov: f64,
    /// COV of the joint term `P(F)·P(Z|F)`.
    pub cov_joint: f64,
    pub truncated_fraction: f64,
}

/// `Var(AB)` for independent `A` and `B`.
pub fn variance_of_product(mean_a: f64, var_a: f64, mean_b: f64, var_b: f64) -> f64 {
    mean_a * mean_a * var_b + mean_b * mean_b * var_a + var_a * var_b
}

/// COV of `P(F|Z) = P(F)·P(Z|F) / P(Z)`.
///
/// `P(Z|F)` is a proportion over `n_zf` trials, so its variance is
/// `p(1 − p)/n_zf` unless the caller supplies it. The moments of `1/P(Z)` come from simulating a normal
/// variable with the mean and COV of `P(Z)`, discarding draws below
/// `10⁻³` of the mean.
pub fn cov_of_conditional(c: &CovComponents, reciprocal_sim_n: usize, seed: u64) -> Result<ConditionalCov> {
    if !(c.cov_pz < 0.2) {
        return Err(Error::Unstable(format!(
            "COV of P(Z) is {:.4}; reciprocal moments need it below 0.2",
            c.cov_pz
        )));
    }
    if c.n_zf == 0 || c.p_zf <= 0.0 || c.p_f <= 0.0 {
        return Ok(ConditionalCov {
            cov: f64::INFINITY,
            cov_joint: f64::INFINITY,
            truncated_fraction: 0.0,
        });
    }
    let var_pf = (c.cov_pf * c.p_f).powi(2);
    let var_zf = c.var_zf.unwrap_or(c.p_zf * (1.0 - c.p_zf) / c.n_zf as f64);
    let e_joint = c.p_f * c.p_zf;
    let var_joint = variance_of_product(c.p_f, var_pf, c.p_zf, var_zf);

    let (e_inv, var_inv, truncated) = if c.cov_pz == 0.0 {
        (1.0 / c.p_z, 0.0, 0.0)
    } else {
        reciprocal_moments(c.p_z, c.cov_pz, reciprocal_sim_n, seed)
    };
    let var = variance_of_product(e_joint, var_joint, e_inv, var_inv);
    Ok(ConditionalCov {
        cov: var.sqrt() / (e_joint * e_inv),
        cov_joint: var_joint.sqrt() / e_joint,
        truncated_fraction: truncated,
    })
}

fn reciprocal_moments(mean: f64, cov: f64, n: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = stream(seed, "reciprocal", 0);
    let sd = cov * mean;
    let floor = 1e-3 * mean;
    let (mut kept, mut sum, mut sum2) = (0usize, 0.0, 0.0);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let y = mean + sd * z;
        if y < floor {
            continue;
        }
        let r = 1.0 / y;
        kept += 1;
        sum += r;
        sum2 += r * r;
    }
    let m = sum / kept as f64;
    let var = (sum2 / kept as f64 - m * m).max(0.0) * kept as f64 / (kept - 1) as f64;
    (m, var, (n - kept) as f64 / n as f64)
}

/// Prior-predictive draws for the evidence estimate: the model prediction of
/// each prior sample and `ln Φ(u_aux)` of its auxiliary variable.
///
/// The same draws serve any observed value, which is how one sweep over the
/// prior is shared by all information values of a sensitivity integral.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub predicted: Vec<f64>,
    pub log_cdf_aux: Vec<f64>,
    /// Quadrature weights on the full and the half-resolution grid; `None`
    /// for random draws.
    pub weights: Option<(Vec<f64>, Vec<f64>)>,
}

/// Half-width of the quadrature box in standard normal space.
const QUADRATURE_HALF_WIDTH: f64 = 8.5;

fn trapezoid_weights(m: usize, stride: usize) -> Vec<f64> {
    let h = 2.0 * QUADRATURE_HALF_WIDTH / (m - 1) as f64;
    let mut w: Vec<f64> = (0..m)
        .map(|i| {
            if i % stride == 0 {
                normal::pdf(-QUADRATURE_HALF_WIDTH + i as f64 * h)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

impl PredictiveDraws {
    /// Draws for `P(Z)` as configured: quadrature when the prediction
    /// depends on at most two variables, prior Monte Carlo otherwise.
    pub fn for_evidence<P: ObservationModel>(problem: &P, params: &UpdateParams, seed: u64) -> Self {
        match params.evidence {
            EvidenceMethod::Quadrature if problem.predicted_dims() <= 2 => {
                Self::quadrature(problem, params.quadrature_nodes)
            }
            _ => Self::from_prior(problem, params.n_mcs_pz, seed),
        }
    }

    /// Predictions on a tensor grid of `nodes` points per predicted dimension.
    pub fn quadrature<P: ObservationModel>(problem: &P, nodes: usize) -> Self {
        let dims = problem.predicted_dims();
        assert!((1..=2).contains(&dims), "quadrature supports one or two predicted dimensions");
        let m = nodes | 1;
        let h = 2.0 * QUADRATURE_HALF_WIDTH / (m - 1) as f64;
        let node = |i: usize| -QUADRATURE_HALF_WIDTH + i as f64 * h;
        let fine = trapezoid_weights(m, 1);
        let coarse = trapezoid_weights(m, 2);
        let (predicted, wf, wc) = if dims == 1 {
            let p = (0..m).into_par_iter().map(|i| problem.predicted(&[node(i)])).collect();
            (p, fine, coarse)
        } else {
            let p: Vec<f64> = (0..m * m)
                .into_par_iter()
                .map(|k| problem.predicted(&[node(k / m), node(k % m)]))
                .collect();
            let outer = |w: &[f64]| -> Vec<f64> { (0..m * m).map(|k| w[k / m] * w[k % m]).collect() };
            (p, outer(&fine), outer(&coarse))
        };
        Self {
            predicted,
            log_cdf_aux: Vec::new(),
            weights: Some((wf, wc)),
        }
    }

    pub fn from_prior<P: ObservationModel>(problem: &P, n: usize, seed: u64) -> Self {
        const BLOCK: usize = 4096;
        let dims = problem.predicted_dims();
        let blocks = n.div_ceil(BLOCK);
        let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream(seed, "evidence", b as u64);
                let m = BLOCK.min(n - b * BLOCK);
                let mut u = vec![0.0; dims];
                let mut pred = Vec::with_capacity(m);
                let mut aux = Vec::with_capacity(m);
                for _ in 0..m {
                    u.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
                    let ua: f64 = rng.sample(StandardNormal);
                    pred.push(problem.predicted(&u));
                    aux.push(normal::cdf(ua).ln());
                }
                (pred, aux)
            })
            .collect();
        Self::concat(parts)
    }

    /// Pairs `aux_draws` auxiliary variables with every retained failure sample.
    pub fn from_failure_samples<P: ObservationModel>(problem: &P, ss: &SubsetSimResult, aux_draws: usize, seed: u64) -> Self {
        let n = ss.n_failure_samples();
        let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, "aux-failure", i as u64);
                let pred = problem.predicted(ss.failure_sample(i));
                let aux: Vec<f64> = (0..aux_draws)
                    .map(|_| normal::cdf(rng.sample::<f64, _>(StandardNormal)).ln())
                    .collect();
                (vec![pred; aux_draws], aux)
            })
            .collect();
        Self::concat(parts)
    }

    fn concat(parts: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        let mut out = Self {
            predicted: Vec::new(),
            log_cdf_aux: Vec::new(),
            weights: None,
        };
        for (p, a) in parts {
            out.predicted.extend(p);
            out.log_cdf_aux.extend(a);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    /// Estimate of `P(h ≤ 0)` and the variance of that estimate; `None`
    /// when the estimate is degenerate (no sampled hits, or every `c·L`
    /// underflows).
    pub fn estimate(&self, lik: &GaussianLikelihood, estimator: AuxEstimator) -> Option<(f64, f64)> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        if let Some((fine, coarse)) = &self.weights {
            let kappa = lik.kappa();
            let s2 = 2.0 * lik.sigma * lik.sigma;
            let (mut qf, mut qc) = (0.0, 0.0);
            for ((p, wf), wc) in self.predicted.iter().zip(fine).zip(coarse) {
                let r = lik.observed - p;
                if r.is_nan() {
                    continue;
                }
                let v = kappa * (-r * r / s2).exp();
                qf += wf * v;
                qc += wc * v;
            }
            return (qf > 0.0).then_some((qf, (qf - qc) * (qf - qc)));
        }
        match estimator {
            AuxEstimator::Sampled => {
                let hits = self.hits(lik);
                let p = hits as f64 / n as f64;
                (hits > 0).then_some((p, p * (1.0 - p) / n as f64))
            }
            AuxEstimator::Integrated => {
                let kappa = lik.kappa();
                let s2 = 2.0 * lik.sigma * lik.sigma;
                let (mut sum, mut sum2) = (0.0, 0.0);
                for &p in &self.predicted {
                    let r = lik.observed - p;
                    let v = if r.is_nan() { 0.0 } else { kappa * (-r * r / s2).exp() };
                    sum += v;
                    sum2 += v * v;
                }
                let m = sum / n as f64;
                let var = if n > 1 {
                    ((sum2 - n as f64 * m * m) / (n - 1) as f64).max(0.0) / n as f64
                } else {
                    0.0
                };
                (m > 0.0).then_some((m, var))
            }
        }
    }

    /// Number of draws with `h ≤ 0`.
    ///
    /// Always zero for quadrature draws.
    pub fn hits(&self, lik: &GaussianLikelihood) -> usize {
        self.predicted
            .iter()
            .zip(&self.log_cdf_aux)
            .filter(|(&p, &a)| lik.accepts(p, a))
            .count()
    }
}

/// `P(h1 ≤ 0)` and its COV over the prior draws. The sampled estimator
/// falls back to subset simulation on `h1` below 100 hits, the integrated
/// one when every `c·L` underflows.
pub fn estimate_evidence<P: ObservationModel>(
    problem: &P,
    lik: &GaussianLikelihood,
    draws: &PredictiveDraws,
    estimator: AuxEstimator,
    ss: &SubsetSimParams,
) -> Result<(f64, f64)> {
    let n = draws.len() as f64;
    match draws.estimate(lik, estimator) {
        Some((p, var)) if draws.weights.is_some() || estimator == AuxEstimator::Integrated || p * n >= 100.0 => {
            return Ok((p, var.sqrt() / p))
        }
        _ => {}
    }
    let dims = problem.predicted_dims();
    let params = SubsetSimParams {
        seed: derive_seed(ss.seed, "evidence-ss", 0),
        ..*ss
    };
    let r = run_subset_simulation(|v| h_of(problem, lik, &v[..dims], v[dims]), dims + 1, &params)?;
    Ok((r.p_f, r.cov))
}

fn h_of<P: ObservationModel>(problem: &P, lik: &GaussianLikelihood, u: &[f64], u_aux: f64) -> f64 {
    let cl = (lik.scale_constant() * lik.eval(problem.predicted(u))).min(1.0);
    augmented_lsf(u_aux, cl).unwrap_or(f64::INFINITY)
}

/// Posterior pieces for one observed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorParts {
    pub p_h2_given_f: f64,
    pub n_zf: usize,
    pub p_f_given_z: f64,
    pub cov_pfz: f64,
    pub truncated_fraction: f64,
}

/// Assembles `P(F|Z)` and its COV from a subset-simulation run, the
/// auxiliary draws paired with its failure samples and the evidence.
pub fn posterior_from_parts(
    ss: &SubsetSimResult,
    failure_draws: &PredictiveDraws,
    lik: &GaussianLikelihood,
    estimator: AuxEstimator,
    evidence: (f64, f64),
    reciprocal_sim_n: usize,
    seed: u64,
) -> Result<PosteriorParts> {
    let n_zf = failure_draws.len();
    let (p_h2, var_h2) = failure_draws.estimate(lik, estimator).unwrap_or((0.0, 0.0));
    let (p_h1, cov_ph1) = evidence;
    // c1 and c2 follow the same rule, so their ratio is 1
    let c_ratio = 1.0;
    let p_fz = (c_ratio * ss.p_f * p_h2 / p_h1).min(1.0);
    let cc = cov_of_conditional(
        &CovComponents {
            p_f: ss.p_f,
            cov_pf: ss.cov,
            p_zf: p_h2,
            n_zf,
            var_zf: Some(var_h2),
            p_z: p_h1,
            cov_pz: cov_ph1,
        },
        reciprocal_sim_n,
        seed,
    )?;
    Ok(PosteriorParts {
        p_h2_given_f: p_h2,
        n_zf,
        p_f_given_z: p_fz,
        cov_pfz: cc.cov,
        truncated_fraction: cc.truncated_fraction,
    })
}

// Streams are keyed by the sample size, not the iteration, so runs with equal
// N_SS coincide across measurements and monitoring locations.
pub(crate) fn ss_seed(seed: u64, n_ss: usize) -> u64 {
    derive_seed(seed, "update-ss", n_ss as u64)
}

pub(crate) fn aux_seed(seed: u64, n_ss: usize) -> u64 {
    derive_seed(seed, "aux", n_ss as u64)
}

pub(crate) fn reciprocal_seed(seed: u64, n_ss: usize) -> u64 {
    derive_seed(seed, "reciprocal", n_ss as u64)
}

pub(crate) fn evidence_seed(seed: u64) -> u64 {
    derive_seed(seed, "evidence", 0)
}

/// Adaptive estimate of `P(F|Z)`.
///
/// On failure to meet `cov_thr` within `max_outer_iterations` passes the
/// error carries the last result.
pub fn update_reliability<P: ObservationModel>(
    problem: &P,
    lik: &GaussianLikelihood,
    params: &UpdateParams,
    ss_params: &SubsetSimParams,
) -> Result<UpdateResult> {
    params.validate()?;
    let seed = ss_params.seed;
    let draws = PredictiveDraws::for_evidence(problem, params, evidence_seed(seed));
    let evidence = estimate_evidence(problem, lik, &draws, params.aux_estimator, ss_params)?;
    adaptive_posterior(
        lik,
        params,
        evidence,
        seed,
        |n_ss| {
            let ssp = SubsetSimParams {
                n_per_level: n_ss,
                seed: ss_seed(seed, n_ss),
                ..*ss_params
            };
            Ok(Arc::new(run_subset_simulation(|u| problem.limit_state(u), problem.dim(), &ssp)?))
        },
        |n_ss, ss| Arc::new(PredictiveDraws::from_failure_samples(problem, ss, params.aux_draws_for(), aux_seed(seed, n_ss))),
    )
}

/// The outer loop over `N_SS`, with the subset-simulation runs and failure
/// draws supplied by the caller so they can be cached.
pub(crate) fn adaptive_posterior<S, D>(
    lik: &GaussianLikelihood,
    params: &UpdateParams,
    evidence: (f64, f64),
    seed: u64,
    mut ss_for: S,
    mut draws_for: D,
) -> Result<UpdateResult>
where
    S: FnMut(usize) -> Result<Arc<SubsetSimResult>>,
    D: FnMut(usize, &SubsetSimResult) -> Arc<PredictiveDraws>,
{
    let c = lik.scale_constant();
    let mut n_ss = params.n_ss_initial;
    let mut n_eval = 0;
    let mut trace = Vec::new();
    let mut last: Option<UpdateResult> = None;
    for _ in 0..params.max_outer_iterations {
        let ss = ss_for(n_ss)?;
        n_eval += ss.n_evaluations;
        let fd = draws_for(n_ss, &ss);
        let parts = posterior_from_parts(
            &ss,
            &fd,
            lik,
            params.aux_estimator,
            evidence,
            params.reciprocal_sim_n,
            reciprocal_seed(seed, n_ss),
        )?;
        trace.push(OuterIteration {
            n_ss,
            p_f: ss.p_f,
            cov_pf: ss.cov,
            p_h2_given_f: parts.p_h2_given_f,
            p_f_given_z: parts.p_f_given_z,
            cov_pfz: parts.cov_pfz,
        });
        let result = UpdateResult {
            p_f: ss.p_f,
            cov_pf: ss.cov,
            p_h1: evidence.0,
            cov_ph1: evidence.1,
            p_h2_given_f: parts.p_h2_given_f,
            n_zf: parts.n_zf,
            c1: c,
            c2: c,
            p_f_given_z: parts.p_f_given_z,
            cov_pfz: parts.cov_pfz,
            r_up: r_up(ss.p_f, parts.p_f_given_z).unwrap_or(f64::NAN),
            n_evaluations: n_eval,
            n_ss,
            truncated_fraction: parts.truncated_fraction,
            trace: trace.clone(),
        };
        if parts.cov_pfz <= params.cov_thr {
            return Ok(result);
        }
        log::debug!("P(F|Z) COV {:.4} above {} at N_SS = {n_ss}", parts.cov_pfz, params.cov_thr);
        last = Some(result);
        n_ss += params.delta_n_ss;
    }
    let best = last.expect("at least one outer iteration");
    Err(Error::NotConverged {
        iterations: params.max_outer_iterations,
        cov: best.cov_pfz,
        target: params.cov_thr,
        best: Box::new(best),
    })
}

/// Joint-event estimate `P(max(g, h) ≤ 0) / P(h ≤ 0)`, both by subset
/// simulation with the auxiliary variable as the last coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointEstimate {
    pub p_joint: f64,
    pub cov_joint: f64,
    pub p_h: f64,
    pub cov_h: f64,
    pub p_f_given_z: f64,
    pub cov: f64,
    pub n_evaluations: usize,
}

pub fn update_via_joint<P: ObservationModel>(problem: &P, lik: &GaussianLikelihood, ss_params: &SubsetSimParams) -> Result<JointEstimate> {
    let dim = problem.dim();
    let joint = run_subset_simulation(
        |v| {
            let g = problem.limit_state(&v[..dim]);
            g.max(h_of(problem, lik, &v[..dim], v[dim]))
        },
        dim + 1,
        &SubsetSimParams {
            seed: derive_seed(ss_params.seed, "joint", 0),
            ..*ss_params
        },
    )?;
    let h = run_subset_simulation(
        |v| h_of(problem, lik, &v[..dim], v[dim]),
        dim + 1,
        &SubsetSimParams {
            seed: derive_seed(ss_params.seed, "joint-evidence", 0),
            ..*ss_params
        },
    )?;
    Ok(JointEstimate {
        p_joint: joint.p_f,
        cov_joint: joint.cov,
        p_h: h.p_f,
        cov_h: h.cov,
        p_f_given_z: joint.p_f / h.p_f,
        cov: joint.cov.hypot(h.cov),
        n_evaluations: joint.n_evaluations + h.n_evaluations,
    })
}

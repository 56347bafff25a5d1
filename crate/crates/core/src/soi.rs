//! Relative change of the reliability index and its average over a band of
//! plausible measurement values (the sensitivity of information, SOI).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground::GroundPoint;
use crate::prob::{derive_seed, normal};
use crate::scenario::Scenario;
use crate::subset::{run_subset_simulation, SubsetSimParams, SubsetSimResult};
use crate::updating::{
    adaptive_posterior, aux_seed, estimate_evidence, evidence_seed, ss_seed, GaussianLikelihood,
    PredictiveDraws, SettlementObservation, UpdateParams, UpdateResult,
};

/// `|Φ⁻¹(P(F|Z)) / Φ⁻¹(P(F)) − 1|`.
pub fn r_up(p_f: f64, p_f_given_z: f64) -> Result<f64> {
    for (name, p) in [("P(F)", p_f), ("P(F|Z)", p_f_given_z)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("{name} must lie in (0, 1), got {p}")));
        }
    }
    let beta_prior = normal::quantile(p_f);
    if beta_prior.abs() < 1e-12 {
        return Err(Error::Domain("P(F) = 0.5 makes the prior reliability index zero".into()));
    }
    Ok((normal::quantile(p_f_given_z) / beta_prior - 1.0).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoiParams {
    pub z_lob: f64,
    pub z_upb: f64,
    pub n_dis: usize,
    /// Run a separate subset simulation for every information value.
    pub fresh_ss_per_z: bool,
}

impl Default for SoiParams {
    fn default() -> Self {
        Self {
            z_lob: 5.0,
            z_upb: 15.0,
            n_dis: 20,
            fresh_ss_per_z: false,
        }
    }
}

impl SoiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_lob < self.z_upb) || !self.z_lob.is_finite() || !self.z_upb.is_finite() {
            return Err(Error::Config(format!(
                "soi.z_lob ({}) must be below soi.z_upb ({})",
                self.z_lob, self.z_upb
            )));
        }
        if self.n_dis < 5 {
            return Err(Error::Config(format!("soi.n_dis must be at least 5, got {}", self.n_dis)));
        }
        Ok(())
    }

    /// Midpoints `z_i = z_lob + (i − ½)Δz`.
    pub fn abscissae(&self) -> Vec<f64> {
        let dz = (self.z_upb - self.z_lob) / self.n_dis as f64;
        (1..=self.n_dis).map(|i| self.z_lob + (i as f64 - 0.5) * dz).collect()
    }
}

/// Midpoint-rule average of `r_up(z)` over the band.
pub fn soi_from_rup<F>(params: &SoiParams, mut r_up_at: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    params.validate()?;
    let z = params.abscissae();
    let mut sum = 0.0;
    for &zi in &z {
        sum += r_up_at(zi)?;
    }
    Ok(sum / z.len() as f64)
}

/// Posterior summary at one information value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerZ {
    pub z: f64,
    pub r_up: f64,
    pub p_f: f64,
    pub cov_pf: f64,
    pub p_f_given_z: f64,
    pub cov_pfz: f64,
    pub n_ss: usize,
    /// Whether the COV target was met; otherwise the last pass is kept.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoiEstimate {
    pub location: GroundPoint,
    pub soi: f64,
    pub per_z: Vec<PerZ>,
    /// Monte Carlo variance of `soi`.
    pub noise_var: f64,
}

impl SoiEstimate {
    pub fn all_converged(&self) -> bool {
        self.per_z.iter().all(|p| p.converged)
    }
}

/// Variance of the band average from per-value COVs.
///
/// The prior estimate is shared by every `r_up(z_i)` and enters fully
/// correlated; the remaining part of each COV is treated as independent.
pub fn soi_noise_variance(per_z: &[PerZ]) -> f64 {
    let n = per_z.len() as f64;
    let mut shared = 0.0;
    let mut shared_var = 0.0;
    let mut independent = 0.0;
    for p in per_z {
        let beta_prior = -normal::quantile(p.p_f);
        let beta_post = -normal::quantile(p.p_f_given_z);
        let a = p.p_f_given_z / normal::pdf(beta_post);
        let b = p.p_f / normal::pdf(beta_prior);
        // ∂r/∂ln P(F) through both indices, ∂r/∂ln(P(Z|F)/P(Z)) through the posterior
        let sign = if beta_post / beta_prior - 1.0 >= 0.0 { 1.0 } else { -1.0 };
        let d_shared = sign * (-a / beta_prior + beta_post * b / (beta_prior * beta_prior));
        let d_indep = sign * (-a / beta_prior);
        shared += d_shared / n;
        shared_var = p.cov_pf * p.cov_pf;
        let v = (p.cov_pfz * p.cov_pfz - p.cov_pf * p.cov_pf).max(0.0);
        independent += d_indep * d_indep * v / (n * n);
    }
    let var = shared * shared * shared_var + independent;
    if var.is_finite() {
        var
    } else {
        f64::INFINITY
    }
}

type SsSlot = Arc<OnceLock<Result<Arc<SubsetSimResult>>>>;

/// SOI evaluation for the case-study scenario.
///
/// The failure event does not depend on where or what is measured, so
/// subset-simulation runs are cached by sample size and shared by every
/// information value and every monitoring location. Prior draws for the
/// evidence are regenerated per location from a fixed stream.
pub struct SoiEngine<'a> {
    pub scenario: &'a Scenario,
    pub params: SoiParams,
    pub update: UpdateParams,
    pub ss: SubsetSimParams,
    cache: Mutex<HashMap<(usize, usize), SsSlot>>,
}

impl<'a> SoiEngine<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Self::with_params(scenario, scenario.soi, scenario.update, scenario.subset_params())
    }

    pub fn with_params(scenario: &'a Scenario, params: SoiParams, update: UpdateParams, ss: SubsetSimParams) -> Self {
        Self {
            scenario,
            params,
            update,
            ss,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// The subset-simulation run for `n_ss` samples per level; `slot`
    /// separates independent runs when `fresh_ss_per_z` is set.
    pub fn ss_run(&self, n_ss: usize, slot: usize) -> Result<Arc<SubsetSimResult>> {
        let cell = {
            let mut cache = self.cache.lock().expect("cache lock");
            cache.entry((n_ss, slot)).or_default().clone()
        };
        cell.get_or_init(|| {
            let seed = if slot == 0 {
                ss_seed(self.ss.seed, n_ss)
            } else {
                derive_seed(ss_seed(self.ss.seed, n_ss), "fresh-z", slot as u64)
            };
            let p = SubsetSimParams {
                n_per_level: n_ss,
                seed,
                ..self.ss
            };
            let scenario = self.scenario;
            run_subset_simulation(|u| scenario.limit_state_standard(u), scenario.model.dim(), &p).map(Arc::new)
        })
        .clone()
    }

    /// Posterior update for one observed value at `location`.
    pub fn update_at(&self, location: GroundPoint, observed: f64) -> Result<UpdateResult> {
        let problem = SettlementObservation {
            scenario: self.scenario,
            location,
        };
        let prior = PredictiveDraws::for_evidence(&problem, &self.update, evidence_seed(self.ss.seed));
        let lik = GaussianLikelihood::new(observed, self.scenario.errors.sigma_e())?;
        let mut failure = HashMap::new();
        self.posterior(&problem, &prior, &lik, 0, &mut failure)
    }

    fn posterior(
        &self,
        problem: &SettlementObservation<'_>,
        prior: &PredictiveDraws,
        lik: &GaussianLikelihood,
        slot: usize,
        failure: &mut HashMap<(usize, usize), Arc<PredictiveDraws>>,
    ) -> Result<UpdateResult> {
        let evidence = estimate_evidence(problem, lik, prior, self.update.aux_estimator, &self.ss)?;
        let seed = self.ss.seed;
        adaptive_posterior(
            lik,
            &self.update,
            evidence,
            seed,
            |n_ss| self.ss_run(n_ss, slot),
            |n_ss, ss| {
                failure
                    .entry((n_ss, slot))
                    .or_insert_with(|| {
                        Arc::new(PredictiveDraws::from_failure_samples(
                            problem,
                            ss,
                            self.update.aux_draws_for(),
                            aux_seed(seed, n_ss),
                        ))
                    })
                    .clone()
            },
        )
    }

    /// SOI at a monitoring location. Information values whose update does not
    /// reach the COV target keep their last pass and are flagged.
    pub fn soi_at(&self, location: GroundPoint) -> Result<SoiEstimate> {
        self.params.validate()?;
        let problem = SettlementObservation {
            scenario: self.scenario,
            location,
        };
        let prior = PredictiveDraws::for_evidence(&problem, &self.update, evidence_seed(self.ss.seed));
        let sigma = self.scenario.errors.sigma_e();
        let mut failure = HashMap::new();
        let mut per_z = Vec::with_capacity(self.params.n_dis);
        for (i, z) in self.params.abscissae().into_iter().enumerate() {
            let lik = GaussianLikelihood::new(z, sigma)?;
            let slot = if self.params.fresh_ss_per_z { i + 1 } else { 0 };
            let (res, converged) = match self.posterior(&problem, &prior, &lik, slot, &mut failure) {
                Ok(r) => (r, true),
                Err(Error::NotConverged { best, .. }) => (*best, false),
                Err(e) => return Err(e),
            };
            let r = r_up(res.p_f, res.p_f_given_z)?;
            per_z.push(PerZ {
                z,
                r_up: r,
                p_f: res.p_f,
                cov_pf: res.cov_pf,
                p_f_given_z: res.p_f_given_z,
                cov_pfz: res.cov_pfz,
                n_ss: res.n_ss,
                converged,
            });
        }
        let soi = per_z.iter().map(|p| p.r_up).sum::<f64>() / per_z.len() as f64;
        Ok(SoiEstimate {
            location,
            soi,
            noise_var: soi_noise_variance(&per_z),
            per_z,
        })
    }
}

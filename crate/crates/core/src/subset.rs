//! Subset simulation in independent standard-normal space.
//!
//! The first level is crude Monte Carlo. Each later level keeps the `N·p0`
//! samples with the smallest responses as seeds and grows one Markov chain of
//! length `1/p0` from each with component-wise Metropolis moves and a uniform
//! proposal. Every chain owns its random stream, so results depend on the
//! seed only, never on the number of worker threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prob::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsetSimParams {
    pub n_per_level: usize,
    pub p0: f64,
    pub proposal_halfwidth: f64,
    pub max_levels: usize,
    pub seed: u64,
}

impl Default for SubsetSimParams {
    fn default() -> Self {
        Self {
            n_per_level: 10_000,
            p0: 0.1,
            proposal_halfwidth: 1.0,
            max_levels: 20,
            seed: 0,
        }
    }
}

impl SubsetSimParams {
    /// Number of seeds (and chains) per level.
    pub fn n_chains(&self) -> usize {
        (self.n_per_level as f64 * self.p0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 <= 0.5) {
            return Err(Error::Config(format!("p0 must lie in (0, 0.5], got {}", self.p0)));
        }
        let nc = self.n_chains();
        if (nc as f64 - self.n_per_level as f64 * self.p0).abs() > 1e-9 || nc < 100 {
            return Err(Error::Config(format!(
                "n_per_level·p0 must be an integer of at least 100, got {}",
                self.n_per_level as f64 * self.p0
            )));
        }
        if self.n_per_level % nc != 0 {
            return Err(Error::Config(format!(
                "n_per_level {} must be a multiple of the chain count {nc}",
                self.n_per_level
            )));
        }
        if !(self.proposal_halfwidth > 0.0 && self.proposal_halfwidth.is_finite()) {
            return Err(Error::Config(format!(
                "proposal half-width must be positive, got {}",
                self.proposal_halfwidth
            )));
        }
        if self.max_levels == 0 {
            return Err(Error::Config("max_levels must be at least 1".into()));
        }
        Ok(())
    }
}

/// One simulation level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    /// Threshold `t_i`; the final level uses 0.
    pub threshold: f64,
    /// Conditional probability `P(F_i | F_{i−1})`.
    pub probability: f64,
    /// Chain correlation factor `γ_i` (0 for the Monte Carlo level).
    pub gamma: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSimResult {
    pub p_f: f64,
    pub levels: Vec<Level>,
    pub cov: f64,
    pub dim: usize,
    /// Standard-normal coordinates of the final-level samples with `g ≤ 0`,
    /// row-major.
    pub failure_samples: Vec<f64>,
    pub failure_responses: Vec<f64>,
    pub n_evaluations: usize,
    pub n_chains: usize,
    pub chain_length: usize,
}

impl SubsetSimResult {
    pub fn n_failure_samples(&self) -> usize {
        self.failure_responses.len()
    }

    pub fn failure_sample(&self, i: usize) -> &[f64] {
        &self.failure_samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Product of the stored conditional probabilities.
    pub fn product_of_levels(&self) -> f64 {
        self.levels.iter().fold(1.0, |acc, l| acc * l.probability)
    }
}

/// Estimates `P(g(U) ≤ 0)` for `U ~ N(0, I_dim)`.
pub fn run_subset_simulation<G>(lsf: G, dim: usize, params: &SubsetSimParams) -> Result<SubsetSimResult>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    params.validate()?;
    if dim == 0 {
        return Err(Error::Contract("dimension must be at least 1".into()));
    }
    let n = params.n_per_level;
    let nc = params.n_chains();
    let chain_len = n / nc;

    let mut rng = stream(params.seed, "ss-level0", 0);
    let mut samples: Vec<f64> = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut responses: Vec<f64> = samples.par_chunks(dim).map(|u| checked(&lsf, u)).collect();
    let mut n_eval = n;
    // chain grouping of the current population; None for the Monte Carlo level
    let mut grouped = false;
    let mut levels: Vec<Level> = Vec::new();

    loop {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| responses[a].total_cmp(&responses[b]));
        let n_fail = responses.iter().filter(|&&g| g <= 0.0).count();

        if n_fail >= nc {
            let p = n_fail as f64 / n as f64;
            let gamma = if grouped {
                correlation_factor(&indicators(&responses, 0.0), nc, chain_len, p)
            } else {
                0.0
            };
            levels.push(Level {
                threshold: 0.0,
                probability: p,
                gamma,
                n_samples: n,
            });
            let mut failure_samples = Vec::with_capacity(n_fail * dim);
            let mut failure_responses = Vec::with_capacity(n_fail);
            for i in 0..n {
                if responses[i] <= 0.0 {
                    failure_samples.extend_from_slice(&samples[i * dim..(i + 1) * dim]);
                    failure_responses.push(responses[i]);
                }
            }
            let mut result = SubsetSimResult {
                p_f: 0.0,
                levels,
                cov: 0.0,
                dim,
                failure_samples,
                failure_responses,
                n_evaluations: n_eval,
                n_chains: nc,
                chain_length: chain_len,
            };
            result.p_f = result.product_of_levels();
            result.cov = cov_of_pf(&result)?;
            return Ok(result);
        }

        let threshold = 0.5 * (responses[order[nc - 1]] + responses[order[nc]]);
        let p = nc as f64 / n as f64;
        let gamma = if grouped {
            correlation_factor(&indicators(&responses, threshold), nc, chain_len, p)
        } else {
            0.0
        };
        levels.push(Level {
            threshold,
            probability: p,
            gamma,
            n_samples: n,
        });

        if levels.len() >= params.max_levels {
            let mut partial = SubsetSimResult {
                p_f: 0.0,
                levels,
                cov: 0.0,
                dim,
                failure_samples: Vec::new(),
                failure_responses: Vec::new(),
                n_evaluations: n_eval,
                n_chains: nc,
                chain_length: chain_len,
            };
            partial.p_f = partial.product_of_levels();
            partial.cov = cov_of_pf(&partial)?;
            return Err(Error::MaxLevels {
                levels: partial.levels.len(),
                threshold,
                partial: Box::new(partial),
            });
        }

        let level_seed = derive_seed(params.seed, "ss-level", levels.len() as u64);
        let seeds: Vec<usize> = order[..nc].to_vec();
        let chains: Vec<(Vec<f64>, Vec<f64>, usize)> = seeds
            .par_iter()
            .enumerate()
            .map(|(j, &s)| {
                run_chain(
                    &lsf,
                    &samples[s * dim..(s + 1) * dim],
                    responses[s],
                    threshold,
                    chain_len,
                    params.proposal_halfwidth,
                    &mut stream(level_seed, "chain", j as u64),
                )
            })
            .collect();

        samples.clear();
        responses.clear();
        for (u, g, evals) in chains {
            samples.extend_from_slice(&u);
            responses.extend_from_slice(&g);
            n_eval += evals;
        }
        grouped = true;
    }
}

fn checked<G: Fn(&[f64]) -> f64>(lsf: &G, u: &[f64]) -> f64 {
    let g = lsf(u);
    // NaN responses are treated as safe so they never seed a chain
    if g.is_nan() {
        f64::INFINITY
    } else {
        g
    }
}

fn indicators(responses: &[f64], threshold: f64) -> Vec<bool> {
    responses.iter().map(|&g| g <= threshold).collect()
}

fn run_chain<G, R>(
    lsf: &G,
    start: &[f64],
    g0: f64,
    threshold: f64,
    len: usize,
    halfwidth: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>, usize)
where
    G: Fn(&[f64]) -> f64,
    R: Rng,
{
    let dim = start.len();
    let mut states = Vec::with_capacity(len * dim);
    let mut values = Vec::with_capacity(len);
    let mut current = start.to_vec();
    let mut g = g0;
    let mut candidate = vec![0.0; dim];
    let mut evals = 0;
    states.extend_from_slice(&current);
    values.push(g);
    for _ in 1..len {
        let mut moved = false;
        for k in 0..dim {
            let xi = current[k] + rng.random_range(-halfwidth..halfwidth);
            let ratio = (0.5 * (current[k] * current[k] - xi * xi)).exp();
            let accept: f64 = rng.random();
            if accept < ratio {
                candidate[k] = xi;
                moved = true;
            } else {
                candidate[k] = current[k];
            }
        }
        if moved {
            let gc = checked(lsf, &candidate);
            evals += 1;
            if gc <= threshold {
                current.copy_from_slice(&candidate);
                g = gc;
            }
        }
        states.extend_from_slice(&current);
        values.push(g);
    }
    (states, values, evals)
}

/// Correlation factor `γ` of a level's indicator sequence laid out as
/// `n_chains` consecutive chains of `chain_len` samples each.
pub fn correlation_factor(indicators: &[bool], n_chains: usize, chain_len: usize, p: f64) -> f64 {
    let n = n_chains * chain_len;
    debug_assert_eq!(indicators.len(), n);
    let r0 = p * (1.0 - p);
    if r0 <= 0.0 || chain_len < 2 {
        return 0.0;
    }
    let mut gamma = 0.0;
    for k in 1..chain_len {
        let mut sum = 0usize;
        for chain in indicators.chunks(chain_len) {
            sum += (0..chain_len - k).filter(|&l| chain[l] && chain[l + k]).count();
        }
        let rk = sum as f64 / (n - k * n_chains) as f64 - p * p;
        gamma += 2.0 * (1.0 - (k * n_chains) as f64 / n as f64) * rk / r0;
    }
    gamma
}

/// Coefficient of variation of the subset-simulation estimate, from the
/// stored level probabilities and correlation factors.
pub fn cov_of_pf(result: &SubsetSimResult) -> Result<f64> {
    if result.levels.is_empty() {
        return Err(Error::Contract("subset simulation result has no levels".into()));
    }
    let sum: f64 = result
        .levels
        .iter()
        .map(|l| (1.0 - l.probability) / (l.probability * l.n_samples as f64) * (1.0 + l.gamma))
        .sum();
    Ok(sum.sqrt())
}

/// Crude Monte Carlo estimate of `P(event(U) ≤ 0)` with its binomial COV.
pub fn estimate_probability_mcs<E>(event: E, dim: usize, n: usize, seed: u64) -> Result<(f64, f64)>
where
    E: Fn(&[f64]) -> f64 + Sync,
{
    if n < 1000 {
        return Err(Error::Contract(format!("crude Monte Carlo needs n ≥ 1000, got {n}")));
    }
    if dim == 0 {
        return Err(Error::Contract("dimension must be at least 1".into()));
    }
    const BLOCK: usize = 4096;
    let blocks = n.div_ceil(BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, "mcs", b as u64);
            let m = BLOCK.min(n - b * BLOCK);
            let mut u = vec![0.0; dim];
            let mut hits = 0;
            for _ in 0..m {
                u.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
                if event(&u) <= 0.0 {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    if hits == 0 {
        return Err(Error::NoHits { samples: n });
    }
    let p = hits as f64 / n as f64;
    Ok((p, ((1.0 - p) / (p * n as f64)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::normal;

    fn params(seed: u64) -> SubsetSimParams {
        SubsetSimParams {
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn linear_tail_probability() {
        let r = run_subset_simulation(|u| 3.0 - u[0], 2, &params(1)).unwrap();
        let exact = normal::cdf(-3.0);
        assert!((r.p_f - exact).abs() <= 3.0 * r.cov * exact, "{} vs {exact}", r.p_f);
        assert_eq!(r.p_f, r.product_of_levels());
        assert!(r.levels.len() >= 3);
        for w in r.levels.windows(2) {
            assert!(w[1].threshold < w[0].threshold);
        }
        assert!(r.failure_samples.chunks(2).all(|u| 3.0 - u[0] <= 0.0));
        assert_eq!(r.n_failure_samples() * 2, r.failure_samples.len());
    }

    #[test]
    fn always_failing() {
        let r = run_subset_simulation(|_| -1.0, 3, &params(2)).unwrap();
        assert_eq!(r.p_f, 1.0);
        assert_eq!(r.levels.len(), 1);
        assert_eq!(r.cov, 0.0);
    }

    #[test]
    fn frequent_event_is_single_level() {
        let r = run_subset_simulation(|u| 0.5 - u[0], 2, &params(3)).unwrap();
        let exact = normal::cdf(-0.5);
        assert_eq!(r.levels.len(), 1);
        assert!((r.p_f - exact).abs() <= 3.0 * (exact * (1.0 - exact) / 1e4).sqrt());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = run_subset_simulation(|u| 3.0 - u[0] - 0.2 * u[1], 2, &params(7)).unwrap();
        let b = run_subset_simulation(|u| 3.0 - u[0] - 0.2 * u[1], 2, &params(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn max_levels_carries_partial_result() {
        let p = SubsetSimParams {
            max_levels: 2,
            ..params(4)
        };
        match run_subset_simulation(|u| 6.0 - u[0], 2, &p) {
            Err(Error::MaxLevels { levels, partial, .. }) => {
                assert_eq!(levels, 2);
                assert!((partial.p_f - 0.01).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cov_of_single_level() {
        let r = SubsetSimResult {
            p_f: 0.1,
            levels: vec![Level {
                threshold: 0.0,
                probability: 0.1,
                gamma: 0.0,
                n_samples: 1000,
            }],
            cov: 0.0,
            dim: 1,
            failure_samples: vec![],
            failure_responses: vec![],
            n_evaluations: 1000,
            n_chains: 100,
            chain_length: 10,
        };
        assert!((cov_of_pf(&r).unwrap() - 0.094_868_329_805_051_38).abs() < 1e-12);
    }

    #[test]
    fn independent_indicators_have_small_gamma() {
        use rand::Rng;
        let mut rng = stream(9, "iid", 0);
        let ind: Vec<bool> = (0..10_000).map(|_| rng.random::<f64>() < 0.1).collect();
        assert!(correlation_factor(&ind, 1000, 10, 0.1).abs() < 0.1);
        // perfectly persistent chains
        let ind: Vec<bool> = (0..1000).flat_map(|j| std::iter::repeat_n(j % 10 == 0, 10)).collect();
        let g = correlation_factor(&ind, 1000, 10, 0.1);
        assert!((g - 9.0).abs() < 1e-9, "{g}");
    }

    #[test]
    fn crude_monte_carlo() {
        let (p, _) = estimate_probability_mcs(|u| u[0], 1, 10_000, 1).unwrap();
        assert!((p - 0.5).abs() < 0.015);
        let (p, cov) = estimate_probability_mcs(|u| normal::cdf(u[0]) - 0.2, 2, 10_000, 2).unwrap();
        assert!((p - 0.2).abs() < 3.0 * cov * 0.2);
        let (p, cov) = estimate_probability_mcs(|u| u[0] + 2.0, 1, 100_000, 3).unwrap();
        assert!((p - normal::cdf(-2.0)).abs() < 3.0 * cov * p);
        assert!(matches!(
            estimate_probability_mcs(|_| 1.0, 1, 1000, 4),
            Err(Error::NoHits { samples: 1000 })
        ));
        assert!(estimate_probability_mcs(|u| u[0], 1, 999, 4).is_err());
    }
}

//! Kriging with a Gaussian kernel, polynomial trend and homoscedastic noise.
//!
//! With process variance `σ²` and noise variance `σ_n²` the covariance of the
//! responses is `(σ² + σ_n²)·R̃` where `R̃ = τR + (1 − τ)I` and
//! `τ = σ²/(σ² + σ_n²)`; the cross-correlation with a query point is `τ·r`.
//! Hyperparameters `θ` (one per input dimension) and `τ` maximize the
//! concentrated likelihood in which `β` and `σ² + σ_n²` are profiled out.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::stream;

/// Diagonal jitter tried in turn until the correlation matrix factorizes
/// with an acceptable condition estimate.
const NUGGETS: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    #[default]
    Ordinary,
    Linear,
    Quadratic,
}

impl Trend {
    pub fn n_terms(self, dim: usize) -> usize {
        match self {
            Trend::Ordinary => 1,
            Trend::Linear => 1 + dim,
            Trend::Quadratic => 1 + dim + dim * (dim + 1) / 2,
        }
    }

    pub fn basis(self, x: &[f64]) -> Vec<f64> {
        let mut f = vec![1.0];
        if self != Trend::Ordinary {
            f.extend_from_slice(x);
        }
        if self == Trend::Quadratic {
            for i in 0..x.len() {
                for j in i..x.len() {
                    f.push(x[i] * x[j]);
                }
            }
        }
        f
    }
}

/// Affine map of inputs onto the unit box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputScaling {
    pub lower: Vec<f64>,
    pub width: Vec<f64>,
}

impl InputScaling {
    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
        if width.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Contract("scaling bounds must have positive width".into()));
        }
        Ok(Self {
            lower: lower.to_vec(),
            width,
        })
    }

    /// Bounding box of the points; flat dimensions keep unit width.
    pub fn from_points(points: &[Vec<f64>]) -> Self {
        let dim = points[0].len();
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for p in points {
            for k in 0..dim {
                lower[k] = lower[k].min(p[k]);
                upper[k] = upper[k].max(p[k]);
            }
        }
        let width = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| if u > l { u - l } else { 1.0 })
            .collect();
        Self { lower, width }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.lower)
            .zip(&self.width)
            .map(|((v, l), w)| (v - l) / w)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub trend: Trend,
    pub restarts: usize,
    /// Lower bound on the noise variance `σ_n²`.
    pub noise_floor: Option<f64>,
    /// Bounds of each `θ` on the scaled inputs.
    pub theta_bounds: (f64, f64),
    /// Start of the first local search, `(θ, τ)`; later starts are random.
    pub warm_start: Option<(Vec<f64>, f64)>,
    /// `None` scales by the bounding box of the design points.
    pub scaling: Option<InputScaling>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            trend: Trend::Ordinary,
            restarts: 20,
            noise_floor: None,
            theta_bounds: (1e-3, 1e3),
            warm_start: None,
            scaling: None,
            seed: 0,
        }
    }
}

/// A fitted Kriging predictor.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    pub scaling: InputScaling,
    /// Design points on the unit box.
    pub points: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    pub trend: Trend,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub tau: f64,
    /// Process variance `σ²`.
    pub sigma2: f64,
    /// Noise variance `σ_n²`.
    pub noise_var: f64,
    /// Concentrated negative log-likelihood at the optimum.
    pub nll: f64,
    /// The responses are constant; the predictor is the trend with zero variance.
    pub degenerate: bool,
    /// Jitter that was added to the diagonal of the correlation matrix.
    pub nugget: f64,
    chol: Cholesky<f64, Dyn>,
    /// `R̃⁻¹(Y − Fβ)`.
    alpha: DVector<f64>,
    /// `R̃⁻¹F`.
    rinv_f: DMatrix<f64>,
    /// Cholesky factor of `FᵀR̃⁻¹F`.
    gls: Cholesky<f64, Dyn>,
}

struct Factorized {
    chol: Cholesky<f64, Dyn>,
    beta: DVector<f64>,
    alpha: DVector<f64>,
    rinv_f: DMatrix<f64>,
    gls: Cholesky<f64, Dyn>,
    total_var: f64,
    nll: f64,
    nugget: f64,
}

fn correlation(a: &[f64], b: &[f64], theta: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).zip(theta).map(|((x, y), t)| t * (x - y) * (x - y)).sum();
    (-s).exp()
}

fn trend_matrix(points: &[Vec<f64>], trend: Trend) -> DMatrix<f64> {
    let p = trend.n_terms(points[0].len());
    DMatrix::from_fn(points.len(), p, |i, j| trend.basis(&points[i])[j])
}

fn factorize(points: &[Vec<f64>], y: &DVector<f64>, f: &DMatrix<f64>, theta: &[f64], tau: f64) -> Option<Factorized> {
    let n = points.len();
    let mut base = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = tau * correlation(&points[i], &points[j], theta);
            base[(i, j)] = v;
            base[(j, i)] = v;
        }
    }
    for nugget in NUGGETS {
        let mut r = base.clone();
        for i in 0..n {
            r[(i, i)] += nugget;
        }
        let Some(chol) = Cholesky::new(r) else {
            continue;
        };
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
        if (hi / lo).powi(2) > MAX_CONDITION {
            continue;
        }
        let rinv_f = chol.solve(f);
        let gls = Cholesky::new(f.transpose() * &rinv_f)?;
        let beta = gls.solve(&(rinv_f.transpose() * y));
        let resid = y - f * &beta;
        let alpha = chol.solve(&resid);
        let total_var = resid.dot(&alpha) / n as f64;
        let log_det: f64 = 2.0 * diag.iter().map(|d| d.ln()).sum::<f64>();
        let nll = 0.5 * (n as f64 * total_var.max(f64::MIN_POSITIVE).ln() + log_det);
        return Some(Factorized {
            chol,
            beta,
            alpha,
            rinv_f,
            gls,
            total_var,
            nll,
            nugget,
        });
    }
    None
}

fn check_design(points: &[Vec<f64>], responses: &[f64], trend: Trend) -> Result<()> {
    if points.is_empty() || points.len() != responses.len() {
        return Err(Error::Contract(format!(
            "need matching, non-empty points and responses ({} vs {})",
            points.len(),
            responses.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::Contract("design points must share a positive dimension".into()));
    }
    if points.len() < dim + 2 || points.len() <= trend.n_terms(dim) {
        return Err(Error::Contract(format!(
            "{} design points are too few for dimension {dim} and the {trend:?} trend",
            points.len()
        )));
    }
    if responses.iter().chain(points.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Contract("design points and responses must be finite".into()));
    }
    for i in 0..points.len() {
        for j in 0..i {
            if points[i] == points[j] {
                return Err(Error::Contract(format!("duplicate design point {:?}", points[i])));
            }
        }
    }
    Ok(())
}

impl KrigingModel {
    /// Fits with fixed hyperparameters (`θ` per dimension on the scaled
    /// inputs, and `τ`).
    pub fn fit_fixed(
        points: &[Vec<f64>],
        responses: &[f64],
        trend: Trend,
        theta: &[f64],
        tau: f64,
        scaling: Option<InputScaling>,
    ) -> Result<Self> {
        check_design(points, responses, trend)?;
        if theta.len() != points[0].len() || theta.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Contract("θ needs one positive entry per dimension".into()));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Contract(format!("τ must lie in (0, 1], got {tau}")));
        }
        let scaling = scaling.unwrap_or_else(|| InputScaling::from_points(points));
        let scaled: Vec<Vec<f64>> = points.iter().map(|p| scaling.apply(p)).collect();
        let y = DVector::from_column_slice(responses);
        let f = trend_matrix(&scaled, trend);
        let fz = factorize(&scaled, &y, &f, theta, tau)
            .ok_or_else(|| Error::Unstable("correlation matrix is not positive definite".into()))?;
        Ok(Self::assemble(scaling, scaled, responses, trend, theta.to_vec(), tau, fz, false))
    }

    /// Fits `θ` and `τ` by multi-start Nelder–Mead on the concentrated
    /// likelihood.
    pub fn fit(points: &[Vec<f64>], responses: &[f64], opts: &FitOptions) -> Result<Self> {
        check_design(points, responses, opts.trend)?;
        let dim = points[0].len();
        let scaling = opts.scaling.clone().unwrap_or_else(|| InputScaling::from_points(points));
        let scaled: Vec<Vec<f64>> = points.iter().map(|p| scaling.apply(p)).collect();
        let y = DVector::from_column_slice(responses);
        let f = trend_matrix(&scaled, opts.trend);

        let spread = responses.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            - responses.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let level = responses.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if spread <= 1e-14 * level {
            let theta = vec![1.0; dim];
            let fz = factorize(&scaled, &y, &f, &theta, 1.0)
                .ok_or_else(|| Error::Unstable("correlation matrix is not positive definite".into()))?;
            return Ok(Self::assemble(scaling, scaled, responses, opts.trend, theta, 1.0, fz, true));
        }

        let problem = Likelihood {
            points: &scaled,
            y: &y,
            f: &f,
            log_theta: (opts.theta_bounds.0.log10(), opts.theta_bounds.1.log10()),
            noise_floor: opts.noise_floor.unwrap_or(0.0),
        };
        let mut rng = stream(opts.seed, "kriging-starts", 0);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for start in 0..opts.restarts.max(1) {
            let x0: Vec<f64> = match (&opts.warm_start, start) {
                (Some((theta, tau)), 0) => theta
                    .iter()
                    .map(|t| t.log10())
                    .chain(std::iter::once(Likelihood::eta_of_tau(*tau)))
                    .collect(),
                (None, 0) => vec![0.0; dim].into_iter().chain(std::iter::once(-4.0)).collect(),
                _ => {
                    let mut x: Vec<f64> = (0..dim)
                        .map(|_| rng.random_range(problem.log_theta.0..problem.log_theta.1))
                        .collect();
                    x.push(rng.random_range(Likelihood::ETA.0..Likelihood::ETA.1));
                    x
                }
            };
            let x0 = problem.clamp(&x0);
            let simplex = initial_simplex(&x0, 0.5);
            let solver = NelderMead::new(simplex)
                .with_sd_tolerance(1e-8)
                .map_err(|e| Error::Unstable(e.to_string()))?;
            let res = Executor::new(problem.clone(), solver)
                .configure(|s| s.max_iters(400))
                .run()
                .map_err(|e| Error::Unstable(e.to_string()))?;
            let state = res.state();
            if let Some(p) = state.get_best_param() {
                let cost = state.get_best_cost();
                if cost.is_finite() && best.as_ref().is_none_or(|b| cost < b.1) {
                    best = Some((problem.clamp(p), cost));
                }
            }
        }
        let (x, _) = best.ok_or_else(|| Error::Unstable("no finite likelihood found for any start".into()))?;
        let (theta, tau) = problem.unpack(&x);
        let fz = factorize(&scaled, &y, &f, &theta, tau)
            .ok_or_else(|| Error::Unstable("correlation matrix is not positive definite".into()))?;
        Ok(Self::assemble(scaling, scaled, responses, opts.trend, theta, tau, fz, false))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        scaling: InputScaling,
        points: Vec<Vec<f64>>,
        responses: &[f64],
        trend: Trend,
        theta: Vec<f64>,
        tau: f64,
        fz: Factorized,
        degenerate: bool,
    ) -> Self {
        let total = if degenerate { 0.0 } else { fz.total_var };
        Self {
            scaling,
            points,
            responses: responses.to_vec(),
            trend,
            beta: fz.beta.iter().copied().collect(),
            theta,
            tau,
            sigma2: tau * total,
            noise_var: (1.0 - tau) * total,
            nll: fz.nll,
            degenerate,
            nugget: fz.nugget,
            chol: fz.chol,
            alpha: fz.alpha,
            rinv_f: fz.rinv_f,
            gls: fz.gls,
        }
    }

    pub fn n_des(&self) -> usize {
        self.points.len()
    }

    /// Predictive mean and variance at one point (original coordinates).
    ///
    /// The variance is the mean-square error of the noisy response and is
    /// clamped at zero.
    pub fn predict_one(&self, x: &[f64]) -> (f64, f64) {
        let xs = self.scaling.apply(x);
        let r = DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| self.tau * correlation(&xs, p, &self.theta)),
        );
        let f = DVector::from_vec(self.trend.basis(&xs));
        let mean = f.dot(&DVector::from_column_slice(&self.beta)) + r.dot(&self.alpha);
        let total = self.sigma2 + self.noise_var;
        if total == 0.0 {
            return (mean, 0.0);
        }
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&r)
            .expect("triangular factor is invertible");
        let u = self.rinv_f.transpose() * &r - f;
        let infl = u.dot(&self.gls.solve(&u));
        let mse = total * (1.0 - v.norm_squared() + infl);
        (mean, mse.max(0.0))
    }

    /// Predictive mean and the variance of the latent mean, i.e. the
    /// response variance without the noise term.
    pub fn predict_latent(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_one(x);
        (m, (v - self.noise_var).max(0.0))
    }

    pub fn predict(&self, xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        xs.iter().map(|x| self.predict_one(x)).collect()
    }

    /// Training response with the largest value.
    pub fn best_response(&self) -> f64 {
        self.responses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone)]
struct Likelihood<'a> {
    points: &'a [Vec<f64>],
    y: &'a DVector<f64>,
    f: &'a DMatrix<f64>,
    log_theta: (f64, f64),
    noise_floor: f64,
}

impl Likelihood<'_> {
    /// Range of `log10(σ_n²/σ²)`.
    const ETA: (f64, f64) = (-12.0, 2.0);

    fn eta_of_tau(tau: f64) -> f64 {
        ((1.0 - tau) / tau).max(1e-12).log10()
    }

    fn clamp(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len() - 1;
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                if i < d {
                    v.clamp(self.log_theta.0, self.log_theta.1)
                } else {
                    v.clamp(Self::ETA.0, Self::ETA.1)
                }
            })
            .collect()
    }

    fn unpack(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let d = x.len() - 1;
        let theta = x[..d].iter().map(|v| 10f64.powf(*v)).collect();
        let eta = 10f64.powf(x[d]);
        (theta, 1.0 / (1.0 + eta))
    }
}

impl CostFunction for Likelihood<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let clamped = self.clamp(x);
        // quadratic wall outside the box keeps the simplex inside
        let outside: f64 = x.iter().zip(&clamped).map(|(a, b)| (a - b) * (a - b)).sum();
        let (theta, tau) = self.unpack(&clamped);
        let Some(fz) = factorize(self.points, self.y, self.f, &theta, tau) else {
            return Ok(f64::INFINITY);
        };
        let mut cost = fz.nll + 1e3 * outside;
        let noise = (1.0 - tau) * fz.total_var;
        if self.noise_floor > 0.0 && noise < self.noise_floor {
            cost += 1e3 * (self.noise_floor / noise.max(f64::MIN_POSITIVE)).ln().powi(2);
        }
        Ok(cost)
    }
}

fn initial_simplex(x0: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    simplex
}

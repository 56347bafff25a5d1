use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{expected_improvement, FitOptions, KrigingModel, ObservationRegion, Trend};
use crate::error::{Error, Result};
use crate::ground::GroundPoint;
use crate::prob::derive_seed;
use crate::soi::SoiEngine;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerParams {
    pub ei_thr: f64,
    pub max_iter: usize,
    /// Initial design is `initial_grid × initial_grid` evenly spaced points.
    pub initial_grid: usize,
    pub trend: Trend,
    /// Multi-start count for the first fit.
    pub restarts: usize,
    /// Multi-start count for refits, which also start from the previous optimum.
    pub refit_restarts: usize,
    pub max_failure_fraction: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            ei_thr: 1e-5,
            max_iter: 100,
            initial_grid: 9,
            trend: Trend::Ordinary,
            restarts: 20,
            refit_restarts: 4,
            max_failure_fraction: 0.2,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ei_thr > 0.0) {
            return Err(Error::Config(format!("optimizer.ei_thr must be positive, got {}", self.ei_thr)));
        }
        if self.max_iter > 100 {
            return Err(Error::Config(format!("optimizer.max_iter is capped at 100, got {}", self.max_iter)));
        }
        if self.initial_grid < 3 {
            return Err(Error::Config(format!(
                "optimizer.initial_grid must be at least 3, got {}",
                self.initial_grid
            )));
        }
        if self.restarts == 0 || self.refit_restarts == 0 {
            return Err(Error::Config("optimizer restart counts must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.max_failure_fraction) {
            return Err(Error::Config("optimizer.max_failure_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// SOI and its Monte Carlo variance at a surface point.
pub trait SoiObjective: Sync {
    fn evaluate(&self, point: [f64; 2]) -> Result<(f64, f64)>;
}

impl<F> SoiObjective for F
where
    F: Fn([f64; 2]) -> Result<(f64, f64)> + Sync,
{
    fn evaluate(&self, point: [f64; 2]) -> Result<(f64, f64)> {
        self(point)
    }
}

/// SOI of the case study at `z = 0`.
pub struct EngineObjective<'a>(pub SoiEngine<'a>);

impl SoiObjective for EngineObjective<'_> {
    fn evaluate(&self, point: [f64; 2]) -> Result<(f64, f64)> {
        let e = self.0.soi_at(GroundPoint::surface(point[0], point[1]))?;
        Ok((e.soi, e.noise_var))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluated {
    pub point: [f64; 2],
    pub soi: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub point: [f64; 2],
    /// `None` when the evaluation failed.
    pub soi: Option<f64>,
    pub max_ei: f64,
    pub best_observed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EiThreshold,
    MaxIterations,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::EiThreshold => "ei_threshold",
            Termination::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub point: [f64; 2],
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationTrace {
    pub initial: Vec<Evaluated>,
    pub steps: Vec<TraceStep>,
    pub failed: Vec<[f64; 2]>,
    /// Grid or training point with the largest predicted SOI.
    pub l_star: [f64; 2],
    pub soi_star: f64,
    /// `l_star` moved by a one-cell quadratic fit of the predicted surface.
    pub l_star_refined: [f64; 2],
    pub termination: Termination,
    /// The training responses were constant.
    pub degenerate: bool,
    pub theta: Vec<f64>,
    pub tau: f64,
    pub sigma2: f64,
    pub noise_var: f64,
    pub surface: Vec<SurfacePoint>,
}

impl OptimizationTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    /// All successfully evaluated points in order.
    pub fn training(&self) -> Vec<Evaluated> {
        let mut out = self.initial.clone();
        for s in &self.steps {
            if let Some(v) = s.soi {
                out.push(Evaluated {
                    point: s.point,
                    soi: v,
                    noise_var: f64::NAN,
                });
            }
        }
        out
    }
}

struct Design {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    noise: Vec<f64>,
    attempted: usize,
    failed: Vec<[f64; 2]>,
}

impl Design {
    fn push(&mut self, point: [f64; 2], outcome: Result<(f64, f64)>) -> Option<f64> {
        self.attempted += 1;
        match outcome {
            Ok((v, var)) if v.is_finite() => {
                self.points.push(point.to_vec());
                self.values.push(v);
                self.noise.push(if var.is_finite() { var.max(0.0) } else { 0.0 });
                Some(v)
            }
            Ok(_) => {
                self.failed.push(point);
                None
            }
            Err(e) => {
                log::warn!("SOI evaluation failed at {point:?}: {e}");
                self.failed.push(point);
                None
            }
        }
    }

    fn check_failures(&self, limit: f64) -> Result<()> {
        if self.failed.len() as f64 > limit * self.attempted as f64 {
            return Err(Error::Unstable(format!(
                "{} of {} SOI evaluations failed",
                self.failed.len(),
                self.attempted
            )));
        }
        Ok(())
    }

    fn best(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn fit(&self, params: &OptimizerParams, region: &ObservationRegion, warm: Option<&KrigingModel>, seed: u64) -> Result<KrigingModel> {
        let noise = self.noise.iter().sum::<f64>() / self.noise.len() as f64;
        let opts = FitOptions {
            trend: params.trend,
            restarts: if warm.is_some() { params.refit_restarts } else { params.restarts },
            noise_floor: (noise > 0.0).then_some(noise),
            warm_start: warm.filter(|m| !m.degenerate).map(|m| (m.theta.clone(), m.tau)),
            scaling: Some(super::InputScaling::from_bounds(
                &[region.x[0], region.y[0]],
                &[region.x[1], region.y[1]],
            )?),
            seed,
            ..Default::default()
        };
        KrigingModel::fit(&self.points, &self.values, &opts)
    }
}

fn near(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
}

/// Expected-improvement search for the location with the largest SOI.
///
/// The objective is evaluated on an `initial_grid²` design (in parallel),
/// then one point at a time at the grid node with the largest expected
/// improvement until that falls to `ei_thr` or `max_iter` points are added.
pub fn optimize_location(
    region: &ObservationRegion,
    objective: &dyn SoiObjective,
    params: &OptimizerParams,
    seed: u64,
) -> Result<OptimizationTrace> {
    params.validate()?;
    let init = region.with_counts(params.initial_grid, params.initial_grid)?;
    let init_nodes = init.nodes();
    let outcomes: Vec<Result<(f64, f64)>> = init_nodes.par_iter().map(|p| objective.evaluate(*p)).collect();
    let mut design = Design {
        points: Vec::new(),
        values: Vec::new(),
        noise: Vec::new(),
        attempted: 0,
        failed: Vec::new(),
    };
    let mut initial = Vec::new();
    for (p, o) in init_nodes.iter().zip(outcomes) {
        if let Some(v) = design.push(*p, o) {
            initial.push(Evaluated {
                point: *p,
                soi: v,
                noise_var: *design.noise.last().expect("just pushed"),
            });
        }
    }
    design.check_failures(params.max_failure_fraction)?;

    let grid = region.nodes();
    let grid_vecs: Vec<Vec<f64>> = grid.iter().map(|p| p.to_vec()).collect();
    let mut excluded: Vec<bool> = grid
        .iter()
        .map(|g| {
            design.points.iter().any(|p| near(p, g)) || design.failed.iter().any(|p| near(p, g))
        })
        .collect();

    let mut model = design.fit(params, region, None, derive_seed(seed, "kriging", 0))?;
    let mut steps = Vec::new();
    let mut termination = Termination::MaxIterations;
    for iteration in 1..=params.max_iter {
        let best = design.best();
        let ei: Vec<f64> = grid_vecs
            .par_iter()
            .map(|g| {
                let (m, v) = model.predict_latent(g);
                expected_improvement(m, v, best)
            })
            .collect();
        let mut arg = None;
        let mut max_ei = 0.0;
        for (k, e) in ei.iter().enumerate() {
            if !excluded[k] && (arg.is_none() || *e > max_ei) {
                arg = Some(k);
                max_ei = *e;
            }
        }
        let Some(k) = arg else {
            termination = Termination::EiThreshold;
            break;
        };
        if model.degenerate || max_ei <= params.ei_thr {
            termination = Termination::EiThreshold;
            break;
        }
        excluded[k] = true;
        let point = grid[k];
        let soi = design.push(point, objective.evaluate(point));
        design.check_failures(params.max_failure_fraction)?;
        steps.push(TraceStep {
            iteration,
            point,
            soi,
            max_ei,
            best_observed: design.best(),
        });
        if soi.is_some() {
            model = design.fit(params, region, Some(&model), derive_seed(seed, "kriging", iteration as u64))?;
        }
    }

    let surface: Vec<SurfacePoint> = grid_vecs
        .par_iter()
        .zip(&grid)
        .map(|(g, p)| {
            let (mean, variance) = model.predict_one(g);
            SurfacePoint {
                point: *p,
                mean,
                variance,
            }
        })
        .collect();
    let mut star = 0;
    for (k, s) in surface.iter().enumerate() {
        if s.mean > surface[star].mean {
            star = k;
        }
    }
    let mut l_star = surface[star].point;
    let mut soi_star = surface[star].mean;
    let mut on_grid = true;
    for p in &design.points {
        let (m, _) = model.predict_one(p);
        if m > soi_star {
            soi_star = m;
            l_star = [p[0], p[1]];
            on_grid = false;
        }
    }
    let l_star_refined = if on_grid {
        refine(region, &surface, star)
    } else {
        l_star
    };

    Ok(OptimizationTrace {
        initial,
        steps,
        failed: design.failed,
        l_star,
        soi_star,
        l_star_refined,
        termination,
        degenerate: model.degenerate,
        theta: model.theta.clone(),
        tau: model.tau,
        sigma2: model.sigma2,
        noise_var: model.noise_var,
        surface,
    })
}

/// Vertex of the parabola through three neighbouring nodes along each axis,
/// kept within half a cell of the node.
fn refine(region: &ObservationRegion, surface: &[SurfacePoint], k: usize) -> [f64; 2] {
    let (i, j) = (k % region.nx, k / region.nx);
    let h = region.spacing();
    let at = |i: usize, j: usize| surface[j * region.nx + i].mean;
    let offset = |lo: f64, mid: f64, hi: f64| {
        let curv = lo - 2.0 * mid + hi;
        if curv < 0.0 {
            (0.5 * (lo - hi) / curv).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let mut p = surface[k].point;
    if i > 0 && i + 1 < region.nx {
        p[0] += h[0] * offset(at(i - 1, j), at(i, j), at(i + 1, j));
    }
    if j > 0 && j + 1 < region.ny {
        p[1] += h[1] * offset(at(i, j - 1), at(i, j), at(i, j + 1));
    }
    p
}

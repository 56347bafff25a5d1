//! Kriging surrogate of the SOI surface and expected-improvement search for
//! the best monitoring location.

mod kriging;
mod optimizer;

pub use kriging::{FitOptions, InputScaling, KrigingModel, Trend};
pub use optimizer::{
    optimize_location, EngineObjective, Evaluated, OptimizationTrace, OptimizerParams, SoiObjective, SurfacePoint,
    Termination, TraceStep,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::normal;

/// A rectangle on the ground surface with a regular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservationRegion {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl ObservationRegion {
    pub const MAX_POINTS: usize = 1_000_000;

    pub fn new(x: [f64; 2], y: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        let r = Self { x, y, nx, ny };
        if !(x[0] < x[1] && y[0] < y[1]) || x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("region ranges must be finite and increasing, got {x:?} × {y:?}")));
        }
        if nx < 2 || ny < 2 || nx.saturating_mul(ny) > Self::MAX_POINTS {
            return Err(Error::Contract(format!(
                "grid counts must be at least 2 with at most {} points, got {nx} × {ny}",
                Self::MAX_POINTS
            )));
        }
        Ok(r)
    }

    pub fn n_points(&self) -> usize {
        self.nx * self.ny
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            (self.x[1] - self.x[0]) / (self.nx - 1) as f64,
            (self.y[1] - self.y[0]) / (self.ny - 1) as f64,
        ]
    }

    /// Grid node `(i, j)` with `i` along x.
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let [dx, dy] = self.spacing();
        let x = if i + 1 == self.nx { self.x[1] } else { self.x[0] + i as f64 * dx };
        let y = if j + 1 == self.ny { self.y[1] } else { self.y[0] + j as f64 * dy };
        [x, y]
    }

    /// All nodes, x varying fastest.
    pub fn nodes(&self) -> Vec<[f64; 2]> {
        (0..self.ny)
            .flat_map(|j| (0..self.nx).map(move |i| (i, j)))
            .map(|(i, j)| self.node(i, j))
            .collect()
    }

    /// The same rectangle with `n × n` nodes.
    pub fn with_counts(&self, nx: usize, ny: usize) -> Result<Self> {
        Self::new(self.x, self.y, nx, ny)
    }

    /// Mirror image in the plane `x = 0`.
    pub fn mirrored_x(&self) -> Self {
        Self {
            x: [-self.x[1], -self.x[0]],
            ..*self
        }
    }
}

/// `(μ − best)·Φ(d) + σ·φ(d)` with `d = (μ − best)/σ`; `max(μ − best, 0)`
/// when `σ = 0`.
///
/// ```
/// let ei = settle_sense::surrogate::expected_improvement(0.4, 0.01, 0.4);
/// assert!((ei - 0.0398942).abs() < 1e-7);
/// ```
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let sd = variance.max(0.0).sqrt();
    let gain = mean - best;
    if sd <= 0.0 {
        return gain.max(0.0);
    }
    let d = gain / sd;
    (gain * normal::cdf(d) + sd * normal::pdf(d)).max(0.0)
}

/// Expected improvement of `model` at each query point, using the variance
/// of the latent mean so that repeated noisy observations stop paying off.
pub fn expected_improvement_at(model: &KrigingModel, queries: &[Vec<f64>], best: f64) -> Vec<f64> {
    queries
        .iter()
        .map(|q| {
            let (m, v) = model.predict_latent(q);
            expected_improvement(m, v, best)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_limits() {
        assert!((expected_improvement(0.5, 0.0, 0.4) - 0.1).abs() < 1e-15);
        assert!((expected_improvement(0.5, 1e-20, 0.4) - 0.1).abs() < 1e-12);
        assert!(expected_improvement(-5.0, 1e-4, 0.4) < 1e-300);
        assert_eq!(expected_improvement(0.4, 0.0, 0.4), 0.0);
    }

    #[test]
    fn region_nodes() {
        let r = ObservationRegion::new([10.0, 30.0], [10.0, 30.0], 101, 101).unwrap();
        assert_eq!(r.n_points(), 10_201);
        assert_eq!(r.node(100, 100), [30.0, 30.0]);
        assert!((r.spacing()[0] - 0.2).abs() < 1e-15);
        let n = r.nodes();
        assert_eq!(n[1], r.node(1, 0));
        assert!(ObservationRegion::new([1.0, 1.0], [0.0, 1.0], 3, 3).is_err());
        assert!(ObservationRegion::new([0.0, 1.0], [0.0, 1.0], 2000, 2000).is_err());
        assert_eq!(r.mirrored_x().x, [-30.0, -10.0]);
    }
}

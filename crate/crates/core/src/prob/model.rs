use rand::Rng;
use rand_distr::StandardNormal;

use super::distribution::RandomVariable;
use crate::error::{Error, Result};

/// Position of each case-study variable in a realization vector.
///
/// The limit state indexes realizations by these positions, so the order is
/// part of the public contract: `[V_L, K, E/G, E_br^sag, E_br^hog1,
/// E_br^hog2, E_dr^sag, E_dr^hog1, E_dr^hog2]`.
pub mod index {
    pub const VOLUME_LOSS: usize = 0;
    pub const TROUGH_WIDTH: usize = 1;
    pub const E_OVER_G: usize = 2;
    pub const BENDING_SAG: usize = 3;
    pub const BENDING_HOG1: usize = 4;
    pub const BENDING_HOG2: usize = 5;
    pub const SHEAR_SAG: usize = 6;
    pub const SHEAR_HOG1: usize = 7;
    pub const SHEAR_HOG2: usize = 8;
}

/// Canonical variable names of the case-study model, in order.
pub const CASE_STUDY_NAMES: [&str; 9] = [
    "volume_loss",
    "trough_width",
    "e_over_g",
    "bending_error_sag",
    "bending_error_hog1",
    "bending_error_hog2",
    "shear_error_sag",
    "shear_error_hog1",
    "shear_error_hog2",
];

/// An ordered vector of independent random variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomModel {
    variables: Vec<RandomVariable>,
}

/// Samples drawn from a [`RandomModel`], row-major (`n × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub standard: Vec<f64>,
    pub physical: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.standard.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.standard.is_empty()
    }

    pub fn standard_row(&self, i: usize) -> &[f64] {
        &self.standard[i * self.dim..(i + 1) * self.dim]
    }

    pub fn physical_row(&self, i: usize) -> &[f64] {
        &self.physical[i * self.dim..(i + 1) * self.dim]
    }
}

impl RandomModel {
    pub fn new(variables: Vec<RandomVariable>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::Contract("a random model needs at least one variable".into()));
        }
        for (i, v) in variables.iter().enumerate() {
            if variables[..i].iter().any(|w| w.name() == v.name()) {
                return Err(Error::Config(format!("duplicate variable name `{}`", v.name())));
            }
        }
        Ok(Self { variables })
    }

    /// The nine-variable model of the tunneling case study with its published
    /// moments. V_L is expressed in percent; E/G lives on `[2, 3]`.
    pub fn case_study() -> Self {
        let mut vars = vec![
            RandomVariable::lognormal(CASE_STUDY_NAMES[0], 0.4, 0.16),
            RandomVariable::lognormal(CASE_STUDY_NAMES[1], 0.3, 0.06),
            RandomVariable::scaled_beta(CASE_STUDY_NAMES[2], 2.5, 0.045, 2.0, 3.0),
        ];
        for name in &CASE_STUDY_NAMES[3..] {
            vars.push(RandomVariable::lognormal(*name, 1.0, 0.05));
        }
        Self {
            variables: vars.into_iter().map(|v| v.expect("valid defaults")).collect(),
        }
    }

    /// Checks that the variables carry the canonical case-study names in order.
    pub fn check_case_study_layout(&self) -> Result<()> {
        let names: Vec<&str> = self.variables.iter().map(|v| v.name()).collect();
        if names != CASE_STUDY_NAMES {
            return Err(Error::Config(format!(
                "random model must list {:?} in this order, got {:?}",
                CASE_STUDY_NAMES, names
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[RandomVariable] {
        &self.variables
    }

    pub fn variable(&self, i: usize) -> &RandomVariable {
        &self.variables[i]
    }

    /// Vector of marginal means (the "mean point" realization).
    pub fn means(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.mean()).collect()
    }

    /// Maps a standard-normal vector to physical space.
    pub fn to_physical(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        if u.len() != self.dim() || out.len() != self.dim() {
            return Err(Error::Contract(format!(
                "expected vectors of length {}, got {} and {}",
                self.dim(),
                u.len(),
                out.len()
            )));
        }
        for ((v, &ui), o) in self.variables.iter().zip(u).zip(out.iter_mut()) {
            *o = v.from_standard_normal(ui)?;
        }
        Ok(())
    }

    pub fn to_standard(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() || out.len() != self.dim() {
            return Err(Error::Contract(format!(
                "expected vectors of length {}, got {} and {}",
                self.dim(),
                x.len(),
                out.len()
            )));
        }
        for ((v, &xi), o) in self.variables.iter().zip(x).zip(out.iter_mut()) {
            *o = v.to_standard_normal(xi)?;
        }
        Ok(())
    }

    /// Draws `n` independent points; physical images come from the
    /// isoprobabilistic transform of the standard-normal draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Samples> {
        if n == 0 {
            return Err(Error::Contract("sample size must be at least 1".into()));
        }
        let dim = self.dim();
        let standard: Vec<f64> = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut physical = vec![0.0; n * dim];
        for (u, x) in standard.chunks(dim).zip(physical.chunks_mut(dim)) {
            self.to_physical(u, x)?;
        }
        Ok(Samples {
            dim,
            standard,
            physical,
        })
    }
}

//! Scenario files: every input of a run in one TOML document.
//!
//! An empty file yields the full case study. Unknown keys are rejected and
//! parse errors carry the offending line.
//!
//! ```
//! let s = settle_sense::scenario::Scenario::from_toml_str("[limit_state]\neps_lim = 0.05\n").unwrap();
//! assert_eq!(s.eps_lim_strain(), 5e-4);
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::building::{self, BuildingGeometry, ZoneStrainRule};
use crate::error::{Error, Result};
use crate::ground::{self, GroundPoint, TunnelGeometry};
use crate::prob::{index, DistributionKind, RandomModel, RandomVariable, CASE_STUDY_NAMES};
use crate::soi::SoiParams;
use crate::subset::SubsetSimParams;
use crate::surrogate::{ObservationRegion, OptimizerParams};
use crate::updating::{ErrorModel, Measurement, UpdateParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunnelSection {
    pub diameter: f64,
    pub axis_depth: f64,
    pub face_y: f64,
    /// Omitted means the portal lies at `+∞`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub portal_y: Option<f64>,
    pub settlement_ratio: f64,
}

impl Default for TunnelSection {
    fn default() -> Self {
        let t = TunnelGeometry::reference();
        Self {
            diameter: t.diameter,
            axis_depth: t.axis_depth,
            face_y: t.face_y,
            portal_y: None,
            settlement_ratio: t.settlement_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildingSection {
    pub length: f64,
    pub origin_distance: f64,
    pub angle_deg: f64,
    pub height: f64,
    pub n_profile: usize,
    pub zone_strain: ZoneStrainRule,
}

impl Default for BuildingSection {
    fn default() -> Self {
        Self {
            length: 20.0,
            origin_distance: 20.0,
            angle_deg: 45.0,
            height: 12.0,
            n_profile: 101,
            zone_strain: ZoneStrainRule::Mean,
        }
    }
}

/// One marginal; omitted fields keep the case-study value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<DistributionKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitStateSection {
    /// Limiting tensile strain in percent.
    pub eps_lim: f64,
}

impl Default for LimitStateSection {
    fn default() -> Self {
        Self { eps_lim: 0.05 }
    }
}

/// A rectangular grid on the ground surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

/// Same keys as [`GridSection`], defaulting to the plotted window
/// `[-30, 30]²` at 1 m spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SettlementGridSection {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Default for SettlementGridSection {
    fn default() -> Self {
        Self {
            x: [-30.0, 30.0],
            y: [-30.0, 30.0],
            nx: 61,
            ny: 61,
        }
    }
}

impl From<&SettlementGridSection> for GridSection {
    fn from(g: &SettlementGridSection) -> Self {
        Self {
            x: g.x,
            y: g.y,
            nx: g.nx,
            ny: g.ny,
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x: [10.0, 30.0],
            y: [10.0, 30.0],
            nx: 101,
            ny: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSection {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
}

impl PointSection {
    pub fn point(&self) -> GroundPoint {
        GroundPoint::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSection {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    /// Measured settlement magnitude (mm).
    pub value: f64,
}

/// Subset-simulation settings; the seed comes from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsetSection {
    pub n_per_level: usize,
    pub p0: f64,
    pub proposal_halfwidth: f64,
    pub max_levels: usize,
}

impl Default for SubsetSection {
    fn default() -> Self {
        let p = SubsetSimParams::default();
        Self {
            n_per_level: p.n_per_level,
            p0: p.p0,
            proposal_halfwidth: p.proposal_halfwidth,
            max_levels: p.max_levels,
        }
    }
}

fn default_measurements() -> Vec<MeasurementSection> {
    [10.0, 15.0, 20.0, 25.0]
        .iter()
        .map(|&c| MeasurementSection {
            x: c,
            y: c,
            z: 0.0,
            value: 10.0,
        })
        .collect()
}

fn default_locations() -> Vec<PointSection> {
    default_measurements()
        .iter()
        .map(|m| PointSection { x: m.x, y: m.y, z: m.z })
        .collect()
}

/// The raw document, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub seed: u64,
    pub tunnel: TunnelSection,
    pub building: BuildingSection,
    /// Overrides keyed by variable name.
    pub random: BTreeMap<String, VariableSection>,
    pub errors: ErrorModel,
    pub limit_state: LimitStateSection,
    pub region: GridSection,
    pub settlement_grid: SettlementGridSection,
    pub subset: SubsetSection,
    pub update: UpdateParams,
    pub soi: SoiParams,
    pub optimizer: OptimizerParams,
    pub measurements: Vec<MeasurementSection>,
    pub soi_locations: Vec<PointSection>,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            seed: 20_240_501,
            tunnel: TunnelSection::default(),
            building: BuildingSection::default(),
            random: BTreeMap::new(),
            errors: ErrorModel::default(),
            limit_state: LimitStateSection::default(),
            region: GridSection::default(),
            settlement_grid: SettlementGridSection::default(),
            subset: SubsetSection::default(),
            update: UpdateParams::default(),
            soi: SoiParams::default(),
            optimizer: OptimizerParams::default(),
            measurements: default_measurements(),
            soi_locations: default_locations(),
        }
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub tunnel: TunnelGeometry,
    pub building: BuildingGeometry,
    pub zone_strain: ZoneStrainRule,
    pub model: RandomModel,
    pub errors: ErrorModel,
    pub region: ObservationRegion,
    pub settlement_grid: ObservationRegion,
    pub subset: SubsetSection,
    pub update: UpdateParams,
    pub soi: SoiParams,
    pub optimizer: OptimizerParams,
    pub measurements: Vec<Measurement>,
    pub soi_locations: Vec<GroundPoint>,
    pub file: ScenarioFile,
}

fn build_model(overrides: &BTreeMap<String, VariableSection>) -> Result<RandomModel> {
    for key in overrides.keys() {
        if !CASE_STUDY_NAMES.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "random.{key}: unknown variable; expected one of {CASE_STUDY_NAMES:?}"
            )));
        }
    }
    let base = RandomModel::case_study();
    let mut vars = Vec::with_capacity(base.dim());
    for v in base.variables() {
        let Some(o) = overrides.get(v.name()) else {
            vars.push(v.clone());
            continue;
        };
        let kind = o.kind.unwrap_or(v.kind());
        let support = match (kind, v.support()) {
            (DistributionKind::ScaledBeta, s) => {
                let (l, u) = s.unwrap_or((f64::NAN, f64::NAN));
                Some((o.lower.unwrap_or(l), o.upper.unwrap_or(u)))
            }
            _ => None,
        };
        let rv = RandomVariable::new(
            v.name(),
            kind,
            o.mean.unwrap_or(v.mean()),
            o.std.unwrap_or(v.std()),
            support,
        )
        .map_err(|e| Error::Config(format!("random.{}: {e}", v.name())))?;
        vars.push(rv);
    }
    RandomModel::new(vars)
}

fn build_grid(name: &str, g: &GridSection) -> Result<ObservationRegion> {
    ObservationRegion::new(g.x, g.y, g.nx, g.ny).map_err(|e| Error::Config(format!("{name}: {e}")))
}

impl Scenario {
    /// The case study with every default.
    pub fn case_study() -> Self {
        Self::from_file(ScenarioFile::default()).expect("defaults are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let t = &file.tunnel;
        let tunnel = TunnelGeometry {
            diameter: t.diameter,
            axis_depth: t.axis_depth,
            face_y: t.face_y,
            portal_y: t.portal_y.unwrap_or(f64::INFINITY),
            settlement_ratio: t.settlement_ratio,
        };
        tunnel.validate().map_err(|e| Error::Config(format!("tunnel: {e}")))?;
        let b = &file.building;
        let building = BuildingGeometry::new(b.length, b.origin_distance, b.angle_deg, b.height, b.n_profile)
            .map_err(|e| Error::Config(format!("building: {e}")))?;
        let model = build_model(&file.random)?;
        file.errors.validate()?;
        let eps = file.limit_state.eps_lim;
        if !(eps > 0.0 && eps < 100.0) {
            return Err(Error::Config(format!(
                "limit_state.eps_lim is a percentage in (0, 100), got {eps}"
            )));
        }
        let region = build_grid("region", &file.region)?;
        let settlement_grid = build_grid("settlement_grid", &(&file.settlement_grid).into())?;
        let scenario = Self {
            seed: file.seed,
            tunnel,
            building,
            zone_strain: b.zone_strain,
            model,
            errors: file.errors,
            region,
            settlement_grid,
            subset: file.subset.clone(),
            update: file.update,
            soi: file.soi,
            optimizer: file.optimizer.clone(),
            measurements: file
                .measurements
                .iter()
                .map(|m| Measurement {
                    location: GroundPoint::new(m.x, m.y, m.z),
                    value: m.value,
                    errors: file.errors,
                })
                .collect(),
            soi_locations: file.soi_locations.iter().map(PointSection::point).collect(),
            file,
        };
        scenario
            .subset_params()
            .validate()
            .map_err(|e| Error::Config(format!("subset: {e}")))?;
        scenario.update.validate()?;
        scenario.soi.validate()?;
        scenario.optimizer.validate()?;
        for (i, m) in scenario.measurements.iter().enumerate() {
            if !m.value.is_finite() || !m.location.z.is_finite() || m.location.z < 0.0 {
                return Err(Error::Config(format!("measurements[{i}]: value and depth must be finite, depth ≥ 0")));
            }
        }
        Ok(scenario)
    }

    /// Returns a copy with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.seed = seed;
        s.file.seed = seed;
        s
    }

    /// Returns a copy with the tunnel face moved to `face_y`.
    pub fn with_face(&self, face_y: f64) -> Self {
        let mut s = self.clone();
        s.tunnel.face_y = face_y;
        s.file.tunnel.face_y = face_y;
        s
    }

    /// The limiting strain as a strain (not percent).
    pub fn eps_lim_strain(&self) -> f64 {
        self.file.limit_state.eps_lim / 100.0
    }

    pub fn subset_params(&self) -> SubsetSimParams {
        SubsetSimParams {
            n_per_level: self.subset.n_per_level,
            p0: self.subset.p0,
            proposal_halfwidth: self.subset.proposal_halfwidth,
            max_levels: self.subset.max_levels,
            seed: self.seed,
        }
    }

    /// `g(x)` for a physical realization.
    pub fn limit_state(&self, x: &[f64]) -> Result<f64> {
        building::limit_state(&self.tunnel, &self.building, self.zone_strain, self.eps_lim_strain(), x)
    }

    /// `g` in standard normal space; NaN when the model cannot be evaluated.
    pub fn limit_state_standard(&self, u: &[f64]) -> f64 {
        let mut x = vec![0.0; u.len()];
        match self.model.to_physical(u, &mut x) {
            Ok(()) => self.limit_state(&x).unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        }
    }

    /// Settlement magnitude (mm) at `location` for standard-normal values of
    /// volume loss and trough width.
    pub fn settlement_magnitude_standard(&self, location: GroundPoint, u_vl: f64, u_k: f64) -> Result<f64> {
        let v_l = self.model.variable(index::VOLUME_LOSS).from_standard_normal(u_vl)? / 100.0;
        let k = self.model.variable(index::TROUGH_WIDTH).from_standard_normal(u_k)?;
        ground::settlement_magnitude(&self.tunnel, location, v_l, k)
    }

    /// The effective configuration as TOML.
    pub fn effective_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario serializes")
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_toml_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

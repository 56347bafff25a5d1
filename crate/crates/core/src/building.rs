//! Equivalent-beam response of a building wall to a settlement trough.
//!
//! The wall is sampled along its length, split into sagging and hogging
//! zones at the inflection points of the settlement profile, and each zone is
//! treated as a deep elastic beam. Bending and shear strains from the zone's
//! deflection ratio are combined with the horizontal ground strain to give
//! the governing tensile strain `ε_max` and the limit state
//! `g = ε_lim − ε_max`.
//!
//! Realizations follow the case-study layout of [`crate::prob::index`]; the
//! volume loss entry is in percent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground::{GroundPoint, TunnelGeometry, Trough};
use crate::prob::index;

/// Plan position and section of the wall.
///
/// The wall lies on a line through the origin at `angle_deg` from the +x
/// axis. It starts at the reference point `Â = origin_distance·(cos θ, sin θ)`
/// and runs `length` metres in the direction of θ. `origin_distance` may be
/// negative to place `Â` on the other side of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingGeometry {
    pub length: f64,
    pub origin_distance: f64,
    pub angle_deg: f64,
    pub height: f64,
    pub n_profile: usize,
}

impl BuildingGeometry {
    pub fn new(length: f64, origin_distance: f64, angle_deg: f64, height: f64, n_profile: usize) -> Result<Self> {
        let b = Self {
            length,
            origin_distance,
            angle_deg,
            height,
            n_profile,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::Geometry(format!("wall length must be positive, got {}", self.length)));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::Geometry(format!("wall height must be positive, got {}", self.height)));
        }
        if !self.origin_distance.is_finite() || !self.angle_deg.is_finite() {
            return Err(Error::Geometry("wall position must be finite".into()));
        }
        if self.n_profile < 51 || self.n_profile % 2 == 0 {
            return Err(Error::Geometry(format!(
                "n_profile must be odd and at least 51, got {}",
                self.n_profile
            )));
        }
        Ok(())
    }

    pub fn angle_rad(&self) -> f64 {
        self.angle_deg.to_radians()
    }

    /// Start and end points of the wall in plan.
    pub fn endpoints(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.angle_rad().sin_cos();
        let a = [self.origin_distance * c, self.origin_distance * s];
        let b = [a[0] + self.length * c, a[1] + self.length * s];
        (a, b)
    }

    /// Second moment of area per unit thickness, `H³/12`.
    pub fn inertia(&self) -> f64 {
        self.height.powi(3) / 12.0
    }
}

/// How the per-point horizontal strain is reduced to one value per zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneStrainRule {
    #[default]
    Mean,
    Max,
}

/// Settlement and horizontal strain sampled along the wall.
#[derive(Debug, Clone, PartialEq)]
pub struct WallProfile {
    /// Arclength from `Â` (m).
    pub arclength: Vec<f64>,
    /// Plan coordinates of each sample.
    pub points: Vec<[f64; 2]>,
    /// Settlement magnitude, positive downwards (mm).
    pub settlement: Vec<f64>,
    /// Horizontal ground strain along the wall direction.
    pub horizontal_strain: Vec<f64>,
}

impl WallProfile {
    pub fn len(&self) -> usize {
        self.arclength.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arclength.is_empty()
    }
}

/// Samples the trough along the wall for volume loss `v_l` (fraction) and
/// trough width `k`.
pub fn wall_profile(tunnel: &TunnelGeometry, building: &BuildingGeometry, v_l: f64, k: f64) -> Result<WallProfile> {
    let trough = Trough::new(tunnel, v_l, k)?;
    let n = building.n_profile;
    let theta = building.angle_rad();
    let (a, b) = building.endpoints();
    let mut profile = WallProfile {
        arclength: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        settlement: Vec::with_capacity(n),
        horizontal_strain: Vec::with_capacity(n),
    };
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let field = trough.field(GroundPoint::surface(p[0], p[1]))?;
        profile.arclength.push(t * building.length);
        profile.points.push(p);
        profile.settlement.push(-field.settlement);
        profile.horizontal_strain.push(field.strains.along(theta));
    }
    Ok(profile)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeflectionKind {
    Sagging,
    Hogging,
}

/// One sagging or hogging stretch of the wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflectionZone {
    pub kind: DeflectionKind,
    /// First and last profile index (inclusive); neighbours share the
    /// inflection sample.
    pub start: usize,
    pub end: usize,
    /// Horizontal chord length (m).
    pub l_ref: f64,
    /// Relative deflection from the chord (mm).
    pub delta_ref: f64,
    /// Representative horizontal strain of the zone.
    pub eps_h: f64,
}

/// Zones of a profile, plus the number of slivers merged into neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonePartition {
    pub zones: Vec<DeflectionZone>,
    pub merged_slivers: usize,
}

/// Minimum number of profile samples in a zone.
const MIN_ZONE_POINTS: usize = 3;

/// Splits the profile at sign changes of its discrete second difference.
///
/// On the downward-positive settlement profile a negative second difference
/// (concave, the wall bends as a smile) is sagging and a positive one is
/// hogging. Zones spanning fewer than three samples are merged into their
/// neighbours.
pub fn partition_zones(profile: &WallProfile, rule: ZoneStrainRule) -> Result<ZonePartition> {
    let w = &profile.settlement;
    let n = w.len();
    if n < MIN_ZONE_POINTS {
        return Err(Error::Contract(format!("profile needs at least {MIN_ZONE_POINTS} points, got {n}")));
    }
    let d2: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                0.0
            } else {
                w[i - 1] - 2.0 * w[i] + w[i + 1]
            }
        })
        .collect();
    let scale = d2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;

    let mut sign: Vec<i8> = d2
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == 0 || i == n - 1 || v.abs() <= tol {
                0
            } else if v < 0.0 {
                -1
            } else {
                1
            }
        })
        .collect();
    // flat stretches and the end samples inherit the nearest curvature sign
    let mut last = 0;
    for s in sign.iter_mut() {
        if *s == 0 {
            *s = last;
        } else {
            last = *s;
        }
    }
    last = 0;
    for s in sign.iter_mut().rev() {
        if *s == 0 {
            *s = last;
        } else {
            last = *s;
        }
    }
    if sign[0] == 0 {
        sign.iter_mut().for_each(|s| *s = -1);
    }

    let mut runs: Vec<(i8, usize, usize)> = Vec::new();
    for (i, &s) in sign.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.0 == s => r.2 = i,
            _ => runs.push((s, i, i)),
        }
    }

    let mut merged = 0;
    while runs.len() > 1 {
        let Some(j) = (0..runs.len())
            .filter(|&j| runs[j].2 - runs[j].1 + 1 < MIN_ZONE_POINTS)
            .min_by_key(|&j| runs[j].2 - runs[j].1)
        else {
            break;
        };
        merged += 1;
        if j == 0 {
            runs[1].1 = runs[0].1;
            runs.remove(0);
        } else if j == runs.len() - 1 {
            runs[j - 1].2 = runs[j].2;
            runs.pop();
        } else {
            runs[j - 1].2 = runs[j + 1].2;
            runs.drain(j..=j + 1);
        }
    }

    let mut zones = Vec::with_capacity(runs.len());
    let mut start = 0;
    for (j, &(s, _, last)) in runs.iter().enumerate() {
        let end = if j + 1 == runs.len() {
            n - 1
        } else if d2[last].abs() <= d2[last + 1].abs() {
            last
        } else {
            last + 1
        };
        let kind = if s < 0 { DeflectionKind::Sagging } else { DeflectionKind::Hogging };
        zones.push(make_zone(profile, kind, start, end, rule));
        start = end;
    }
    Ok(ZonePartition {
        zones,
        merged_slivers: merged,
    })
}

fn make_zone(profile: &WallProfile, kind: DeflectionKind, start: usize, end: usize, rule: ZoneStrainRule) -> DeflectionZone {
    let s = &profile.arclength;
    let w = &profile.settlement;
    let l_ref = s[end] - s[start];
    let rise = w[end] - w[start];
    let mut offset: f64 = 0.0;
    for i in start..=end {
        let chord = w[start] + rise * (s[i] - s[start]) / l_ref;
        let off = match kind {
            DeflectionKind::Sagging => w[i] - chord,
            DeflectionKind::Hogging => chord - w[i],
        };
        offset = offset.max(off);
    }
    let slope = rise / 1000.0 / l_ref;
    let eps = &profile.horizontal_strain[start..=end];
    let eps_h = match rule {
        ZoneStrainRule::Mean => eps.iter().sum::<f64>() / eps.len() as f64,
        ZoneStrainRule::Max => eps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    DeflectionZone {
        kind,
        start,
        end,
        l_ref,
        delta_ref: offset / (1.0 + slope * slope).sqrt(),
        eps_h,
    }
}

/// Maximum bending and diagonal (shear) strains of a deep beam with
/// deflection `delta_ref` (mm) over `l_ref` (m).
pub fn beam_strains(kind: DeflectionKind, l_ref: f64, delta_ref: f64, height: f64, e_over_g: f64) -> Result<(f64, f64)> {
    if !(l_ref > 0.0) {
        return Err(Error::Contract(format!("zone chord length must be positive, got {l_ref}")));
    }
    let t = match kind {
        DeflectionKind::Sagging => height / 2.0,
        DeflectionKind::Hogging => height,
    };
    let a = t;
    let inertia = height.powi(3) / 12.0;
    let ratio = delta_ref / 1000.0 / l_ref;
    let eps_b = ratio / (l_ref / (12.0 * t) + 3.0 * inertia * e_over_g / (2.0 * a * l_ref * height));
    let eps_d = ratio / (1.0 + height * l_ref * l_ref / (18.0 * inertia) / e_over_g);
    Ok((eps_b, eps_d))
}

/// Extreme-fibre bending and diagonal strains including the horizontal
/// strain and the multiplicative model errors.
pub fn combined_strains(
    eps_bmax: f64,
    eps_dmax: f64,
    eps_h: f64,
    e_over_g: f64,
    bending_error: f64,
    shear_error: f64,
) -> (f64, f64) {
    let eps_br = (eps_bmax + eps_h) * bending_error;
    let eps_dr = (eps_h * (1.0 - e_over_g / 4.0)
        + (eps_h * eps_h * e_over_g * e_over_g / 16.0 + eps_dmax * eps_dmax).sqrt())
        * shear_error;
    (eps_br, eps_dr)
}

/// Strain slot a zone contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Sag,
    Hog1,
    Hog2,
}

impl Slot {
    fn error_indices(self) -> (usize, usize) {
        match self {
            Slot::Sag => (index::BENDING_SAG, index::SHEAR_SAG),
            Slot::Hog1 => (index::BENDING_HOG1, index::SHEAR_HOG1),
            Slot::Hog2 => (index::BENDING_HOG2, index::SHEAR_HOG2),
        }
    }

    fn position(self) -> usize {
        match self {
            Slot::Sag => 0,
            Slot::Hog1 => 1,
            Slot::Hog2 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneResponse {
    pub zone: DeflectionZone,
    pub slot: Slot,
    pub eps_bmax: f64,
    pub eps_dmax: f64,
    pub eps_br: f64,
    pub eps_dr: f64,
}

/// Zone strains and the governing strain of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainBreakdown {
    pub zones: Vec<ZoneResponse>,
    /// `[ε_br^sag, ε_dr^sag, ε_br^hog1, ε_dr^hog1, ε_br^hog2, ε_dr^hog2]`,
    /// zero for slots without a zone.
    pub slots: [f64; 6],
    pub populated: [bool; 3],
    pub eps_max: f64,
    pub merged_slivers: usize,
}

/// Runs the full wall pipeline for a physical realization.
pub fn strain_breakdown(
    tunnel: &TunnelGeometry,
    building: &BuildingGeometry,
    rule: ZoneStrainRule,
    realization: &[f64],
) -> Result<StrainBreakdown> {
    if realization.len() != 9 {
        return Err(Error::Contract(format!(
            "realization must have 9 entries, got {}",
            realization.len()
        )));
    }
    let v_l = realization[index::VOLUME_LOSS] / 100.0;
    let k = realization[index::TROUGH_WIDTH];
    let e_over_g = realization[index::E_OVER_G];
    let profile = wall_profile(tunnel, building, v_l, k)?;
    let partition = partition_zones(&profile, rule)?;

    let mut slots = [0.0f64; 6];
    let mut populated = [false; 3];
    let mut zones = Vec::with_capacity(partition.zones.len());
    let mut hogs = 0;
    for zone in partition.zones {
        let slot = match zone.kind {
            DeflectionKind::Sagging => Slot::Sag,
            DeflectionKind::Hogging => {
                hogs += 1;
                if hogs == 1 {
                    Slot::Hog1
                } else {
                    Slot::Hog2
                }
            }
        };
        let (eps_bmax, eps_dmax) = beam_strains(zone.kind, zone.l_ref, zone.delta_ref, building.height, e_over_g)?;
        let (ib, id) = slot.error_indices();
        let (eps_br, eps_dr) = combined_strains(eps_bmax, eps_dmax, zone.eps_h, e_over_g, realization[ib], realization[id]);
        let p = slot.position();
        if populated[p] {
            slots[2 * p] = slots[2 * p].max(eps_br);
            slots[2 * p + 1] = slots[2 * p + 1].max(eps_dr);
        } else {
            slots[2 * p] = eps_br;
            slots[2 * p + 1] = eps_dr;
            populated[p] = true;
        }
        zones.push(ZoneResponse {
            zone,
            slot,
            eps_bmax,
            eps_dmax,
            eps_br,
            eps_dr,
        });
    }
    let eps_max = (0..3)
        .filter(|&p| populated[p])
        .flat_map(|p| [slots[2 * p], slots[2 * p + 1]])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(StrainBreakdown {
        zones,
        slots,
        populated,
        eps_max,
        merged_slivers: partition.merged_slivers,
    })
}

/// Governing strain `ε_max` (dimensionless).
pub fn eps_max(tunnel: &TunnelGeometry, building: &BuildingGeometry, rule: ZoneStrainRule, realization: &[f64]) -> Result<f64> {
    Ok(strain_breakdown(tunnel, building, rule, realization)?.eps_max)
}

/// `g = ε_lim − ε_max`; failure when `g ≤ 0`. `eps_lim` is a strain, not a
/// percentage.
pub fn limit_state(
    tunnel: &TunnelGeometry,
    building: &BuildingGeometry,
    rule: ZoneStrainRule,
    eps_lim: f64,
    realization: &[f64],
) -> Result<f64> {
    Ok(eps_lim - eps_max(tunnel, building, rule, realization)?)
}

/// Damage category from `ε_max` in percent. Band upper bounds are closed;
/// strains above 0.3 % map to category 4 since no strain band defines 5.
pub fn classify_damage(eps_max_percent: f64) -> Result<u8> {
    if !(eps_max_percent >= 0.0) {
        return Err(Error::Contract(format!(
            "damage classification needs a non-negative strain, got {eps_max_percent}"
        )));
    }
    const BOUNDS: [f64; 4] = [0.050, 0.075, 0.150, 0.300];
    Ok(BOUNDS.iter().take_while(|&&b| eps_max_percent > b).count() as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::RandomModel;

    fn reference_tunnel() -> TunnelGeometry {
        TunnelGeometry::reference()
    }

    fn transverse_wall(x0: f64, length: f64, y: f64) -> (TunnelGeometry, BuildingGeometry) {
        // shift the face so the wall line y = 0 sits `y` metres behind it
        let mut t = reference_tunnel();
        t.face_y = -y;
        (t, BuildingGeometry::new(length, x0, 0.0, 8.0, 201).unwrap())
    }

    #[test]
    fn beam_strain_hand_values() {
        let (b, d) = beam_strains(DeflectionKind::Sagging, 10.0, 10.0, 8.0, 2.5).unwrap();
        let inertia = 512.0 / 12.0;
        let eb = 1e-3 / (10.0 / 48.0 + 3.0 * inertia * 2.5 / (2.0 * 4.0 * 10.0 * 8.0));
        let ed = 1e-3 / (1.0 + 8.0 * 100.0 / (18.0 * inertia) * 0.4);
        assert!((b - eb).abs() < 1e-15);
        assert!((d - ed).abs() < 1e-15);
        assert!((b - 1.411_764_7e-3).abs() < 1e-9);
        assert!((d - 7.058_823_5e-4).abs() < 1e-9);
        assert_eq!(beam_strains(DeflectionKind::Hogging, 10.0, 0.0, 8.0, 2.5).unwrap(), (0.0, 0.0));
        let (b2, d2) = beam_strains(DeflectionKind::Sagging, 10.0, 20.0, 8.0, 2.5).unwrap();
        assert!((b2 / b - 2.0).abs() < 1e-14 && (d2 / d - 2.0).abs() < 1e-14);
        assert!(beam_strains(DeflectionKind::Sagging, 0.0, 1.0, 8.0, 2.5).is_err());
    }

    #[test]
    fn combined_strain_hand_values() {
        let (br, dr) = combined_strains(1.4715e-3, 7.0636e-4, 0.0, 2.5, 1.1, 0.9);
        assert!((br - 1.4715e-3 * 1.1).abs() < 1e-18);
        assert!((dr - 7.0636e-4 * 0.9).abs() < 1e-18);
        let (br, dr) = combined_strains(1.4715e-3, 7.0636e-4, 1e-4, 2.5, 1.0, 1.0);
        assert!((br - 1.5715e-3).abs() < 1e-15);
        let expected = 1e-4 * 0.375 + (1e-8 * 6.25 / 16.0 + 7.0636e-4f64.powi(2)).sqrt();
        assert!((dr - expected).abs() < 1e-15);
        let (br2, dr2) = combined_strains(1.4715e-3, 7.0636e-4, 1e-4, 2.5, 2.0, 2.0);
        assert!((br2 - 2.0 * br).abs() < 1e-18 && (dr2 - 2.0 * dr).abs() < 1e-18);
    }

    #[test]
    fn midpoint_of_transverse_wall() {
        let t = reference_tunnel();
        let b = BuildingGeometry::new(40.0, -20.0, 0.0, 8.0, 201).unwrap();
        let mut t30 = t;
        t30.face_y = -30.0;
        let p = wall_profile(&t30, &b, 0.005, 0.5).unwrap();
        let mid = p.settlement[100];
        assert_eq!(p.points[100], [0.0, 0.0]);
        let expected = 19.617_07 * crate::prob::normal::cdf((30.0 - 6.030_605_9) / 11.5);
        assert!((mid - expected).abs() < 1e-3);
        for i in 0..201 {
            assert!((p.settlement[i] - p.settlement[200 - i]).abs() < 1e-12);
        }
        let again = wall_profile(&t30, &b, 0.005, 0.5).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn three_zones_with_inflections_at_one_trough_width() {
        let (t, b) = transverse_wall(-20.0, 40.0, 1000.0);
        let p = wall_profile(&t, &b, 0.005, 0.5).unwrap();
        let part = partition_zones(&p, ZoneStrainRule::Mean).unwrap();
        let kinds: Vec<_> = part.zones.iter().map(|z| z.kind).collect();
        assert_eq!(kinds, [DeflectionKind::Hogging, DeflectionKind::Sagging, DeflectionKind::Hogging]);
        let step = 40.0 / 200.0;
        let x1 = p.points[part.zones[0].end][0];
        let x2 = p.points[part.zones[1].end][0];
        assert!((x1 + 11.5).abs() <= step, "{x1}");
        assert!((x2 - 11.5).abs() <= step, "{x2}");
    }

    #[test]
    fn single_zone_cases() {
        let (t, b) = transverse_wall(-5.0, 10.0, 1000.0);
        let p = wall_profile(&t, &b, 0.005, 0.5).unwrap();
        let part = partition_zones(&p, ZoneStrainRule::Mean).unwrap();
        assert_eq!(part.zones.len(), 1);
        assert_eq!(part.zones[0].kind, DeflectionKind::Sagging);

        let (t, b) = transverse_wall(15.0, 20.0, 1000.0);
        let p = wall_profile(&t, &b, 0.005, 0.5).unwrap();
        let part = partition_zones(&p, ZoneStrainRule::Mean).unwrap();
        assert_eq!(part.zones.len(), 1);
        assert_eq!(part.zones[0].kind, DeflectionKind::Hogging);
    }

    #[test]
    fn single_sagging_zone_zeroes_other_slots() {
        let (t, b) = transverse_wall(-5.0, 10.0, 1000.0);
        let x = RandomModel::case_study().means();
        let s = strain_breakdown(&t, &b, ZoneStrainRule::Mean, &x).unwrap();
        assert_eq!(s.populated, [true, false, false]);
        assert_eq!(&s.slots[2..], &[0.0; 4]);
        assert_eq!(s.eps_max, s.slots[0].max(s.slots[1]));
    }

    #[test]
    fn horizontal_strain_rotation() {
        let t = reference_tunnel();
        let mut b = BuildingGeometry::new(20.0, 3.0, 0.0, 8.0, 51).unwrap();
        let p0 = wall_profile(&t, &b, 0.005, 0.3).unwrap();
        let trough = Trough::new(&t, 0.005, 0.3).unwrap();
        for (pt, e) in p0.points.iter().zip(&p0.horizontal_strain) {
            let f = trough.field(GroundPoint::surface(pt[0], pt[1])).unwrap();
            assert_eq!(*e, f.strains.xx);
        }
        b.angle_deg = 90.0;
        let p90 = wall_profile(&t, &b, 0.005, 0.3).unwrap();
        for (pt, e) in p90.points.iter().zip(&p90.horizontal_strain) {
            let f = trough.field(GroundPoint::surface(pt[0], pt[1])).unwrap();
            assert!((e - f.strains.yy).abs() <= 1e-15 * f.strains.yy.abs().max(1e-12));
        }
        let g = trough.field(GroundPoint::surface(4.0, 7.0)).unwrap().strains;
        for deg in [0.0, 30.0, 77.0, 145.0] {
            let th: f64 = f64::to_radians(deg);
            assert!((g.along(th) - g.along(th + std::f64::consts::PI)).abs() < 1e-18);
        }
    }

    #[test]
    fn limit_state_at_mean_point_is_safe() {
        let t = reference_tunnel();
        let b = BuildingGeometry::new(20.0, 20.0, 0.0, 8.0, 201).unwrap();
        let x = RandomModel::case_study().means();
        assert!(limit_state(&t, &b, ZoneStrainRule::Mean, 5e-4, &x).unwrap() > 0.0);
    }

    #[test]
    fn eps_max_grows_with_volume_loss() {
        let (t, b) = transverse_wall(-20.0, 40.0, 10.0);
        let mut x = RandomModel::case_study().means();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..=20 {
            x[index::VOLUME_LOSS] = 0.05 * i as f64;
            let e = eps_max(&t, &b, ZoneStrainRule::Mean, &x).unwrap();
            assert!(e >= prev);
            prev = e;
        }
        x[index::VOLUME_LOSS] = 1e-9;
        let tiny = eps_max(&t, &b, ZoneStrainRule::Mean, &x).unwrap();
        assert!(tiny.abs() < 1e-8 * prev, "{tiny}");
    }

    #[test]
    fn damage_bands() {
        assert_eq!(classify_damage(0.04).unwrap(), 0);
        assert_eq!(classify_damage(0.05).unwrap(), 0);
        assert_eq!(classify_damage(0.06).unwrap(), 1);
        assert_eq!(classify_damage(0.10).unwrap(), 2);
        assert_eq!(classify_damage(0.30).unwrap(), 3);
        assert_eq!(classify_damage(0.50).unwrap(), 4);
        assert!(classify_damage(-0.1).is_err());
    }
}

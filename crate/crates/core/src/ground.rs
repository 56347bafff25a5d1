//! Closed-form tunneling-induced ground movements.
//!
//! A Gaussian settlement trough in the transverse direction combined with a
//! cumulative-normal profile along the tunnel, plus the horizontal
//! displacements and horizontal ground strains derived from it.
//!
//! Units: geometry in metres, settlements and displacements in millimetres,
//! strains dimensionless. The volume loss `v_l` passed to these functions is a
//! fraction (0.005 for 0.5 %). Settlements are signed, negative downwards;
//! [`settlement_magnitude`] gives the positive value used for measurements.
//!
//! The tunnel portal may sit at `y_f = +∞`; in that case every term that
//! involves `y_f` is dropped rather than evaluated at a large finite value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::normal;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Tunnel geometry and excavation state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunnelGeometry {
    /// Tunnel diameter `d` (m).
    pub diameter: f64,
    /// Depth of the tunnel axis below the surface, `z0` (m).
    pub axis_depth: f64,
    /// Current face coordinate `y_s` (m); the tunnel advances towards −y.
    pub face_y: f64,
    /// Portal coordinate `y_f` (m), `f64::INFINITY` for a tunnel with no
    /// portal in the region of interest.
    pub portal_y: f64,
    /// Ratio δ of the surface settlement above the face to the far-field
    /// maximum settlement.
    pub settlement_ratio: f64,
}

impl TunnelGeometry {
    pub fn new(
        diameter: f64,
        axis_depth: f64,
        face_y: f64,
        portal_y: f64,
        settlement_ratio: f64,
    ) -> Result<Self> {
        let geom = Self {
            diameter,
            axis_depth,
            face_y,
            portal_y,
            settlement_ratio,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// The geometry of the reference settlement plot: `d = 12 m`,
    /// `z0 = 23 m`, face at `y = 0`, open portal, δ = 0.3.
    pub fn reference() -> Self {
        Self {
            diameter: 12.0,
            axis_depth: 23.0,
            face_y: 0.0,
            portal_y: f64::INFINITY,
            settlement_ratio: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return Err(Error::Geometry(format!(
                "tunnel diameter must be positive, got {}",
                self.diameter
            )));
        }
        if !(self.axis_depth > self.diameter / 2.0 && self.axis_depth.is_finite()) {
            return Err(Error::Geometry(format!(
                "axis depth {} must exceed the tunnel radius {}",
                self.axis_depth,
                self.diameter / 2.0
            )));
        }
        if !self.face_y.is_finite() {
            return Err(Error::Geometry("face coordinate must be finite".into()));
        }
        if self.portal_y.is_nan() || self.portal_y < self.face_y || self.portal_y == f64::NEG_INFINITY {
            return Err(Error::Geometry(format!(
                "portal coordinate {} must be at or behind the face {}",
                self.portal_y, self.face_y
            )));
        }
        if !(self.settlement_ratio > 0.0 && self.settlement_ratio < 1.0) {
            return Err(Error::Geometry(format!(
                "settlement ratio must lie in (0, 1), got {}",
                self.settlement_ratio
            )));
        }
        Ok(())
    }

    fn has_portal(&self) -> bool {
        self.portal_y.is_finite()
    }
}

/// A point in the ground, `z = 0` at the surface and `z ≤ 0` below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn surface(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }
}

/// Horizontal ground strains at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundStrains {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl GroundStrains {
    /// Horizontal strain along a direction at angle `theta` (rad) from +x.
    #[inline]
    pub fn along(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        c * c * self.xx + s * s * self.yy + 2.0 * c * s * self.xy
    }
}

/// Maximum settlement magnitude `S_max` (m) at elevation `z`.
pub fn s_max(geom: &TunnelGeometry, v_l: f64, k: f64, z: f64) -> Result<f64> {
    check_parameters(v_l, k)?;
    let depth = depth_below_axis(geom, z)?;
    Ok(s_max_at_depth(geom, v_l, k, depth))
}

/// Horizontal shift `y_0` (m) of the longitudinal profile with respect to
/// the face: `y_0 = −Φ⁻¹(δ)·K·z0`.
pub fn y_shift(geom: &TunnelGeometry, k: f64) -> f64 {
    -normal::quantile(geom.settlement_ratio) * k * geom.axis_depth
}

/// Signed settlement (mm, negative downwards).
pub fn settlement(geom: &TunnelGeometry, p: GroundPoint, v_l: f64, k: f64) -> Result<f64> {
    Ok(Trough::new(geom, v_l, k)?.settlement(p)?)
}

/// Settlement magnitude (mm, non-negative).
pub fn settlement_magnitude(geom: &TunnelGeometry, p: GroundPoint, v_l: f64, k: f64) -> Result<f64> {
    Ok(-settlement(geom, p, v_l, k)?)
}

/// Horizontal displacements `(U_x, U_y)` (mm).
pub fn displacements(geom: &TunnelGeometry, p: GroundPoint, v_l: f64, k: f64) -> Result<(f64, f64)> {
    Trough::new(geom, v_l, k)?.displacements(p)
}

/// Horizontal ground strains `(ε_xx, ε_yy, ε_xy)`.
pub fn ground_strains(
    geom: &TunnelGeometry,
    p: GroundPoint,
    v_l: f64,
    k: f64,
) -> Result<GroundStrains> {
    Ok(Trough::new(geom, v_l, k)?.field(p)?.strains)
}

fn check_parameters(v_l: f64, k: f64) -> Result<()> {
    if !(v_l > 0.0 && v_l.is_finite()) {
        return Err(Error::Domain(format!("volume loss must be positive, got {v_l}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("trough width must be positive, got {k}")));
    }
    Ok(())
}

fn depth_below_axis(geom: &TunnelGeometry, z: f64) -> Result<f64> {
    let depth = geom.axis_depth - z;
    if !(depth > 0.0) {
        return Err(Error::Geometry(format!(
            "point at z = {z} is not above the tunnel axis (z0 = {})",
            geom.axis_depth
        )));
    }
    Ok(depth)
}

#[inline]
fn s_max_at_depth(geom: &TunnelGeometry, v_l: f64, k: f64, depth: f64) -> f64 {
    v_l * std::f64::consts::PI * geom.diameter * geom.diameter / (SQRT_2PI * k * depth * 4.0)
}

/// Everything the closed-form fields need at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointField {
    /// Signed settlement (mm).
    pub settlement: f64,
    pub strains: GroundStrains,
}

/// The settlement trough for one realization of `(V_L, K)`.
///
/// Precomputes the realization-dependent constants so that evaluating many
/// points (a wall profile, a grid) costs two exponentials and one `erfc`
/// per point.
#[derive(Debug, Clone, Copy)]
pub struct Trough<'a> {
    geom: &'a TunnelGeometry,
    v_l: f64,
    k: f64,
    /// `y_s + y_0`.
    shifted_face: f64,
}

impl<'a> Trough<'a> {
    pub fn new(geom: &'a TunnelGeometry, v_l: f64, k: f64) -> Result<Self> {
        check_parameters(v_l, k)?;
        Ok(Self {
            geom,
            v_l,
            k,
            shifted_face: geom.face_y + y_shift(geom, k),
        })
    }

    pub fn settlement(&self, p: GroundPoint) -> Result<f64> {
        let depth = depth_below_axis(self.geom, p.z)?;
        let w = self.k * depth;
        let transverse = (-p.x * p.x / (2.0 * w * w)).exp();
        let mut bracket = normal::cdf((p.y - self.shifted_face) / w);
        if self.geom.has_portal() {
            bracket -= normal::cdf((p.y - self.geom.portal_y) / w);
        }
        Ok(-1000.0 * s_max_at_depth(self.geom, self.v_l, self.k, depth) * transverse * bracket)
    }

    pub fn displacements(&self, p: GroundPoint) -> Result<(f64, f64)> {
        let depth = depth_below_axis(self.geom, p.z)?;
        let w2 = 2.0 * (self.k * depth).powi(2);
        let ux = p.x / depth * self.settlement(p)?;
        let amp = 1000.0 * self.v_l * self.geom.diameter * self.geom.diameter / (8.0 * depth);
        let mut bracket = ((-(p.y - self.shifted_face).powi(2) - p.x * p.x) / w2).exp();
        if self.geom.has_portal() {
            bracket -= ((-(p.y - self.geom.portal_y).powi(2) - p.x * p.x) / w2).exp();
        }
        Ok((ux, amp * bracket))
    }

    /// Settlement and horizontal strains at one point.
    pub fn field(&self, p: GroundPoint) -> Result<PointField> {
        let g = self.geom;
        let depth = depth_below_axis(g, p.z)?;
        let w = self.k * depth;
        let w2 = w * w;
        let smax = s_max_at_depth(g, self.v_l, self.k, depth);
        let transverse = (-p.x * p.x / (2.0 * w2)).exp();

        let dy_face = p.y - self.shifted_face;
        let mut cdf_bracket = normal::cdf(dy_face / w);
        let mut pdf_bracket = normal::pdf(dy_face / w) / w;
        // exp((−(y−a)² − x²)/(2w²)) for the face term, and the matching y-derivative weight.
        let gauss_face = (-(dy_face * dy_face) / (2.0 * w2)).exp() * transverse;
        let mut exp_bracket = gauss_face;
        let mut dexp_bracket = -dy_face / w2 * gauss_face;
        if g.has_portal() {
            let dy_portal = p.y - g.portal_y;
            cdf_bracket -= normal::cdf(dy_portal / w);
            pdf_bracket -= normal::pdf(dy_portal / w) / w;
            let gauss_portal = (-(dy_portal * dy_portal) / (2.0 * w2)).exp() * transverse;
            exp_bracket -= gauss_portal;
            dexp_bracket -= -dy_portal / w2 * gauss_portal;
        }

        let settlement = -1000.0 * smax * transverse * cdf_bracket;
        let amp = self.v_l * g.diameter * g.diameter / (8.0 * depth);

        let xx = settlement / 1000.0 / depth * (1.0 - p.x * p.x / w2);
        let yy = amp * dexp_bracket;
        let dux_dy = p.x / depth * (-smax) * pdf_bracket * transverse;
        let duy_dx = amp * (-p.x / w2) * exp_bracket;
        Ok(PointField {
            settlement,
            strains: GroundStrains {
                xx,
                yy,
                xy: 0.5 * (dux_dy + duy_dx),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const VL: f64 = 0.005;
    const K: f64 = 0.5;

    fn geom() -> TunnelGeometry {
        TunnelGeometry::reference()
    }

    #[test]
    fn s_max_reference_value() {
        // V_L·π·d² / (√(2π)·K·z0·4) evaluated independently
        let expected = 0.005 * std::f64::consts::PI * 144.0 / ((2.0 * std::f64::consts::PI).sqrt() * 0.5 * 23.0 * 4.0);
        let s = s_max(&geom(), VL, K, 0.0).unwrap();
        assert!((s / expected - 1.0).abs() < 1e-14);
        assert!((s - 0.019_617).abs() < 5e-7);
        assert!((s_max(&geom(), 2.0 * VL, K, 0.0).unwrap() / s - 2.0).abs() < 1e-14);
        assert!((s_max(&geom(), VL, 2.0 * K, 0.0).unwrap() / s - 0.5).abs() < 1e-14);
    }

    #[test]
    fn y_shift_values() {
        assert!((y_shift(&geom(), 0.5) - 6.030_605_896_14).abs() < 1e-9);
        assert!((y_shift(&geom(), 0.3) - 3.618_363_537_69).abs() < 1e-9);
        let mut g = geom();
        g.settlement_ratio = 0.5;
        assert_eq!(y_shift(&g, 0.5), 0.0);
    }

    #[test]
    fn settlement_far_field_and_at_face() {
        let g = geom();
        let smax_mm = 1000.0 * s_max(&g, VL, K, 0.0).unwrap();
        let far = settlement(&g, GroundPoint::surface(0.0, 1000.0), VL, K).unwrap();
        assert!((far + smax_mm).abs() < 1e-9 * smax_mm);
        assert!((far + 19.617).abs() < 1e-3);
        let face = settlement(&g, GroundPoint::surface(0.0, g.face_y), VL, K).unwrap();
        assert!((face.abs() / smax_mm - 0.3).abs() < 1e-12);
        assert!((face + 5.885).abs() < 1e-3);
        let lateral = settlement(&g, GroundPoint::surface(500.0, 30.0), VL, K).unwrap();
        assert!(lateral.abs() < 1e-300 || lateral == 0.0);
    }

    #[test]
    fn settlement_peaks_on_axis_at_y30_of_reference_grid() {
        let g = geom();
        let peak = settlement(&g, GroundPoint::surface(0.0, 30.0), VL, K).unwrap().abs();
        let mut prev = peak;
        for i in 1..=60 {
            let x = i as f64 * 0.5;
            let s = settlement(&g, GroundPoint::surface(x, 30.0), VL, K).unwrap().abs();
            assert!(s <= prev);
            prev = s;
        }
        // no point of the plotted window [-30, 30] × [-30, 30] exceeds the value at (0, 30)
        for i in -30..=30 {
            for j in -30..=30 {
                let s = settlement(&g, GroundPoint::surface(i as f64, j as f64), VL, K).unwrap().abs();
                assert!(s <= peak);
            }
        }
    }

    #[test]
    fn mirror_symmetry_and_displacement_parity() {
        let g = geom();
        for (x, y) in [(3.0, 5.0), (7.5, -4.0), (12.0, 40.0)] {
            let a = settlement(&g, GroundPoint::surface(x, y), VL, K).unwrap();
            let b = settlement(&g, GroundPoint::surface(-x, y), VL, K).unwrap();
            assert_eq!(a, b);
            let (ux, uy) = displacements(&g, GroundPoint::surface(x, y), VL, K).unwrap();
            let (mux, muy) = displacements(&g, GroundPoint::surface(-x, y), VL, K).unwrap();
            assert_eq!(ux, -mux);
            assert_eq!(uy, muy);
        }
        let (ux0, _) = displacements(&g, GroundPoint::surface(0.0, 12.0), VL, K).unwrap();
        assert_eq!(ux0, 0.0);
    }

    #[test]
    fn transverse_displacement_is_scaled_settlement() {
        let g = geom();
        let p = GroundPoint::surface(5.0, 30.0);
        let s = settlement(&g, p, VL, K).unwrap();
        let (ux, _) = displacements(&g, p, VL, K).unwrap();
        assert!((ux - 5.0 / 23.0 * s).abs() < 1e-14);
    }

    #[test]
    fn strains_on_axis() {
        let g = geom();
        let p = GroundPoint::surface(0.0, 30.0);
        let s = settlement(&g, p, VL, K).unwrap();
        let e = ground_strains(&g, p, VL, K).unwrap();
        assert!((e.xx - s / 1000.0 / 23.0).abs() < 1e-18);
        assert!(e.xx < 0.0);
        assert_eq!(e.xy, 0.0);
    }

    #[test]
    fn advancing_face_never_reduces_settlement() {
        for y in [-10.0, 0.0, 5.0, 20.0] {
            let mut prev = 0.0;
            for step in 0..10 {
                let mut g = geom();
                g.face_y = 2.0 - step as f64;
                let s = settlement(&g, GroundPoint::surface(4.0, y), VL, K).unwrap().abs();
                assert!(s >= prev);
                prev = s;
            }
        }
    }

    #[test]
    fn finite_portal_bounds_the_trough() {
        let g = TunnelGeometry::new(12.0, 23.0, 0.0, 60.0, 0.3).unwrap();
        let inside = settlement(&g, GroundPoint::surface(0.0, 30.0), VL, K).unwrap().abs();
        let beyond = settlement(&g, GroundPoint::surface(0.0, 200.0), VL, K).unwrap().abs();
        assert!(inside > 1.0 && beyond < 1e-6);
    }

    #[test]
    fn strains_match_finite_differences() {
        use rand::Rng;
        let mut rng = crate::prob::stream(5, "fd-points", 0);
        let h = 1e-4;
        for _ in 0..100 {
            let g = TunnelGeometry::new(12.0, 23.0, rng.random_range(-10.0..10.0), f64::INFINITY, 0.3).unwrap();
            let v_l = rng.random_range(0.002..0.01);
            let k = rng.random_range(0.2..0.6);
            let p = GroundPoint::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..40.0), rng.random_range(-5.0..0.0));
            let at = |dx: f64, dy: f64| displacements(&g, GroundPoint::new(p.x + dx, p.y + dy, p.z), v_l, k).unwrap();
            let (uxp, uyp) = at(h, 0.0);
            let (uxm, uym) = at(-h, 0.0);
            let (vxp, vyp) = at(0.0, h);
            let (vxm, vym) = at(0.0, -h);
            let xx = (uxp - uxm) / (2.0 * h) / 1000.0;
            let yy = (vyp - vym) / (2.0 * h) / 1000.0;
            let xy = 0.5 * ((vxp - vxm) + (uyp - uym)) / (2.0 * h) / 1000.0;
            let e = ground_strains(&g, p, v_l, k).unwrap();
            let scale = e.xx.abs().max(e.yy.abs()).max(e.xy.abs());
            for (a, b) in [(e.xx, xx), (e.yy, yy), (e.xy, xy)] {
                assert!((a - b).abs() <= 1e-5 * scale.max(1e-12), "{a} vs {b} at {p:?}");
            }
        }
    }

    #[test]
    fn invalid_geometry() {
        assert!(TunnelGeometry::new(12.0, 5.0, 0.0, f64::INFINITY, 0.3).is_err());
        assert!(TunnelGeometry::new(12.0, 23.0, 0.0, -5.0, 0.3).is_err());
        assert!(TunnelGeometry::new(12.0, 23.0, 0.0, f64::INFINITY, 1.0).is_err());
        let g = geom();
        assert!(matches!(
            settlement(&g, GroundPoint::new(0.0, 0.0, 23.0), VL, K),
            Err(Error::Geometry(_))
        ));
        assert!(settlement(&g, GroundPoint::surface(0.0, 0.0), 0.0, K).is_err());
    }
}

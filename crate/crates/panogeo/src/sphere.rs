//! Coordinate spaces of the equirectangular projection and great-circle
//! distance.
//!
//! Three spaces, with conversions each way: continuous pixel coordinates
//! (u, v) on an H x W grid, spherical coordinates (lat, lon) in radians,
//! and unit vectors in R^3. Row 0 of the grid is the north-pole edge,
//! column 0 is longitude -pi, and the grid center maps to (lat 0, lon 0).
//! The sphere has radius 1 throughout, so surface distances are radians in
//! [0, pi].
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! - `u` wraps modulo W (the projection is seamless left to right); `v` is
//!   validated against [0, H], where the closed bottom edge maps to the
//!   south pole.
//! - The Cartesian frame is z-polar: `x = cos(lat) cos(lon)`,
//!   `y = cos(lat) sin(lon)`, `z = sin(lat)`.
//! - At an exact pole the longitude is reported as 0 so outputs are
//!   deterministic.
//! - All math is 64-bit.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Dimensions of an equirectangular grid: `height` rows by `width` columns.
///
/// Both dimensions must be at least 2. Operations that re-project through
/// the sphere additionally require `width = 2 * height` (a full panorama);
/// that check belongs to the consuming operation, not to the shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    height: usize,
    width: usize,
}

impl GridShape {
    /// # Errors
    /// Returns a shape error unless `height >= 2` and `width >= 2`.
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::Shape(format!(
                "grid must be at least 2x2, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels, H * W.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True when the grid spans a full panorama (W = 2H), the precondition
    /// for pole-moving re-projection.
    pub fn is_full_panorama(&self) -> bool {
        self.width == 2 * self.height
    }
}

impl std::fmt::Display for GridShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// Continuous pixel position. `u` runs along columns, `v` along rows.
///
/// Plain value type; consumers interpret `u` modulo the grid width and
/// validate `v`. Integer values sit on pixel corners, so the center of the
/// pixel in row r, column c is `(c + 0.5, r + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Spherical position in radians: latitude in [-pi/2, pi/2], longitude in
/// [-pi, pi). Construction validates the ranges; all conversion outputs in
/// this module stay inside them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphCoord {
    lat: f64,
    lon: f64,
}

impl SphCoord {
    /// # Errors
    /// Returns a domain error if either angle is non-finite or out of
    /// range. Note the longitude range is half-open: pass -pi, not pi, for
    /// the antimeridian.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::Domain(format!(
                "spherical coordinate must be finite, got ({lat}, {lon})"
            )));
        }
        if !(-PI / 2.0..=PI / 2.0).contains(&lat) {
            return Err(Error::Domain(format!(
                "latitude {lat} outside [-pi/2, pi/2]"
            )));
        }
        if !(-PI..PI).contains(&lon) {
            return Err(Error::Domain(format!("longitude {lon} outside [-pi, pi)")));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Unit vector in the z-polar Cartesian frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3 {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVec3 {
    /// # Errors
    /// Returns a domain error if the norm differs from 1 by more than 1e-9
    /// or any component is non-finite.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::Domain(format!(
                "vector components must be finite, got ({x}, {y}, {z})"
            )));
        }
        let norm = (x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "vector ({x}, {y}, {z}) has norm {norm}, not unit"
            )));
        }
        Ok(Self { x, y, z })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }
}

/// Rotation restricted to signed axis permutations: every entry is -1, 0,
/// or +1, each row and column has exactly one nonzero entry, and the
/// determinant is +1. Applying such a rotation permutes and flips
/// components without any floating-point rounding, so composing a rotation
/// with its transpose restores the input exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisRotation {
    m: [[i8; 3]; 3],
}

impl AxisRotation {
    /// # Errors
    /// Returns a configuration error unless `m` is a signed permutation
    /// matrix with determinant +1.
    pub fn new(m: [[i8; 3]; 3]) -> Result<Self> {
        for row in &m {
            for &e in row {
                if !(-1..=1).contains(&e) {
                    return Err(Error::Config(format!(
                        "rotation entries must be -1, 0, or 1, got {e}"
                    )));
                }
            }
        }
        for i in 0..3 {
            let row_nonzero = m[i].iter().filter(|&&e| e != 0).count();
            let col_nonzero = (0..3).filter(|&j| m[j][i] != 0).count();
            if row_nonzero != 1 || col_nonzero != 1 {
                return Err(Error::Config(
                    "rotation must have exactly one nonzero entry per row and column".into(),
                ));
            }
        }
        let det = i32::from(m[0][0]) * (i32::from(m[1][1]) * i32::from(m[2][2])
            - i32::from(m[1][2]) * i32::from(m[2][1]))
            - i32::from(m[0][1]) * (i32::from(m[1][0]) * i32::from(m[2][2])
                - i32::from(m[1][2]) * i32::from(m[2][0]))
            + i32::from(m[0][2]) * (i32::from(m[1][0]) * i32::from(m[2][1])
                - i32::from(m[1][1]) * i32::from(m[2][0]));
        if det != 1 {
            return Err(Error::Config(format!(
                "rotation determinant must be +1, got {det}"
            )));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self {
            m: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        }
    }

    /// Quarter-turn about the y axis taking the north-pole axis z to the
    /// equatorial axis x. This is the rotation that relocates the poles of
    /// a panorama onto its equator.
    pub fn pole_to_equator() -> Self {
        Self {
            m: [[0, 0, 1], [0, 1, 0], [-1, 0, 0]],
        }
    }

    /// Transpose, which for a rotation is the inverse.
    pub fn transposed(&self) -> Self {
        let mut t = [[0i8; 3]; 3];
        for (i, row) in self.m.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                t[j][i] = e;
            }
        }
        Self { m: t }
    }
}

/// Converts a pixel position to spherical coordinates.
///
/// `lat = pi * (1/2 - v/H)`, `lon = 2 pi u / W - pi`, with `u` wrapped
/// modulo W first. Row edge v = 0 is the north pole, v = H the south pole,
/// column edge u = 0 is longitude -pi.
///
/// # Errors
/// Returns a domain error if a coordinate is non-finite or `v` lies
/// outside [0, H].
pub fn pix_to_sph(p: PixelCoord, shape: GridShape) -> Result<SphCoord> {
    let h = shape.height() as f64;
    let w = shape.width() as f64;
    if !p.u.is_finite() || !p.v.is_finite() {
        return Err(Error::Domain(format!(
            "pixel coordinate must be finite, got ({}, {})",
            p.u, p.v
        )));
    }
    if p.v < 0.0 || p.v > h {
        return Err(Error::Domain(format!(
            "row coordinate {} outside [0, {h}]",
            p.v
        )));
    }
    let u = p.u.rem_euclid(w);
    let lat = PI * (0.5 - p.v / h);
    let mut lon = 2.0 * PI * u / w - PI;
    if lon >= PI {
        // u/w can round up to exactly 1 when u is within one ulp of w.
        lon = -PI;
    }
    Ok(SphCoord { lat, lon })
}

/// Converts spherical coordinates to a pixel position, the exact inverse
/// of [`pix_to_sph`] on its range. `u` is wrapped into [0, W); `v` lands in
/// [0, H], reaching H only at the south pole.
pub fn sph_to_pix(s: SphCoord, shape: GridShape) -> PixelCoord {
    let h = shape.height() as f64;
    let w = shape.width() as f64;
    let u = ((s.lon + PI) * w / (2.0 * PI)).rem_euclid(w);
    let v = ((0.5 - s.lat / PI) * h).clamp(0.0, h);
    PixelCoord { u, v }
}

/// Embeds spherical coordinates on the unit sphere, z toward the north
/// pole.
pub fn sph_to_unit(s: SphCoord) -> UnitVec3 {
    let (lat, lon) = (s.lat, s.lon);
    UnitVec3 {
        x: lat.cos() * lon.cos(),
        y: lat.cos() * lon.sin(),
        z: lat.sin(),
    }
}

/// Recovers spherical coordinates from a unit vector: `lat = asin(z)`,
/// `lon = atan2(y, x)`. Inverse of [`sph_to_unit`] away from the poles; at
/// an exact pole (x = y = 0) the longitude is 0 by convention.
///
/// # Errors
/// Returns a domain error if the norm differs from 1 by more than 1e-6.
/// [`UnitVec3`] construction already enforces a tighter bound; the check
/// here guards values produced by outside arithmetic.
pub fn unit_to_sph(v: UnitVec3) -> Result<SphCoord> {
    let norm = (v.x * v.x + v.y * v.y + v.z * v.z).sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "cannot read angles off a non-unit vector (norm {norm})"
        )));
    }
    let lat = v.z.clamp(-1.0, 1.0).asin();
    let mut lon = if v.x == 0.0 && v.y == 0.0 {
        0.0
    } else {
        v.y.atan2(v.x)
    };
    if lon >= PI {
        // atan2 returns +pi on the negative-x half-axis; the canonical
        // longitude range is half-open at the antimeridian.
        lon = -PI;
    }
    Ok(SphCoord { lat, lon })
}

/// Great-circle distance between two points, radius 1, in radians.
///
/// Haversine form: `h = sin^2(dlat/2) + cos(lat1) cos(lat2) sin^2(dlon/2)`
/// and `d = 2 atan(sqrt(h / (1 - h)))`, with `h` clamped to [0, 1] because
/// rounding can push it past 1 near antipodal pairs; `h = 1` returns pi
/// directly.
pub fn haversine(a: SphCoord, b: SphCoord) -> f64 {
    let sin_dlat = (0.5 * (b.lat - a.lat)).sin();
    let sin_dlon = (0.5 * (b.lon - a.lon)).sin();
    let h = sin_dlat * sin_dlat + a.lat.cos() * b.lat.cos() * sin_dlon * sin_dlon;
    let h = h.clamp(0.0, 1.0);
    if h >= 1.0 {
        PI
    } else {
        2.0 * (h / (1.0 - h)).sqrt().atan()
    }
}

/// Applies a signed axis permutation to a vector. Each output component is
/// one input component, possibly negated, selected without floating-point
/// arithmetic, so rotation followed by its transpose is an exact identity.
pub fn apply_rotation(v: UnitVec3, r: AxisRotation) -> UnitVec3 {
    let comps = [v.x, v.y, v.z];
    let mut out = [0.0f64; 3];
    for (i, row) in r.m.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            match e {
                1 => out[i] = comps[j],
                -1 => out[i] = -comps[j],
                _ => {}
            }
        }
    }
    UnitVec3 {
        x: out[0],
        y: out[1],
        z: out[2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn assert_close(got: f64, want: f64, tol: f64) {
        assert!(
            (got - want).abs() <= tol,
            "got {got}, want {want} (tol {tol})"
        );
    }

    fn sph(lat: f64, lon: f64) -> SphCoord {
        SphCoord::new(lat, lon).unwrap()
    }

    #[test]
    fn grid_shape_rejects_degenerate_dims() {
        assert!(GridShape::new(1, 8).is_err());
        assert!(GridShape::new(8, 1).is_err());
        assert!(GridShape::new(2, 2).is_ok());
    }

    #[test]
    fn grid_center_maps_to_origin() {
        let shape = GridShape::new(64, 128).unwrap();
        let s = pix_to_sph(PixelCoord::new(64.0, 32.0), shape).unwrap();
        assert_close(s.lat(), 0.0, 1e-15);
        assert_close(s.lon(), 0.0, 1e-15);
    }

    #[test]
    fn grid_corner_maps_to_pole_and_dateline() {
        let shape = GridShape::new(64, 128).unwrap();
        let s = pix_to_sph(PixelCoord::new(0.0, 0.0), shape).unwrap();
        assert_close(s.lat(), FRAC_PI_2, 1e-15);
        assert_close(s.lon(), -PI, 1e-15);
    }

    #[test]
    fn pix_to_sph_is_linear_in_both_axes() {
        let shape = GridShape::new(64, 128).unwrap();
        let s = pix_to_sph(PixelCoord::new(96.0, 16.0), shape).unwrap();
        assert_close(s.lat(), FRAC_PI_4, 1e-15);
        assert_close(s.lon(), FRAC_PI_2, 1e-15);
    }

    #[test]
    fn pix_to_sph_wraps_columns() {
        let shape = GridShape::new(64, 128).unwrap();
        let a = pix_to_sph(PixelCoord::new(-32.0, 16.0), shape).unwrap();
        let b = pix_to_sph(PixelCoord::new(96.0, 16.0), shape).unwrap();
        assert_close(a.lon(), b.lon(), 1e-12);
    }

    #[test]
    fn pix_to_sph_rejects_out_of_domain_rows() {
        let shape = GridShape::new(64, 128).unwrap();
        assert!(pix_to_sph(PixelCoord::new(0.0, -0.001), shape).is_err());
        assert!(pix_to_sph(PixelCoord::new(0.0, 64.001), shape).is_err());
        assert!(pix_to_sph(PixelCoord::new(f64::NAN, 1.0), shape).is_err());
        assert!(pix_to_sph(PixelCoord::new(0.0, f64::INFINITY), shape).is_err());
    }

    #[test]
    fn bottom_edge_is_south_pole() {
        let shape = GridShape::new(64, 128).unwrap();
        let s = pix_to_sph(PixelCoord::new(0.0, 64.0), shape).unwrap();
        assert_close(s.lat(), -FRAC_PI_2, 1e-15);
    }

    #[test]
    fn sph_to_pix_inverts_center() {
        let shape = GridShape::new(64, 128).unwrap();
        let p = sph_to_pix(sph(0.0, 0.0), shape);
        assert_eq!(p.u, 64.0);
        assert_eq!(p.v, 32.0);
    }

    #[test]
    fn sph_to_pix_sends_pole_dateline_to_origin() {
        let shape = GridShape::new(64, 128).unwrap();
        let p = sph_to_pix(sph(FRAC_PI_2, -PI), shape);
        assert_close(p.u, 0.0, 1e-12);
        assert_close(p.v, 0.0, 1e-12);
    }

    #[test]
    fn sph_coord_validates_ranges() {
        assert!(SphCoord::new(1.6, 0.0).is_err());
        assert!(SphCoord::new(0.0, PI).is_err());
        assert!(SphCoord::new(0.0, -PI).is_ok());
        assert!(SphCoord::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn sph_to_unit_axes() {
        let v = sph_to_unit(sph(0.0, 0.0));
        assert_close(v.x(), 1.0, 1e-15);
        assert_close(v.y(), 0.0, 1e-15);
        assert_close(v.z(), 0.0, 1e-15);
        let pole = sph_to_unit(sph(FRAC_PI_2, 1.0));
        assert_close(pole.z(), 1.0, 1e-15);
        assert!(pole.x().abs() < 1e-15 && pole.y().abs() < 1e-15);
    }

    #[test]
    fn unit_to_sph_y_axis() {
        let s = unit_to_sph(UnitVec3::new(0.0, 1.0, 0.0).unwrap()).unwrap();
        assert_close(s.lat(), 0.0, 1e-15);
        assert_close(s.lon(), FRAC_PI_2, 1e-15);
    }

    #[test]
    fn unit_to_sph_pole_longitude_convention() {
        let south = unit_to_sph(UnitVec3::new(0.0, 0.0, -1.0).unwrap()).unwrap();
        assert_eq!(south.lat(), -FRAC_PI_2);
        assert_eq!(south.lon(), 0.0);
        let north = unit_to_sph(UnitVec3::new(0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(north.lon(), 0.0);
    }

    #[test]
    fn unit_to_sph_normalizes_antimeridian() {
        let s = unit_to_sph(UnitVec3::new(-1.0, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(s.lon(), -PI);
    }

    #[test]
    fn unit_vec_rejects_non_unit() {
        assert!(UnitVec3::new(1.001, 0.0, 0.0).is_err());
        assert!(UnitVec3::new(0.0, 0.0, 0.0).is_err());
        assert!(UnitVec3::new(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn haversine_zero_for_identical_points() {
        let s = sph(0.3, -1.2);
        assert_eq!(haversine(s, s), 0.0);
    }

    #[test]
    fn haversine_equatorial_quarter_arc() {
        assert_close(haversine(sph(0.0, 0.0), sph(0.0, FRAC_PI_2)), FRAC_PI_2, 1e-12);
    }

    #[test]
    fn haversine_antipodal_poles() {
        assert_close(haversine(sph(FRAC_PI_2, 0.0), sph(-FRAC_PI_2, 0.0)), PI, 1e-12);
    }

    #[test]
    fn haversine_equatorial_antipodes_hit_clamp_branch() {
        assert_close(haversine(sph(0.0, -PI), sph(0.0, 0.0)), PI, 1e-12);
    }

    /// Independent oracle: the great-circle distance equals
    /// `2 asin(chord / 2)` where chord is the straight-line distance
    /// between the two embedded unit vectors.
    fn chord_distance(a: SphCoord, b: SphCoord) -> f64 {
        let va = sph_to_unit(a);
        let vb = sph_to_unit(b);
        let dx = va.x() - vb.x();
        let dy = va.y() - vb.y();
        let dz = va.z() - vb.z();
        let chord = (dx * dx + dy * dy + dz * dz).sqrt();
        2.0 * (chord / 2.0).asin()
    }

    #[test]
    fn rotation_identity_is_exact() {
        let v = sph_to_unit(sph(0.4, 2.0));
        let r = apply_rotation(v, AxisRotation::identity());
        assert_eq!((r.x(), r.y(), r.z()), (v.x(), v.y(), v.z()));
    }

    #[test]
    fn pole_to_equator_sends_z_to_x() {
        let v = UnitVec3::new(0.0, 0.0, 1.0).unwrap();
        let r = apply_rotation(v, AxisRotation::pole_to_equator());
        assert_eq!((r.x(), r.y(), r.z()), (1.0, 0.0, 0.0));
    }

    #[test]
    fn rotation_then_transpose_is_exact_identity() {
        let v = sph_to_unit(sph(-0.7, 2.9));
        let r = AxisRotation::pole_to_equator();
        let back = apply_rotation(apply_rotation(v, r), r.transposed());
        assert_eq!((back.x(), back.y(), back.z()), (v.x(), v.y(), v.z()));
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let mut v = sph_to_unit(sph(0.2, -1.0));
        let r = AxisRotation::pole_to_equator();
        let start = v;
        for _ in 0..4 {
            v = apply_rotation(v, r);
        }
        assert_eq!((v.x(), v.y(), v.z()), (start.x(), start.y(), start.z()));
    }

    #[test]
    fn rotation_rejects_reflections_and_malformed_matrices() {
        // Reflection: determinant -1.
        assert!(AxisRotation::new([[1, 0, 0], [0, 1, 0], [0, 0, -1]]).is_err());
        // Two nonzero entries in a row.
        assert!(AxisRotation::new([[1, 1, 0], [0, 0, 1], [0, 1, 0]]).is_err());
        // Entry outside -1..=1 is impossible for i8 range check here, but a
        // zero row must be rejected.
        assert!(AxisRotation::new([[0, 0, 0], [0, 1, 0], [0, 0, 1]]).is_err());
        assert!(AxisRotation::new([[0, 0, 1], [0, 1, 0], [-1, 0, 0]]).is_ok());
    }

    fn arb_sph() -> impl Strategy<Value = SphCoord> {
        (-FRAC_PI_2..=FRAC_PI_2, -PI..PI).prop_map(|(lat, lon)| sph(lat, lon))
    }

    proptest! {
        #[test]
        fn prop_pix_sph_round_trip(u in -256.0..512.0f64, v in 0.0..=64.0f64) {
            let shape = GridShape::new(64, 128).unwrap();
            let s = pix_to_sph(PixelCoord::new(u, v), shape).unwrap();
            let p = sph_to_pix(s, shape);
            let du = (p.u - u.rem_euclid(128.0)).abs();
            let du = du.min(128.0 - du); // circular distance across the seam
            prop_assert!(du < 1e-10);
            prop_assert!((p.v - v).abs() < 1e-10);
        }

        #[test]
        fn prop_sph_pix_round_trip(s in arb_sph()) {
            let shape = GridShape::new(37, 91).unwrap();
            let p = sph_to_pix(s, shape);
            let back = pix_to_sph(p, shape).unwrap();
            prop_assert!((back.lat() - s.lat()).abs() < 1e-12);
            let mut dlon = (back.lon() - s.lon()).abs();
            if dlon > PI {
                dlon = 2.0 * PI - dlon;
            }
            prop_assert!(dlon < 1e-12);
        }

        #[test]
        fn prop_unit_norm(s in arb_sph()) {
            let v = sph_to_unit(s);
            let norm = (v.x() * v.x() + v.y() * v.y() + v.z() * v.z()).sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }

        #[test]
        fn prop_unit_round_trip_away_from_poles(
            lat in (-FRAC_PI_2 + 1e-3)..(FRAC_PI_2 - 1e-3),
            lon in -PI..PI,
        ) {
            let s = sph(lat, lon);
            let back = unit_to_sph(sph_to_unit(s)).unwrap();
            prop_assert!((back.lat() - s.lat()).abs() < 1e-12);
            prop_assert!((back.lon() - s.lon()).abs() < 1e-12);
        }

        #[test]
        fn prop_haversine_matches_chord_oracle(a in arb_sph(), b in arb_sph()) {
            prop_assert!((haversine(a, b) - chord_distance(a, b)).abs() < 1e-12);
        }

        #[test]
        fn prop_haversine_symmetry_exact(a in arb_sph(), b in arb_sph()) {
            prop_assert_eq!(haversine(a, b), haversine(b, a));
        }

        #[test]
        fn prop_haversine_range(a in arb_sph(), b in arb_sph()) {
            let d = haversine(a, b);
            prop_assert!((0.0..=PI).contains(&d));
        }

        #[test]
        fn prop_haversine_triangle_inequality(a in arb_sph(), b in arb_sph(), c in arb_sph()) {
            prop_assert!(haversine(a, c) <= haversine(a, b) + haversine(b, c) + 1e-12);
        }

        #[test]
        fn prop_haversine_longitudinal_invariance(
            a in arb_sph(),
            b in arb_sph(),
            delta in -PI..PI,
        ) {
            let wrap = |lon: f64| {
                let mut l = (lon + PI).rem_euclid(2.0 * PI) - PI;
                if l >= PI {
                    l = -PI;
                }
                l
            };
            let a2 = sph(a.lat(), wrap(a.lon() + delta));
            let b2 = sph(b.lat(), wrap(b.lon() + delta));
            prop_assert!((haversine(a, b) - haversine(a2, b2)).abs() < 1e-12);
        }

        #[test]
        fn prop_rotation_preserves_distance(a in arb_sph(), b in arb_sph()) {
            let r = AxisRotation::pole_to_equator();
            let ra = unit_to_sph(apply_rotation(sph_to_unit(a), r)).unwrap();
            let rb = unit_to_sph(apply_rotation(sph_to_unit(b), r)).unwrap();
            prop_assert!((haversine(a, b) - haversine(ra, rb)).abs() < 1e-9);
        }
    }
}

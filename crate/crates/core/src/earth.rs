//! WGS-84 Earth model: geodetic/ECEF conversion, the local North-Up-East
//! frame, normal gravity and the tangent-plane offset used by the walk
//! generator.
//!
//! ECEF axes: z along the polar axis, x through the Greenwich meridian at the
//! equator. The local navigation frame is ordered North, Up, East, which is a
//! right-handed triad.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earth-centred Earth-fixed position, metres.
pub type EcefPosition = Vector3<f64>;

/// Ellipsoidal coordinates: latitude and longitude in radians, height in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub height: f64,
}

impl GeodeticPosition {
    /// Builds a position, wrapping longitude into (−π, π].
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Result<Self> {
        let g = GeodeticPosition {
            latitude,
            longitude: wrap_pi(longitude),
            height,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, height: f64) -> Result<Self> {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), height)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.latitude.is_finite() && self.longitude.is_finite() && self.height.is_finite();
        if !finite || self.latitude.abs() > std::f64::consts::FRAC_PI_2 + 1e-12 {
            return Err(Error::InvalidInput(format!("invalid geodetic position {self:?}")));
        }
        Ok(())
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_pi(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Reference ellipsoid, rotation rate and normal-gravity constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarthModel {
    /// Semi-major axis, m.
    pub semi_major_axis: f64,
    /// First eccentricity.
    pub eccentricity: f64,
    /// Rotation rate about the polar axis, rad/s.
    pub rotation_rate: f64,
    /// Normal gravity on the equator, m/s².
    pub equatorial_gravity: f64,
    /// Normal gravity at the poles, m/s².
    pub polar_gravity: f64,
    /// Geocentric gravitational constant, m³/s².
    pub gm: f64,
}

impl Default for EarthModel {
    fn default() -> Self {
        Self::WGS84
    }
}

impl EarthModel {
    pub const WGS84: EarthModel = EarthModel {
        semi_major_axis: 6_378_137.0,
        eccentricity: 0.081_819_190_842_622,
        rotation_rate: 7.292_115e-5,
        equatorial_gravity: 9.780_325_335_9,
        polar_gravity: 9.832_184_937_8,
        gm: 3.986_004_418e14,
    };

    /// WGS-84 ellipsoid and gravity on a non-rotating Earth.
    pub fn non_rotating() -> Self {
        EarthModel {
            rotation_rate: 0.0,
            ..Self::WGS84
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.semi_major_axis > 0.0
            && (0.0..1.0).contains(&self.eccentricity)
            && self.rotation_rate >= 0.0
            && self.equatorial_gravity > 0.0
            && self.polar_gravity > 0.0
            && self.gm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid earth model {self:?}")))
        }
    }

    #[inline]
    pub fn e2(&self) -> f64 {
        self.eccentricity * self.eccentricity
    }

    /// Semi-minor axis `a·√(1 − e²)`.
    #[inline]
    pub fn semi_minor_axis(&self) -> f64 {
        self.semi_major_axis * (1.0 - self.e2()).sqrt()
    }

    #[inline]
    pub fn flattening(&self) -> f64 {
        1.0 - (1.0 - self.e2()).sqrt()
    }

    /// Earth rate vector in ECEF, `[0, 0, Ω]`.
    #[inline]
    pub fn earth_rate(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.rotation_rate)
    }

    /// Transverse (prime-vertical) radius of curvature.
    #[inline]
    pub fn transverse_radius(&self, latitude: f64) -> f64 {
        let s = latitude.sin();
        self.semi_major_axis / (1.0 - self.e2() * s * s).sqrt()
    }

    /// Meridian radius of curvature.
    #[inline]
    pub fn meridian_radius(&self, latitude: f64) -> f64 {
        let s = latitude.sin();
        let d = 1.0 - self.e2() * s * s;
        self.semi_major_axis * (1.0 - self.e2()) / (d * d.sqrt())
    }

    /// Magnitude of normal gravity (Somigliana with the second-order height
    /// correction).
    pub fn normal_gravity(&self, latitude: f64, height: f64) -> f64 {
        let a = self.semi_major_axis;
        let b = self.semi_minor_axis();
        let s2 = latitude.sin().powi(2);
        let k = b * self.polar_gravity / (a * self.equatorial_gravity) - 1.0;
        let surface = self.equatorial_gravity * (1.0 + k * s2) / (1.0 - self.e2() * s2).sqrt();
        let f = self.flattening();
        let m = self.rotation_rate.powi(2) * a * a * b / self.gm;
        surface * (1.0 - 2.0 / a * (1.0 + f + m - 2.0 * f * s2) * height + 3.0 * height * height / (a * a))
    }
}

// (a + b) and its rounding error
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

// (hi, lo) · c carried to double-double accuracy
fn dd_mul(hi: f64, lo: f64, c: f64) -> (f64, f64) {
    let p = hi * c;
    let e = hi.mul_add(c, -p);
    two_sum(p, lo.mul_add(c, e))
}

/// Closed-form geodetic → ECEF. Products are carried in double-double so
/// that only the final rounding and the trigonometric values contribute
/// error.
pub fn geodetic_to_ecef(g: &GeodeticPosition, m: &EarthModel) -> EcefPosition {
    let (hi, lo) = geodetic_to_ecef_dd(g, m);
    hi + lo
}

fn geodetic_to_ecef_dd(g: &GeodeticPosition, m: &EarthModel) -> (Vector3<f64>, Vector3<f64>) {
    let (sl, cl) = g.latitude.sin_cos();
    let (so, co) = g.longitude.sin_cos();
    let n = m.transverse_radius(g.latitude);
    let (rh, rl) = two_sum(n, g.height);
    let (ch, cl2) = dd_mul(rh, rl, cl);
    let (xh, xl) = dd_mul(ch, cl2, co);
    let (yh, yl) = dd_mul(ch, cl2, so);
    let (zh, zl) = two_sum(n * (1.0 - m.e2()), g.height);
    let (zh, zl) = dd_mul(zh, zl, sl);
    let (xh, xl) = two_sum(xh, xl);
    let (yh, yl) = two_sum(yh, yl);
    let (zh, zl) = two_sum(zh, zl);
    (Vector3::new(xh, yh, zh), Vector3::new(xl, yl, zl))
}

// unrounded forward image of `g` minus `p`
fn reprojection_offset(g: &GeodeticPosition, p: &EcefPosition, m: &EarthModel) -> Vector3<f64> {
    let (hi, lo) = geodetic_to_ecef_dd(g, m);
    (hi - p) + lo
}

fn ulp(x: f64) -> f64 {
    let a = x.abs();
    (a.next_up() - a).max(f64::MIN_POSITIVE)
}

const LATITUDE_TOLERANCE: f64 = 1e-12;
// iteration continues past the tolerance down to round-off
const LATITUDE_ROUNDOFF: f64 = 1e-15;
const MAX_ITERATIONS: usize = 20;
const POLISH_ULPS: i32 = 1;

fn latitude_iteration(p: &EcefPosition, m: &EarthModel) -> Result<GeodeticPosition> {
    if !p.iter().all(|v| v.is_finite()) || p.norm() < 1_000.0 {
        return Err(Error::Geodetic(format!("degenerate ECEF position {:?}", p.as_slice())));
    }
    let e2 = m.e2();
    let rho = p.x.hypot(p.y);
    let longitude = p.y.atan2(p.x);
    let mut lat = p.z.atan2(rho * (1.0 - e2));
    let mut step = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let n = m.transverse_radius(lat);
        let next = (p.z + e2 * n * lat.sin()).atan2(rho);
        step = (next - lat).abs();
        lat = next;
        if step < LATITUDE_ROUNDOFF {
            break;
        }
    }
    if step.is_nan() || step >= LATITUDE_TOLERANCE {
        return Err(Error::Geodetic(format!(
            "latitude iteration did not converge for {:?}",
            p.as_slice()
        )));
    }
    let (sl, cl) = lat.sin_cos();
    let height = rho * cl + p.z * sl - m.semi_major_axis * (1.0 - e2 * sl * sl).sqrt();
    Ok(GeodeticPosition {
        latitude: lat,
        longitude,
        height,
    })
}

fn step_ulps(x: f64, n: i32) -> f64 {
    let mut y = x;
    for _ in 0..n.unsigned_abs() {
        y = if n > 0 { y.next_up() } else { y.next_down() };
    }
    y
}

/// ECEF → geodetic by fixed-point iteration on latitude, then polished so
/// that converting back reproduces `p` as closely as double precision allows.
///
/// Fails for non-finite input, for points within 1 km of the Earth centre,
/// and if the iteration does not settle to 1e-12 rad within 20 steps.
pub fn ecef_to_geodetic(p: &EcefPosition, m: &EarthModel) -> Result<GeodeticPosition> {
    let mut g = latitude_iteration(p, m)?;
    // Newton steps on the re-projection residual in the local frame
    for _ in 0..2 {
        let r = n_to_e_rotation(&g).transpose() * (p - geodetic_to_ecef(&g, m));
        let cl = g.latitude.cos();
        g.latitude += r.x / (m.meridian_radius(g.latitude) + g.height);
        if cl > 1e-9 {
            g.longitude += r.z / ((m.transverse_radius(g.latitude) + g.height) * cl);
        }
        g.height += r.y;
    }
    // Neighbouring representable angles, each with its height refitted.
    // Keep the one that reproduces `p` best after rounding, ties broken by
    // how deep the unrounded image sits inside the rounding cell of `p`.
    let up = n_to_e_rotation(&g).column(1).into_owned();
    let score = |c: &GeodeticPosition| {
        let d = reprojection_offset(c, p, m);
        let depth = (0..3).map(|i| d[i].abs() / ulp(p[i])).fold(0.0, f64::max);
        ((geodetic_to_ecef(c, m) - p).norm(), depth)
    };
    let mut best = g;
    let mut best_score = (f64::INFINITY, f64::INFINITY);
    for dlat in -POLISH_ULPS..=POLISH_ULPS {
        for dlon in -POLISH_ULPS..=POLISH_ULPS {
            let mut c = GeodeticPosition {
                latitude: step_ulps(g.latitude, dlat),
                longitude: step_ulps(g.longitude, dlon),
                height: g.height,
            };
            for _ in 0..2 {
                c.height -= up.dot(&reprojection_offset(&c, p, m));
            }
            let sc = score(&c);
            if sc < best_score {
                best = c;
                best_score = sc;
            }
        }
    }
    if best.longitude.abs() > std::f64::consts::PI {
        best.longitude = wrap_pi(best.longitude);
    }
    Ok(best)
}

/// Rotation from the local North-Up-East frame to ECEF. Columns are the ECEF
/// directions of North, Up and East.
pub fn n_to_e_rotation(g: &GeodeticPosition) -> Matrix3<f64> {
    let (sl, cl) = g.latitude.sin_cos();
    let (so, co) = g.longitude.sin_cos();
    Matrix3::new(
        -sl * co,
        cl * co,
        -so, //
        -sl * so,
        cl * so,
        co, //
        cl,
        sl,
        0.0,
    )
}

/// Normal gravity at a geodetic position, expressed in ECEF.
pub fn gravity_at(g: &GeodeticPosition, m: &EarthModel) -> Vector3<f64> {
    let up = n_to_e_rotation(g).column(1).into_owned();
    -up * m.normal_gravity(g.latitude, g.height)
}

/// Normal gravity at an ECEF position. Points along the ellipsoid normal,
/// downwards.
pub fn gravity_ecef(p: &EcefPosition, m: &EarthModel) -> Result<Vector3<f64>> {
    Ok(gravity_at(&latitude_iteration(p, m)?, m))
}

/// Moves `anchor` by a tangent-plane offset expressed in the anchor's
/// North-Up-East frame: rotate to ECEF, add, convert back.
pub fn tangent_offset_to_position(
    delta_p: &Vector3<f64>,
    anchor: &GeodeticPosition,
    m: &EarthModel,
) -> Result<GeodeticPosition> {
    let pe = geodetic_to_ecef(anchor, m) + n_to_e_rotation(anchor) * delta_p;
    ecef_to_geodetic(&pe, m)
}

/// Transport rate of the North-Up-East frame, ECEF axes, for a ground
/// velocity given in that frame.
pub fn transport_rate_ecef(g: &GeodeticPosition, v_n: &Vector3<f64>, m: &EarthModel) -> Vector3<f64> {
    let lat_rate = v_n.x / (m.meridian_radius(g.latitude) + g.height);
    let lon_rate = v_n.z / ((m.transverse_radius(g.latitude) + g.height) * g.latitude.cos());
    let east = Vector3::new(-g.longitude.sin(), g.longitude.cos(), 0.0);
    Vector3::new(0.0, 0.0, lon_rate) - east * lat_rate
}

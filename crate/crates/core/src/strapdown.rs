//! Earth-frame strapdown mechanization for a single foot.
//!
//! The state carries the body-to-ECEF attitude matrix, ECEF velocity and
//! position, and the gyro/accelerometer bias estimates. Raw samples are
//! grouped in pairs; each pair becomes one two-sample update.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::earth::{self, EarthModel, EcefPosition, GeodeticPosition};
use crate::error::{Error, Result};
use crate::so3::{exp_map, orthonormalize, skew};
use crate::Foot;

/// One raw IMU record: angular rate (rad/s) and specific force (m/s²) in the
/// body frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub foot: Foot,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// Angle and velocity increments over the two halves of one update interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuIncrements {
    pub dtheta1: Vector3<f64>,
    pub dtheta2: Vector3<f64>,
    pub dv1: Vector3<f64>,
    pub dv2: Vector3<f64>,
    /// Length of the whole interval, s.
    pub dt: f64,
}

impl ImuIncrements {
    /// Increments over `[s0, s1]` and `[s1, s2]` from the quadratic through
    /// the three samples.
    pub fn from_samples(s0: &ImuSample, s1: &ImuSample, s2: &ImuSample) -> Result<Self> {
        let (a, b) = (s1.t - s0.t, s2.t - s1.t);
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Propagation(format!(
                "non-increasing sample times {} {} {}",
                s0.t, s1.t, s2.t
            )));
        }
        let ab = a + b;
        let first = [
            a * (2.0 * a + 3.0 * b) / (6.0 * ab),
            a * (a + 3.0 * b) / (6.0 * b),
            -a * a * a / (6.0 * b * ab),
        ];
        let second = [
            -b * b * b / (6.0 * a * ab),
            b * (3.0 * a + b) / (6.0 * a),
            b * (3.0 * a + 2.0 * b) / (6.0 * ab),
        ];
        let fit =
            |w: &[f64; 3], x0: &Vector3<f64>, x1: &Vector3<f64>, x2: &Vector3<f64>| x0 * w[0] + x1 * w[1] + x2 * w[2];
        Ok(ImuIncrements {
            dtheta1: fit(&first, &s0.gyro, &s1.gyro, &s2.gyro),
            dtheta2: fit(&second, &s0.gyro, &s1.gyro, &s2.gyro),
            dv1: fit(&first, &s0.accel, &s1.accel, &s2.accel),
            dv2: fit(&second, &s0.accel, &s1.accel, &s2.accel),
            dt: s2.t - s0.t,
        })
    }

    /// Removes constant biases from the raw increments.
    pub fn bias_corrected(&self, b_g: &Vector3<f64>, b_a: &Vector3<f64>) -> Self {
        let h = 0.5 * self.dt;
        ImuIncrements {
            dtheta1: self.dtheta1 - b_g * h,
            dtheta2: self.dtheta2 - b_g * h,
            dv1: self.dv1 - b_a * h,
            dv2: self.dv2 - b_a * h,
            dt: self.dt,
        }
    }

    fn is_finite(&self) -> bool {
        self.dt.is_finite()
            && [self.dtheta1, self.dtheta2, self.dv1, self.dv2]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Total rotation and sculling/rotation-compensated velocity increment.
///
/// `Δθ = Δθ₁ + Δθ₂`,
/// `Δv = Δv₁ + Δv₂ + ½ Δθ × (Δv₁ + Δv₂) + ⅔ (Δθ₁ × Δv₂ + Δv₁ × Δθ₂)`.
pub fn two_sample_delta(incr: &ImuIncrements) -> (Vector3<f64>, Vector3<f64>) {
    let dtheta = incr.dtheta1 + incr.dtheta2;
    let dv_sum = incr.dv1 + incr.dv2;
    let dv = dv_sum
        + dtheta.cross(&dv_sum) * 0.5
        + (incr.dtheta1.cross(&incr.dv2) + incr.dv1.cross(&incr.dtheta2)) * (2.0 / 3.0);
    (dtheta, dv)
}

pub(crate) const GAUSS_4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
];

/// Specific force rotated into the body frame at the start of the interval
/// and integrated over the first half and over the whole interval.
///
/// Rate and force are taken as linear in time, matched to the two half
/// increments; the rotation is not truncated. Agrees with
/// [`two_sample_delta`] to second order in the rotation angle.
pub fn rotated_force_integrals(incr: &ImuIncrements) -> (Vector3<f64>, Vector3<f64>) {
    let h = 0.5 * incr.dt;
    if h <= 0.0 {
        return (Vector3::zeros(), Vector3::zeros());
    }
    // half-interval means are the values at the half-interval centres
    let (w1, w2) = (incr.dtheta1 / h, incr.dtheta2 / h);
    let (f1, f2) = (incr.dv1 / h, incr.dv2 / h);
    let (w_slope, f_slope) = ((w2 - w1) / h, (f2 - f1) / h);
    let w0 = w1 - w_slope * (0.5 * h);
    let f0 = f1 - f_slope * (0.5 * h);
    let half = |start: f64| {
        GAUSS_4.iter().fold(Vector3::zeros(), |acc, &(x, weight)| {
            let tau = start + 0.5 * h * (x + 1.0);
            let angle = w0 * tau + w_slope * (0.5 * tau * tau);
            acc + exp_map(&angle) * (f0 + f_slope * tau) * (0.5 * h * weight)
        })
    };
    let first = half(0.0);
    (first, first + half(h))
}

/// Roll, yaw and pitch of the body relative to North-Up-East.
///
/// Body axes are forward, up, right. The attitude is built yaw first (about
/// down, so positive yaw turns North towards East), then pitch about the
/// body right axis, then roll about the body forward axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Euler {
    pub roll: f64,
    pub yaw: f64,
    pub pitch: f64,
}

impl Euler {
    pub fn new(roll: f64, yaw: f64, pitch: f64) -> Self {
        Euler { roll, yaw, pitch }
    }

    /// Body → North-Up-East rotation.
    pub fn to_c_bn(&self) -> Matrix3<f64> {
        let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), -self.yaw);
        let pitch = Rotation3::from_axis_angle(&Vector3::z_axis(), self.pitch);
        let roll = Rotation3::from_axis_angle(&Vector3::x_axis(), self.roll);
        (yaw * pitch * roll).into_inner()
    }

    pub fn from_c_bn(c: &Matrix3<f64>) -> Self {
        // Up row: (sin θ, cos θ cos φ, −cos θ sin φ)
        let pitch = c[(1, 0)].clamp(-1.0, 1.0).asin();
        let roll = (-c[(1, 2)]).atan2(c[(1, 1)]);
        // forward column: (cos ψ cos θ, sin θ, sin ψ cos θ)
        let yaw = c[(2, 0)].atan2(c[(0, 0)]);
        Euler { roll, yaw, pitch }
    }
}

/// Nominal navigation state of one foot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    /// Body → ECEF attitude.
    pub c_be: Matrix3<f64>,
    pub v_e: Vector3<f64>,
    pub p_e: EcefPosition,
    pub b_g: Vector3<f64>,
    pub b_a: Vector3<f64>,
    pub t: f64,
}

impl NavState {
    /// State from a geodetic position, North-Up-East velocity and Euler angles.
    pub fn from_local(
        position: &GeodeticPosition,
        v_n: &Vector3<f64>,
        attitude: &Euler,
        earth: &EarthModel,
        t: f64,
    ) -> Self {
        let c_ne = earth::n_to_e_rotation(position);
        NavState {
            c_be: c_ne * attitude.to_c_bn(),
            v_e: c_ne * v_n,
            p_e: earth::geodetic_to_ecef(position, earth),
            b_g: Vector3::zeros(),
            b_a: Vector3::zeros(),
            t,
        }
    }

    pub fn geodetic(&self, earth: &EarthModel) -> Result<GeodeticPosition> {
        earth::ecef_to_geodetic(&self.p_e, earth)
    }

    /// Attitude, velocity (North-Up-East) and position in local terms.
    pub fn local(&self, earth: &EarthModel) -> Result<(GeodeticPosition, Vector3<f64>, Euler)> {
        let g = self.geodetic(earth)?;
        let c_en = earth::n_to_e_rotation(&g).transpose();
        Ok((g, c_en * self.v_e, Euler::from_c_bn(&(c_en * self.c_be))))
    }

    pub fn is_finite(&self) -> bool {
        self.c_be.iter().all(|x| x.is_finite())
            && self.v_e.iter().all(|x| x.is_finite())
            && self.p_e.iter().all(|x| x.is_finite())
            && self.b_g.iter().all(|x| x.is_finite())
            && self.b_a.iter().all(|x| x.is_finite())
    }
}

/// Advances a state over one update interval.
///
/// Attitude: `C ← exp(−Ω T) · C · exp(Δθ)` with bias-corrected `Δθ`.
/// Velocity: `v ← v + (I − ½ T Ω×) C Δv + (g − 2 Ω × v) T`, with `Δv` from
/// [`rotated_force_integrals`] rather than the truncated two-sample series.
/// Position: Simpson on the start, mid-interval and end velocities.
pub fn propagate(state: &NavState, incr: &ImuIncrements, earth: &EarthModel) -> Result<NavState> {
    if !incr.is_finite() || incr.dt < 0.0 {
        return Err(Error::Propagation(format!("invalid increments {incr:?}")));
    }
    if incr.dt == 0.0 {
        return Ok(*state);
    }
    let t = incr.dt;
    let corrected = incr.bias_corrected(&state.b_g, &state.b_a);
    let dtheta = corrected.dtheta1 + corrected.dtheta2;
    let w_ie = earth.earth_rate();

    let c_be = orthonormalize(&(exp_map(&(-w_ie * t)) * state.c_be * exp_map(&dtheta)));
    let (dv_half, dv) = rotated_force_integrals(&corrected);
    let dv_e = state.c_be * dv;
    let dv_e = dv_e - w_ie.cross(&dv_e) * (0.5 * t);
    let g = earth::gravity_ecef(&state.p_e, earth)?;
    let v_e = state.v_e + dv_e + (g - w_ie.cross(&state.v_e) * 2.0) * t;
    let dv_half_e = state.c_be * dv_half;
    let dv_half_e = dv_half_e - w_ie.cross(&dv_half_e) * (0.25 * t);
    let v_mid = state.v_e + dv_half_e + (g - w_ie.cross(&state.v_e) * 2.0) * (0.5 * t);
    let p_e = state.p_e + (state.v_e + v_mid * 4.0 + v_e) * (t / 6.0);

    let next = NavState {
        c_be,
        v_e,
        p_e,
        b_g: state.b_g,
        b_a: state.b_a,
        t: state.t + t,
    };
    if !next.is_finite() {
        return Err(Error::Propagation(format!("non-finite state at t = {}", next.t)));
    }
    Ok(next)
}

/// Coarse alignment from a stationary window.
///
/// Roll and pitch come from the mean specific force, yaw is taken from
/// `heading0`. The gyro bias is the mean rate minus the Earth rate seen by the
/// levelled attitude; velocity and accelerometer bias start at zero.
pub fn initialize(
    stationary: &[ImuSample],
    p0: &GeodeticPosition,
    heading0: f64,
    earth: &EarthModel,
) -> Result<NavState> {
    let (first, last) = match (stationary.first(), stationary.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Initialization("empty stationary window".into())),
    };
    if last.t - first.t < 1.0 - 1e-9 {
        return Err(Error::Initialization(format!(
            "stationary window too short: {:.3} s, need at least 1 s",
            last.t - first.t
        )));
    }
    p0.validate()?;
    let n = stationary.len() as f64;
    let gyro = stationary.iter().map(|s| s.gyro).sum::<Vector3<f64>>() / n;
    let accel = stationary.iter().map(|s| s.accel).sum::<Vector3<f64>>() / n;
    if accel.norm() < 1.0 {
        return Err(Error::Initialization(format!(
            "mean specific force too small to level: {:.3} m/s²",
            accel.norm()
        )));
    }
    let up = accel.normalize();
    let attitude = Euler::new((-up.z).atan2(up.y), heading0, up.x.clamp(-1.0, 1.0).asin());
    let mut state = NavState::from_local(p0, &Vector3::zeros(), &attitude, earth, last.t);
    state.b_g = gyro - state.c_be.transpose() * earth.earth_rate();
    Ok(state)
}

/// Converts a per-foot sample stream into update intervals. Samples are
/// consumed in overlapping triples `(2k, 2k+1, 2k+2)`.
pub fn increments(samples: &[ImuSample]) -> Result<Vec<ImuIncrements>> {
    let mut out = Vec::with_capacity(samples.len() / 2);
    let mut k = 0;
    while k + 2 < samples.len() {
        out.push(ImuIncrements::from_samples(
            &samples[k],
            &samples[k + 1],
            &samples[k + 2],
        )?);
        k += 2;
    }
    Ok(out)
}

/// `skew(C f)` helper shared with the error model.
pub(crate) fn specific_force_skew(c_be: &Matrix3<f64>, f_b: &Vector3<f64>) -> Matrix3<f64> {
    skew(&(c_be * f_b))
}

//! Joint two-foot error-state Kalman filter.
//!
//! Per-foot error layout (15): attitude error, velocity error, position
//! error, gyro bias error, accelerometer bias error, all in ECEF except the
//! biases (body). The attitude error is defined by
//! `C̃_b^e = (I − δψ×) C_b^e`; velocity and position errors are estimate minus
//! truth; bias states are truth minus estimate.
//!
//! The joint state stacks left then right (30).

use nalgebra::{Matrix3, RowVector3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::earth::{EarthModel, GeodeticPosition};
use crate::error::{Error, Result};
use crate::so3::{exp_map, skew};
use crate::strapdown::{specific_force_skew, NavState};
use crate::Foot;

pub const FOOT_DIM: usize = 15;
pub const JOINT_DIM: usize = 30;

pub type FootMatrix = SMatrix<f64, FOOT_DIM, FOOT_DIM>;
pub type NoiseInput = SMatrix<f64, FOOT_DIM, 12>;
pub type JointMatrix = SMatrix<f64, JOINT_DIM, JOINT_DIM>;
pub type JointVector = SVector<f64, JOINT_DIM>;

const ATT: usize = 0;
const VEL: usize = 3;
const POS: usize = 6;
const BG: usize = 9;
const BA: usize = 12;

/// χ² 99.9% quantiles for 1 and 3 degrees of freedom.
pub const CHI2_999_1: f64 = 10.828;
pub const CHI2_999_3: f64 = 16.266;
pub const CHI2_999_6: f64 = 22.458;

/// Minimum inter-transducer distance for a range update, m.
pub const RANGE_MIN_SEPARATION: f64 = 0.05;
/// Largest attitude correction accepted by the injection, rad.
pub const MAX_ATTITUDE_CORRECTION: f64 = 0.5;

/// One foot's error vector, unpacked.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorState {
    pub dpsi_e: Vector3<f64>,
    pub dv_e: Vector3<f64>,
    pub dp_e: Vector3<f64>,
    pub b_g: Vector3<f64>,
    pub b_a: Vector3<f64>,
}

impl ErrorState {
    pub fn to_vector(&self) -> SVector<f64, FOOT_DIM> {
        let mut x = SVector::<f64, FOOT_DIM>::zeros();
        x.fixed_rows_mut::<3>(ATT).copy_from(&self.dpsi_e);
        x.fixed_rows_mut::<3>(VEL).copy_from(&self.dv_e);
        x.fixed_rows_mut::<3>(POS).copy_from(&self.dp_e);
        x.fixed_rows_mut::<3>(BG).copy_from(&self.b_g);
        x.fixed_rows_mut::<3>(BA).copy_from(&self.b_a);
        x
    }

    pub fn from_slice(x: &[f64]) -> Self {
        let v = |i: usize| Vector3::new(x[i], x[i + 1], x[i + 2]);
        ErrorState {
            dpsi_e: v(ATT),
            dv_e: v(VEL),
            dp_e: v(POS),
            b_g: v(BG),
            b_a: v(BA),
        }
    }

    /// Error of `estimate` relative to `truth` in this layout.
    pub fn between(estimate: &NavState, truth: &NavState) -> Self {
        // C̃ Cᵀ = I − δψ×
        let d = estimate.c_be * truth.c_be.transpose();
        ErrorState {
            dpsi_e: crate::so3::log_map(&d.transpose()),
            dv_e: estimate.v_e - truth.v_e,
            dp_e: estimate.p_e - truth.p_e,
            b_g: truth.b_g - estimate.b_g,
            b_a: truth.b_a - estimate.b_a,
        }
    }
}

/// Noise densities and measurement sigmas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Gyro white noise, rad/s/√Hz.
    pub sigma_g: f64,
    /// Accelerometer white noise, m/s²/√Hz.
    pub sigma_a: f64,
    /// Gyro bias random walk, rad/s/√s.
    pub sigma_bg: f64,
    /// Accelerometer bias random walk, m/s²/√s.
    pub sigma_ba: f64,
    /// Zero-velocity pseudo-measurement, m/s.
    pub sigma_v: f64,
    /// Inter-foot range, m.
    pub sigma_d: f64,
    /// Ellipsoid residual (dimensionless).
    pub sigma_ec: f64,
    /// Reject updates whose Mahalanobis distance exceeds the 99.9% χ² quantile.
    pub gating: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_g: 0.5f64.to_radians() / 60.0,
            sigma_a: 0.001 / 60.0,
            sigma_bg: 1e-6,
            sigma_ba: 1e-5,
            sigma_v: 0.05,
            sigma_d: 0.05,
            sigma_ec: 1e-8,
            gating: false,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("sigma_g", self.sigma_g),
            ("sigma_a", self.sigma_a),
            ("sigma_bg", self.sigma_bg),
            ("sigma_ba", self.sigma_ba),
            ("sigma_v", self.sigma_v),
            ("sigma_d", self.sigma_d),
            ("sigma_ec", self.sigma_ec),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Initial one-sigma uncertainties, applied to both feet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialSigmas {
    pub attitude: f64,
    pub velocity: f64,
    pub position: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
}

impl Default for InitialSigmas {
    fn default() -> Self {
        InitialSigmas {
            attitude: 5f64.to_radians(),
            velocity: 0.1,
            position: 0.01,
            gyro_bias: 1f64.to_radians(),
            accel_bias: 0.3,
        }
    }
}

impl InitialSigmas {
    pub fn covariance(&self) -> JointMatrix {
        let mut d = JointVector::zeros();
        for foot in 0..2 {
            let o = foot * FOOT_DIM;
            for (block, s) in [
                (ATT, self.attitude),
                (VEL, self.velocity),
                (POS, self.position),
                (BG, self.gyro_bias),
                (BA, self.accel_bias),
            ] {
                for i in 0..3 {
                    d[o + block + i] = s * s;
                }
            }
        }
        JointMatrix::from_diagonal(&d)
    }
}

/// One inter-foot range record with the transducer lever arms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeSample {
    pub t: f64,
    pub d: f64,
    pub lever_l: Vector3<f64>,
    pub lever_r: Vector3<f64>,
}

/// Continuous-time error model of one foot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorDynamics {
    pub f: FootMatrix,
    pub d: NoiseInput,
}

/// Error dynamics linearized at `state` with bias-corrected specific force
/// `f_b` (body frame).
pub fn error_dynamics(state: &NavState, f_b: &Vector3<f64>, earth: &EarthModel) -> ErrorDynamics {
    let c = state.c_be;
    let w = skew(&earth.earth_rate());
    let i3 = Matrix3::identity();
    let mut f = FootMatrix::zeros();
    f.fixed_view_mut::<3, 3>(ATT, ATT).copy_from(&(-w));
    f.fixed_view_mut::<3, 3>(ATT, BG).copy_from(&(-c));
    f.fixed_view_mut::<3, 3>(VEL, ATT)
        .copy_from(&specific_force_skew(&c, f_b));
    f.fixed_view_mut::<3, 3>(VEL, VEL).copy_from(&(-w * 2.0));
    f.fixed_view_mut::<3, 3>(VEL, BA).copy_from(&c);
    f.fixed_view_mut::<3, 3>(POS, VEL).copy_from(&i3);
    let mut d = NoiseInput::zeros();
    d.fixed_view_mut::<3, 3>(ATT, 0).copy_from(&(-c));
    d.fixed_view_mut::<3, 3>(VEL, 3).copy_from(&c);
    d.fixed_view_mut::<3, 3>(BG, 6).copy_from(&i3);
    d.fixed_view_mut::<3, 3>(BA, 9).copy_from(&i3);
    ErrorDynamics { f, d }
}

/// What happened to a measurement update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateOutcome {
    Applied { mahalanobis: f64 },
    Gated { mahalanobis: f64 },
    Skipped,
}

impl UpdateOutcome {
    pub fn applied(&self) -> bool {
        matches!(self, UpdateOutcome::Applied { .. })
    }
}

const CLONE_DIM: usize = 6;
const AUG_DIM: usize = JOINT_DIM + CLONE_DIM;
type AugMatrix = SMatrix<f64, AUG_DIM, AUG_DIM>;

/// Earlier position estimates of each foot, kept as extra error states so a
/// later constraint against them accounts for their uncertainty.
///
/// Clone errors are estimate minus truth, like the position errors. An empty
/// slot has zero covariance and never moves.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionClones {
    pub p_e: [Option<Vector3<f64>>; 2],
    /// Covariance of the joint error with the clone errors.
    pub cross: SMatrix<f64, JOINT_DIM, CLONE_DIM>,
    pub cov: SMatrix<f64, CLONE_DIM, CLONE_DIM>,
}

impl Default for PositionClones {
    fn default() -> Self {
        PositionClones {
            p_e: [None, None],
            cross: SMatrix::zeros(),
            cov: SMatrix::zeros(),
        }
    }
}

impl PositionClones {
    pub fn is_empty(&self) -> bool {
        self.p_e.iter().all(Option::is_none)
    }
}

/// Both feet's nominal states and the joint error covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub left: NavState,
    pub right: NavState,
    pub p: JointMatrix,
    pub clones: PositionClones,
}

impl JointState {
    pub fn new(left: NavState, right: NavState, p: JointMatrix) -> Self {
        JointState {
            left,
            right,
            p,
            clones: PositionClones::default(),
        }
    }

    /// Replaces the clone of `foot` with its current position.
    pub fn clone_position(&mut self, foot: Foot) {
        let (o, c) = (foot.index() * FOOT_DIM + POS, 3 * foot.index());
        let other = 3 - c;
        let rows = self.p.fixed_columns::<3>(o).into_owned();
        let with_other = self.clones.cross.fixed_view::<3, 3>(o, other).into_owned();
        let own = self.p.fixed_view::<3, 3>(o, o).into_owned();
        let p_e = self.nav(foot).p_e;
        let cl = &mut self.clones;
        cl.p_e[foot.index()] = Some(p_e);
        cl.cross.fixed_columns_mut::<3>(c).copy_from(&rows);
        cl.cov.fixed_view_mut::<3, 3>(c, c).copy_from(&own);
        cl.cov.fixed_view_mut::<3, 3>(c, other).copy_from(&with_other);
        cl.cov
            .fixed_view_mut::<3, 3>(other, c)
            .copy_from(&with_other.transpose());
    }

    /// Drops the clone of `foot`.
    pub fn drop_clone(&mut self, foot: Foot) {
        let c = 3 * foot.index();
        let cl = &mut self.clones;
        cl.p_e[foot.index()] = None;
        cl.cross.fixed_columns_mut::<3>(c).fill(0.0);
        cl.cov.fixed_rows_mut::<3>(c).fill(0.0);
        cl.cov.fixed_columns_mut::<3>(c).fill(0.0);
    }

    pub fn nav(&self, foot: Foot) -> &NavState {
        match foot {
            Foot::Left => &self.left,
            Foot::Right => &self.right,
        }
    }

    pub fn nav_mut(&mut self, foot: Foot) -> &mut NavState {
        match foot {
            Foot::Left => &mut self.left,
            Foot::Right => &mut self.right,
        }
    }

    /// Covariance sub-block of one foot.
    pub fn foot_covariance(&self, foot: Foot) -> FootMatrix {
        let o = foot.index() * FOOT_DIM;
        self.p.fixed_view::<FOOT_DIM, FOOT_DIM>(o, o).into_owned()
    }

    /// Symmetry within 1e-9 relative and PSD within `−1e-12·trace`.
    pub fn check_covariance(&self) -> Result<()> {
        if self.p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence("covariance has non-finite entries".into()));
        }
        let scale = self.p.amax().max(f64::MIN_POSITIVE);
        let asym = (self.p - self.p.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(Error::Divergence(format!("covariance asymmetry {asym:e}")));
        }
        let min_eig = self.p.symmetric_eigenvalues().min();
        let trace = self.p.trace();
        if min_eig < -1e-12 * trace {
            return Err(Error::Divergence(format!(
                "covariance not positive semidefinite: min eigenvalue {min_eig:e}, trace {trace:e}"
            )));
        }
        Ok(())
    }

    /// Applies a joint error estimate to the nominal states.
    pub fn inject_and_reset(&mut self, dx: &JointVector) -> Result<()> {
        for foot in Foot::BOTH {
            let o = foot.index() * FOOT_DIM;
            let e = ErrorState::from_slice(&dx.as_slice()[o..o + FOOT_DIM]);
            let size = e.dpsi_e.norm();
            if size.is_nan() || size >= MAX_ATTITUDE_CORRECTION {
                return Err(Error::Divergence(format!(
                    "{} attitude correction {:.3} rad exceeds the small-angle limit",
                    foot.tag(),
                    e.dpsi_e.norm()
                )));
            }
            let s = self.nav_mut(foot);
            s.c_be = exp_map(&e.dpsi_e) * s.c_be;
            s.v_e -= e.dv_e;
            s.p_e -= e.dp_e;
            s.b_g += e.b_g;
            s.b_a += e.b_a;
        }
        Ok(())
    }

    /// Generic Joseph-form update with `δx̂ = K (ŷ − y)`.
    pub fn update<const M: usize>(
        &mut self,
        h: &SMatrix<f64, M, JOINT_DIM>,
        predicted_minus_measured: &SVector<f64, M>,
        r: &SMatrix<f64, M, M>,
        gate: Option<f64>,
    ) -> Result<UpdateOutcome> {
        if !self.clones.is_empty() {
            return self.update_with_clones(h, &SMatrix::zeros(), predicted_minus_measured, r, gate);
        }
        let pht = self.p * h.transpose();
        let s = h * pht + r;
        let s_inv = s
            .cholesky()
            .ok_or_else(|| Error::Divergence("innovation covariance not positive definite".into()))?
            .inverse();
        let dy = predicted_minus_measured;
        let mahalanobis = (dy.transpose() * s_inv * dy)[(0, 0)];
        if let Some(limit) = gate {
            if mahalanobis > limit {
                return Ok(UpdateOutcome::Gated { mahalanobis });
            }
        }
        let k = pht * s_inv;
        let dx = k * dy;
        let ikh = JointMatrix::identity() - k * h;
        let p = ikh * self.p * ikh.transpose() + k * r * k.transpose();
        self.p = (p + p.transpose()) * 0.5;
        self.inject_and_reset(&dx)?;
        Ok(UpdateOutcome::Applied { mahalanobis })
    }

    /// Joseph-form update over the joint and clone errors together.
    pub fn update_with_clones<const M: usize>(
        &mut self,
        h: &SMatrix<f64, M, JOINT_DIM>,
        h_clone: &SMatrix<f64, M, CLONE_DIM>,
        predicted_minus_measured: &SVector<f64, M>,
        r: &SMatrix<f64, M, M>,
        gate: Option<f64>,
    ) -> Result<UpdateOutcome> {
        let mut pa = AugMatrix::zeros();
        pa.fixed_view_mut::<JOINT_DIM, JOINT_DIM>(0, 0).copy_from(&self.p);
        pa.fixed_view_mut::<JOINT_DIM, CLONE_DIM>(0, JOINT_DIM)
            .copy_from(&self.clones.cross);
        pa.fixed_view_mut::<CLONE_DIM, JOINT_DIM>(JOINT_DIM, 0)
            .copy_from(&self.clones.cross.transpose());
        pa.fixed_view_mut::<CLONE_DIM, CLONE_DIM>(JOINT_DIM, JOINT_DIM)
            .copy_from(&self.clones.cov);
        let mut ha = SMatrix::<f64, M, AUG_DIM>::zeros();
        ha.fixed_columns_mut::<JOINT_DIM>(0).copy_from(h);
        ha.fixed_columns_mut::<CLONE_DIM>(JOINT_DIM).copy_from(h_clone);

        let pht = pa * ha.transpose();
        let s = ha * pht + r;
        let s_inv = s
            .cholesky()
            .ok_or_else(|| Error::Divergence("innovation covariance not positive definite".into()))?
            .inverse();
        let dy = predicted_minus_measured;
        let mahalanobis = (dy.transpose() * s_inv * dy)[(0, 0)];
        if let Some(limit) = gate {
            if mahalanobis > limit {
                return Ok(UpdateOutcome::Gated { mahalanobis });
            }
        }
        let k = pht * s_inv;
        let dx = k * dy;
        let ikh = AugMatrix::identity() - k * ha;
        let pa = ikh * pa * ikh.transpose() + k * r * k.transpose();
        let pa = (pa + pa.transpose()) * 0.5;
        self.p = pa.fixed_view::<JOINT_DIM, JOINT_DIM>(0, 0).into_owned();
        self.clones.cross = pa.fixed_view::<JOINT_DIM, CLONE_DIM>(0, JOINT_DIM).into_owned();
        self.clones.cov = pa.fixed_view::<CLONE_DIM, CLONE_DIM>(JOINT_DIM, JOINT_DIM).into_owned();
        for foot in Foot::BOTH {
            let i = foot.index();
            if let Some(c) = self.clones.p_e[i].as_mut() {
                *c -= dx.fixed_rows::<3>(JOINT_DIM + 3 * i);
            }
        }
        self.inject_and_reset(&dx.fixed_rows::<JOINT_DIM>(0).into_owned())?;
        Ok(UpdateOutcome::Applied { mahalanobis })
    }
}

/// Covariance propagation over one epoch. The nominal states must already be
/// at the new epoch; the dynamics are taken at the start of the interval.
pub fn predict(
    js: &mut JointState,
    left: &ErrorDynamics,
    right: &ErrorDynamics,
    dt: f64,
    noise: &NoiseConfig,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "prediction interval must be > 0, got {dt}"
        )));
    }
    let mut w = SVector::<f64, 12>::zeros();
    for i in 0..3 {
        w[i] = noise.sigma_g.powi(2);
        w[3 + i] = noise.sigma_a.powi(2);
        w[6 + i] = noise.sigma_bg.powi(2);
        w[9 + i] = noise.sigma_ba.powi(2);
    }
    let w = SMatrix::<f64, 12, 12>::from_diagonal(&w);
    let mut phi = JointMatrix::identity();
    let mut q = JointMatrix::zeros();
    for (o, dynamics) in [(0, left), (FOOT_DIM, right)] {
        let block = FootMatrix::identity() + dynamics.f * dt;
        phi.fixed_view_mut::<FOOT_DIM, FOOT_DIM>(o, o).copy_from(&block);
        let qd = dynamics.d * w * dynamics.d.transpose() * dt;
        q.fixed_view_mut::<FOOT_DIM, FOOT_DIM>(o, o).copy_from(&qd);
    }
    let p = phi * js.p * phi.transpose() + q;
    js.p = (p + p.transpose()) * 0.5;
    if !js.clones.is_empty() {
        js.clones.cross = phi * js.clones.cross;
    }
    js.check_covariance()
}

fn gate(noise: &NoiseConfig, limit: f64) -> Option<f64> {
    noise.gating.then_some(limit)
}

fn zupt_rows(foot: Foot) -> SMatrix<f64, 3, JOINT_DIM> {
    let mut h = SMatrix::<f64, 3, JOINT_DIM>::zeros();
    h.fixed_view_mut::<3, 3>(0, foot.index() * FOOT_DIM + VEL)
        .copy_from(&Matrix3::identity());
    h
}

/// Zero-velocity update for one foot.
pub fn update_zupt(js: &mut JointState, foot: Foot, noise: &NoiseConfig) -> Result<UpdateOutcome> {
    let dy = js.nav(foot).v_e;
    let r = Matrix3::identity() * noise.sigma_v.powi(2);
    js.update(&zupt_rows(foot), &dy, &r, gate(noise, CHI2_999_3))
}

/// Zero-velocity update for both feet as one stacked measurement.
pub fn update_zupt_pair(js: &mut JointState, noise: &NoiseConfig) -> Result<UpdateOutcome> {
    let mut h = SMatrix::<f64, 6, JOINT_DIM>::zeros();
    h.fixed_rows_mut::<3>(0).copy_from(&zupt_rows(Foot::Left));
    h.fixed_rows_mut::<3>(3).copy_from(&zupt_rows(Foot::Right));
    let mut dy = SVector::<f64, 6>::zeros();
    dy.fixed_rows_mut::<3>(0).copy_from(&js.left.v_e);
    dy.fixed_rows_mut::<3>(3).copy_from(&js.right.v_e);
    let r = SMatrix::<f64, 6, 6>::identity() * noise.sigma_v.powi(2);
    js.update(&h, &dy, &r, gate(noise, CHI2_999_6))
}

/// Transducer-to-transducer vector, left minus right, ECEF.
pub fn transducer_offset(js: &JointState, lever_l: &Vector3<f64>, lever_r: &Vector3<f64>) -> Vector3<f64> {
    // difference the positions first; it is exact for nearby points
    (js.left.p_e - js.right.p_e) + js.left.c_be * lever_l - js.right.c_be * lever_r
}

/// Range predicted by the current nominal states.
pub fn predicted_range(js: &JointState, lever_l: &Vector3<f64>, lever_r: &Vector3<f64>) -> f64 {
    transducer_offset(js, lever_l, lever_r).norm()
}

/// Inter-foot range update. Skipped when the predicted separation is below
/// [`RANGE_MIN_SEPARATION`].
pub fn update_range(js: &mut JointState, r: &RangeSample, noise: &NoiseConfig) -> Result<UpdateOutcome> {
    if !(r.d > 0.0 && r.d.is_finite()) {
        return Err(Error::InvalidInput(format!("range must be positive, got {}", r.d)));
    }
    let dl = transducer_offset(js, &r.lever_l, &r.lever_r);
    let n = dl.norm();
    if n < RANGE_MIN_SEPARATION {
        return Ok(UpdateOutcome::Skipped);
    }
    let u: RowVector3<f64> = (dl / n).transpose();
    let mut h = SMatrix::<f64, 1, JOINT_DIM>::zeros();
    let (l, rr) = (0, FOOT_DIM);
    h.fixed_view_mut::<1, 3>(0, l + ATT)
        .copy_from(&(u * skew(&(js.left.c_be * r.lever_l))));
    h.fixed_view_mut::<1, 3>(0, l + POS).copy_from(&u);
    h.fixed_view_mut::<1, 3>(0, rr + ATT)
        .copy_from(&(-u * skew(&(js.right.c_be * r.lever_r))));
    h.fixed_view_mut::<1, 3>(0, rr + POS).copy_from(&(-u));
    let dy = SVector::<f64, 1>::new(n - r.d);
    let rm = SMatrix::<f64, 1, 1>::new(noise.sigma_d.powi(2));
    js.update(&h, &dy, &rm, gate(noise, CHI2_999_1))
}

/// Semi-axes of the constraint surface. The (N + h, N(1 − e²) + h) pair
/// passes through the anchor but is more oblate than the Earth, so its normal
/// leans about e²·sinφ·cosφ away from the vertical. Scaling both squared axes
/// by a common factor keeps the surface through the anchor with the geodetic
/// normal there; at h = 0 it is the reference ellipsoid itself.
pub fn ellipsoid_axes(anchor: &GeodeticPosition, earth: &EarthModel) -> (f64, f64) {
    let n = earth.transverse_radius(anchor.latitude);
    let (s, c) = anchor.latitude.sin_cos();
    let equatorial = n + anchor.height;
    let polar = n * (1.0 - earth.e2()) + anchor.height;
    let scale = equatorial * c * c + polar * s * s;
    ((equatorial * scale).sqrt(), (polar * scale).sqrt())
}

/// `1 − g(p)` where `g` is the anchor-ellipsoid form; zero on the surface.
pub fn ellipsoid_innovation(p: &Vector3<f64>, anchor: &GeodeticPosition, earth: &EarthModel) -> f64 {
    let (a, b) = ellipsoid_axes(anchor, earth);
    1.0 - ((p.x * p.x + p.y * p.y) / (a * a) + p.z * p.z / (b * b))
}

/// Measurement row of the ellipsoid constraint for one foot.
pub fn ellipsoid_row(
    p: &Vector3<f64>,
    foot: Foot,
    anchor: &GeodeticPosition,
    earth: &EarthModel,
) -> SMatrix<f64, 1, JOINT_DIM> {
    let (a, b) = ellipsoid_axes(anchor, earth);
    let mut h = SMatrix::<f64, 1, JOINT_DIM>::zeros();
    let o = foot.index() * FOOT_DIM + POS;
    h[(0, o)] = 2.0 * p.x / (a * a);
    h[(0, o + 1)] = 2.0 * p.y / (a * a);
    h[(0, o + 2)] = 2.0 * p.z / (b * b);
    h
}

/// Constrains one foot to the ellipsoid through the anchor stance height.
pub fn update_ellipsoid(
    js: &mut JointState,
    foot: Foot,
    anchor: &GeodeticPosition,
    earth: &EarthModel,
    noise: &NoiseConfig,
) -> Result<UpdateOutcome> {
    let p = js.nav(foot).p_e;
    let h = ellipsoid_row(&p, foot, anchor, earth);
    let dy = SVector::<f64, 1>::new(-ellipsoid_innovation(&p, anchor, earth));
    let r = SMatrix::<f64, 1, 1>::new(noise.sigma_ec.powi(2));
    js.update(&h, &dy, &r, gate(noise, CHI2_999_1))
}

/// Constrains one foot to the ellipsoid through its cloned position.
///
/// The clone moves the surface with it, so the row on the clone is the
/// negative surface gradient at the clone.
pub fn update_ellipsoid_cloned(
    js: &mut JointState,
    foot: Foot,
    earth: &EarthModel,
    noise: &NoiseConfig,
) -> Result<UpdateOutcome> {
    let a_e = js.clones.p_e[foot.index()]
        .ok_or_else(|| Error::Usage(format!("no position clone for the {} foot", foot.tag())))?;
    let anchor = crate::earth::ecef_to_geodetic(&a_e, earth)?;
    let p = js.nav(foot).p_e;
    let h = ellipsoid_row(&p, foot, &anchor, earth);
    let at_anchor = ellipsoid_row(&a_e, foot, &anchor, earth);
    let o = foot.index() * FOOT_DIM + POS;
    let mut hc = SMatrix::<f64, 1, CLONE_DIM>::zeros();
    hc.fixed_columns_mut::<3>(3 * foot.index())
        .copy_from(&(-at_anchor.fixed_columns::<3>(o)));
    let dy = SVector::<f64, 1>::new(-ellipsoid_innovation(&p, &anchor, earth));
    let r = SMatrix::<f64, 1, 1>::new(noise.sigma_ec.powi(2));
    js.update_with_clones(&h, &hc, &dy, &r, gate(noise, CHI2_999_1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth::{self, GeodeticPosition};
    use crate::strapdown::Euler;
    use proptest::prelude::*;

    const M: EarthModel = EarthModel::WGS84;

    fn origin() -> GeodeticPosition {
        GeodeticPosition::from_degrees(31.0, 121.0, 0.0).unwrap()
    }

    fn state_at(g: &GeodeticPosition, v_n: Vector3<f64>, e: Euler) -> NavState {
        NavState::from_local(g, &v_n, &e, &M, 0.0)
    }

    fn joint(left: NavState, right: NavState) -> JointState {
        JointState::new(left, right, InitialSigmas::default().covariance())
    }

    fn standing_pair() -> JointState {
        let g = origin();
        let l = state_at(&g, Vector3::zeros(), Euler::default());
        let mut r = l;
        r.p_e = l.p_e + earth::n_to_e_rotation(&g) * Vector3::new(0.65, 0.0, 0.0);
        joint(l, r)
    }

    #[test]
    fn prediction_without_noise_or_dynamics_keeps_p() {
        let mut js = standing_pair();
        let p0 = js.p;
        let zero = ErrorDynamics {
            f: FootMatrix::zeros(),
            d: NoiseInput::zeros(),
        };
        predict(&mut js, &zero, &zero, 0.02, &NoiseConfig::default()).unwrap();
        assert_eq!(js.p, p0);
    }

    #[test]
    fn position_row_integrates_velocity() {
        let mut js = standing_pair();
        js.p = JointMatrix::zeros();
        js.p[(VEL, VEL)] = 1.0;
        let dynamics = error_dynamics(&js.left, &Vector3::new(0.0, 9.8, 0.0), &EarthModel::non_rotating());
        let zero = ErrorDynamics {
            f: FootMatrix::zeros(),
            d: NoiseInput::zeros(),
        };
        let mut ld = dynamics;
        ld.d = NoiseInput::zeros();
        predict(&mut js, &ld, &zero, 0.02, &NoiseConfig::default()).unwrap();
        // δp_x gains dt·δv_x: cov(δp_x, δv_x) = dt, var(δp_x) = dt²
        assert!((js.p[(POS, VEL)] - 0.02).abs() < 1e-15);
        assert!((js.p[(POS, POS)] - 0.0004).abs() < 1e-15);
    }

    #[test]
    fn prediction_grows_trace() {
        let mut js = standing_pair();
        let noise = NoiseConfig::default();
        for _ in 0..50 {
            let before = js.p.trace();
            let dl = error_dynamics(&js.left, &Vector3::new(0.3, 9.8, -0.2), &M);
            let dr = error_dynamics(&js.right, &Vector3::new(0.0, 9.8, 0.0), &M);
            predict(&mut js, &dl, &dr, 0.02, &noise).unwrap();
            assert!(js.p.trace() >= before);
        }
    }

    #[test]
    fn zupt_with_zero_velocity() {
        let mut js = standing_pair();
        let (l0, r0, p0) = (js.left, js.right, js.p);
        update_zupt(&mut js, Foot::Left, &NoiseConfig::default()).unwrap();
        assert_eq!(js.left.v_e, l0.v_e);
        assert!((js.left.p_e - l0.p_e).norm() < 1e-12);
        assert_eq!(js.right, r0);
        assert!(js.p[(VEL, VEL)] < p0[(VEL, VEL)]);
    }

    #[test]
    fn zupt_with_huge_noise_is_a_no_op() {
        let mut js = standing_pair();
        js.left.v_e = Vector3::new(0.1, -0.2, 0.05);
        let before = js.clone();
        let noise = NoiseConfig {
            sigma_v: 1e12,
            ..NoiseConfig::default()
        };
        update_zupt(&mut js, Foot::Left, &noise).unwrap();
        assert!((js.left.v_e - before.left.v_e).amax() < 1e-12);
        assert!((js.p - before.p).amax() < 1e-12);
    }

    #[test]
    fn zupt_matches_scalar_kalman() {
        let mut js = standing_pair();
        let pv = 0.04;
        js.p = JointMatrix::identity() * pv;
        js.left.v_e = Vector3::new(0.1, 0.0, 0.0);
        let noise = NoiseConfig::default();
        let r = noise.sigma_v.powi(2);
        update_zupt(&mut js, Foot::Left, &noise).unwrap();
        let expected = 0.1 - pv / (pv + r) * 0.1;
        assert!((js.left.v_e.x - expected).abs() < 1e-15);
        assert!((js.p[(VEL, VEL)] - pv * r / (pv + r)).abs() < 1e-15);
    }

    #[test]
    fn sequential_and_stacked_zupts_agree() {
        let mut a = standing_pair();
        a.left.v_e = Vector3::new(0.1, -0.05, 0.02);
        a.right.v_e = Vector3::new(-0.03, 0.04, 0.2);
        // correlate the feet a little
        for i in 0..JOINT_DIM {
            for j in 0..JOINT_DIM {
                if i != j {
                    a.p[(i, j)] = 1e-4 * ((i * 7 + j * 7) % 5) as f64 / 5.0 * a.p[(i, i)].min(a.p[(j, j)]).sqrt();
                }
            }
        }
        a.p = (a.p + a.p.transpose()) * 0.5;
        let mut b = a.clone();
        let noise = NoiseConfig::default();
        update_zupt(&mut a, Foot::Left, &noise).unwrap();
        update_zupt(&mut a, Foot::Right, &noise).unwrap();
        update_zupt_pair(&mut b, &noise).unwrap();
        assert!((a.p - b.p).amax() < 1e-9);
        assert!((a.left.v_e - b.left.v_e).amax() < 1e-9);
        assert!((a.right.v_e - b.right.v_e).amax() < 1e-9);
        assert!((a.left.p_e - b.left.p_e).amax() < 1e-9);
    }

    fn range(d: f64, lever_l: Vector3<f64>, lever_r: Vector3<f64>) -> RangeSample {
        RangeSample {
            t: 0.0,
            d,
            lever_l,
            lever_r,
        }
    }

    #[test]
    fn consistent_range_changes_nothing() {
        let mut js = standing_pair();
        let before = js.clone();
        let r = range(0.65, Vector3::zeros(), Vector3::zeros());
        assert!((predicted_range(&js, &r.lever_l, &r.lever_r) - 0.65).abs() < 1e-9);
        update_range(&mut js, &r, &NoiseConfig::default()).unwrap();
        assert!((js.left.p_e - before.left.p_e).amax() < 1e-8);
        assert!((js.right.p_e - before.right.p_e).amax() < 1e-8);
    }

    #[test]
    fn range_innovation_is_measured_minus_predicted() {
        let js = standing_pair();
        let d_hat = predicted_range(&js, &Vector3::zeros(), &Vector3::zeros());
        assert!((0.70 - d_hat - 0.05).abs() < 1e-9);
        // a longer measured range pushes the feet apart
        let mut js2 = js.clone();
        update_range(
            &mut js2,
            &range(0.70, Vector3::zeros(), Vector3::zeros()),
            &NoiseConfig::default(),
        )
        .unwrap();
        assert!(predicted_range(&js2, &Vector3::zeros(), &Vector3::zeros()) > d_hat);
    }

    #[test]
    fn predicted_range_with_lever_arms() {
        let g = origin();
        let l = state_at(&g, Vector3::zeros(), Euler::new(0.1, 0.4, -0.2));
        let mut r = state_at(&g, Vector3::zeros(), Euler::new(-0.05, 0.5, 0.3));
        r.p_e += earth::n_to_e_rotation(&g) * Vector3::new(0.2, 0.0, 0.6);
        let js = joint(l, r);
        let ll = Vector3::new(0.02, 0.05, -0.03);
        let lr = Vector3::new(0.03, -0.03, 0.04);
        // transducer positions built column by column
        let tl: Vector3<f64> = (0..3).map(|i| l.c_be.column(i) * ll[i]).sum();
        let tr: Vector3<f64> = (0..3).map(|i| r.c_be.column(i) * lr[i]).sum();
        let base = l.p_e - r.p_e;
        let d = [0, 1, 2].map(|i| base[i] + tl[i] - tr[i]);
        let direct = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        assert!((predicted_range(&js, &ll, &lr) - direct).abs() < 1e-12);
    }

    #[test]
    fn range_skipped_when_feet_coincide() {
        let mut js = standing_pair();
        js.right = js.left;
        let out = update_range(
            &mut js,
            &range(0.3, Vector3::zeros(), Vector3::zeros()),
            &NoiseConfig::default(),
        )
        .unwrap();
        assert_eq!(out, UpdateOutcome::Skipped);
    }

    // The range row must be the derivative of the predicted range with
    // respect to each error state.
    #[test]
    fn range_row_matches_finite_difference() {
        let g = origin();
        let l = state_at(&g, Vector3::zeros(), Euler::new(0.1, 0.4, -0.2));
        let mut r = state_at(&g, Vector3::zeros(), Euler::new(-0.05, 0.5, 0.3));
        r.p_e += earth::n_to_e_rotation(&g) * Vector3::new(0.2, 0.1, 0.6);
        let ll = Vector3::new(0.02, 0.05, -0.03);
        let lr = Vector3::new(0.03, -0.03, 0.04);
        let base = joint(l, r);
        for k in [
            ATT,
            ATT + 1,
            ATT + 2,
            POS,
            POS + 2,
            FOOT_DIM + ATT + 1,
            FOOT_DIM + POS + 1,
        ] {
            // ECEF coordinates carry ~1e-9 m of rounding, so position steps
            // have to be much larger than attitude steps
            let eps = if k % FOOT_DIM >= POS { 1e-3 } else { 1e-6 };
            // apply an error δx_k to the "estimate": estimate = truth with error
            // δx, i.e. truth = inject(estimate, δx); here start from truth.
            // injecting −δx into the truth produces an estimate with error +δx
            let perturbed = |e: f64| {
                let mut est = base.clone();
                let mut dx = JointVector::zeros();
                dx[k] = -e;
                est.inject_and_reset(&dx).unwrap();
                predicted_range(&est, &ll, &lr)
            };
            let numeric = (perturbed(eps) - perturbed(-eps)) / (2.0 * eps);
            let dl = transducer_offset(&base, &ll, &lr);
            let u = (dl / dl.norm()).transpose();
            let analytic = match k {
                x if x < 3 => (u * skew(&(l.c_be * ll)))[x],
                x if x < 9 => u[x - POS],
                x if x < FOOT_DIM + 3 => -(u * skew(&(r.c_be * lr)))[x - FOOT_DIM],
                x => -u[x - FOOT_DIM - POS],
            };
            assert!((numeric - analytic).abs() < 2e-6, "state {k}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn ellipsoid_examples() {
        let anchor = GeodeticPosition::from_degrees(0.0, 30.0, 2.0).unwrap();
        let p = earth::geodetic_to_ecef(&anchor, &M);
        assert!(ellipsoid_innovation(&p, &anchor, &M).abs() < 1e-15);
        let dh = 0.3;
        let up = GeodeticPosition {
            height: 2.0 + dh,
            ..anchor
        };
        let q = earth::geodetic_to_ecef(&up, &M);
        let expected = -2.0 * dh / (M.semi_major_axis + 2.0);
        let got = ellipsoid_innovation(&q, &anchor, &M);
        assert!((got - expected).abs() < 1e-3 * expected.abs());

        let h = ellipsoid_row(&q, Foot::Right, &anchor, &M);
        let (a, b) = ellipsoid_axes(&anchor, &M);
        let o = FOOT_DIM + POS;
        assert_eq!(h[(0, o)], 2.0 * q.x / (a * a));
        assert_eq!(h[(0, o + 1)], 2.0 * q.y / (a * a));
        assert_eq!(h[(0, o + 2)], 2.0 * q.z / (b * b));
        for (i, x) in h.iter().enumerate() {
            assert!(*x == 0.0 || (o..o + 3).contains(&i));
        }
    }

    #[test]
    fn ellipsoid_at_zero_height_is_the_reference() {
        for lat in [0.0, 31.0, 60.0, -45.0] {
            let anchor = GeodeticPosition::from_degrees(lat, 10.0, 0.0).unwrap();
            let (a, b) = ellipsoid_axes(&anchor, &M);
            assert!((a - M.semi_major_axis).abs() < 1e-6, "{lat}: {a}");
            assert!((b - M.semi_minor_axis()).abs() < 1e-6, "{lat}: {b}");
        }
    }

    #[test]
    fn ellipsoid_follows_the_local_level() {
        // walking 50 m level in any direction keeps the residual near zero
        for h0 in [0.0, 35.0, 1500.0] {
            let anchor = GeodeticPosition::from_degrees(31.0, 121.0, h0).unwrap();
            let p0 = earth::geodetic_to_ecef(&anchor, &M);
            let normal = earth::n_to_e_rotation(&anchor) * Vector3::new(0.0, 1.0, 0.0);
            let grad = ellipsoid_row(&p0, Foot::Left, &anchor, &M)
                .fixed_view::<1, 3>(0, POS)
                .transpose();
            assert!(grad.normalize().cross(&normal).norm() < 1e-9, "{h0}");
            let per_metre = grad.norm();
            for heading in [0.0f64, 45.0, 90.0, 180.0] {
                let (s, c) = heading.to_radians().sin_cos();
                let p = earth::tangent_offset_to_position(&Vector3::new(50.0 * c, 0.0, 50.0 * s), &anchor, &M).unwrap();
                let q = earth::geodetic_to_ecef(&GeodeticPosition { height: h0, ..p }, &M);
                let dh = ellipsoid_innovation(&q, &anchor, &M) / per_metre;
                assert!(dh.abs() < 1e-3, "h0 {h0} heading {heading}: {dh}");
            }
        }
    }

    #[test]
    fn ellipsoid_update_pulls_height_back() {
        let anchor = origin();
        let mut js = standing_pair();
        js.p[(POS, POS)] = 1.0;
        js.p[(POS + 1, POS + 1)] = 1.0;
        js.p[(POS + 2, POS + 2)] = 1.0;
        let lifted = GeodeticPosition { height: 0.4, ..anchor };
        js.left.p_e = earth::geodetic_to_ecef(&lifted, &M);
        update_ellipsoid(&mut js, Foot::Left, &anchor, &M, &NoiseConfig::default()).unwrap();
        let h = js.left.geodetic(&M).unwrap().height;
        assert!(h.abs() < 0.4 && h < 0.3, "{h}");
    }

    #[test]
    fn clones_leave_ordinary_updates_unchanged() {
        let mut plain = standing_pair();
        plain.left.v_e = Vector3::new(0.01, -0.02, 0.005);
        let dynamics = error_dynamics(&plain.left, &Vector3::new(0.3, 9.8, -0.2), &M);
        predict(&mut plain, &dynamics, &dynamics, 0.02, &NoiseConfig::default()).unwrap();
        let mut cloned = plain.clone();
        cloned.clone_position(Foot::Left);
        cloned.clone_position(Foot::Right);
        for js in [&mut plain, &mut cloned] {
            predict(js, &dynamics, &dynamics, 0.02, &NoiseConfig::default()).unwrap();
            update_zupt(js, Foot::Left, &NoiseConfig::default()).unwrap();
        }
        assert!((plain.p - cloned.p).amax() < 1e-15 * plain.p.amax());
        assert!((plain.left.v_e - cloned.left.v_e).norm() < 1e-15);
        assert!((plain.left.p_e - cloned.left.p_e).norm() < 1e-9);
    }

    #[test]
    fn clone_cross_covariance_follows_prediction() {
        let mut js = standing_pair();
        js.clone_position(Foot::Right);
        let o = FOOT_DIM + POS;
        assert_eq!(js.clones.cov.fixed_view::<3, 3>(3, 3), js.p.fixed_view::<3, 3>(o, o));
        assert_eq!(js.clones.cross.fixed_columns::<3>(3), js.p.fixed_columns::<3>(o));
        assert!(js.clones.cross.fixed_columns::<3>(0).iter().all(|x| *x == 0.0));
        let dynamics = error_dynamics(&js.left, &Vector3::new(0.0, 9.8, 0.0), &M);
        let before = js.clones.cross;
        predict(&mut js, &dynamics, &dynamics, 0.5, &NoiseConfig::default()).unwrap();
        // position error picks up the velocity error times dt
        let moved = js.clones.cross - before;
        let expected = before.fixed_rows::<3>(FOOT_DIM + VEL) * 0.5;
        assert!((moved.fixed_rows::<3>(o).fixed_columns::<3>(3) - expected.fixed_columns::<3>(3)).amax() < 1e-12);
        js.drop_clone(Foot::Right);
        assert!(js.clones.is_empty());
        assert_eq!(js.clones, PositionClones::default());
    }

    #[test]
    fn cloned_ellipsoid_update_is_relative() {
        let noise = NoiseConfig::default();
        let mut js = standing_pair();
        let g = origin();
        assert!(matches!(
            update_ellipsoid_cloned(&mut js, Foot::Left, &M, &noise),
            Err(Error::Usage(_))
        ));
        js.clone_position(Foot::Left);
        // a height offset shared by the foot and its clone is not observable
        let shared = js.clone();
        let mut lifted = shared.clone();
        let up = earth::n_to_e_rotation(&g) * Vector3::new(0.0, 0.25, 0.0);
        lifted.left.p_e += up;
        lifted.clones.p_e[0] = Some(lifted.clones.p_e[0].unwrap() + up);
        update_ellipsoid_cloned(&mut lifted, Foot::Left, &M, &noise).unwrap();
        assert!((lifted.left.p_e - shared.left.p_e - up).norm() < 1e-6);

        // after a stride of independent growth, a climb relative to the clone is pulled back
        let mut js = shared;
        for i in 0..3 {
            js.p[(POS + i, POS + i)] += 0.01;
        }
        js.left.p_e += up;
        let var_before = js.p[(POS + 1, POS + 1)];
        update_ellipsoid_cloned(&mut js, Foot::Left, &M, &noise).unwrap();
        let h = js.left.geodetic(&M).unwrap().height - g.height;
        let anchor_h = earth::ecef_to_geodetic(&js.clones.p_e[0].unwrap(), &M).unwrap().height - g.height;
        assert!((h - anchor_h).abs() < 0.25 * 0.5, "{h} {anchor_h}");
        assert!(js.p[(POS + 1, POS + 1)] <= var_before);
    }

    #[test]
    fn injection_examples() {
        let mut js = standing_pair();
        let before = js.clone();
        js.inject_and_reset(&JointVector::zeros()).unwrap();
        assert_eq!(js, before);
        let mut dx = JointVector::zeros();
        dx[POS] = 1.0;
        dx[POS + 1] = 2.0;
        dx[POS + 2] = 3.0;
        js.inject_and_reset(&dx).unwrap();
        assert_eq!(js.left.p_e, before.left.p_e - Vector3::new(1.0, 2.0, 3.0));
        let mut big = JointVector::zeros();
        big[FOOT_DIM + ATT] = 0.6;
        assert!(matches!(js.inject_and_reset(&big), Err(Error::Divergence(_))));
    }

    #[test]
    fn injection_removes_a_known_error() {
        let g = origin();
        let truth = state_at(&g, Vector3::new(0.2, 0.0, 0.1), Euler::new(0.1, 1.0, -0.2));
        let err = ErrorState {
            dpsi_e: Vector3::new(0.01, -0.02, 0.015),
            dv_e: Vector3::new(0.1, 0.0, -0.1),
            dp_e: Vector3::new(0.5, -0.3, 0.2),
            b_g: Vector3::new(1e-3, 0.0, -2e-3),
            b_a: Vector3::new(0.05, 0.02, 0.0),
        };
        let mut est = truth;
        est.c_be = (Matrix3::identity() - skew(&err.dpsi_e)) * truth.c_be;
        est.c_be = crate::so3::orthonormalize(&est.c_be);
        est.v_e += err.dv_e;
        est.p_e += err.dp_e;
        est.b_g -= err.b_g;
        est.b_a -= err.b_a;
        let mut js = joint(est, est);
        let mut dx = JointVector::zeros();
        dx.fixed_rows_mut::<FOOT_DIM>(0).copy_from(&err.to_vector());
        js.inject_and_reset(&dx).unwrap();
        let residual = ErrorState::between(&js.left, &truth);
        assert!(residual.dpsi_e.norm() < 10.0 * err.dpsi_e.norm_squared());
        assert!(residual.dp_e.norm() < 1e-12 && residual.dv_e.norm() < 1e-12);
        assert!(residual.b_g.norm() < 1e-15 && residual.b_a.norm() < 1e-15);
    }

    #[test]
    fn attitude_error_dynamics_match_propagation() {
        // Propagate truth and a perturbed estimate with a biased gyro; the
        // attitude error should follow −Ω×δψ − C δb_g.
        use crate::strapdown::{propagate, ImuIncrements};
        let g = origin();
        let truth = state_at(&g, Vector3::zeros(), Euler::new(0.1, 0.5, 0.05));
        let mut est = truth;
        let db = Vector3::new(0.01, -0.02, 0.005);
        est.b_g = truth.b_g - db;
        let f = -truth.c_be.transpose() * earth::gravity_ecef(&truth.p_e, &M).unwrap();
        let w = truth.c_be.transpose() * M.earth_rate();
        let incr = ImuIncrements {
            dtheta1: w * 0.01,
            dtheta2: w * 0.01,
            dv1: f * 0.01,
            dv2: f * 0.01,
            dt: 0.02,
        };
        let (t1, e1) = (
            propagate(&truth, &incr, &M).unwrap(),
            propagate(&est, &incr, &M).unwrap(),
        );
        let err = ErrorState::between(&e1, &t1);
        let dynamics = error_dynamics(&truth, &f, &M);
        let x0 = ErrorState {
            b_g: db,
            ..ErrorState::default()
        };
        let predicted = (FootMatrix::identity() + dynamics.f * 0.02) * x0.to_vector();
        for i in 0..3 {
            assert!((err.dpsi_e[i] - predicted[ATT + i]).abs() < 1e-8, "{i}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn covariance_stays_symmetric_psd(
            seed in 0u64..1000,
            vx in -0.5..0.5f64,
            d in 0.3..1.2f64,
        ) {
            let mut js = standing_pair();
            let noise = NoiseConfig::default();
            let mut phase = seed;
            for k in 0..300 {
                phase = phase.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let fx = ((phase >> 33) as f64 / (1u64 << 31) as f64 - 0.5) * 4.0;
                let dl = error_dynamics(&js.left, &Vector3::new(fx, 9.8, 0.1), &M);
                let dr = error_dynamics(&js.right, &Vector3::new(-fx, 9.8, 0.0), &M);
                predict(&mut js, &dl, &dr, 0.02, &noise).unwrap();
                if k % 3 == 0 {
                    js.left.v_e.x = vx * 0.01;
                    update_zupt(&mut js, Foot::Left, &noise).unwrap();
                }
                if k % 5 == 0 {
                    update_range(&mut js, &range(d, Vector3::zeros(), Vector3::zeros()), &noise).unwrap();
                }
            }
            prop_assert!(js.check_covariance().is_ok());
        }
    }
}

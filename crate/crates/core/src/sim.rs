//! Square-walk gait simulator: ground truth, IMU outputs and inter-foot range.
//!
//! Each foot alternates swing and stance along the sides of a square and
//! turns 90° to the right in place at every corner. The right foot runs the
//! same schedule half a gait cycle late and starts half a stride ahead and to
//! the right. The walk is laid out in the tangent frame of the starting
//! point, so positions, velocities and accelerations are exact in ECEF and
//! the loop closes.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::earth::{self, EarthModel, EcefPosition, GeodeticPosition};
use crate::error::{Error, Result};
use crate::fusion::RangeSample;
use crate::strapdown::{Euler, ImuSample, NavState};
use crate::Foot;

/// Scenario parameters. Durations in seconds, angles in radians, noise as
/// white-noise densities (per √Hz).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    #[serde(alias = "l_s")]
    pub stride: f64,
    #[serde(alias = "l_h")]
    pub max_height: f64,
    #[serde(alias = "t_u")]
    pub swing_time: f64,
    #[serde(alias = "t_s")]
    pub stance_time: f64,
    /// Extra standing time before each turn.
    pub turn_pause: f64,
    #[serde(alias = "t_r")]
    pub turn_time: f64,
    #[serde(alias = "theta_max")]
    pub max_pitch: f64,
    #[serde(alias = "psi_0")]
    pub heading0: f64,
    pub imu_rate: f64,
    pub range_rate: f64,
    /// Starting position of the left foot.
    pub origin: GeodeticPosition,
    pub side_strides: usize,
    pub laps: usize,
    /// Gyro white noise, rad/s/√Hz.
    pub gyro_noise: f64,
    /// Accelerometer white noise, m/s²/√Hz.
    pub accel_noise: f64,
    /// Range noise, m.
    pub range_noise: f64,
    /// Constant gyro biases, rad/s, `[left, right]`.
    pub gyro_bias: [Vector3<f64>; 2],
    /// Constant accelerometer biases, m/s², `[left, right]`.
    pub accel_bias: [Vector3<f64>; 2],
    pub lever_l: Vector3<f64>,
    pub lever_r: Vector3<f64>,
}

fn deg3(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z) * (PI / 180.0)
}

impl Default for GaitParams {
    fn default() -> Self {
        let b_g = deg3(2.0, 2.3, 1.7);
        let b_a = Vector3::new(0.1, 0.2, -0.2);
        GaitParams {
            stride: 1.3,
            max_height: 0.14,
            swing_time: 0.8,
            stance_time: 0.4,
            turn_pause: 0.0,
            turn_time: 0.2,
            max_pitch: 0.55,
            heading0: 0.0,
            imu_rate: 100.0,
            range_rate: 10.0,
            origin: GeodeticPosition {
                latitude: 31f64.to_radians(),
                longitude: 121f64.to_radians(),
                height: 0.0,
            },
            side_strides: 25,
            laps: 8,
            gyro_noise: 0.5f64.to_radians() / 60.0,
            accel_noise: 0.001 / 60.0,
            range_noise: 0.02,
            gyro_bias: [b_g, b_g],
            accel_bias: [b_a, b_a],
            lever_l: Vector3::new(0.02, 0.05, -0.03),
            lever_r: Vector3::new(0.03, -0.03, 0.04),
        }
    }
}

impl GaitParams {
    /// The 24 s single-lap square used for the constraint analysis:
    /// five strides per side, small biases, no sensor noise.
    pub fn short_square() -> Self {
        let b_a = Vector3::new(0.2, 0.1, -0.2);
        let b_g = deg3(0.05, -0.05, 0.06);
        GaitParams {
            side_strides: 5,
            laps: 1,
            gyro_noise: 0.0,
            accel_noise: 0.0,
            range_noise: 0.0,
            gyro_bias: [b_g, b_g],
            accel_bias: [b_a, b_a],
            ..GaitParams::default()
        }
    }

    /// Gait period, s.
    pub fn period(&self) -> f64 {
        self.swing_time + self.stance_time
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("swing_time", self.swing_time),
            ("stance_time", self.stance_time),
            ("turn_time", self.turn_time),
            ("imu_rate", self.imu_rate),
            ("range_rate", self.range_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("stride", self.stride),
            ("max_height", self.max_height),
            ("turn_pause", self.turn_pause),
            ("gyro_noise", self.gyro_noise),
            ("accel_noise", self.accel_noise),
            ("range_noise", self.range_noise),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        let ratio = self.imu_rate / self.range_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Config(format!(
                "imu_rate {} is not a multiple of range_rate {}",
                self.imu_rate, self.range_rate
            )));
        }
        // every phase must be a whole number of samples; the half-period
        // offset of the right foot too
        for (name, d) in [
            ("swing_time", self.swing_time),
            ("stance_time", self.stance_time),
            ("turn_time", self.turn_time),
            ("turn_pause", self.turn_pause),
            ("half period", 0.5 * self.period()),
        ] {
            let n = d * self.imu_rate;
            if (n - n.round()).abs() > 1e-6 {
                return Err(Error::Config(format!("{name} is not a whole number of IMU samples")));
            }
        }
        if self.side_strides == 0 || self.laps == 0 {
            return Err(Error::Config("side_strides and laps must be at least 1".into()));
        }
        self.origin.validate()
    }

    fn samples(&self, seconds: f64) -> usize {
        (seconds * self.imu_rate).round() as usize
    }

    /// Duration of the walk for one foot, without the half-period offset.
    pub fn walk_duration(&self) -> f64 {
        let side = self.side_strides as f64 * self.period() + self.turn_pause + self.turn_time;
        4.0 * side * self.laps as f64
    }

    /// Horizontal distance walked by one foot.
    pub fn walk_distance(&self) -> f64 {
        4.0 * (self.side_strides * self.laps) as f64 * self.stride
    }
}

/// Displacement, velocity and acceleration (North-Up-East, relative to the
/// start of the swing) and pitch at time `tau` into a swing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwingState {
    pub delta_p: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub pitch: f64,
    pub pitch_rate: f64,
}

pub fn swing_kinematics(tau: f64, p: &GaitParams, heading: f64) -> Result<SwingState> {
    let tu = p.swing_time;
    if !(0.0..=tu).contains(&tau) {
        return Err(Error::Usage(format!("swing time {tau} outside [0, {tu}]")));
    }
    let (sh, ch) = heading.sin_cos();
    let w1 = PI / tu;
    let w2 = 2.0 * PI / tu;
    let (s1, c1) = (w1 * tau).sin_cos();
    let (s2, c2) = (w2 * tau).sin_cos();
    let horiz = p.stride * (1.0 - c1) / 2.0;
    let horiz_v = p.stride * w1 * s1 / 2.0;
    let horiz_a = p.stride * w1 * w1 * c1 / 2.0;
    Ok(SwingState {
        delta_p: Vector3::new(horiz * ch, p.max_height * (1.0 - c2) / 2.0, horiz * sh),
        velocity: Vector3::new(horiz_v * ch, p.max_height * w2 * s2 / 2.0, horiz_v * sh),
        acceleration: Vector3::new(horiz_a * ch, p.max_height * w2 * w2 * c2 / 2.0, horiz_a * sh),
        pitch: p.max_pitch * (1.0 - c2) / 2.0,
        pitch_rate: p.max_pitch * w2 * s2 / 2.0,
    })
}

/// Yaw `tau` into a turn that started at `psi0`; always a right turn of 90°.
pub fn turn_kinematics(tau: f64, turn_time: f64, psi0: f64) -> f64 {
    PI * (1.0 - (PI * tau / turn_time).cos()) / 4.0 + psi0
}

fn turn_rate(tau: f64, turn_time: f64) -> f64 {
    PI * PI / (4.0 * turn_time) * (PI * tau / turn_time).sin()
}

/// Offset of the right foot from the left at the start, North-Up-East.
pub fn right_foot_offset(psi0: f64, stride: f64) -> Vector3<f64> {
    let h = stride / 2.0;
    Vector3::new(h * (psi0.cos() + psi0.sin()), 0.0, h * (psi0.cos() - psi0.sin()))
}

/// Starting position of the right foot.
pub fn right_foot_init(
    psi0: f64,
    stride: f64,
    left0: &GeodeticPosition,
    earth: &EarthModel,
) -> Result<GeodeticPosition> {
    earth::tangent_offset_to_position(&right_foot_offset(psi0, stride), left0, earth)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Stance,
    Swing,
    Turn,
}

/// Truth for one foot at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootTruth {
    pub position: GeodeticPosition,
    pub p_e: EcefPosition,
    pub v_e: Vector3<f64>,
    /// Acceleration in ECEF. On the first sample after a swing, and on the
    /// first swing sample unless it starts the walk, this is the mean of the
    /// values either side of the jump.
    pub a_e: Vector3<f64>,
    /// Velocity in the local North-Up-East frame.
    pub v_n: Vector3<f64>,
    pub c_be: Matrix3<f64>,
    /// Attitude relative to the local North-Up-East frame.
    pub euler: Euler,
    /// Angular rate of the body relative to ECEF, body axes.
    pub body_rate: Vector3<f64>,
    pub phase: Phase,
    /// Foot at rest (zero velocity and zero rate).
    pub stance: bool,
}

impl FootTruth {
    /// Navigation state with the given biases.
    pub fn nav_state(&self, t: f64, b_g: Vector3<f64>, b_a: Vector3<f64>) -> NavState {
        NavState {
            c_be: self.c_be,
            v_e: self.v_e,
            p_e: self.p_e,
            b_g,
            b_a,
            t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub left: FootTruth,
    pub right: FootTruth,
}

impl TruthSample {
    pub fn foot(&self, foot: Foot) -> &FootTruth {
        match foot {
            Foot::Left => &self.left,
            Foot::Right => &self.right,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    phase: Phase,
    samples: usize,
}

fn segments(p: &GaitParams, foot: Foot) -> Vec<Segment> {
    let half = Segment {
        phase: Phase::Stance,
        samples: p.samples(0.5 * p.period()),
    };
    let mut out = Vec::new();
    if foot == Foot::Right {
        out.push(half);
    }
    for _ in 0..p.laps * 4 {
        for _ in 0..p.side_strides {
            out.push(Segment {
                phase: Phase::Swing,
                samples: p.samples(p.swing_time),
            });
            out.push(Segment {
                phase: Phase::Stance,
                samples: p.samples(p.stance_time),
            });
        }
        if p.turn_pause > 0.0 {
            out.push(Segment {
                phase: Phase::Stance,
                samples: p.samples(p.turn_pause),
            });
        }
        out.push(Segment {
            phase: Phase::Turn,
            samples: p.samples(p.turn_time),
        });
    }
    if foot == Foot::Left {
        out.push(half);
    }
    out
}

/// Kinematics in the tangent frame of the origin.
#[derive(Clone, Copy)]
struct LocalState {
    pos: Vector3<f64>,
    vel: Vector3<f64>,
    acc: Vector3<f64>,
    euler: Euler,
    rate: Vector3<f64>,
    phase: Phase,
    stance: bool,
}

fn foot_track(p: &GaitParams, foot: Foot) -> Result<Vec<LocalState>> {
    let segs = segments(p, foot);
    let total: usize = segs.iter().map(|s| s.samples).sum();
    let mut out = Vec::with_capacity(total + 1);
    let mut pos = match foot {
        Foot::Left => Vector3::zeros(),
        Foot::Right => right_foot_offset(p.heading0, p.stride),
    };
    let mut heading = p.heading0;
    let h = 1.0 / p.imu_rate;
    let mut end_acc = Vec::new();
    let at_rest = |pos, heading, phase| LocalState {
        pos,
        vel: Vector3::zeros(),
        acc: Vector3::zeros(),
        euler: Euler::new(0.0, heading, 0.0),
        rate: Vector3::zeros(),
        phase,
        stance: true,
    };
    for seg in &segs {
        let first = out.len();
        for k in 0..seg.samples {
            let tau = k as f64 * h;
            let state = match seg.phase {
                Phase::Stance => at_rest(pos, heading, Phase::Stance),
                Phase::Swing => {
                    let s = swing_kinematics(tau, p, heading)?;
                    LocalState {
                        pos: pos + s.delta_p,
                        vel: s.velocity,
                        acc: s.acceleration,
                        euler: Euler::new(0.0, heading, s.pitch),
                        rate: Vector3::new(0.0, 0.0, s.pitch_rate),
                        phase: Phase::Swing,
                        stance: k == 0,
                    }
                }
                Phase::Turn => LocalState {
                    euler: Euler::new(0.0, turn_kinematics(tau, p.turn_time, heading), 0.0),
                    rate: Vector3::new(0.0, -turn_rate(tau, p.turn_time), 0.0),
                    stance: k == 0,
                    ..at_rest(pos, heading, Phase::Turn)
                },
            };
            out.push(state);
        }
        if seg.phase == Phase::Swing {
            // The swing acceleration does not vanish at either end. Samples
            // on the jump carry the mean of the one-sided values so that the
            // sampled stream integrates to the right velocity change.
            if first > 0 {
                out[first].acc *= 0.5;
            }
            end_acc.push((
                out.len(),
                0.5 * swing_kinematics(p.swing_time, p, heading)?.acceleration,
            ));
        }
        match seg.phase {
            Phase::Swing => pos += swing_kinematics(p.swing_time, p, heading)?.delta_p,
            Phase::Turn => heading = turn_kinematics(p.turn_time, p.turn_time, heading),
            Phase::Stance => {}
        }
    }
    out.push(at_rest(pos, heading, Phase::Stance));
    for (i, acc) in end_acc {
        out[i].acc = acc;
    }
    Ok(out)
}

fn to_truth(s: &LocalState, origin_e: &EcefPosition, c0: &Matrix3<f64>, earth: &EarthModel) -> Result<FootTruth> {
    let p_e = origin_e + c0 * s.pos;
    let position = earth::ecef_to_geodetic(&p_e, earth)?;
    let c_en = earth::n_to_e_rotation(&position).transpose();
    let c_be = c0 * s.euler.to_c_bn();
    let v_e = c0 * s.vel;
    Ok(FootTruth {
        position,
        p_e,
        v_e,
        a_e: c0 * s.acc,
        v_n: c_en * v_e,
        c_be,
        euler: Euler::from_c_bn(&(c_en * c_be)),
        body_rate: s.rate,
        phase: s.phase,
        stance: s.stance,
    })
}

/// Truth stream for both feet at the IMU rate.
pub fn build_truth(p: &GaitParams, earth: &EarthModel) -> Result<Vec<TruthSample>> {
    p.validate()?;
    let left = foot_track(p, Foot::Left)?;
    let right = foot_track(p, Foot::Right)?;
    debug_assert_eq!(left.len(), right.len());
    let origin_e = earth::geodetic_to_ecef(&p.origin, earth);
    let c0 = earth::n_to_e_rotation(&p.origin);
    left.iter()
        .zip(&right)
        .enumerate()
        .map(|(i, (l, r))| {
            Ok(TruthSample {
                t: i as f64 / p.imu_rate,
                left: to_truth(l, &origin_e, &c0, earth)?,
                right: to_truth(r, &origin_e, &c0, earth)?,
            })
        })
        .collect()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    for x in v.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x = z * sigma;
    }
    v
}

/// IMU outputs of one foot. Noise per sample is density × √rate.
pub fn synthesize_imu(
    truth: &[TruthSample],
    p: &GaitParams,
    foot: Foot,
    earth: &EarthModel,
    seed: u64,
) -> Result<Vec<ImuSample>> {
    let mut rng = rng_for(seed, foot.index() as u64);
    let root_rate = p.imu_rate.sqrt();
    let (b_g, b_a) = (p.gyro_bias[foot.index()], p.accel_bias[foot.index()]);
    let w_ie = earth.earth_rate();
    truth
        .iter()
        .map(|s| {
            let f = s.foot(foot);
            let c_eb = f.c_be.transpose();
            let g = earth::gravity_at(&f.position, earth);
            let gyro = f.body_rate + c_eb * w_ie + b_g + gaussian3(&mut rng, p.gyro_noise * root_rate);
            let specific = f.a_e + w_ie.cross(&f.v_e) * 2.0 - g;
            let accel = c_eb * specific + b_a + gaussian3(&mut rng, p.accel_noise * root_rate);
            Ok(ImuSample {
                t: s.t,
                foot,
                gyro,
                accel,
            })
        })
        .collect()
}

/// Inter-foot ranges at `range_rate`, taken from the truth samples.
pub fn synthesize_range(truth: &[TruthSample], p: &GaitParams, seed: u64) -> Vec<RangeSample> {
    let mut rng = rng_for(seed, 2);
    let step = (p.imu_rate / p.range_rate).round() as usize;
    truth
        .iter()
        .step_by(step.max(1))
        .map(|s| {
            let dl = s.left.p_e + s.left.c_be * p.lever_l - s.right.p_e - s.right.c_be * p.lever_r;
            let z: f64 = rng.sample(StandardNormal);
            RangeSample {
                t: s.t,
                d: dl.norm() + z * p.range_noise,
                lever_l: p.lever_l,
                lever_r: p.lever_r,
            }
        })
        .collect()
}

/// Everything a run needs: truth, both IMU streams and ranges.
#[derive(Clone, Debug)]
pub struct SimulatedWalk {
    pub params: GaitParams,
    pub earth: EarthModel,
    pub truth: Vec<TruthSample>,
    pub imu_left: Vec<ImuSample>,
    pub imu_right: Vec<ImuSample>,
    pub range: Vec<RangeSample>,
}

impl SimulatedWalk {
    pub fn imu(&self, foot: Foot) -> &[ImuSample] {
        match foot {
            Foot::Left => &self.imu_left,
            Foot::Right => &self.imu_right,
        }
    }

    pub fn duration(&self) -> f64 {
        self.truth.last().map_or(0.0, |s| s.t)
    }
}

/// Square walk with `p.side_strides` strides per side and `p.laps` laps.
pub fn build_square_walk(p: &GaitParams, earth: &EarthModel, seed: u64) -> Result<SimulatedWalk> {
    earth.validate()?;
    let truth = build_truth(p, earth)?;
    Ok(SimulatedWalk {
        imu_left: synthesize_imu(&truth, p, Foot::Left, earth, seed)?,
        imu_right: synthesize_imu(&truth, p, Foot::Right, earth, seed)?,
        range: synthesize_range(&truth, p, seed),
        truth,
        params: p.clone(),
        earth: *earth,
    })
}

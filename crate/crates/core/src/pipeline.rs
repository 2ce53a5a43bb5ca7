//! End-to-end runs: simulate or replay, filter with each variant, summarize.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::earth::{self, wrap_pi, EarthModel, GeodeticPosition};
use crate::error::{Error, Result};
use crate::fusion::{
    error_dynamics, predict, update_ellipsoid_cloned, update_range, update_zupt, InitialSigmas, JointState,
    NoiseConfig, RangeSample,
};
use crate::observability::{eigen_spectrum, solve_batch, walk_rows, BatchSolution, ObservabilityBatch};
use crate::sim::{build_square_walk, right_foot_init, GaitParams, SimulatedWalk};
use crate::strapdown::{propagate, Euler, ImuIncrements, ImuSample, NavState};
use crate::zupt::{detect_stance, ellipsoid_trigger, DetectorConfig};
use crate::Foot;

/// Which measurements the filter uses besides the IMUs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "zupt")]
    Zupt,
    #[serde(rename = "zupt-rng")]
    ZuptRng,
    #[serde(rename = "zupt-rng-ec")]
    ZuptRngEc,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Zupt, Variant::ZuptRng, Variant::ZuptRngEc];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Zupt => "zupt",
            Variant::ZuptRng => "zupt-rng",
            Variant::ZuptRngEc => "zupt-rng-ec",
        }
    }

    pub fn from_tag(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.tag() == s)
    }

    pub fn uses_range(self) -> bool {
        self != Variant::Zupt
    }

    pub fn uses_ellipsoid(self) -> bool {
        self == Variant::ZuptRngEc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Replay,
    Observe,
}

/// Filter settings shared by every variant. Angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub noise: NoiseConfig,
    pub detector: DetectorConfig,
    pub initial_sigmas: InitialSigmas,
    /// Initial gyro-bias estimates, `[left, right]`, rad/s.
    pub gyro_bias: [Vector3<f64>; 2],
    /// Initial accelerometer-bias estimates, `[left, right]`, m/s².
    pub accel_bias: [Vector3<f64>; 2],
    /// Initial attitude errors added to the start attitude, `[left, right]`.
    pub attitude_error: [Euler; 2],
}

fn deg3(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x.to_radians(), y.to_radians(), z.to_radians())
}

impl Default for FilterConfig {
    fn default() -> Self {
        let d = f64::to_radians;
        FilterConfig {
            noise: NoiseConfig::default(),
            detector: DetectorConfig::default(),
            initial_sigmas: InitialSigmas::default(),
            gyro_bias: [deg3(1.7, 1.6, 1.3), deg3(2.5, 2.8, 1.0)],
            accel_bias: [Vector3::zeros(); 2],
            attitude_error: [
                Euler::new(d(2.0), d(5.0), d(2.0)),
                Euler::new(d(-2.0), d(-3.0), d(-4.0)),
            ],
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.detector.validate()?;
        let s = &self.initial_sigmas;
        for (name, v) in [
            ("attitude", s.attitude),
            ("velocity", s.velocity),
            ("position", s.position),
            ("gyro_bias", s.gyro_bias),
            ("accel_bias", s.accel_bias),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("initial sigma {name} must be positive, got {v}")));
            }
        }
        let finite = self
            .gyro_bias
            .iter()
            .chain(&self.accel_bias)
            .all(|v| v.iter().all(|x| x.is_finite()))
            && self
                .attitude_error
                .iter()
                .all(|e| [e.roll, e.yaw, e.pitch].iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::Config("initial bias and attitude errors must be finite".into()));
        }
        Ok(())
    }
}

/// Input and output locations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IoConfig {
    pub imu: Option<String>,
    pub range: Option<String>,
    pub out: Option<String>,
    /// Also write GeoJSON tracks.
    pub geojson: bool,
}

/// A full run description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub gait: GaitParams,
    pub earth: EarthModel,
    pub filter: FilterConfig,
    pub variants: Vec<Variant>,
    pub io: IoConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Simulate,
            gait: GaitParams::default(),
            earth: EarthModel::WGS84,
            filter: FilterConfig::default(),
            variants: vec![Variant::Zupt, Variant::ZuptRng],
            io: IoConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.gait.validate()?;
        self.earth.validate()?;
        self.filter.validate()?;
        if self.variants.is_empty() && self.mode != Mode::Observe {
            return Err(Error::Config("no filter variants selected".into()));
        }
        if self.mode == Mode::Replay && self.io.imu.is_none() {
            return Err(Error::Config("replay needs an IMU log".into()));
        }
        if self.mode == Mode::Replay && self.io.range.is_none() && self.variants.iter().any(|v| v.uses_range()) {
            return Err(Error::Config("replay with ranging needs a range log".into()));
        }
        Ok(())
    }
}

/// One filter output row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub foot: Foot,
    pub variant: Variant,
    pub position: GeodeticPosition,
    /// North-Up-East, m/s.
    pub velocity: Vector3<f64>,
    pub attitude: Euler,
    pub stance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged { t: f64, message: String },
}

/// Update counters for one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateCounts {
    pub zupt: usize,
    pub range: usize,
    pub range_skipped: usize,
    pub ellipsoid: usize,
    pub gated: usize,
}

#[derive(Clone, Debug)]
pub struct FilterRun {
    pub variant: Variant,
    pub trajectory: Vec<TrajectoryRecord>,
    /// Joint state at the last completed epoch.
    pub state: JointState,
    pub status: RunStatus,
    pub updates: UpdateCounts,
}

/// Start pose of both feet as laid out by the gait parameters.
pub fn start_states(gait: &GaitParams, earth: &EarthModel) -> Result<[NavState; 2]> {
    let level = Euler::new(0.0, gait.heading0, 0.0);
    let right = right_foot_init(gait.heading0, gait.stride, &gait.origin, earth)?;
    Ok([
        NavState::from_local(&gait.origin, &Vector3::zeros(), &level, earth, 0.0),
        NavState::from_local(&right, &Vector3::zeros(), &level, earth, 0.0),
    ])
}

fn initial_joint(gait: &GaitParams, earth: &EarthModel, f: &FilterConfig, t0: f64) -> Result<JointState> {
    let [l, r] = start_states(gait, earth)?;
    let mut feet = [l, r];
    let positions = [
        gait.origin,
        right_foot_init(gait.heading0, gait.stride, &gait.origin, earth)?,
    ];
    for (i, s) in feet.iter_mut().enumerate() {
        let e = f.attitude_error[i];
        let att = Euler::new(e.roll, gait.heading0 + e.yaw, e.pitch);
        *s = NavState::from_local(&positions[i], &Vector3::zeros(), &att, earth, t0);
        s.b_g = f.gyro_bias[i];
        s.b_a = f.accel_bias[i];
    }
    Ok(JointState::new(feet[0], feet[1], f.initial_sigmas.covariance()))
}

fn record(js: &JointState, foot: Foot, variant: Variant, stance: bool, earth: &EarthModel) -> Result<TrajectoryRecord> {
    let s = js.nav(foot);
    let (position, velocity, attitude) = s.local(earth)?;
    Ok(TrajectoryRecord {
        t: s.t,
        foot,
        variant,
        position,
        velocity,
        attitude,
        stance,
    })
}

fn check_streams(left: &[ImuSample], right: &[ImuSample]) -> Result<()> {
    if left.len() != right.len() {
        return Err(Error::Data {
            path: "imu".into(),
            message: format!("left has {} samples, right {}", left.len(), right.len()),
        });
    }
    if left.len() < 3 {
        return Err(Error::Data {
            path: "imu".into(),
            message: "need at least three samples per foot".into(),
        });
    }
    for (i, (l, r)) in left.iter().zip(right).enumerate() {
        if (l.t - r.t).abs() > 1e-9 {
            return Err(Error::Data {
                path: "imu".into(),
                message: format!("sample {i}: left t = {} but right t = {}", l.t, r.t),
            });
        }
    }
    Ok(())
}

/// Runs the joint filter over both feet's samples, one epoch per sample pair.
///
/// Stance flags come from the detector on the raw gyro stream. Each stance
/// epoch gets a zero-velocity update per foot. Ranges are applied at the
/// epoch whose end time they match. With the ellipsoid variant, the first
/// stance epoch of each stance is constrained to the ellipsoid through the
/// previous stance's last position when the height trigger holds. That
/// position is carried as a cloned state, so the constraint is relative.
///
/// A divergence stops the run and is reported in the status; the trajectory
/// up to that point is kept.
pub fn run_filter(
    left: &[ImuSample],
    right: &[ImuSample],
    ranges: &[RangeSample],
    gait: &GaitParams,
    earth: &EarthModel,
    filter: &FilterConfig,
    variant: Variant,
) -> Result<FilterRun> {
    check_streams(left, right)?;
    filter.validate()?;
    let streams = [left, right];
    let flags = [
        detect_stance(left, &filter.detector)?,
        detect_stance(right, &filter.detector)?,
    ];
    let mut js = initial_joint(gait, earth, filter, left[0].t)?;
    let epochs = (left.len() - 1) / 2;
    let mut trajectory = Vec::with_capacity(2 * (epochs + 1));
    for foot in Foot::BOTH {
        trajectory.push(record(&js, foot, variant, flags[foot.index()][0], earth)?);
    }
    let mut updates = UpdateCounts::default();
    let mut in_stance = [false; 2];
    let half_sample = 0.25 * (left[1].t - left[0].t).abs();
    let mut next_range = 0;

    let mut status = RunStatus::Completed;
    for k in 0..epochs {
        let i = 2 * k;
        let t_end = left[i + 2].t;
        let mut step = |js: &mut JointState, updates: &mut UpdateCounts| -> Result<()> {
            let mut dyn_ = Vec::with_capacity(2);
            for foot in Foot::BOTH {
                let s = streams[foot.index()];
                let incr = ImuIncrements::from_samples(&s[i], &s[i + 1], &s[i + 2])?;
                let nav = *js.nav(foot);
                let corrected = incr.bias_corrected(&nav.b_g, &nav.b_a);
                let f_b = (corrected.dv1 + corrected.dv2) / incr.dt;
                dyn_.push((error_dynamics(&nav, &f_b, earth), incr.dt));
                *js.nav_mut(foot) = propagate(&nav, &incr, earth)?;
            }
            predict(js, &dyn_[0].0, &dyn_[1].0, dyn_[0].1, &filter.noise)?;

            for foot in Foot::BOTH {
                let fi = foot.index();
                let stance = flags[fi][i + 2];
                if stance {
                    tally(updates, update_zupt(js, foot, &filter.noise)?, |u| &mut u.zupt);
                    if variant.uses_ellipsoid() {
                        if let (false, Some(a)) = (in_stance[fi], js.clones.p_e[fi]) {
                            let before = earth::ecef_to_geodetic(&a, earth)?.height;
                            let here = js.nav(foot).geodetic(earth)?.height;
                            if ellipsoid_trigger(before, here, &filter.detector) {
                                let out = update_ellipsoid_cloned(js, foot, earth, &filter.noise)?;
                                tally(updates, out, |u| &mut u.ellipsoid);
                            }
                        }
                        js.clone_position(foot);
                    }
                }
                in_stance[fi] = stance;
            }

            while next_range < ranges.len() && ranges[next_range].t <= t_end + half_sample {
                let r = &ranges[next_range];
                next_range += 1;
                if !variant.uses_range() || (r.t - t_end).abs() > half_sample {
                    continue;
                }
                let out = update_range(js, r, &filter.noise)?;
                if out == crate::fusion::UpdateOutcome::Skipped {
                    updates.range_skipped += 1;
                }
                tally(updates, out, |u| &mut u.range);
            }
            Ok(())
        };
        let mut trial = js.clone();
        match step(&mut trial, &mut updates) {
            Ok(()) => js = trial,
            Err(e @ (Error::Divergence(_) | Error::Propagation(_))) => {
                status = RunStatus::Diverged {
                    t: t_end,
                    message: e.to_string(),
                };
                break;
            }
            Err(e) => return Err(e),
        }
        for foot in Foot::BOTH {
            trajectory.push(record(&js, foot, variant, flags[foot.index()][i + 2], earth)?);
        }
    }
    Ok(FilterRun {
        variant,
        trajectory,
        state: js,
        status,
        updates,
    })
}

fn tally(u: &mut UpdateCounts, out: crate::fusion::UpdateOutcome, field: impl Fn(&mut UpdateCounts) -> &mut usize) {
    use crate::fusion::UpdateOutcome::*;
    match out {
        Applied { .. } => *field(u) += 1,
        Gated { .. } => u.gated += 1,
        Skipped => {}
    }
}

/// Start-end errors of one foot. Horizontal quantities are North and East in
/// the tangent frame of the configured origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootSummary {
    /// Estimated end position, (North, East), m.
    pub end_position: [f64; 2],
    pub position_error: f64,
    pub height_error: f64,
    /// Estimated minus true end yaw, rad, wrapped.
    pub yaw_error: f64,
    /// Estimated minus true gyro bias on the vertical body axis, rad/s.
    pub yaw_bias_error: f64,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub left: FootSummary,
    pub right: FootSummary,
    /// Error of the estimated left-minus-right horizontal offset, m.
    pub relative_position_error: f64,
    /// Error of the estimated left-minus-right yaw, rad.
    pub relative_yaw_error: f64,
    pub relative_yaw_bias_error: f64,
    pub end_time: f64,
    pub status: RunStatus,
    pub updates: UpdateCounts,
}

impl VariantSummary {
    pub fn foot(&self, foot: Foot) -> &FootSummary {
        match foot {
            Foot::Left => &self.left,
            Foot::Right => &self.right,
        }
    }
}

/// Start-end summary. A square walk ends where it starts, so the reference
/// is the configured start pose; the true biases come from the gait.
pub fn summarize(run: &FilterRun, gait: &GaitParams, earth: &EarthModel) -> Result<VariantSummary> {
    let starts = start_states(gait, earth)?;
    let origin_e = earth::geodetic_to_ecef(&gait.origin, earth);
    let c_en0 = earth::n_to_e_rotation(&gait.origin).transpose();
    let mut feet = Vec::with_capacity(2);
    let mut horiz = Vec::with_capacity(2);
    let mut yaws = Vec::with_capacity(2);
    for foot in Foot::BOTH {
        let est = run.state.nav(foot);
        let truth = &starts[foot.index()];
        let d_est = c_en0 * (est.p_e - origin_e);
        let d_true = c_en0 * (truth.p_e - origin_e);
        let (g_est, _, e_est) = est.local(earth)?;
        let (g_true, _, e_true) = truth.local(earth)?;
        let yaw_error = wrap_pi(e_est.yaw - e_true.yaw);
        let yaw_bias_error = est.b_g.y - gait.gyro_bias[foot.index()].y;
        horiz.push((
            Vector3::new(d_est.x, 0.0, d_est.z),
            Vector3::new(d_true.x, 0.0, d_true.z),
        ));
        yaws.push((yaw_error, yaw_bias_error));
        feet.push(FootSummary {
            end_position: [d_est.x, d_est.z],
            position_error: ((d_est.x - d_true.x).powi(2) + (d_est.z - d_true.z).powi(2)).sqrt(),
            height_error: g_est.height - g_true.height,
            yaw_error,
            yaw_bias_error,
            gyro_bias: est.b_g,
            accel_bias: est.b_a,
        });
    }
    let rel_est = horiz[0].0 - horiz[1].0;
    let rel_true = horiz[0].1 - horiz[1].1;
    let right = feet.pop().ok_or_else(|| Error::InvalidInput("missing foot".into()))?;
    let left = feet.pop().ok_or_else(|| Error::InvalidInput("missing foot".into()))?;
    Ok(VariantSummary {
        variant: run.variant,
        left,
        right,
        relative_position_error: (rel_est - rel_true).norm(),
        relative_yaw_error: wrap_pi(yaws[0].0 - yaws[1].0).abs(),
        relative_yaw_bias_error: (yaws[0].1 - yaws[1].1).abs(),
        end_time: run.state.left.t,
        status: run.status.clone(),
        updates: run.updates,
    })
}

/// Filter runs over one data set.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub runs: Vec<FilterRun>,
    pub summaries: Vec<VariantSummary>,
}

impl RunOutput {
    pub fn diverged(&self) -> bool {
        self.runs.iter().any(|r| r.status != RunStatus::Completed)
    }

    pub fn summary(&self, v: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == v)
    }
}

/// Runs every configured variant over the given streams.
pub fn run_variants(
    left: &[ImuSample],
    right: &[ImuSample],
    ranges: &[RangeSample],
    cfg: &RunConfig,
) -> Result<RunOutput> {
    let mut runs = Vec::with_capacity(cfg.variants.len());
    let mut summaries = Vec::with_capacity(cfg.variants.len());
    for &v in &cfg.variants {
        let run = run_filter(left, right, ranges, &cfg.gait, &cfg.earth, &cfg.filter, v)?;
        summaries.push(summarize(&run, &cfg.gait, &cfg.earth)?);
        runs.push(run);
    }
    Ok(RunOutput { runs, summaries })
}

/// Simulates the configured walk and filters it.
pub fn simulate(cfg: &RunConfig) -> Result<(SimulatedWalk, RunOutput)> {
    cfg.validate()?;
    let walk = build_square_walk(&cfg.gait, &cfg.earth, cfg.seed)?;
    let out = run_variants(&walk.imu_left, &walk.imu_right, &walk.range, cfg)?;
    Ok((walk, out))
}

/// Spectrum and batch solution after each row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservabilityStep {
    pub t_end: f64,
    /// Eigenvalues of `KᵀK`, ascending.
    pub eigenvalues: Vec<f64>,
    /// `[b_a; b_g; x_θ]` when the batch has full rank.
    pub states: Option<Vec<f64>>,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservabilityReport {
    pub foot: Foot,
    pub steps: Vec<ObservabilityStep>,
    pub truth: Vec<f64>,
}

/// Builds rest-to-rest rows for one foot of the configured walk on a
/// non-rotating Earth, and solves the batch after every row.
pub fn observe(cfg: &RunConfig, foot: Foot) -> Result<ObservabilityReport> {
    cfg.gait.validate()?;
    let earth = EarthModel {
        rotation_rate: 0.0,
        ..cfg.earth
    };
    let walk = build_square_walk(&cfg.gait, &earth, cfg.seed)?;
    let rows = walk_rows(&walk, foot)?;
    let mut steps = Vec::with_capacity(rows.len());
    for n in 3..=rows.len() {
        let batch = ObservabilityBatch::new(rows[..n].to_vec());
        let (states, rank) = match solve_batch(&batch)? {
            BatchSolution::Solved { states, .. } => (Some(states.iter().copied().collect()), 9),
            BatchSolution::RankDeficient { rank, .. } => (None, rank),
        };
        steps.push(ObservabilityStep {
            t_end: rows[n - 1].t_end,
            eigenvalues: eigen_spectrum(&batch),
            states,
            rank,
        });
    }
    let e = walk.truth[0].foot(foot).euler;
    let up = crate::observability::up_in_body(e.roll, e.pitch);
    let fi = foot.index();
    let truth = cfg.gait.accel_bias[fi]
        .iter()
        .chain(cfg.gait.gyro_bias[fi].iter())
        .chain(up.iter())
        .copied()
        .collect();
    Ok(ObservabilityReport { foot, steps, truth })
}

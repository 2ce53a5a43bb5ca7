//! Batch constraints on the initial biases and level attitude.
//!
//! Between two instants at which a foot is at rest, the integrated specific
//! force has to cancel gravity. With the attitude chain built from raw gyro
//! increments this gives, to first order in the biases,
//!
//! `α = χ·b_a + γ·b_g + η·x_θ`
//!
//! where `x_θ` is the up direction resolved in the body frame at the start of
//! the walk. Stacking rows gives `K·X = y` with `X = [b_a; b_g; x_θ]`. Earth
//! rotation is ignored throughout.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{Phase, SimulatedWalk};
use crate::so3::{exp_map, orthonormalize, right_jacobian, skew};
use crate::strapdown::{two_sample_delta, ImuIncrements, ImuSample, GAUSS_4};
use crate::Foot;

/// Eigenvalues of `KᵀK` below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// `[b_a; b_g; x_θ]`.
pub type InitialStates = SVector<f64, 9>;
pub type RowBlock = SMatrix<f64, 3, 9>;

pub fn pack_states(b_a: &Vector3<f64>, b_g: &Vector3<f64>, x_theta: &Vector3<f64>) -> InitialStates {
    let mut x = InitialStates::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(b_a);
    x.fixed_rows_mut::<3>(3).copy_from(b_g);
    x.fixed_rows_mut::<3>(6).copy_from(x_theta);
    x
}

/// Up direction in the body frame for the given roll and pitch.
pub fn up_in_body(roll: f64, pitch: f64) -> Vector3<f64> {
    Vector3::new(pitch.sin(), pitch.cos() * roll.cos(), -pitch.cos() * roll.sin())
}

/// Roll and pitch from an (unnormalized) up-in-body vector.
pub fn level_angles(x_theta: &Vector3<f64>) -> Result<(f64, f64)> {
    let n = x_theta.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidInput(format!("cannot take level angles of {x_theta:?}")));
    }
    let u = x_theta / n;
    Ok(((-u.z).atan2(u.y), u.x.clamp(-1.0, 1.0).asin()))
}

/// One rest-to-rest constraint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintRow {
    pub alpha: Vector3<f64>,
    pub chi: Matrix3<f64>,
    pub gamma: Matrix3<f64>,
    /// `−g·(t_end − t_start)·I`.
    pub eta: Matrix3<f64>,
    /// Number of two-sample increments in the interval.
    pub increments: usize,
    pub t_start: f64,
    pub t_end: f64,
}

impl ConstraintRow {
    pub fn block(&self) -> RowBlock {
        let mut k = RowBlock::zeros();
        k.fixed_columns_mut::<3>(0).copy_from(&self.chi);
        k.fixed_columns_mut::<3>(3).copy_from(&self.gamma);
        k.fixed_columns_mut::<3>(6).copy_from(&self.eta);
        k
    }

    /// `α − K·X`.
    pub fn residual(&self, x: &InitialStates) -> Vector3<f64> {
        self.alpha - self.block() * x
    }
}

/// Accumulates rows over one continuous stream of increments.
///
/// The attitude chain and the bias sensitivity of the chain run from the
/// first increment pushed, so every row constrains the same initial states.
#[derive(Clone, Debug)]
pub struct ConstraintBuilder {
    gravity: f64,
    chain: Matrix3<f64>,
    /// `Σ C̃·J_r(Δθ)·T` over all increments so far.
    sens: Matrix3<f64>,
    t: f64,
    row_start: f64,
    count: usize,
    alpha: Vector3<f64>,
    chi: Matrix3<f64>,
    gamma: Matrix3<f64>,
}

impl ConstraintBuilder {
    pub fn new(gravity: f64, t_start: f64) -> Self {
        ConstraintBuilder {
            gravity,
            chain: Matrix3::identity(),
            sens: Matrix3::zeros(),
            t: t_start,
            row_start: t_start,
            count: 0,
            alpha: Vector3::zeros(),
            chi: Matrix3::zeros(),
            gamma: Matrix3::zeros(),
        }
    }

    pub fn push(&mut self, incr: &ImuIncrements) {
        let t = incr.dt;
        let dtheta = incr.dtheta1 + incr.dtheta2;
        let w = increment_integrals(incr);
        let c = self.chain;
        let cdv = c * w.dv;
        self.alpha -= cdv;
        self.chi -= c * w.rotation;
        self.gamma += skew(&cdv) * self.sens + c * w.force_sensitivity;
        self.chain = orthonormalize(&(c * exp_map(&dtheta)));
        self.sens += self.chain * right_jacobian(&dtheta) * t;
        self.t += t;
        self.count += 1;
    }

    pub fn pending(&self) -> usize {
        self.count
    }

    /// Closes the current row at the end of the last pushed increment.
    pub fn finish_row(&mut self) -> Result<ConstraintRow> {
        if self.count == 0 {
            return Err(Error::Usage("constraint row over an empty interval".into()));
        }
        let row = ConstraintRow {
            alpha: self.alpha,
            chi: self.chi,
            gamma: self.gamma,
            eta: Matrix3::identity() * (-self.gravity * (self.t - self.row_start)),
            increments: self.count,
            t_start: self.row_start,
            t_end: self.t,
        };
        self.row_start = self.t;
        self.count = 0;
        self.alpha = Vector3::zeros();
        self.chi = Matrix3::zeros();
        self.gamma = Matrix3::zeros();
        Ok(row)
    }
}

/// Within-increment integrals, with the rotation from the increment start
/// `R(τ)` left untruncated.
struct IncrementIntegrals {
    /// `∫R·f dτ`.
    dv: Vector3<f64>,
    /// `∫R dτ`.
    rotation: Matrix3<f64>,
    /// `∫R·(f×)·J_r(θ(τ))·τ dτ`.
    force_sensitivity: Matrix3<f64>,
}

// Rate and force linear in time, matched to the half increments, as in the
// strapdown velocity update.
fn increment_integrals(incr: &ImuIncrements) -> IncrementIntegrals {
    let mut out = IncrementIntegrals {
        dv: Vector3::zeros(),
        rotation: Matrix3::zeros(),
        force_sensitivity: Matrix3::zeros(),
    };
    let h = 0.5 * incr.dt;
    if h <= 0.0 {
        return out;
    }
    let (w1, w2) = (incr.dtheta1 / h, incr.dtheta2 / h);
    let (f1, f2) = (incr.dv1 / h, incr.dv2 / h);
    let (w_slope, f_slope) = ((w2 - w1) / h, (f2 - f1) / h);
    let w0 = w1 - w_slope * (0.5 * h);
    let f0 = f1 - f_slope * (0.5 * h);
    for start in [0.0, h] {
        for &(x, weight) in &GAUSS_4 {
            let tau = start + 0.5 * h * (x + 1.0);
            let wt = 0.5 * h * weight;
            let angle = w0 * tau + w_slope * (0.5 * tau * tau);
            let r = exp_map(&angle);
            let f = f0 + f_slope * tau;
            out.dv += r * f * wt;
            out.rotation += r * wt;
            out.force_sensitivity += r * skew(&f) * right_jacobian(&angle) * (tau * wt);
        }
    }
    out
}

/// A single row from raw increments, with the chain starting at identity.
pub fn accumulate_row(incs: &[ImuIncrements], gravity: f64) -> Result<ConstraintRow> {
    let mut b = ConstraintBuilder::new(gravity, 0.0);
    incs.iter().for_each(|i| b.push(i));
    b.finish_row()
}

/// First-order integral of bias-corrected specific force over one interval,
/// resolved in the body frame at the interval start:
///
/// `Δv − T[I + (5Δθ₁+Δθ₂)×/6]·b_a + [T/6·(Δv₁+5Δv₂) − T²/2·b_a]×b_g`.
pub fn interval_integral(incr: &ImuIncrements, b_a: &Vector3<f64>, b_g: &Vector3<f64>) -> Vector3<f64> {
    let t = incr.dt;
    let (_, dv) = two_sample_delta(incr);
    dv - (Matrix3::identity() + skew(&(incr.dtheta1 * 5.0 + incr.dtheta2)) / 6.0) * b_a * t
        + ((incr.dv1 + incr.dv2 * 5.0) * (t / 6.0) - b_a * (0.5 * t * t)).cross(b_g)
}

/// Rows over non-overlapping rest-to-rest intervals.
///
/// Samples are taken in triples `(2k, 2k+1, 2k+2)`; an increment counts as
/// at rest when `rest[2k+2]` holds. A row closes at the last at-rest
/// increment of every rest run. The first sample has to be at rest; data
/// after the final rest run is dropped.
pub fn constraint_rows(samples: &[ImuSample], rest: &[bool], gravity: f64) -> Result<Vec<ConstraintRow>> {
    if samples.len() != rest.len() {
        return Err(Error::InvalidInput(format!(
            "{} samples but {} rest flags",
            samples.len(),
            rest.len()
        )));
    }
    if samples.len() < 3 {
        return Err(Error::Usage("need at least three samples".into()));
    }
    if !rest[0] {
        return Err(Error::InvalidInput("the first sample is not at rest".into()));
    }
    let epochs = (samples.len() - 1) / 2;
    let mut builder = ConstraintBuilder::new(gravity, samples[0].t);
    let mut rows = Vec::new();
    for k in 0..epochs {
        let i = 2 * k;
        builder.push(&ImuIncrements::from_samples(
            &samples[i],
            &samples[i + 1],
            &samples[i + 2],
        )?);
        let next_rest = k + 1 < epochs && rest[i + 4];
        if rest[i + 2] && !next_rest {
            rows.push(builder.finish_row()?);
        }
    }
    Ok(rows)
}

/// Rows for one foot of a simulated walk, using the normal gravity at the
/// start point.
///
/// Only stance-phase samples count as rest. The first swing sample is also at
/// zero velocity, but it carries half the acceleration jump, and a row
/// closing there would keep half of that sample's contribution.
pub fn walk_rows(walk: &SimulatedWalk, foot: Foot) -> Result<Vec<ConstraintRow>> {
    // the walk starts from rest with no jump before the first sample
    let rest: Vec<bool> = walk
        .truth
        .iter()
        .enumerate()
        .map(|(i, s)| i == 0 || s.foot(foot).phase == Phase::Stance)
        .collect();
    let start = walk
        .truth
        .first()
        .ok_or_else(|| Error::InvalidInput("empty walk".into()))?
        .foot(foot)
        .position;
    let g = walk.earth.normal_gravity(start.latitude, start.height);
    constraint_rows(walk.imu(foot), &rest, g)
}

/// Stacked rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ObservabilityBatch {
    pub rows: Vec<ConstraintRow>,
}

impl ObservabilityBatch {
    pub fn new(rows: Vec<ConstraintRow>) -> Self {
        ObservabilityBatch { rows }
    }

    /// Rows that end no later than `t`.
    pub fn until(&self, t: f64) -> Self {
        ObservabilityBatch {
            rows: self.rows.iter().filter(|r| r.t_end <= t).cloned().collect(),
        }
    }

    pub fn k_matrix(&self) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(3 * self.rows.len(), 9);
        for (i, r) in self.rows.iter().enumerate() {
            k.fixed_view_mut::<3, 9>(3 * i, 0).copy_from(&r.block());
        }
        k
    }

    pub fn y(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.rows.len(),
            self.rows.iter().flat_map(|r| r.alpha.iter().copied()),
        )
    }

    /// `KᵀK`.
    pub fn gram(&self) -> SMatrix<f64, 9, 9> {
        self.rows.iter().fold(SMatrix::zeros(), |acc, r| {
            let b = r.block();
            acc + b.transpose() * b
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatchSolution {
    Solved {
        states: InitialStates,
        /// RMS of `y − K·X` over all equations.
        residual: f64,
    },
    RankDeficient {
        rank: usize,
        /// Orthonormal columns spanning the unobservable directions.
        null_space: DMatrix<f64>,
    },
}

/// Least-squares `X` from the stacked rows via SVD.
pub fn solve_batch(batch: &ObservabilityBatch) -> Result<BatchSolution> {
    if batch.rows.len() < 3 {
        return Err(Error::Usage(format!(
            "batch solve needs at least 3 rows, got {}",
            batch.rows.len()
        )));
    }
    let k = batch.k_matrix();
    let y = batch.y();
    if k.iter().chain(y.iter()).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite constraint rows".into()));
    }
    let svd = k.clone().svd(true, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("SVD did not converge".into()))?;
    let s_max = svd.singular_values.max();
    let tol = RANK_TOLERANCE.sqrt() * s_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < 9 {
        let null: Vec<_> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= tol)
            .map(|(i, _)| v_t.row(i).transpose())
            .collect();
        return Ok(BatchSolution::RankDeficient {
            rank,
            null_space: DMatrix::from_columns(&null),
        });
    }
    let x = svd
        .solve(&y, tol)
        .map_err(|e| Error::InvalidInput(format!("batch solve failed: {e}")))?;
    let r = &y - &k * &x;
    Ok(BatchSolution::Solved {
        states: InitialStates::from_iterator(x.iter().copied()),
        residual: (r.norm_squared() / r.len() as f64).sqrt(),
    })
}

/// Eigenvalues of `KᵀK`, ascending.
pub fn eigen_spectrum(batch: &ObservabilityBatch) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(batch.gram()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth::EarthModel;
    use crate::sim::{build_square_walk, GaitParams, Phase};
    use crate::strapdown::Euler;
    use proptest::prelude::*;

    fn incr_from_rates(w: impl Fn(f64) -> Vector3<f64>, f: impl Fn(f64) -> Vector3<f64>, t: f64) -> ImuIncrements {
        // exact half-interval integrals by fine midpoint sums
        let n = 2000;
        let integ = |g: &dyn Fn(f64) -> Vector3<f64>, a: f64, b: f64| {
            let h = (b - a) / n as f64;
            (0..n).fold(Vector3::zeros(), |acc, i| acc + g(a + (i as f64 + 0.5) * h) * h)
        };
        ImuIncrements {
            dtheta1: integ(&w, 0.0, 0.5 * t),
            dtheta2: integ(&w, 0.5 * t, t),
            dv1: integ(&f, 0.0, 0.5 * t),
            dv2: integ(&f, 0.5 * t, t),
            dt: t,
        }
    }

    /// `∫(I + (∫(ω − b_g))×)(f − b_a)dt` by 1000 midpoint substeps, with the
    /// inner angle integrated exactly from the analytic rate.
    fn quadrature(
        theta: impl Fn(f64) -> Vector3<f64>,
        f: impl Fn(f64) -> Vector3<f64>,
        b_a: &Vector3<f64>,
        b_g: &Vector3<f64>,
        t: f64,
    ) -> Vector3<f64> {
        let n = 1000;
        let h = t / n as f64;
        (0..n).fold(Vector3::zeros(), |acc, i| {
            let s = (i as f64 + 0.5) * h;
            let ang = theta(s) - b_g * s;
            acc + (f(s) - b_a + ang.cross(&(f(s) - b_a))) * h
        })
    }

    #[test]
    fn interval_integral_matches_quadrature_at_third_order() {
        let w0 = Vector3::new(1.2, -0.7, 2.1);
        let w1 = Vector3::new(3.0, 1.5, -2.0);
        let omega = move |s: f64| w0 + w1 * (5.0 * s).sin();
        let theta = move |s: f64| w0 * s + w1 * ((1.0 - (5.0 * s).cos()) / 5.0);
        let f = |s: f64| Vector3::new(9.0 * (3.0 * s).cos(), 9.8 + 4.0 * s, -2.0 * (4.0 * s).sin());
        let b_a = Vector3::new(0.2, 0.1, -0.2);
        let b_g = Vector3::new(0.01, -0.02, 0.015);
        let err = |t: f64| {
            let inc = incr_from_rates(omega, f, t);
            (interval_integral(&inc, &b_a, &b_g) - quadrature(theta, f, &b_a, &b_g, t)).norm()
        };
        let (e1, e2) = (err(0.04), err(0.02));
        assert!(e1 > 0.0 && e1 / e2 >= 6.0, "e(T)={e1:e} e(T/2)={e2:e}");
    }

    #[test]
    fn zero_motion_row() {
        let m = 10;
        let t = 0.02;
        let inc = ImuIncrements {
            dtheta1: Vector3::zeros(),
            dtheta2: Vector3::zeros(),
            dv1: Vector3::zeros(),
            dv2: Vector3::zeros(),
            dt: t,
        };
        let row = accumulate_row(&vec![inc; m], 9.8).unwrap();
        assert_eq!(row.alpha, Vector3::zeros());
        assert!((row.chi + Matrix3::identity() * (m as f64 * t)).norm() < 1e-14);
        assert_eq!(row.gamma, Matrix3::zeros());
        assert!((row.eta + Matrix3::identity() * (9.8 * m as f64 * t)).norm() < 1e-12);
        assert!(matches!(accumulate_row(&[], 9.8), Err(Error::Usage(_))));
    }

    #[test]
    fn level_angle_round_trip() {
        for &(roll, pitch) in &[(0.0, 0.0), (0.1, -0.2), (-0.4, 0.3), (1.0, 1.2)] {
            let u = up_in_body(roll, pitch);
            // the body-frame up vector from the attitude matrix
            let c_bn = Euler::new(roll, 0.7, pitch).to_c_bn();
            assert!((c_bn.transpose() * Vector3::y() - u).norm() < 1e-14);
            let (r, p) = level_angles(&(u * 3.0)).unwrap();
            assert!((r - roll).abs() < 1e-14 && (p - pitch).abs() < 1e-14);
        }
        assert_eq!(up_in_body(0.0, 0.0), Vector3::new(0.0, 1.0, 0.0));
        assert!(level_angles(&Vector3::zeros()).is_err());
    }

    #[test]
    fn chain_factorization_error_is_second_order() {
        // random-ish smooth motion; compare the bias-corrected chain with the
        // first-order correction of the raw chain
        let incs: Vec<ImuIncrements> = (0..200)
            .map(|k| {
                let s = k as f64 * 0.02;
                let w = Vector3::new((1.3 * s).sin(), 0.5 * (0.7 * s).cos(), 2.0 * (2.1 * s).sin());
                ImuIncrements {
                    dtheta1: w * 0.01,
                    dtheta2: w * 0.01 + Vector3::new(0.001, -0.002, 0.0015),
                    dv1: Vector3::zeros(),
                    dv2: Vector3::zeros(),
                    dt: 0.02,
                }
            })
            .collect();
        let err = |b: Vector3<f64>| {
            let (mut raw, mut truth, mut sens) = (Matrix3::identity(), Matrix3::identity(), Matrix3::zeros());
            for i in &incs {
                let d = i.dtheta1 + i.dtheta2;
                raw *= exp_map(&d);
                truth *= exp_map(&(d - b * i.dt));
                sens += raw * right_jacobian(&d) * i.dt;
            }
            let approx = (Matrix3::identity() - skew(&(sens * b))) * raw;
            (truth - approx).norm()
        };
        let b = Vector3::new(0.02, -0.01, 0.03);
        let (e1, e2) = (err(b), err(b * 0.5));
        assert!((e1 / e2 - 4.0).abs() < 0.2, "{e1:e} {e2:e}");
    }

    fn square(scale: f64) -> (SimulatedWalk, InitialStates) {
        let mut p = GaitParams::short_square();
        p.gyro_bias = p.gyro_bias.map(|b| b * scale);
        p.accel_bias = p.accel_bias.map(|b| b * scale);
        let walk = build_square_walk(&p, &EarthModel::non_rotating(), 0).unwrap();
        let e = walk.truth[0].left.euler;
        let x = pack_states(&p.accel_bias[0], &p.gyro_bias[0], &up_in_body(e.roll, e.pitch));
        (walk, x)
    }

    /// Start times of the left foot's turns.
    fn turn_starts(walk: &SimulatedWalk) -> Vec<f64> {
        walk.truth
            .windows(2)
            .filter(|w| w[0].left.phase != Phase::Turn && w[1].left.phase == Phase::Turn)
            .map(|w| w[1].t)
            .collect()
    }

    #[test]
    fn rows_are_first_order_in_the_biases() {
        let rel = |scale: f64| {
            let (walk, x) = square(scale);
            let rows = walk_rows(&walk, Foot::Left).unwrap();
            rows.iter()
                .map(|r| r.residual(&x).norm() / r.alpha.norm())
                .fold(0.0, f64::max)
        };
        let (r1, r2) = (rel(1.0), rel(0.1));
        assert!(r1 < 1e-2, "{r1:e}");
        assert!(r1 / r2 >= 10.0, "{r1:e} {r2:e}");
    }

    #[test]
    fn rows_tile_the_walk() {
        let (walk, _) = square(1.0);
        let rows = walk_rows(&walk, Foot::Left).unwrap();
        assert!(rows.len() > 10);
        assert_eq!(rows[0].t_start, 0.0);
        for w in rows.windows(2) {
            assert!((w[0].t_end - w[1].t_start).abs() < 1e-12);
        }
        for r in &rows {
            assert!((r.t_end - r.t_start - r.increments as f64 * 0.02).abs() < 1e-9);
        }
    }

    #[test]
    fn straight_walk_is_rank_deficient() {
        let (walk, _) = square(1.0);
        let batch = ObservabilityBatch::new(walk_rows(&walk, Foot::Left).unwrap());
        let before = batch.until(turn_starts(&walk)[0]);
        assert!(before.rows.len() >= 3);
        let ev = eigen_spectrum(&before);
        assert!(ev[0] < 1e-8 * ev[8], "{ev:?}");
        match solve_batch(&before).unwrap() {
            BatchSolution::RankDeficient { rank, null_space } => {
                assert!(rank < 9 && null_space.ncols() == 9 - rank);
                assert!((before.k_matrix() * null_space).norm() < 1e-3 * before.k_matrix().norm());
            }
            s => panic!("expected rank deficiency, got {s:?}"),
        }
    }

    #[test]
    fn turn_makes_the_batch_solvable() {
        let (walk, x) = square(1.0);
        let batch = ObservabilityBatch::new(walk_rows(&walk, Foot::Left).unwrap());
        // every row up to the second turn
        let after = batch.until(turn_starts(&walk)[1]);
        let ev = eigen_spectrum(&after);
        assert!(ev[0] > 0.0 && ev[0] / ev[8] < 1e-3, "{ev:?}");
        let BatchSolution::Solved { states, .. } = solve_batch(&after).unwrap() else {
            panic!("rank deficient after the turn");
        };
        for i in [0, 1, 3, 5] {
            assert!(
                (states[i] - x[i]).abs() < 0.1 * x[i].abs(),
                "state {i}: {} vs {}",
                states[i],
                x[i]
            );
        }
        let (roll, pitch) = level_angles(&states.fixed_rows::<3>(6).into_owned()).unwrap();
        assert!(roll.abs() < 0.5f64.to_radians() && pitch.abs() < 0.5f64.to_radians());
    }

    #[test]
    fn zero_bias_level_start_recovers_up() {
        let (walk, _) = square(0.0);
        let batch = ObservabilityBatch::new(walk_rows(&walk, Foot::Left).unwrap());
        let BatchSolution::Solved { states, .. } = solve_batch(&batch).unwrap() else {
            panic!("rank deficient");
        };
        assert!((states.fixed_rows::<3>(6) - Vector3::y()).norm() < 1e-3, "{states}");
    }

    #[test]
    fn too_few_rows_is_usage_error() {
        assert!(matches!(
            solve_batch(&ObservabilityBatch::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn rank_deficient_batch_reports_null_space() {
        // rows without any rotation: yaw-free and gyro-blind
        let inc = ImuIncrements {
            dtheta1: Vector3::zeros(),
            dtheta2: Vector3::zeros(),
            dv1: Vector3::new(0.0, 0.098, 0.0),
            dv2: Vector3::new(0.0, 0.098, 0.0),
            dt: 0.02,
        };
        let rows = (0..4).map(|_| accumulate_row(&[inc; 10], 9.8).unwrap()).collect();
        match solve_batch(&ObservabilityBatch::new(rows)).unwrap() {
            BatchSolution::RankDeficient { rank, null_space } => {
                assert!(rank < 9);
                assert_eq!(null_space.ncols(), 9 - rank);
                let k = ObservabilityBatch::new(vec![accumulate_row(&[inc; 10], 9.8).unwrap()]).k_matrix();
                assert!((k * &null_space).norm() < 1e-9);
            }
            s => panic!("expected rank deficiency, got {s:?}"),
        }
    }

    proptest! {
        #[test]
        fn duplicated_rows_double_the_spectrum(
            w in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 12),
        ) {
            let incs: Vec<ImuIncrements> = w.iter().map(|&(a, b, c)| ImuIncrements {
                dtheta1: Vector3::new(a, b, c) * 0.01,
                dtheta2: Vector3::new(c, a, b) * 0.01,
                dv1: Vector3::new(b, 9.8 + a, c) * 0.01,
                dv2: Vector3::new(a, 9.8 - c, b) * 0.01,
                dt: 0.02,
            }).collect();
            let rows: Vec<_> = incs.chunks(3).map(|c| accumulate_row(c, 9.8).unwrap()).collect();
            let single = ObservabilityBatch::new(rows.clone());
            let double = ObservabilityBatch::new(rows.iter().chain(&rows).cloned().collect());
            let (a, b) = (eigen_spectrum(&single), eigen_spectrum(&double));
            let max = a[8];
            prop_assert!(a[0] >= -1e-10 * max);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((2.0 * x - y).abs() <= 1e-9 * max);
            }
        }
    }
}

//! Pedestrian navigation with two foot-mounted IMUs and an inter-foot range
//! sensor.
//!
//! Each foot runs an Earth-frame (ECEF) strapdown mechanization. A single
//! error-state Kalman filter over both feet fuses zero-velocity updates during
//! stance, inter-foot range measurements and an ellipsoid height constraint.
//! A gait simulator produces ground truth, IMU and range streams for a square
//! walk, and the [`observability`] module builds the batch least-squares
//! system that shows which initial states the zero-velocity constraints pin
//! down.
//!
//! Module map:
//! - [`earth`]: WGS-84 model, frames, gravity.
//! - [`so3`]: exponential map and right Jacobian.
//! - [`strapdown`]: mechanization and initial alignment.
//! - [`zupt`]: stance detection and the ellipsoid trigger.
//! - [`fusion`]: the joint two-foot error-state filter.
//! - [`sim`]: square-walk truth, IMU and range synthesis.
//! - [`observability`]: K-matrix rows, batch solve, spectrum.
//! - [`pipeline`] and [`io`]: end-to-end runs, summaries and file formats.

pub mod earth;
pub mod error;
pub mod fusion;
pub mod io;
pub mod observability;
pub mod pipeline;
pub mod sim;
pub mod so3;
pub mod strapdown;
pub mod zupt;

pub use earth::{EarthModel, EcefPosition, GeodeticPosition};
pub use error::{Error, Result};
pub use fusion::{JointState, NoiseConfig, RangeSample};
pub use sim::{GaitParams, SimulatedWalk, TruthSample};
pub use strapdown::{ImuIncrements, ImuSample, NavState};
pub use zupt::DetectorConfig;

use serde::{Deserialize, Serialize};

/// Which foot a sample or state belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Foot {
    Left,
    Right,
}

impl Foot {
    pub const BOTH: [Foot; 2] = [Foot::Left, Foot::Right];

    pub fn tag(self) -> &'static str {
        match self {
            Foot::Left => "L",
            Foot::Right => "R",
        }
    }

    pub fn from_tag(s: &str) -> Option<Foot> {
        match s {
            "L" => Some(Foot::Left),
            "R" => Some(Foot::Right),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn index(self) -> usize {
        match self {
            Foot::Left => 0,
            Foot::Right => 1,
        }
    }
}

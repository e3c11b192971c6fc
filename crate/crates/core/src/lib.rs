//! Federated outage-probability mapping and connectivity-constrained path
//! planning for cellular-connected UAVs.
//!
//! The pipeline has two stages. [`fedmap`] trains a small classifier
//! ([`neuralnet`]) on connectivity labels that simulated UAV clients collect
//! from a synthetic air-to-ground network ([`channel`]), aggregating local
//! updates with federated averaging. [`planner`] then runs RRT* over the
//! learned map, only admitting waypoints whose predicted outage stays below
//! a threshold. [`scenario`] holds configuration and file formats, and
//! [`cli`] wires everything into subcommands.

pub mod channel;
pub mod cli;
pub mod error;
pub mod fedmap;
pub mod neuralnet;
pub mod planner;
pub mod scenario;

pub use error::{Error, Result};

/// Axis-aligned rectangle in meters, used both as the flight area and as the
/// normalization frame for model inputs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Bounds {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    /// Square `[0, side] x [0, side]`.
    pub fn square(side: f64) -> Result<Self> {
        Self::new(0.0, 0.0, side, side)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::InvalidArgument(format!(
                "degenerate area bounds {self:?}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

pub(crate) fn dist2d(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

//! Uniform spatial axes and trapezoidal quadrature weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_AXIS_NODES: usize = 8;

/// A uniform partition of `[min, max]` into `nodes - 1` equal cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, nodes: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::param(format!("axis bounds [{min}, {max}] are not increasing")));
        }
        if nodes < MIN_AXIS_NODES {
            return Err(Error::param(format!(
                "axis needs at least {MIN_AXIS_NODES} nodes, got {nodes}"
            )));
        }
        Ok(Self { min, max, nodes })
    }

    /// Symmetric axis `[center - half_width, center + half_width]`.
    pub fn centered(center: f64, half_width: f64, nodes: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, nodes)
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.nodes - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.max
        } else {
            self.min + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.node(i)).collect()
    }

    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.nodes {
            0.5 * h
        } else {
            h
        }
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.trapezoid_weight(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn nearest(&self, x: f64) -> usize {
        let pos = ((x - self.min) / self.spacing()).round();
        pos.clamp(0.0, (self.nodes - 1) as f64) as usize
    }

    /// Piecewise-linear interpolation of node values; constant outside the axis.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.nodes);
        if x <= self.min {
            return values[0];
        }
        if x >= self.max {
            return values[self.nodes - 1];
        }
        let pos = (x - self.min) / self.spacing();
        let i = (pos.floor() as usize).min(self.nodes - 2);
        let frac = pos - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }

    /// Number of nodes within `width` of either end (rounded up).
    pub fn band_nodes(&self, width: f64) -> usize {
        ((width / self.spacing()).ceil() as usize).min(self.nodes / 2)
    }
}

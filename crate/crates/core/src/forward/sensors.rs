use serde::{Deserialize, Serialize};

use crate::model::{Grid2D, VelocityModel};
use crate::{Error, Result};

/// Identical sensors modelled by a normalized Gaussian `θ` of width
/// `theta_width`, truncated at four widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorArray {
    pub positions: Vec<[f64; 2]>,
    pub theta_width: f64,
}

const THETA_CUTOFF_WIDTHS: f64 = 4.0;

impl SensorArray {
    pub fn new(positions: Vec<[f64; 2]>, theta_width: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter("sensor array is empty".into()));
        }
        if !(theta_width > 0.0) {
            return Err(Error::InvalidParameter("sensor width must be positive".into()));
        }
        Ok(Self { positions, theta_width })
    }

    /// `m` sensors evenly spaced at depth `depth` below the top of the grid
    /// domain, at `x = xmin + W (s + 1) / (m + 1)`.
    pub fn line(grid: &Grid2D, m: usize, depth: f64, theta_width: f64) -> Result<Self> {
        let d = grid.domain();
        let positions =
            (0..m).map(|s| [d.xmin + d.width() * (s + 1) as f64 / (m + 1) as f64, d.zmin + depth]).collect();
        Self::new(positions, theta_width)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn check_inside(&self, grid: &Grid2D) -> Result<()> {
        let d = grid.domain();
        for (s, p) in self.positions.iter().enumerate() {
            if !(p[0] > d.xmin && p[0] < d.xmax && p[1] > d.zmin && p[1] < d.zmax) {
                return Err(Error::InvalidParameter(format!("sensor {s} at {p:?} lies outside the domain")));
            }
        }
        Ok(())
    }

    /// Nodal values of `θ(x - x_s)`, normalized so that the grid quadrature
    /// of `θ` is one.
    pub fn theta(&self, grid: &Grid2D, s: usize) -> Result<Vec<f64>> {
        let [xs, zs] = self.positions[s];
        let w = self.theta_width;
        let cutoff2 = (THETA_CUTOFF_WIDTHS * w).powi(2);
        let mut out: Vec<f64> = (0..grid.len())
            .map(|k| {
                let (x, z) = grid.point(k);
                let r2 = (x - xs).powi(2) + (z - zs).powi(2);
                if r2 > cutoff2 {
                    0.0
                } else {
                    (-r2 / (2.0 * w * w)).exp()
                }
            })
            .collect();
        let mass: f64 = out.iter().sum::<f64>() * grid.cell_area();
        if mass <= 0.0 {
            return Err(Error::InvalidParameter(format!("sensor {s} footprint misses every grid node")));
        }
        for v in &mut out {
            *v /= mass;
        }
        Ok(out)
    }

    /// Velocity at each sensor center.
    pub fn velocities(&self, v: &VelocityModel) -> Vec<f64> {
        self.positions.iter().map(|p| v.sample(p[0], p[1])).collect()
    }

    /// Same array with sensors reordered: entry `i` is old sensor `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { positions: perm.iter().map(|&i| self.positions[i]).collect(), theta_width: self.theta_width }
    }
}

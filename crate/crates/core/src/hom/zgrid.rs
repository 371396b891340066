use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tabulation nodes for the gradient argument: `count` nodes per axis,
/// evenly spaced on `[-radius, radius]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGrid {
    pub dim: usize,
    pub radius: f64,
    pub count: usize,
}

/// Offsets closer than this (in units of the spacing) snap to a node.
const SNAP: f64 = 1e-9;

/// Locates `t` (in node units) in a table of `count` nodes: returns the
/// left node and the weight of the right one.
pub(crate) fn locate(t: f64, count: usize) -> Option<(usize, f64)> {
    let last = (count - 1) as f64;
    let r = t.round();
    let t = if (t - r).abs() < SNAP { r } else { t };
    if !(0.0..=last).contains(&t) {
        return None;
    }
    let i = (t.floor() as usize).min(count - 2);
    Some((i, t - i as f64))
}

impl ZGrid {
    pub fn new(dim: usize, radius: f64, count: usize) -> Result<Self> {
        let g = Self { dim, radius, count };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return invalid("z-grid dimension must be 1 or 2");
        }
        if self.count < 3 || self.count % 2 == 0 {
            return invalid(format!("z-grid needs an odd node count >= 3, got {}", self.count));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return invalid("z-grid radius must be positive");
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.count - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.count.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value of node `i` along one axis.
    pub fn axis_node(&self, i: usize) -> f64 {
        if 2 * i + 1 == self.count {
            0.0
        } else {
            -self.radius + i as f64 * self.spacing()
        }
    }

    pub fn node(&self, idx: usize, out: &mut [f64]) {
        out[0] = self.axis_node(idx % self.count);
        if self.dim == 2 {
            out[1] = self.axis_node(idx / self.count);
        }
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                let mut z = vec![0.0; self.dim];
                self.node(i, &mut z);
                z
            })
            .collect()
    }

    /// Same spacing on a box `factor` times wider (node count rounded up to
    /// stay odd).
    pub fn widened(&self, factor: f64) -> Self {
        let intervals = ((self.count - 1) as f64 * factor).ceil() as usize;
        let intervals = intervals + intervals % 2;
        let radius = self.spacing() * intervals as f64 / 2.0;
        Self { dim: self.dim, radius, count: intervals + 1 }
    }

    /// Node-unit coordinates of `z` per axis.
    fn to_units(&self, z: f64) -> f64 {
        (z + self.radius) / self.spacing()
    }

    pub(crate) fn locate(&self, z: &[f64]) -> Result<[(usize, f64); 2]> {
        let mut out = [(0, 0.0); 2];
        for a in 0..self.dim {
            out[a] = locate(self.to_units(z[a]), self.count).ok_or_else(|| {
                Error::OutOfBox(format!("z = {z:?} outside [-{r}, {r}]^{}", self.dim, r = self.radius))
            })?;
        }
        Ok(out)
    }

    /// Whether `z` lies in the outermost interval of some axis.
    pub(crate) fn touches_edge(&self, z: &[f64]) -> bool {
        let last = (self.count - 1) as f64;
        z.iter().take(self.dim).any(|&v| {
            let t = self.to_units(v);
            t <= 1.0 || t >= last - 1.0
        })
    }
}

/// Values on a [`ZGrid`], multilinearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct ZTable {
    pub grid: ZGrid,
    pub values: Vec<f64>,
}

impl ZTable {
    pub fn value(&self, z: &[f64]) -> Result<f64> {
        let loc = self.grid.locate(z)?;
        let m = self.grid.count;
        let v = &self.values;
        Ok(match self.grid.dim {
            1 => {
                let (i, w) = loc[0];
                (1.0 - w) * v[i] + w * v[i + 1]
            }
            _ => {
                let ((i, u), (j, w)) = (loc[0], loc[1]);
                let b = i + m * j;
                (1.0 - w) * ((1.0 - u) * v[b] + u * v[b + 1]) + w * ((1.0 - u) * v[b + m] + u * v[b + m + 1])
            }
        })
    }

    /// Gradient of the interpolant; on a node the interval to its right is used.
    pub fn gradient(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        let loc = self.grid.locate(z)?;
        let m = self.grid.count;
        let inv = 1.0 / self.grid.spacing();
        let v = &self.values;
        match self.grid.dim {
            1 => {
                let (i, _) = loc[0];
                out[0] = (v[i + 1] - v[i]) * inv;
            }
            _ => {
                let ((i, u), (j, w)) = (loc[0], loc[1]);
                let b = i + m * j;
                out[0] = ((1.0 - w) * (v[b + 1] - v[b]) + w * (v[b + m + 1] - v[b + m])) * inv;
                out[1] = ((1.0 - u) * (v[b + m] - v[b]) + u * (v[b + m + 1] - v[b + 1])) * inv;
            }
        }
        Ok(())
    }
}

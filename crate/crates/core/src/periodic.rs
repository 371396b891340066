//! Uniform periodic grids on the unit cell `[0,1)^d` with forward-difference
//! gradients, their exact transpose, and deterministic averaging.
//!
//! Nodes and cells share the flat row-major index `i0 + N*i1` (axis 0
//! fastest); cell `c` has node `c` as its lower corner.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return invalid(format!("grid dimension must be 1 or 2, got {dim}"));
        }
        if n < 2 {
            return invalid(format!("grid needs at least 2 cells per axis, got {n}"));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates `k/N` of node `idx`.
    pub fn node_coords(&self, idx: usize, out: &mut [f64]) {
        let h = self.spacing();
        out[0] = (idx % self.n) as f64 * h;
        if self.dim == 2 {
            out[1] = (idx / self.n) as f64 * h;
        }
    }

    /// Neighbour of `idx` one step forward along `axis`, with wraparound.
    #[inline]
    pub fn next(&self, idx: usize, axis: usize) -> usize {
        let n = self.n;
        if axis == 0 {
            let i = idx % n;
            if i + 1 == n {
                idx + 1 - n
            } else {
                idx + 1
            }
        } else {
            let j = idx / n;
            if j + 1 == n {
                idx % n
            } else {
                idx + n
            }
        }
    }

    #[inline]
    pub fn prev(&self, idx: usize, axis: usize) -> usize {
        let n = self.n;
        if axis == 0 {
            let i = idx % n;
            if i == 0 {
                idx + n - 1
            } else {
                idx - 1
            }
        } else {
            let j = idx / n;
            if j == 0 {
                idx + n * (n - 1)
            } else {
                idx - n
            }
        }
    }

    /// Forward differences into `out` (`len * dim`, cell-major).
    pub fn gradient_into(&self, phi: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let inv_h = self.n as f64;
        for c in 0..self.len() {
            for a in 0..d {
                out[c * d + a] = (phi[self.next(c, a)] - phi[c]) * inv_h;
            }
        }
    }

    /// Transpose of [`gradient_into`](Self::gradient_into).
    pub fn gradient_transpose_into(&self, q: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let inv_h = self.n as f64;
        for (node, o) in out.iter_mut().enumerate().take(self.len()) {
            let mut acc = 0.0;
            for a in 0..d {
                acc += q[self.prev(node, a) * d + a] - q[node * d + a];
            }
            *o = acc * inv_h;
        }
    }
}

/// Nodal values on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

/// One `d`-vector per cell, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct GradField {
    pub dim: usize,
    pub vectors: Vec<f64>,
}

impl GradField {
    pub fn cell(&self, c: usize) -> &[f64] {
        &self.vectors[c * self.dim..(c + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Self { values: vec![0.0; grid.len()] }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        cell_average(&self.values)
    }

    /// CSV with a `# d=…,N=…` header line, then `index,value` rows.
    pub fn to_csv(&self, grid: &PeriodicGrid) -> String {
        let mut s = format!("# d={},N={}\nindex,value\n", grid.dim(), grid.n());
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<(PeriodicGrid, Field)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field CSV".into()))?;
        let meta = header
            .strip_prefix("# ")
            .ok_or_else(|| Error::Parse("missing '# d=…,N=…' header".into()))?;
        let (mut d, mut n) = (None, None);
        for kv in meta.split(',') {
            match kv.split_once('=') {
                Some(("d", v)) => d = v.parse::<usize>().ok(),
                Some(("N", v)) => n = v.parse::<usize>().ok(),
                _ => return Err(Error::Parse(format!("bad header entry '{kv}'"))),
            }
        }
        let grid = PeriodicGrid::new(
            d.ok_or_else(|| Error::Parse("header lacks d".into()))?,
            n.ok_or_else(|| Error::Parse("header lacks N".into()))?,
        )?;
        if lines.next() != Some("index,value") {
            return Err(Error::Parse("missing 'index,value' column header".into()));
        }
        let mut values = vec![f64::NAN; grid.len()];
        let mut seen = 0;
        for (lineno, line) in lines.enumerate() {
            let (i, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected index,value", lineno + 3)))?;
            let i: usize = i.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad index", lineno + 3)))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad value", lineno + 3)))?;
            if i >= values.len() {
                return Err(Error::Parse(format!("index {i} out of range")));
            }
            values[i] = v;
            seen += 1;
        }
        if seen != grid.len() {
            return Err(Error::Parse(format!("expected {} rows, found {seen}", grid.len())));
        }
        Ok((grid, Field { values }))
    }
}

/// Forward differences with periodic wraparound. A constant field has
/// exactly zero gradient.
pub fn discrete_gradient(phi: &Field, grid: &PeriodicGrid) -> GradField {
    let mut vectors = vec![0.0; grid.len() * grid.dim()];
    grid.gradient_into(&phi.values, &mut vectors);
    GradField { dim: grid.dim(), vectors }
}

/// Adjoint of [`discrete_gradient`] for the averaged inner products on cells
/// and nodes (a discrete negative divergence).
pub fn adjoint_gradient(q: &GradField, grid: &PeriodicGrid) -> Field {
    let mut values = vec![0.0; grid.len()];
    grid.gradient_transpose_into(&q.vectors, &mut values);
    Field { values }
}

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Compensated mean; bit-identical across runs.
pub fn cell_average(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "cell_average of an empty array");
    compensated_sum(values.iter().copied()) / values.len() as f64
}

pub fn project_mean_zero(phi: &Field) -> Field {
    let mut out = phi.clone();
    project_mean_zero_in_place(&mut out.values);
    out
}

pub fn project_mean_zero_in_place(values: &mut [f64]) {
    let m = cell_average(values);
    for v in values.iter_mut() {
        *v -= m;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_examples() {
        let g1 = PeriodicGrid::new(1, 4).unwrap();
        let zero = discrete_gradient(&Field::zeros(&g1), &g1);
        assert!(zero.vectors.iter().all(|&v| v == 0.0));
        let ramp = Field::new(vec![0.0, 0.25, 0.5, 0.75]);
        assert_eq!(discrete_gradient(&ramp, &g1).vectors, vec![1.0, 1.0, 1.0, -3.0]);

        // single unit spike at node (0,0) on a 2x2 grid, h = 1/2
        let g2 = PeriodicGrid::new(2, 2).unwrap();
        let spike = Field::new(vec![1.0, 0.0, 0.0, 0.0]);
        let gr = discrete_gradient(&spike, &g2);
        // cell 0: (phi(1,0)-phi(0,0))/h, (phi(0,1)-phi(0,0))/h
        assert_eq!(gr.cell(0), &[-2.0, -2.0]);
        // cell 1 = (1,0): x-neighbour wraps to node 0
        assert_eq!(gr.cell(1), &[2.0, 0.0]);
        // cell 2 = (0,1): y-neighbour wraps to node 0
        assert_eq!(gr.cell(2), &[0.0, 2.0]);
        assert_eq!(gr.cell(3), &[0.0, 0.0]);
    }

    #[test]
    fn adjoint_of_constant_flux_vanishes() {
        for (d, n) in [(1, 4), (2, 3), (2, 8)] {
            let g = PeriodicGrid::new(d, n).unwrap();
            let q = GradField { dim: d, vectors: vec![1.7; g.len() * d] };
            assert!(adjoint_gradient(&q, &g).values.iter().all(|&v| v == 0.0));
            let q0 = GradField { dim: d, vectors: vec![0.0; g.len() * d] };
            assert!(adjoint_gradient(&q0, &g).values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn averages() {
        assert_eq!(cell_average(&[1.0, 1.0, 1.0, 1.0]), 1.0);
        assert_eq!(cell_average(&[0.0, 2.0]), 1.0);
        let big = vec![0.1; 1_000_000];
        let total = compensated_sum(big.iter().copied());
        assert!((total - 1e5).abs() < 1e-9, "{total}");
    }

    #[test]
    fn projection() {
        let c = Field::new(vec![3.5; 7]);
        assert!(project_mean_zero(&c).values.iter().all(|&v| v == 0.0));
        assert_eq!(project_mean_zero(&Field::new(vec![0.0, 1.0])).values, vec![-0.5, 0.5]);
    }

    #[test]
    fn csv_round_trip() {
        let g = PeriodicGrid::new(2, 3).unwrap();
        let f = Field::new((0..9).map(|i| (i as f64).sin() / 3.0).collect());
        let (g2, f2) = Field::from_csv(&f.to_csv(&g)).unwrap();
        assert_eq!(g, g2);
        assert_eq!(f, f2);
        assert!(Field::from_csv("index,value\n0,1\n").is_err());
    }
}

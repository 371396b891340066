//! Fast exact solves with the forward-difference Laplacian `GᵀG`, used as
//! preconditioners by the first-order solvers: FFT on periodic grids, the
//! sine transform on Dirichlet grids.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::periodic::PeriodicGrid;

/// `(GᵀG)⁻¹` on mean-zero periodic fields.
pub struct PeriodicLaplacian {
    dim: usize,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    eig: Vec<f64>,
}

impl PeriodicLaplacian {
    pub fn new(grid: &PeriodicGrid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let inv_h2 = (n * n) as f64;
        let eig = (0..n).map(|k| (2.0 - 2.0 * (2.0 * PI * k as f64 / n as f64).cos()) * inv_h2).collect();
        Self { dim: grid.dim(), n, fwd, inv, eig }
    }

    /// Solves `GᵀG u = r` for the mean-zero `u`; the mean of `r` is ignored.
    pub fn solve(&self, r: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        match self.dim {
            1 => {
                self.fwd.process(&mut buf);
                buf[0] = Complex64::new(0.0, 0.0);
                for k in 1..n {
                    buf[k] /= self.eig[k];
                }
                self.inv.process(&mut buf);
            }
            _ => {
                transform_2d(&mut buf, n, &*self.fwd);
                for j in 0..n {
                    for i in 0..n {
                        let l = self.eig[i] + self.eig[j];
                        let idx = i + n * j;
                        buf[idx] = if l == 0.0 { Complex64::new(0.0, 0.0) } else { buf[idx] / l };
                    }
                }
                transform_2d(&mut buf, n, &*self.inv);
            }
        }
        let scale = 1.0 / (n.pow(self.dim as u32)) as f64;
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re * scale;
        }
    }
}

fn transform_2d(buf: &mut [Complex64], n: usize, fft: &dyn Fft<f64>) {
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        for j in 0..n {
            col[j] = buf[i + n * j];
        }
        fft.process(&mut col);
        for j in 0..n {
            buf[i + n * j] = col[j];
        }
    }
}

/// `(GᵀG)⁻¹` on the interior nodes of `(0,1)^d` with `m` cells per axis and
/// homogeneous Dirichlet data; interior unknowns are `(m-1)^d`, axis 0 fastest.
pub struct DirichletLaplacian {
    dim: usize,
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    eig: Vec<f64>,
}

impl DirichletLaplacian {
    pub fn new(dim: usize, m: usize) -> Self {
        assert!(m >= 2);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * m);
        let inv_h2 = (m * m) as f64;
        // eig[k-1] for sine mode k = 1..m-1
        let eig = (1..m).map(|k| (2.0 - 2.0 * (PI * k as f64 / m as f64).cos()) * inv_h2).collect();
        Self { dim, m, fft, eig }
    }

    pub fn unknowns(&self) -> usize {
        (self.m - 1).pow(self.dim as u32)
    }

    /// Unnormalized DST-I: `S_k = Σ_j v_j sin(π j k / m)`, in place.
    fn dst(&self, v: &mut [f64], scratch: &mut [Complex64]) {
        let m = self.m;
        scratch[0] = Complex64::new(0.0, 0.0);
        scratch[m] = Complex64::new(0.0, 0.0);
        for j in 1..m {
            scratch[j] = Complex64::new(v[j - 1], 0.0);
            scratch[2 * m - j] = Complex64::new(-v[j - 1], 0.0);
        }
        self.fft.process(scratch);
        for k in 1..m {
            v[k - 1] = -0.5 * scratch[k].im;
        }
    }

    pub fn solve(&self, r: &[f64], out: &mut [f64]) {
        let m = self.m;
        let l = m - 1;
        let mut scratch = vec![Complex64::new(0.0, 0.0); 2 * m];
        out.copy_from_slice(r);
        // DST-I is its own inverse up to 2/m per axis
        let norm = (2.0 / m as f64).powi(self.dim as i32);
        match self.dim {
            1 => {
                self.dst(out, &mut scratch);
                for k in 0..l {
                    out[k] /= self.eig[k];
                }
                self.dst(out, &mut scratch);
            }
            _ => {
                let mut col = vec![0.0; l];
                let pass = |out: &mut [f64], scratch: &mut [Complex64], col: &mut [f64]| {
                    for row in out.chunks_mut(l) {
                        self.dst(row, scratch);
                    }
                    for i in 0..l {
                        for j in 0..l {
                            col[j] = out[i + l * j];
                        }
                        self.dst(col, scratch);
                        for j in 0..l {
                            out[i + l * j] = col[j];
                        }
                    }
                };
                pass(out, &mut scratch, &mut col);
                for j in 0..l {
                    for i in 0..l {
                        out[i + l * j] /= self.eig[i] + self.eig[j];
                    }
                }
                pass(out, &mut scratch, &mut col);
            }
        }
        for v in out.iter_mut() {
            *v *= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periodic::project_mean_zero_in_place;

    fn apply_periodic(grid: &PeriodicGrid, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; grid.len() * grid.dim()];
        grid.gradient_into(u, &mut g);
        let mut out = vec![0.0; grid.len()];
        grid.gradient_transpose_into(&g, &mut out);
        out
    }

    #[test]
    fn periodic_solve_inverts_laplacian() {
        for (d, n) in [(1, 8), (1, 7), (2, 8), (2, 6)] {
            let grid = PeriodicGrid::new(d, n).unwrap();
            let mut u: Vec<f64> = (0..grid.len()).map(|i| ((i * 37 % 11) as f64).sin()).collect();
            project_mean_zero_in_place(&mut u);
            let r = apply_periodic(&grid, &u);
            let mut back = vec![0.0; grid.len()];
            PeriodicLaplacian::new(&grid).solve(&r, &mut back);
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10, "d={d} n={n}: {a} vs {b}");
            }
        }
    }

    fn apply_dirichlet(d: usize, m: usize, u: &[f64]) -> Vec<f64> {
        let l = m - 1;
        let h2 = (m * m) as f64;
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= l as isize || j >= l as isize {
                0.0
            } else {
                u[i as usize + l * j as usize]
            }
        };
        (0..u.len())
            .map(|idx| {
                let (i, j) = ((idx % l) as isize, (idx / l) as isize);
                if d == 1 {
                    (2.0 * at(i, 0) - at(i - 1, 0) - at(i + 1, 0)) * h2
                } else {
                    (4.0 * at(i, j) - at(i - 1, j) - at(i + 1, j) - at(i, j - 1) - at(i, j + 1)) * h2
                }
            })
            .collect()
    }

    #[test]
    fn dirichlet_solve_inverts_laplacian() {
        for (d, m) in [(1, 8), (1, 5), (2, 6), (2, 8)] {
            let lap = DirichletLaplacian::new(d, m);
            let u: Vec<f64> = (0..lap.unknowns()).map(|i| ((i * 13 % 7) as f64).cos()).collect();
            let r = apply_dirichlet(d, m, &u);
            let mut back = vec![0.0; u.len()];
            lap.solve(&r, &mut back);
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10, "d={d} m={m}: {a} vs {b}");
            }
        }
    }
}

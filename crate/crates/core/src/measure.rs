//! Empirical checks of multiscale convergence: oscillating averages along
//! `x ↦ (⟨x/ρ_1⟩, …, ⟨x/ρ_n⟩)` and histograms of gradient fields against
//! the fast variables.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::cellset::CellSet;
use crate::eps::DomainSpec;
use crate::error::{invalid, Result};
use crate::exact::{midpoint, to_f64, Rational};
use crate::expr::{Expr, Point};
use crate::periodic::{compensated_sum, Field};
use crate::scales::{Eps, ScaleFamily};

/// Midpoints `(2j+1)/(2S)` of a uniform grid on `(0,1)^d` with their fast
/// variables.
#[derive(Debug, Clone)]
pub struct TrajectorySampler {
    pub scales: ScaleFamily,
    pub eps: Eps,
    pub dim: usize,
    /// samples per axis
    pub count: usize,
}

impl TrajectorySampler {
    pub fn new(scales: ScaleFamily, eps: Eps, dim: usize, count: usize) -> Result<Self> {
        eps.validate()?;
        if !(1..=2).contains(&dim) || count == 0 {
            return invalid("sampler needs dimension 1 or 2 and a positive count");
        }
        Ok(Self { scales, eps, dim, count })
    }

    pub fn len(&self) -> usize {
        self.count.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn exact_point(&self, j: usize) -> Vec<Rational> {
        let mut j = j;
        (0..self.dim)
            .map(|_| {
                let i = j % self.count;
                j /= self.count;
                midpoint(i as u64, self.count as u64)
            })
            .collect()
    }

    /// `(x_j, v(x_j))`, with `v` scale-major.
    pub fn sample(&self, j: usize) -> (Vec<f64>, Vec<f64>) {
        let x = self.exact_point(j);
        let y = self.scales.fast_vars(self.eps, &x);
        (x.iter().map(to_f64).collect(), y)
    }

    /// Average of `g(x_j, v(x_j))` over all samples.
    pub fn average<F>(&self, g: F) -> f64
    where
        F: Fn(&[f64], &[f64]) -> f64 + Sync,
    {
        let vals: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|j| {
                let (x, y) = self.sample(j);
                g(&x, &y)
            })
            .collect();
        compensated_sum(vals) / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub eps: f64,
    pub average: f64,
    pub limit: f64,
    pub error: f64,
}

pub fn limit_table_csv(rows: &[LimitRow]) -> String {
    let mut s = String::from("eps,average,limit,error\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.eps, r.average, r.limit, r.error);
    }
    s
}

/// Indices of the later term wherever the error grows along the list.
pub fn error_increases(rows: &[LimitRow], slack: f64) -> Vec<usize> {
    (1..rows.len()).filter(|&k| rows[k].error > rows[k - 1].error + slack).collect()
}

/// `∫_{□ⁿ} φ` by the midpoint rule with `k` nodes per axis.
pub fn cell_integral(phi: &Expr, dim: usize, n: usize, k: usize) -> f64 {
    let axes = dim * n;
    let total = k.pow(axes as u32);
    let x = vec![0.0; dim];
    let vals: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|mut c| {
            let y: Vec<f64> = (0..axes)
                .map(|_| {
                    let i = c % k;
                    c /= k;
                    (2 * i + 1) as f64 / (2 * k) as f64
                })
                .collect();
            phi.eval(Point::new(&x, &y))
        })
        .collect();
    compensated_sum(vals) / total as f64
}

/// Distance between trajectory averages of `φ(v(x))` and the cell integral
/// of `φ`, per `eps`. `quad` is the per-axis midpoint count of the
/// reference quadrature.
pub fn riemann_lebesgue_check(
    phi: &Expr,
    dim: usize,
    scales: &ScaleFamily,
    eps_list: &[Eps],
    samples: usize,
    quad: usize,
) -> Result<Vec<LimitRow>> {
    phi.validate(dim, scales.len())?;
    if phi.depends_on_x() {
        return invalid("test function must depend on the fast variables only");
    }
    let limit = cell_integral(phi, dim, scales.len(), quad);
    eps_list
        .iter()
        .map(|&eps| {
            let s = TrajectorySampler::new(scales.clone(), eps, dim, samples)?;
            let average = s.average(|x, y| phi.eval(Point::new(x, y)));
            Ok(LimitRow { eps: eps.value(), average, limit, error: (average - limit).abs() })
        })
        .collect()
}

/// `|avg χ_A(v(x_j)) g(x_j) − |A| avg g(x_j)|` for a product set
/// `A = A_1 × … × A_n`, per `eps`.
pub fn indicator_weak_limit_check(
    sets: &[CellSet],
    scales: &ScaleFamily,
    eps_list: &[Eps],
    g: &Expr,
    samples: usize,
) -> Result<Vec<LimitRow>> {
    if sets.len() != scales.len() {
        return invalid(format!("{} sets for {} scales", sets.len(), scales.len()));
    }
    let dim = sets.first().map_or(1, CellSet::dim);
    for s in sets {
        if s.dim() != dim {
            return invalid("all sets must share one dimension");
        }
        s.validate()?;
    }
    g.validate(dim, scales.len())?;
    if g.depends_on_y() {
        return invalid("weight must depend on x only");
    }
    let measure: f64 = sets.iter().map(CellSet::measure).product();
    eps_list
        .iter()
        .map(|&eps| {
            let s = TrajectorySampler::new(scales.clone(), eps, dim, samples)?;
            let inside = |y: &[f64]| sets.iter().enumerate().all(|(k, a)| a.contains(&y[k * dim..(k + 1) * dim]));
            let average = s.average(|x, y| if inside(y) { g.eval(Point::new(x, y)) } else { 0.0 });
            let limit = measure * s.average(|x, y| g.eval(Point::new(x, y)));
            Ok(LimitRow { eps: eps.value(), average, limit, error: (average - limit).abs() })
        })
        .collect()
}

/// Equal-width bins: `y_bins` per axis of every fast variable, `z_bins` per
/// gradient component over `[-z_range, z_range]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungBins {
    pub y_bins: usize,
    pub z_bins: usize,
    pub z_range: f64,
}

/// Integer histogram of `(v(x_c), ∇u_c)` over Ω cells, with per-y-bin
/// gradient sums for conditional means.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub dim: usize,
    pub scales: usize,
    pub bins: YoungBins,
    pub eps: f64,
    /// `counts[y_bin * z_bin_count + z_bin]`
    pub counts: Vec<u64>,
    /// `grad_sums[y_bin * dim + axis]`
    pub grad_sums: Vec<f64>,
    pub total: u64,
    /// samples whose gradient fell outside the z range and were clamped
    pub clipped: u64,
}

impl EmpiricalMeasure {
    pub fn y_bin_count(&self) -> usize {
        self.bins.y_bins.pow((self.dim * self.scales) as u32)
    }

    pub fn z_bin_count(&self) -> usize {
        self.bins.z_bins.pow(self.dim as u32)
    }

    /// Normalized mass per `(y, z)` bin.
    pub fn mass(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    pub fn y_marginal(&self) -> Vec<f64> {
        self.counts.chunks(self.z_bin_count()).map(|c| c.iter().sum::<u64>() as f64 / self.total as f64).collect()
    }

    pub fn z_marginal(&self) -> Vec<f64> {
        let zc = self.z_bin_count();
        let mut m = vec![0u64; zc];
        for (i, c) in self.counts.iter().enumerate() {
            m[i % zc] += c;
        }
        m.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    /// Center of the z bin along one axis.
    pub fn z_center(&self, bin: usize) -> f64 {
        let w = 2.0 * self.bins.z_range / self.bins.z_bins as f64;
        -self.bins.z_range + (bin as f64 + 0.5) * w
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# dim={}", self.dim);
        let _ = writeln!(s, "# scales={}", self.scales);
        let _ = writeln!(s, "# y_bins={}", self.bins.y_bins);
        let _ = writeln!(s, "# z_bins={}", self.bins.z_bins);
        let _ = writeln!(s, "# z_range={}", self.bins.z_range);
        let _ = writeln!(s, "# eps={}", self.eps);
        let _ = writeln!(s, "# total={}", self.total);
        let _ = writeln!(s, "# clipped={}", self.clipped);
        s.push_str("y_bin,z_bin,count\n");
        let zc = self.z_bin_count();
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", i / zc, i % zc, c);
        }
        s
    }
}

fn bin_of(v: f64, lo: f64, width: f64, count: usize) -> (usize, bool) {
    let t = ((v - lo) / width).floor();
    if t < 0.0 {
        (0, true)
    } else if t >= count as f64 {
        (count - 1, v > lo + width * count as f64)
    } else {
        (t as usize, false)
    }
}

/// Histogram of the cell gradients of `u` against the fast variables at the
/// cell sample points.
pub fn empirical_young(u: &Field, dom: &DomainSpec, scales: &ScaleFamily, eps: Eps, bins: YoungBins) -> Result<EmpiricalMeasure> {
    dom.validate()?;
    eps.validate()?;
    if u.values.len() != dom.node_count() {
        return invalid("field does not live on the domain grid");
    }
    if bins.y_bins == 0 || bins.z_bins == 0 || !(bins.z_range > 0.0 && bins.z_range.is_finite()) {
        return invalid("bins need positive counts and range");
    }
    let d = dom.dim;
    let n = scales.len();
    let mut m = EmpiricalMeasure {
        dim: d,
        scales: n,
        bins,
        eps: eps.value(),
        counts: Vec::new(),
        grad_sums: Vec::new(),
        total: 0,
        clipped: 0,
    };
    let (yc, zc) = (m.y_bin_count(), m.z_bin_count());
    let grads = dom.gradients(&u.values);
    let zw = 2.0 * bins.z_range / bins.z_bins as f64;
    const CHUNK: usize = 4096;
    let cells: Vec<usize> = (0..dom.cell_count()).collect();
    let parts: Vec<(Vec<u64>, Vec<f64>, u64)> = cells
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut counts = vec![0u64; yc * zc];
            let mut sums = vec![0.0; yc * d];
            let mut clipped = 0;
            for &c in chunk {
                let y = scales.fast_vars(eps, &dom.sample_point(c));
                let yb = y.iter().rev().fold(0, |acc, v| {
                    acc * bins.y_bins + ((v * bins.y_bins as f64) as usize).min(bins.y_bins - 1)
                });
                let g = &grads[c * d..(c + 1) * d];
                let mut zb = 0;
                let mut clip = false;
                for a in (0..d).rev() {
                    let (b, out) = bin_of(g[a], -bins.z_range, zw, bins.z_bins);
                    clip |= out;
                    zb = zb * bins.z_bins + b;
                }
                clipped += u64::from(clip);
                counts[yb * zc + zb] += 1;
                for a in 0..d {
                    sums[yb * d + a] += g[a];
                }
            }
            (counts, sums, clipped)
        })
        .collect();
    m.counts = vec![0; yc * zc];
    m.grad_sums = vec![0.0; yc * d];
    for (counts, sums, clipped) in parts {
        m.counts.iter_mut().zip(counts).for_each(|(a, b)| *a += b);
        m.grad_sums.iter_mut().zip(sums).for_each(|(a, b)| *a += b);
        m.clipped += clipped;
    }
    m.total = dom.cell_count() as u64;
    Ok(m)
}

/// Mean gradient per y bin; `None` for empty bins.
pub fn center_of_mass(m: &EmpiricalMeasure) -> Vec<Option<Vec<f64>>> {
    let zc = m.z_bin_count();
    m.counts
        .chunks(zc)
        .enumerate()
        .map(|(b, c)| {
            let count: u64 = c.iter().sum();
            (count > 0).then(|| m.grad_sums[b * m.dim..(b + 1) * m.dim].iter().map(|s| s / count as f64).collect())
        })
        .collect()
}

/// Mass-weighted mean of the per-bin centers.
pub fn overall_mean(m: &EmpiricalMeasure) -> Vec<f64> {
    let marginal = m.y_marginal();
    let mut mean = vec![0.0; m.dim];
    for (w, c) in marginal.iter().zip(center_of_mass(m)) {
        if let Some(c) = c {
            for a in 0..m.dim {
                mean[a] += w * c[a];
            }
        }
    }
    mean
}

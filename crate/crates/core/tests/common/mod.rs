#![allow(dead_code)]

use std::path::PathBuf;

use multihom::hom::HomTable;
use multihom::integrand::Integrand;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> Integrand {
    Integrand::load(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

/// Harmonic mean of equal-weight coefficients.
pub fn harmonic_mean(a: &[f64]) -> f64 {
    a.len() as f64 / a.iter().map(|v| 1.0 / v).sum::<f64>()
}

/// `(avg a^{-1/(p-1)})^{-(p-1)}`, the 1D p-law laminate value at `|z| = 1`.
pub fn power_mean(a: &[f64], p: f64) -> f64 {
    let s = a.iter().map(|v| v.powf(-1.0 / (p - 1.0))).sum::<f64>() / a.len() as f64;
    s.powf(-(p - 1.0))
}

/// Worst violation of `c1|z|^p <= v <= c2(1+|z|^p)` over the level-1 nodes.
pub fn table_growth_violation(t: &HomTable) -> f64 {
    let g = t.growth;
    let mut worst: f64 = 0.0;
    for (i, z) in t.zgrid.nodes().iter().enumerate() {
        for s in 0..t.slow_len() {
            let v = t.z_slice(s)[i];
            worst = worst.max(g.lower(z) - v).max(v - g.upper(z));
        }
    }
    worst
}

/// Worst midpoint-convexity defect `f(m) - (f(a)+f(b))/2` along grid axes,
/// relative to `1 + f(m)`.
pub fn table_convexity_violation(t: &HomTable) -> f64 {
    let c = t.zgrid.count;
    let mut worst: f64 = f64::NEG_INFINITY;
    for s in 0..t.slow_len() {
        let v = t.z_slice(s);
        for idx in 0..t.zgrid.len() {
            for stride in [1, c].into_iter().take(t.dim) {
                let pos = (idx / stride) % c;
                for k in 1..=pos.min(c - 1 - pos) {
                    let (a, b) = (v[idx - k * stride], v[idx + k * stride]);
                    worst = worst.max((v[idx] - 0.5 * (a + b)) / (1.0 + v[idx].abs()));
                }
            }
        }
    }
    worst
}

/// Largest `|f(-z) - f(z)|` over the nodes.
pub fn table_symmetry_defect(t: &HomTable) -> f64 {
    let n = t.zgrid.len();
    (0..t.slow_len())
        .flat_map(|s| {
            let v = t.z_slice(s);
            (0..n).map(move |i| (v[i] - v[n - 1 - i]).abs())
        })
        .fold(0.0, f64::max)
}

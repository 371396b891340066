use super::{norm, Integrand};
use crate::error::{Error, Result};

/// Halton low-discrepancy sequence in `[0,1)^dims`.
#[derive(Debug, Clone)]
pub struct Halton {
    bases: Vec<u64>,
    index: u64,
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

impl Halton {
    pub fn new(dims: usize) -> Self {
        assert!(dims <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
        Self { bases: PRIMES[..dims].to_vec(), index: 0 }
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        self.index += 1;
        for (o, &b) in out.iter_mut().zip(&self.bases) {
            let mut i = self.index;
            let mut f = 1.0;
            let mut r = 0.0;
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            *o = r;
        }
    }
}

/// Deterministic sample of `(x, y, z)` with `z ∈ [-z_radius, z_radius]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub count: usize,
    pub z_radius: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { count: 10_000, z_radius: 5.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest slack seen; negative when something was violated.
    pub worst_margin: f64,
    /// Up to ten violating samples, human readable.
    pub details: Vec<String>,
}

impl AuditReport {
    fn new() -> Self {
        Self { worst_margin: f64::INFINITY, ..Default::default() }
    }

    fn record(&mut self, margin: f64, tol: f64, what: impl FnOnce() -> String) {
        self.samples += 1;
        self.worst_margin = self.worst_margin.min(margin);
        if margin < -tol {
            self.violations += 1;
            if self.details.len() < 10 {
                self.details.push(what());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn audited(f: &Integrand) -> Result<()> {
    match f.form() {
        super::Form::BorelDiagonal { .. } => Err(Error::Unsupported("audits of Borel diagonal integrands".into())),
        _ => Ok(()),
    }
}

/// Walks the sample, handing `(x, y, [z₁, z₂])` slices to `visit`.
fn for_samples(f: &Integrand, s: &Sampling, zs: usize, mut visit: impl FnMut(&[f64], &[f64], &[f64])) {
    let d = f.dim();
    let ny = d * f.scales();
    let dims = d + ny + zs * d;
    let mut h = Halton::new(dims);
    let mut buf = vec![0.0; dims];
    for _ in 0..s.count {
        h.next_into(&mut buf);
        for v in &mut buf[d + ny..] {
            *v = s.z_radius * (2.0 * *v - 1.0);
        }
        visit(&buf[..d], &buf[d..d + ny], &buf[d + ny..]);
    }
}

/// Audits `c1|z|^p ≤ f ≤ c2(1+|z|^p)`.
pub fn check_growth(f: &Integrand, s: &Sampling) -> Result<AuditReport> {
    audited(f)?;
    let g = *f.growth();
    let mut rep = AuditReport::new();
    let mut err = None;
    for_samples(f, s, 1, |x, y, z| match f.eval(x, y, z) {
        Ok(v) => {
            let margin = (v - g.lower(z)).min(g.upper(z) - v);
            rep.record(margin, 1e-12 * (1.0 + v.abs()), || {
                format!("x={x:?} y={y:?} z={z:?}: f={v} outside [{}, {}]", g.lower(z), g.upper(z))
            });
        }
        Err(e) => err = Some(e),
    });
    match err {
        Some(e) => Err(e),
        None => Ok(rep),
    }
}

/// Audits midpoint convexity in `z` at tolerance 1e-12.
pub fn check_convexity(f: &Integrand, s: &Sampling) -> Result<AuditReport> {
    audited(f)?;
    let d = f.dim();
    let mut rep = AuditReport::new();
    let mut err = None;
    let mut mid = vec![0.0; d];
    for_samples(f, s, 2, |x, y, zz| {
        let (z1, z2) = zz.split_at(d);
        for i in 0..d {
            mid[i] = 0.5 * (z1[i] + z2[i]);
        }
        let local = match f.local(x, y) {
            Ok(l) => l,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        let (a, b, m) = (local.value(z1), local.value(z2), local.value(&mid));
        let chord = 0.5 * (a + b);
        rep.record(chord - m, 1e-12 * (1.0 + chord.abs()), || {
            format!("x={x:?} y={y:?} z1={z1:?} z2={z2:?}: f(mid)={m} > {chord}")
        });
    });
    match err {
        Some(e) => Err(e),
        None => Ok(rep),
    }
}

/// Audits the local Lipschitz estimate for convex functions with
/// `|f| ≤ c (b + |z|)^p`, taking `c = c2`, `b = 1`:
/// `|f(z₁) - f(z₂)| ≤ c2 d (1 + 2^p) (1 + |z₁| + |z₂|)^{p-1} |z₁ - z₂|`.
pub fn check_lipschitz(f: &Integrand, s: &Sampling) -> Result<AuditReport> {
    audited(f)?;
    let d = f.dim();
    let g = *f.growth();
    let mut rep = AuditReport::new();
    let mut err = None;
    let mut diff = vec![0.0; d];
    for_samples(f, s, 2, |x, y, zz| {
        let (z1, z2) = zz.split_at(d);
        let local = match f.local(x, y) {
            Ok(l) => l,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        for i in 0..d {
            diff[i] = z1[i] - z2[i];
        }
        let lhs = (local.value(z1) - local.value(z2)).abs();
        let rhs = lipschitz_bound(g.c2, d, g.p, norm(z1), norm(z2)) * norm(&diff);
        rep.record(rhs - lhs, 1e-12 * (1.0 + lhs), || format!("z1={z1:?} z2={z2:?}: {lhs} > {rhs}"));
    });
    match err {
        Some(e) => Err(e),
        None => Ok(rep),
    }
}

/// `c d (1 + 2^p) (1 + r₁ + r₂)^{p-1}`, the Lipschitz factor on the ball
/// containing both points.
pub fn lipschitz_bound(c: f64, d: usize, p: f64, r1: f64, r2: f64) -> f64 {
    c * d as f64 * (1.0 + 2f64.powf(p)) * (1.0 + r1 + r2).powf(p - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellset::CellSet;
    use crate::integrand::{build_composite, GrowthBounds, MaterialLaw};

    fn laminate(c1: f64) -> Integrand {
        build_composite(
            vec![CellSet::interval(&[0.0], &[0.5])],
            MaterialLaw::power(1.0),
            MaterialLaw::power(4.0),
            GrowthBounds::new(c1, 4.0, 2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn halton_is_in_unit_cube() {
        let mut h = Halton::new(3);
        let mut v = [0.0; 3];
        h.next_into(&mut v);
        assert_eq!(v, [0.5, 1.0 / 3.0, 0.2]);
        for _ in 0..1000 {
            h.next_into(&mut v);
            assert!(v.iter().all(|c| (0.0..1.0).contains(c)));
        }
    }

    #[test]
    fn growth_audit() {
        let s = Sampling { count: 2000, z_radius: 5.0 };
        assert_eq!(check_growth(&laminate(1.0), &s).unwrap().violations, 0);
        let bad = check_growth(&laminate(2.0), &s).unwrap();
        assert!(bad.violations > 0 && bad.worst_margin < 0.0);
    }

    #[test]
    fn convexity_audit() {
        let s = Sampling { count: 2000, z_radius: 3.0 };
        for p in [2.0, 3.0, 1.5] {
            let f = Integrand::power(2, 1, p).unwrap();
            assert_eq!(check_convexity(&f, &s).unwrap().violations, 0, "p={p}");
        }
        let sat = Integrand::simple(
            1,
            1,
            MaterialLaw::Saturated { coef: 1.0.into(), cap: 1.0 },
            GrowthBounds::new(1.0, 1.0, 2.0).unwrap(),
        )
        .unwrap();
        assert!(check_convexity(&sat, &s).unwrap().violations > 0);
    }

    #[test]
    fn lipschitz_audit_power_laws() {
        let s = Sampling { count: 3000, z_radius: 10.0 };
        for p in [1.5, 2.0, 3.0, 4.0] {
            let f = Integrand::power(2, 1, p).unwrap();
            assert!(check_lipschitz(&f, &s).unwrap().passed(), "p={p}");
        }
    }
}

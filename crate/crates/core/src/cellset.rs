//! Measurable subsets of the unit cell with exact measure and membership.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exact::{Coef, Rational};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CellSet {
    /// Product of half-open intervals `[lo_i, hi_i)`.
    Interval { lo: Vec<Coef>, hi: Vec<Coef> },
    /// `resolution^dim` pixels; `mask` is a string of `0`/`1`, axis 0 fastest.
    Raster { dim: usize, resolution: usize, mask: String },
    /// `[0, 1/2)² ∪ [1/2, 1)²`, two-dimensional only.
    CheckerQuadrant,
}

impl CellSet {
    pub fn interval(lo: &[f64], hi: &[f64]) -> Self {
        CellSet::Interval {
            lo: lo.iter().copied().map(Coef::Float).collect(),
            hi: hi.iter().copied().map(Coef::Float).collect(),
        }
    }

    /// The whole cell `[0,1)^d`.
    pub fn full(d: usize) -> Self {
        CellSet::interval(&vec![0.0; d], &vec![1.0; d])
    }

    pub fn raster(dim: usize, resolution: usize, bits: &[bool]) -> Self {
        let mask = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        CellSet::Raster { dim, resolution, mask }
    }

    pub fn dim(&self) -> usize {
        match self {
            CellSet::Interval { lo, .. } => lo.len(),
            CellSet::Raster { dim, .. } => *dim,
            CellSet::CheckerQuadrant => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CellSet::Interval { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return invalid("interval set needs matching non-empty lo/hi");
                }
                for (l, h) in lo.iter().zip(hi) {
                    let (l, h) = (l.value(), h.value());
                    if !(0.0..=1.0).contains(&l) || !(0.0..=1.0).contains(&h) || l > h {
                        return invalid(format!("interval [{l}, {h}) not inside [0,1]"));
                    }
                }
            }
            CellSet::Raster { dim, resolution, mask } => {
                if *dim == 0 || *dim > 2 || *resolution == 0 {
                    return invalid("raster needs dim in {1,2} and resolution >= 1");
                }
                if mask.len() != resolution.pow(*dim as u32) {
                    return invalid(format!(
                        "raster mask has {} entries, expected {}",
                        mask.len(),
                        resolution.pow(*dim as u32)
                    ));
                }
                if mask.chars().any(|c| c != '0' && c != '1') {
                    return invalid("raster mask must contain only '0' and '1'");
                }
            }
            CellSet::CheckerQuadrant => {}
        }
        Ok(())
    }

    /// Membership for a point with components in `[0,1)`.
    pub fn contains(&self, y: &[f64]) -> bool {
        match self {
            CellSet::Interval { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(y)
                .all(|((l, h), &v)| v >= l.value() && v < h.value()),
            CellSet::Raster { dim, resolution, mask } => {
                let r = *resolution;
                let mut idx = 0;
                let mut stride = 1;
                for &v in y.iter().take(*dim) {
                    let i = ((v * r as f64).floor() as usize).min(r - 1);
                    idx += i * stride;
                    stride *= r;
                }
                mask.as_bytes()[idx] == b'1'
            }
            CellSet::CheckerQuadrant => (y[0] < 0.5) == (y[1] < 0.5),
        }
    }

    /// Exact Lebesgue measure, when the endpoints are representable.
    pub fn measure_exact(&self) -> Option<Rational> {
        match self {
            CellSet::Interval { lo, hi } => {
                let mut m = Rational::from_integer(1);
                for (l, h) in lo.iter().zip(hi) {
                    m *= h.rational()? - l.rational()?;
                }
                Some(m)
            }
            CellSet::Raster { dim, resolution, mask } => {
                let ones = mask.bytes().filter(|&b| b == b'1').count() as i128;
                Some(Rational::new(ones, (*resolution as i128).pow(*dim as u32)))
            }
            CellSet::CheckerQuadrant => Some(Rational::new(1, 2)),
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            CellSet::Interval { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h.value() - l.value()).product(),
            _ => {
                let m = self.measure_exact().expect("raster/checker measure is exact");
                *m.numer() as f64 / *m.denom() as f64
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checker_membership() {
        let c = CellSet::CheckerQuadrant;
        assert!(c.contains(&[0.1, 0.4]));
        assert!(c.contains(&[0.6, 0.9]));
        assert!(!c.contains(&[0.1, 0.6]));
        assert!(!c.contains(&[0.5, 0.49]));
        assert_eq!(c.measure(), 0.5);
    }

    #[test]
    fn interval_measure_exact() {
        let s = CellSet::Interval {
            lo: vec![Coef::frac(0, 1), Coef::frac(0, 1)],
            hi: vec![Coef::frac(1, 2), Coef::frac(1, 3)],
        };
        assert_eq!(s.measure_exact().unwrap(), Rational::new(1, 6));
        assert!(s.contains(&[0.2, 0.3]));
        assert!(!s.contains(&[0.2, 0.34]));
    }

    #[test]
    fn raster_matches_quadrants() {
        let r = CellSet::raster(2, 2, &[true, false, false, true]);
        r.validate().unwrap();
        for &(a, b) in &[(0.1, 0.2), (0.7, 0.2), (0.3, 0.8), (0.9, 0.9)] {
            assert_eq!(r.contains(&[a, b]), CellSet::CheckerQuadrant.contains(&[a, b]));
        }
        assert_eq!(r.measure(), 0.5);
        assert!(CellSet::raster(2, 2, &[true]).validate().is_err());
    }
}

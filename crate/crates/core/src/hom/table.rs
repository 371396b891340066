use std::fmt::Write as _;

use super::zgrid::{locate, ZGrid, ZTable};
use crate::error::{Error, Result};
use crate::integrand::GrowthBounds;
use crate::periodic::PeriodicGrid;

/// A tabulated intermediate density `f_hom^{[k]}(y¹, …, y^{k-1}, z)` at a
/// frozen `x`. Level 1 is `f_hom` itself and has no slow axes.
///
/// Values are stored slow-index major (`y¹` slowest), `z` index minor.
#[derive(Debug, Clone, PartialEq)]
pub struct HomTable {
    pub level: usize,
    pub dim: usize,
    pub slow: Vec<PeriodicGrid>,
    pub zgrid: ZGrid,
    pub growth: GrowthBounds,
    pub values: Vec<f64>,
}

/// Flat index over a product of periodic grids, first grid slowest.
pub(crate) fn product_index(grids: &[PeriodicGrid], nodes: &[usize]) -> usize {
    grids.iter().zip(nodes).fold(0, |acc, (g, &i)| acc * g.len() + i)
}

pub(crate) fn product_len(grids: &[PeriodicGrid]) -> usize {
    grids.iter().map(PeriodicGrid::len).product()
}

/// Splits a product index into per-grid node indices.
pub(crate) fn split_index(grids: &[PeriodicGrid], mut idx: usize, out: &mut [usize]) {
    for (j, g) in grids.iter().enumerate().rev() {
        out[j] = idx % g.len();
        idx /= g.len();
    }
}

/// Coordinates (scale-major) of a product node.
pub(crate) fn product_coords(grids: &[PeriodicGrid], idx: usize) -> Vec<f64> {
    let d = grids.first().map_or(0, PeriodicGrid::dim);
    let mut nodes = vec![0; grids.len()];
    split_index(grids, idx, &mut nodes);
    let mut y = vec![0.0; d * grids.len()];
    for (j, (g, &i)) in grids.iter().zip(&nodes).enumerate() {
        g.node_coords(i, &mut y[j * d..(j + 1) * d]);
    }
    y
}

impl HomTable {
    pub fn slow_len(&self) -> usize {
        product_len(&self.slow)
    }

    pub fn z_slice(&self, slow_index: usize) -> &[f64] {
        let m = self.zgrid.len();
        &self.values[slow_index * m..(slow_index + 1) * m]
    }

    /// The `z`-table at slow coordinates `y`, multilinear in `y` with
    /// periodic wraparound.
    pub fn z_table_at(&self, y: &[f64]) -> Result<ZTable> {
        let d = self.dim;
        if y.len() != d * self.slow.len() {
            return Err(Error::Domain(format!(
                "level-{} table takes {} slow coordinates, got {}",
                self.level,
                d * self.slow.len(),
                y.len()
            )));
        }
        if let Some(v) = y.iter().find(|v| !(**v >= 0.0 && **v < 1.0)) {
            return Err(Error::OutOfBox(format!("slow coordinate {v} outside [0,1)")));
        }
        // per slow axis: (left node, right node, weight of right)
        let mut axes = Vec::with_capacity(y.len());
        for (j, g) in self.slow.iter().enumerate() {
            let n = g.n();
            for a in 0..d {
                let (i, w) = locate(y[j * d + a] * n as f64, n + 1).expect("coordinate in [0,1)");
                axes.push((i % n, (i + 1) % n, w));
            }
        }
        let m = self.zgrid.len();
        let mut values = vec![0.0; m];
        let mut nodes = vec![0usize; self.slow.len()];
        for corner in 0..(1usize << axes.len()) {
            let mut weight = 1.0;
            for (j, g) in self.slow.iter().enumerate() {
                let mut ij = [0usize; 2];
                for a in 0..d {
                    let (l, r, w) = axes[j * d + a];
                    let right = corner >> (j * d + a) & 1 == 1;
                    ij[a] = if right { r } else { l };
                    weight *= if right { w } else { 1.0 - w };
                }
                nodes[j] = ij[0] + g.n() * ij[1];
            }
            if weight == 0.0 {
                continue;
            }
            let src = self.z_slice(product_index(&self.slow, &nodes));
            if weight == 1.0 {
                values.copy_from_slice(src);
                break;
            }
            for (v, s) in values.iter_mut().zip(src) {
                *v += weight * s;
            }
        }
        Ok(ZTable { grid: self.zgrid, values })
    }

    /// CSV layout: `#`-prefixed header lines with level, dimension, growth
    /// constants, slow grids and z-grid, then `slow_index,z_index,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# level={}", self.level);
        let _ = writeln!(s, "# dim={}", self.dim);
        let _ = writeln!(s, "# growth={},{},{}", self.growth.c1, self.growth.c2, self.growth.p);
        let slow: Vec<String> = self.slow.iter().map(|g| g.n().to_string()).collect();
        let _ = writeln!(s, "# slow={}", slow.join(";"));
        let _ = writeln!(s, "# zgrid={},{}", self.zgrid.radius, self.zgrid.count);
        s.push_str("slow_index,z_index,value\n");
        let m = self.zgrid.len();
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", i / m, i % m, v);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let perr = |m: String| Error::Parse(m);
        let mut level = None;
        let mut dim = None;
        let mut growth = None;
        let mut slow_ns: Option<Vec<usize>> = None;
        let mut zg = None;
        let mut lines = text.lines().enumerate().peekable();
        while let Some((_, line)) = lines.peek() {
            let Some(meta) = line.strip_prefix("# ") else { break };
            let (k, v) = meta.split_once('=').ok_or_else(|| perr(format!("bad header '{line}'")))?;
            let nums = |v: &str| -> Result<Vec<f64>> {
                v.split(',').map(|t| t.parse::<f64>().map_err(|_| perr(format!("bad number in '{line}'")))).collect()
            };
            match k {
                "level" => level = v.parse::<usize>().ok(),
                "dim" => dim = v.parse::<usize>().ok(),
                "growth" => {
                    let g = nums(v)?;
                    if g.len() != 3 {
                        return Err(perr("growth needs c1,c2,p".into()));
                    }
                    growth = Some(GrowthBounds::new(g[0], g[1], g[2])?);
                }
                "slow" => {
                    slow_ns = Some(if v.is_empty() {
                        vec![]
                    } else {
                        v.split(';')
                            .map(|t| t.parse::<usize>().map_err(|_| perr(format!("bad slow grid '{t}'"))))
                            .collect::<Result<_>>()?
                    })
                }
                "zgrid" => {
                    let (r, c) = v.split_once(',').ok_or_else(|| perr("zgrid needs radius,count".into()))?;
                    zg = Some((
                        r.parse::<f64>().map_err(|_| perr("bad zgrid radius".into()))?,
                        c.parse::<usize>().map_err(|_| perr("bad zgrid count".into()))?,
                    ));
                }
                other => return Err(perr(format!("unknown header key '{other}'"))),
            }
            lines.next();
        }
        let missing = |k: &str| perr(format!("header lacks {k}"));
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let (radius, count) = zg.ok_or_else(|| missing("zgrid"))?;
        let zgrid = ZGrid::new(dim, radius, count)?;
        let slow = slow_ns
            .ok_or_else(|| missing("slow"))?
            .into_iter()
            .map(|n| PeriodicGrid::new(dim, n))
            .collect::<Result<Vec<_>>>()?;
        let mut t = HomTable {
            level: level.ok_or_else(|| missing("level"))?,
            dim,
            values: vec![f64::NAN; product_len(&slow) * zgrid.len()],
            slow,
            zgrid,
            growth: growth.ok_or_else(|| missing("growth"))?,
        };
        if t.level != t.slow.len() + 1 {
            return Err(perr(format!("level {} inconsistent with {} slow grids", t.level, t.slow.len())));
        }
        match lines.next() {
            Some((_, "slow_index,z_index,value")) => {}
            _ => return Err(perr("missing column header".into())),
        }
        let m = t.zgrid.len();
        let mut seen = 0;
        for (no, line) in lines {
            let mut parts = line.split(',');
            let mut next = || parts.next().ok_or_else(|| perr(format!("line {}: too few columns", no + 1)));
            let si: usize = next()?.parse().map_err(|_| perr(format!("line {}: bad slow index", no + 1)))?;
            let zi: usize = next()?.parse().map_err(|_| perr(format!("line {}: bad z index", no + 1)))?;
            let v: f64 = next()?.parse().map_err(|_| perr(format!("line {}: bad value", no + 1)))?;
            let idx = si * m + zi;
            if zi >= m || idx >= t.values.len() {
                return Err(perr(format!("line {}: index out of range", no + 1)));
            }
            t.values[idx] = v;
            seen += 1;
        }
        if seen != t.values.len() {
            return Err(perr(format!("expected {} rows, found {seen}", t.values.len())));
        }
        Ok(t)
    }
}

/// Multilinear interpolation of a table at slow coordinates `y` and `z`.
/// Exact at nodes; no extrapolation.
pub fn hom_query(table: &HomTable, y: &[f64], z: &[f64]) -> Result<f64> {
    if z.len() != table.dim {
        return Err(Error::Domain(format!("z has length {}, expected {}", z.len(), table.dim)));
    }
    table.z_table_at(y)?.value(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_table(radius: f64, count: usize) -> HomTable {
        let zgrid = ZGrid::new(1, radius, count).unwrap();
        HomTable {
            level: 1,
            dim: 1,
            slow: vec![],
            zgrid,
            growth: GrowthBounds::new(1.0, 1.0, 2.0).unwrap(),
            values: zgrid.nodes().iter().map(|z| z[0] * z[0]).collect(),
        }
    }

    #[test]
    fn query_at_nodes_and_chords() {
        let t = quad_table(1.0, 3);
        assert_eq!(hom_query(&t, &[], &[1.0]).unwrap(), 1.0);
        assert_eq!(hom_query(&t, &[], &[0.0]).unwrap(), 0.0);
        assert_eq!(hom_query(&t, &[], &[0.5]).unwrap(), 0.5);
        assert!(matches!(hom_query(&t, &[], &[1.5]), Err(Error::OutOfBox(_))));
    }

    #[test]
    fn interpolation_error_bound() {
        // chord error of a convex quadratic is at most spacing² f''/8
        let t = quad_table(1.0, 41);
        let h = t.zgrid.spacing();
        let mut worst: f64 = 0.0;
        for k in 0..=4000 {
            let z = -1.0 + 2.0 * k as f64 / 4000.0;
            worst = worst.max((hom_query(&t, &[], &[z]).unwrap() - z * z).abs());
        }
        assert!(worst <= h * h * 2.0 / 8.0 + 1e-15, "{worst}");
        assert!(worst < 2.0 * h * h * 2.0);
    }

    #[test]
    fn slow_axes_interpolate_periodically() {
        let zgrid = ZGrid::new(1, 1.0, 3).unwrap();
        let g = PeriodicGrid::new(1, 4).unwrap();
        // value = (1 + y-node index) * z²
        let values = (0..4).flat_map(|i| [1.0, 0.0, 1.0].map(|v| v * (1 + i) as f64)).collect();
        let t = HomTable { level: 2, dim: 1, slow: vec![g], zgrid, growth: GrowthBounds::new(1.0, 4.0, 2.0).unwrap(), values };
        assert_eq!(hom_query(&t, &[0.25], &[1.0]).unwrap(), 2.0);
        assert_eq!(hom_query(&t, &[0.125], &[1.0]).unwrap(), 1.5);
        // between the last node (0.75) and the wrapped first one
        assert_eq!(hom_query(&t, &[0.875], &[1.0]).unwrap(), 2.5);
        assert!(hom_query(&t, &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let zgrid = ZGrid::new(2, 1.5, 5).unwrap();
        let slow = vec![PeriodicGrid::new(2, 3).unwrap()];
        let n = product_len(&slow) * zgrid.len();
        let t = HomTable {
            level: 2,
            dim: 2,
            slow,
            zgrid,
            growth: GrowthBounds::new(0.3, 1.0 / 3.0, 2.5).unwrap(),
            values: (0..n).map(|i| (i as f64 * 0.1).exp() / 7.0).collect(),
        };
        let back = HomTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(t, back);
        assert_eq!(t.to_csv(), back.to_csv());
    }
}

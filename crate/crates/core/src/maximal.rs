//! Local Hardy-Littlewood maximal function on a box and the reflection
//! extension across its faces.
//!
//! Balls are open and radii run over the ladder `k * h`, `h` the smallest
//! grid spacing, so the continuum supremum is approached from below. Ball
//! sums visit nodes in lexicographic order; an exhaustive scan in the same
//! order reproduces the output bit for bit.

use crate::error::{Error, Result};
use crate::geometry::{holder_seminorm_estimate, BoundedDomain, FieldSlice, SpatialGrid};

const RADIUS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MaximalReport {
    pub output: FieldSlice,
    /// Number of admissible radii at each node (0: the node value itself).
    pub radii_used: Vec<usize>,
}

impl MaximalReport {
    /// Discrete `||M f||_p / ||f||_p` over the nodes.
    pub fn lp_ratio(&self, input: &FieldSlice, p: f64) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p);
        norm(self.output.values()) / norm(input.values())
    }
}

/// Flat-index offsets of the open ball of radius `k * step`, lexicographic,
/// together with the multi-index offsets (for bounds checks).
fn ball_offsets(grid: &SpatialGrid, k: usize, step: f64) -> Vec<Vec<isize>> {
    let d = grid.dim();
    let h = grid.spacing();
    let r = k as f64 * step;
    let r2 = r * r * (1.0 - RADIUS_TOL);
    let reach: Vec<isize> = h.iter().map(|ha| (r / ha).ceil() as isize).collect();
    let mut out = Vec::new();
    let mut cur: Vec<isize> = reach.iter().map(|m| -m).collect();
    loop {
        let dist2: f64 = cur
            .iter()
            .zip(h)
            .map(|(o, ha)| {
                let v = *o as f64 * ha;
                v * v
            })
            .sum();
        if dist2 < r2 {
            out.push(cur.clone());
        }
        // odometer increment, last axis fastest
        let mut axis = d;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if cur[axis] < reach[axis] {
                cur[axis] += 1;
                for a in axis + 1..d {
                    cur[a] = -reach[a];
                }
                break;
            }
        }
    }
}

fn require_scalar(f: &FieldSlice) -> Result<()> {
    if f.components() != 1 {
        return Err(Error::InvalidParameter(format!(
            "maximal operators act on scalar slices, got {} components",
            f.components()
        )));
    }
    Ok(())
}

/// `M_D f(x) = sup_{0 < r < dist(x, D^c)} avg_{A(x, r)} |f|`, with `D` the
/// slice's grid box. Nodes within one spacing of the boundary return `|f(x)|`.
pub fn local_maximal(f: &FieldSlice) -> Result<MaximalReport> {
    require_scalar(f)?;
    let grid = f.grid();
    let d = grid.dim();
    let domain = grid.domain();
    let step = grid.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    let vals = f.values();
    let n = grid.len();
    let mut x = vec![0.0; d];
    let dists: Vec<f64> = (0..n)
        .map(|i| {
            grid.node_point(i, &mut x);
            domain.dist_to_complement(&x)
        })
        .collect();
    let max_dist = dists.iter().copied().fold(0.0, f64::max);
    let mut balls: Vec<Vec<Vec<isize>>> = Vec::new();
    let mut k = 1;
    while (k as f64) * step < max_dist * (1.0 - RADIUS_TOL) {
        balls.push(ball_offsets(grid, k, step));
        k += 1;
    }
    let strides = grid.strides();
    let flat_balls: Vec<Vec<isize>> = balls
        .iter()
        .map(|ball| {
            ball.iter()
                .map(|off| off.iter().zip(strides).map(|(o, st)| o * *st as isize).sum())
                .collect()
        })
        .collect();
    let mut output = Vec::with_capacity(n);
    let mut radii_used = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = vals[i].abs();
        let mut used = 0;
        for (kk, ball) in flat_balls.iter().enumerate() {
            if ((kk + 1) as f64) * step >= dists[i] * (1.0 - RADIUS_TOL) {
                break;
            }
            used += 1;
            let mut s = 0.0;
            for off in ball {
                s += vals[(i as isize + off) as usize].abs();
            }
            best = best.max(s / ball.len() as f64);
        }
        output.push(best);
        radii_used.push(used);
    }
    Ok(MaximalReport {
        output: FieldSlice::new(grid.clone(), 1, output)?,
        radii_used,
    })
}

/// Hardy-Littlewood maximal function of `f` extended by zero outside its box,
/// radii capped by the box diameter. Ball averages count lattice points
/// outside the box as zeros.
pub fn global_maximal(f: &FieldSlice) -> Result<MaximalReport> {
    require_scalar(f)?;
    let grid = f.grid();
    let d = grid.dim();
    let step = grid.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    let diam = grid.domain().diameter();
    let vals = f.values();
    let n = grid.len();
    let mut balls = Vec::new();
    let mut k = 1;
    while (k as f64) * step < diam * (1.0 - RADIUS_TOL) {
        balls.push(ball_offsets(grid, k, step));
        k += 1;
    }
    let nodes = grid.nodes();
    let mut m = vec![0usize; d];
    let mut output = Vec::with_capacity(n);
    for i in 0..n {
        grid.multi_index(i, &mut m);
        let mut best = vals[i].abs();
        for ball in &balls {
            let mut s = 0.0;
            for off in ball {
                let mut flat = 0usize;
                let mut inside = true;
                for a in 0..d {
                    let j = m[a] as isize + off[a];
                    if j < 0 || j >= nodes[a] as isize {
                        inside = false;
                        break;
                    }
                    flat += j as usize * grid.strides()[a];
                }
                if inside {
                    s += vals[flat].abs();
                }
            }
            best = best.max(s / ball.len() as f64);
        }
        output.push(best);
    }
    Ok(MaximalReport {
        output: FieldSlice::new(grid.clone(), 1, output)?,
        radii_used: vec![balls.len(); n],
    })
}

/// Result of [`extend_reflection`].
#[derive(Debug, Clone, PartialEq)]
pub struct Extension {
    /// Reflected values times the cutoff.
    pub extended: FieldSlice,
    /// Reflected values before the cutoff.
    pub reflected: FieldSlice,
    /// Margin in nodes per axis.
    pub margin_nodes: Vec<usize>,
}

impl Extension {
    /// Values on the original box, in its node order.
    pub fn restrict(&self) -> Vec<f64> {
        let g = self.extended.grid();
        let d = g.dim();
        let inner: Vec<usize> = g
            .nodes()
            .iter()
            .zip(&self.margin_nodes)
            .map(|(n, m)| n - 2 * m)
            .collect();
        let count: usize = inner.iter().product();
        let mut idx = vec![0usize; d];
        let mut out = Vec::with_capacity(count);
        for flat in 0..count {
            let mut rem = flat;
            for a in (0..d).rev() {
                idx[a] = rem % inner[a] + self.margin_nodes[a];
                rem /= inner[a];
            }
            out.push(self.extended.at(g.flat_index(&idx), 0));
        }
        out
    }

    /// `seminorm(Q f) / seminorm(f)` by pair scans on both grids.
    pub fn holder_ratio(&self, original: &FieldSlice, alpha: f64) -> Result<f64> {
        let num = holder_seminorm_estimate(&self.extended, alpha)?;
        let den = holder_seminorm_estimate(original, alpha)?;
        Ok(if den == 0.0 {
            if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            num / den
        })
    }
}

/// `1 - (10 s^3 - 15 s^4 + 6 s^5)`: C^2, equal to 1 at 0 and 0 at 1.
pub fn cutoff_profile(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Even reflection across every face of the box, then a smooth cutoff that
/// is 1 on the box and vanishes at the outer edge of the margin. The margin
/// is rounded to whole grid spacings per axis.
pub fn extend_reflection(f: &FieldSlice, margin: f64) -> Result<Extension> {
    require_scalar(f)?;
    let grid = f.grid();
    let d = grid.dim();
    let domain = grid.domain();
    if !(margin > 0.0) {
        return Err(Error::InvalidParameter(format!("margin must be positive, got {margin}")));
    }
    let mut margin_nodes = Vec::with_capacity(d);
    for a in 0..d {
        if margin > 0.5 * domain.width(a) * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "margin {margin} exceeds half the box width {} on axis {a}",
                domain.width(a)
            )));
        }
        let mn = (margin / grid.spacing()[a]).round() as usize;
        margin_nodes.push(mn.max(1));
    }
    let lo: Vec<f64> = (0..d)
        .map(|a| domain.lo()[a] - margin_nodes[a] as f64 * grid.spacing()[a])
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|a| domain.hi()[a] + margin_nodes[a] as f64 * grid.spacing()[a])
        .collect();
    let nodes: Vec<usize> = (0..d).map(|a| grid.nodes()[a] + 2 * margin_nodes[a]).collect();
    let big = SpatialGrid::new(BoundedDomain::new(lo, hi)?, nodes)?;
    let mut j = vec![0usize; d];
    let mut src = vec![0usize; d];
    let mut reflected = Vec::with_capacity(big.len());
    let mut extended = Vec::with_capacity(big.len());
    for flat in 0..big.len() {
        big.multi_index(flat, &mut j);
        let mut cut = 1.0;
        let mut outside = false;
        for a in 0..d {
            let n = grid.nodes()[a] as isize;
            let i = j[a] as isize - margin_nodes[a] as isize;
            let (mirror, depth) = if i < 0 {
                (-i, -i)
            } else if i > n - 1 {
                (2 * (n - 1) - i, i - (n - 1))
            } else {
                (i, 0)
            };
            src[a] = mirror as usize;
            if depth > 0 {
                outside = true;
                cut *= cutoff_profile(depth as f64 / margin_nodes[a] as f64);
            }
        }
        let v = f.at(grid.flat_index(&src), 0);
        reflected.push(v);
        extended.push(if outside { v * cut } else { v });
    }
    Ok(Extension {
        extended: FieldSlice::new(big.clone(), 1, extended)?,
        reflected: FieldSlice::new(big, 1, reflected)?,
        margin_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> SpatialGrid {
        SpatialGrid::uniform(BoundedDomain::interval(0.0, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn constant_input_gives_constant_output() {
        let f = FieldSlice::from_fn(line(41), |_| -2.0).unwrap();
        let m = local_maximal(&f).unwrap();
        assert!(m.output.values().iter().all(|&v| v == 2.0));
        let g = global_maximal(&FieldSlice::from_fn(line(21), |_| 3.0).unwrap()).unwrap();
        // the r = h ball is the node itself
        assert!(g.output.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn linear_input_is_a_fixed_point() {
        let f = FieldSlice::from_fn(line(101), |x| x[0]).unwrap();
        let m = local_maximal(&f).unwrap();
        for (a, b) in m.output.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn half_open_indicator() {
        // indicator of [0, 1/2), left-closed as in the threshold drifts
        let grid = line(101);
        let f = FieldSlice::from_fn(grid, |x| if x[0] < 0.5 - 1e-12 { 1.0 } else { 0.0 }).unwrap();
        let m = local_maximal(&f).unwrap();
        assert_eq!(m.output.at(75, 0), 0.0);
        let at_half = m.output.at(50, 0);
        assert!((at_half - 0.5).abs() <= 0.01 + 1e-12, "{at_half}");
        assert!(at_half < 0.5);
    }

    #[test]
    fn boundary_nodes_return_own_value() {
        let f = FieldSlice::from_fn(line(11), |x| x[0] - 0.3).unwrap();
        let m = local_maximal(&f).unwrap();
        assert_eq!(m.radii_used[0], 0);
        assert_eq!(m.radii_used[1], 0);
        assert_eq!(m.output.at(1, 0), (0.1f64 - 0.3).abs());
        assert!(m.radii_used[5] >= 4);
    }

    #[test]
    fn reflection_mirrors_across_lower_face() {
        let grid = line(101);
        let h = grid.spacing()[0];
        let f = FieldSlice::from_fn(grid, |x| x[0]).unwrap();
        let ext = extend_reflection(&f, 0.2).unwrap();
        let m = ext.margin_nodes[0];
        assert_eq!(m, 20);
        // node just below x = 0 reflects to x = h
        assert!((ext.reflected.at(m - 1, 0) - h).abs() < 1e-15);
        assert_eq!(ext.restrict(), f.values());
    }

    #[test]
    fn extension_of_one_is_the_cutoff() {
        let f = FieldSlice::from_fn(line(41), |_| 1.0).unwrap();
        let ext = extend_reflection(&f, 0.25).unwrap();
        let v = ext.extended.values();
        assert_eq!(v[0], 0.0);
        assert_eq!(*v.last().unwrap(), 0.0);
        let m = ext.margin_nodes[0];
        assert!(v[m..v.len() - m].iter().all(|&x| x == 1.0));
        assert!(v[..m].windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn margin_too_large_is_rejected() {
        let f = FieldSlice::from_fn(line(11), |_| 1.0).unwrap();
        assert!(extend_reflection(&f, 0.6).is_err());
    }

    #[test]
    fn cutoff_endpoints_and_smoothness() {
        assert_eq!(cutoff_profile(0.0), 1.0);
        assert_eq!(cutoff_profile(1.0), 0.0);
        assert!((cutoff_profile(0.5) - 0.5).abs() < 1e-15);
        // first derivative vanishes at both ends
        let h = 1e-6;
        assert!(((cutoff_profile(h) - 1.0) / h).abs() < 1e-9);
        assert!((cutoff_profile(1.0 - h) / h).abs() < 1e-9);
    }
}

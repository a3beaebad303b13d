//! Periodic square lattice geometry: sites, torus metric, balls, fattenings and
//! the strip regions used by the flux twists and the lemma checks.

use serde::{Deserialize, Serialize};

use crate::error::{HallError, Result};

/// Periodic `lx × ly` lattice with 1-based coordinates `(x, y)`.
///
/// Site ids are `(x - 1) + lx * (y - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusLattice {
    lx: usize,
    ly: usize,
}

/// Sorted, duplicate-free set of site ids.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Region {
    sites: Vec<usize>,
}

impl Region {
    pub fn new(mut sites: Vec<usize>) -> Self {
        sites.sort_unstable();
        sites.dedup();
        Region { sites }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, s: usize) -> bool {
        self.sites.binary_search(&s).is_ok()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.sites.iter().all(|&s| other.contains(s))
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut v = self.sites.clone();
        v.extend_from_slice(&other.sites);
        Region::new(v)
    }

    pub fn intersection(&self, other: &Region) -> Region {
        Region::new(self.sites.iter().copied().filter(|&s| other.contains(s)).collect())
    }

    /// Complement inside a lattice with `n_sites` sites.
    pub fn complement(&self, n_sites: usize) -> Region {
        Region::new((0..n_sites).filter(|&s| !self.contains(s)).collect())
    }
}

/// Which of the two cuts of a periodic coordinate a term straddles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cut {
    /// Between coordinate `l` and `1`.
    Origin,
    /// Between coordinate `h` and `h + 1`, with `h = ceil(l / 2)`.
    Middle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl TorusLattice {
    /// Square `l × l` torus.
    pub fn square(l: usize) -> Result<Self> {
        if l < 2 {
            return Err(HallError::Validation(format!("torus side must be >= 2, got {l}")));
        }
        Ok(TorusLattice { lx: l, ly: l })
    }

    /// Periodic chain of `n` sites, stored as an `n × 1` torus.
    pub fn chain(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(HallError::Validation(format!("chain length must be >= 2, got {n}")));
        }
        Ok(TorusLattice { lx: n, ly: 1 })
    }

    pub fn lx(&self) -> usize {
        self.lx
    }

    pub fn ly(&self) -> usize {
        self.ly
    }

    /// Linear size `L` (the x extent).
    pub fn size(&self) -> usize {
        self.lx
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn is_square(&self) -> bool {
        self.lx == self.ly
    }

    pub fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.lx,
            Axis::Y => self.ly,
        }
    }

    pub fn site(&self, x: usize, y: usize) -> usize {
        debug_assert!((1..=self.lx).contains(&x) && (1..=self.ly).contains(&y));
        (x - 1) + self.lx * (y - 1)
    }

    /// Site id for arbitrary integer coordinates, wrapped periodically.
    pub fn site_wrapped(&self, x: i64, y: i64) -> usize {
        let wx = (x - 1).rem_euclid(self.lx as i64) as usize + 1;
        let wy = (y - 1).rem_euclid(self.ly as i64) as usize + 1;
        self.site(wx, wy)
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s % self.lx + 1, s / self.lx + 1)
    }

    pub fn coord(&self, s: usize, axis: Axis) -> usize {
        let (x, y) = self.coords(s);
        match axis {
            Axis::X => x,
            Axis::Y => y,
        }
    }

    fn periodic_gap(d: usize, l: usize) -> usize {
        d.min(l - d)
    }

    /// Torus metric `min(|Δx|, L − |Δx|) + min(|Δy|, L − |Δy|)`.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let (xa, ya) = self.coords(a);
        let (xb, yb) = self.coords(b);
        Self::periodic_gap(xa.abs_diff(xb), self.lx) + Self::periodic_gap(ya.abs_diff(yb), self.ly)
    }

    pub fn ball(&self, u: usize, r: usize) -> Region {
        Region::new((0..self.n_sites()).filter(|&s| self.distance(u, s) <= r).collect())
    }

    pub fn set_distance(&self, s: usize, z: &Region) -> usize {
        z.sites().iter().map(|&t| self.distance(s, t)).min().unwrap_or(usize::MAX)
    }

    /// `Z(M) = {s : d(s, Z) ≤ M}`.
    pub fn fatten(&self, z: &Region, m: usize) -> Region {
        Region::new((0..self.n_sites()).filter(|&s| self.set_distance(s, z) <= m).collect())
    }

    pub fn diameter(&self, z: &Region) -> usize {
        let s = z.sites();
        let mut d = 0;
        for (i, &a) in s.iter().enumerate() {
            for &b in &s[i + 1..] {
                d = d.max(self.distance(a, b));
            }
        }
        d
    }

    /// Smallest `r` such that `z` fits in some ball `b_u(r)`.
    pub fn covering_radius(&self, z: &Region) -> usize {
        (0..self.n_sites())
            .map(|u| z.sites().iter().map(|&s| self.distance(u, s)).max().unwrap_or(0))
            .min()
            .unwrap_or(0)
    }

    /// Width `h` of the charge-counting half: coordinates `1..=h`.
    pub fn half(&self, axis: Axis) -> usize {
        self.extent(axis).div_ceil(2)
    }

    /// Whether `s` lies in the half `1 ≤ coord ≤ h` whose charge generates the twist.
    pub fn in_half(&self, s: usize, axis: Axis) -> bool {
        self.coord(s, axis) <= self.half(axis)
    }

    pub fn half_region(&self, axis: Axis) -> Region {
        Region::new((0..self.n_sites()).filter(|&s| self.in_half(s, axis)).collect())
    }

    /// Signed periodic coordinate in `(−L/2, L/2]`, zero at coordinate 1.
    pub fn signed_coord(&self, s: usize, axis: Axis) -> i64 {
        let l = self.extent(axis) as i64;
        let c = self.coord(s, axis) as i64 - 1;
        let mut v = c.rem_euclid(l);
        if 2 * v > l {
            v -= l;
        }
        v
    }

    // Region bounds use the linear size `L`, so chains keep their full y extent.

    /// Sites with `|x̃| ≤ L/4`.
    pub fn omega_x(&self) -> Region {
        self.band(Axis::X, self.size() as f64 / 4.0)
    }

    /// Sites with `|ỹ| ≤ L/4`.
    pub fn omega_y(&self) -> Region {
        self.band(Axis::Y, self.size() as f64 / 4.0)
    }

    /// Sites with `|ỹ| ≤ 5L/24 − R`.
    pub fn omega(&self, r: usize) -> Region {
        self.band(Axis::Y, 5.0 * self.size() as f64 / 24.0 - r as f64)
    }

    /// Sites with `|x̃| ≤ L/8 − R` and `|ỹ| ≤ L/8 − R`.
    pub fn omega0(&self, r: usize) -> Region {
        let b = self.size() as f64 / 8.0 - r as f64;
        let bx = self.band(Axis::X, b);
        let by = self.band(Axis::Y, b);
        bx.intersection(&by)
    }

    /// Sites with `|signed coord| ≤ floor(bound)`; empty for negative bounds.
    pub fn band(&self, axis: Axis, bound: f64) -> Region {
        if bound < 0.0 {
            return Region::default();
        }
        let b = bound.floor() as i64;
        Region::new(
            (0..self.n_sites())
                .filter(|&s| self.signed_coord(s, axis).abs() <= b)
                .collect(),
        )
    }

    /// Cuts crossed by the shortest periodic arcs between the members of `sites`
    /// lying inside and outside the counting half.
    pub fn crossed_cuts(&self, sites: &[usize], axis: Axis) -> Vec<Cut> {
        let l = self.extent(axis) as i64;
        let mut out = Vec::new();
        for &a in sites {
            if !self.in_half(a, axis) {
                continue;
            }
            for &b in sites {
                if self.in_half(b, axis) {
                    continue;
                }
                let ca = self.coord(a, axis) as i64;
                let cb = self.coord(b, axis) as i64;
                // forward distance from a to b (increasing coordinate)
                let fwd = (cb - ca).rem_euclid(l);
                let cut = if 2 * fwd < l {
                    // walking up from a: the first boundary left is h | h+1
                    Cut::Middle
                } else if 2 * fwd > l {
                    Cut::Origin
                } else {
                    // antipodal pair: ambiguous, counts as both
                    out.push(Cut::Middle);
                    Cut::Origin
                };
                out.push(cut);
            }
        }
        out.sort_by_key(|c| *c as u8);
        out.dedup();
        out
    }
}

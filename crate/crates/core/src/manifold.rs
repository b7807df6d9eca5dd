//! Background manifolds `(M, g0)`: flat tori of any period in dimension 2..=4
//! and the round 2-sphere, together with their uniform grids.
//!
//! Points are stored in chart coordinates. On the torus these are Cartesian
//! coordinates in the fundamental cube `[0, period)^m`; on the sphere they are
//! `(colatitude, longitude)` with colatitude in `[0, pi]` and longitude in
//! `[0, 2 pi)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported manifold dimension.
pub const MAX_DIM: usize = 4;

/// Default cap on the number of grid nodes.
pub const DEFAULT_NODE_CAP: usize = 1 << 24;

/// A point in chart coordinates.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    c: [f64; MAX_DIM],
    dim: u8,
}

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "point dimension must be in 1..={MAX_DIM}"
        );
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self {
            c,
            dim: coords.len() as u8,
        }
    }

    /// Sphere point from colatitude and longitude.
    pub fn sphere(colatitude: f64, longitude: f64) -> Self {
        Self::new(&[colatitude, longitude])
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.c[i]
    }
}

impl std::fmt::Debug for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Point").field(&self.coords()).finish()
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom("point must have 1..=4 coordinates"));
        }
        Ok(Point::new(&v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifold {
    FlatTorus { dim: usize, period: f64 },
    RoundSphere2 { radius: f64 },
}

impl Manifold {
    pub fn torus(dim: usize, period: f64) -> Result<Self> {
        let m = Manifold::FlatTorus { dim, period };
        m.validate()?;
        Ok(m)
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        let m = Manifold::RoundSphere2 { radius };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Manifold::FlatTorus { dim, period } => {
                if !(2..=MAX_DIM).contains(&dim) {
                    return Err(Error::InvalidManifold(format!(
                        "torus dimension {dim} outside 2..={MAX_DIM}"
                    )));
                }
                if !(period > 0.0 && period.is_finite()) {
                    return Err(Error::InvalidManifold(format!(
                        "torus period must be positive, got {period}"
                    )));
                }
            }
            Manifold::RoundSphere2 { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidManifold(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        match *self {
            Manifold::FlatTorus { dim, .. } => dim,
            Manifold::RoundSphere2 { .. } => 2,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Manifold::FlatTorus { .. })
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Manifold::FlatTorus { dim, period } => period * (dim as f64).sqrt() / 2.0,
            Manifold::RoundSphere2 { radius } => PI * radius,
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Manifold::FlatTorus { dim, period } => period.powi(dim as i32),
            Manifold::RoundSphere2 { radius } => 4.0 * PI * radius * radius,
        }
    }

    /// Injectivity radius.
    pub fn injectivity_radius(&self) -> f64 {
        match *self {
            Manifold::FlatTorus { period, .. } => period / 2.0,
            Manifold::RoundSphere2 { radius } => PI * radius,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        if p.dim() != self.dim() || p.coords().iter().any(|c| !c.is_finite()) {
            return false;
        }
        match *self {
            Manifold::FlatTorus { period, .. } => {
                p.coords().iter().all(|&c| (0.0..period).contains(&c))
            }
            Manifold::RoundSphere2 { .. } => {
                (0.0..=PI).contains(&p.get(0)) && (0.0..2.0 * PI).contains(&p.get(1))
            }
        }
    }

    /// Maps arbitrary chart coordinates into the fundamental domain.
    pub fn wrap(&self, p: &Point) -> Point {
        match *self {
            Manifold::FlatTorus { period, dim } => {
                let mut c = [0.0; MAX_DIM];
                for (i, ci) in c.iter_mut().enumerate().take(dim) {
                    *ci = wrap_coord(p.get(i), period);
                }
                Point::new(&c[..dim])
            }
            Manifold::RoundSphere2 { .. } => {
                let u = sphere_unit(p);
                sphere_from_unit(u)
            }
        }
    }

    /// The g0 distance between two points of the fundamental domain.
    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        g0_distance(self, x, y)
    }
}

#[inline]
pub(crate) fn wrap_coord(c: f64, period: f64) -> f64 {
    let w = c.rem_euclid(period);
    if w >= period {
        0.0
    } else {
        w
    }
}

/// Signed minimal-image difference `b - a` on a circle of the given period.
#[inline]
pub(crate) fn min_image(a: f64, b: f64, period: f64) -> f64 {
    let mut d = (b - a).rem_euclid(period);
    if d > period / 2.0 {
        d -= period;
    }
    d
}

/// Distance in the background metric.
///
/// On the torus this is the minimum over the `3^m` lattice shifts of the
/// Euclidean distance; on the sphere it is `radius` times the angle between
/// the unit vectors, computed as `atan2(|x cross y|, <x, y>)` so that short
/// arcs keep full precision.
pub fn g0_distance(mfd: &Manifold, x: &Point, y: &Point) -> f64 {
    match *mfd {
        Manifold::FlatTorus { dim, period } => {
            let mut best = f64::INFINITY;
            let shifts = 3usize.pow(dim as u32);
            for s in 0..shifts {
                let mut code = s;
                let mut acc = 0.0;
                for k in 0..dim {
                    let shift = (code % 3) as f64 - 1.0;
                    code /= 3;
                    let d = y.get(k) + shift * period - x.get(k);
                    acc += d * d;
                }
                best = best.min(acc);
            }
            best.sqrt()
        }
        Manifold::RoundSphere2 { radius } => {
            radius * unit_angle(sphere_unit(x), sphere_unit(y))
        }
    }
}

/// Fast torus distance by per-axis minimal image (equal to the brute-force
/// shift minimum for points of the fundamental domain).
#[inline]
pub(crate) fn torus_distance_fast(period: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..x.len() {
        let d = min_image(x[k], y[k], period);
        acc += d * d;
    }
    acc.sqrt()
}

#[inline]
pub(crate) fn sphere_unit(p: &Point) -> [f64; 3] {
    let (st, ct) = p.get(0).sin_cos();
    let (sp, cp) = p.get(1).sin_cos();
    [st * cp, st * sp, ct]
}

#[inline]
pub(crate) fn sphere_from_unit(u: [f64; 3]) -> Point {
    let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let z = (u[2] / norm).clamp(-1.0, 1.0);
    let theta = z.acos();
    let mut phi = u[1].atan2(u[0]);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    if phi >= 2.0 * PI {
        phi = 0.0;
    }
    Point::sphere(theta, phi)
}

/// Angle between two unit vectors, accurate for small and large angles.
#[inline]
pub(crate) fn unit_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cx = a[1] * b[2] - a[2] * b[1];
    let cy = a[2] * b[0] - a[0] * b[2];
    let cz = a[0] * b[1] - a[1] * b[0];
    let cross = (cx * cx + cy * cy + cz * cz).sqrt();
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    cross.atan2(dot)
}

/// Point at fraction `s` along the great-circle arc from `a` to `b`.
#[inline]
pub(crate) fn slerp(a: [f64; 3], b: [f64; 3], angle: f64, s: f64) -> [f64; 3] {
    if angle < 1e-12 {
        return [
            a[0] + s * (b[0] - a[0]),
            a[1] + s * (b[1] - a[1]),
            a[2] + s * (b[2] - a[2]),
        ];
    }
    let sa = angle.sin();
    let wa = ((1.0 - s) * angle).sin() / sa;
    let wb = (s * angle).sin() / sa;
    [
        wa * a[0] + wb * b[0],
        wa * a[1] + wb * b[1],
        wa * a[2] + wb * b[2],
    ]
}

#[derive(Clone, Debug)]
pub(crate) enum Layout {
    Torus,
    /// Poles are nodes `0` and `node_count - 1`; ring `i` in `1..n` holds
    /// `2n` equally spaced longitudes.
    Sphere { per_ring: usize },
}

/// Uniform discretization of a background manifold.
#[derive(Clone, Debug)]
pub struct Grid {
    manifold: Manifold,
    n: usize,
    nodes: Vec<Point>,
    cell_volume: Vec<f64>,
    layout: Layout,
}

/// Builds the uniform grid with `n` nodes per dimension.
///
/// Torus grids have `n^m` nodes at spacing `period / n`. Sphere grids are
/// latitude-longitude lattices with colatitude spacing `pi / n`, `2n`
/// longitudes per ring and single pole nodes; cell areas are exact spherical
/// zone areas.
pub fn build_grid(mfd: &Manifold, n: usize) -> Result<Grid> {
    build_grid_with_cap(mfd, n, DEFAULT_NODE_CAP)
}

pub fn build_grid_with_cap(mfd: &Manifold, n: usize, node_cap: usize) -> Result<Grid> {
    mfd.validate()?;
    if n < 4 {
        return Err(Error::ResolutionTooSmall(n));
    }
    match *mfd {
        Manifold::FlatTorus { dim, period } => {
            let count = (n as u128).pow(dim as u32);
            if count > node_cap as u128 {
                return Err(Error::ResolutionTooLarge {
                    nodes: count,
                    cap: node_cap,
                });
            }
            let count = count as usize;
            let h = period / n as f64;
            let mut strides = [0usize; MAX_DIM];
            let mut s = 1;
            for st in strides.iter_mut().take(dim) {
                *st = s;
                s *= n;
            }
            let mut nodes = Vec::with_capacity(count);
            let mut c = [0.0; MAX_DIM];
            for idx in 0..count {
                let mut r = idx;
                for ck in c.iter_mut().take(dim) {
                    *ck = (r % n) as f64 * h;
                    r /= n;
                }
                nodes.push(Point::new(&c[..dim]));
            }
            Ok(Grid {
                manifold: *mfd,
                n,
                nodes,
                cell_volume: vec![h.powi(dim as i32); count],
                layout: Layout::Torus,
            })
        }
        Manifold::RoundSphere2 { radius } => {
            let per_ring = 2 * n;
            let count = 2 + (n - 1) * per_ring;
            if count > node_cap {
                return Err(Error::ResolutionTooLarge {
                    nodes: count as u128,
                    cap: node_cap,
                });
            }
            let dt = PI / n as f64;
            let dp = PI / n as f64;
            let r2 = radius * radius;
            let mut nodes = Vec::with_capacity(count);
            let mut vol = Vec::with_capacity(count);
            let cap = 2.0 * PI * r2 * (1.0 - (dt / 2.0).cos());
            nodes.push(Point::sphere(0.0, 0.0));
            vol.push(cap);
            for i in 1..n {
                let theta = i as f64 * dt;
                let zone = 2.0 * PI * r2 * ((theta - dt / 2.0).cos() - (theta + dt / 2.0).cos());
                for j in 0..per_ring {
                    nodes.push(Point::sphere(theta, j as f64 * dp));
                    vol.push(zone / per_ring as f64);
                }
            }
            nodes.push(Point::sphere(PI, 0.0));
            vol.push(cap);
            Ok(Grid {
                manifold: *mfd,
                n,
                nodes,
                cell_volume: vol,
                layout: Layout::Sphere { per_ring },
            })
        }
    }
}

impl Grid {
    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    /// Nodes per dimension (torus) or colatitude intervals (sphere).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    #[inline]
    pub fn node(&self, i: usize) -> &Point {
        &self.nodes[i]
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volume
    }

    #[inline]
    pub fn cell_volume(&self, i: usize) -> f64 {
        self.cell_volume[i]
    }

    pub fn total_volume(&self) -> f64 {
        crate::numerics::compensated_sum(self.cell_volume.iter().copied())
    }

    /// Torus grid spacing, or colatitude spacing on the sphere.
    pub fn spacing(&self) -> f64 {
        match self.manifold {
            Manifold::FlatTorus { period, .. } => period / self.n as f64,
            Manifold::RoundSphere2 { radius } => radius * PI / self.n as f64,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.layout, Layout::Torus)
    }

    /// Integer lattice coordinates of a torus node.
    pub(crate) fn torus_multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        let mut r = idx;
        for o in out.iter_mut().take(self.dim()) {
            *o = r % self.n;
            r /= self.n;
        }
        out
    }

    pub(crate) fn torus_index(&self, multi: &[isize]) -> usize {
        let n = self.n as isize;
        let mut idx = 0usize;
        let mut stride = 1usize;
        for &m in multi.iter().take(self.dim()) {
            idx += (m.rem_euclid(n) as usize) * stride;
            stride *= self.n;
        }
        idx
    }

    /// Ring and longitude index of a sphere node; poles report ring `0` and `n`.
    pub(crate) fn sphere_ring(&self, idx: usize) -> (usize, usize) {
        match self.layout {
            Layout::Sphere { per_ring } => {
                if idx == 0 {
                    (0, 0)
                } else if idx == self.nodes.len() - 1 {
                    (self.n, 0)
                } else {
                    let k = idx - 1;
                    (k / per_ring + 1, k % per_ring)
                }
            }
            Layout::Torus => panic!("sphere_ring on a torus grid"),
        }
    }

    pub(crate) fn sphere_node(&self, ring: usize, lon: usize) -> usize {
        match self.layout {
            Layout::Sphere { per_ring } => {
                if ring == 0 {
                    0
                } else if ring >= self.n {
                    self.nodes.len() - 1
                } else {
                    1 + (ring - 1) * per_ring + lon % per_ring
                }
            }
            Layout::Torus => panic!("sphere_node on a torus grid"),
        }
    }

    /// Nearest grid node to `p` and the g0 displacement incurred by snapping.
    pub fn nearest_node(&self, p: &Point) -> (usize, f64) {
        match self.manifold {
            Manifold::FlatTorus { period, dim } => {
                let h = period / self.n as f64;
                let mut multi = [0isize; MAX_DIM];
                for (k, mk) in multi.iter_mut().enumerate().take(dim) {
                    *mk = (wrap_coord(p.get(k), period) / h).round() as isize;
                }
                let idx = self.torus_index(&multi[..dim]);
                (idx, g0_distance(&self.manifold, p, &self.nodes[idx]))
            }
            Manifold::RoundSphere2 { .. } => {
                let dt = PI / self.n as f64;
                let per_ring = 2 * self.n;
                let ring0 = (p.get(0) / dt).round() as isize;
                let mut best = (0usize, f64::INFINITY);
                for ring in (ring0 - 1)..=(ring0 + 1) {
                    if ring < 0 || ring > self.n as isize {
                        continue;
                    }
                    let ring = ring as usize;
                    let cands: Vec<usize> = if ring == 0 || ring == self.n {
                        vec![self.sphere_node(ring, 0)]
                    } else {
                        let j0 = (p.get(1) / dt).round() as isize;
                        ((j0 - 1)..=(j0 + 1))
                            .map(|j| self.sphere_node(ring, j.rem_euclid(per_ring as isize) as usize))
                            .collect()
                    };
                    for c in cands {
                        let d = g0_distance(&self.manifold, p, &self.nodes[c]);
                        if d < best.1 || (d == best.1 && c < best.0) {
                            best = (c, d);
                        }
                    }
                }
                best
            }
        }
    }
}

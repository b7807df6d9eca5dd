//! Shortest-path distances for `h = f^2 g0` on k-stencil grid graphs.
//!
//! Every node is joined to the nodes within Chebyshev index radius `k`; the
//! weight of an edge is the integral of `f` along the g0-geodesic segment
//! between its endpoints (straight segment on the torus, great-circle arc on
//! the sphere). Dijkstra then gives the exact shortest paths of that graph,
//! which overestimate the continuum distance by at most the metrication
//! factor `delta(k)` in the flat case.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{bubble_value, ConformalFactorSpec, Profile, ScalarField};
use crate::manifold::{
    min_image, slerp, sphere_from_unit, sphere_unit, unit_angle, Grid, Manifold, Point, MAX_DIM,
};
use crate::numerics::{composite_unit, integrate_pieces, Rule};

/// Default cap on the number of undirected stencil edges.
pub const DEFAULT_EDGE_CAP: usize = 1 << 27;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub stencil_radius: usize,
    /// Rule for sampled fields and closed-form profiles without known
    /// breakpoints; profiles with breakpoints are integrated adaptively.
    pub edge_quadrature: Rule,
    pub subsamples: usize,
    pub max_edges: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            stencil_radius: 3,
            edge_quadrature: Rule::Midpoint,
            subsamples: 8,
            max_edges: DEFAULT_EDGE_CAP,
        }
    }
}

impl SolverConfig {
    pub fn with_radius(k: usize) -> Self {
        Self {
            stencil_radius: k,
            ..Self::default()
        }
    }

    pub fn delta(&self) -> f64 {
        delta(self.stencil_radius)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stencil_radius == 0 {
            return Err(Error::InvalidParameter("stencil radius must be >= 1".into()));
        }
        if self.subsamples == 0 {
            return Err(Error::InvalidParameter("edge subsamples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Metrication bound `1 - cos(atan(1/k))`.
pub fn delta(k: usize) -> f64 {
    1.0 - (1.0 / k as f64).atan().cos()
}

/// Shortest-path distances from one source node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceField {
    pub source: usize,
    pub dist: Vec<f64>,
    pub config: SolverConfig,
    pub delta: f64,
}

impl DistanceField {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["node", "distance"])?;
        for (i, d) in self.dist.iter().enumerate() {
            wr.write_record([i.to_string(), format!("{d:.17e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Distance between two points after snapping both to grid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairDistance {
    pub distance: f64,
    pub source: usize,
    pub target: usize,
    pub snap_x: f64,
    pub snap_y: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    d: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on node index
        other
            .d
            .total_cmp(&self.d)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum Topology {
    Torus {
        period: f64,
        offsets: Vec<[isize; MAX_DIM]>,
        /// g0 length of each offset.
        lengths: Vec<f64>,
    },
    Sphere {
        radius: f64,
        units: Vec<[f64; 3]>,
    },
}

/// Stencil graph with the weights of one conformal factor.
pub struct Solver {
    grid: Arc<Grid>,
    field: ScalarField,
    spec: Option<Arc<ConformalFactorSpec>>,
    cfg: SolverConfig,
    topo: Topology,
    /// Row into `rows` for torus nodes whose edges touch a singular support.
    near: Vec<u32>,
    rows: Vec<f64>,
    /// Lower bound of the factor; positive values enable goal-directed
    /// search with the heuristic `floor * d_g0(v, target)`.
    floor: f64,
}

const PLAIN: u32 = u32::MAX;

/// Largest edge table (entries) precomputed for sampled torus fields.
const FULL_TABLE_CAP: usize = 1 << 24;

impl Solver {
    pub fn new(f: &ScalarField, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = f.grid().clone();
        let k = cfg.stencil_radius;
        let n = grid.n();
        if 2 * k >= n {
            return Err(Error::InvalidParameter(format!(
                "stencil radius {k} too large for resolution {n}"
            )));
        }
        let topo = match *grid.manifold() {
            Manifold::FlatTorus { dim, period } => {
                let h = period / n as f64;
                let side = 2 * k + 1;
                let mut offsets = Vec::new();
                let mut lengths = Vec::new();
                for code in 0..side.pow(dim as u32) {
                    let mut c = code;
                    let mut o = [0isize; MAX_DIM];
                    for ok in o.iter_mut().take(dim) {
                        *ok = (c % side) as isize - k as isize;
                        c /= side;
                    }
                    if o.iter().all(|&x| x == 0) {
                        continue;
                    }
                    let l2: isize = o.iter().map(|x| x * x).sum();
                    offsets.push(o);
                    lengths.push(h * (l2 as f64).sqrt());
                }
                let edges = grid.node_count() as u128 * offsets.len() as u128 / 2;
                if edges > cfg.max_edges as u128 {
                    return Err(Error::MemoryCapExceeded {
                        edges,
                        cap: cfg.max_edges,
                    });
                }
                Topology::Torus {
                    period,
                    offsets,
                    lengths,
                }
            }
            Manifold::RoundSphere2 { radius } => {
                let per_node = ((2 * k + 1) * (2 * k + 1) - 1) as u128;
                let edges = grid.node_count() as u128 * per_node / 2;
                if edges > cfg.max_edges as u128 {
                    return Err(Error::MemoryCapExceeded {
                        edges,
                        cap: cfg.max_edges,
                    });
                }
                Topology::Sphere {
                    radius,
                    units: grid.nodes().iter().map(sphere_unit).collect(),
                }
            }
        };
        let mut solver = Solver {
            grid,
            field: f.clone(),
            spec: f.analytic().cloned(),
            cfg,
            topo,
            near: Vec::new(),
            rows: Vec::new(),
            floor: f.analytic().and_then(|s| s.lower_bound()).unwrap_or(0.0),
        };
        solver.build_near_rows();
        Ok(solver)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Precomputes the weights of every edge at torus nodes close to a
    /// singular support of an analytic profile; all other edges of such a
    /// profile have weight `base * length`.
    fn build_near_rows(&mut self) {
        if let Topology::Torus { offsets, .. } = &self.topo {
            let noff = offsets.len();
            let n_nodes = self.grid.node_count();
            let sampled = self.spec.as_ref().and_then(|s| s.base_value()).is_none();
            if sampled && n_nodes * noff <= FULL_TABLE_CAP {
                // sampled and custom fields: tabulate every edge once
                let mut rows = vec![0.0; n_nodes * noff];
                rows.par_chunks_mut(noff).enumerate().for_each(|(u, row)| {
                    for (oi, w) in row.iter_mut().enumerate() {
                        *w = self.torus_edge(u, oi, false);
                    }
                });
                self.near = (0..n_nodes as u32).collect();
                self.rows = rows;
                return;
            }
        }
        let (spec, period, noff, reach) = match (&self.spec, &self.topo) {
            (Some(spec), Topology::Torus { period, offsets, lengths }) => {
                if spec.base_value().is_none() {
                    return;
                }
                let reach = lengths.iter().copied().fold(0.0, f64::max);
                (spec.clone(), *period, offsets.len(), reach)
            }
            _ => return,
        };
        let balls: Vec<(Point, f64)> = match &spec.profile {
            Profile::RadialLogSingular { center, j, .. } | Profile::RadialSpike { center, j, .. } => {
                vec![(*center, 2.0 / j)]
            }
            Profile::BubbleField { bubbles } => {
                bubbles.iter().map(|b| (b.center, b.radius)).collect()
            }
            _ => Vec::new(),
        };
        let n_nodes = self.grid.node_count();
        self.near = vec![PLAIN; n_nodes];
        if balls.is_empty() {
            return;
        }
        let mut near_nodes = Vec::new();
        for (i, p) in self.grid.nodes().iter().enumerate() {
            let hit = balls.iter().any(|(c, r)| {
                crate::manifold::torus_distance_fast(period, c.coords(), p.coords())
                    < r + reach * (1.0 + 1e-9)
            });
            if hit {
                self.near[i] = near_nodes.len() as u32;
                near_nodes.push(i);
            }
        }
        let rows: Vec<Vec<f64>> = near_nodes
            .par_iter()
            .map(|&u| (0..noff).map(|oi| self.torus_edge(u, oi, true)).collect())
            .collect();
        self.rows = rows.into_iter().flatten().collect();
    }

    #[inline]
    fn torus_neighbor(&self, u: usize, o: &[isize; MAX_DIM]) -> usize {
        let n = self.grid.n() as isize;
        let dim = self.grid.dim();
        let mut idx = 0usize;
        let mut stride = 1usize;
        let mut r = u;
        for ok in o.iter().take(dim) {
            let c = (r % n as usize) as isize;
            r /= n as usize;
            idx += ((c + ok).rem_euclid(n) as usize) * stride;
            stride *= n as usize;
        }
        idx
    }

    /// Weight of the torus edge leaving `u` along offset `oi`, integrated
    /// from the endpoint with the smaller index so both orientations agree.
    fn torus_edge(&self, u: usize, oi: usize, exact: bool) -> f64 {
        let Topology::Torus {
            period,
            offsets,
            lengths,
        } = &self.topo
        else {
            unreachable!()
        };
        let o = &offsets[oi];
        let v = self.torus_neighbor(u, o);
        let (start, sign) = if u <= v { (u, 1.0) } else { (v, -1.0) };
        let h = period / self.grid.n() as f64;
        let dim = self.grid.dim();
        let mut d = [0.0; MAX_DIM];
        for k in 0..dim {
            d[k] = sign * o[k] as f64 * h;
        }
        let len = lengths[oi];
        let a = self.grid.node(start);
        match (&self.spec, exact) {
            (Some(spec), true) => torus_segment_integral(spec, a.coords(), &d[..dim], len, *period),
            _ => {
                let mut p = [0.0; MAX_DIM];
                len * composite_unit(self.cfg.edge_quadrature, self.cfg.subsamples, |s| {
                    for k in 0..dim {
                        p[k] = a.get(k) + s * d[k];
                    }
                    let q = Point::new(&p[..dim]);
                    match &self.spec {
                        Some(spec) => spec.evaluate(&self.grid.manifold().wrap(&q)),
                        None => self.field.interpolate(&q),
                    }
                })
            }
        }
    }

    fn sphere_edge(&self, u: usize, v: usize) -> f64 {
        let Topology::Sphere { radius, units } = &self.topo else {
            unreachable!()
        };
        let (a, b) = if u <= v { (u, v) } else { (v, u) };
        let (ua, ub) = (units[a], units[b]);
        let ang = unit_angle(ua, ub);
        let len = radius * ang;
        let eval_rule = |g: &dyn Fn(&Point) -> f64| {
            len * composite_unit(self.cfg.edge_quadrature, self.cfg.subsamples, |s| {
                g(&sphere_from_unit(slerp(ua, ub, ang, s)))
            })
        };
        match self.spec.as_deref().map(|s| &s.profile) {
            Some(Profile::Constant { value }) => value * len,
            Some(Profile::CinchedEquator { j, h0 }) => {
                cinched_arc_integral(*j, *h0, ua, ub, ang, len)
            }
            Some(_) => {
                let spec = self.spec.as_ref().unwrap();
                eval_rule(&|p| spec.evaluate(p))
            }
            None => eval_rule(&|p| self.field.interpolate(p)),
        }
    }

    /// Calls `visit(v, weight)` for every stencil neighbor of `u`.
    #[inline]
    fn for_each_edge<F: FnMut(usize, f64)>(&self, u: usize, mut visit: F) {
        match &self.topo {
            Topology::Torus {
                offsets, lengths, ..
            } => {
                let row = self.near.get(u).copied().unwrap_or(PLAIN);
                let base = self.spec.as_ref().and_then(|s| s.base_value());
                let noff = offsets.len();
                let n = self.grid.n();
                let dim = self.grid.dim();
                let mut mu = [0isize; MAX_DIM];
                let mut r = u;
                for m in mu.iter_mut().take(dim) {
                    *m = (r % n) as isize;
                    r /= n;
                }
                for oi in 0..noff {
                    let o = &offsets[oi];
                    let mut v = 0usize;
                    let mut stride = 1usize;
                    for k in 0..dim {
                        let mut c = mu[k] + o[k];
                        if c < 0 {
                            c += n as isize;
                        } else if c >= n as isize {
                            c -= n as isize;
                        }
                        v += c as usize * stride;
                        stride *= n;
                    }
                    let w = if row != PLAIN {
                        self.rows[row as usize * noff + oi]
                    } else if let Some(b) = base {
                        b * lengths[oi]
                    } else {
                        self.torus_edge(u, oi, false)
                    };
                    visit(v, w);
                }
            }
            Topology::Sphere { .. } => {
                self.sphere_neighbors(u, |v| visit(v, self.sphere_edge(u, v)));
            }
        }
    }

    fn sphere_neighbors<F: FnMut(usize)>(&self, u: usize, mut visit: F) {
        let n = self.grid.n();
        let k = self.cfg.stencil_radius;
        let per_ring = 2 * n;
        let last = self.grid.node_count() - 1;
        let (ring, lon) = self.grid.sphere_ring(u);
        if u == 0 || u == last {
            let rings: Vec<usize> = if u == 0 {
                (1..=k.min(n - 1)).collect()
            } else {
                ((n - k).max(1)..n).collect()
            };
            for r in rings {
                for l in 0..per_ring {
                    visit(self.grid.sphere_node(r, l));
                }
            }
            return;
        }
        if ring <= k {
            visit(0);
        }
        let lo = ring.saturating_sub(k).max(1);
        let hi = (ring + k).min(n - 1);
        for r in lo..=hi {
            for dj in -(k as isize)..=(k as isize) {
                if r == ring && dj == 0 {
                    continue;
                }
                let l = (lon as isize + dj).rem_euclid(per_ring as isize) as usize;
                visit(self.grid.sphere_node(r, l));
            }
        }
        if ring + k >= n {
            visit(last);
        }
    }

    /// Weight of the edge `(u, v)`.
    pub fn edge_weight(&self, u: usize, v: usize) -> Result<f64> {
        let n_nodes = self.grid.node_count();
        if u >= n_nodes || v >= n_nodes {
            return Err(Error::InvalidParameter(format!("node index out of range: {u}, {v}")));
        }
        let mut found = None;
        self.for_each_edge(u, |x, w| {
            if x == v && found.is_none() {
                found = Some(w);
            }
        });
        found.ok_or(Error::NotAdjacent(u, v))
    }

    /// Full single-source shortest paths.
    pub fn single_source(&self, source: usize) -> Result<DistanceField> {
        self.check_node(source)?;
        let dist = self.dijkstra(source, &[]);
        Ok(DistanceField {
            source,
            dist,
            config: self.cfg,
            delta: self.cfg.delta(),
        })
    }

    /// Shortest-path distances from `source` to each of `targets`, stopping
    /// once all targets are settled.
    pub fn distances_to(&self, source: usize, targets: &[usize]) -> Result<Vec<f64>> {
        self.check_node(source)?;
        for &t in targets {
            self.check_node(t)?;
        }
        let dist = self.dijkstra(source, targets);
        Ok(targets.iter().map(|&t| dist[t]).collect())
    }

    pub fn node_distance(&self, s: usize, t: usize) -> Result<f64> {
        Ok(self.distances_to(s, &[t])?[0])
    }

    /// Distance between snapped points.
    pub fn pair_distance(&self, x: &Point, y: &Point) -> Result<PairDistance> {
        let mfd = self.grid.manifold();
        for p in [x, y] {
            if !mfd.contains(p) {
                return Err(Error::ManifoldMismatch(format!("point {p:?} not on {mfd:?}")));
            }
        }
        let (s, sx) = self.grid.nearest_node(x);
        let (t, sy) = self.grid.nearest_node(y);
        Ok(PairDistance {
            distance: self.node_distance(s, t)?,
            source: s,
            target: t,
            snap_x: sx,
            snap_y: sy,
        })
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.grid.node_count() {
            return Err(Error::InvalidParameter(format!(
                "node {i} out of range ({} nodes)",
                self.grid.node_count()
            )));
        }
        Ok(())
    }

    fn g0_node_distance(&self, a: usize, b: usize) -> f64 {
        match &self.topo {
            Topology::Torus { period, .. } => crate::manifold::torus_distance_fast(
                *period,
                self.grid.node(a).coords(),
                self.grid.node(b).coords(),
            ),
            Topology::Sphere { radius, units } => radius * unit_angle(units[a], units[b]),
        }
    }

    /// Dijkstra from `source`, stopping once every target is settled. With a
    /// single target and a positive factor floor the queue is ordered by
    /// `dist + floor * d_g0(., target)`, a consistent lower bound, so the
    /// settled distances are unchanged.
    fn dijkstra(&self, source: usize, targets: &[usize]) -> Vec<f64> {
        let n = self.grid.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut pending: Vec<bool> = Vec::new();
        let mut remaining = 0usize;
        if !targets.is_empty() {
            pending = vec![false; n];
            for &t in targets {
                if !pending[t] {
                    pending[t] = true;
                    remaining += 1;
                }
            }
        }
        let goal = if targets.len() == 1 && self.floor > 0.0 {
            Some(targets[0])
        } else {
            None
        };
        let heuristic = |v: usize| match goal {
            Some(t) => self.floor * (1.0 - 1e-12) * self.g0_node_distance(v, t),
            None => 0.0,
        };
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem { d: heuristic(source), node: source });
        while let Some(HeapItem { node, .. }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            let d = dist[node];
            if remaining > 0 && pending[node] {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            self.for_each_edge(node, |v, w| {
                if !done[v] {
                    let nd = d + w;
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(HeapItem { d: nd + heuristic(v), node: v });
                    }
                }
            });
        }
        dist
    }
}

/// Integral of an analytic factor along the torus segment `a + s d`,
/// `s in [0, 1]`, of g0 length `len`.
fn torus_segment_integral(spec: &ConformalFactorSpec, a: &[f64], d: &[f64], len: f64, period: f64) -> f64 {
    let dim = a.len();
    match &spec.profile {
        Profile::Constant { value } => value * len,
        Profile::RadialLogSingular { center, .. } | Profile::RadialSpike { center, .. } => {
            let (p, b2) = closest_approach(a, d, len, center.coords(), period);
            let support = spec.profile.support_radius().unwrap();
            if segment_min_radius(p, b2, len) >= support {
                return len;
            }
            let mut breaks = vec![p];
            for r in spec.profile.radial_breaks() {
                if r * r > b2 {
                    let w = (r * r - b2).sqrt();
                    breaks.push(p - w);
                    breaks.push(p + w);
                }
            }
            let profile = &spec.profile;
            integrate_pieces(
                |s| profile.radial_value((b2 + (s - p) * (s - p)).sqrt()).unwrap(),
                0.0,
                len,
                &breaks,
                1e-15 * len,
                1e-12,
            )
        }
        Profile::BubbleField { bubbles } => {
            let mut cuts = vec![0.0, len];
            for bub in bubbles {
                let (p, b2) = closest_approach(a, d, len, bub.center.coords(), period);
                let r2 = bub.radius * bub.radius;
                if r2 > b2 {
                    let w = (r2 - b2).sqrt();
                    for c in [p - w, p + w] {
                        if c > 0.0 && c < len {
                            cuts.push(c);
                        }
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            let mut total = 0.0;
            let mut q = [0.0; MAX_DIM];
            for w in cuts.windows(2) {
                let piece = w[1] - w[0];
                if piece <= 0.0 {
                    continue;
                }
                let s = 0.5 * (w[0] + w[1]) / len;
                for k in 0..dim {
                    q[k] = a[k] + s * d[k];
                }
                let pt = spec.manifold.wrap(&Point::new(&q[..dim]));
                total += piece * bubble_value(&spec.manifold, bubbles, &pt);
            }
            total
        }
        _ => unreachable!("profile handled by the composite rule"),
    }
}

/// Arclength of the closest approach to `c` along `a + s d` (unbounded
/// line) and the squared distance of the line from `c`.
fn closest_approach(a: &[f64], d: &[f64], len: f64, c: &[f64], period: f64) -> (f64, f64) {
    // use the image of c nearest to the segment midpoint
    let mut cv = [0.0; MAX_DIM];
    let mut c2 = 0.0;
    let mut proj = 0.0;
    for k in 0..a.len() {
        let mid = a[k] + 0.5 * d[k];
        cv[k] = min_image(mid, c[k], period) + 0.5 * d[k];
        c2 += cv[k] * cv[k];
        proj += cv[k] * d[k];
    }
    let p = proj / len;
    (p, (c2 - p * p).max(0.0))
}

fn segment_min_radius(p: f64, b2: f64, len: f64) -> f64 {
    let s = p.clamp(0.0, len);
    (b2 + (s - p) * (s - p)).sqrt()
}

/// Integral of the cinched profile along a great-circle arc.
fn cinched_arc_integral(j: f64, h0: f64, ua: [f64; 3], ub: [f64; 3], ang: f64, len: f64) -> f64 {
    let band = (1.0 / j).sin();
    let za = ua[2];
    let zb = ub[2];
    // an arc between points in one open hemisphere stays at least as far
    // from the equator as its nearer endpoint
    if za.signum() == zb.signum() && za.abs() > band && zb.abs() > band {
        return len;
    }
    let z_at = |s: f64| slerp(ua, ub, ang, s)[2];
    let mut breaks = Vec::new();
    let samples = 16;
    for level in [-band, band] {
        let mut prev = z_at(0.0) - level;
        for i in 1..=samples {
            let s1 = i as f64 / samples as f64;
            let cur = z_at(s1) - level;
            if prev == 0.0 {
                breaks.push((i - 1) as f64 / samples as f64);
            } else if prev * cur < 0.0 {
                let (mut lo, mut hi) = ((i - 1) as f64 / samples as f64, s1);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if (z_at(mid) - level) * prev > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                breaks.push(0.5 * (lo + hi));
            }
            prev = cur;
        }
    }
    let value = |s: f64| {
        let z = slerp(ua, ub, ang, s)[2].clamp(-1.0, 1.0);
        let u = FRAC_PI_2 - z.acos();
        if u.abs() <= 1.0 / j {
            crate::field::cinch(h0, j * u)
        } else {
            1.0
        }
    };
    len * integrate_pieces(value, 0.0, 1.0, &breaks, 1e-15, 1e-12)
}

/// Convenience wrapper: builds a solver and runs a full single-source solve.
pub fn single_source(f: &ScalarField, source: usize, cfg: SolverConfig) -> Result<DistanceField> {
    Solver::new(f, cfg)?.single_source(source)
}

/// Convenience wrapper: distance between snapped points.
pub fn pair_distance(f: &ScalarField, x: &Point, y: &Point, cfg: SolverConfig) -> Result<PairDistance> {
    Solver::new(f, cfg)?.pair_distance(x, y)
}

/// Convenience wrapper: weight of one stencil edge.
pub fn edge_weight(f: &ScalarField, u: usize, v: usize, cfg: SolverConfig) -> Result<f64> {
    Solver::new(f, cfg)?.edge_weight(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample_factor, ConformalFactorSpec};
    use crate::manifold::{build_grid, g0_distance};
    use approx::assert_relative_eq;

    fn torus_field(n: usize, c: f64) -> ScalarField {
        let g = Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), n).unwrap());
        ScalarField::constant(g, c).unwrap()
    }

    #[test]
    fn delta_values() {
        assert_relative_eq!(delta(3), 0.051_316_701_949_486_2, epsilon = 1e-12);
        assert!(delta(5) < delta(3));
        assert_relative_eq!(delta(1), 1.0 - 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn constant_field_edge_weights() {
        let f = torus_field(4, 3.0);
        let s = Solver::new(&f, SolverConfig::with_radius(1)).unwrap();
        assert_relative_eq!(s.edge_weight(0, 1).unwrap(), 0.75, epsilon = 1e-15);
        assert_relative_eq!(s.edge_weight(0, 5).unwrap(), 0.75 * 2f64.sqrt(), epsilon = 1e-14);
        assert!(matches!(s.edge_weight(0, 2), Err(Error::NotAdjacent(0, 2))));
    }

    #[test]
    fn linear_field_trapezoid_edge() {
        // f rises linearly from 1 to 2 along the x axis edge of length 1/4
        let g = Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), 4).unwrap());
        let vals: Vec<f64> = g
            .nodes()
            .iter()
            .map(|p| if p.get(0) == 0.0 { 1.0 } else if p.get(0) == 0.25 { 2.0 } else { 1.5 })
            .collect();
        let f = ScalarField::from_values(g, vals).unwrap();
        let cfg = SolverConfig {
            stencil_radius: 1,
            edge_quadrature: Rule::Trapezoid,
            subsamples: 1,
            ..SolverConfig::default()
        };
        let w = edge_weight(&f, 0, 1, cfg).unwrap();
        assert_relative_eq!(w, 1.5 * 0.25, epsilon = 1e-15);
    }

    #[test]
    fn flat_distance_within_envelope() {
        let f = torus_field(128, 1.0);
        let cfg = SolverConfig::with_radius(3);
        let s = Solver::new(&f, cfg).unwrap();
        let d = s.node_distance(0, 64).unwrap();
        assert!((0.5..=0.5 * (1.0 + cfg.delta())).contains(&d));
        assert_eq!(s.node_distance(7, 7).unwrap(), 0.0);
        let d = s.pair_distance(&Point::new(&[0.0, 0.0]), &Point::new(&[0.3, 0.1])).unwrap();
        let exact = g0_distance(f.grid().manifold(), f.grid().node(d.source), f.grid().node(d.target));
        assert!(d.snap_y > 0.0);
        assert!(d.distance >= exact * (1.0 - 1e-12) && d.distance <= exact * (1.0 + cfg.delta()));
    }

    #[test]
    fn constant_scaling_is_exact() {
        let cfg = SolverConfig::with_radius(2);
        let one = single_source(&torus_field(16, 1.0), 3, cfg).unwrap();
        let two = single_source(&torus_field(16, 2.5), 3, cfg).unwrap();
        for (a, b) in one.dist.iter().zip(&two.dist) {
            assert_relative_eq!(*b, 2.5 * a, max_relative = 1e-14);
        }
    }

    #[test]
    fn lipschitz_over_edges() {
        let g = Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), 16).unwrap());
        let spec = ConformalFactorSpec::new(
            *g.manifold(),
            Profile::RadialSpike { j: 8.0, alpha: 0.5, center: Point::new(&[0.5, 0.5]) },
        )
        .unwrap();
        let f = sample_factor(&spec, &g).unwrap();
        let s = Solver::new(&f, SolverConfig::with_radius(2)).unwrap();
        let df = s.single_source(0).unwrap();
        for u in 0..g.node_count() {
            s.for_each_edge(u, |v, w| {
                assert!((df.dist[u] - df.dist[v]).abs() <= w * (1.0 + 1e-12));
            });
        }
    }

    #[test]
    fn edge_weights_symmetric() {
        let g = Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), 16).unwrap());
        let spec = ConformalFactorSpec::new(
            *g.manifold(),
            Profile::RadialLogSingular { j: 20.0, eta: 2.0, center: Point::new(&[0.51, 0.49]) },
        )
        .unwrap();
        let f = sample_factor(&spec, &g).unwrap();
        let s = Solver::new(&f, SolverConfig::with_radius(2)).unwrap();
        for u in 0..g.node_count() {
            s.for_each_edge(u, |v, w| {
                assert_eq!(s.edge_weight(v, u).unwrap(), w);
            });
        }
    }

    #[test]
    fn radial_edge_matches_oracle_integral() {
        // an axis edge running straight through the spike center
        let g = Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), 8).unwrap());
        let spec = ConformalFactorSpec::new(
            *g.manifold(),
            Profile::RadialSpike { j: 16.0, alpha: 0.5, center: Point::new(&[0.5, 0.5]) },
        )
        .unwrap();
        let f = sample_factor(&spec, &g).unwrap();
        let s = Solver::new(&f, SolverConfig::with_radius(1)).unwrap();
        let a = g.nearest_node(&Point::new(&[0.375, 0.5])).0;
        let b = g.nearest_node(&Point::new(&[0.5, 0.5])).0;
        let w = s.edge_weight(a, b).unwrap();
        let exact = crate::numerics::integrate(|r| crate::field::spike(16.0, 0.5, r), 0.0, 0.125, 1e-15, 1e-13);
        assert_relative_eq!(w, exact, max_relative = 1e-10);
    }

    #[test]
    fn sphere_flat_envelope_and_pole_links() {
        let g = Arc::new(build_grid(&Manifold::sphere(1.0).unwrap(), 32).unwrap());
        let f = ScalarField::constant(g.clone(), 1.0).unwrap();
        let cfg = SolverConfig::with_radius(3);
        let s = Solver::new(&f, cfg).unwrap();
        let last = g.node_count() - 1;
        let d = s.node_distance(0, last).unwrap();
        assert!(d >= std::f64::consts::PI * (1.0 - 1e-12));
        assert!(d <= std::f64::consts::PI * (1.0 + cfg.delta()));
        let x = Point::sphere(FRAC_PI_2, 0.0);
        let y = Point::sphere(FRAC_PI_2, FRAC_PI_2);
        let pd = s.pair_distance(&x, &y).unwrap();
        let exact = g0_distance(g.manifold(), &x, &y);
        assert!(pd.distance >= exact * (1.0 - 1e-12));
        assert!(pd.distance <= exact * (1.0 + cfg.delta()));
        // pole adjacency is symmetric
        let ring1 = g.sphere_node(1, 5);
        assert!(s.edge_weight(0, ring1).is_ok());
        assert!(s.edge_weight(ring1, 0).is_ok());
    }

    #[test]
    fn cinched_arc_outside_band_is_plain() {
        let g = Arc::new(build_grid(&Manifold::sphere(1.0).unwrap(), 16).unwrap());
        let spec = ConformalFactorSpec::new(*g.manifold(), Profile::CinchedEquator { j: 64.0, h0: 0.5 }).unwrap();
        let f = sample_factor(&spec, &g).unwrap();
        let s = Solver::new(&f, SolverConfig::with_radius(1)).unwrap();
        let u = g.sphere_node(2, 0);
        let v = g.sphere_node(3, 0);
        let w = s.edge_weight(u, v).unwrap();
        assert_relative_eq!(w, std::f64::consts::PI / 16.0, epsilon = 1e-14);
        // along the equator the factor equals h0
        let e0 = g.sphere_node(8, 0);
        let e1 = g.sphere_node(8, 1);
        assert_relative_eq!(s.edge_weight(e0, e1).unwrap(), 0.5 * std::f64::consts::PI / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn memory_cap_enforced() {
        let f = torus_field(64, 1.0);
        let cfg = SolverConfig { max_edges: 1000, ..SolverConfig::with_radius(3) };
        assert!(matches!(Solver::new(&f, cfg), Err(Error::MemoryCapExceeded { .. })));
    }

    #[test]
    fn csv_export() {
        let df = single_source(&torus_field(4, 1.0), 0, SolverConfig::with_radius(1)).unwrap();
        let mut buf = Vec::new();
        df.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("node,distance\n"));
        assert_eq!(s.lines().count(), 17);
    }
}

//! The potential operator `(V f)(x) = int f(z) d(x, z)^{-t} dV(z)` with
//! `t = m - 1` by default, the checks built on it, and bad-set estimation.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{lp_norm, tensor_norm_field, unit_ball_volume, unit_sphere_area, NormMode, ScalarField};
use crate::geodesic::{Solver, SolverConfig};
use crate::manifold::{sphere_unit, torus_distance_fast, unit_angle, Grid, Manifold};
use crate::numerics::{linear_fit, NeumaierSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfCell {
    /// Drop the target's own cell.
    Exclude,
    /// Integrate `r^{-t}` over the ball with the cell's volume.
    RadialCorrection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumMethod {
    Direct,
    /// Circular convolution by FFT; torus grids only.
    Fft,
    /// FFT on torus grids above 4096 nodes, direct otherwise.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub t: f64,
    pub self_cell: SelfCell,
    pub method: SumMethod,
}

impl PotentialConfig {
    /// `t = m - 1` with the radial self-cell correction.
    pub fn for_dim(m: usize) -> Self {
        Self::with_exponent(m as f64 - 1.0)
    }

    pub fn with_exponent(t: f64) -> Self {
        Self {
            t,
            self_cell: SelfCell::RadialCorrection,
            method: SumMethod::Auto,
        }
    }

    fn check(&self, m: usize) -> Result<()> {
        if !(self.t > 0.0 && self.t < m as f64) {
            return Err(Error::ExponentRange(format!(
                "potential exponent t = {} must lie in (0, {m})",
                self.t
            )));
        }
        Ok(())
    }
}

/// `int_{B_rho} r^{-t}` over the ball whose volume is `vol`.
fn self_cell_integral(m: usize, vol: f64, t: f64) -> f64 {
    let rho = (vol / unit_ball_volume(m)).powf(1.0 / m as f64);
    unit_sphere_area(m) * rho.powf(m as f64 - t) / (m as f64 - t)
}

/// Quadrature weights `f(z) w(z)` with nodes covered by a radial core zeroed.
fn masses(f: &ScalarField) -> Vec<f64> {
    let w = f.grid().cell_volumes();
    f.values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if f.core().is_some_and(|c| c.is_excluded(i)) {
                0.0
            } else {
                v * w[i]
            }
        })
        .collect()
}

/// Self-cell and radial-core terms added to the node sum at `x`.
fn local_terms(f: &ScalarField, x: usize, cfg: &PotentialConfig) -> f64 {
    let grid = f.grid();
    let m = grid.dim();
    let mut extra = 0.0;
    let inside_core = f.core().is_some_and(|c| c.is_excluded(x));
    if cfg.self_cell == SelfCell::RadialCorrection && !inside_core {
        extra += f.values()[x] * self_cell_integral(m, grid.cell_volume(x), cfg.t);
    }
    if let (Some(core), Manifold::FlatTorus { period, .. }) = (f.core(), grid.manifold()) {
        let dist = torus_distance_fast(*period, core.center.coords(), grid.node(x).coords());
        extra += core.potential(dist, cfg.t);
    }
    extra
}

/// `d^{-t}` for every torus lattice offset, zero at the origin.
fn torus_kernel(grid: &Grid, t: f64) -> Vec<f64> {
    let Manifold::FlatTorus { period, dim } = *grid.manifold() else {
        unreachable!()
    };
    let n = grid.n();
    let h = period / n as f64;
    (0..grid.node_count())
        .map(|idx| {
            let mut r = idx;
            let mut d2 = 0.0;
            for _ in 0..dim {
                let c = r % n;
                r /= n;
                let c = c.min(n - c) as f64 * h;
                d2 += c * c;
            }
            if d2 == 0.0 {
                0.0
            } else {
                d2.sqrt().powf(-t)
            }
        })
        .collect()
}

/// Offset index of `z - x` on a torus lattice.
#[inline]
fn torus_diff(n: usize, dim: usize, z: usize, x: usize) -> usize {
    let (mut a, mut b) = (z, x);
    let mut idx = 0;
    let mut stride = 1;
    for _ in 0..dim {
        let (za, xb) = (a % n, b % n);
        a /= n;
        b /= n;
        idx += ((za + n - xb) % n) * stride;
        stride *= n;
    }
    idx
}

/// `(V f)(x)` at one node.
pub fn potential_at(f: &ScalarField, x: usize, cfg: &PotentialConfig) -> Result<f64> {
    let grid = f.grid();
    cfg.check(grid.dim())?;
    if x >= grid.node_count() {
        return Err(Error::InvalidParameter(format!("node {x} out of range")));
    }
    let mass = masses(f);
    let sum = match *grid.manifold() {
        Manifold::FlatTorus { period, .. } => {
            let px = grid.node(x).coords();
            let mut acc = NeumaierSum::default();
            for (z, &mz) in mass.iter().enumerate() {
                if z != x && mz != 0.0 {
                    acc.add(mz * torus_distance_fast(period, px, grid.node(z).coords()).powf(-cfg.t));
                }
            }
            acc.value()
        }
        Manifold::RoundSphere2 { radius } => {
            let units: Vec<[f64; 3]> = grid.nodes().iter().map(sphere_unit).collect();
            sphere_row(&units, &mass, x, radius, cfg.t)
        }
    };
    Ok(sum + local_terms(f, x, cfg))
}

fn sphere_row(units: &[[f64; 3]], mass: &[f64], x: usize, radius: f64, t: f64) -> f64 {
    let ux = units[x];
    let mut acc = NeumaierSum::default();
    for (z, &mz) in mass.iter().enumerate() {
        if z != x && mz != 0.0 {
            acc.add(mz * (radius * unit_angle(ux, units[z])).powf(-t));
        }
    }
    acc.value()
}

/// `V f` at every node.
pub fn potential_field(f: &ScalarField, cfg: &PotentialConfig) -> Result<ScalarField> {
    let grid = f.grid().clone();
    cfg.check(grid.dim())?;
    let mass = masses(f);
    let sums: Vec<f64> = match *grid.manifold() {
        Manifold::FlatTorus { .. } => {
            let use_fft = match cfg.method {
                SumMethod::Fft => true,
                SumMethod::Direct => false,
                SumMethod::Auto => grid.node_count() > 4096,
            };
            let kernel = torus_kernel(&grid, cfg.t);
            if use_fft {
                fft_correlate(&grid, &mass, &kernel)
            } else {
                let (n, dim) = (grid.n(), grid.dim());
                (0..grid.node_count())
                    .into_par_iter()
                    .map(|x| {
                        let mut acc = NeumaierSum::default();
                        for (z, &mz) in mass.iter().enumerate() {
                            if mz != 0.0 {
                                acc.add(mz * kernel[torus_diff(n, dim, z, x)]);
                            }
                        }
                        acc.value()
                    })
                    .collect()
            }
        }
        Manifold::RoundSphere2 { radius } => {
            if cfg.method == SumMethod::Fft {
                return Err(Error::Unsupported("FFT summation on the sphere".into()));
            }
            let units: Vec<[f64; 3]> = grid.nodes().iter().map(sphere_unit).collect();
            (0..grid.node_count())
                .into_par_iter()
                .map(|x| sphere_row(&units, &mass, x, radius, cfg.t))
                .collect()
        }
    };
    let values: Vec<f64> = sums
        .into_par_iter()
        .enumerate()
        .map(|(x, s)| (s + local_terms(f, x, cfg)).max(0.0))
        .collect();
    ScalarField::from_values(grid, values)
}

/// `out[x] = sum_z mass[z] kernel[z - x]` by separable N-d FFT. The kernel
/// is even, so correlation equals convolution.
fn fft_correlate(grid: &Grid, mass: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = grid.n();
    let dim = grid.dim();
    let mut a: Vec<Complex<f64>> = mass.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut b: Vec<Complex<f64>> = kernel.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    fft_nd(&mut a, n, dim, &*fwd);
    fft_nd(&mut b, n, dim, &*fwd);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    fft_nd(&mut a, n, dim, &*inv);
    let scale = 1.0 / a.len() as f64;
    a.iter().map(|c| c.re * scale).collect()
}

fn fft_nd(data: &mut [Complex<f64>], n: usize, dim: usize, fft: &dyn rustfft::Fft<f64>) {
    let total = data.len();
    let mut line = vec![Complex::new(0.0, 0.0); total];
    let mut stride = 1;
    for _ in 0..dim {
        // gather every line along this axis contiguously
        let lines = total / n;
        for l in 0..lines {
            let low = l % stride;
            let high = l / stride;
            let base = low + high * stride * n;
            for i in 0..n {
                line[l * n + i] = data[base + i * stride];
            }
        }
        fft.process(&mut line);
        for l in 0..lines {
            let low = l % stride;
            let high = l / stride;
            let base = low + high * stride * n;
            for i in 0..n {
                data[base + i * stride] = line[l * n + i];
            }
        }
        stride *= n;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PotentialNorms {
    pub potential_lq: f64,
    pub field_lp: f64,
    pub ratio: f64,
}

/// Largest `q` admitted for `p < m`: `m p / (m - p)` shrunk by `margin`.
pub fn exponent_gate(m: usize, p: f64, margin: f64) -> f64 {
    let m = m as f64;
    m * p / (m - p) * (1.0 - margin)
}

/// `||V f||_{L^q}`, `||f||_{L^p}` and their ratio with the exponent gate
/// enforced.
pub fn lq_of_potential(
    f: &ScalarField,
    p: f64,
    q: f64,
    margin: f64,
    cfg: &PotentialConfig,
) -> Result<PotentialNorms> {
    let m = f.grid().dim();
    if !(p >= 1.0 && p < m as f64) {
        return Err(Error::ExponentRange(format!("p = {p} must lie in [1, {m})")));
    }
    let gate = exponent_gate(m, p, margin);
    if !(q > 0.0 && q < gate) {
        return Err(Error::ExponentRange(format!(
            "q = {q} outside the admissible range (0, {gate:.6})"
        )));
    }
    potential_norm_ratio(f, p, q, cfg)
}

/// As [`lq_of_potential`] without the exponent gate, for divergence
/// witnesses above it.
pub fn potential_norm_ratio(f: &ScalarField, p: f64, q: f64, cfg: &PotentialConfig) -> Result<PotentialNorms> {
    let v = potential_field(f, cfg)?;
    let potential_lq = lp_norm(&v, q)?;
    let field_lp = lp_norm(f, p)?;
    if field_lp == 0.0 {
        return Err(Error::Precondition("field has zero L^p norm".into()));
    }
    Ok(PotentialNorms {
        potential_lq,
        field_lp,
        ratio: potential_lq / field_lp,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// `d_h(x, y)` against potentials of `|h|^{1/2}`.
    Plain,
    /// `max{0, d_h - d_0 - eps}` against potentials of `|h - g0|^{1/2}`.
    Excess,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub x: usize,
    pub y: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistancePotentialReport {
    pub variant: BoundVariant,
    pub epsilon: f64,
    pub rows: Vec<BoundRow>,
    /// Largest `lhs / rhs` over the pairs: the empirical constant.
    pub constant: f64,
}

/// Compares distances with the potentials of `|h|^{1/2}` (or of
/// `|h - g0|^{1/2}` with the `eps` slack) at both endpoints.
pub fn distance_potential_check(
    f: &ScalarField,
    pairs: &[(usize, usize)],
    epsilon: f64,
    variant: BoundVariant,
    solver_cfg: SolverConfig,
    cfg: &PotentialConfig,
) -> Result<DistancePotentialReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list".into()));
    }
    let grid = f.grid().clone();
    let root = |v: &ScalarField| v.map(|x| x.sqrt());
    let density = match variant {
        BoundVariant::Plain => root(&tensor_norm_field(f, NormMode::Metric)),
        BoundVariant::Excess => {
            if let Some(v) = f.values().iter().find(|&&v| v < 1.0) {
                return Err(Error::Precondition(format!(
                    "excess variant needs f >= 1, found {v}"
                )));
            }
            root(&tensor_norm_field(f, NormMode::DifferenceToG0))
        }
    };
    let pot = potential_field(&density, cfg)?;
    let solver = Solver::new(f, solver_cfg)?;
    let flat = match variant {
        BoundVariant::Excess => Some(Solver::new(&ScalarField::constant(grid, 1.0)?, solver_cfg)?),
        BoundVariant::Plain => None,
    };
    let rows: Vec<BoundRow> = pairs
        .par_iter()
        .map(|&(x, y)| -> Result<BoundRow> {
            let d = solver.node_distance(x, y)?;
            let lhs = match &flat {
                Some(fl) => (d - fl.node_distance(x, y)? - epsilon).max(0.0),
                None => d,
            };
            let rhs = pot.values()[x] + pot.values()[y];
            let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
            Ok(BoundRow { x, y, lhs, rhs, ratio })
        })
        .collect::<Result<_>>()?;
    let constant = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(DistancePotentialReport {
        variant,
        epsilon,
        rows,
        constant,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReverseHolder {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub pass: bool,
}

/// Lower bound `int f^p d(x, .)^{-t} >= C delta^p` implied by Hölder's
/// inequality whenever `int f d(x, .)^{1-m} >= delta`, with
/// `C = (int d(x, .)^{-(p(m-1)-t)/(p-1)})^{1-p}`.
pub fn reverse_holder_check(f: &ScalarField, x: usize, p: f64, t: f64, delta: f64, tol: f64) -> Result<ReverseHolder> {
    let grid = f.grid();
    let m = grid.dim();
    let mf = m as f64;
    if !(p >= 1.0) {
        return Err(Error::ExponentRange(format!("p = {p} must be >= 1")));
    }
    if !(t > mf - p && t < mf) {
        return Err(Error::ExponentRange(format!("t = {t} must lie in ({}, {m})", mf - p)));
    }
    let base = potential_at(f, x, &PotentialConfig::for_dim(m))?;
    if base < delta {
        return Err(Error::Precondition(format!(
            "potential {base} at node {x} is below delta = {delta}"
        )));
    }
    let fp = f.map(move |v| v.powf(p));
    let lhs = potential_at(&fp, x, &PotentialConfig::with_exponent(t))?;
    let constant = if p == 1.0 {
        grid.manifold().diameter().powf(mf - 1.0 - t)
    } else {
        let s = (p * (mf - 1.0) - t) / (p - 1.0);
        let one = ScalarField::constant(grid.clone(), 1.0)?;
        let integral = if s > 0.0 {
            potential_at(&one, x, &PotentialConfig::with_exponent(s))?
        } else {
            // nonpositive exponents are bounded kernels; plain quadrature
            let px = grid.node(x);
            let mfd = grid.manifold();
            let mut acc = NeumaierSum::default();
            for (z, pz) in grid.nodes().iter().enumerate() {
                acc.add(grid.cell_volume(z) * mfd.distance(px, pz).powf(-s));
            }
            acc.value()
        };
        integral.powf(1.0 - p)
    };
    let rhs = constant * delta.powf(p);
    Ok(ReverseHolder {
        lhs,
        rhs,
        constant,
        pass: lhs >= rhs * (1.0 - tol),
    })
}

/// Box-counting dimension of a set of torus nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxDimension {
    pub dimension: f64,
    pub residual: f64,
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Counts aligned blocks of `s` cells per side, `s in {1, 2, 4, 8}`, that
/// meet the indicator and fits `log N` against `log(1/(s h))`.
pub fn box_counting(grid: &Grid, indicator: &[bool]) -> Result<BoxDimension> {
    let Manifold::FlatTorus { period, dim } = *grid.manifold() else {
        return Err(Error::Unsupported("box counting on the sphere".into()));
    };
    let n = grid.n();
    let sizes: Vec<usize> = [1usize, 2, 4, 8].into_iter().filter(|&s| n.is_multiple_of(s) && n / s >= 2).collect();
    if sizes.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "resolution {n} leaves fewer than 4 usable box scales"
        )));
    }
    let h = period / n as f64;
    let mut counts = Vec::new();
    let mut scales = Vec::new();
    for &s in &sizes {
        let nb = n / s;
        let mut hit = vec![false; nb.pow(dim as u32)];
        for (i, &on) in indicator.iter().enumerate() {
            if on {
                let multi = grid.torus_multi_index(i);
                let mut b = 0;
                let mut stride = 1;
                for &c in multi.iter().take(dim) {
                    b += (c / s) * stride;
                    stride *= nb;
                }
                hit[b] = true;
            }
        }
        counts.push(hit.iter().filter(|&&x| x).count());
        scales.push(s as f64 * h);
    }
    if counts.iter().all(|&c| c == 0) {
        return Ok(BoxDimension {
            dimension: 0.0,
            residual: 0.0,
            scales,
            counts,
        });
    }
    let xs: Vec<f64> = scales.iter().map(|s| (1.0 / s).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64).ln()).collect();
    let (slope, _, residual) = linear_fit(&xs, &ys);
    Ok(BoxDimension {
        dimension: slope.clamp(0.0, dim as f64),
        residual,
        scales,
        counts,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BadSetEstimate {
    pub delta: f64,
    pub j0: f64,
    /// Smallest and largest `j` entering the windowed maximum.
    pub j_window: (f64, f64),
    #[serde(skip)]
    pub indicator: ScalarField,
    pub area: f64,
    pub box_dimension: f64,
    pub fit_residual: f64,
    pub box_counts: Vec<usize>,
}

impl BadSetEstimate {
    pub fn members(&self) -> Vec<bool> {
        self.indicator.values().iter().map(|&v| v > 0.5).collect()
    }

    pub fn write_indicator_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["node", "indicator"])?;
        for (i, v) in self.indicator.values().iter().enumerate() {
            wr.write_record([i.to_string(), (*v as u8).to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Potentials `V f_j` of a family of fields, labelled by `j`.
#[derive(Clone, Debug)]
pub struct FamilyPotentials {
    pub grid: Arc<Grid>,
    pub entries: Vec<(f64, Vec<f64>)>,
}

pub fn family_potentials(family: &[(f64, ScalarField)], cfg: &PotentialConfig) -> Result<FamilyPotentials> {
    let Some((_, first)) = family.first() else {
        return Err(Error::Empty("field family".into()));
    };
    let grid = first.grid().clone();
    let mut entries = Vec::with_capacity(family.len());
    for (j, f) in family {
        if f.grid().manifold() != grid.manifold() || f.grid().n() != grid.n() {
            return Err(Error::ManifoldMismatch("family fields on different grids".into()));
        }
        entries.push((*j, potential_field(f, cfg)?.values().to_vec()));
    }
    Ok(FamilyPotentials { grid, entries })
}

/// `{x : max_{j >= j0} (V f_j)(x) >= delta}` with its area and box-counting
/// dimension.
pub fn bad_set_from_potentials(pots: &FamilyPotentials, delta: f64, j0: f64) -> Result<BadSetEstimate> {
    let window: Vec<&(f64, Vec<f64>)> = pots.entries.iter().filter(|(j, _)| *j >= j0).collect();
    if window.is_empty() {
        return Err(Error::Empty(format!("no field with j >= {j0}")));
    }
    let grid = &pots.grid;
    let n_nodes = grid.node_count();
    let mut member = vec![false; n_nodes];
    for (_, v) in &window {
        for (m, &val) in member.iter_mut().zip(v) {
            if val >= delta {
                *m = true;
            }
        }
    }
    let mut area = NeumaierSum::default();
    for (i, &m) in member.iter().enumerate() {
        if m {
            area.add(grid.cell_volume(i));
        }
    }
    let dim = box_counting(grid, &member)?;
    let lo = window.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let hi = window.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let indicator = ScalarField::from_values(
        grid.clone(),
        member.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
    )?;
    Ok(BadSetEstimate {
        delta,
        j0,
        j_window: (lo, hi),
        indicator,
        area: area.value(),
        box_dimension: dim.dimension,
        fit_residual: dim.residual,
        box_counts: dim.counts,
    })
}

pub fn bad_set_estimate(
    family: &[(f64, ScalarField)],
    delta: f64,
    j0: f64,
    cfg: &PotentialConfig,
) -> Result<BadSetEstimate> {
    bad_set_from_potentials(&family_potentials(family, cfg)?, delta, j0)
}

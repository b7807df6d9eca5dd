//! Symmetric families of curves on the flat torus.
//!
//! The family joining `x` to `y` consists of the curves
//! `gamma(tau, t, s) = x + t e + tau L sin(pi t / L) s`, where `e` is the
//! unit direction of the minimal segment, `L` its length and `s` a unit
//! normal. Writing `w = tau s` for a point of the `(m-1)`-ball of radius
//! `eps`, the map `(w, t) -> gamma` has Jacobian determinant
//! `(L sin(pi t / L))^{m-1}`.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::manifold::{min_image, Manifold, Point, MAX_DIM};
use crate::numerics::{integrate, NeumaierSum};
use crate::potential::{potential_at, PotentialConfig};

#[derive(Clone, Debug, Serialize)]
pub struct SymmetricFamily {
    pub manifold: Manifold,
    pub x: Point,
    pub y: Point,
    /// g0 length of the minimal segment.
    pub length: f64,
    pub width: f64,
    /// Midpoints of `n_tau` equal slices of `(0, width)`.
    pub taus: Vec<f64>,
    /// `n_t + 1` equally spaced parameters on `[0, L]`.
    pub ts: Vec<f64>,
    /// Unit normals sampling `S^{m-2}` with equal weights.
    pub normals: Vec<[f64; MAX_DIM]>,
    #[serde(skip)]
    displacement: [f64; MAX_DIM],
    #[serde(skip)]
    normal_basis: Vec<[f64; MAX_DIM]>,
}

/// Largest admissible width, `(period / 2) / Diam`.
pub fn max_width(mfd: &Manifold) -> f64 {
    match *mfd {
        Manifold::FlatTorus { period, .. } => 0.5 * period / mfd.diameter(),
        Manifold::RoundSphere2 { .. } => 0.0,
    }
}

/// Builds the family of width `eps` joining `x` to `y` on a flat torus.
pub fn build_family(mfd: &Manifold, x: &Point, y: &Point, eps: f64, n_tau: usize, n_t: usize) -> Result<SymmetricFamily> {
    let Manifold::FlatTorus { period, dim } = *mfd else {
        return Err(Error::Unsupported("symmetric families are built on flat tori only".into()));
    };
    if !mfd.contains(x) || !mfd.contains(y) {
        return Err(Error::ManifoldMismatch("family endpoints must lie on the torus".into()));
    }
    let cap = max_width(mfd);
    if !(eps > 0.0 && eps <= cap) {
        return Err(Error::InvalidParameter(format!(
            "width {eps} outside (0, {cap:.6}]"
        )));
    }
    if n_tau == 0 || n_t < 2 {
        return Err(Error::InvalidParameter("need n_tau >= 1 and n_t >= 2".into()));
    }
    let mut disp = [0.0; MAX_DIM];
    for (k, dk) in disp.iter_mut().enumerate().take(dim) {
        *dk = min_image(x.get(k), y.get(k), period);
    }
    let length = disp.iter().map(|d| d * d).sum::<f64>().sqrt();
    if length == 0.0 {
        return Err(Error::InvalidParameter("family endpoints coincide".into()));
    }
    let mut e = [0.0; MAX_DIM];
    for k in 0..dim {
        e[k] = disp[k] / length;
    }
    let basis = normal_basis(&e, dim);
    let normals = sphere_samples(dim, &basis);
    Ok(SymmetricFamily {
        manifold: *mfd,
        x: *x,
        y: *y,
        length,
        width: eps,
        taus: (0..n_tau).map(|i| eps * (i as f64 + 0.5) / n_tau as f64).collect(),
        ts: (0..=n_t).map(|i| length * i as f64 / n_t as f64).collect(),
        normals,
        displacement: disp,
        normal_basis: basis,
    })
}

/// Orthonormal completion of `e` by Gram-Schmidt on the coordinate axes.
fn normal_basis(e: &[f64; MAX_DIM], dim: usize) -> Vec<[f64; MAX_DIM]> {
    let mut basis: Vec<[f64; MAX_DIM]> = vec![*e];
    for axis in 0..dim {
        let mut v = [0.0; MAX_DIM];
        v[axis] = 1.0;
        for b in &basis {
            let c: f64 = (0..dim).map(|k| v[k] * b[k]).sum();
            for k in 0..dim {
                v[k] -= c * b[k];
            }
        }
        let norm = (0..dim).map(|k| v[k] * v[k]).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vk in v.iter_mut().take(dim) {
                *vk /= norm;
            }
            basis.push(v);
        }
        if basis.len() == dim {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Equal-weight samples of the unit sphere of the normal space.
fn sphere_samples(dim: usize, basis: &[[f64; MAX_DIM]]) -> Vec<[f64; MAX_DIM]> {
    let combine = |coefs: &[f64]| {
        let mut v = [0.0; MAX_DIM];
        for (c, b) in coefs.iter().zip(basis) {
            for k in 0..dim {
                v[k] += c * b[k];
            }
        }
        v
    };
    match dim {
        2 => vec![combine(&[1.0]), combine(&[-1.0])],
        3 => (0..16)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / 16.0;
                combine(&[a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            // Fibonacci lattice on S^2
            let count = 32;
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    combine(&[r * a.cos(), r * a.sin(), z])
                })
                .collect()
        }
    }
}

impl SymmetricFamily {
    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    /// `sin(pi t / L)`, exactly zero at both ends.
    fn sine(&self, t: f64) -> f64 {
        let u = t / self.length;
        if u <= 0.5 {
            (PI * u).sin()
        } else {
            (PI * (1.0 - u)).sin()
        }
    }

    /// Point of the curve with normal offset `w` (a vector of the normal
    /// space, `|w| = tau`) at parameter `t`, in unwrapped coordinates.
    fn raw_point(&self, w: &[f64; MAX_DIM], t: f64) -> [f64; MAX_DIM] {
        let dim = self.dim();
        let amp = self.length * self.sine(t);
        let u = t / self.length;
        let mut p = [0.0; MAX_DIM];
        for k in 0..dim {
            p[k] = self.x.get(k) + u * self.displacement[k] + amp * w[k];
        }
        p
    }

    /// `gamma(tau, t, s)` wrapped into the fundamental domain.
    pub fn point(&self, tau: f64, t: f64, normal: usize) -> Point {
        let w = self.offset(tau, normal);
        let p = self.raw_point(&w, t);
        self.manifold.wrap(&Point::new(&p[..self.dim()]))
    }

    fn offset(&self, tau: f64, normal: usize) -> [f64; MAX_DIM] {
        let mut w = [0.0; MAX_DIM];
        for (k, wk) in w.iter_mut().enumerate() {
            *wk = tau * self.normals[normal][k];
        }
        w
    }

    /// `|gamma'|_{g0} = sqrt(1 + pi^2 tau^2 cos^2(pi t / L))`.
    pub fn speed(&self, tau: f64, t: f64) -> f64 {
        let c = (PI * t / self.length).cos();
        (1.0 + PI * PI * tau * tau * c * c).sqrt()
    }

    /// Normal Jacobian `|gamma'| (L sin(pi t / L))^{1-m}` of the projection
    /// onto the curve parameter space.
    pub fn normal_jacobian(&self, tau: f64, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < self.length) {
            return Err(Error::InvalidParameter(format!(
                "normal Jacobian is singular at t = {t}"
            )));
        }
        if !(tau > 0.0 && tau < self.width) {
            return Err(Error::InvalidParameter(format!("tau = {tau} outside (0, {})", self.width)));
        }
        let m = self.dim() as i32;
        Ok(self.speed(tau, t) * (self.length * self.sine(t)).powi(1 - m))
    }

    /// Same quantity with the Jacobian determinant of `(w, t) -> gamma` taken
    /// by central differences.
    pub fn normal_jacobian_fd(&self, tau: f64, t: f64, normal: usize) -> f64 {
        let dim = self.dim();
        let w0 = self.offset(tau, normal);
        let mut cols: Vec<[f64; MAX_DIM]> = Vec::with_capacity(dim);
        let hw = 1e-6 * self.width;
        for b in &self.normal_basis {
            let mut wp = w0;
            let mut wm = w0;
            for k in 0..dim {
                wp[k] += hw * b[k];
                wm[k] -= hw * b[k];
            }
            let (pp, pm) = (self.raw_point(&wp, t), self.raw_point(&wm, t));
            let mut c = [0.0; MAX_DIM];
            for k in 0..dim {
                c[k] = (pp[k] - pm[k]) / (2.0 * hw);
            }
            cols.push(c);
        }
        let ht = 1e-6 * self.length;
        let (pp, pm) = (self.raw_point(&w0, t + ht), self.raw_point(&w0, t - ht));
        let mut c = [0.0; MAX_DIM];
        let mut speed2 = 0.0;
        for k in 0..dim {
            c[k] = (pp[k] - pm[k]) / (2.0 * ht);
            speed2 += c[k] * c[k];
        }
        cols.push(c);
        speed2.sqrt() / determinant(&cols, dim).abs()
    }

    /// `int_0^L f(gamma) |gamma'| dt` along one curve.
    pub fn curve_length(&self, f: &ScalarField, tau: f64, normal: usize) -> f64 {
        self.line_integral(f, tau, normal, true)
    }

    fn line_integral(&self, f: &ScalarField, tau: f64, normal: usize, with_speed: bool) -> f64 {
        let eval = |p: &Point| match f.analytic() {
            Some(spec) => spec.evaluate(p),
            None => f.interpolate(p),
        };
        integrate(
            |t| {
                let v = eval(&self.point(tau, t, normal));
                if with_speed {
                    v * self.speed(tau, t)
                } else {
                    v
                }
            },
            0.0,
            self.length,
            0.0,
            1e-8,
        )
    }

    /// `int_{Gamma_eps x [0, L]} f dt dmu_eps` over the `(m-1)`-ball of
    /// radius `eps` with its Euclidean volume, by midpoint shells in `tau`
    /// and equal-weight normals.
    pub fn family_integral(&self, f: &ScalarField) -> f64 {
        let m = self.dim();
        let dtau = self.width / self.taus.len() as f64;
        let sphere_area = match m {
            2 => 2.0,
            3 => 2.0 * PI,
            _ => 4.0 * PI,
        };
        let weight = sphere_area / self.normals.len() as f64;
        let mut acc = NeumaierSum::default();
        for &tau in &self.taus {
            let shell = tau.powi(m as i32 - 2) * dtau * weight;
            for s in 0..self.normals.len() {
                acc.add(shell * self.line_integral(f, tau, s, false));
            }
        }
        acc.value()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let dim = self.dim();
        let mut header = vec!["tau".to_string(), "normal".to_string(), "t".to_string()];
        header.extend((0..dim).map(|k| format!("x{k}")));
        wr.write_record(&header)?;
        for &tau in &self.taus {
            for s in 0..self.normals.len() {
                for &t in &self.ts {
                    let p = self.point(tau, t, s);
                    let mut rec = vec![format!("{tau:.12e}"), s.to_string(), format!("{t:.12e}")];
                    rec.extend(p.coords().iter().map(|c| format!("{c:.15e}")));
                    wr.write_record(&rec)?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[allow(clippy::needless_range_loop)]
fn determinant(cols: &[[f64; MAX_DIM]], dim: usize) -> f64 {
    let mut a = [[0.0; MAX_DIM]; MAX_DIM];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..dim {
            a[i][j] = c[i];
        }
    }
    let mut det = 1.0;
    for col in 0..dim {
        let piv = (col..dim)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..dim {
            let factor = a[r][col] / a[col][col];
            for c in col..dim {
                a[r][c] -= factor * a[col][c];
            }
        }
    }
    det
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JacobianSample {
    pub tau: f64,
    pub t: f64,
    pub normal: usize,
    pub closed_form: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
    /// `NJ / (L sin(pi t / L))^{1-m}`.
    pub bound_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobianCheck {
    pub samples: Vec<JacobianSample>,
    pub max_relative_error: f64,
    /// Smallest `C` with `NJ <= C (L sin(pi t / L))^{1-m}` at every sample.
    pub fitted_constant: f64,
    /// `sqrt(1 + pi^2 eps^2)`, the flat-torus value of that constant.
    pub flat_constant: f64,
    /// Largest sampled `|gamma'|_{g0}`.
    pub max_speed: f64,
}

/// Evaluates the normal Jacobian on an `n_tau x n_t` lattice of interior
/// parameters, cycling through the normals.
pub fn normal_jacobian_check(family: &SymmetricFamily, n_tau: usize, n_t: usize) -> Result<JacobianCheck> {
    let m = family.dim() as i32;
    let mut samples = Vec::with_capacity(n_tau * n_t);
    for i in 0..n_tau {
        let tau = family.width * (i as f64 + 0.5) / n_tau as f64;
        for k in 0..n_t {
            let t = family.length * (k as f64 + 0.5) / n_t as f64;
            let normal = (i * n_t + k) % family.normals.len();
            let nj = family.normal_jacobian(tau, t)?;
            let fd = family.normal_jacobian_fd(tau, t, normal);
            samples.push(JacobianSample {
                tau,
                t,
                normal,
                closed_form: nj,
                finite_difference: fd,
                relative_error: (nj - fd).abs() / nj,
                bound_ratio: nj / (family.length * family.sine(t)).powi(1 - m),
            });
        }
    }
    let max_relative_error = samples.iter().map(|s| s.relative_error).fold(0.0, f64::max);
    let fitted_constant = samples.iter().map(|s| s.bound_ratio).fold(0.0, f64::max);
    let max_speed = samples
        .iter()
        .map(|s| family.speed(s.tau, s.t))
        .fold(0.0, f64::max);
    Ok(JacobianCheck {
        samples,
        max_relative_error,
        fitted_constant,
        flat_constant: (1.0 + PI * PI * family.width * family.width).sqrt(),
        max_speed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FamilyBound {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Family integral of `f` against the sum of the potentials of `f` at the
/// two endpoints (evaluated at their nearest nodes).
pub fn family_potential_bound_check(f: &ScalarField, family: &SymmetricFamily, cfg: &PotentialConfig) -> Result<FamilyBound> {
    let grid = f.grid();
    if *grid.manifold() != family.manifold {
        return Err(Error::ManifoldMismatch("field and family live on different manifolds".into()));
    }
    let lhs = family.family_integral(f);
    let (ix, _) = grid.nearest_node(&family.x);
    let (iy, _) = grid.nearest_node(&family.y);
    let rhs = potential_at(f, ix, cfg)? + potential_at(f, iy, cfg)?;
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(FamilyBound { lhs, rhs, ratio })
}

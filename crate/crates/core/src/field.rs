//! Conformal metric fields `h = f^2 g0`: analytic conformal factors, sampled
//! scalar fields, pointwise tensor norms and `L^p` norms of metrics and of
//! distance functions over `M x M`.
//!
//! Tensor norms use the g0-Frobenius convention, so `|g0|_{g0} = sqrt(m)` and
//! `|f^2 g0|_{g0} = sqrt(m) f^2`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{torus_distance_fast, Grid, Manifold, Point};
use crate::numerics::{integrate_pieces, NeumaierSum};

/// Decreasing quintic smoothstep bridge on `[1, 2]` from `top` down to 1.
#[inline]
pub fn bridge(top: f64, s: f64) -> f64 {
    let u = (s - 1.0).clamp(0.0, 1.0);
    let step = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
    top + (1.0 - top) * step
}

/// Even cinch profile on `[-1, 1]`: `1 - (1 - h0)(1 - u^2)^3`.
#[inline]
pub fn cinch(h0: f64, u: f64) -> f64 {
    let w = 1.0 - u * u;
    1.0 - (1.0 - h0) * w * w * w
}

/// A ball on which a [`Profile::BubbleField`] factor equals `1 / radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub center: Point,
    pub radius: f64,
}

/// Closed-form evaluator supplied by the caller.
#[derive(Clone)]
pub struct CustomProfile {
    pub name: String,
    pub eval: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom({})", self.name)
    }
}

impl Serialize for CustomProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name)
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `j^eta/(1+ln j)` on `[0, j^-eta]`, `1/(r(1-ln r))` up to `1/j`, a
    /// bridge on `[1/j, 2/j]`, then 1.
    RadialLogSingular {
        j: f64,
        eta: f64,
        center: Point,
    },
    BubbleField {
        bubbles: Vec<Bubble>,
    },
    /// Radial from the north pole of the sphere; `h(j (r - pi/2))` on the
    /// band `|r - pi/2| <= 1/j`, 1 elsewhere.
    CinchedEquator {
        j: f64,
        h0: f64,
    },
    /// `j^alpha` on `[0, 1/j]`, a bridge on `[1/j, 2/j]`, then 1.
    RadialSpike {
        j: f64,
        alpha: f64,
        center: Point,
    },
    Custom(CustomProfile),
}

impl Profile {
    /// Value of a radial profile at distance `r` from its center.
    pub fn radial_value(&self, r: f64) -> Option<f64> {
        match *self {
            Profile::RadialLogSingular { j, eta, .. } => Some(log_singular(j, eta, r)),
            Profile::RadialSpike { j, alpha, .. } => Some(spike(j, alpha, r)),
            Profile::CinchedEquator { j, h0 } => {
                let u = r - FRAC_PI_2;
                Some(if u.abs() <= 1.0 / j { cinch(h0, j * u) } else { 1.0 })
            }
            Profile::Constant { value } => Some(value),
            _ => None,
        }
    }

    /// Radii where a radial profile changes formula.
    pub fn radial_breaks(&self) -> Vec<f64> {
        match *self {
            Profile::RadialLogSingular { j, eta, .. } => vec![j.powf(-eta), 1.0 / j, 2.0 / j],
            Profile::RadialSpike { j, .. } => vec![1.0 / j, 2.0 / j],
            Profile::CinchedEquator { j, .. } => vec![FRAC_PI_2 - 1.0 / j, FRAC_PI_2 + 1.0 / j],
            _ => Vec::new(),
        }
    }

    /// Center of a torus radial profile.
    pub fn radial_center(&self) -> Option<Point> {
        match *self {
            Profile::RadialLogSingular { center, .. } | Profile::RadialSpike { center, .. } => {
                Some(center)
            }
            _ => None,
        }
    }

    /// Radius beyond which a radial profile equals 1.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            Profile::RadialLogSingular { j, .. } | Profile::RadialSpike { j, .. } => Some(2.0 / j),
            _ => None,
        }
    }
}

pub(crate) fn log_singular(j: f64, eta: f64, r: f64) -> f64 {
    let lnj = j.ln();
    if r <= j.powf(-eta) {
        j.powf(eta) / (1.0 + lnj)
    } else if r <= 1.0 / j {
        1.0 / (r * (1.0 - r.ln()))
    } else if r <= 2.0 / j {
        bridge(j / (1.0 + lnj), j * r)
    } else {
        1.0
    }
}

pub(crate) fn spike(j: f64, alpha: f64, r: f64) -> f64 {
    if r <= 1.0 / j {
        j.powf(alpha)
    } else if r <= 2.0 / j {
        bridge(j.powf(alpha), j * r)
    } else {
        1.0
    }
}

/// Analytic description of a conformal factor on a background manifold.
#[derive(Clone, Debug, Serialize)]
pub struct ConformalFactorSpec {
    pub manifold: Manifold,
    #[serde(flatten)]
    pub profile: Profile,
}

impl ConformalFactorSpec {
    pub fn new(manifold: Manifold, profile: Profile) -> Result<Self> {
        manifold.validate()?;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let on_torus = |c: &Point| manifold.is_torus() && manifold.contains(c);
        match &profile {
            Profile::Constant { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return bad(format!("constant factor must be positive, got {value}"));
                }
            }
            Profile::RadialLogSingular { j, eta, center } => {
                if !(*j >= 1.0) {
                    return bad(format!("j >= 1 required, got {j}"));
                }
                if !(*eta > 1.0) {
                    return bad(format!("eta > 1 required, got {eta}"));
                }
                if !on_torus(center) {
                    return Err(Error::ManifoldMismatch(
                        "radial profile center must lie on the torus".into(),
                    ));
                }
            }
            Profile::RadialSpike { j, alpha, center } => {
                if !(*j >= 1.0) {
                    return bad(format!("j >= 1 required, got {j}"));
                }
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return bad(format!("0 < alpha < 1 required, got {alpha}"));
                }
                if !on_torus(center) {
                    return Err(Error::ManifoldMismatch(
                        "radial profile center must lie on the torus".into(),
                    ));
                }
            }
            Profile::BubbleField { bubbles } => {
                for b in bubbles {
                    if !(b.radius > 0.0) {
                        return bad(format!("bubble radius must be positive, got {}", b.radius));
                    }
                    if !manifold.contains(&b.center) {
                        return Err(Error::ManifoldMismatch(
                            "bubble center outside the manifold".into(),
                        ));
                    }
                }
            }
            Profile::CinchedEquator { j, h0 } => {
                if manifold.is_torus() {
                    return Err(Error::ManifoldMismatch(
                        "cinched equator profile requires the round sphere".into(),
                    ));
                }
                if !(*j >= 1.0) {
                    return bad(format!("j >= 1 required, got {j}"));
                }
                if !(*h0 > 0.0 && *h0 < 1.0) {
                    return bad(format!("h0 in (0, 1) required, got {h0}"));
                }
            }
            Profile::Custom(_) => {}
        }
        Ok(Self { manifold, profile })
    }

    pub fn constant(manifold: Manifold, value: f64) -> Result<Self> {
        Self::new(manifold, Profile::Constant { value })
    }

    pub fn evaluate(&self, p: &Point) -> f64 {
        match &self.profile {
            Profile::Constant { value } => *value,
            Profile::RadialLogSingular { j, eta, center } => {
                log_singular(*j, *eta, self.radius_from(center, p))
            }
            Profile::RadialSpike { j, alpha, center } => {
                spike(*j, *alpha, self.radius_from(center, p))
            }
            Profile::BubbleField { bubbles } => bubble_value(&self.manifold, bubbles, p),
            Profile::CinchedEquator { .. } => self.profile.radial_value(p.get(0)).unwrap(),
            Profile::Custom(c) => (c.eval)(p),
        }
    }

    #[inline]
    fn radius_from(&self, center: &Point, p: &Point) -> f64 {
        match self.manifold {
            Manifold::FlatTorus { period, .. } => {
                torus_distance_fast(period, center.coords(), p.coords())
            }
            _ => self.manifold.distance(center, p),
        }
    }

    /// A pointwise lower bound of the factor, when one is known.
    pub fn lower_bound(&self) -> Option<f64> {
        match &self.profile {
            Profile::Constant { value } => Some(*value),
            Profile::RadialLogSingular { .. } | Profile::RadialSpike { .. } => Some(1.0),
            Profile::BubbleField { bubbles } => Some(
                bubbles
                    .iter()
                    .map(|b| 1.0 / b.radius)
                    .fold(1.0, f64::min),
            ),
            Profile::CinchedEquator { h0, .. } => Some(*h0),
            Profile::Custom(_) => None,
        }
    }

    /// Value outside every singular support, if the profile has one.
    pub fn base_value(&self) -> Option<f64> {
        match &self.profile {
            Profile::Constant { value } => Some(*value),
            Profile::Custom(_) => None,
            _ => Some(1.0),
        }
    }
}

pub(crate) fn bubble_value(mfd: &Manifold, bubbles: &[Bubble], p: &Point) -> f64 {
    let mut v: Option<f64> = None;
    for b in bubbles {
        if mfd.distance(&b.center, p) < b.radius {
            let inside = 1.0 / b.radius;
            v = Some(v.map_or(inside, |c: f64| c.max(inside)));
        }
    }
    v.unwrap_or(1.0)
}

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Exact radial representation of a field inside a small ball about a
/// singular center. Nodes inside the ball are excluded from node quadrature
/// and the ball is integrated in the radial variable instead.
#[derive(Clone)]
pub struct RadialCore {
    pub center: Point,
    /// Radius of the ball whose volume equals the excluded cells' volume.
    pub radius: f64,
    pub(crate) func: RadialFn,
    pub(crate) breaks: Vec<f64>,
    pub(crate) excluded: Arc<Vec<bool>>,
    pub(crate) dim: usize,
}

impl fmt::Debug for RadialCore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialCore")
            .field("center", &self.center)
            .field("radius", &self.radius)
            .finish()
    }
}

/// Area of the unit sphere `S^{m-1}`.
pub(crate) fn unit_sphere_area(m: usize) -> f64 {
    match m {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        _ => panic!("unsupported dimension {m}"),
    }
}

/// Volume of the unit ball in `R^m`.
pub(crate) fn unit_ball_volume(m: usize) -> f64 {
    unit_sphere_area(m) / m as f64
}

impl RadialCore {
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        (self.func)(r)
    }

    pub fn is_excluded(&self, node: usize) -> bool {
        self.excluded[node]
    }

    /// `int_core F^p dV`.
    pub fn integral_pow(&self, p: f64) -> f64 {
        let m = self.dim;
        unit_sphere_area(m)
            * integrate_pieces(
                |r| self.value(r).powf(p) * r.powi(m as i32 - 1),
                0.0,
                self.radius,
                &self.breaks,
                1e-15,
                1e-11,
            )
    }

    /// `int_core F(y) |x - y|^{-t} dV(y)` for a point at distance `dist`
    /// from the center.
    pub fn potential(&self, dist: f64, t: f64) -> f64 {
        let m = self.dim;
        let rc = self.radius;
        if dist <= 1e-15 * rc.max(1.0) {
            if t >= m as f64 {
                return f64::INFINITY;
            }
            return unit_sphere_area(m)
                * integrate_pieces(
                    |r| self.value(r) * r.powf(m as f64 - 1.0 - t),
                    0.0,
                    rc,
                    &self.breaks,
                    1e-15,
                    1e-11,
                );
        }
        if dist >= 4.0 * rc {
            // two-term multipole expansion of the shell average
            let s = 0.5 * t;
            let coef = -s + 2.0 * s * (s + 1.0) / m as f64;
            let m0 = self.moment(0);
            let m2 = self.moment(2);
            return dist.powf(-t) * (m0 + coef * m2 / (dist * dist));
        }
        let mut breaks = self.breaks.clone();
        breaks.push(dist);
        integrate_pieces(
            |r| self.value(r) * shell_kernel(m, r, dist, t),
            0.0,
            rc,
            &breaks,
            1e-15,
            1e-9,
        )
    }

    fn moment(&self, k: i32) -> f64 {
        let m = self.dim;
        unit_sphere_area(m)
            * integrate_pieces(
                |r| self.value(r) * r.powi(m as i32 - 1 + k),
                0.0,
                self.radius,
                &self.breaks,
                1e-15,
                1e-11,
            )
    }
}

/// Integral of `|x - y|^{-t}` over the sphere of radius `r` about the origin
/// for `|x| = d`.
pub(crate) fn shell_kernel(m: usize, r: f64, d: f64, t: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let a = d * d + r * r;
    let b = 2.0 * d * r;
    let s = 0.5 * t;
    match m {
        2 => {
            if (s - 0.5).abs() < 1e-15 {
                // int_0^{2pi} (a - b cos)^{-1/2} = 4 K(k) / sqrt(a + b)
                let k = (2.0 * b / (a + b)).sqrt().min(1.0);
                r * 4.0 * crate::numerics::elliptic_k(k) / (a + b).sqrt()
            } else {
                r * 2.0
                    * crate::numerics::integrate(
                        |th| (a - b * th.cos()).max(0.0).powf(-s),
                        0.0,
                        PI,
                        1e-15,
                        1e-10,
                    )
            }
        }
        3 => {
            let lo = (a - b).max(0.0);
            let hi = a + b;
            let inner = if (s - 1.0).abs() < 1e-15 {
                (hi / lo).ln() / b
            } else {
                (hi.powf(1.0 - s) - lo.powf(1.0 - s)) / (b * (1.0 - s))
            };
            2.0 * PI * r * r * inner
        }
        _ => {
            // S^{m-1} shell average through the polar angle density sin^{m-2}
            let area = unit_sphere_area(m - 1);
            let raw = crate::numerics::integrate(
                |th| (a - b * th.cos()).max(0.0).powf(-s) * th.sin().powi(m as i32 - 2),
                0.0,
                PI,
                1e-15,
                1e-10,
            );
            area * r.powi(m as i32 - 1) * raw
        }
    }
}

/// Grid-sampled nonnegative function.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    core: Option<RadialCore>,
    analytic: Option<Arc<ConformalFactorSpec>>,
}

impl ScalarField {
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "field values must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self {
            grid,
            values,
            core: None,
            analytic: None,
        })
    }

    /// Constant field. Positive constants keep their analytic spec so edge
    /// weights are exact.
    pub fn constant(grid: Arc<Grid>, c: f64) -> Result<Self> {
        let n = grid.node_count();
        let mfd = *grid.manifold();
        let mut field = Self::from_values(grid, vec![c; n])?;
        if c > 0.0 {
            field.analytic = Some(Arc::new(ConformalFactorSpec::constant(mfd, c)?));
        }
        Ok(field)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn core(&self) -> Option<&RadialCore> {
        self.core.as_ref()
    }

    /// The analytic conformal factor this field was sampled from, if any.
    pub fn analytic(&self) -> Option<&Arc<ConformalFactorSpec>> {
        self.analytic.as_ref()
    }

    /// Drops the analytic source and radial core, keeping only node samples.
    pub fn samples_only(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.clone(),
            core: None,
            analytic: None,
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Applies `g` pointwise to the samples and to the radial core.
    pub fn map<G>(&self, g: G) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    {
        let values = self.values.iter().map(|&v| g(v)).collect();
        let core = self.core.as_ref().map(|c| {
            let inner = c.func.clone();
            let g2 = g.clone();
            RadialCore {
                func: Arc::new(move |r| g2(inner(r))),
                ..c.clone()
            }
        });
        Self {
            grid: self.grid.clone(),
            values,
            core,
            analytic: None,
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(move |v| a * v)
    }

    /// `sum_i w_i v_i^p` over nodes not covered by the radial core, plus the
    /// core integral.
    pub fn integral_pow(&self, p: f64) -> f64 {
        let mut acc = NeumaierSum::default();
        let w = self.grid.cell_volumes();
        for (i, &v) in self.values.iter().enumerate() {
            if self.core.as_ref().is_some_and(|c| c.is_excluded(i)) {
                continue;
            }
            if v > 0.0 {
                acc.add(v.powf(p) * w[i]);
            }
        }
        if let Some(c) = &self.core {
            acc.add(c.integral_pow(p));
        }
        acc.value()
    }

    /// Evaluates the field at an arbitrary point: the radial core inside its
    /// ball, multilinear interpolation of the node samples elsewhere.
    pub fn interpolate(&self, p: &Point) -> f64 {
        let mfd = *self.grid.manifold();
        if let (Some(c), Manifold::FlatTorus { period, .. }) = (&self.core, mfd) {
            let r = torus_distance_fast(period, c.center.coords(), p.coords());
            if r < c.radius {
                return c.value(r);
            }
        }
        match mfd {
            Manifold::FlatTorus { dim, period } => {
                let n = self.grid.n();
                let h = period / n as f64;
                let mut base = [0isize; 4];
                let mut frac = [0.0; 4];
                for k in 0..dim {
                    let x = crate::manifold::wrap_coord(p.get(k), period) / h;
                    let fl = x.floor();
                    base[k] = fl as isize;
                    frac[k] = x - fl;
                }
                let mut acc = 0.0;
                for corner in 0..(1usize << dim) {
                    let mut w = 1.0;
                    let mut multi = [0isize; 4];
                    for k in 0..dim {
                        let bit = (corner >> k) & 1;
                        multi[k] = base[k] + bit as isize;
                        w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                    }
                    if w > 0.0 {
                        acc += w * self.values[self.grid.torus_index(&multi[..dim])];
                    }
                }
                acc
            }
            Manifold::RoundSphere2 { .. } => {
                let n = self.grid.n();
                let dt = PI / n as f64;
                let per_ring = 2 * n;
                let x = (p.get(0) / dt).clamp(0.0, n as f64);
                let r0 = (x.floor() as usize).min(n - 1);
                let ft = x - r0 as f64;
                let y = p.get(1).rem_euclid(2.0 * PI) / dt;
                let l0 = y.floor() as usize % per_ring;
                let fp = y - y.floor();
                let ring_val = |ring: usize| -> f64 {
                    let a = self.values[self.grid.sphere_node(ring, l0)];
                    let b = self.values[self.grid.sphere_node(ring, (l0 + 1) % per_ring)];
                    a * (1.0 - fp) + b * fp
                };
                ring_val(r0) * (1.0 - ft) + ring_val(r0 + 1) * ft
            }
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["node", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            wr.write_record([i.to_string(), format!("{v:.17e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Samples an analytic conformal factor at every grid node.
///
/// Node values are exact evaluations of the profile. Torus radial profiles
/// additionally carry a [`RadialCore`] covering nodes within three cells of
/// the center, so that quadrature of singular profiles sees their true mass.
pub fn sample_factor(spec: &ConformalFactorSpec, grid: &Arc<Grid>) -> Result<ScalarField> {
    if spec.manifold != *grid.manifold() {
        return Err(Error::ManifoldMismatch(format!(
            "factor defined on {:?}, grid on {:?}",
            spec.manifold,
            grid.manifold()
        )));
    }
    let values: Vec<f64> = grid.nodes().iter().map(|p| spec.evaluate(p)).collect();
    let mut field = ScalarField::from_values(grid.clone(), values)?;
    field.analytic = Some(Arc::new(spec.clone()));
    if let (Some(center), Manifold::FlatTorus { period, dim }) =
        (spec.profile.radial_center(), spec.manifold)
    {
        let h = period / grid.n() as f64;
        let cutoff = 3.0 * h;
        let mut excluded = vec![false; grid.node_count()];
        let mut vol = 0.0;
        for (i, p) in grid.nodes().iter().enumerate() {
            if torus_distance_fast(period, center.coords(), p.coords()) < cutoff {
                excluded[i] = true;
                vol += grid.cell_volume(i);
            }
        }
        if vol > 0.0 {
            let radius = (vol / unit_ball_volume(dim)).powf(1.0 / dim as f64);
            let profile = spec.profile.clone();
            let breaks = profile
                .radial_breaks()
                .into_iter()
                .filter(|&b| b < radius)
                .collect();
            field.core = Some(RadialCore {
                center,
                radius,
                func: Arc::new(move |r| profile.radial_value(r).unwrap()),
                breaks,
                excluded: Arc::new(excluded),
                dim,
            });
        }
    }
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// `|f^2 g0|_{g0} = sqrt(m) f^2`.
    Metric,
    /// `|(f^2 - 1) g0|_{g0} = sqrt(m) |f^2 - 1|`.
    DifferenceToG0,
}

/// Pointwise g0-norm of `f^2 g0` (or of `f^2 g0 - g0`) from a factor field.
pub fn tensor_norm_field(f: &ScalarField, mode: NormMode) -> ScalarField {
    let sm = (f.grid.dim() as f64).sqrt();
    match mode {
        NormMode::Metric => f.map(move |v| sm * v * v),
        NormMode::DifferenceToG0 => f.map(move |v| sm * (v * v - 1.0).abs()),
    }
}

/// `(int |field|^p dV_{g0})^{1/p}` by node quadrature.
pub fn lp_norm(field: &ScalarField, p: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::ExponentRange(format!("p must be positive, got {p}")));
    }
    Ok(field.integral_pow(p).powf(1.0 / p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairEstimator {
    /// Exact quadrature over every node pair, weighted by cell volumes.
    FullGrid,
    /// Uniform pairs w.r.t. `g0 x g0`.
    MonteCarlo { samples: usize, seed: u64 },
}

/// A distance sample with its quadrature weight (product of cell volumes for
/// full-grid estimates; ignored by Monte Carlo).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedDistance {
    pub weight: f64,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqEstimate {
    pub value: f64,
    /// Standard error of `value` (delta method on the CLT error of the mean).
    pub std_error: f64,
    pub mean_power: f64,
    pub mean_power_std_error: f64,
    pub count: usize,
}

/// `|| d ||_{L^q(M x M)}` from pair distances.
pub fn lq_distance_norm(
    pairs: &[WeightedDistance],
    q: f64,
    total_volume_sq: f64,
    estimator: PairEstimator,
) -> Result<LqEstimate> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair distance list".into()));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::ExponentRange(format!("q must be positive, got {q}")));
    }
    match estimator {
        PairEstimator::FullGrid => {
            let mut acc = NeumaierSum::default();
            for p in pairs {
                acc.add(p.weight * p.distance.powf(q));
            }
            let s = acc.value();
            Ok(LqEstimate {
                value: s.powf(1.0 / q),
                std_error: 0.0,
                mean_power: s / total_volume_sq,
                mean_power_std_error: 0.0,
                count: pairs.len(),
            })
        }
        PairEstimator::MonteCarlo { samples, .. } => {
            if pairs.len() < 100 {
                return Err(Error::InvalidParameter(format!(
                    "Monte Carlo estimate needs at least 100 pairs, got {}",
                    pairs.len()
                )));
            }
            if samples != pairs.len() {
                return Err(Error::InvalidParameter(format!(
                    "estimator expects {samples} samples, got {}",
                    pairs.len()
                )));
            }
            let n = pairs.len() as f64;
            let mut acc = NeumaierSum::default();
            for p in pairs {
                acc.add(p.distance.powf(q));
            }
            let mean = acc.value() / n;
            let mut var = NeumaierSum::default();
            for p in pairs {
                let d = p.distance.powf(q) - mean;
                var.add(d * d);
            }
            let sd = (var.value() / (n - 1.0)).sqrt();
            let se = sd / n.sqrt();
            let value = (total_volume_sq * mean).powf(1.0 / q);
            let std_error = if mean > 0.0 { value * se / (q * mean) } else { 0.0 };
            Ok(LqEstimate {
                value,
                std_error,
                mean_power: mean,
                mean_power_std_error: se,
                count: pairs.len(),
            })
        }
    }
}

/// Draws node pairs uniformly with respect to `g0 x g0` (probability
/// proportional to cell volume), deterministically from `seed`.
pub fn sample_pairs(grid: &Grid, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = WeightedIndex::new(grid.cell_volumes()).expect("positive cell volumes");
    (0..count)
        .map(|_| (dist.sample(&mut rng), dist.sample(&mut rng)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::build_grid;
    use approx::assert_relative_eq;

    fn unit_torus(n: usize) -> Arc<Grid> {
        Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), n).unwrap())
    }

    #[test]
    fn constant_factor_samples() {
        let g = unit_torus(8);
        let spec = ConformalFactorSpec::constant(*g.manifold(), 1.0).unwrap();
        let f = sample_factor(&spec, &g).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn profile_values_match_formulas() {
        let spike_p = Profile::RadialSpike {
            j: 4.0,
            alpha: 0.5,
            center: Point::new(&[0.5, 0.5]),
        };
        assert_relative_eq!(spike_p.radial_value(0.0).unwrap(), 2.0);
        let e = std::f64::consts::E;
        let log_p = Profile::RadialLogSingular {
            j: e,
            eta: 2.0,
            center: Point::new(&[0.5, 0.5]),
        };
        assert_relative_eq!(log_p.radial_value(1.0 / e).unwrap(), e / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn bridges_are_continuous() {
        for (j, a) in [(4.0, 0.5), (64.0, 0.25), (1000.0, 0.9)] {
            let inner = spike(j, a, 1.0 / j);
            let outer = spike(j, a, 1.0 / j * (1.0 + 1e-13));
            assert!((inner - outer).abs() <= 1e-12 * inner.max(1.0));
            let end = spike(j, a, 2.0 / j);
            assert!((end - 1.0).abs() < 1e-12);
        }
        for j in [10.0, 1000.0] {
            let a = log_singular(j, 2.0, 1.0 / j);
            let b = log_singular(j, 2.0, 1.0 / j * (1.0 + 1e-13));
            assert!((a - b).abs() <= 1e-11 * a);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let t = Manifold::torus(2, 1.0).unwrap();
        let c = Point::new(&[0.5, 0.5]);
        assert!(ConformalFactorSpec::new(t, Profile::RadialSpike { j: 4.0, alpha: 1.5, center: c }).is_err());
        assert!(ConformalFactorSpec::new(t, Profile::RadialLogSingular { j: 4.0, eta: 1.0, center: c }).is_err());
        assert!(ConformalFactorSpec::new(t, Profile::CinchedEquator { j: 4.0, h0: 0.5 }).is_err());
        let s = Manifold::sphere(1.0).unwrap();
        assert!(ConformalFactorSpec::new(s, Profile::CinchedEquator { j: 4.0, h0: 1.5 }).is_err());
        assert!(matches!(
            ConformalFactorSpec::new(s, Profile::RadialSpike { j: 4.0, alpha: 0.5, center: c }),
            Err(Error::ManifoldMismatch(_))
        ));
    }

    #[test]
    fn manifold_mismatch_on_sampling() {
        let g = unit_torus(8);
        let spec = ConformalFactorSpec::constant(Manifold::torus(2, 2.0).unwrap(), 1.0).unwrap();
        assert!(matches!(sample_factor(&spec, &g), Err(Error::ManifoldMismatch(_))));
    }

    #[test]
    fn tensor_norm_examples() {
        let g = unit_torus(8);
        let one = ScalarField::constant(g.clone(), 1.0).unwrap();
        let m = tensor_norm_field(&one, NormMode::Metric);
        assert!(m.values().iter().all(|&v| (v - 2f64.sqrt()).abs() < 1e-15));
        let d = tensor_norm_field(&one, NormMode::DifferenceToG0);
        assert!(d.values().iter().all(|&v| v == 0.0));
        let g3 = Arc::new(build_grid(&Manifold::torus(3, 1.0).unwrap(), 4).unwrap());
        let two = ScalarField::constant(g3, 2.0).unwrap();
        let m = tensor_norm_field(&two, NormMode::Metric);
        assert!(m.values().iter().all(|&v| (v - 4.0 * 3f64.sqrt()).abs() < 1e-12));
    }

    #[test]
    fn lp_norm_examples() {
        let g = unit_torus(16);
        let c = ScalarField::constant(g.clone(), 3.0).unwrap();
        for p in [0.5, 1.0, 2.0, 7.0] {
            assert_relative_eq!(lp_norm(&c, p).unwrap(), 3.0, epsilon = 1e-12);
        }
        let half: Vec<f64> = (0..g.node_count()).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let f = ScalarField::from_values(g, half).unwrap();
        assert_relative_eq!(lp_norm(&f, 2.0).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        assert!(lp_norm(&f, 0.0).is_err());
    }

    #[test]
    fn lq_constant_distance() {
        let pairs: Vec<_> = (0..200)
            .map(|_| WeightedDistance { weight: 1.0 / 200.0, distance: 0.7 })
            .collect();
        let full = lq_distance_norm(&pairs, 3.0, 1.0, PairEstimator::FullGrid).unwrap();
        assert_relative_eq!(full.value, 0.7, epsilon = 1e-12);
        let mc = lq_distance_norm(&pairs, 3.0, 1.0, PairEstimator::MonteCarlo { samples: 200, seed: 1 }).unwrap();
        assert_relative_eq!(mc.value, 0.7, epsilon = 1e-12);
        assert_eq!(mc.std_error, 0.0);
        assert!(lq_distance_norm(&[], 1.0, 1.0, PairEstimator::FullGrid).is_err());
        assert!(lq_distance_norm(&pairs[..50], 1.0, 1.0, PairEstimator::MonteCarlo { samples: 50, seed: 1 }).is_err());
    }

    #[test]
    fn pair_sampling_is_deterministic() {
        let g = unit_torus(16);
        assert_eq!(sample_pairs(&g, 50, 9), sample_pairs(&g, 50, 9));
        assert_ne!(sample_pairs(&g, 50, 9), sample_pairs(&g, 50, 10));
    }

    #[test]
    fn interpolation_reproduces_nodes_and_linear_data() {
        let g = unit_torus(8);
        let vals: Vec<f64> = g.nodes().iter().map(|p| 1.0 + p.get(0)).collect();
        let f = ScalarField::from_values(g.clone(), vals).unwrap();
        for i in 0..g.node_count() {
            assert_relative_eq!(f.interpolate(g.node(i)), f.values()[i], epsilon = 1e-12);
        }
        assert_relative_eq!(f.interpolate(&Point::new(&[0.3, 0.41])), 1.3, epsilon = 1e-12);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let g = unit_torus(4);
        let f = ScalarField::constant(g, 2.0).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("node,value\n"));
        assert_eq!(s.lines().count(), 17);
    }
}

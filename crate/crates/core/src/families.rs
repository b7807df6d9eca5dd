//! Generators for the four example families and their limit-distance
//! oracles.
//!
//! * `SingularSet31`: log-singular profile about a point of a flat torus.
//!   Distances from the center do not converge to flat ones; along a radial
//!   segment of length 1 they tend to `1 + ln(eta)`.
//! * `Bubbles32`: on the unit 2-torus, `f_j = 1/r_j` on `B(p_j, r_j)` where
//!   `p_j` walks through the dyadic sets `Q_1, Q_2, ...` and `r_j = 2^{2-k}`
//!   for `p_j in Q_k`. Only the subsequence fixed at `(1/2, 1/2)` converges.
//! * `CinchedSphere33`: a conformal throat about the equator of the unit
//!   sphere, whose limit metric makes the equator a shortcut.
//! * `Spike34`: `j^alpha` spike with `f_j >= 1`, converging uniformly.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{log_singular, spike, Bubble, ConformalFactorSpec, Profile};
use crate::manifold::{g0_distance, Manifold, Point};
use crate::numerics::integrate_pieces;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", deny_unknown_fields)]
pub enum ExampleKind {
    SingularSet31 {
        eta: f64,
        manifold: Manifold,
        center: Point,
    },
    Bubbles32,
    CinchedSphere33 {
        h0: f64,
    },
    Spike34 {
        alpha: f64,
        manifold: Manifold,
        center: Point,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleFamily {
    pub kind: ExampleKind,
    pub j_list: Vec<u64>,
}

/// Where a family's distances may fail to converge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SingularLocus {
    Point(Point),
    Equator,
}

impl ExampleFamily {
    pub fn new(kind: ExampleKind, j_list: Vec<u64>) -> Result<Self> {
        if j_list.is_empty() {
            return Err(Error::Empty("j_list".into()));
        }
        if j_list.windows(2).any(|w| w[0] >= w[1]) || j_list[0] == 0 {
            return Err(Error::InvalidParameter("j_list must be positive and increasing".into()));
        }
        let fam = Self { kind, j_list };
        // validates parameters through the first member
        fam.spec_unchecked(fam.j_list[0])?;
        Ok(fam)
    }

    /// Period-4 2-torus centered singular family used for the radial limit.
    pub fn singular_set(eta: f64, j_list: Vec<u64>) -> Result<Self> {
        let manifold = Manifold::torus(2, 4.0)?;
        Self::new(
            ExampleKind::SingularSet31 {
                eta,
                manifold,
                center: Point::new(&[2.0, 2.0]),
            },
            j_list,
        )
    }

    pub fn spike(alpha: f64, j_list: Vec<u64>) -> Result<Self> {
        Self::new(
            ExampleKind::Spike34 {
                alpha,
                manifold: Manifold::torus(2, 1.0)?,
                center: Point::new(&[0.5, 0.5]),
            },
            j_list,
        )
    }

    pub fn manifold(&self) -> Manifold {
        match &self.kind {
            ExampleKind::SingularSet31 { manifold, .. } | ExampleKind::Spike34 { manifold, .. } => *manifold,
            ExampleKind::Bubbles32 => Manifold::FlatTorus { dim: 2, period: 1.0 },
            ExampleKind::CinchedSphere33 { .. } => Manifold::RoundSphere2 { radius: 1.0 },
        }
    }

    pub fn singular_locus(&self) -> Option<SingularLocus> {
        match &self.kind {
            ExampleKind::SingularSet31 { center, .. } => Some(SingularLocus::Point(*center)),
            ExampleKind::Bubbles32 => Some(SingularLocus::Point(Point::new(&[0.5, 0.5]))),
            ExampleKind::CinchedSphere33 { .. } => Some(SingularLocus::Equator),
            ExampleKind::Spike34 { .. } => None,
        }
    }

    /// g0 distance from `p` to the singular locus (infinite without one).
    pub fn locus_distance(&self, p: &Point) -> f64 {
        match self.singular_locus() {
            Some(SingularLocus::Point(c)) => g0_distance(&self.manifold(), &c, p),
            Some(SingularLocus::Equator) => (p.get(0) - FRAC_PI_2).abs(),
            None => f64::INFINITY,
        }
    }

    /// Conformal factor of member `j`.
    pub fn factor_spec(&self, j: u64) -> Result<ConformalFactorSpec> {
        if !self.j_list.contains(&j) {
            return Err(Error::InvalidParameter(format!("j = {j} not in the family's j_list")));
        }
        self.spec_unchecked(j)
    }

    fn spec_unchecked(&self, j: u64) -> Result<ConformalFactorSpec> {
        let mfd = self.manifold();
        let jf = j as f64;
        let profile = match &self.kind {
            ExampleKind::SingularSet31 { eta, center, .. } => Profile::RadialLogSingular {
                j: jf,
                eta: *eta,
                center: *center,
            },
            ExampleKind::Spike34 { alpha, center, .. } => Profile::RadialSpike {
                j: jf,
                alpha: *alpha,
                center: *center,
            },
            ExampleKind::Bubbles32 => {
                let b = bubble(j)?;
                Profile::BubbleField {
                    bubbles: vec![Bubble {
                        center: b.center,
                        radius: b.radius,
                    }],
                }
            }
            ExampleKind::CinchedSphere33 { h0 } => Profile::CinchedEquator { j: jf, h0: *h0 },
        };
        ConformalFactorSpec::new(mfd, profile)
    }
}

/// Member `j` (1-based) of the bubble schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BubbleMember {
    pub j: u64,
    /// Index `k` of the dyadic set `Q_k` containing the center.
    pub level: u32,
    pub center: Point,
    pub radius: f64,
}

/// Number of points in `Q_1, ..., Q_{k-1}`.
fn points_before(k: u32) -> u64 {
    (4u64.pow(k) - 4) / 3
}

/// Largest supported level of the bubble schedule.
pub const MAX_BUBBLE_LEVEL: u32 = 12;

/// `p_j` lists `Q_k = {(a, b) / 2^{k+1} : a, b = 1..2^k}` level by level,
/// row-major in `(a, b)` within a level.
pub fn bubble(j: u64) -> Result<BubbleMember> {
    if j == 0 {
        return Err(Error::InvalidParameter("bubble schedule starts at j = 1".into()));
    }
    let mut k = 1;
    while points_before(k + 1) < j {
        k += 1;
        if k > MAX_BUBBLE_LEVEL {
            return Err(Error::InvalidParameter(format!("j = {j} beyond level {MAX_BUBBLE_LEVEL}")));
        }
    }
    let pos = j - 1 - points_before(k);
    let side = 1u64 << k;
    let a = pos / side + 1;
    let b = pos % side + 1;
    let denom = (1u64 << (k + 1)) as f64;
    Ok(BubbleMember {
        j,
        level: k,
        center: Point::new(&[a as f64 / denom, b as f64 / denom]),
        radius: 2f64.powi(2 - k as i32),
    })
}

/// Index `j_k` with `p_{j_k} = (1/2, 1/2)`, the last point of `Q_k`.
pub fn subsequence_index(k: u32) -> u64 {
    points_before(k + 1)
}

/// The member of level `k` whose center is nearest to `x`.
pub fn nearest_bubble(k: u32, x: &Point) -> Result<BubbleMember> {
    Ok(bubbles_near(k, x, 0)?.remove(0))
}

/// Members of level `k` whose lattice index is within `reach` of the one
/// nearest `x`, ordered by flat distance of the center to `x` (ties by `j`).
pub fn bubbles_near(k: u32, x: &Point, reach: i64) -> Result<Vec<BubbleMember>> {
    if k == 0 || k > MAX_BUBBLE_LEVEL {
        return Err(Error::InvalidParameter(format!("level {k} outside 1..={MAX_BUBBLE_LEVEL}")));
    }
    let side = 1i64 << k;
    let denom = (1u64 << (k + 1)) as f64;
    let snap = |c: f64| ((c * denom).round() as i64).clamp(1, side);
    let (a0, b0) = (snap(x.get(0)), snap(x.get(1)));
    let mut out = Vec::new();
    for a in (a0 - reach).max(1)..=(a0 + reach).min(side) {
        for b in (b0 - reach).max(1)..=(b0 + reach).min(side) {
            out.push(bubble(points_before(k) + ((a - 1) * side + (b - 1)) as u64 + 1)?);
        }
    }
    let dist = |m: &BubbleMember| (m.center.get(0) - x.get(0)).hypot(m.center.get(1) - x.get(1));
    out.sort_by(|p, q| dist(p).total_cmp(&dist(q)).then(p.j.cmp(&q.j)));
    Ok(out)
}

/// Bubble-schedule family restricted to `j_k` for the given levels.
pub fn bubble_subsequence(levels: &[u32]) -> Result<ExampleFamily> {
    ExampleFamily::new(
        ExampleKind::Bubbles32,
        levels.iter().map(|&k| subsequence_index(k)).collect(),
    )
}

/// `int_0^{r_max} f_j(r) dr` along a ray from the profile center (the north
/// pole for the cinched sphere) to relative accuracy `1e-10`.
pub fn finite_j_radial_oracle(family: &ExampleFamily, j: u64, r_max: f64) -> Result<f64> {
    if !(r_max >= 0.0) {
        return Err(Error::InvalidParameter(format!("r_max = {r_max} must be >= 0")));
    }
    let spec = family.spec_unchecked(j)?;
    let (f, breaks): (Box<dyn Fn(f64) -> f64>, Vec<f64>) = match &spec.profile {
        Profile::RadialLogSingular { j, eta, .. } => {
            let (j, eta) = (*j, *eta);
            (Box::new(move |r| log_singular(j, eta, r)), spec.profile.radial_breaks())
        }
        Profile::RadialSpike { j, alpha, .. } => {
            let (j, a) = (*j, *alpha);
            (Box::new(move |r| spike(j, a, r)), spec.profile.radial_breaks())
        }
        Profile::CinchedEquator { .. } => {
            let p = spec.profile.clone();
            (Box::new(move |r| p.radial_value(r).unwrap()), spec.profile.radial_breaks())
        }
        Profile::BubbleField { bubbles } => {
            let r = bubbles[0].radius;
            (Box::new(move |s| if s < r { 1.0 / r } else { 1.0 }), vec![r])
        }
        _ => return Err(Error::Unsupported("family has no radial profile".into())),
    };
    if r_max > family.manifold().injectivity_radius() * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "r_max = {r_max} exceeds the injectivity radius"
        )));
    }
    Ok(integrate_pieces(f, 0.0, r_max, &breaks, 0.0, 1e-12))
}

/// Distance in the `j -> infinity` limit space.
pub fn limit_distance(family: &ExampleFamily, x: &Point, y: &Point) -> Result<f64> {
    let mfd = family.manifold();
    for p in [x, y] {
        if !mfd.contains(p) {
            return Err(Error::ManifoldMismatch(format!("point {p:?} not on {mfd:?}")));
        }
    }
    let flat = g0_distance(&mfd, x, y);
    match &family.kind {
        ExampleKind::SingularSet31 { eta, center, .. } => {
            let at_x = g0_distance(&mfd, x, center) == 0.0;
            let at_y = g0_distance(&mfd, y, center) == 0.0;
            Ok(if at_x ^ at_y { flat + eta.ln() } else { flat })
        }
        ExampleKind::Bubbles32 | ExampleKind::Spike34 { .. } => Ok(flat),
        ExampleKind::CinchedSphere33 { h0 } => Ok(cinched_limit(*h0, x, y, &mfd)),
    }
}

/// `min(direct, min_{a, b} d(x, E(a)) + h0 |arc(a, b)| + d(E(b), y))` over
/// equator points `E(phi)`, by grid search and pattern-search refinement.
fn cinched_limit(h0: f64, x: &Point, y: &Point, mfd: &Manifold) -> f64 {
    let radius = match *mfd {
        Manifold::RoundSphere2 { radius } => radius,
        _ => unreachable!(),
    };
    let direct = g0_distance(mfd, x, y);
    let eq = |phi: f64| Point::sphere(FRAC_PI_2, phi.rem_euclid(2.0 * PI));
    let arc = |a: f64, b: f64| {
        let d = (a - b).rem_euclid(2.0 * PI);
        radius * d.min(2.0 * PI - d)
    };
    let cost = |a: f64, b: f64| {
        g0_distance(mfd, x, &eq(a)) + h0 * arc(a, b) + g0_distance(mfd, &eq(b), y)
    };
    let steps = 720;
    let grid: Vec<f64> = (0..steps).map(|i| 2.0 * PI * i as f64 / steps as f64).collect();
    let dx: Vec<f64> = grid.iter().map(|&a| g0_distance(mfd, x, &eq(a))).collect();
    let dy: Vec<f64> = grid.iter().map(|&b| g0_distance(mfd, &eq(b), y)).collect();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for (i, &a) in grid.iter().enumerate() {
        for (k, &b) in grid.iter().enumerate() {
            let c = dx[i] + h0 * arc(a, b) + dy[k];
            if c < best.0 {
                best = (c, a, b);
            }
        }
    }
    let (mut c, mut a, mut b) = best;
    let mut step = 2.0 * PI / steps as f64;
    while step > 1e-13 {
        let mut moved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step), (step, step), (-step, -step)] {
            let trial = cost(a + da, b + db);
            if trial < c {
                c = trial;
                a += da;
                b += db;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    direct.min(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spike_values_from_factor_spec() {
        let fam = ExampleFamily::spike(0.5, vec![4, 8]).unwrap();
        let spec = fam.factor_spec(4).unwrap();
        assert_relative_eq!(spec.evaluate(&Point::new(&[0.5, 0.5])), 2.0);
        let mid = spec.evaluate(&Point::new(&[0.5 + 1.5 / 4.0, 0.5]));
        assert!(mid > 1.0 && mid < 2.0);
        assert_eq!(spec.evaluate(&Point::new(&[0.95, 0.95])), 1.0);
        assert!(fam.factor_spec(5).is_err());
    }

    #[test]
    fn bubble_schedule_levels() {
        let first = bubble(1).unwrap();
        assert_eq!(first.level, 1);
        assert_eq!(first.center, Point::new(&[0.25, 0.25]));
        assert_relative_eq!(first.radius, 2.0);
        assert_eq!(bubble(4).unwrap().center, Point::new(&[0.5, 0.5]));
        let q2 = bubble(5).unwrap();
        assert_eq!(q2.level, 2);
        assert_relative_eq!(q2.radius, 1.0);
        for k in 1..9 {
            let b = bubble(subsequence_index(k)).unwrap();
            assert_eq!(b.level, k);
            assert_eq!(b.center, Point::new(&[0.5, 0.5]));
        }
        assert_eq!(subsequence_index(1), 4);
        assert_eq!(subsequence_index(2), 20);
        let near = nearest_bubble(5, &Point::new(&[0.3, 0.4])).unwrap();
        assert_eq!(near.level, 5);
        assert!(g0_distance(&Manifold::torus(2, 1.0).unwrap(), &near.center, &Point::new(&[0.3, 0.4])) <= 1.0 / 64.0 * 2f64.sqrt() / 2.0 + 1e-12);
    }

    #[test]
    fn level_two_bubble_is_flat() {
        let fam = ExampleFamily::new(ExampleKind::Bubbles32, vec![5]).unwrap();
        let spec = fam.factor_spec(5).unwrap();
        assert_eq!(spec.evaluate(&Point::new(&[0.9, 0.9])), 1.0);
    }

    #[test]
    fn radial_oracles() {
        let fam = ExampleFamily::spike(0.5, vec![16]).unwrap();
        let v = finite_j_radial_oracle(&fam, 16, 0.5).unwrap();
        let bridge = crate::numerics::integrate(|r| crate::field::spike(16.0, 0.5, r), 1.0 / 16.0, 2.0 / 16.0, 0.0, 1e-13);
        assert_relative_eq!(v, 4.0 / 16.0 + bridge + (0.5 - 2.0 / 16.0), max_relative = 1e-10);

        let fam = ExampleFamily::singular_set(2.0, vec![100, 1000, 10000]).unwrap();
        let mut prev = f64::INFINITY;
        for j in [100u64, 1000, 10000] {
            let jf = j as f64;
            let v = finite_j_radial_oracle(&fam, j, 1.0).unwrap();
            // closed form of every piece except the bridge
            let bridge = crate::numerics::integrate(|r| crate::field::bridge(jf / (1.0 + jf.ln()), jf * r), 1.0 / jf, 2.0 / jf, 0.0, 1e-13);
            let closed = 1.0 / (1.0 + jf.ln())
                + ((1.0 + 2.0 * jf.ln()) / (1.0 + jf.ln())).ln()
                + bridge
                + (1.0 - 2.0 / jf);
            assert_relative_eq!(v, closed, max_relative = 1e-9);
            assert!(v < prev);
            prev = v;
        }
        assert!(prev > 1.0 + 2f64.ln());
    }

    #[test]
    fn singular_limit_and_flat_limits() {
        let fam = ExampleFamily::singular_set(2.0, vec![10]).unwrap();
        let c = Point::new(&[2.0, 2.0]);
        let y = Point::new(&[3.0, 2.0]);
        assert_relative_eq!(limit_distance(&fam, &c, &y).unwrap(), 1.0 + 2f64.ln(), epsilon = 1e-14);
        let z = Point::new(&[3.0, 3.0]);
        assert_relative_eq!(limit_distance(&fam, &z, &y).unwrap(), 1.0);
    }

    #[test]
    fn cinched_limit_oracle() {
        let fam = ExampleFamily::new(ExampleKind::CinchedSphere33 { h0: 0.5 }, vec![64]).unwrap();
        let a = Point::sphere(FRAC_PI_2, 0.0);
        let b = Point::sphere(FRAC_PI_2, FRAC_PI_2);
        assert_relative_eq!(limit_distance(&fam, &a, &b).unwrap(), PI / 4.0, epsilon = 1e-10);
        let n = Point::sphere(0.0, 0.0);
        let s = Point::sphere(PI, 0.0);
        assert_relative_eq!(limit_distance(&fam, &n, &s).unwrap(), PI, epsilon = 1e-10);
        // off-equator pair: never longer than the direct distance
        let p = Point::sphere(1.3, 0.2);
        let q = Point::sphere(1.9, 2.5);
        let d = limit_distance(&fam, &p, &q).unwrap();
        assert!(d <= g0_distance(&fam.manifold(), &p, &q));
    }

    #[test]
    fn invalid_families() {
        assert!(ExampleFamily::spike(1.5, vec![4]).is_err());
        assert!(ExampleFamily::singular_set(0.5, vec![4]).is_err());
        assert!(ExampleFamily::spike(0.5, vec![8, 4]).is_err());
        assert!(ExampleFamily::spike(0.5, vec![]).is_err());
    }
}

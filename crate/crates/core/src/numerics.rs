//! Small numerical kernels shared across modules: compensated summation,
//! adaptive Gauss-Kronrod quadrature, composite rules and least squares.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = NeumaierSum::default();
    for v in it {
        acc.add(v);
    }
    acc.value()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let f1 = f(c - x);
        let f2 = f(c + x);
        rk += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            rg += WG[i / 2] * (f1 + f2);
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the total
/// estimated error is below `max(abs_tol, rel_tol * |I|)` or the interval
/// budget is exhausted.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (r, e) = gk15(&mut f, a, b);
    let mut intervals = vec![(a, b, r, e)];
    let mut total = r;
    let mut err = e;
    let mut iter = 0;
    while err > abs_tol.max(rel_tol * total.abs()) && iter < 2000 {
        iter += 1;
        let (k, _) = intervals
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, iv)| if iv.3 > acc.1 { (i, iv.3) } else { acc });
        let (lo, hi, r0, e0) = intervals.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            intervals.push((lo, hi, r0, 0.0));
            err -= e0;
            continue;
        }
        let (r1, e1) = gk15(&mut f, lo, mid);
        let (r2, e2) = gk15(&mut f, mid, hi);
        total += r1 + r2 - r0;
        err += e1 + e2 - e0;
        intervals.push((lo, mid, r1, e1));
        intervals.push((mid, hi, r2, e2));
    }
    compensated_sum(intervals.iter().map(|iv| iv.2))
}

/// Integrates over `[a, b]` splitting at the given interior breakpoints.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut acc = NeumaierSum::default();
    for w in pts.windows(2) {
        acc.add(integrate(&mut f, w[0], w[1], abs_tol, rel_tol));
    }
    acc.value()
}

/// Composite rule used for sampled integrands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Midpoint,
    Trapezoid,
    Simpson,
}

/// Applies the composite `rule` with `panels` sub-intervals on `[0, 1]`.
pub fn composite_unit<F: FnMut(f64) -> f64>(rule: Rule, panels: usize, mut f: F) -> f64 {
    let n = panels.max(1);
    let h = 1.0 / n as f64;
    match rule {
        Rule::Midpoint => (0..n).map(|i| f((i as f64 + 0.5) * h)).sum::<f64>() * h,
        Rule::Trapezoid => {
            let mut s = 0.5 * (f(0.0) + f(1.0));
            for i in 1..n {
                s += f(i as f64 * h);
            }
            s * h
        }
        Rule::Simpson => {
            let mut s = f(0.0) + f(1.0);
            for i in 0..n {
                s += 4.0 * f((i as f64 + 0.5) * h);
                if i > 0 {
                    s += 2.0 * f(i as f64 * h);
                }
            }
            s * h / 6.0
        }
    }
}

/// Complete elliptic integral of the first kind `K(k)` via the AGM.
pub fn elliptic_k(k: f64) -> f64 {
    let mut a = 1.0;
    let mut b = (1.0 - k * k).max(0.0).sqrt();
    if b == 0.0 {
        return f64::INFINITY;
    }
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        a = an;
        b = bn;
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
    }
    std::f64::consts::PI / (2.0 * a)
}

/// Ordinary least squares fit `y = slope * x + intercept`; returns
/// `(slope, intercept, rms_residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_kronrod_polynomial_and_log_singular() {
        let v = integrate(|x| x * x * x, 0.0, 2.0, 1e-14, 1e-12);
        assert_relative_eq!(v, 4.0, epsilon = 1e-12);
        // antiderivative of 1/(r (1 - ln r)) is -ln(1 - ln r)
        let a: f64 = 1e-8;
        let b: f64 = 1e-2;
        let exact = (1.0 - a.ln()).ln() - (1.0 - b.ln()).ln();
        let v = integrate(|r| 1.0 / (r * (1.0 - r.ln())), a, b, 1e-14, 1e-10);
        assert_relative_eq!(v, exact, max_relative = 1e-9);
    }

    #[test]
    fn composite_rules_exact_for_linear() {
        for rule in [Rule::Midpoint, Rule::Trapezoid, Rule::Simpson] {
            let v = composite_unit(rule, 3, |s| 1.0 + s);
            assert_relative_eq!(v, 1.5, epsilon = 1e-14);
        }
        let v = composite_unit(Rule::Simpson, 2, |s| s * s * s);
        assert_relative_eq!(v, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn elliptic_k_reference_values() {
        assert_relative_eq!(elliptic_k(0.0), std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        // K(1/sqrt 2) = Gamma(1/4)^2 / (4 sqrt(pi))
        assert_relative_eq!(elliptic_k(0.5f64.sqrt()), 1.854_074_677_301_372, epsilon = 1e-13);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let v = vec![1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, i, r) = linear_fit(&x, &y);
        assert_relative_eq!(s, 2.0);
        assert_relative_eq!(i, 1.0);
        assert!(r < 1e-12);
    }
}

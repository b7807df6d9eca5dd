//! Reproducible experiment runs. Each run turns an [`ExperimentConfig`] into
//! long-format rows; verdicts are recomputed from the config and rows alone
//! by [`evaluate`].

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{build_family, family_potential_bound_check, normal_jacobian_check};
use crate::error::{Error, Result};
use crate::families::{
    finite_j_radial_oracle, limit_distance, bubbles_near, ExampleFamily, ExampleKind, SingularLocus,
};
use crate::field::{
    cinch, lp_norm, lq_distance_norm, sample_factor, sample_pairs, tensor_norm_field, Bubble,
    ConformalFactorSpec, CustomProfile, NormMode, PairEstimator, Profile, ScalarField, WeightedDistance,
};
use crate::geodesic::{delta, Solver, SolverConfig};
use crate::manifold::{build_grid, g0_distance, Grid, Manifold, Point, DEFAULT_NODE_CAP};
use crate::numerics::median;
use crate::potential::{
    bad_set_from_potentials, distance_potential_check, exponent_gate, family_potentials, lq_of_potential,
    potential_at, potential_field, potential_norm_ratio, reverse_holder_check, BoundVariant, PotentialConfig,
};
use crate::report::{by_param, config_hash, series, Axis, ChartSpec, ExperimentReport, Row, RowSink, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Sobolev,
    Converge,
    Holder,
    Badset,
    CurvesCheck,
    PotentialCheck,
    Oracle,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Sobolev,
        Experiment::Converge,
        Experiment::Holder,
        Experiment::Badset,
        Experiment::CurvesCheck,
        Experiment::PotentialCheck,
        Experiment::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Sobolev => "sobolev",
            Experiment::Converge => "converge",
            Experiment::Holder => "holder",
            Experiment::Badset => "badset",
            Experiment::CurvesCheck => "curves-check",
            Experiment::PotentialCheck => "potential-check",
            Experiment::Oracle => "oracle",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub pairs: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            pairs: 200,
            seed: 20240917,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exponents {
    /// Metric exponent: `||h||_{L^{p/2}}` for sobolev/holder, `||f||_{L^p}`
    /// for the potential norm ratio.
    pub p: f64,
    /// Distance or potential exponents inside the gate `q < m p / (m - p)`.
    pub q_list: Vec<f64>,
    /// Exponents above the gate, logged as divergence witnesses only.
    pub q_witness: Vec<f64>,
    /// Relative shrink of the gate.
    pub margin: f64,
    /// Tube radius about the singular locus.
    pub rho: f64,
    /// Bad-set thresholds as multiples of the field-free baseline.
    pub delta_list: Vec<f64>,
    /// Window starts for the bad set; empty means the family's `j_list`.
    pub j0_list: Vec<u64>,
    /// Exponent of `||f_j - 1||_{L^p}` logged by `converge`.
    pub excess_p: Option<f64>,
}

impl Default for Exponents {
    fn default() -> Self {
        Self {
            p: 1.5,
            q_list: vec![2.0],
            q_witness: Vec::new(),
            margin: 0.05,
            rho: 0.0,
            delta_list: vec![4.0],
            j0_list: Vec::new(),
            excess_p: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed relative spread of a ratio about its median across `j`.
    pub ratio_spread: f64,
    /// Uniform convergence tolerance, widened by the stencil floor.
    pub uniform: f64,
    /// Tolerance for explicit probe pairs.
    pub probe: f64,
    pub holdout_slack: f64,
    pub holder_stability: f64,
    pub constant_stability: f64,
    pub quadrature_slack: f64,
    /// Bad-set containment radius as a fraction of the period.
    pub containment: f64,
    pub dimension_slack: f64,
    pub endpoint: f64,
    pub jacobian: f64,
    pub jacobian_samples: usize,
    /// Allowed factor over the `f = 1` curve-family ratio.
    pub baseline_factor: f64,
    pub constancy: f64,
    pub refinement: f64,
    pub witness: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ratio_spread: 0.10,
            uniform: 0.01,
            probe: 0.025,
            holdout_slack: 0.10,
            holder_stability: 0.25,
            constant_stability: 0.15,
            quadrature_slack: 0.05,
            containment: 0.1,
            dimension_slack: 0.5,
            endpoint: 1e-12,
            jacobian: 1e-6,
            jacobian_samples: 1000,
            baseline_factor: 3.0,
            constancy: 1e-10,
            refinement: 0.01,
            witness: 0.9,
        }
    }
}

/// An explicit pair compared against its reference distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub x: Point,
    pub y: Point,
}

/// Symmetric curve family and the example fields it is tested against. Empty
/// points are placed relative to the torus period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSettings {
    pub x: Option<Point>,
    pub y: Option<Point>,
    pub center: Option<Point>,
    /// Tube width as a fraction of the largest admissible width.
    pub width_fraction: f64,
    pub n_tau: usize,
    pub n_t: usize,
    pub check_tau: usize,
    pub check_t: usize,
    /// Concentration index of the example fields.
    pub j: u64,
}

impl Default for CurveSettings {
    fn default() -> Self {
        Self {
            x: None,
            y: None,
            center: None,
            width_fraction: 0.1,
            n_tau: 8,
            n_t: 64,
            check_tau: 20,
            check_t: 50,
            j: 16,
        }
    }
}

/// Full-sequence witnesses for the bubble family: `d_j(x, p_j)` for the
/// bubble nearest to `point` at each level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Witness {
    pub point: Point,
    pub levels: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistancePotentialSettings {
    /// Slack `eps` of the excess variant as fractions of the diameter.
    pub epsilon_fractions: Vec<f64>,
}

impl Default for DistancePotentialSettings {
    fn default() -> Self {
        Self {
            epsilon_fractions: vec![0.2, 0.1, 0.05],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReverseHolderSettings {
    pub p: f64,
    /// `t = m - p + t_offset`.
    pub t_offset: f64,
    /// Thresholds as fractions of the potential of `f` at the center.
    pub delta_fractions: Vec<f64>,
}

impl Default for ReverseHolderSettings {
    fn default() -> Self {
        Self {
            p: 2.0,
            t_offset: 0.5,
            delta_fractions: vec![0.1, 10f64.powf(-0.5), 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub family: ExampleFamily,
    /// Grid resolution.
    pub n: usize,
    pub solver: SolverConfig,
    pub sampling: Sampling,
    pub exponents: Exponents,
    pub tolerances: Tolerances,
    pub probes: Vec<Probe>,
    pub curves: CurveSettings,
    pub witness: Option<Witness>,
    pub distance_potential: Option<DistancePotentialSettings>,
    pub reverse_holder: Option<ReverseHolderSettings>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, family: ExampleFamily, n: usize) -> Self {
        Self {
            experiment,
            family,
            n,
            solver: SolverConfig::default(),
            sampling: Sampling::default(),
            exponents: Exponents::default(),
            tolerances: Tolerances::default(),
            probes: Vec::new(),
            curves: CurveSettings::default(),
            witness: None,
            distance_potential: None,
            reverse_holder: None,
        }
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// Every violated rule, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mfd = self.family.manifold();
        let m = mfd.dim();
        let mf = m as f64;
        let e = &self.exponents;
        if let Err(err) = self.solver.validate() {
            v.push(err.to_string());
        }
        if self.n < 4 {
            v.push(format!("n = {} is below the minimum of 4", self.n));
        }
        let nodes = (self.n as u128).pow(if mfd.is_torus() { m as u32 } else { 2 }) * 2;
        if nodes > DEFAULT_NODE_CAP as u128 {
            v.push(format!("n = {} exceeds the node cap {DEFAULT_NODE_CAP}", self.n));
        }
        if 2 * self.solver.stencil_radius >= self.n {
            v.push(format!(
                "stencil radius {} needs n > {}",
                self.solver.stencil_radius,
                2 * self.solver.stencil_radius
            ));
        }
        if self.sampling.pairs == 0 && !(self.experiment == Experiment::Converge && !self.probes.is_empty()) {
            v.push("sampling.pairs must be positive (zero is allowed only for converge with probes)".into());
        }
        let torus_only = |v: &mut Vec<String>| {
            if !mfd.is_torus() {
                v.push(format!("{} runs on flat tori only", self.experiment.name()));
            }
        };
        let gate_check = |v: &mut Vec<String>, lo: f64| {
            if !(e.p >= lo && e.p < mf) {
                v.push(format!("p = {} must lie in [{lo}, m = {m})", e.p));
                return;
            }
            let gate = exponent_gate(m, e.p, e.margin);
            for &q in &e.q_list {
                if !(q > 0.0 && q < gate) {
                    v.push(format!(
                        "q = {q} violates the gate q < m p / (m - p) = {:.6} shrunk by margin {} to {gate:.6}",
                        mf * e.p / (mf - e.p),
                        e.margin
                    ));
                }
            }
        };
        if !(0.0..1.0).contains(&e.margin) {
            v.push(format!("margin = {} must lie in [0, 1)", e.margin));
        }
        match self.experiment {
            Experiment::Sobolev => {
                gate_check(&mut v, f64::MIN_POSITIVE);
                if e.q_list.is_empty() {
                    v.push("sobolev needs a nonempty q_list".into());
                }
                if self.sampling.pairs < 100 {
                    v.push(format!("sobolev needs at least 100 pairs, got {}", self.sampling.pairs));
                }
            }
            Experiment::Holder => {
                if !(e.p > mf) {
                    v.push(format!("holder needs p > m = {m}, got p = {}", e.p));
                }
                if self.sampling.pairs < 4 {
                    v.push("holder needs at least 4 pairs".into());
                }
            }
            Experiment::Converge => {
                if !(e.rho >= 0.0) {
                    v.push(format!("rho = {} must be >= 0", e.rho));
                }
                if self.witness.is_some() && self.family.kind != ExampleKind::Bubbles32 {
                    v.push("witness rows need the bubbles32 family".into());
                }
                if let Some(w) = &self.witness {
                    if w.levels.is_empty() {
                        v.push("witness.levels must be nonempty".into());
                    }
                }
            }
            Experiment::Badset => {
                torus_only(&mut v);
                if self.n < 16 {
                    v.push(format!("badset needs n >= 16 for box counting, got {}", self.n));
                }
                if e.delta_list.is_empty() || e.delta_list.iter().any(|&d| !(d > 0.0)) {
                    v.push("delta_list must be nonempty and positive".into());
                }
                for j0 in &e.j0_list {
                    if !self.family.j_list.iter().any(|j| j >= j0) {
                        v.push(format!("j0 = {j0} leaves an empty window"));
                    }
                }
            }
            Experiment::CurvesCheck => {
                torus_only(&mut v);
                let c = &self.curves;
                if !(c.width_fraction > 0.0 && c.width_fraction <= 1.0) {
                    v.push(format!("curves.width_fraction = {} must lie in (0, 1]", c.width_fraction));
                }
            }
            Experiment::PotentialCheck => {
                torus_only(&mut v);
                if !e.q_list.is_empty() {
                    gate_check(&mut v, 1.0);
                }
                if let Some(rh) = &self.reverse_holder {
                    if !(rh.p >= 1.0) {
                        v.push(format!("reverse_holder.p = {} must be >= 1", rh.p));
                    }
                    let t = mf - rh.p + rh.t_offset;
                    if !(t > mf - rh.p && t < mf) {
                        v.push(format!("reverse-Holder exponent t = {t} must lie in ({}, {m})", mf - rh.p));
                    }
                    if rh.delta_fractions.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
                        v.push("reverse_holder.delta_fractions must lie in (0, 1]".into());
                    }
                    if !matches!(self.family.singular_locus(), Some(SingularLocus::Point(_))) {
                        v.push("reverse_holder needs a point-singular family".into());
                    }
                }
                if self.distance_potential.is_some() && self.sampling.pairs < 2 {
                    v.push("distance_potential needs at least 2 pairs".into());
                }
            }
            Experiment::Oracle => {}
        }
        v
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let problems = cfg.violations();
    if !problems.is_empty() {
        return Err(Error::InvalidParameter(problems.join("; ")));
    }
    let hash = cfg.hash();
    let mut notes = Vec::new();
    let rows = match cfg.experiment {
        Experiment::Sobolev => run_sobolev(cfg, &hash)?,
        Experiment::Converge => run_convergence(cfg, &hash, &mut notes)?,
        Experiment::Holder => run_holder(cfg, &hash, &mut notes)?,
        Experiment::Badset => run_badset(cfg, &hash, &mut notes)?,
        Experiment::CurvesCheck => run_curves(cfg, &hash)?,
        Experiment::PotentialCheck => run_potential(cfg, &hash)?,
        Experiment::Oracle => run_oracle(cfg, &hash)?,
    };
    let verdicts = evaluate(cfg, &rows);
    Ok(ExperimentReport {
        experiment: cfg.experiment.name().to_string(),
        config_hash: hash,
        config: serde_json::to_value(cfg).map_err(|e| Error::Io(e.to_string()))?,
        rows,
        verdicts,
        notes,
        wall_clock_seconds: None,
    })
}

/// Recomputes a report's verdicts from its stored config and rows.
pub fn recompute_verdicts(report: &ExperimentReport) -> Result<Vec<Verdict>> {
    let cfg: ExperimentConfig =
        serde_json::from_value(report.config.clone()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(evaluate(&cfg, &report.rows))
}

/// Charts written for each experiment.
pub fn chart_specs(experiment: Experiment) -> Vec<ChartSpec> {
    let j = |series| ChartSpec { series, x: Axis::J, log_x: true, log_y: false };
    let jlog = |series| ChartSpec { series, x: Axis::J, log_x: true, log_y: true };
    match experiment {
        Experiment::Sobolev => vec![j("ratio"), j("ratio_above_gate")],
        Experiment::Converge => vec![
            jlog("uniform_error"),
            jlog("probe_error_finite_j"),
            jlog("probe_error_limit"),
            j("witness_ratio"),
            j("radial_oracle"),
        ],
        Experiment::Holder => vec![j("fitted_constant")],
        Experiment::Badset => vec![
            jlog("area"),
            ChartSpec { series: "box_count", x: Axis::Param, log_x: true, log_y: true },
        ],
        Experiment::CurvesCheck => vec![ChartSpec {
            series: "family_bound_ratio",
            x: Axis::Param,
            log_x: false,
            log_y: false,
        }],
        Experiment::PotentialCheck => vec![
            j("potential_ratio"),
            j("plain_constant"),
            ChartSpec { series: "excess_constant", x: Axis::Param, log_x: true, log_y: false },
        ],
        Experiment::Oracle => vec![j("radial_oracle")],
    }
}

fn grid_for(cfg: &ExperimentConfig) -> Result<Arc<Grid>> {
    Ok(Arc::new(build_grid(&cfg.family.manifold(), cfg.n)?))
}

fn member(cfg: &ExperimentConfig, grid: &Arc<Grid>, j: u64) -> Result<ScalarField> {
    sample_factor(&cfg.family.factor_spec(j)?, grid)
}

fn distances(solver: &Solver, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    pairs.par_iter().map(|&(a, b)| solver.node_distance(a, b)).collect()
}

fn exact_flat(grid: &Grid, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(a, b)| g0_distance(grid.manifold(), grid.node(a), grid.node(b)))
        .collect()
}

/// Rows of one `j` collected in parallel and appended in `j` order.
fn per_j<F>(cfg: &ExperimentConfig, hash: &str, f: F) -> Result<Vec<Row>>
where
    F: Fn(u64, &mut RowSink) -> Result<()> + Sync,
{
    let chunks: Vec<Vec<Row>> = cfg
        .family
        .j_list
        .par_iter()
        .map(|&j| {
            let mut sink = RowSink::new(hash);
            f(j, &mut sink)?;
            Ok(sink.into_rows())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// `||d_h||_{L^q}`, `||h||^{1/2}_{L^{p/2}}` and their ratio for one field.
/// Returns `(q, lq, lq_std_error, metric_half_norm)` per exponent.
pub fn sobolev_ratios(
    f: &ScalarField,
    solver: &Solver,
    pairs: &[(usize, usize)],
    p: f64,
    qs: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    let grid = f.grid();
    let d = distances(solver, pairs)?;
    let wd: Vec<WeightedDistance> = d.iter().map(|&distance| WeightedDistance { weight: 1.0, distance }).collect();
    let vol2 = grid.total_volume().powi(2);
    let half = lp_norm(&tensor_norm_field(f, NormMode::Metric), p / 2.0)?.sqrt();
    qs.iter()
        .map(|&q| {
            let est = lq_distance_norm(&wd, q, vol2, PairEstimator::MonteCarlo { samples: pairs.len(), seed })?;
            Ok((q, est.value, est.std_error, half))
        })
        .collect()
}

fn run_sobolev(cfg: &ExperimentConfig, hash: &str) -> Result<Vec<Row>> {
    let grid = grid_for(cfg)?;
    let pairs = sample_pairs(&grid, cfg.sampling.pairs, cfg.sampling.seed);
    let e = &cfg.exponents;
    per_j(cfg, hash, |j, sink| {
        let f = member(cfg, &grid, j)?;
        let solver = Solver::new(&f, cfg.solver)?;
        let all: Vec<f64> = e.q_list.iter().chain(&e.q_witness).copied().collect();
        let out = sobolev_ratios(&f, &solver, &pairs, e.p, &all, cfg.sampling.seed)?;
        sink.push("metric_half_norm", j, e.p, out.first().map_or(0.0, |o| o.3), 0.0);
        for (i, (q, lq, se, half)) in out.into_iter().enumerate() {
            let name = if i < e.q_list.len() { "ratio" } else { "ratio_above_gate" };
            sink.push("distance_lq", j, q, lq, se);
            sink.push(name, j, q, lq / half, se / half);
        }
        Ok(())
    })
}

/// Reference distance for a probe: the finite-`j` radial oracle when `x`
/// sits on the radial center, otherwise the limit distance.
fn probe_reference(family: &ExampleFamily, j: u64, x: &Point, y: &Point) -> Result<(f64, bool)> {
    let mfd = family.manifold();
    if let ExampleKind::SingularSet31 { center, .. } | ExampleKind::Spike34 { center, .. } = &family.kind {
        let r = g0_distance(&mfd, x, y);
        if g0_distance(&mfd, x, center) == 0.0 && r <= mfd.injectivity_radius() {
            return Ok((finite_j_radial_oracle(family, j, r)?, true));
        }
    }
    Ok((limit_distance(family, x, y)?, false))
}

fn radial_reach(family: &ExampleFamily) -> Option<(Point, f64)> {
    match &family.kind {
        ExampleKind::SingularSet31 { center, manifold, .. } | ExampleKind::Spike34 { center, manifold, .. } => {
            Some((*center, manifold.injectivity_radius().min(1.0)))
        }
        _ => None,
    }
}

fn radial_oracle_rows(family: &ExampleFamily, sink: &mut RowSink) -> Result<()> {
    let Some((center, r)) = radial_reach(family) else {
        return Ok(());
    };
    let mfd = family.manifold();
    let mut end = center.coords().to_vec();
    end[0] += r;
    let end = mfd.wrap(&Point::new(&end));
    for &j in &family.j_list {
        sink.push("radial_oracle", j, r, finite_j_radial_oracle(family, j, r)?, 0.0);
    }
    sink.push("radial_limit", 0, r, limit_distance(family, &center, &end)?, 0.0);
    Ok(())
}

fn run_convergence(cfg: &ExperimentConfig, hash: &str, notes: &mut Vec<String>) -> Result<Vec<Row>> {
    let grid = grid_for(cfg)?;
    let family = &cfg.family;
    let pairs: Vec<(usize, usize)> = sample_pairs(&grid, cfg.sampling.pairs, cfg.sampling.seed)
        .into_iter()
        .filter(|(a, b)| a != b)
        .collect();
    let rho = cfg.exponents.rho;
    let outside: Vec<bool> = pairs
        .iter()
        .map(|&(a, b)| family.locus_distance(grid.node(a)) >= rho && family.locus_distance(grid.node(b)) >= rho)
        .collect();
    let limits: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| limit_distance(family, grid.node(a), grid.node(b)))
        .collect::<Result<_>>()?;
    let flat = exact_flat(&grid, &pairs);
    let probes: Vec<(usize, usize)> = cfg
        .probes
        .iter()
        .map(|p| (grid.nearest_node(&p.x).0, grid.nearest_node(&p.y).0))
        .collect();
    if family.singular_locus().is_none() && rho > 0.0 {
        notes.push("family has no singular locus; every pair counts as outside the tube".into());
    }
    notes.push(exponent_readings(cfg));
    let mut rows = per_j(cfg, hash, |j, sink| {
        let f = member(cfg, &grid, j)?;
        let spec = cfg.family.factor_spec(j)?;
        let solver = Solver::new(&f, cfg.solver)?;
        let d = distances(&solver, &pairs)?;
        let (mut out_rel, mut out_abs, mut in_rel, mut n_out, mut n_in) = (0.0f64, 0.0f64, 0.0f64, 0usize, 0usize);
        let mut margin = f64::INFINITY;
        let shrink = (1.0 - 1.0 / j as f64).max(0.0).sqrt();
        for i in 0..pairs.len() {
            let rel = (d[i] - limits[i]).abs() / limits[i];
            if outside[i] {
                out_rel = out_rel.max(rel);
                out_abs = out_abs.max((d[i] - limits[i]).abs());
                n_out += 1;
            } else {
                in_rel = in_rel.max(rel);
                n_in += 1;
            }
            margin = margin.min((d[i] - shrink * flat[i]) / flat[i]);
        }
        if n_out > 0 {
            sink.push("uniform_error", j, rho, out_rel, 0.0);
            sink.push("uniform_abs_error", j, rho, out_abs, 0.0);
        }
        sink.push("pairs_outside", j, rho, n_out as f64, 0.0);
        if n_in > 0 {
            sink.push("singular_error", j, rho, in_rel, 0.0);
        }
        sink.push("pairs_inside", j, rho, n_in as f64, 0.0);
        sink.push("factor_floor", j, 0.0, spec.lower_bound().unwrap_or(0.0), 0.0);
        if !pairs.is_empty() {
            sink.push("lower_bound_margin", j, 0.0, margin, 0.0);
        }
        if let Some(p) = cfg.exponents.excess_p {
            sink.push("excess_lp", j, p, lp_norm(&f.map(|v| (v - 1.0).abs()), p)?, 0.0);
        }
        for (i, &(s, t)) in probes.iter().enumerate() {
            let dj = solver.node_distance(s, t)?;
            let (reference, finite) = probe_reference(family, j, grid.node(s), grid.node(t))?;
            let name = if finite { "probe_error_finite_j" } else { "probe_error_limit" };
            sink.push("probe_distance", j, i as f64, dj, 0.0);
            sink.push("probe_reference", j, i as f64, reference, 0.0);
            sink.push(name, j, i as f64, (dj - reference).abs() / reference, 0.0);
        }
        Ok(())
    })?;
    let mut sink = RowSink::new(hash);
    radial_oracle_rows(family, &mut sink)?;
    if let Some(w) = &cfg.witness {
        witness_rows(cfg, &grid, w, &mut sink)?;
    }
    rows.extend(sink.into_rows());
    Ok(rows)
}

/// Bubble family members that keep a positive distance distortion: inside
/// `B(p_j, r_j)` the factor is `1/r_j`, so `d_j(x, p_j) = d_flat / r_j`.
/// Uses the nearest bubble whose center does not snap onto the witness node.
fn witness_rows(cfg: &ExperimentConfig, grid: &Arc<Grid>, w: &Witness, sink: &mut RowSink) -> Result<()> {
    let x = grid.nearest_node(&w.point).0;
    let rows: Vec<(u64, u32, f64, f64)> = w
        .levels
        .par_iter()
        .map(|&level| {
            let (b, c) = bubbles_near(level, &w.point, 4)?
                .into_iter()
                .map(|b| {
                    let c = grid.nearest_node(&b.center).0;
                    (b, c)
                })
                .find(|&(_, c)| c != x)
                .ok_or_else(|| Error::InvalidParameter(format!("no level-{level} bubble off the witness node")))?;
            let fam = ExampleFamily::new(ExampleKind::Bubbles32, vec![b.j])?;
            let f = sample_factor(&fam.factor_spec(b.j)?, grid)?;
            let solver = Solver::new(&f, cfg.solver)?;
            let d = solver.node_distance(x, c)?;
            let flat = g0_distance(grid.manifold(), grid.node(x), grid.node(c));
            Ok((b.j, level, b.radius, d * b.radius / flat))
        })
        .collect::<Result<_>>()?;
    for (j, level, r, ratio) in rows {
        sink.push("witness_ratio", j, level as f64, ratio, 0.0);
        sink.push("witness_radius", j, level as f64, r, 0.0);
    }
    Ok(())
}

fn exponent_readings(cfg: &ExperimentConfig) -> String {
    let m = cfg.family.manifold().dim() as f64;
    let p = cfg.exponents.p;
    format!(
        "exponent p = {p}: narrow reading 1/2 <= p <= m/2 is {}, wide reading p >= 1/2 is {}",
        if (0.5..=m / 2.0).contains(&p) { "satisfied" } else { "violated" },
        if p >= 0.5 { "satisfied" } else { "violated" },
    )
}

fn run_holder(cfg: &ExperimentConfig, hash: &str, notes: &mut Vec<String>) -> Result<Vec<Row>> {
    let grid = grid_for(cfg)?;
    let m = grid.dim() as f64;
    let p = cfg.exponents.p;
    let expo = (p - m) / p;
    let pairs: Vec<(usize, usize)> = sample_pairs(&grid, cfg.sampling.pairs, cfg.sampling.seed)
        .into_iter()
        .filter(|(a, b)| a != b)
        .collect();
    let flat = exact_flat(&grid, &pairs);
    let rows = per_j(cfg, hash, |j, sink| {
        let f = member(cfg, &grid, j)?;
        let solver = Solver::new(&f, cfg.solver)?;
        let d = distances(&solver, &pairs)?;
        let ratio: Vec<f64> = d.iter().zip(&flat).map(|(dj, d0)| dj / d0.powf(expo)).collect();
        let train = ratio.iter().step_by(2).fold(0.0f64, |a, &b| a.max(b));
        let test = ratio.iter().skip(1).step_by(2).fold(0.0f64, |a, &b| a.max(b));
        sink.push("metric_norm", j, p / 2.0, lp_norm(&tensor_norm_field(&f, NormMode::Metric), p / 2.0)?, 0.0);
        sink.push("fitted_constant", j, expo, train, 0.0);
        sink.push("holdout_max", j, expo, test, 0.0);
        Ok(())
    })?;
    let norms: Vec<f64> = series(&rows, "metric_norm").iter().map(|r| r.value).collect();
    let (lo, hi) = norms.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    notes.push(format!("||g_j||_(L^(p/2)) ranges over [{lo:.6}, {hi:.6}] along j"));
    Ok(rows)
}

fn run_badset(cfg: &ExperimentConfig, hash: &str, notes: &mut Vec<String>) -> Result<Vec<Row>> {
    let grid = grid_for(cfg)?;
    let m = grid.dim();
    let family = &cfg.family;
    let mut sink = RowSink::new(hash);
    let members: Vec<(f64, ScalarField)> = family
        .j_list
        .par_iter()
        .map(|&j| Ok((j as f64, member(cfg, &grid, j)?)))
        .collect::<Result<_>>()?;
    let mut l1 = Vec::new();
    for (j, f) in &members {
        let v = lp_norm(&tensor_norm_field(f, NormMode::DifferenceToG0), 1.0)?;
        sink.push("excess_l1", *j as u64, 1.0, v, 0.0);
        if let Some(&prev) = l1.last() {
            sink.push("tail_ratio", *j as u64, 1.0, v / prev, 0.0);
        }
        l1.push(v);
    }
    notes.push("tail ratios of ||g_j - g_0||_(L^1) are logged only; they do not gate a verdict".into());
    notes.push(exponent_readings(cfg));
    let densities: Vec<(f64, ScalarField)> = members
        .iter()
        .map(|(j, f)| (*j, tensor_norm_field(f, NormMode::DifferenceToG0).map(f64::sqrt)))
        .collect();
    let pots = family_potentials(&densities, &PotentialConfig::for_dim(m))?;
    let mut j0s: Vec<u64> = if cfg.exponents.j0_list.is_empty() {
        family.j_list.clone()
    } else {
        cfg.exponents.j0_list.clone()
    };
    j0s.sort_unstable();
    let first = j0s[0] as f64;
    let window_max: Vec<f64> = (0..grid.node_count())
        .map(|i| {
            pots.entries
                .iter()
                .filter(|(j, _)| *j >= first)
                .map(|(_, v)| v[i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let baseline = median(&window_max);
    sink.push("baseline", j0s[0], 0.0, baseline, 0.0);
    let expected = match family.singular_locus() {
        Some(SingularLocus::Point(_)) => 0.0,
        Some(SingularLocus::Equator) => 1.0,
        None => m as f64,
    };
    sink.push("expected_dimension", 0, 0.0, expected, 0.0);
    let mut multiples = cfg.exponents.delta_list.clone();
    multiples.sort_by(f64::total_cmp);
    let last = *j0s.last().unwrap();
    for &j0 in &j0s {
        let mut previous: Option<Vec<bool>> = None;
        for &c in &multiples {
            let est = bad_set_from_potentials(&pots, c * baseline, j0 as f64)?;
            let inside = est.members();
            let reach = inside
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(|(i, _)| family.locus_distance(grid.node(i)))
                .fold(0.0f64, f64::max);
            sink.push("area", j0, c, est.area, 0.0);
            sink.push("box_dimension", j0, c, est.box_dimension, est.fit_residual);
            sink.push("member_count", j0, c, inside.iter().filter(|&&b| b).count() as f64, 0.0);
            sink.push("max_locus_distance", j0, c, reach, 0.0);
            if let Some(prev) = &previous {
                let escaped = inside.iter().zip(prev).filter(|(&now, &before)| now && !before).count();
                sink.push("nesting_violations", j0, c, escaped as f64, 0.0);
            }
            if j0 == last && c == multiples[0] {
                let h = grid.spacing();
                for (k, &count) in est.box_counts.iter().enumerate() {
                    sink.push("box_count", j0, h * (1u64 << k) as f64, count as f64, 0.0);
                }
            }
            previous = Some(inside);
        }
    }
    Ok(sink.into_rows())
}

/// Example factors placed around `center` on a flat torus: constant,
/// log-singular point, bubble, cinched band and spike.
pub fn curve_test_fields(grid: &Arc<Grid>, center: Point, j: u64) -> Result<Vec<(String, ScalarField)>> {
    let mfd = *grid.manifold();
    let Manifold::FlatTorus { period, .. } = mfd else {
        return Err(Error::Unsupported("curve test fields need a flat torus".into()));
    };
    let jf = j as f64;
    let c0 = center.get(0);
    let band = move |p: &Point| {
        let mut u = (p.get(0) - c0).rem_euclid(period);
        if u > period / 2.0 {
            u -= period;
        }
        let s = u * jf / period;
        if s.abs() <= 1.0 {
            cinch(0.5, s)
        } else {
            1.0
        }
    };
    let specs = vec![
        ("flat", ConformalFactorSpec::constant(mfd, 1.0)?),
        (
            "log_singular",
            ConformalFactorSpec::new(mfd, Profile::RadialLogSingular { j: jf, eta: 2.0, center })?,
        ),
        (
            "bubble",
            ConformalFactorSpec::new(
                mfd,
                Profile::BubbleField { bubbles: vec![Bubble { center, radius: period / 8.0 }] },
            )?,
        ),
        (
            "band",
            ConformalFactorSpec::new(
                mfd,
                Profile::Custom(CustomProfile { name: "cinched_band".into(), eval: Arc::new(band) }),
            )?,
        ),
        (
            "spike",
            ConformalFactorSpec::new(mfd, Profile::RadialSpike { j: jf, alpha: 0.5, center })?,
        ),
    ];
    specs
        .into_iter()
        .map(|(name, spec)| Ok((name.to_string(), sample_factor(&spec, grid)?)))
        .collect()
}

fn run_curves(cfg: &ExperimentConfig, hash: &str) -> Result<Vec<Row>> {
    let mfd = cfg.family.manifold();
    let Manifold::FlatTorus { period, dim } = mfd else {
        return Err(Error::Unsupported("curves-check needs a flat torus".into()));
    };
    let c = &cfg.curves;
    let at = |fr: &[f64]| {
        let v: Vec<f64> = (0..dim).map(|i| fr[i.min(fr.len() - 1)] * period).collect();
        Point::new(&v)
    };
    let x = c.x.unwrap_or_else(|| at(&[0.25, 0.45, 0.4, 0.4]));
    let y = c.y.unwrap_or_else(|| at(&[0.75, 0.55, 0.6, 0.6]));
    let center = c.center.unwrap_or_else(|| at(&[0.5]));
    let eps = c.width_fraction * crate::curves::max_width(&mfd);
    let fam = build_family(&mfd, &x, &y, eps, c.n_tau, c.n_t)?;
    let mut sink = RowSink::new(hash);
    let mut endpoint = 0.0f64;
    for &tau in &fam.taus {
        for s in 0..fam.normals.len() {
            endpoint = endpoint
                .max(mfd.distance(&fam.point(tau, 0.0, s), &x))
                .max(mfd.distance(&fam.point(tau, fam.length, s), &y));
        }
    }
    sink.push("endpoint_error", 0, 0.0, endpoint, 0.0);
    let jac = normal_jacobian_check(&fam, c.check_tau, c.check_t)?;
    sink.push("jacobian_samples", 0, 0.0, jac.samples.len() as f64, 0.0);
    sink.push("jacobian_relative_error", 0, 0.0, jac.max_relative_error, 0.0);
    sink.push("fitted_constant", 0, 0.0, jac.fitted_constant, 0.0);
    sink.push("flat_constant", 0, 0.0, jac.flat_constant, 0.0);
    let violations = jac.samples.iter().filter(|s| s.bound_ratio > jac.fitted_constant).count();
    sink.push("bound_violations", 0, 0.0, violations as f64, 0.0);
    let grid = grid_for(cfg)?;
    let pcfg = PotentialConfig::for_dim(dim);
    let fields = curve_test_fields(&grid, center, c.j)?;
    let bounds: Vec<_> = fields
        .par_iter()
        .map(|(_, f)| family_potential_bound_check(f, &fam, &pcfg))
        .collect::<Result<_>>()?;
    for (i, b) in bounds.iter().enumerate() {
        sink.push("family_bound_lhs", 0, i as f64, b.lhs, 0.0);
        sink.push("family_bound_rhs", 0, i as f64, b.rhs, 0.0);
        sink.push("family_bound_ratio", 0, i as f64, b.ratio, 0.0);
    }
    Ok(sink.into_rows())
}

fn run_potential(cfg: &ExperimentConfig, hash: &str) -> Result<Vec<Row>> {
    let mfd = cfg.family.manifold();
    let m = mfd.dim();
    let pcfg = PotentialConfig::for_dim(m);
    let mut sink = RowSink::new(hash);
    for n in [cfg.n, 2 * cfg.n] {
        let g = Arc::new(build_grid(&mfd, n)?);
        let v = potential_field(&ScalarField::constant(g, 1.0)?, &pcfg)?;
        let vals = v.values();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        sink.push("v1_mean", 0, n as f64, mean, 0.0);
        sink.push("v1_spread", 0, n as f64, (hi - lo) / mean, 0.0);
    }
    if let Manifold::FlatTorus { dim: 2, period } = mfd {
        sink.push("v1_reference", 0, 0.0, 4.0 * period * (1.0 + 2f64.sqrt()).ln(), 0.0);
    }
    let grid = grid_for(cfg)?;
    let e = &cfg.exponents;
    let mut rows = sink.into_rows();
    rows.extend(per_j(cfg, hash, |j, sink| {
        let f = member(cfg, &grid, j)?;
        for &q in &e.q_list {
            let r = lq_of_potential(&f, e.p, q, e.margin, &pcfg)?;
            sink.push("potential_ratio", j, q, r.ratio, 0.0);
        }
        for &q in &e.q_witness {
            let r = potential_norm_ratio(&f, e.p, q, &pcfg)?;
            sink.push("potential_ratio_above_gate", j, q, r.ratio, 0.0);
        }
        if let Some(dp) = &cfg.distance_potential {
            let pairs: Vec<(usize, usize)> = sample_pairs(&grid, cfg.sampling.pairs, cfg.sampling.seed)
                .into_iter()
                .filter(|(a, b)| a != b)
                .collect();
            let plain = distance_potential_check(&f, &pairs, 0.0, BoundVariant::Plain, cfg.solver, &pcfg)?;
            sink.push("plain_constant", j, 0.0, plain.constant, 0.0);
            let diam = mfd.diameter();
            for &fr in &dp.epsilon_fractions {
                let ex = distance_potential_check(&f, &pairs, fr * diam, BoundVariant::Excess, cfg.solver, &pcfg)?;
                sink.push("excess_constant", j, fr, ex.constant, 0.0);
            }
        }
        Ok(())
    })?);
    if let Some(rh) = &cfg.reverse_holder {
        let Some(SingularLocus::Point(center)) = cfg.family.singular_locus() else {
            return Err(Error::Precondition("reverse-Holder check needs a point locus".into()));
        };
        let j = *cfg.family.j_list.last().unwrap();
        let f = member(cfg, &grid, j)?;
        let x = grid.nearest_node(&center).0;
        let base = potential_at(&f, x, &pcfg)?;
        let t = m as f64 - rh.p + rh.t_offset;
        let mut sink = RowSink::new(hash);
        sink.push("rh_base", j, 0.0, base, 0.0);
        for &c in &rh.delta_fractions {
            let r = reverse_holder_check(&f, x, rh.p, t, c * base, cfg.tolerances.quadrature_slack)?;
            sink.push("rh_delta", j, c, c * base, 0.0);
            sink.push("rh_lhs", j, c, r.lhs, 0.0);
            sink.push("rh_rhs", j, c, r.rhs, 0.0);
        }
        rows.extend(sink.into_rows());
    }
    Ok(rows)
}

fn run_oracle(cfg: &ExperimentConfig, hash: &str) -> Result<Vec<Row>> {
    let family = &cfg.family;
    let mfd = family.manifold();
    let mut sink = RowSink::new(hash);
    radial_oracle_rows(family, &mut sink)?;
    for (i, p) in cfg.probes.iter().enumerate() {
        sink.push("probe_limit", 0, i as f64, limit_distance(family, &p.x, &p.y)?, 0.0);
    }
    if let Manifold::FlatTorus { period, dim } = mfd {
        let x = Point::new(&vec![0.25 * period; dim]);
        let y = Point::new(&vec![0.6 * period; dim]);
        let eps = cfg.curves.width_fraction * crate::curves::max_width(&mfd);
        let fam = build_family(&mfd, &x, &y, eps, 4, 16)?;
        let jac = normal_jacobian_check(&fam, 10, 10)?;
        sink.push("jacobian_fd_error", 0, 0.0, jac.max_relative_error, 0.0);
    }
    // brute-force pair enumeration against Monte Carlo on a small grid
    let small = cfg.n.min(if mfd.is_torus() && mfd.dim() > 2 { 8 } else { 24 });
    let g = build_grid(&mfd, small)?;
    let vols = g.cell_volumes();
    let nodes = g.node_count();
    let qs: Vec<f64> = if cfg.exponents.q_list.is_empty() { vec![2.0] } else { cfg.exponents.q_list.clone() };
    let full: Vec<WeightedDistance> = (0..nodes * nodes)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k / nodes, k % nodes);
            WeightedDistance { weight: vols[a] * vols[b], distance: g0_distance(&mfd, g.node(a), g.node(b)) }
        })
        .collect();
    let samples = cfg.sampling.pairs.max(100);
    let pairs = sample_pairs(&g, samples, cfg.sampling.seed);
    let mc: Vec<WeightedDistance> = pairs
        .iter()
        .map(|&(a, b)| WeightedDistance { weight: 1.0, distance: g0_distance(&mfd, g.node(a), g.node(b)) })
        .collect();
    let vol2 = g.total_volume().powi(2);
    for &q in &qs {
        let exact = lq_distance_norm(&full, q, vol2, PairEstimator::FullGrid)?;
        let est = lq_distance_norm(&mc, q, vol2, PairEstimator::MonteCarlo { samples, seed: cfg.sampling.seed })?;
        sink.push("flat_lq_full", 0, q, exact.value, 0.0);
        sink.push("flat_lq_mc", 0, q, est.value, est.std_error);
    }
    Ok(sink.into_rows())
}

fn values(rows: &[Row], name: &str) -> Vec<f64> {
    series(rows, name).iter().map(|r| r.value).collect()
}

fn nonincreasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + slack)
}

fn spread_about_median(v: &[f64]) -> (f64, f64) {
    let med = median(v);
    let spread = v.iter().map(|x| (x - med).abs() / med.abs()).fold(0.0, f64::max);
    (med, spread)
}

fn fmt_list(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", s.join(", "))
}

/// Verdicts as pure functions of the configuration and rows.
pub fn evaluate(cfg: &ExperimentConfig, rows: &[Row]) -> Vec<Verdict> {
    let tol = &cfg.tolerances;
    let mut out = Vec::new();
    match cfg.experiment {
        Experiment::Sobolev => {
            for (q, pts) in by_param(rows, "ratio") {
                let v: Vec<f64> = pts.iter().map(|p| p.1).collect();
                let (med, spread) = spread_about_median(&v);
                let mc = series(rows, "ratio")
                    .iter()
                    .filter(|r| r.param == q)
                    .map(|r| r.uncertainty / r.value)
                    .fold(0.0, f64::max);
                out.push(Verdict::new(
                    format!("ratio bounded across j (q = {q})"),
                    spread <= tol.ratio_spread + mc,
                    format!(
                        "ratios {} median {med:.6} spread {spread:.4} <= {:.4} + MC {mc:.4}",
                        fmt_list(&v),
                        tol.ratio_spread
                    ),
                ));
            }
        }
        Experiment::Converge => evaluate_convergence(cfg, rows, &mut out),
        Experiment::Holder => {
            let fitted = by_param(rows, "fitted_constant");
            let held = values(rows, "holdout_max");
            if let Some((_, pts)) = fitted.first() {
                let c: Vec<f64> = pts.iter().map(|p| p.1).collect();
                let ok = c.iter().zip(&held).all(|(c, h)| *h <= c * (1.0 + tol.holdout_slack));
                out.push(Verdict::new(
                    "held-out pairs satisfy the fitted bound",
                    ok,
                    format!("fitted {} held-out max {} slack {}", fmt_list(&c), fmt_list(&held), tol.holdout_slack),
                ));
                let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
                out.push(Verdict::new(
                    "fitted constant stable across j",
                    hi <= lo * (1.0 + tol.holder_stability),
                    format!("max/min = {:.4} <= {}", hi / lo, 1.0 + tol.holder_stability),
                ));
            }
        }
        Experiment::Badset => evaluate_badset(cfg, rows, &mut out),
        Experiment::CurvesCheck => {
            let one = |name: &str| values(rows, name).first().copied().unwrap_or(f64::NAN);
            let ep = one("endpoint_error");
            out.push(Verdict::new("endpoints exact", ep <= tol.endpoint, format!("max endpoint error {ep:.3e}")));
            let je = one("jacobian_relative_error");
            let ns = one("jacobian_samples");
            out.push(Verdict::new(
                "closed-form normal Jacobian matches finite differences",
                je <= tol.jacobian && ns >= tol.jacobian_samples as f64,
                format!("max relative error {je:.3e} over {ns} samples"),
            ));
            let (fit, flat, viol) = (one("fitted_constant"), one("flat_constant"), one("bound_violations"));
            out.push(Verdict::new(
                "normal Jacobian bound holds with one constant",
                viol == 0.0 && fit.is_finite() && fit <= flat * (1.0 + 1e-9),
                format!("fitted C = {fit:.9} vs flat constant {flat:.9}, {viol} violations"),
            ));
            let ratios = values(rows, "family_bound_ratio");
            if let Some(&base) = ratios.first() {
                out.push(Verdict::new(
                    "family integral within factor of the flat baseline",
                    ratios.iter().all(|&r| r <= tol.baseline_factor * base),
                    format!("ratios {} baseline {base:.6} factor {}", fmt_list(&ratios), tol.baseline_factor),
                ));
            }
        }
        Experiment::PotentialCheck => evaluate_potential(cfg, rows, &mut out),
        Experiment::Oracle => {
            if let Some(&e) = values(rows, "jacobian_fd_error").first() {
                out.push(Verdict::new(
                    "finite-difference Jacobian agrees",
                    e <= tol.jacobian,
                    format!("max relative error {e:.3e}"),
                ));
            }
            for (full, mc) in series(rows, "flat_lq_full").iter().zip(series(rows, "flat_lq_mc")) {
                let gap = (full.value - mc.value).abs();
                out.push(Verdict::new(
                    format!("Monte Carlo L^q agrees with enumeration (q = {})", full.param),
                    gap <= 4.0 * mc.uncertainty + 1e-12,
                    format!("full {:.6} MC {:.6} +- {:.6}", full.value, mc.value, mc.uncertainty),
                ));
            }
            radial_oracle_verdict(rows, &mut out);
        }
    }
    out
}

fn radial_oracle_verdict(rows: &[Row], out: &mut Vec<Verdict>) {
    let oracle = values(rows, "radial_oracle");
    if let (false, Some(&limit)) = (oracle.is_empty(), values(rows, "radial_limit").first()) {
        let ok = oracle.windows(2).all(|w| w[1] < w[0]) && oracle.iter().all(|&o| o > limit);
        out.push(Verdict::new(
            "finite-j radial oracle decreases toward the limit",
            ok,
            format!("oracle {} limit {limit:.6}", fmt_list(&oracle)),
        ));
    }
}

fn evaluate_convergence(cfg: &ExperimentConfig, rows: &[Row], out: &mut Vec<Verdict>) {
    let tol = &cfg.tolerances;
    let floor = delta(cfg.solver.stencil_radius);
    let err = values(rows, "uniform_error");
    if let Some(&last) = err.last() {
        out.push(Verdict::new(
            "uniform error nonincreasing in j",
            nonincreasing(&err, 1e-12),
            format!("errors {}", fmt_list(&err)),
        ));
        out.push(Verdict::new(
            "uniform error at largest j within tolerance",
            last <= tol.uniform + floor,
            format!("{last:.6} <= {} + delta(k) {floor:.6}", tol.uniform),
        ));
    }
    let floors = series(rows, "factor_floor");
    let margins = series(rows, "lower_bound_margin");
    let applicable: Vec<f64> = margins
        .iter()
        .filter(|m| floors.iter().any(|f| f.j == m.j && f.value >= 1.0))
        .map(|m| m.value)
        .collect();
    if !applicable.is_empty() {
        let worst = applicable.iter().copied().fold(f64::INFINITY, f64::min);
        out.push(Verdict::new(
            "d_j >= sqrt(1 - 1/j) d_flat",
            worst >= -1e-9,
            format!("smallest relative margin {worst:.3e}"),
        ));
    }
    for (i, pts) in by_param(rows, "probe_error_finite_j") {
        let v: Vec<f64> = pts.iter().map(|p| p.1).collect();
        out.push(Verdict::new(
            format!("probe {i} matches the finite-j oracle at every j"),
            v.iter().all(|&e| e <= tol.probe),
            format!("relative errors {} <= {}", fmt_list(&v), tol.probe),
        ));
    }
    for (i, pts) in by_param(rows, "probe_error_limit") {
        let last = pts.last().map_or(f64::NAN, |p| p.1);
        out.push(Verdict::new(
            format!("probe {i} matches the limit distance at the largest j"),
            last <= tol.probe,
            format!("relative error {last:.6} <= {}", tol.probe),
        ));
    }
    radial_oracle_verdict(rows, out);
    let excess = values(rows, "excess_lp");
    if excess.len() > 1 {
        out.push(Verdict::new(
            "||f_j - 1||_(L^p) decreasing",
            excess.windows(2).all(|w| w[1] < w[0]),
            format!("norms {}", fmt_list(&excess)),
        ));
    }
    let witness = values(rows, "witness_ratio");
    if !witness.is_empty() {
        out.push(Verdict::new(
            "full sequence keeps d_j(x, p_j) >= c r_j^-1 d_flat",
            witness.len() >= 3 && witness.iter().all(|&w| w >= tol.witness),
            format!("ratios {} >= {} at {} levels", fmt_list(&witness), tol.witness, witness.len()),
        ));
    }
}

fn evaluate_badset(cfg: &ExperimentConfig, rows: &[Row], out: &mut Vec<Verdict>) {
    let tol = &cfg.tolerances;
    let area = series(rows, "area");
    let mut cs: Vec<f64> = area.iter().map(|r| r.param).collect();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    for &c in &cs {
        let mut a: Vec<(u64, f64)> = area.iter().filter(|r| r.param == c).map(|r| (r.j, r.value)).collect();
        a.sort_by_key(|e| e.0);
        let v: Vec<f64> = a.iter().map(|e| e.1).collect();
        out.push(Verdict::new(
            format!("area nonincreasing in j0 (delta = {c} x baseline)"),
            nonincreasing(&v, 0.0),
            format!("areas {}", fmt_list(&v)),
        ));
    }
    let expected = values(rows, "expected_dimension").first().copied().unwrap_or(0.0);
    let dims = series(rows, "box_dimension");
    if let Some(last) = dims.iter().map(|r| r.j).max() {
        let at_last: Vec<&&Row> = dims.iter().filter(|r| r.j == last).collect();
        let worst = at_last.iter().map(|r| r.value).fold(0.0, f64::max);
        let residual = at_last.iter().map(|r| r.uncertainty).fold(0.0, f64::max);
        out.push(Verdict::new(
            "box-counting dimension at the largest j0",
            worst < expected + tol.dimension_slack,
            format!("dimension {worst:.4} < {expected} + {} (fit residual {residual:.3e})", tol.dimension_slack),
        ));
    }
    if let (Some(SingularLocus::Point(_)), Manifold::FlatTorus { period, .. }) =
        (cfg.family.singular_locus(), cfg.family.manifold())
    {
        let reach = series(rows, "max_locus_distance");
        if let Some(last) = reach.iter().map(|r| r.j).max() {
            let worst = reach.iter().filter(|r| r.j == last).map(|r| r.value).fold(0.0, f64::max);
            let per_j0: Vec<String> = by_param(rows, "max_locus_distance")
                .into_iter()
                .flat_map(|(c, v)| v.into_iter().map(move |(j, d)| format!("j0={j} c={c}: {d:.4}")))
                .collect();
            out.push(Verdict::new(
                "bad set at the largest j0 contained in a ball about the singular point",
                worst <= tol.containment * period,
                format!("farthest member {worst:.6} <= {} (all: {})", tol.containment * period, per_j0.join(", ")),
            ));
        }
    }
    let nest = values(rows, "nesting_violations");
    if !nest.is_empty() {
        out.push(Verdict::new(
            "indicators nested in delta",
            nest.iter().all(|&v| v == 0.0),
            format!("violations {}", fmt_list(&nest)),
        ));
    }
}

fn evaluate_potential(cfg: &ExperimentConfig, rows: &[Row], out: &mut Vec<Verdict>) {
    let tol = &cfg.tolerances;
    let spreads = series(rows, "v1_spread");
    out.push(Verdict::new(
        "V(1) constant across nodes",
        !spreads.is_empty() && spreads.iter().all(|r| r.value <= tol.constancy),
        format!("relative spreads {}", fmt_list(&values(rows, "v1_spread"))),
    ));
    let means = values(rows, "v1_mean");
    if means.len() == 2 {
        let change = (means[1] - means[0]).abs() / means[1];
        out.push(Verdict::new(
            "V(1) stable under refinement",
            change <= tol.refinement,
            format!("means {} change {change:.3e}", fmt_list(&means)),
        ));
    }
    for (q, pts) in by_param(rows, "potential_ratio") {
        let v: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (med, spread) = spread_about_median(&v);
        out.push(Verdict::new(
            format!("||Vf||_q / ||f||_p within spread of median (q = {q})"),
            spread <= tol.ratio_spread,
            format!("ratios {} median {med:.6} spread {spread:.4}", fmt_list(&v)),
        ));
    }
    let plain = values(rows, "plain_constant");
    if !plain.is_empty() {
        let (med, spread) = spread_about_median(&plain);
        out.push(Verdict::new(
            "distance-potential constant stable across j",
            spread <= tol.constant_stability,
            format!("constants {} median {med:.6} spread {spread:.4}", fmt_list(&plain)),
        ));
    }
    let excess = series(rows, "excess_constant");
    if !excess.is_empty() {
        let mut js: Vec<u64> = excess.iter().map(|r| r.j).collect();
        js.dedup();
        let mut ok = true;
        let mut detail = Vec::new();
        for j in js {
            let mut pts: Vec<(f64, f64)> = excess.iter().filter(|r| r.j == j).map(|r| (r.param, r.value)).collect();
            // shrinking eps
            pts.sort_by(|a, b| b.0.total_cmp(&a.0));
            let v: Vec<f64> = pts.iter().map(|p| p.1).collect();
            ok &= v.windows(2).all(|w| w[1] >= w[0]);
            detail.push(format!("j={j}: {}", fmt_list(&v)));
        }
        out.push(Verdict::new("excess constant nondecreasing as eps shrinks", ok, detail.join("; ")));
    }
    let lhs = series(rows, "rh_lhs");
    let rhs = series(rows, "rh_rhs");
    if !lhs.is_empty() {
        let ok = lhs.iter().zip(&rhs).all(|(l, r)| l.value >= r.value * (1.0 - tol.quadrature_slack));
        let deltas = values(rows, "rh_delta");
        let (lo, hi) = deltas.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        out.push(Verdict::new(
            "reverse-Holder lower bound",
            ok && deltas.len() >= 3 && hi >= 10.0 * lo * (1.0 - 1e-12),
            format!(
                "lhs {} rhs {} over deltas {}",
                fmt_list(&values(rows, "rh_lhs")),
                fmt_list(&values(rows, "rh_rhs")),
                fmt_list(&deltas)
            ),
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spike_cfg(exp: Experiment) -> ExperimentConfig {
        let fam = ExampleFamily::spike(0.5, vec![8, 16]).unwrap();
        let mut c = ExperimentConfig::new(exp, fam, 32);
        c.sampling.pairs = 100;
        c
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()), Some(e));
        }
    }

    #[test]
    fn violations_are_collected() {
        let mut c = spike_cfg(Experiment::Sobolev);
        c.exponents.q_list = vec![2.0, 7.0];
        c.sampling.pairs = 10;
        c.solver.stencil_radius = 20;
        let v = c.violations();
        assert!(v.len() >= 3, "{v:?}");
        assert!(v.iter().any(|s| s.contains("q < m p / (m - p)")));
    }

    #[test]
    fn holder_requires_p_above_m() {
        let mut c = spike_cfg(Experiment::Holder);
        c.exponents.p = 1.5;
        assert!(c.violations().iter().any(|s| s.contains("p > m")));
        assert!(run(&c).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = spike_cfg(Experiment::Converge);
        let s = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn constant_fields_give_scale_free_sobolev_ratio() {
        let grid = Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), 32).unwrap());
        let pairs = sample_pairs(&grid, 100, 7);
        let ratio = |c: f64| {
            let f = ScalarField::constant(grid.clone(), c).unwrap();
            let s = Solver::new(&f, SolverConfig::default()).unwrap();
            let r = sobolev_ratios(&f, &s, &pairs, 1.5, &[2.0], 7).unwrap()[0];
            r.1 / r.3
        };
        let (a, b) = (ratio(1.0), ratio(3.0));
        assert!((a - b).abs() <= 1e-12 * a, "{a} vs {b}");
    }

    #[test]
    fn verdicts_recompute_from_rows() {
        let c = spike_cfg(Experiment::Holder);
        let mut c = c;
        c.exponents.p = 3.0;
        let r = run(&c).unwrap();
        assert_eq!(recompute_verdicts(&r).unwrap(), r.verdicts);
        assert!(r.rows.iter().all(|row| row.config_hash == r.config_hash));
    }

    #[test]
    fn reruns_are_identical() {
        let c = spike_cfg(Experiment::Converge);
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(a.rows_csv().unwrap(), b.rows_csv().unwrap());
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn convergence_rows_cover_each_j() {
        let mut c = spike_cfg(Experiment::Converge);
        c.exponents.excess_p = Some(3.0);
        let r = run(&c).unwrap();
        assert_eq!(r.series("uniform_error").len(), 2);
        assert_eq!(r.series("excess_lp").len(), 2);
        assert!(r.verdicts.iter().any(|v| v.rule.contains("sqrt(1 - 1/j)") && v.pass));
    }

    #[test]
    fn curve_fields_are_positive() {
        let grid = Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), 32).unwrap());
        let f = curve_test_fields(&grid, Point::new(&[0.5, 0.5]), 16).unwrap();
        assert_eq!(f.len(), 5);
        for (_, field) in f {
            assert!(field.values().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn nonincreasing_helper() {
        assert!(nonincreasing(&[3.0, 2.0, 2.0, 1.0], 0.0));
        assert!(!nonincreasing(&[1.0, 2.0], 0.0));
    }
}

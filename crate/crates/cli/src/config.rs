//! TOML run configuration (`version = "v1"`), resolved into an
//! [`ExperimentConfig`] with every default materialized.

use std::path::PathBuf;

use lpgeo_core::families::bubble_subsequence;
use lpgeo_core::numerics::Rule;
use lpgeo_core::{
    CurveSettings, DistancePotentialSettings, ExampleFamily, ExampleKind, Experiment, ExperimentConfig,
    Exponents, Manifold, Point, Probe, ReverseHolderSettings, Sampling, SolverConfig, Tolerances, Witness,
};
use serde::Deserialize;

pub const SCHEMA_VERSION: &str = "v1";
pub const FORMATS: [&str; 3] = ["json", "csv", "svg"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    /// Optional; must match the subcommand when present.
    pub experiment: Option<Experiment>,
    pub manifold: Option<ManifoldBlock>,
    pub family: FamilyBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub exponents: Exponents,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub curves: CurveSettings,
    pub witness: Option<Witness>,
    pub distance_potential: Option<DistancePotentialSettings>,
    pub reverse_holder: Option<ReverseHolderSettings>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    FlatTorus,
    RoundSphere2,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldBlock {
    pub kind: ManifoldKind,
    pub m: Option<usize>,
    pub period: Option<f64>,
    pub radius: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    SingularSet31,
    Bubbles32,
    CinchedSphere33,
    Spike34,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyBlock {
    pub id: FamilyId,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub h0: Option<f64>,
    pub center: Option<Point>,
    #[serde(default)]
    pub j_list: Vec<u64>,
    /// Bubble levels `k`, expanded to the subsequence `j_k` fixed at the center.
    pub levels: Option<Vec<u32>>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub n: usize,
    pub k: usize,
    pub edge_quadrature: Rule,
    pub subsamples: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self { n: 256, k: s.stencil_radius, edge_quadrature: s.edge_quadrature, subsamples: s.subsamples }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: Option<PathBuf>,
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: None, formats: FORMATS.iter().map(|s| s.to_string()).collect() }
    }
}

/// A validated run: the experiment config plus where and what to write.
#[derive(Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub directory: Option<PathBuf>,
    pub formats: Vec<String>,
}

#[derive(Debug)]
pub enum ConfigError {
    /// Syntax or schema error, with line and column when known.
    Parse(String),
    /// Every violated rule.
    Invalid(Vec<String>),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Invalid(v) => {
                writeln!(f, "config has {} violation(s):", v.len())?;
                for msg in v {
                    writeln!(f, "  - {msg}")?;
                }
                Ok(())
            }
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let at = e
            .span()
            .map(|s| {
                let (line, col) = line_col(text, s.start);
                format!(" (line {line}, column {col})")
            })
            .unwrap_or_default();
        ConfigError::Parse(format!("{}{at}", e.message()))
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl RunConfig {
    /// Resolves the run for `experiment`, collecting every violation.
    pub fn resolve(self, experiment: Experiment) -> Result<Resolved, ConfigError> {
        let mut v = Vec::new();
        if self.version != SCHEMA_VERSION {
            v.push(format!("version = \"{}\" is unsupported; expected \"{SCHEMA_VERSION}\"", self.version));
        }
        if let Some(e) = self.experiment {
            if e != experiment {
                v.push(format!("experiment = \"{}\" does not match subcommand {}", e.name(), experiment.name()));
            }
        }
        for f in &self.output.formats {
            if !FORMATS.contains(&f.as_str()) {
                v.push(format!("output format \"{f}\" is not one of {FORMATS:?}"));
            }
        }
        let manifold = self.manifold.as_ref().and_then(|b| manifold(b, &self.family, &mut v));
        let family = family(&self.family, manifold, &mut v);
        let solver = SolverConfig {
            stencil_radius: self.solver.k,
            edge_quadrature: self.solver.edge_quadrature,
            subsamples: self.solver.subsamples,
            ..SolverConfig::default()
        };
        let config = ExperimentConfig {
            experiment,
            family,
            n: self.solver.n,
            solver,
            sampling: self.sampling,
            exponents: self.exponents,
            tolerances: self.tolerances,
            probes: self.probes,
            curves: self.curves,
            witness: self.witness,
            distance_potential: self.distance_potential,
            reverse_holder: self.reverse_holder,
        };
        v.extend(config.violations());
        if v.is_empty() {
            Ok(Resolved { config, directory: self.output.directory, formats: self.output.formats })
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

fn manifold(b: &ManifoldBlock, fam: &FamilyBlock, v: &mut Vec<String>) -> Option<Manifold> {
    let built = match b.kind {
        ManifoldKind::FlatTorus => {
            if b.radius.is_some() {
                v.push("manifold.radius applies only to round_sphere2".into());
            }
            Manifold::torus(b.m.unwrap_or(2), b.period.unwrap_or(1.0))
        }
        ManifoldKind::RoundSphere2 => {
            if b.period.is_some() {
                v.push("manifold.period applies only to flat_torus".into());
            }
            if b.m.is_some_and(|m| m != 2) {
                v.push("round_sphere2 has m = 2".into());
            }
            Manifold::sphere(b.radius.unwrap_or(1.0))
        }
    };
    let mfd = match built {
        Ok(m) => m,
        Err(e) => {
            v.push(e.to_string());
            return None;
        }
    };
    match fam.id {
        FamilyId::Bubbles32 if mfd != Manifold::FlatTorus { dim: 2, period: 1.0 } => {
            v.push("bubbles32 lives on the unit 2-torus (flat_torus, m = 2, period = 1)".into());
        }
        FamilyId::CinchedSphere33 if mfd != Manifold::RoundSphere2 { radius: 1.0 } => {
            v.push("cinched_sphere33 lives on the unit sphere (round_sphere2, radius = 1)".into());
        }
        FamilyId::SingularSet31 | FamilyId::Spike34 if !mfd.is_torus() => {
            v.push("singular_set31 and spike34 need a flat_torus manifold".into());
        }
        _ => {}
    }
    Some(mfd)
}

fn family(b: &FamilyBlock, mfd: Option<Manifold>, v: &mut Vec<String>) -> ExampleFamily {
    let unused = |v: &mut Vec<String>, name: &str, set: bool| {
        if set {
            v.push(format!("family.{name} does not apply to {:?}", b.id));
        }
    };
    let torus = |period: f64| Manifold::FlatTorus { dim: 2, period };
    let center_of = |m: &Manifold| match *m {
        Manifold::FlatTorus { dim, period } => Point::new(&vec![period / 2.0; dim]),
        Manifold::RoundSphere2 { .. } => Point::sphere(0.0, 0.0),
    };
    let radial = |default_period: f64| {
        let m = mfd.filter(Manifold::is_torus).unwrap_or(torus(default_period));
        (m, b.center.unwrap_or_else(|| center_of(&m)))
    };
    let kind = match b.id {
        FamilyId::SingularSet31 => {
            unused(v, "alpha", b.alpha.is_some());
            unused(v, "h0", b.h0.is_some());
            let (manifold, center) = radial(4.0);
            ExampleKind::SingularSet31 { eta: b.eta.unwrap_or(2.0), manifold, center }
        }
        FamilyId::Spike34 => {
            unused(v, "eta", b.eta.is_some());
            unused(v, "h0", b.h0.is_some());
            let (manifold, center) = radial(1.0);
            ExampleKind::Spike34 { alpha: b.alpha.unwrap_or(0.5), manifold, center }
        }
        FamilyId::Bubbles32 => {
            unused(v, "eta", b.eta.is_some());
            unused(v, "alpha", b.alpha.is_some());
            unused(v, "h0", b.h0.is_some());
            unused(v, "center", b.center.is_some());
            ExampleKind::Bubbles32
        }
        FamilyId::CinchedSphere33 => {
            unused(v, "eta", b.eta.is_some());
            unused(v, "alpha", b.alpha.is_some());
            unused(v, "center", b.center.is_some());
            ExampleKind::CinchedSphere33 { h0: b.h0.unwrap_or(0.5) }
        }
    };
    if let ExampleKind::SingularSet31 { center, manifold, .. } | ExampleKind::Spike34 { center, manifold, .. } = &kind {
        if center.dim() != manifold.dim() {
            v.push(format!("family.center has {} coordinates, the torus has m = {}", center.dim(), manifold.dim()));
        }
    }
    let j_list = match (&b.levels, b.id) {
        (Some(_), id) if id != FamilyId::Bubbles32 => {
            v.push("family.levels applies only to bubbles32".into());
            b.j_list.clone()
        }
        (Some(_), _) if !b.j_list.is_empty() => {
            v.push("give either family.j_list or family.levels, not both".into());
            b.j_list.clone()
        }
        (Some(levels), _) => match bubble_subsequence(levels) {
            Ok(f) => f.j_list,
            Err(e) => {
                v.push(format!("family.levels: {e}"));
                Vec::new()
            }
        },
        (None, _) => b.j_list.clone(),
    };
    if j_list.is_empty() {
        v.push("family.j_list must be nonempty".into());
    } else if j_list[0] == 0 || j_list.windows(2).any(|w| w[0] >= w[1]) {
        v.push("family.j_list must be positive and strictly increasing".into());
    }
    // parameter rules, checked on a valid stand-in index when j_list is bad
    let probe_j = j_list.first().copied().filter(|&j| j > 0).unwrap_or(1);
    if let Err(e) = ExampleFamily::new(kind.clone(), vec![probe_j]) {
        v.push(format!("family: {e}"));
    }
    ExampleFamily { kind, j_list }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;

    fn resolve(text: &str, e: Experiment) -> Result<Resolved, ConfigError> {
        parse_config(text)?.resolve(e)
    }

    fn violations(text: &str, e: Experiment) -> Vec<String> {
        match resolve(text, e) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    const SPIKE: &str = "version = \"v1\"\n[family]\nid = \"spike34\"\nj_list = [8, 16]\n";

    #[test]
    fn minimal_spike_config_materializes_defaults() {
        let r = resolve(SPIKE, Experiment::Converge).unwrap();
        assert_eq!(r.config.n, 256);
        assert_eq!(r.config.solver.stencil_radius, 3);
        assert_eq!(r.config.sampling, Sampling::default());
        assert_eq!(r.config.family, ExampleFamily::spike(0.5, vec![8, 16]).unwrap());
        assert_eq!(r.formats, ["json", "csv", "svg"]);
    }

    #[test]
    fn alpha_outside_unit_interval_names_the_rule() {
        let text = SPIKE.replace("id = \"spike34\"", "id = \"spike34\"\nalpha = 1.5");
        let v = violations(&text, Experiment::Converge);
        assert!(v.iter().any(|m| m.contains("0 < alpha < 1")), "{v:?}");
    }

    #[test]
    fn q_above_the_gate_names_the_rule() {
        let text = format!("{SPIKE}[sampling]\npairs = 200\n[exponents]\np = 1.5\nq_list = [7.0]\n");
        let v = violations(&text, Experiment::Sobolev);
        assert!(v.iter().any(|m| m.contains("q < m p / (m - p)")), "{v:?}");
    }

    #[test]
    fn all_violations_are_reported_together() {
        let text = "version = \"v2\"\n[family]\nid = \"spike34\"\nalpha = 2.0\n[solver]\nn = 2\n";
        let v = violations(text, Experiment::Converge);
        assert!(v.iter().any(|m| m.contains("version")));
        assert!(v.iter().any(|m| m.contains("j_list must be nonempty")));
        assert!(v.iter().any(|m| m.contains("0 < alpha < 1")));
        assert!(v.iter().any(|m| m.contains("below the minimum")));
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_location() {
        let text = format!("{SPIKE}[solver]\nresolution = 64\n");
        match resolve(&text, Experiment::Converge) {
            Err(ConfigError::Parse(msg)) => {
                assert!(msg.contains("resolution") && msg.contains("line 6"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bubble_levels_expand_to_the_subsequence() {
        let text = "version = \"v1\"\n[family]\nid = \"bubbles32\"\nlevels = [2, 3]\n";
        let r = resolve(text, Experiment::Converge).unwrap();
        assert_eq!(r.config.family, bubble_subsequence(&[2, 3]).unwrap());
    }

    #[test]
    fn mismatched_experiment_is_a_violation() {
        let text = SPIKE.replace("version = \"v1\"", "version = \"v1\"\nexperiment = \"holder\"");
        let v = violations(&text, Experiment::Converge);
        assert!(v.iter().any(|m| m.contains("does not match")));
    }

    #[test]
    fn shipped_configs_resolve() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let cases = [
            ("spike-converge", Experiment::Converge),
            ("singular-limit", Experiment::Converge),
            ("bubble-subsequence", Experiment::Converge),
            ("cinched-sphere", Experiment::Converge),
            ("sobolev-spike", Experiment::Sobolev),
            ("holder-spike", Experiment::Holder),
            ("badset-singular", Experiment::Badset),
            ("curves-spike", Experiment::CurvesCheck),
            ("potential-singular", Experiment::PotentialCheck),
            ("distance-potential", Experiment::PotentialCheck),
            ("oracle", Experiment::Oracle),
        ];
        for (name, e) in cases {
            let text = std::fs::read_to_string(dir.join(format!("{name}.toml"))).unwrap();
            if let Err(err) = resolve(&text, e) {
                panic!("{name}: {err}");
            }
        }
        assert_eq!(std::fs::read_dir(&dir).unwrap().count(), cases.len());
    }
}

//! Acceptance criteria, one pass/fail line each. Runs without the libtest
//! harness so the lines are always printed.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;
use std::time::Instant;

use lpgeo_core::experiments::chart_specs;
use lpgeo_core::families::bubble_subsequence;
use lpgeo_core::*;

const SEED: u64 = 20240917;

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdicts_matching(report: &ExperimentReport, keys: &[&str]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for key in keys {
        let found: Vec<&Verdict> = report.verdicts.iter().filter(|v| v.rule.contains(key)).collect();
        if found.is_empty() {
            pass = false;
            detail.push(format!("missing verdict '{key}'"));
        }
        for v in found {
            pass &= v.pass;
            detail.push(format!("{} [{}]: {}", v.rule, if v.pass { "ok" } else { "FAIL" }, v.detail));
        }
    }
    Outcome { pass, detail: detail.join(" | ") }
}

fn solver_envelope() -> Outcome {
    let t0 = Instant::now();
    let g = Arc::new(build_grid(&Manifold::torus(2, 1.0).unwrap(), 256).unwrap());
    let f = ScalarField::constant(g.clone(), 1.0).unwrap();
    let pairs = sample_pairs(&g, 100, SEED);
    let mut detail = Vec::new();
    let mut pass = true;
    for (k, cap) in [(3, 1.052), (5, 1.019)] {
        let s = Solver::new(&f, SolverConfig::with_radius(k)).unwrap();
        let mut worst: f64 = 1.0;
        let mut below = false;
        for &(a, b) in &pairs {
            if a == b {
                continue;
            }
            let d = s.node_distance(a, b).unwrap();
            let d0 = g0_distance(g.manifold(), g.node(a), g.node(b));
            below |= d < d0 * (1.0 - 1e-12);
            worst = worst.max(d / d0);
        }
        pass &= !below && worst <= cap;
        detail.push(format!("k={k}: max d/d0 = {worst:.5} (cap {cap}), below d0: {below}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    detail.push(format!("runtime {secs:.1}s"));
    Outcome { pass, detail: detail.join("; ") }
}

fn singular_limit() -> Outcome {
    let fam = ExampleFamily::singular_set(2.0, vec![100, 1000, 10_000]).unwrap();
    let mut c = ExperimentConfig::new(Experiment::Converge, fam, 512);
    c.solver = SolverConfig::with_radius(5);
    c.sampling = Sampling { pairs: 50, seed: SEED };
    c.exponents.rho = 0.2;
    c.tolerances.uniform = 0.025;
    c.tolerances.probe = 0.025;
    c.probes = vec![Probe { x: Point::new(&[2.0, 2.0]), y: Point::new(&[3.0, 2.0]) }];
    let r = run(&c).unwrap();
    verdicts_matching(&r, &["finite-j oracle at every j", "radial oracle decreases", "at largest j within"])
}

fn spike_convergence() -> Outcome {
    let fam = ExampleFamily::spike(0.5, vec![8, 16, 32, 64]).unwrap();
    let mut c = ExperimentConfig::new(Experiment::Converge, fam, 256);
    c.solver = SolverConfig::with_radius(3);
    c.sampling = Sampling { pairs: 200, seed: SEED };
    c.exponents.excess_p = Some(3.0);
    c.tolerances.uniform = 0.01;
    let r = run(&c).unwrap();
    verdicts_matching(&r, &["uniform error nonincreasing", "at largest j within", "||f_j - 1||"])
}

fn sobolev_ratio() -> Outcome {
    let fam = ExampleFamily::spike(0.5, vec![8, 16, 32, 64]).unwrap();
    let mut c = ExperimentConfig::new(Experiment::Sobolev, fam, 256);
    c.solver = SolverConfig::with_radius(3);
    c.sampling = Sampling { pairs: 400, seed: SEED };
    c.exponents.p = 1.5;
    c.exponents.q_list = vec![2.0];
    let r = run(&c).unwrap();
    verdicts_matching(&r, &["ratio bounded across j"])
}

fn unit_singular_family() -> ExampleFamily {
    ExampleFamily::new(
        ExampleKind::SingularSet31 {
            eta: 2.0,
            manifold: Manifold::torus(2, 1.0).unwrap(),
            center: Point::new(&[0.5, 0.5]),
        },
        vec![100, 1000, 10_000],
    )
    .unwrap()
}

fn potential_operator() -> Outcome {
    let mut c = ExperimentConfig::new(Experiment::PotentialCheck, unit_singular_family(), 128);
    c.exponents.p = 1.5;
    c.exponents.q_list = vec![2.0, 4.0];
    let r = run(&c).unwrap();
    verdicts_matching(&r, &["V(1) constant", "V(1) stable under refinement", "||Vf||_q"])
}

fn distance_potential() -> Outcome {
    let fam = ExampleFamily::spike(0.5, vec![8, 16, 32, 64]).unwrap();
    let mut c = ExperimentConfig::new(Experiment::PotentialCheck, fam, 256);
    c.solver = SolverConfig::with_radius(3);
    c.sampling = Sampling { pairs: 100, seed: SEED };
    c.exponents.q_list = Vec::new();
    c.distance_potential = Some(DistancePotentialSettings { epsilon_fractions: vec![0.2, 0.1, 0.05] });
    let r = run(&c).unwrap();
    verdicts_matching(&r, &["distance-potential constant stable", "excess constant nondecreasing"])
}

fn curve_family() -> Outcome {
    let fam = ExampleFamily::spike(0.5, vec![16]).unwrap();
    let mut c = ExperimentConfig::new(Experiment::CurvesCheck, fam, 128);
    c.curves.check_tau = 20;
    c.curves.check_t = 50;
    let r = run(&c).unwrap();
    verdicts_matching(
        &r,
        &["endpoints exact", "matches finite differences", "bound holds with one constant", "flat baseline"],
    )
}

fn reverse_holder() -> Outcome {
    let fam = ExampleFamily::singular_set(2.0, vec![100, 1000, 10_000]).unwrap();
    let mut c = ExperimentConfig::new(Experiment::PotentialCheck, fam, 256);
    c.exponents.q_list = Vec::new();
    c.reverse_holder = Some(ReverseHolderSettings::default());
    let r = run(&c).unwrap();
    verdicts_matching(&r, &["reverse-Holder lower bound"])
}

fn bad_set() -> Outcome {
    let fam = ExampleFamily::singular_set(2.0, vec![10, 100, 1000, 10_000]).unwrap();
    let mut c = ExperimentConfig::new(Experiment::Badset, fam, 256);
    c.exponents.delta_list = vec![4.0, 8.0];
    let r = run(&c).unwrap();
    verdicts_matching(&r, &["contained in a ball", "box-counting dimension", "area nonincreasing in j0 (delta = 4 "])
}

fn bubble_subsequence_check() -> Outcome {
    let fam = bubble_subsequence(&[4, 5, 6, 7, 8]).unwrap();
    let mut c = ExperimentConfig::new(Experiment::Converge, fam, 256);
    c.solver = SolverConfig::with_radius(5);
    c.sampling = Sampling { pairs: 110, seed: SEED };
    c.exponents.rho = 0.1;
    c.tolerances.uniform = 0.025;
    c.witness = Some(Witness { point: Point::new(&[0.3, 0.4]), levels: (1..=8).collect() });
    let r = run(&c).unwrap();
    let mut out = verdicts_matching(&r, &["full sequence keeps", "at largest j within"]);
    let outside = r.series("pairs_outside").last().map_or(0.0, |row| row.value);
    out.pass &= outside >= 100.0;
    out.detail.push_str(&format!(" | {outside} pairs outside the tube"));
    out
}

fn cinched_sphere() -> Outcome {
    let fam = ExampleFamily::new(ExampleKind::CinchedSphere33 { h0: 0.5 }, vec![64]).unwrap();
    let mut c = ExperimentConfig::new(Experiment::Converge, fam, 256);
    c.solver = SolverConfig::with_radius(5);
    c.sampling.pairs = 0;
    c.tolerances.probe = 0.03;
    c.probes = vec![
        Probe { x: Point::sphere(FRAC_PI_2, 0.0), y: Point::sphere(FRAC_PI_2, FRAC_PI_2) },
        Probe { x: Point::sphere(0.0, 0.0), y: Point::sphere(PI, 0.0) },
    ];
    let r = run(&c).unwrap();
    let mut out = verdicts_matching(&r, &["probe 0 matches the limit", "probe 1 matches the limit"]);
    let refs: Vec<f64> = r.series("probe_reference").iter().map(|row| row.value).collect();
    let ok = refs.len() == 2 && (refs[0] - PI / 4.0).abs() < 1e-9 && (refs[1] - PI).abs() < 1e-9;
    out.pass &= ok;
    out.detail.push_str(&format!(" | references {refs:?} (expected pi/4, pi)"));
    out
}

fn reproducibility() -> Outcome {
    let fam = ExampleFamily::spike(0.5, vec![8, 16]).unwrap();
    let mut configs = Vec::new();
    let mut c = ExperimentConfig::new(Experiment::Sobolev, fam.clone(), 64);
    c.sampling.pairs = 120;
    configs.push(c);
    let mut c = ExperimentConfig::new(Experiment::Converge, fam.clone(), 64);
    c.sampling.pairs = 60;
    configs.push(c);
    configs.push(ExperimentConfig::new(
        Experiment::Badset,
        ExampleFamily::singular_set(2.0, vec![10, 100]).unwrap(),
        32,
    ));
    let dir = tempfile::tempdir().unwrap();
    let formats: Vec<String> = ["json", "csv", "svg"].iter().map(|s| s.to_string()).collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for c in &configs {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{}-{rep}", c.experiment.name()));
            let r = run(c).unwrap();
            r.write_all(&out, "report.json", &chart_specs(c.experiment), &formats, None).unwrap();
            bytes.push((
                std::fs::read(out.join("rows.csv")).unwrap(),
                std::fs::read(out.join("report.json")).unwrap(),
            ));
        }
        let same = bytes[0] == bytes[1];
        pass &= same;
        detail.push(format!("{}: {}", c.experiment.name(), if same { "identical" } else { "differs" }));
    }
    Outcome { pass, detail: detail.join("; ") }
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 12] = [
        ("1 solver exactness envelope", solver_envelope),
        ("2 singular-set limit", singular_limit),
        ("3 spike uniform convergence", spike_convergence),
        ("4 Sobolev ratio boundedness", sobolev_ratio),
        ("5 potential operator", potential_operator),
        ("6 distance-potential estimate", distance_potential),
        ("7 curve family checks", curve_family),
        ("8 reverse Holder", reverse_holder),
        ("9 bad set", bad_set),
        ("10 bubble subsequence necessity", bubble_subsequence_check),
        ("11 cinched sphere", cinched_sphere),
        ("12 reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let out = check();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {name}: {verdict} ({:.1}s) {}", t0.elapsed().as_secs_f64(), out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num::{BigInt, BigRational, One};
use rand::Rng;

use unitary_designs::crypto::{
    attack_suite, build_scheme, indistinguishability_defect, non_malleability_defect, security_report, CryptoOptions,
    SecurityMode,
};
use unitary_designs::ensembles::{
    clifford_ensemble, design_order_defect, pauli_ensemble, sampled_twirl_apply, subsample, TwirlMode,
};
use unitary_designs::harness::{run_experiment, ExperimentConfig, ExperimentReport, Summary};
use unitary_designs::norms::{
    diamond_solve, one_to_infty_distance, theta_k_bounded_estimate, theta_upper_bound, trace_norm_ascent, DiamondOptions,
    HermitianPreservingMap, NormKind, SearchOptions, Subspace, ThetaOptions,
};
use unitary_designs::schur_weyl::{channel_twirl_identity_weight, exact_twirl, exact_twirl_11, twirl_one_to_infty_norm};
use unitary_designs::tensor::{derived_rng, partial_transpose, StateVector, TensorShape};
use unitary_designs::{Operator, C64};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_operator(dim: usize, rng: &mut impl Rng) -> Operator {
    Operator::from_fn(dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn flip(d: usize) -> Operator {
    Operator::from_fn(d * d, |r, c| {
        let (a, b) = (r / d, r % d);
        C64::new(if c == b * d + a { 1.0 } else { 0.0 }, 0.0)
    })
}

fn c1_twirl_formula() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in 2..=5 {
        let id = Operator::identity(d * d);
        let f = flip(d);
        let sym = (&id + &f).scale(0.5);
        let anti = (&id - &f).scale(0.5);
        let (ds, da) = ((d * (d + 1) / 2) as f64, (d * (d - 1) / 2) as f64);
        let mut rng = derived_rng(1, d as u64);
        for _ in 0..25 {
            let x = random_operator(d * d, &mut rng);
            let expected = &sym.scale_c((&sym * &x).trace() / ds) + &anti.scale_c((&anti * &x).trace() / da);
            worst = worst.max(exact_twirl(&x, 2, d).unwrap().max_abs_diff(&expected));
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e}"))
}

fn c2_partial_transpose_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in 2..=3 {
        let shape = TensorShape::bipartite(d, d);
        let mut rng = derived_rng(2, d as u64);
        for _ in 0..25 {
            let x = random_operator(d * d, &mut rng);
            let via = partial_transpose(
                &exact_twirl(&partial_transpose(&x, &shape, 1).unwrap(), 2, d).unwrap(),
                &shape,
                1,
            )
            .unwrap();
            worst = worst.max(exact_twirl_11(&x, d).unwrap().max_abs_diff(&via));
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e}"))
}

/// Partitions of `t` with at most `rows` parts, largest part at most `max`.
fn parts(t: usize, rows: usize, max: usize) -> Vec<Vec<usize>> {
    if t == 0 {
        return vec![vec![]];
    }
    if rows == 0 {
        return vec![];
    }
    let mut out = Vec::new();
    for first in (1..=t.min(max)).rev() {
        for mut rest in parts(t - first, rows - 1, first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Hook-content formula for the dimension of the `U(d)` irrep `λ`.
fn hook_content(lambda: &[usize], d: usize) -> BigRational {
    let mut m = BigRational::one();
    for (i, &row) in lambda.iter().enumerate() {
        for j in 0..row {
            let arm = row - j - 1;
            let leg = lambda[i + 1..].iter().filter(|&&r| r > j).count();
            let content = d as i64 + j as i64 - i as i64;
            m *= BigRational::new(BigInt::from(content), BigInt::from(arm + leg + 1));
        }
    }
    m
}

fn c3_lemma_one_to_infty() -> Outcome {
    let mut failures = Vec::new();
    let mut cases = 0;
    for d in 2..=6 {
        for t in 1..d {
            cases += 1;
            let min = parts(t, d, t).iter().map(|l| hook_content(l, d)).min().unwrap();
            let r = twirl_one_to_infty_norm(t, d).unwrap();
            let bound = BigRational::new(num::pow(BigInt::from(2 * t), t), num::pow(BigInt::from(d), t));
            if r.norm != min.recip() || r.norm > bound || r.bound != bound {
                failures.push(format!("(t={t}, d={d})"));
            }
        }
    }
    outcome(failures.is_empty(), format!("{cases} cases, failures: {failures:?}"))
}

fn c4_psi_perp() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in 2..=3 {
        let m = HermitianPreservingMap::from_fn(d * d, d * d, |x| exact_twirl_11(x, d)).unwrap();
        let r = one_to_infty_distance(&m, Subspace::OrthogonalToMaxEntangled, &SearchOptions::with_restarts(32, 4)).unwrap();
        worst = worst.max((r.value - 1.0 / (d * d - 1) as f64).abs());
    }
    outcome(worst <= 1e-9, format!("max |search − 1/(d²−1)| {worst:.2e}"))
}

fn c5_psi_fixing() -> Outcome {
    let parent = clifford_ensemble(1).unwrap();
    let psi = StateVector::max_entangled(2).projector();
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let n = 1 + (i as usize % 16);
        let ens = subsample(&parent, n, 500 + i).unwrap();
        let out = sampled_twirl_apply(&ens, &psi, TwirlMode::UUbar).unwrap();
        worst = worst.max(out.max_abs_diff(&psi));
    }
    outcome(worst <= 1e-13, format!("max deviation {worst:.2e}"))
}

fn c6_design_certificates() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for d in 2..=5 {
        let c = design_order_defect(&pauli_ensemble(d).unwrap(), 1).unwrap();
        ok &= c.defect <= 1e-12;
        notes.push(format!("pauli({d}) t=1 {:.1e}", c.defect));
    }
    let c1 = clifford_ensemble(1).unwrap();
    for t in [2, 3] {
        let c = design_order_defect(&c1, t).unwrap();
        ok &= c.defect <= 1e-10;
        notes.push(format!("clifford(1) t={t} {:.1e}", c.defect));
    }
    let c2 = clifford_ensemble(2).unwrap();
    let c = design_order_defect(&c2, 2).unwrap();
    ok &= c.defect <= 1e-9 && c2.len() == 11520;
    notes.push(format!("clifford(2) |G|={} t=2 {:.1e}", c2.len(), c.defect));
    outcome(ok, notes.join(", "))
}

fn c7_diamond_oracle() -> Outcome {
    let opts = DiamondOptions::with_tol(1e-8);
    let search = SearchOptions::with_restarts(64, 7);
    let mut worst_gap: f64 = 0.0;
    let mut worst_diff: f64 = 0.0;
    let mut check = |m: &HermitianPreservingMap, closed: f64| {
        let sdp = diamond_solve(m, &opts).unwrap().report;
        if let NormKind::Certified { gap } = sdp.kind {
            worst_gap = worst_gap.max(gap);
        } else {
            worst_gap = f64::INFINITY;
        }
        let oracle = trace_norm_ascent(m, m.d_in(), &search).unwrap().value;
        worst_diff = worst_diff.max((sdp.value - oracle).abs()).max((sdp.value - closed).abs());
    };
    for d in 2..=3 {
        let m = HermitianPreservingMap::identity(d).sub(&HermitianPreservingMap::depolarizing(d)).unwrap();
        check(&m, 2.0 * (1.0 - 1.0 / (d * d) as f64));
    }
    for theta in [0.4f64, 1.3, 2.5] {
        let phases = [C64::new(1.0, 0.0), C64::from_polar(1.0, theta)];
        let u = Operator::from_fn(2, |r, c| if r == c { phases[r] } else { C64::new(0.0, 0.0) });
        let m = HermitianPreservingMap::identity(2)
            .sub(&HermitianPreservingMap::from_unitary_mixture(vec![u], vec![1.0]).unwrap())
            .unwrap();
        check(&m, 2.0 * (theta / 2.0).sin());
    }
    let pass = worst_gap <= 1e-7 && worst_diff <= 1e-5;
    outcome(pass, format!("max |SDP − oracle| {worst_diff:.2e}, max gap {worst_gap:.2e}"))
}

fn scaling(json: &str) -> Vec<Summary> {
    match run_experiment(&ExperimentConfig::from_json(json).unwrap()).unwrap() {
        ExperimentReport::Scaling(r) => r.summaries,
        _ => unreachable!(),
    }
}

fn seeds(n: u64) -> String {
    format!("{:?}", (0..n).collect::<Vec<_>>())
}

fn c8_t_fold_slope() -> Outcome {
    let json = format!(
        r#"{{"kind":"scaling-t-fold","t":1,"d":2,"n_grid":[4,16,64,256],"seeds":{},"restarts":16,"source":"pauli"}}"#,
        seeds(20)
    );
    let cfg = ExperimentConfig::from_json(&json).unwrap();
    let ExperimentReport::Scaling(r) = run_experiment(&cfg).unwrap() else { unreachable!() };
    let fit = r.fit.expect("fit");
    outcome(
        (-0.65..=-0.35).contains(&fit.slope),
        format!("slope {:.3}, r² {:.3}", fit.slope, fit.r2),
    )
}

fn strictly_decreasing(s: &[Summary]) -> bool {
    s.windows(2).all(|w| w[1].median < w[0].median)
}

fn c9_u_ubar_and_theta_trend() -> Outcome {
    let grid = seeds(20);
    let uubar = scaling(&format!(
        r#"{{"kind":"scaling-u-ubar","d":2,"n_grid":[8,32,128],"seeds":{grid},"restarts":16,"source":"clifford:1"}}"#
    ));
    let theta = scaling(&format!(
        r#"{{"kind":"scaling-theta","d":2,"n_grid":[8,32,128],"seeds":{grid},"restarts":16,"source":"clifford:1"}}"#
    ));
    let fmt = |s: &[Summary]| s.iter().map(|x| format!("{:.4}", x.median)).collect::<Vec<_>>().join(" > ");
    outcome(
        strictly_decreasing(&uubar) && strictly_decreasing(&theta),
        format!("u-ubar medians {}, Θ-upper medians {}", fmt(&uubar), fmt(&theta)),
    )
}

fn c10_rank_bound() -> Outcome {
    let mut worst_margin = f64::INFINITY;
    for d in [8, 16] {
        let json = format!(
            r#"{{"kind":"certify-lemmas","t":1,"d":{d},"n_grid":[1,2,4],"seeds":[0,1,2],"restarts":8,"source":"pauli"}}"#
        );
        let ExperimentReport::Lemmas(rep) = run_experiment(&ExperimentConfig::from_json(&json).unwrap()).unwrap() else {
            unreachable!()
        };
        for r in &rep.rank_rows {
            worst_margin = worst_margin.min(r.deviation - (1.0 - r.n as f64 * 2.0 / d as f64 - 0.05));
        }
    }
    outcome(worst_margin >= 0.0, format!("min deviation − bound {worst_margin:.4}"))
}

fn c11_crypto() -> Outcome {
    let opts = CryptoOptions {
        search: SearchOptions::with_restarts(32, 11),
        ..Default::default()
    };
    let pauli = build_scheme(&pauli_ensemble(2).unwrap()).unwrap();
    let mut indist: f64 = 0.0;
    for mode in [SecurityMode::NoSideInfo, SecurityMode::Full] {
        indist = indist.max(indistinguishability_defect(&pauli, mode, &opts).unwrap().value);
    }
    let clifford = build_scheme(&clifford_ensemble(1).unwrap()).unwrap();
    let (mut nm, mut p_err): (f64, f64) = (0.0, 0.0);
    let suite = attack_suite(2, 11).unwrap();
    for a in &suite {
        let (p, r) = non_malleability_defect(&clifford, a, SecurityMode::NoSideInfo, &opts).unwrap();
        nm = nm.max(r.value);
        p_err = p_err.max((p - channel_twirl_identity_weight(&a.choi, 2).unwrap()).abs());
    }
    let sub = build_scheme(&subsample(&clifford_ensemble(1).unwrap(), 5, 11).unwrap()).unwrap();
    let mut trivial: f64 = 0.0;
    for (label, target) in [("identity", 1.0), ("depolarizing", 0.0)] {
        let a = suite.iter().find(|a| a.label == label).unwrap();
        let (p, _) = non_malleability_defect(&sub, a, SecurityMode::NoSideInfo, &opts).unwrap();
        trivial = trivial.max((p - target).abs());
    }
    outcome(
        indist <= 1e-10 && nm <= 1e-8 && p_err <= 1e-6 && trivial <= 1e-6,
        format!("pauli indist {indist:.1e}, clifford nm {nm:.1e}, p* err {p_err:.1e}, trivial p* err {trivial:.1e}"),
    )
}

fn c12_k_bounded() -> Outcome {
    let parent = clifford_ensemble(1).unwrap();
    let theta_opts = ThetaOptions {
        restarts: 4,
        max_rounds: 20,
        search: SearchOptions::with_restarts(16, 12),
        ..Default::default()
    };
    let crypto_opts = CryptoOptions {
        search: SearchOptions::with_restarts(16, 12),
        ..Default::default()
    };
    let suite = attack_suite(2, 12).unwrap();
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in 0..10u64 {
        let ens = subsample(&parent, 8, 1200 + seed).unwrap();
        let (upper, _, _) = theta_upper_bound(&ens, &theta_opts.search).unwrap();
        let scheme = build_scheme(&ens).unwrap();
        for k in [1usize, 2] {
            let cap = (k * k) as f64 * upper.value;
            let est = theta_k_bounded_estimate(&ens, k, &ThetaOptions { seed, ..theta_opts }).unwrap();
            worst_excess = worst_excess.max(est.value - cap);
            let report = security_report(&scheme, &suite, SecurityMode::KBounded(k), &crypto_opts).unwrap();
            for row in &report.nm_defects {
                worst_excess = worst_excess.max(row.defect.value - cap);
            }
        }
    }
    outcome(worst_excess <= 1e-6, format!("max (report − k²·upper) {worst_excess:.3e}"))
}

fn c13_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        r#"{"kind":"scaling-t-fold","t":1,"d":2,"n_grid":[4,16,64],"seeds":[0,1,2],"restarts":8,"source":"pauli"}"#,
        r#"{"kind":"scaling-u-ubar","d":2,"n_grid":[8,32],"seeds":[0,1],"restarts":8,"source":"clifford:1"}"#,
        r#"{"kind":"scaling-theta","d":2,"n_grid":[8,32],"seeds":[0,1],"restarts":8,"source":"clifford:1"}"#,
        r#"{"kind":"scaling-crypto","d":2,"n_grid":[8],"seeds":[0,1],"restarts":8,"source":"clifford:1"}"#,
        r#"{"kind":"bernoulli-probe","t":1,"d":2,"n_grid":[4,8],"seeds":[0],"restarts":4,"source":"clifford:1"}"#,
        r#"{"kind":"certify-lemmas","t":2,"d":3,"n_grid":[1,2],"seeds":[0],"restarts":8,"source":"pauli"}"#,
    ];
    let bin = env!("CARGO_BIN_EXE_udesign");
    let mut differing = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let path = dir.path().join(format!("cfg{i}.json"));
        std::fs::write(&path, cfg).unwrap();
        let run = || {
            let out = Command::new(bin).args(["scale", "--config"]).arg(&path).output().unwrap();
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            out.stdout
        };
        if run() != run() {
            differing.push(i);
        }
    }
    let crypto = || {
        Command::new(bin)
            .args(["crypto", "--source", "clifford", "--m", "1", "--n", "12", "--seed", "3", "--mode", "k-bounded:2", "--restarts", "8"])
            .output()
            .unwrap()
            .stdout
    };
    if crypto() != crypto() {
        differing.push(configs.len());
    }
    outcome(differing.is_empty(), format!("{} reports compared twice, differing: {differing:?}", configs.len() + 1))
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 13] = [
        ("exact twirl matches the symmetric/antisymmetric formula", 10, c1_twirl_formula),
        ("U⊗Ū twirl equals partial-transposed 2-fold twirl", 5, c2_partial_transpose_identity),
        ("1→∞ norm of T^(t) is 1/min m_λ and within (2t/d)^t", 5, c3_lemma_one_to_infty),
        ("ψ-orthogonal 1→∞ norm of T^(1,1) is 1/(d²−1)", 60, c4_psi_perp),
        ("sampled U⊗Ū twirl fixes ψψ", 10, c5_psi_fixing),
        ("Pauli and Clifford design certificates", 600, c6_design_certificates),
        ("diamond SDP agrees with the restart oracle", 60, c7_diamond_oracle),
        ("t-fold 1→∞ deviation slope in [−0.65, −0.35]", 300, c8_t_fold_slope),
        ("u-ubar and Θ-upper medians strictly decrease", 900, c9_u_ubar_and_theta_trend),
        ("rank bound on small subsamples", 120, c10_rank_bound),
        ("encryption defects and p* coefficients", 300, c11_crypto),
        ("k-bounded reports within k² times the Θ upper bound", 300, c12_k_bounded),
        ("identical configs give byte-identical JSON", 600, c13_determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {:>2}: {name}: {} ({:.1} s, limit {limit} s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

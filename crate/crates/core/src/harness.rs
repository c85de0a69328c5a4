//! Experiment runner: scaling studies, the Bernoulli probe and lemma checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crypto::{attack_suite, build_scheme, indistinguishability_defect, non_malleability_defect, CryptoOptions, SecurityMode};
use crate::ensembles::{
    clifford_ensemble, mode_unitary, pauli_ensemble, subsample, TwirlMode, UnitaryEnsemble,
};
use crate::error::{Error, Result};
use crate::norms::{
    diamond_solve, one_to_infty_distance, one_to_one_distance, theta_upper_bound, DiamondOptions,
    HermitianPreservingMap, NormKind, SearchOptions, Subspace,
};
use crate::schur_weyl::{exact_twirl_11, twirl_one_to_infty_norm, MAX_T};
use crate::tensor::{derived_rng, Operator};

const BERNOULLI_STREAM: u64 = 0xbe71;
/// Sign vectors drawn per Bernoulli probe cell.
pub const BERNOULLI_SAMPLES: usize = 1000;
/// Largest `d` for the ψ-orthogonal search in the lemma report.
pub const PSI_PERP_MAX_D: usize = 4;
/// Largest `d` for scaling studies.
pub const HARNESS_MAX_D: usize = 16;

/// Where the parent ensemble comes from: `pauli`, `clifford:m` or `file:path`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Pauli,
    Clifford(usize),
    File(PathBuf),
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "pauli" => Ok(Source::Pauli),
            Some(("clifford", m)) => m
                .parse()
                .map(Source::Clifford)
                .map_err(|_| Error::InvalidInput(format!("bad qubit count in source {s:?}"))),
            Some(("file", path)) if !path.is_empty() => Ok(Source::File(PathBuf::from(path))),
            _ => Err(Error::InvalidInput(format!(
                "unrecognized source {s:?}; expected pauli, clifford:m or file:path"
            ))),
        }
    }
}

impl Source {
    /// Loads the ensemble; `d` is checked against its dimension.
    pub fn load(&self, d: usize) -> Result<UnitaryEnsemble> {
        let ens = match self {
            Source::Pauli => pauli_ensemble(d)?,
            Source::Clifford(m) => clifford_ensemble(*m)?,
            Source::File(path) => UnitaryEnsemble::read_file(path)?,
        };
        if ens.d() != d {
            return Err(Error::InvalidInput(format!("source has dimension {}, config says d = {d}", ens.d())));
        }
        Ok(ens)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentKind {
    ScalingTFold { t: usize },
    ScalingUUbar,
    ScalingTheta,
    ScalingCrypto,
    BernoulliProbe { t: usize },
    CertifyLemmas { t: usize },
}

impl ExperimentKind {
    pub fn label(&self) -> String {
        match self {
            ExperimentKind::ScalingTFold { t } => format!("scaling-t-fold({t})"),
            ExperimentKind::ScalingUUbar => "scaling-u-ubar".into(),
            ExperimentKind::ScalingTheta => "scaling-theta".into(),
            ExperimentKind::ScalingCrypto => "scaling-crypto".into(),
            ExperimentKind::BernoulliProbe { t } => format!("bernoulli-probe({t})"),
            ExperimentKind::CertifyLemmas { t } => format!("certify-lemmas({t})"),
        }
    }

    /// Moment order the kind probes.
    pub fn t(&self) -> usize {
        match *self {
            ExperimentKind::ScalingTFold { t } | ExperimentKind::BernoulliProbe { t } | ExperimentKind::CertifyLemmas { t } => t,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub kind: ExperimentKind,
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Recognized keys: `diamond` (SDP tolerance) and `search` (relative stopping tolerance).
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub source: String,
    /// Use the whole source instead of subsampling; `n_grid` must then be `[|source|]`.
    #[serde(default)]
    pub exhaustive: bool,
}

fn default_restarts() -> usize {
    16
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad("n_grid must be nonempty with positive entries".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly ascending".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be positive".into());
        }
        if self.d < 2 || self.d > HARNESS_MAX_D {
            return bad(format!("d must lie in 2..={HARNESS_MAX_D}"));
        }
        let t = self.kind.t();
        if t == 0 || t > MAX_T {
            return bad(format!("t must lie in 1..={MAX_T}"));
        }
        for key in self.tolerances.keys() {
            if key != "diamond" && key != "search" {
                return bad(format!("unknown tolerance {key:?}"));
            }
        }
        self.source.parse::<Source>()?;
        Ok(())
    }

    fn search(&self, seed: u64) -> SearchOptions {
        let mut s = SearchOptions::with_restarts(self.restarts, seed);
        if let Some(&tol) = self.tolerances.get("search") {
            s.rel_tol = tol;
        }
        s
    }

    fn diamond(&self) -> DiamondOptions {
        match self.tolerances.get("diamond") {
            Some(&tol) => DiamondOptions::with_tol(tol),
            None => DiamondOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub kind: String,
    pub d: usize,
    pub t: usize,
    pub n: usize,
    pub seed: u64,
    pub value: f64,
    pub norm_kind: String,
    /// Secondary quantity: 1→∞ on the ψ-orthogonal subspace for u-ubar, worst
    /// non-malleability defect over the attack suite for crypto.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aux: Option<f64>,
    #[serde(skip)]
    pub wall_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Grid points left out because their median was zero.
    pub excluded_n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub kind: String,
    pub source: String,
    pub rows: Vec<ScalingRow>,
    pub summaries: Vec<Summary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit: Option<Fit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliRow {
    pub n: usize,
    pub seed: u64,
    /// Monte Carlo mean of `‖Σ εᵢ Vᵢ ρ* Vᵢ*‖_∞`.
    pub lhs: f64,
    /// `(t log d)^{5/2} (log n)^{1/2} sup_ρ ‖Σ Vᵢ ρ Vᵢ*‖_∞^{1/2}`.
    pub shape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliReport {
    pub d: usize,
    pub t: usize,
    pub samples: usize,
    pub rows: Vec<BernoulliRow>,
    /// Smallest constant with `lhs ≤ C·shape` on every row with `shape > 0`.
    pub fitted_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub n: usize,
    pub seed: u64,
    pub deviation: f64,
    /// `1 − n·(2t/d)^t`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub d: usize,
    pub t: usize,
    /// `sup ‖T^{(t)}(ρ)‖_∞` as an exact fraction.
    pub one_to_infty: String,
    pub one_to_infty_value: f64,
    pub bound: String,
    pub bound_value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bound_holds: Option<bool>,
    /// Searched 1→∞ norm of `T^{(1,1)}` on inputs orthogonal to ψ; only for `d ≤ PSI_PERP_MAX_D`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psi_perp_search: Option<f64>,
    pub psi_perp_expected: f64,
    pub rank_rows: Vec<RankRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "kebab-case")]
pub enum ExperimentReport {
    Scaling(ScalingResult),
    Bernoulli(BernoulliReport),
    Lemmas(LemmaReport),
}

impl ExperimentReport {
    /// Pretty JSON; floats use the shortest round-trip rendering.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn cell_ensemble(cfg: &ExperimentConfig, parent: &UnitaryEnsemble, n: usize, seed: u64) -> Result<UnitaryEnsemble> {
    if cfg.exhaustive {
        if n != parent.len() {
            return Err(Error::InvalidInput(format!(
                "exhaustive runs need n = {} (the source size), got {n}",
                parent.len()
            )));
        }
        return Ok(parent.clone());
    }
    subsample(parent, n, seed)
}

/// One `(n, seed)` cell of a scaling experiment.
pub fn run_cell(cfg: &ExperimentConfig, parent: &UnitaryEnsemble, n: usize, seed: u64) -> Result<ScalingRow> {
    let start = Instant::now();
    let ens = cell_ensemble(cfg, parent, n, seed)?;
    let search = cfg.search(seed);
    let (value, kind, aux) = match cfg.kind {
        ExperimentKind::ScalingTFold { t } => {
            let dev = HermitianPreservingMap::ensemble_deviation(&ens, TwirlMode::TFold(t))?;
            let r = one_to_infty_distance(&dev, Subspace::All, &search)?;
            (r.value, r.kind, None)
        }
        ExperimentKind::ScalingUUbar => {
            let dev = HermitianPreservingMap::ensemble_deviation(&ens, TwirlMode::UUbar)?;
            let r = one_to_one_distance(&dev, &search)?;
            let perp = one_to_infty_distance(&dev, Subspace::OrthogonalToMaxEntangled, &search)?;
            (r.value, r.kind, Some(perp.value))
        }
        ExperimentKind::ScalingTheta => {
            let (upper, _, _) = theta_upper_bound(&ens, &search)?;
            (upper.value, upper.kind, None)
        }
        ExperimentKind::ScalingCrypto => {
            let scheme = build_scheme(&ens)?;
            let opts = CryptoOptions {
                diamond: cfg.diamond(),
                search,
                ..Default::default()
            };
            let indist = indistinguishability_defect(&scheme, SecurityMode::NoSideInfo, &opts)?;
            let mut worst: f64 = 0.0;
            for a in attack_suite(cfg.d, seed)? {
                worst = worst.max(non_malleability_defect(&scheme, &a, SecurityMode::NoSideInfo, &opts)?.1.value);
            }
            (indist.value, indist.kind, Some(worst))
        }
        _ => return Err(Error::InvalidInput(format!("{} is not a scaling experiment", cfg.kind.label()))),
    };
    Ok(ScalingRow {
        kind: cfg.kind.label(),
        d: cfg.d,
        t: cfg.kind.t(),
        n,
        seed,
        value,
        norm_kind: norm_label(&kind),
        aux,
        wall_ms: start.elapsed().as_millis(),
    })
}

fn norm_label(kind: &NormKind) -> String {
    kind.label().to_string()
}

fn cells(cfg: &ExperimentConfig) -> Vec<(usize, u64)> {
    cfg.n_grid.iter().flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s))).collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let context = |e: Error| match e {
        Error::CapExceeded(m) => Error::CapExceeded(format!("{} (d = {}): {m}", cfg.kind.label(), cfg.d)),
        other => other,
    };
    match cfg.kind {
        ExperimentKind::BernoulliProbe { t } => bernoulli_probe(cfg, t).map(ExperimentReport::Bernoulli).map_err(context),
        ExperimentKind::CertifyLemmas { t } => certify_lemmas(cfg, t).map(ExperimentReport::Lemmas).map_err(context),
        _ => run_scaling(cfg).map(ExperimentReport::Scaling).map_err(context),
    }
}

fn run_scaling(cfg: &ExperimentConfig) -> Result<ScalingResult> {
    let parent = cfg.source.parse::<Source>()?.load(cfg.d)?;
    let rows = cells(cfg)
        .into_par_iter()
        .map(|(n, seed)| run_cell(cfg, &parent, n, seed))
        .collect::<Result<Vec<_>>>()?;
    let summaries = summarize(&rows);
    let fit = if cfg.n_grid.len() >= 3 { fit_scaling(&rows).ok() } else { None };
    Ok(ScalingResult {
        kind: cfg.kind.label(),
        source: parent.provenance().to_string(),
        rows,
        summaries,
        fit,
    })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn grouped(rows: &[ScalingRow]) -> BTreeMap<usize, Vec<f64>> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_n.entry(r.n).or_default().push(r.value);
    }
    for v in by_n.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    by_n
}

/// Median and quartiles per `n`, ascending in `n`.
pub fn summarize(rows: &[ScalingRow]) -> Vec<Summary> {
    grouped(rows)
        .into_iter()
        .map(|(n, v)| Summary {
            n,
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
        })
        .collect()
}

/// Least squares of `log median` against `log n`.
pub fn fit_scaling(rows: &[ScalingRow]) -> Result<Fit> {
    let by_n = grouped(rows);
    if by_n.len() < 3 {
        return Err(Error::InvalidInput(format!("fit needs at least 3 distinct n, got {}", by_n.len())));
    }
    let mut excluded_n = Vec::new();
    let mut pts = Vec::new();
    for (n, v) in &by_n {
        let med = quantile(v, 0.5);
        if med > 0.0 {
            pts.push(((*n as f64).ln(), med.ln()));
        } else {
            excluded_n.push(*n);
        }
    }
    if pts.len() < 2 {
        return Err(Error::InvalidInput("fewer than 2 grid points with nonzero median".into()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(Fit {
        slope,
        intercept,
        r2,
        excluded_n,
    })
}

fn bernoulli_probe(cfg: &ExperimentConfig, t: usize) -> Result<BernoulliReport> {
    let parent = cfg.source.parse::<Source>()?.load(cfg.d)?;
    let d = cfg.d as f64;
    let rows = cells(cfg)
        .into_par_iter()
        .map(|(n, seed)| {
            let ens = cell_ensemble(cfg, &parent, n, seed)?;
            let search = cfg.search(seed);
            let dev = HermitianPreservingMap::ensemble_deviation(&ens, TwirlMode::TFold(t))?;
            let psi = one_to_infty_distance(&dev, Subspace::All, &search)?.witness.expect("search witness");
            let rho = Operator::projector(&psi);
            let images: Vec<Operator> = ens
                .elements()
                .iter()
                .map(|u| mode_unitary(u, TwirlMode::TFold(t)).conjugate(&rho))
                .collect();
            let mut rng = derived_rng(seed, BERNOULLI_STREAM ^ n as u64);
            let mut total = 0.0;
            for _ in 0..BERNOULLI_SAMPLES {
                let mut sum = Operator::zeros(rho.dim());
                for img in &images {
                    if rng.random_bool(0.5) {
                        sum += img;
                    } else {
                        sum += &(-img);
                    }
                }
                total += sum.operator_norm_hermitian()?;
            }
            let avg = HermitianPreservingMap::ensemble_average(&ens, TwirlMode::TFold(t))?;
            let sup = n as f64 * one_to_infty_distance(&avg, Subspace::All, &search)?.value;
            let shape = (t as f64 * d.ln()).powf(2.5) * (n as f64).ln().sqrt() * sup.sqrt();
            Ok(BernoulliRow {
                n,
                seed,
                lhs: total / BERNOULLI_SAMPLES as f64,
                shape,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fitted_constant = rows
        .iter()
        .filter(|r| r.shape > 0.0)
        .map(|r| r.lhs / r.shape)
        .fold(0.0, f64::max);
    Ok(BernoulliReport {
        d: cfg.d,
        t,
        samples: BERNOULLI_SAMPLES,
        rows,
        fitted_constant,
    })
}

fn certify_lemmas(cfg: &ExperimentConfig, t: usize) -> Result<LemmaReport> {
    let d = cfg.d;
    let lemma = twirl_one_to_infty_norm(t, d)?;
    let to_f64 = |r: &num::BigRational| -> f64 {
        use num::ToPrimitive;
        r.to_f64().unwrap_or(f64::NAN)
    };
    let search = cfg.search(cfg.seeds[0]);
    let psi_perp_search = if d <= PSI_PERP_MAX_D {
        let twirl11 = HermitianPreservingMap::from_fn(d * d, d * d, |x| exact_twirl_11(x, d))?;
        Some(one_to_infty_distance(&twirl11, Subspace::OrthogonalToMaxEntangled, &search)?.value)
    } else {
        None
    };
    let parent = cfg.source.parse::<Source>()?.load(d)?;
    let per_copy = (2.0 * t as f64 / d as f64).powi(t as i32);
    let rank_rows = cells(cfg)
        .into_par_iter()
        .map(|(n, seed)| {
            let ens = cell_ensemble(cfg, &parent, n, seed)?;
            let dev = HermitianPreservingMap::ensemble_deviation(&ens, TwirlMode::TFold(t))?;
            let deviation = one_to_one_distance(&dev, &cfg.search(seed))?.value;
            Ok(RankRow {
                n,
                seed,
                deviation,
                bound: 1.0 - n as f64 * per_copy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LemmaReport {
        d,
        t,
        one_to_infty: lemma.norm.to_string(),
        one_to_infty_value: to_f64(&lemma.norm),
        bound: lemma.bound.to_string(),
        bound_value: to_f64(&lemma.bound),
        bound_holds: lemma.bound_holds(),
        psi_perp_search,
        psi_perp_expected: 1.0 / (d * d - 1) as f64,
        rank_rows,
    })
}

/// Flat CSV with columns `kind,d,t,n,seed,value,norm_kind,wall_ms`.
pub fn rows_to_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("kind,d,t,n,seed,value,norm_kind,wall_ms\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{},{},{}", r.kind, r.d, r.t, r.n, r.seed, r.value, r.norm_kind, r.wall_ms);
    }
    out
}

/// Deviation of a subsample of an approximate source from the exact `T^{(t)}`,
/// next to the two terms of the triangle inequality bounding it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    /// `‖T_source − T‖_⋄`.
    pub source_defect: f64,
    /// `‖T_sample − T_source‖_⋄`.
    pub sample_deviation: f64,
    /// `‖T_sample − T‖_⋄`.
    pub total: f64,
    pub bound: f64,
}

pub fn compose_with_source(
    source: &UnitaryEnsemble,
    n: usize,
    seed: u64,
    t: usize,
    opts: &DiamondOptions,
) -> Result<CompositionReport> {
    let sample = subsample(source, n, seed)?;
    let mode = TwirlMode::TFold(t);
    let source_dev = HermitianPreservingMap::ensemble_deviation(source, mode)?;
    let total_dev = HermitianPreservingMap::ensemble_deviation(&sample, mode)?;
    let between = HermitianPreservingMap::ensemble_average(&sample, mode)?.sub(&HermitianPreservingMap::ensemble_average(source, mode)?)?;
    let source_defect = diamond_solve(&source_dev, opts)?.report.value;
    let sample_deviation = diamond_solve(&between, opts)?.report.value;
    let total = diamond_solve(&total_dev, opts)?.report.value;
    Ok(CompositionReport {
        source_defect,
        sample_deviation,
        total,
        bound: source_defect + sample_deviation,
    })
}

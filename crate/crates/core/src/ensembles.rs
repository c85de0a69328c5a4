//! Finite weighted unitary ensembles: exact designs, Haar samples and
//! sub-samples, with design-order certificates.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schur_weyl::Twirler;
use crate::tensor::{derived_rng, ginibre_unitary, kron, kron_power, Operator, C64, ONE, ZERO};

pub const UNITARITY_TOL: f64 = 1e-10;
pub const WEIGHT_TOL: f64 = 1e-12;
/// Exact-design verdicts accept defects up to this value times `d^t`.
pub const DEFECT_TOL: f64 = 1e-10;
/// Largest `d^{2t}` accepted by [`design_order_defect`].
pub const MAX_DEFECT_DIM: usize = 4096;
/// Closure sizes above this abort Clifford enumeration.
pub const CLIFFORD_SAFETY_BOUND: usize = 1_000_000;
/// Relative defect below which a non-exact ensemble is called approximate.
pub const APPROXIMATE_FRACTION: f64 = 0.1;

const SUBSAMPLE_STREAM: u64 = 0x5ab5;
const HAAR_STREAM: u64 = 0x4aa2;

/// Where an ensemble came from; rendered as a compact string in reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    Pauli,
    Clifford { qubits: usize },
    HaarIid { n: usize, seed: u64 },
    Subsample { parent: Box<Provenance>, n: usize, seed: u64 },
    External(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Pauli => write!(f, "pauli"),
            Provenance::Clifford { qubits } => write!(f, "clifford:{qubits}"),
            Provenance::HaarIid { n, seed } => write!(f, "haar-iid:n={n}:seed={seed}"),
            Provenance::Subsample { parent, n, seed } => write!(f, "subsample({parent}):n={n}:seed={seed}"),
            Provenance::External(label) => write!(f, "external:{label}"),
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unrecognized provenance {s:?}"));
        let field = |part: &str, key: &str| -> Result<u64> {
            part.strip_prefix(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)
        };
        if s == "pauli" {
            return Ok(Provenance::Pauli);
        }
        if let Some(q) = s.strip_prefix("clifford:") {
            return Ok(Provenance::Clifford { qubits: q.parse().map_err(|_| bad())? });
        }
        if let Some(rest) = s.strip_prefix("haar-iid:") {
            let (n, seed) = rest.split_once(':').ok_or_else(bad)?;
            return Ok(Provenance::HaarIid {
                n: field(n, "n=")? as usize,
                seed: field(seed, "seed=")?,
            });
        }
        if let Some(rest) = s.strip_prefix("subsample(") {
            let close = rest.rfind(')').ok_or_else(bad)?;
            let parent = rest[..close].parse()?;
            let tail = rest[close + 1..].strip_prefix(':').ok_or_else(bad)?;
            let (n, seed) = tail.split_once(':').ok_or_else(bad)?;
            return Ok(Provenance::Subsample {
                parent: Box::new(parent),
                n: field(n, "n=")? as usize,
                seed: field(seed, "seed=")?,
            });
        }
        if let Some(label) = s.strip_prefix("external:") {
            return Ok(Provenance::External(label.to_string()));
        }
        Ok(Provenance::External(s.to_string()))
    }
}

/// A weighted finite set of unitaries on `C^d`.
#[derive(Clone, Debug)]
pub struct UnitaryEnsemble {
    d: usize,
    elements: Vec<Operator>,
    weights: Vec<f64>,
    provenance: Provenance,
}

impl UnitaryEnsemble {
    pub fn new(d: usize, elements: Vec<Operator>, weights: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidInput("ensemble must be non-empty".into()));
        }
        if elements.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} elements but {} weights",
                elements.len(),
                weights.len()
            )));
        }
        for (i, u) in elements.iter().enumerate() {
            if u.dim() != d {
                return Err(Error::DimensionMismatch(format!("element {i} has dimension {}, expected {d}", u.dim())));
            }
            let defect = u.unitarity_defect();
            if defect > UNITARITY_TOL {
                return Err(Error::InvalidInput(format!("element {i} is not unitary (defect {defect:.3e})")));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(UnitaryEnsemble { d, elements, weights, provenance })
    }

    /// Uniform weights `1/n`.
    pub fn uniform(d: usize, elements: Vec<Operator>, provenance: Provenance) -> Result<Self> {
        let n = elements.len();
        Self::new(d, elements, vec![1.0 / n.max(1) as f64; n], provenance)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Operator] {
        &self.elements
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Operator, f64)> {
        self.elements.iter().zip(self.weights.iter().copied())
    }

    pub fn has_uniform_weights(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= WEIGHT_TOL)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EnsembleFile {
            d: self.d,
            provenance: self.provenance.to_string(),
            elements: self
                .elements
                .iter()
                .map(|u| u.to_row_major().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            weights: self.weights.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: EnsembleFile = serde_json::from_str(s)?;
        let elements = file
            .elements
            .iter()
            .map(|e| {
                let entries: Vec<C64> = e.iter().map(|&[re, im]| C64::new(re, im)).collect();
                Operator::from_row_major(file.d, &entries)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.d, elements, file.weights, file.provenance.parse()?)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    d: usize,
    provenance: String,
    elements: Vec<Vec<[f64; 2]>>,
    weights: Vec<f64>,
}

/// The `d²` clock/shift operators `X^a Z^b`, uniformly weighted.
pub fn pauli_ensemble(d: usize) -> Result<UnitaryEnsemble> {
    if d < 2 {
        return Err(Error::InvalidInput("Pauli ensemble needs d >= 2".into()));
    }
    let omega = |k: usize| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k % d) as f64 / d as f64);
    let mut elements = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            // X^a Z^b |j⟩ = ω^{bj} |j + a⟩
            let mut u = Operator::zeros(d);
            for j in 0..d {
                u[((j + a) % d, j)] = omega(b * j);
            }
            elements.push(u);
        }
    }
    UnitaryEnsemble::uniform(d, elements, Provenance::Pauli)
}

/// Scales `u` so its first entry of modulus above `1e-9` (row-major) is real positive.
fn canonical_phase(u: &Operator) -> Operator {
    let d = u.dim();
    for r in 0..d {
        for c in 0..d {
            let z = u[(r, c)];
            if z.norm() > 1e-9 {
                return u.scale_c(z.conj() / z.norm());
            }
        }
    }
    u.clone()
}

fn phase_key(u: &Operator) -> Vec<(i64, i64)> {
    u.to_row_major()
        .iter()
        .map(|z| ((z.re * 1e7).round() as i64, (z.im * 1e7).round() as i64))
        .collect()
}

/// The Clifford group on `m ∈ {1, 2}` qubits modulo global phase.
pub fn clifford_ensemble(m: usize) -> Result<UnitaryEnsemble> {
    clifford_ensemble_bounded(m, CLIFFORD_SAFETY_BOUND)
}

pub fn clifford_ensemble_bounded(m: usize, bound: usize) -> Result<UnitaryEnsemble> {
    if !(1..=2).contains(&m) {
        return Err(Error::InvalidInput(format!("Clifford enumeration supports 1 or 2 qubits, got {m}")));
    }
    let h = 1.0 / 2f64.sqrt();
    let had = Operator::from_row_major(2, &[C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)])?;
    let phase = Operator::from_row_major(2, &[ONE, ZERO, ZERO, C64::new(0.0, 1.0)])?;
    let id2 = Operator::identity(2);
    let generators = if m == 1 {
        vec![had, phase]
    } else {
        let cz = Operator::from_real_diagonal(&[1.0, 1.0, 1.0, -1.0]);
        vec![
            kron(&had, &id2),
            kron(&id2, &had),
            kron(&phase, &id2),
            kron(&id2, &phase),
            cz,
        ]
    };
    let d = 1 << m;
    let start = Operator::identity(d);
    let mut seen: HashMap<Vec<(i64, i64)>, usize> = HashMap::new();
    let mut elements = vec![start.clone()];
    seen.insert(phase_key(&start), 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(idx) = queue.pop_front() {
        for g in &generators {
            let next = canonical_phase(&(g * &elements[idx]));
            let key = phase_key(&next);
            if !seen.contains_key(&key) {
                if elements.len() >= bound {
                    return Err(Error::CapExceeded(format!("Clifford closure exceeded {bound} elements")));
                }
                seen.insert(key, elements.len());
                queue.push_back(elements.len());
                elements.push(next);
            }
        }
    }
    UnitaryEnsemble::uniform(d, elements, Provenance::Clifford { qubits: m })
}

/// `n` i.i.d. Haar unitaries with weights `1/n`.
pub fn haar_ensemble(d: usize, n: usize, seed: u64) -> Result<UnitaryEnsemble> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let mut rng = derived_rng(seed, HAAR_STREAM);
    let elements = (0..n).map(|_| ginibre_unitary(d, &mut rng)).collect();
    UnitaryEnsemble::uniform(d, elements, Provenance::HaarIid { n, seed })
}

/// `n` draws with replacement from `parent` (respecting its weights), weights `1/n`.
pub fn subsample(parent: &UnitaryEnsemble, n: usize, seed: u64) -> Result<UnitaryEnsemble> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let dist = WeightedIndex::new(&parent.weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = derived_rng(seed, SUBSAMPLE_STREAM);
    let elements = (0..n).map(|_| parent.elements[dist.sample(&mut rng)].clone()).collect();
    UnitaryEnsemble::uniform(
        parent.d,
        elements,
        Provenance::Subsample {
            parent: Box::new(parent.provenance.clone()),
            n,
            seed,
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Exact,
    Approximate,
    NotADesign,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignCertificate {
    pub t: usize,
    /// Hilbert-Schmidt distance between the ensemble's moment map and the exact twirl.
    pub defect: f64,
    /// `defect / ‖T^{(t)}‖_HS`.
    pub relative_defect: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

pub fn design_order_defect(ens: &UnitaryEnsemble, t: usize) -> Result<DesignCertificate> {
    design_order_defect_capped(ens, t, MAX_DEFECT_DIM)
}

/// The superoperator distance is evaluated one matrix unit `|a⟩⟨b|` at a
/// time, so no `d^{2t} × d^{2t}` matrix is ever formed.
pub fn design_order_defect_capped(ens: &UnitaryEnsemble, t: usize, cap: usize) -> Result<DesignCertificate> {
    let d = ens.d;
    let dim2 = (d as u128).checked_pow(2 * t as u32).unwrap_or(u128::MAX);
    if dim2 > cap as u128 {
        return Err(Error::CapExceeded(format!("d^(2t) = {d}^{} exceeds cap {cap}", 2 * t)));
    }
    let twirler = Twirler::with_caps(t, d, t.max(1), cap)?;
    let dim = twirler.dim();
    let n = ens.len();
    // columns[a] is dim × n with columns √w_i · U_i^{⊗t}|a⟩
    let powers: Vec<Operator> = ens.elements.iter().map(|u| kron_power(u, t)).collect();
    let columns: Vec<DMatrix<C64>> = (0..dim)
        .map(|a| DMatrix::from_fn(dim, n, |o, i| powers[i][(o, a)] * ens.weights[i].sqrt()))
        .collect();
    let adjoints: Vec<DMatrix<C64>> = columns.iter().map(|c| c.adjoint()).collect();
    let per_row: Vec<(f64, f64)> = (0..dim)
        .into_par_iter()
        .map(|a| {
            let mut diff = 0.0;
            let mut exact = 0.0;
            for b in 0..dim {
                let moment = &columns[a] * &adjoints[b];
                let target = twirler.twirl_matrix_unit(a, b);
                for (x, y) in moment.iter().zip(target.iter()) {
                    diff += (x - y).norm_sqr();
                    exact += y.norm_sqr();
                }
            }
            (diff, exact)
        })
        .collect();
    let (diff, exact) = per_row.iter().fold((0.0, 0.0), |(s, e), (a, b)| (s + a, e + b));
    let defect = diff.sqrt();
    let relative_defect = defect / exact.sqrt();
    let tolerance = DEFECT_TOL * dim as f64;
    let verdict = if defect <= tolerance {
        Verdict::Exact
    } else if relative_defect <= APPROXIMATE_FRACTION {
        Verdict::Approximate
    } else {
        Verdict::NotADesign
    };
    Ok(DesignCertificate {
        t,
        defect,
        relative_defect,
        tolerance,
        verdict,
    })
}

/// How a sampled twirl acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwirlMode {
    /// `X ↦ Σ w U^{⊗t} X U^{*⊗t}` on `L(d^t)`.
    TFold(usize),
    /// `X ↦ Σ w (U⊗Ū) X (U⊗Ū)*` on `L(d²)`.
    UUbar,
    /// Choi matrix of `N ↦ Σ w U N(U*·U) U*`, i.e. conjugation by `Ū⊗U`.
    ChannelTwirl,
}

pub(crate) fn mode_unitary(u: &Operator, mode: TwirlMode) -> Operator {
    match mode {
        TwirlMode::TFold(t) => kron_power(u, t),
        TwirlMode::UUbar => kron(u, &u.conj()),
        TwirlMode::ChannelTwirl => kron(&u.conj(), u),
    }
}

pub fn mode_dim(d: usize, mode: TwirlMode) -> usize {
    match mode {
        TwirlMode::TFold(t) => d.pow(t as u32),
        TwirlMode::UUbar | TwirlMode::ChannelTwirl => d * d,
    }
}

pub fn sampled_twirl_apply(ens: &UnitaryEnsemble, x: &Operator, mode: TwirlMode) -> Result<Operator> {
    let dim = mode_dim(ens.d, mode);
    if x.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{mode:?} twirl at d={} needs dimension {dim}, got {}",
            ens.d,
            x.dim()
        )));
    }
    let mut out = Operator::zeros(dim);
    for (u, w) in ens.iter() {
        out += &mode_unitary(u, mode).conjugate(x).scale(w);
    }
    Ok(out)
}

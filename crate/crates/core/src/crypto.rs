//! Unitary encryption schemes and their security defects.
//!
//! Encryption with key `x` is conjugation by `U_x`, decryption by `U_x*`.
//! The replacement state is fixed to `I/d`, so every defect reported here is an
//! upper bound on the corresponding infimum over states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{Provenance, TwirlMode, UnitaryEnsemble};
use crate::error::{Error, Result};
use crate::norms::{
    diamond_solve, k_bounded_diamond_distance, one_to_one_distance, theta_upper_bound, DiamondOptions,
    HermitianPreservingMap, NormReport, SearchOptions,
};
use crate::schur_weyl::{channel_twirl_identity_weight, check_channel_choi};
use crate::tensor::{
    derived_rng, eig_hermitian, gaussian_vector, ginibre_unitary, kron, partial_trace, Operator, TensorShape, C64,
};

/// Largest message dimension accepted by `attack_suite`.
pub const ATTACK_MAX_D: usize = 8;

#[derive(Clone, Debug)]
pub struct EncryptionScheme {
    d: usize,
    keys: Vec<Operator>,
    key_bits: f64,
    provenance: String,
}

impl EncryptionScheme {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn keys(&self) -> &[Operator] {
        &self.keys
    }

    pub fn key_bits(&self) -> f64 {
        self.key_bits
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn encrypt(&self, key: usize, rho: &Operator) -> Operator {
        self.keys[key].conjugate(rho)
    }

    pub fn decrypt(&self, key: usize, rho: &Operator) -> Operator {
        self.keys[key].dagger().conjugate(rho)
    }

    fn as_ensemble(&self) -> Result<UnitaryEnsemble> {
        UnitaryEnsemble::uniform(
            self.d,
            self.keys.clone(),
            Provenance::External(self.provenance.clone()),
        )
    }
}

/// One key per ensemble element; keys must be uniformly distributed.
pub fn build_scheme(ens: &UnitaryEnsemble) -> Result<EncryptionScheme> {
    if !ens.has_uniform_weights() {
        return Err(Error::InvalidInput("encryption keys must be uniformly distributed".into()));
    }
    Ok(EncryptionScheme {
        d: ens.d(),
        keys: ens.elements().to_vec(),
        key_bits: (ens.len() as f64).log2(),
        provenance: ens.provenance().to_string(),
    })
}

#[derive(Clone, Debug)]
pub struct AttackChannel {
    pub label: String,
    pub choi: Operator,
    /// Side-information dimension; 1 when the attack acts on the ciphertext alone.
    pub d_e: usize,
}

impl AttackChannel {
    pub fn new(label: impl Into<String>, choi: Operator, d_e: usize) -> Self {
        AttackChannel {
            label: label.into(),
            choi,
            d_e,
        }
    }

    pub fn from_kraus(label: impl Into<String>, d: usize, kraus: &[Operator]) -> Result<Self> {
        let map = HermitianPreservingMap::from_kraus(d, d, kraus.iter().map(|k| k.matrix().clone()).collect())?;
        Ok(AttackChannel::new(label, map.choi().clone(), 1))
    }
}

/// Identity, basis cycling, a Haar unitary, full depolarizing, measure-and-replace
/// and a random channel with normalized Ginibre Choi matrix.
pub fn attack_suite(d: usize, seed: u64) -> Result<Vec<AttackChannel>> {
    if d < 2 || d > ATTACK_MAX_D {
        return Err(Error::CapExceeded(format!("attack suite supports 2 ≤ d ≤ {ATTACK_MAX_D}, got {d}")));
    }
    let one = C64::new(1.0, 0.0);
    let shift = Operator::from_fn(d, |r, c| if r == (c + 1) % d { one } else { C64::new(0.0, 0.0) });
    let haar = ginibre_unitary(d, &mut derived_rng(seed, 0));
    let mut suite = vec![
        AttackChannel::from_kraus("identity", d, &[Operator::identity(d)])?,
        AttackChannel::from_kraus("basis-cycle", d, &[shift])?,
        AttackChannel::from_kraus("haar-unitary", d, &[haar])?,
        AttackChannel::new("depolarizing", HermitianPreservingMap::depolarizing(d).choi().clone(), 1),
    ];
    // ρ ↦ Σ_a ⟨a|ρ|a⟩ |a+1⟩⟨a+1|
    let measure: Vec<Operator> = (0..d)
        .map(|a| Operator::from_fn(d, |r, c| if r == (a + 1) % d && c == a { one } else { C64::new(0.0, 0.0) }))
        .collect();
    suite.push(AttackChannel::from_kraus("measure-and-replace", d, &measure)?);
    suite.push(AttackChannel::new("random-channel", random_choi(d, &mut derived_rng(seed, 1))?, 1));
    Ok(suite)
}

/// `(M^{-1/2} ⊗ I) G G* (M^{-1/2} ⊗ I)` for Gaussian `G`, `M` its input marginal.
fn random_choi(d: usize, rng: &mut impl rand::Rng) -> Result<Operator> {
    let n = d * d;
    let g = Operator::from_row_major(n, &gaussian_vector(n * n, rng))?;
    let w = &g * &g.dagger();
    let m = partial_trace(&w, &TensorShape::bipartite(d, d), &[0])?;
    let (vals, vecs) = eig_hermitian(&m)?;
    let inv_sqrt = Operator::from_real_diagonal(&vals.iter().map(|v| 1.0 / v.sqrt()).collect::<Vec<_>>());
    let s = &vecs * &(&inv_sqrt * &vecs.dagger());
    Ok(kron(&s, &Operator::identity(d)).conjugate(&w).hermitian_part())
}

/// Which adversary the defect is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecurityMode {
    /// 1→1 norm for indistinguishability; diamond norm for non-malleability.
    NoSideInfo,
    /// Ancilla of dimension `k`.
    KBounded(usize),
    /// Unbounded ancilla; indistinguishability only.
    Full,
}

#[derive(Clone, Copy, Debug)]
pub struct CryptoOptions {
    pub diamond: DiamondOptions,
    pub search: SearchOptions,
    /// Golden-section search stops once the bracket on `p` is narrower than this.
    pub p_width: f64,
}

impl Default for CryptoOptions {
    fn default() -> Self {
        CryptoOptions {
            diamond: DiamondOptions::with_tol(1e-8),
            search: SearchOptions::default(),
            p_width: 1e-6,
        }
    }
}

/// Distance between the averaged encryption `E_x[Enc_x]` and `ρ ↦ Tr(ρ)·I/d`.
pub fn indistinguishability_defect(s: &EncryptionScheme, mode: SecurityMode, opts: &CryptoOptions) -> Result<NormReport> {
    let dev = HermitianPreservingMap::ensemble_deviation(&s.as_ensemble()?, TwirlMode::TFold(1))?;
    match mode {
        SecurityMode::NoSideInfo => one_to_one_distance(&dev, &opts.search),
        SecurityMode::KBounded(k) => k_bounded_diamond_distance(&dev, k, &opts.diamond, &opts.search),
        SecurityMode::Full => Ok(diamond_solve(&dev, &opts.diamond)?.report),
    }
}

/// Choi matrix of `E_x[Dec_x ∘ Λ ∘ Enc_x]`, i.e. `Σ (Uᵀ ⊗ U*) J (Uᵀ ⊗ U*)* / n`.
pub fn effective_channel(s: &EncryptionScheme, choi: &Operator) -> Result<Operator> {
    let d = s.d;
    if choi.dim() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "attack Choi has dimension {}, expected {}",
            choi.dim(),
            d * d
        )));
    }
    let w = 1.0 / s.keys.len() as f64;
    let mut out = Operator::zeros(d * d);
    for u in &s.keys {
        out += &kron(&u.transpose(), &u.dagger()).conjugate(choi).scale(w);
    }
    Ok(out)
}

/// Minimizes `‖E − (p·id + (1−p)·⟨I/d⟩)‖` over `p` and returns `(p, defect)`.
///
/// `p` ranges over `[−1/(d²−1), 1]`, where the mixture is still a channel: the Haar
/// twirl of an attack with entanglement fidelity `f < 1/d²` lands below zero.
pub fn non_malleability_defect(
    s: &EncryptionScheme,
    a: &AttackChannel,
    mode: SecurityMode,
    opts: &CryptoOptions,
) -> Result<(f64, NormReport)> {
    if a.d_e != 1 {
        return Err(Error::InvalidInput(format!(
            "attack '{}' carries side information (d_E = {}); only d_E = 1 is supported",
            a.label, a.d_e
        )));
    }
    if mode == SecurityMode::Full {
        return Err(Error::InvalidInput("non-malleability with unbounded side information is not evaluated".into()));
    }
    let d = s.d;
    let effective = HermitianPreservingMap::from_choi(d, d, effective_channel(s, &a.choi)?)?;
    let id = HermitianPreservingMap::identity(d);
    let dep = HermitianPreservingMap::depolarizing(d);
    let objective = |p: f64| -> Result<NormReport> {
        let target = id.scale(p).add(&dep.scale(1.0 - p))?;
        let diff = effective.sub(&target)?;
        match mode {
            SecurityMode::KBounded(k) => k_bounded_diamond_distance(&diff, k, &opts.diamond, &opts.search),
            _ => Ok(diamond_solve(&diff, &opts.diamond)?.report),
        }
    };
    let (p, report) = golden_section(&objective, p_min(d), 1.0, opts.p_width)?;
    // The twirl coefficient of E itself is exact whenever E is already a mixture.
    let p_fid = channel_twirl_identity_weight(effective.choi(), d)?.clamp(p_min(d), 1.0);
    let at_fid = objective(p_fid)?;
    if at_fid.value < report.value {
        return Ok((p_fid, at_fid));
    }
    Ok((p, report))
}

/// Smallest `p` for which `p·id + (1−p)·⟨I/d⟩` is completely positive.
pub fn p_min(d: usize) -> f64 {
    -1.0 / (d * d - 1) as f64
}

/// Golden-section minimization on `[a, b]`, also comparing the endpoints.
/// Ties resolve to the smaller `p`.
fn golden_section(f: &impl Fn(f64) -> Result<NormReport>, a: f64, b: f64, width: f64) -> Result<(f64, NormReport)> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > width {
        if f1.value <= f2.value {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    let mut best = (mid, f(mid)?);
    for p in [a, b] {
        let r = f(p)?;
        if r.value < best.1.value || (r.value == best.1.value && p < best.0) {
            best = (p, r);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub label: String,
    pub p_star: f64,
    pub defect: NormReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub provenance: String,
    pub d: usize,
    pub key_bits: f64,
    pub mode: SecurityMode,
    /// The replacement state; fixed, so defects are upper bounds over states.
    pub sigma: String,
    pub indist_defect: NormReport,
    pub nm_defects: Vec<AttackRow>,
    /// `k²` times the Θ upper bound, a scheme-wide bound on k-bounded non-malleability.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub side_info_bound: Option<f64>,
}

pub fn security_report(
    s: &EncryptionScheme,
    attacks: &[AttackChannel],
    mode: SecurityMode,
    opts: &CryptoOptions,
) -> Result<SecurityReport> {
    let indist_defect = indistinguishability_defect(s, mode, opts)?;
    let nm_defects = attacks
        .par_iter()
        .map(|a| {
            let (p_star, defect) = non_malleability_defect(s, a, mode, opts)?;
            Ok(AttackRow {
                label: a.label.clone(),
                p_star,
                defect,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let side_info_bound = match mode {
        SecurityMode::KBounded(k) => {
            let (upper, _, _) = theta_upper_bound(&s.as_ensemble()?, &opts.search)?;
            Some((k * k) as f64 * upper.value)
        }
        _ => None,
    };
    Ok(SecurityReport {
        provenance: s.provenance.clone(),
        d: s.d,
        key_bits: s.key_bits,
        mode,
        sigma: "maximally-mixed".into(),
        indist_defect,
        nm_defects,
        side_info_bound,
    })
}

/// Checks an attack is a channel on the ciphertext space.
pub fn check_attack(a: &AttackChannel, d: usize) -> Result<()> {
    check_channel_choi(&a.choi, d * a.d_e, d * a.d_e, 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{clifford_ensemble, pauli_ensemble, subsample};

    fn fast() -> CryptoOptions {
        CryptoOptions {
            search: SearchOptions::with_restarts(16, 0),
            ..Default::default()
        }
    }

    fn singleton() -> EncryptionScheme {
        build_scheme(&UnitaryEnsemble::uniform(2, vec![Operator::identity(2)], Provenance::External("identity".into())).unwrap()).unwrap()
    }

    #[test]
    fn key_accounting() {
        let s = build_scheme(&pauli_ensemble(2).unwrap()).unwrap();
        assert_eq!(s.keys().len(), 4);
        assert_eq!(s.key_bits(), 2.0);
        let sub = build_scheme(&subsample(&clifford_ensemble(1).unwrap(), 64, 3).unwrap()).unwrap();
        assert_eq!(sub.key_bits(), 6.0);
        let skewed = UnitaryEnsemble::new(
            2,
            vec![Operator::identity(2), Operator::identity(2)],
            vec![0.25, 0.75],
            Provenance::External("skewed".into()),
        )
        .unwrap();
        assert!(build_scheme(&skewed).is_err());
    }

    #[test]
    fn decryption_inverts_encryption() {
        let s = build_scheme(&clifford_ensemble(1).unwrap()).unwrap();
        for x in 0..s.keys().len() {
            for a in 0..2 {
                for b in 0..2 {
                    let e = Operator::from_fn(2, |r, c| C64::new(if (r, c) == (a, b) { 1.0 } else { 0.0 }, 0.0));
                    assert!(s.decrypt(x, &s.encrypt(x, &e)).max_abs_diff(&e) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn attack_suite_is_valid() {
        let suite = attack_suite(2, 0).unwrap();
        assert!(suite.len() >= 5);
        for a in &suite {
            check_attack(a, 2).unwrap();
        }
        let mr = suite.iter().find(|a| a.label == "measure-and-replace").unwrap();
        check_channel_choi(&mr.choi, 2, 2, 1e-12).unwrap();
    }

    #[test]
    fn indistinguishability_examples() {
        let pauli = build_scheme(&pauli_ensemble(2).unwrap()).unwrap();
        for mode in [SecurityMode::NoSideInfo, SecurityMode::KBounded(1), SecurityMode::Full] {
            assert!(indistinguishability_defect(&pauli, mode, &fast()).unwrap().value <= 1e-10);
        }
        let v = indistinguishability_defect(&singleton(), SecurityMode::NoSideInfo, &fast()).unwrap().value;
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn indistinguishability_is_the_first_moment_deviation() {
        let s = build_scheme(&subsample(&clifford_ensemble(1).unwrap(), 5, 9).unwrap()).unwrap();
        let dev = HermitianPreservingMap::ensemble_deviation(&s.as_ensemble().unwrap(), TwirlMode::TFold(1)).unwrap();
        let direct = one_to_one_distance(&dev, &fast().search).unwrap().value;
        let v = indistinguishability_defect(&s, SecurityMode::NoSideInfo, &fast()).unwrap().value;
        assert!((v - direct).abs() < 1e-9);
    }

    #[test]
    fn clifford_scheme_is_non_malleable() {
        let s = build_scheme(&clifford_ensemble(1).unwrap()).unwrap();
        for a in attack_suite(2, 4).unwrap() {
            let (p, r) = non_malleability_defect(&s, &a, SecurityMode::NoSideInfo, &fast()).unwrap();
            assert!(r.value <= 1e-8, "{}: {}", a.label, r.value);
            let expected = channel_twirl_identity_weight(&a.choi, 2).unwrap();
            assert!((p - expected).abs() < 1e-6, "{}: {p} vs {expected}", a.label);
        }
    }

    #[test]
    fn trivial_attacks_on_any_scheme() {
        let s = build_scheme(&subsample(&clifford_ensemble(1).unwrap(), 3, 1).unwrap()).unwrap();
        let suite = attack_suite(2, 0).unwrap();
        let (p, r) = non_malleability_defect(&s, &suite[0], SecurityMode::NoSideInfo, &fast()).unwrap();
        assert!(r.value <= 1e-10 && (p - 1.0).abs() < 1e-6);
        let dep = suite.iter().find(|a| a.label == "depolarizing").unwrap();
        let (p, r) = non_malleability_defect(&s, dep, SecurityMode::NoSideInfo, &fast()).unwrap();
        assert!(r.value <= 1e-10 && p.abs() < 1e-6);
    }

    #[test]
    fn objective_is_convex_in_p() {
        let s = build_scheme(&subsample(&clifford_ensemble(1).unwrap(), 4, 2).unwrap()).unwrap();
        let a = &attack_suite(2, 0).unwrap()[5];
        let effective = HermitianPreservingMap::from_choi(2, 2, effective_channel(&s, &a.choi).unwrap()).unwrap();
        let id = HermitianPreservingMap::identity(2);
        let dep = HermitianPreservingMap::depolarizing(2);
        let grid: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|&p| {
                let diff = effective.sub(&id.scale(p).add(&dep.scale(1.0 - p)).unwrap()).unwrap();
                diamond_solve(&diff, &DiamondOptions::with_tol(1e-9)).unwrap().report.value
            })
            .collect();
        for i in 1..19 {
            assert!(vals[i] <= 0.5 * (vals[i - 1] + vals[i + 1]) + 1e-7);
        }
    }

    #[test]
    fn side_information_attacks_are_rejected() {
        let s = singleton();
        let a = AttackChannel::new("wide", Operator::identity(16).scale(0.25), 2);
        assert!(non_malleability_defect(&s, &a, SecurityMode::NoSideInfo, &fast()).is_err());
        let a = AttackChannel::new("narrow", Operator::identity(9), 1);
        assert!(non_malleability_defect(&s, &a, SecurityMode::NoSideInfo, &fast()).is_err());
    }

    #[test]
    fn report_serializes() {
        let s = build_scheme(&pauli_ensemble(2).unwrap()).unwrap();
        let suite = attack_suite(2, 0).unwrap();
        let r = security_report(&s, &suite[..2], SecurityMode::KBounded(1), &fast()).unwrap();
        assert!(r.side_info_bound.is_some());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"k-bounded\":1"));
        assert_eq!(serde_json::from_str::<SecurityReport>(&json).unwrap(), r);
    }
}

use nalgebra::DMatrix;

use crate::ensembles::{mode_unitary, TwirlMode, UnitaryEnsemble};
use crate::error::{Error, Result};
use crate::schur_weyl::{exact_twirl_11, Twirler};
use crate::tensor::{partial_trace, Operator, TensorShape, C64, HERMITIAN_TOL, ONE};

/// Optional structured description of a map alongside its Choi matrix.
#[derive(Clone, Debug)]
pub enum MapStructure {
    /// `X ↦ Σ K X K*` with `d_out × d_in` operators.
    Kraus(Vec<DMatrix<C64>>),
    /// `X ↦ Σ w U X U*`; weights may be negative.
    UnitaryMixture { unitaries: Vec<Operator>, weights: Vec<f64> },
    Difference(Box<MapStructure>, Box<MapStructure>),
}

/// A Hermitian-preserving linear map `L(C^{d_in}) → L(C^{d_out})` held by
/// its Choi matrix `J = Σ_ab E_ab ⊗ Φ(E_ab)` (input factor first).
#[derive(Clone, Debug)]
pub struct HermitianPreservingMap {
    d_in: usize,
    d_out: usize,
    choi: Operator,
    structure: Option<MapStructure>,
}

/// `vec(K)_{(a,o)} = K[o,a]`, so `Choi(K·K*) = vec(K) vec(K)*`.
fn vec_columns(k: &DMatrix<C64>) -> Vec<C64> {
    let (d_out, d_in) = k.shape();
    let mut v = Vec::with_capacity(d_in * d_out);
    for a in 0..d_in {
        for o in 0..d_out {
            v.push(k[(o, a)]);
        }
    }
    v
}

fn add_rank_one(choi: &mut Operator, v: &[C64], w: f64) {
    for (r, &vr) in v.iter().enumerate() {
        if vr == C64::new(0.0, 0.0) {
            continue;
        }
        let s = vr * w;
        for (c, &vc) in v.iter().enumerate() {
            choi[(r, c)] += s * vc.conj();
        }
    }
}

impl MapStructure {
    fn choi(&self, d_in: usize, d_out: usize) -> Result<Operator> {
        let mut choi = Operator::zeros(d_in * d_out);
        match self {
            MapStructure::Kraus(ks) => {
                for k in ks {
                    if k.shape() != (d_out, d_in) {
                        return Err(Error::DimensionMismatch(format!(
                            "Kraus operator must be {d_out}x{d_in}, got {:?}",
                            k.shape()
                        )));
                    }
                    add_rank_one(&mut choi, &vec_columns(k), 1.0);
                }
            }
            MapStructure::UnitaryMixture { unitaries, weights } => {
                if d_in != d_out || unitaries.len() != weights.len() {
                    return Err(Error::DimensionMismatch("unitary mixture shape".into()));
                }
                for (u, &w) in unitaries.iter().zip(weights) {
                    if u.dim() != d_in {
                        return Err(Error::DimensionMismatch(format!("unitary of dimension {}", u.dim())));
                    }
                    add_rank_one(&mut choi, &vec_columns(u.matrix()), w);
                }
            }
            MapStructure::Difference(a, b) => {
                choi = &a.choi(d_in, d_out)? - &b.choi(d_in, d_out)?;
            }
        }
        Ok(choi)
    }
}

impl HermitianPreservingMap {
    pub fn from_choi(d_in: usize, d_out: usize, choi: Operator) -> Result<Self> {
        if choi.dim() != d_in * d_out {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix of a {d_in}→{d_out} map has dimension {}, got {}",
                d_in * d_out,
                choi.dim()
            )));
        }
        let tol = HERMITIAN_TOL * 1f64.max(choi.max_abs());
        let asym = choi.hermitian_asymmetry();
        if asym > tol {
            return Err(Error::NotHermitian { asymmetry: asym, tolerance: tol });
        }
        Ok(HermitianPreservingMap {
            d_in,
            d_out,
            choi: choi.hermitian_part(),
            structure: None,
        })
    }

    pub fn from_structure(d_in: usize, d_out: usize, structure: MapStructure) -> Result<Self> {
        let choi = structure.choi(d_in, d_out)?;
        let mut map = Self::from_choi(d_in, d_out, choi)?;
        map.structure = Some(structure);
        Ok(map)
    }

    pub fn from_kraus(d_in: usize, d_out: usize, kraus: Vec<DMatrix<C64>>) -> Result<Self> {
        Self::from_structure(d_in, d_out, MapStructure::Kraus(kraus))
    }

    pub fn from_unitary_mixture(unitaries: Vec<Operator>, weights: Vec<f64>) -> Result<Self> {
        let d = unitaries.first().map(|u| u.dim()).ok_or_else(|| Error::InvalidInput("empty mixture".into()))?;
        Self::from_structure(d, d, MapStructure::UnitaryMixture { unitaries, weights })
    }

    /// Builds the Choi matrix by applying `f` to every matrix unit.
    pub fn from_fn(d_in: usize, d_out: usize, f: impl Fn(&Operator) -> Result<Operator>) -> Result<Self> {
        let mut choi = Operator::zeros(d_in * d_out);
        for a in 0..d_in {
            for b in 0..d_in {
                let mut e = Operator::zeros(d_in);
                e[(a, b)] = ONE;
                let out = f(&e)?;
                if out.dim() != d_out {
                    return Err(Error::DimensionMismatch(format!("map output has dimension {}", out.dim())));
                }
                for o in 0..d_out {
                    for o2 in 0..d_out {
                        choi[(a * d_out + o, b * d_out + o2)] = out[(o, o2)];
                    }
                }
            }
        }
        Self::from_choi(d_in, d_out, choi)
    }

    pub fn zero(d_in: usize, d_out: usize) -> Self {
        HermitianPreservingMap {
            d_in,
            d_out,
            choi: Operator::zeros(d_in * d_out),
            structure: None,
        }
    }

    pub fn identity(d: usize) -> Self {
        Self::from_unitary_mixture(vec![Operator::identity(d)], vec![1.0]).expect("identity channel")
    }

    /// The completely depolarizing channel `X ↦ Tr(X)·I/d`.
    pub fn depolarizing(d: usize) -> Self {
        Self::from_choi(d, d, Operator::identity(d * d).scale(1.0 / d as f64)).expect("depolarizing channel")
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn choi(&self) -> &Operator {
        &self.choi
    }

    pub fn structure(&self) -> Option<&MapStructure> {
        self.structure.as_ref()
    }

    pub fn shape(&self) -> TensorShape {
        TensorShape::bipartite(self.d_in, self.d_out)
    }

    pub fn is_zero(&self) -> bool {
        self.choi.max_abs() == 0.0
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if (self.d_in, self.d_out) != (other.d_in, other.d_out) {
            return Err(Error::DimensionMismatch(format!(
                "maps {}→{} and {}→{} differ in shape",
                self.d_in, self.d_out, other.d_in, other.d_out
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let structure = match (&self.structure, &other.structure) {
            (Some(a), Some(b)) => Some(MapStructure::Difference(Box::new(a.clone()), Box::new(b.clone()))),
            _ => None,
        };
        Ok(HermitianPreservingMap {
            d_in: self.d_in,
            d_out: self.d_out,
            choi: &self.choi - &other.choi,
            structure,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(HermitianPreservingMap {
            d_in: self.d_in,
            d_out: self.d_out,
            choi: &self.choi + &other.choi,
            structure: None,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianPreservingMap {
            d_in: self.d_in,
            d_out: self.d_out,
            choi: self.choi.scale(s),
            structure: None,
        }
    }

    /// `Φ(X) = Σ_ab X_ab J_(a,b)`.
    pub fn apply(&self, x: &Operator) -> Result<Operator> {
        if x.dim() != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "map input has dimension {}, got {}",
                self.d_in,
                x.dim()
            )));
        }
        let (di, d) = (self.d_in, self.d_out);
        let mut out = Operator::zeros(d);
        for a in 0..di {
            for b in 0..di {
                let xab = x[(a, b)];
                if xab == C64::new(0.0, 0.0) {
                    continue;
                }
                for o in 0..d {
                    for o2 in 0..d {
                        out[(o, o2)] += xab * self.choi[(a * d + o, b * d + o2)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Adjoint with respect to `Tr(Y Φ(X)) = Tr(Φ*(Y) X)`: `Φ*(Y)_ab = Tr(Y J_(b,a))`.
    pub fn apply_adjoint(&self, y: &Operator) -> Result<Operator> {
        if y.dim() != self.d_out {
            return Err(Error::DimensionMismatch(format!(
                "adjoint input has dimension {}, got {}",
                self.d_out,
                y.dim()
            )));
        }
        let (di, d) = (self.d_in, self.d_out);
        Ok(Operator::from_fn(di, |a, b| {
            let mut acc = C64::new(0.0, 0.0);
            for o in 0..d {
                for o2 in 0..d {
                    acc += y[(o2, o)] * self.choi[(b * d + o, a * d + o2)];
                }
            }
            acc
        }))
    }

    /// `(Φ ⊗ id_k)(u u*)` for `u ∈ C^{d_in} ⊗ C^k`, returned on `C^k ⊗ C^{d_out}`.
    pub fn apply_extended(&self, u: &[C64], k: usize) -> Result<Operator> {
        if u.len() != self.d_in * k {
            return Err(Error::DimensionMismatch(format!(
                "extended input needs length {}, got {}",
                self.d_in * k,
                u.len()
            )));
        }
        // C[j, a] = u_(a, j)
        let c = DMatrix::from_fn(k, self.d_in, |j, a| u[a * k + j]);
        Ok(self.sandwich_rows(&c))
    }

    /// `(C ⊗ I) J (C* ⊗ I)` for a `k × d_in` matrix `C`, indexed `(j, o)`.
    pub(crate) fn sandwich_rows(&self, c: &DMatrix<C64>) -> Operator {
        let (k, di) = c.shape();
        let d = self.d_out;
        // left[(j,o),(b,o')] = Σ_a C[j,a] J[(a,o),(b,o')]
        let mut left = DMatrix::<C64>::zeros(k * d, di * d);
        for j in 0..k {
            for a in 0..di {
                let cja = c[(j, a)];
                if cja == C64::new(0.0, 0.0) {
                    continue;
                }
                for o in 0..d {
                    for col in 0..di * d {
                        left[(j * d + o, col)] += cja * self.choi[(a * d + o, col)];
                    }
                }
            }
        }
        let mut out = Operator::zeros(k * d);
        for j2 in 0..k {
            for b in 0..di {
                let cjb = c[(j2, b)].conj();
                if cjb == C64::new(0.0, 0.0) {
                    continue;
                }
                for o2 in 0..d {
                    for row in 0..k * d {
                        out[(row, j2 * d + o2)] += left[(row, b * d + o2)] * cjb;
                    }
                }
            }
        }
        out
    }

    /// Output partial trace `Tr_out J`.
    pub fn input_marginal(&self) -> Operator {
        partial_trace(&self.choi, &self.shape(), &[0]).expect("shape matches Choi")
    }

    /// Whether `Tr Φ(X) = 0` for every `X`.
    pub fn is_trace_annihilating(&self, tol: f64) -> bool {
        self.input_marginal().max_abs() <= tol * 1f64.max(self.choi.max_abs())
    }

    /// `Σ w (mode unitary) · (mode unitary)*` minus the exact twirl of the same mode.
    ///
    /// `ChannelTwirl` is not accepted here: it acts on Choi matrices rather
    /// than states.
    pub fn ensemble_deviation(ens: &UnitaryEnsemble, mode: TwirlMode) -> Result<Self> {
        let sampled = Self::ensemble_average(ens, mode)?;
        let d = ens.d();
        let exact = match mode {
            TwirlMode::TFold(t) => {
                let tw = Twirler::new(t, d)?;
                Self::from_choi(tw.dim(), tw.dim(), tw.choi())?
            }
            TwirlMode::UUbar => Self::from_fn(d * d, d * d, |x| exact_twirl_11(x, d))?,
            TwirlMode::ChannelTwirl => {
                return Err(Error::InvalidInput("channel twirl deviations act on Choi matrices".into()))
            }
        };
        sampled.sub(&exact)
    }

    /// `X ↦ Σ w V X V*` with `V` the mode unitary of each element.
    pub fn ensemble_average(ens: &UnitaryEnsemble, mode: TwirlMode) -> Result<Self> {
        let unitaries = ens.elements().iter().map(|u| mode_unitary(u, mode)).collect();
        Self::from_unitary_mixture(unitaries, ens.weights().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{clifford_ensemble, pauli_ensemble, sampled_twirl_apply};
    use crate::tensor::{derived_rng, gaussian_vector, ginibre_unitary, kron, StateVector};

    fn random_op(d: usize, seed: u64) -> Operator {
        Operator::from_row_major(d, &gaussian_vector(d * d, &mut derived_rng(seed, 2))).unwrap()
    }

    #[test]
    fn kraus_choi_and_apply_agree() {
        let mut rng = derived_rng(1, 1);
        let k1 = DMatrix::from_row_slice(3, 2, &gaussian_vector(6, &mut rng));
        let k2 = DMatrix::from_row_slice(3, 2, &gaussian_vector(6, &mut rng));
        let map = HermitianPreservingMap::from_kraus(2, 3, vec![k1.clone(), k2.clone()]).unwrap();
        let x = random_op(2, 4);
        let direct = &k1 * x.matrix() * k1.adjoint() + &k2 * x.matrix() * k2.adjoint();
        assert!(map.apply(&x).unwrap().max_abs_diff(&Operator::from_matrix(direct).unwrap()) < 1e-12);
    }

    #[test]
    fn adjoint_identity() {
        let u = ginibre_unitary(3, &mut derived_rng(2, 2));
        let map = HermitianPreservingMap::from_unitary_mixture(vec![u, Operator::identity(3)], vec![0.7, -0.2]).unwrap();
        let x = random_op(3, 5).hermitian_part();
        let y = random_op(3, 6).hermitian_part();
        let lhs = (&y * &map.apply(&x).unwrap()).trace();
        let rhs = (&map.apply_adjoint(&y).unwrap() * &x).trace();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn extended_application_matches_kron() {
        let d = 2;
        let k = 2;
        let u = ginibre_unitary(d, &mut derived_rng(3, 3));
        let map = HermitianPreservingMap::from_unitary_mixture(vec![u.clone()], vec![1.0]).unwrap();
        let v = StateVector::random(d * k, &mut derived_rng(4, 4));
        let out = map.apply_extended(&v.amplitudes, k).unwrap();
        // (U ⊗ I)|v⟩ reordered to (ancilla, output)
        let w = kron(&u, &Operator::identity(k)).apply(&v.amplitudes);
        let mut reordered = vec![C64::new(0.0, 0.0); d * k];
        for a in 0..d {
            for j in 0..k {
                reordered[j * d + a] = w[a * k + j];
            }
        }
        assert!(out.max_abs_diff(&Operator::projector(&reordered)) < 1e-12);
    }

    #[test]
    fn structured_and_unstructured_constructions() {
        let id = HermitianPreservingMap::identity(3);
        let psi = StateVector::max_entangled(3).projector().scale(3.0);
        assert!(id.choi().max_abs_diff(&psi) < 1e-14);
        let dep = HermitianPreservingMap::depolarizing(3);
        let diff = id.sub(&dep).unwrap();
        assert!(diff.is_trace_annihilating(1e-12));
        assert!(!id.is_trace_annihilating(1e-12));
        let rho = random_op(3, 8).hermitian_part();
        assert!(dep.apply(&rho).unwrap().max_abs_diff(&Operator::identity(3).scale_c(rho.trace() / 3.0)) < 1e-13);
        assert!(HermitianPreservingMap::from_choi(2, 2, random_op(4, 1)).is_err());
    }

    #[test]
    fn ensemble_deviations() {
        let c1 = clifford_ensemble(1).unwrap();
        for mode in [TwirlMode::TFold(1), TwirlMode::TFold(2), TwirlMode::UUbar] {
            let dev = HermitianPreservingMap::ensemble_deviation(&c1, mode).unwrap();
            assert!(dev.choi().max_abs() < 1e-12, "{mode:?}");
        }
        let pauli = pauli_ensemble(2).unwrap();
        let avg = HermitianPreservingMap::ensemble_average(&pauli, TwirlMode::UUbar).unwrap();
        let x = random_op(4, 9);
        let direct = sampled_twirl_apply(&pauli, &x, TwirlMode::UUbar).unwrap();
        assert!(avg.apply(&x).unwrap().max_abs_diff(&direct) < 1e-13);
        assert!(HermitianPreservingMap::ensemble_deviation(&pauli, TwirlMode::TFold(2)).unwrap().choi().max_abs() > 0.1);
    }
}

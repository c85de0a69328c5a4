//! Exact Haar twirls and the representation theory behind them.
//!
//! The t-fold twirl `X ↦ ∫ U^{⊗t} X U^{*⊗t} dU` is the orthogonal projection
//! onto the commutant of `U^{⊗t}`, which by Schur-Weyl duality is spanned by
//! the permutation operators `P_σ`, `σ ∈ S_t`. [`Twirler`] computes it by
//! solving the Gram system of those operators; the Schur-Weyl isometry
//! itself is never built.

use std::fmt;

use nalgebra::DMatrix;
use num::{BigInt, BigRational, BigUint, One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::tensor::{
    eig_hermitian, partial_trace, partial_transpose, Operator, StateVector, TensorShape, C64, ONE, ZERO,
};

/// Largest tensor power accepted by default.
pub const MAX_T: usize = 6;
/// Largest `d^t` accepted by default.
pub const MAX_TWIRL_DIM: usize = 4096;
/// Gram systems up to this `t` are inverted in exact rational arithmetic.
const EXACT_GRAM_MAX_T: usize = 4;

/// A weakly decreasing tuple of `d` nonnegative parts summing to `t`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    parts: Vec<usize>,
}

impl Partition {
    /// Pads with zeros to length `d`; fails when `parts` is not weakly
    /// decreasing or has more than `d` nonzero parts.
    pub fn new(parts: &[usize], d: usize) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(format!("{parts:?} is not weakly decreasing")));
        }
        let nonzero = parts.iter().take_while(|&&p| p > 0).count();
        if nonzero > d || parts[nonzero..].iter().any(|&p| p > 0) {
            return Err(Error::InvalidInput(format!("{parts:?} has more than {d} parts")));
        }
        let mut padded = parts[..nonzero].to_vec();
        padded.resize(d, 0);
        Ok(Partition { parts: padded })
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn size(&self) -> usize {
        self.parts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// All partitions of `t` into at most `d` parts, lexicographically descending.
pub fn partitions(t: usize, d: usize) -> Vec<Partition> {
    fn rec(remaining: usize, max_part: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining == 0 {
            out.push(cur.clone());
            return;
        }
        if slots == 0 {
            return;
        }
        for p in (1..=remaining.min(max_part)).rev() {
            cur.push(p);
            rec(remaining - p, p, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(t, t, d, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|p| Partition::new(&p, d).expect("generated partitions are valid"))
        .collect()
}

/// Dimension of the Weyl module `V_λ` of `U(d)`:
/// `∏_{i<j≤d} (λ_i − λ_j + j − i)/(j − i)`, in exact integer arithmetic.
pub fn weyl_dimension(lambda: &Partition, d: usize) -> Result<u128> {
    if lambda.len() != d {
        return Err(Error::InvalidInput(format!(
            "partition {lambda} has {} parts, expected {d}",
            lambda.len()
        )));
    }
    let l = lambda.parts();
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..d {
        for j in (i + 1)..d {
            num *= BigUint::from(l[i] - l[j] + j - i);
            den *= BigUint::from(j - i);
        }
    }
    debug_assert!((&num % &den).is_zero());
    (num / den)
        .to_u128()
        .ok_or_else(|| Error::Overflow(format!("Weyl dimension of {lambda} at d={d}")))
}

/// Dimension of the Specht module `[λ]` by the hook-length formula.
pub fn specht_dimension(lambda: &Partition) -> u128 {
    let rows: Vec<usize> = lambda.parts().iter().copied().filter(|&p| p > 0).collect();
    let n: usize = rows.iter().sum();
    let mut hooks = BigUint::one();
    for (i, &row) in rows.iter().enumerate() {
        for j in 0..row {
            let arm = row - j - 1;
            let leg = rows[i + 1..].iter().filter(|&&r| r > j).count();
            hooks *= BigUint::from(arm + leg + 1);
        }
    }
    let mut fact = BigUint::one();
    for k in 2..=n {
        fact *= BigUint::from(k);
    }
    (fact / hooks).to_u128().expect("small symmetric group")
}

/// A permutation of `{0, .., t-1}`; `images[i]` is the image of `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput(format!("{images:?} is not a bijection")));
            }
        }
        Ok(Permutation { images })
    }

    pub fn identity(t: usize) -> Self {
        Permutation { images: (0..t).collect() }
    }

    /// Swaps `a` and `b` (0-based).
    pub fn transposition(t: usize, a: usize, b: usize) -> Self {
        let mut images: Vec<usize> = (0..t).collect();
        images.swap(a, b);
        Permutation { images }
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.images.len()];
        for (i, &j) in self.images.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { images: inv }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Self {
        Permutation {
            images: other.images.iter().map(|&j| self.images[j]).collect(),
        }
    }

    pub fn cycle_count(&self) -> usize {
        let mut seen = vec![false; self.images.len()];
        let mut cycles = 0;
        for start in 0..self.images.len() {
            if seen[start] {
                continue;
            }
            cycles += 1;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.images[i];
            }
        }
        cycles
    }

    /// All of `S_t` in lexicographic order of image tuples.
    pub fn all(t: usize) -> Vec<Permutation> {
        fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
            if cur.len() == used.len() {
                out.push(Permutation { images: cur.clone() });
                return;
            }
            for i in 0..used.len() {
                if !used[i] {
                    used[i] = true;
                    cur.push(i);
                    rec(cur, used, out);
                    cur.pop();
                    used[i] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; t], &mut out);
        out
    }

    /// Flat-index map of `P_σ` on `(C^d)^{⊗t}`: `P_σ|a⟩ = |map[a]⟩`.
    ///
    /// `σ.|φ_1⟩⊗…⊗|φ_t⟩ = |φ_{σ⁻¹(1)}⟩⊗…⊗|φ_{σ⁻¹(t)}⟩`, so the factor in
    /// position `j` moves to position `σ(j)`.
    fn index_map(&self, d: usize) -> Vec<usize> {
        let t = self.degree();
        let dim = d.pow(t as u32);
        let mut digits = vec![0; t];
        let mut out_digits = vec![0; t];
        (0..dim)
            .map(|mut a| {
                for k in (0..t).rev() {
                    digits[k] = a % d;
                    a /= d;
                }
                for j in 0..t {
                    out_digits[self.images[j]] = digits[j];
                }
                out_digits.iter().fold(0, |acc, &x| acc * d + x)
            })
            .collect()
    }
}

/// The operator `P_σ` on `(C^d)^{⊗t}`.
pub fn permutation_operator(sigma: &Permutation, d: usize) -> Operator {
    let map = sigma.index_map(d);
    let mut op = Operator::zeros(map.len());
    for (a, &b) in map.iter().enumerate() {
        op[(b, a)] = ONE;
    }
    op
}

/// Precomputed data for the exact t-fold twirl at fixed `(t, d)`.
///
/// Immutable after construction, so one instance can be shared across threads.
#[derive(Clone, Debug)]
pub struct Twirler {
    t: usize,
    d: usize,
    perms: Vec<Permutation>,
    maps: Vec<Vec<usize>>,
    /// `c = coeff · v` solves the Gram system for any `v` in its range.
    coeff: DMatrix<f64>,
}

impl Twirler {
    pub fn new(t: usize, d: usize) -> Result<Self> {
        Self::with_caps(t, d, MAX_T, MAX_TWIRL_DIM)
    }

    pub fn with_caps(t: usize, d: usize, max_t: usize, max_dim: usize) -> Result<Self> {
        if t == 0 || d == 0 {
            return Err(Error::InvalidInput("t and d must be positive".into()));
        }
        if t > max_t {
            return Err(Error::CapExceeded(format!("t = {t} exceeds cap {max_t}")));
        }
        let dim = (d as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
        if dim > max_dim as u128 {
            return Err(Error::CapExceeded(format!("d^t = {d}^{t} exceeds cap {max_dim}")));
        }
        let perms = Permutation::all(t);
        let maps = perms.iter().map(|p| p.index_map(d)).collect();
        let coeff = if t <= EXACT_GRAM_MAX_T {
            exact_gram_inverse(&perms, d)
        } else {
            float_gram_pinv(&perms, d)
        };
        Ok(Twirler { t, d, perms, maps, coeff })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.d.pow(self.t as u32)
    }

    pub fn permutations(&self) -> &[Permutation] {
        &self.perms
    }

    /// Coefficients `c_σ` of the twirl of `x` in the `P_σ` spanning set.
    pub fn coefficients(&self, x: &Operator) -> Result<Vec<C64>> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "twirl on {}^{} needs dimension {}, got {}",
                self.d,
                self.t,
                self.dim(),
                x.dim()
            )));
        }
        // v_σ = Tr(P_σ* X) = Σ_a X[σ·a, a]
        let v: Vec<C64> = self
            .maps
            .iter()
            .map(|m| m.iter().enumerate().map(|(a, &b)| x[(b, a)]).sum())
            .collect();
        Ok(self.solve(&v))
    }

    fn solve(&self, v: &[C64]) -> Vec<C64> {
        let n = v.len();
        (0..n)
            .map(|s| (0..n).map(|k| v[k] * self.coeff[(s, k)]).sum())
            .collect()
    }

    fn assemble(&self, c: &[C64]) -> Operator {
        let mut out = Operator::zeros(self.dim());
        for (map, &cs) in self.maps.iter().zip(c) {
            if cs == ZERO {
                continue;
            }
            for (a, &b) in map.iter().enumerate() {
                out[(b, a)] += cs;
            }
        }
        out
    }

    /// The exact Haar twirl `T^{(t)}(x)`.
    pub fn twirl(&self, x: &Operator) -> Result<Operator> {
        let c = self.coefficients(x)?;
        Ok(self.assemble(&c))
    }

    /// `T^{(t)}(|a⟩⟨b|)`.
    pub fn twirl_matrix_unit(&self, a: usize, b: usize) -> Operator {
        // Tr(P_σ* |a⟩⟨b|) = [σ·b = a]
        let v: Vec<C64> = self.maps.iter().map(|m| if m[b] == a { ONE } else { ZERO }).collect();
        self.assemble(&self.solve(&v))
    }

    /// Choi matrix `Σ_{ab} E_ab ⊗ T^{(t)}(E_ab)` of the twirl.
    pub fn choi(&self) -> Operator {
        let dim = self.dim();
        let mut choi = Operator::zeros(dim * dim);
        for a in 0..dim {
            for b in 0..dim {
                let block = self.twirl_matrix_unit(a, b);
                for o1 in 0..dim {
                    for o2 in 0..dim {
                        choi[(a * dim + o1, b * dim + o2)] = block[(o1, o2)];
                    }
                }
            }
        }
        choi
    }
}

fn gram_entries(perms: &[Permutation]) -> Vec<Vec<u32>> {
    perms
        .iter()
        .map(|s| {
            let sinv = s.inverse();
            perms.iter().map(|t| sinv.compose(t).cycle_count() as u32).collect()
        })
        .collect()
}

/// Generalized inverse of the Gram matrix `G[σ,τ] = d^{#cycles(σ⁻¹τ)}` in
/// exact rationals: invert the principal block on a maximal independent set
/// of columns and zero the rest. Any solution of `Gc = v` gives the same
/// operator `Σ c_σ P_σ`, so this also covers singular `G` (`d < t`).
fn exact_gram_inverse(perms: &[Permutation], d: usize) -> DMatrix<f64> {
    let n = perms.len();
    let cycles = gram_entries(perms);
    let dd = BigInt::from(d);
    let g: Vec<Vec<BigRational>> = cycles
        .iter()
        .map(|row| row.iter().map(|&c| BigRational::from_integer(num::pow(dd.clone(), c as usize))).collect())
        .collect();

    // Greedy independent columns by incremental row reduction.
    let mut basis: Vec<usize> = Vec::new();
    let mut reduced: Vec<Vec<BigRational>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    for col in 0..n {
        let mut v: Vec<BigRational> = (0..n).map(|r| g[r][col].clone()).collect();
        for (rv, &p) in reduced.iter().zip(&pivots) {
            if !v[p].is_zero() {
                let f = &v[p] / &rv[p];
                for k in 0..n {
                    let delta = &f * &rv[k];
                    v[k] -= delta;
                }
            }
        }
        if let Some(p) = (0..n).find(|&k| !v[k].is_zero()) {
            basis.push(col);
            pivots.push(p);
            reduced.push(v);
        }
    }

    // Gauss-Jordan on the principal block G_BB.
    let m = basis.len();
    let mut a: Vec<Vec<BigRational>> = basis
        .iter()
        .map(|&r| {
            let mut row: Vec<BigRational> = basis.iter().map(|&c| g[r][c].clone()).collect();
            row.extend((0..m).map(|k| if k == basis.iter().position(|&b| b == r).unwrap() {
                BigRational::one()
            } else {
                BigRational::zero()
            }));
            row
        })
        .collect();
    for col in 0..m {
        let piv = (col..m).find(|&r| !a[r][col].is_zero()).expect("principal block is nonsingular");
        a.swap(col, piv);
        let inv = BigRational::one() / &a[col][col];
        for k in 0..2 * m {
            a[col][k] = &a[col][k] * &inv;
        }
        for r in 0..m {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for k in 0..2 * m {
                    let delta = &f * &a[col][k];
                    a[r][k] -= delta;
                }
            }
        }
    }
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (i, &bi) in basis.iter().enumerate() {
        for (j, &bj) in basis.iter().enumerate() {
            out[(bi, bj)] = a[i][m + j].to_f64().expect("finite rational");
        }
    }
    out
}

fn float_gram_pinv(perms: &[Permutation], d: usize) -> DMatrix<f64> {
    let cycles = gram_entries(perms);
    let n = perms.len();
    let g = DMatrix::from_fn(n, n, |i, j| (d as f64).powi(cycles[i][j] as i32));
    let scale = g.amax();
    g.pseudo_inverse(1e-12 * scale).expect("pseudo-inverse with nonnegative epsilon")
}

/// Convenience wrapper building a [`Twirler`] for a single call.
pub fn exact_twirl(x: &Operator, t: usize, d: usize) -> Result<Operator> {
    Twirler::new(t, d)?.twirl(x)
}

/// `sup_ρ ‖T^{(t)}(ρ)‖_∞ = 1/min_λ m_λ`, together with the `(2t/d)^t` bound.
#[derive(Clone, Debug, PartialEq)]
pub struct TwirlNormBound {
    pub t: usize,
    pub d: usize,
    pub norm: BigRational,
    pub bound: BigRational,
    pub minimizing_partition: Partition,
}

impl TwirlNormBound {
    /// Whether the norm respects `(2t/d)^t`; only claimed for `t < d`.
    pub fn bound_holds(&self) -> Option<bool> {
        (self.t < self.d).then(|| self.norm <= self.bound)
    }
}

pub fn twirl_one_to_infty_norm(t: usize, d: usize) -> Result<TwirlNormBound> {
    if t == 0 || d == 0 {
        return Err(Error::InvalidInput("t and d must be positive".into()));
    }
    let mut best: Option<(u128, Partition)> = None;
    for lambda in partitions(t, d) {
        let m = weyl_dimension(&lambda, d)?;
        if best.as_ref().is_none_or(|(bm, _)| m < *bm) {
            best = Some((m, lambda));
        }
    }
    let (min_dim, lambda) = best.expect("at least one partition");
    let norm = BigRational::new(BigInt::one(), BigInt::from(min_dim));
    let bound = BigRational::new(
        num::pow(BigInt::from(2 * t), t),
        num::pow(BigInt::from(d), t),
    );
    Ok(TwirlNormBound {
        t,
        d,
        norm,
        bound,
        minimizing_partition: lambda,
    })
}

/// Fixed operators on `C^d ⊗ C^d`.
#[derive(Clone, Debug)]
pub struct CanonicalOperators {
    pub d: usize,
    pub max_entangled: StateVector,
    pub psi_proj: Operator,
    pub q_proj: Operator,
    pub flip: Operator,
    pub sym_proj: Operator,
    pub antisym_proj: Operator,
}

pub fn canonical_operators(d: usize) -> Result<CanonicalOperators> {
    if d < 2 {
        return Err(Error::InvalidInput("canonical operators need d >= 2".into()));
    }
    let psi = StateVector::max_entangled(d);
    let psi_proj = psi.projector();
    let id = Operator::identity(d * d);
    let flip = permutation_operator(&Permutation::transposition(2, 0, 1), d);
    Ok(CanonicalOperators {
        d,
        q_proj: &id - &psi_proj,
        sym_proj: (&id + &flip).scale(0.5),
        antisym_proj: (&id - &flip).scale(0.5),
        max_entangled: psi,
        psi_proj,
        flip,
    })
}

/// The `U ⊗ Ū` twirl: `⟨ψ|X|ψ⟩ ψψ + Tr(QX)/(d²−1) Q`.
pub fn exact_twirl_11(x: &Operator, d: usize) -> Result<Operator> {
    if d < 2 {
        return Err(Error::InvalidInput("U ⊗ Ū twirl needs d >= 2".into()));
    }
    if x.dim() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "U ⊗ Ū twirl at d={d} needs dimension {}, got {}",
            d * d,
            x.dim()
        )));
    }
    let psi = StateVector::max_entangled(d);
    let on_psi = x.sandwich(&psi.amplitudes, &psi.amplitudes);
    let psi_proj = psi.projector();
    let q = &Operator::identity(d * d) - &psi_proj;
    let on_q = (x.trace() - on_psi) / ((d * d - 1) as f64);
    Ok(&psi_proj.scale_c(on_psi) + &q.scale_c(on_q))
}

/// Validates that `choi` (input factor first) is the Choi matrix of a channel on `L(d)`.
pub fn check_channel_choi(choi: &Operator, d_in: usize, d_out: usize, tol: f64) -> Result<()> {
    if choi.dim() != d_in * d_out {
        return Err(Error::DimensionMismatch(format!(
            "Choi matrix of a map {d_in}→{d_out} has dimension {}, got {}",
            d_in * d_out,
            choi.dim()
        )));
    }
    let (vals, _) = eig_hermitian(choi).map_err(|e| Error::NotAChannel(e.to_string()))?;
    let scale = 1.0f64.max(vals.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    if vals[0] < -tol * scale {
        return Err(Error::NotAChannel(format!("Choi matrix has eigenvalue {:.3e}", vals[0])));
    }
    let marginal = partial_trace(choi, &TensorShape::bipartite(d_in, d_out), &[0])?;
    let dev = marginal.max_abs_diff(&Operator::identity(d_in));
    if dev > tol * scale {
        return Err(Error::NotAChannel(format!("input marginal deviates from identity by {dev:.3e}")));
    }
    Ok(())
}

/// Choi matrix of `Θ(N)`, the Haar channel twirl of `N`.
///
/// The Choi matrix of `X ↦ U N(U* X U) U*` is `(Ū ⊗ U) J (Ū ⊗ U)*`; its Haar
/// average has the same closed form as the `U ⊗ Ū` twirl.
pub fn channel_twirl_exact(choi: &Operator, d: usize) -> Result<Operator> {
    check_channel_choi(choi, d, d, 1e-9)?;
    exact_twirl_11(choi, d)
}

/// Weight `p` of the identity in `Θ(N) = p·id + (1−p)·⟨I/d⟩`:
/// `(f − 1/d²)/(1 − 1/d²)` with `f = ⟨ψ|J/d|ψ⟩` the entanglement fidelity.
pub fn channel_twirl_identity_weight(choi: &Operator, d: usize) -> Result<f64> {
    if choi.dim() != d * d {
        return Err(Error::DimensionMismatch(format!("expected Choi dimension {}", d * d)));
    }
    let psi = StateVector::max_entangled(d);
    let f = choi.sandwich(&psi.amplitudes, &psi.amplitudes).re / d as f64;
    let inv = 1.0 / (d * d) as f64;
    Ok((f - inv) / (1.0 - inv))
}

/// `Γ ∘ T^{(2)} ∘ Γ`, the partial-transpose route to the `U ⊗ Ū` twirl.
pub fn twirl_11_via_partial_transpose(x: &Operator, d: usize) -> Result<Operator> {
    let shape = TensorShape::bipartite(d, d);
    let xg = partial_transpose(x, &shape, 1)?;
    partial_transpose(&exact_twirl(&xg, 2, d)?, &shape, 1)
}

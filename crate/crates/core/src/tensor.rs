//! Dense complex linear algebra and tensor-structure primitives.
//!
//! Tensor indices follow the row-major block convention everywhere in the
//! crate: for a space `C^{d_1} ⊗ ... ⊗ C^{d_k}` the basis vector
//! `|i_1, ..., i_k⟩` has flat index `((i_1·d_2 + i_2)·d_3 + ...)·d_k + i_k`,
//! i.e. factor 1 is outermost. `kron(A, B)[(i·dB + k), (j·dB + l)] = A[i,j]·B[k,l]`.

use std::ops::{Add, AddAssign, Deref, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Asymmetry above which a matrix handed to [`eig_hermitian`] is rejected.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Deterministic random stream `stream` derived from a base seed.
///
/// Streams are independent ChaCha20 streams keyed by the same seed, so
/// workers can derive their generators from a counter without sharing state.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A dense complex square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl Operator {
    /// Wraps a matrix, checking it is square, non-empty and finite.
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("operator has non-finite entries".into()));
        }
        Ok(Operator(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Operator(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Operator(DMatrix::from_fn(dim, dim, f))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Operator::from_fn(n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO })
    }

    /// Builds an operator from row-major entries.
    pub fn from_row_major(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} operator, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Operator::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn to_row_major(&self) -> Vec<C64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    /// `|u⟩⟨v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len());
        Operator::from_fn(u.len(), |i, j| u[i] * v[j].conj())
    }

    /// Projector onto a (not necessarily normalized) vector: `|u⟩⟨u|`.
    pub fn projector(u: &[C64]) -> Self {
        Operator::outer(u, u)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn dagger(&self) -> Self {
        Operator(self.0.adjoint())
    }

    pub fn conj(&self) -> Self {
        Operator(self.0.map(|z| z.conj()))
    }

    pub fn transpose(&self) -> Self {
        Operator(self.0.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `(X + X*)/2`.
    pub fn hermitian_part(&self) -> Self {
        Operator((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    /// Largest entry-wise modulus of `X − X*`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_asymmetry() <= tol
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hilbert-Schmidt inner product `Tr(A* B)`.
    pub fn hs_inner(&self, other: &Operator) -> C64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        let gram = Operator(self.0.adjoint() * &self.0);
        let (vals, _) = eig_hermitian_unchecked(&gram);
        vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    /// Operator norm of a Hermitian matrix (max |eigenvalue|).
    pub fn operator_norm_hermitian(&self) -> Result<f64> {
        let (vals, _) = eig_hermitian(self)?;
        Ok(vals.iter().map(|v| v.abs()).fold(0.0, f64::max))
    }

    /// Trace norm of a Hermitian matrix (sum of |eigenvalues|).
    pub fn trace_norm_hermitian(&self) -> Result<f64> {
        let (vals, _) = eig_hermitian(self)?;
        Ok(vals.iter().map(|v| v.abs()).sum())
    }

    /// `‖U*U − I‖` entry-wise maximum.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = Operator(self.0.adjoint() * &self.0);
        prod.max_abs_diff(&Operator::identity(self.dim()))
    }

    /// `U X U*`.
    pub fn conjugate(&self, x: &Operator) -> Operator {
        Operator(&self.0 * &x.0 * self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator(&self.0 * C64::new(s, 0.0))
    }

    pub fn scale_c(&self, s: C64) -> Operator {
        Operator(&self.0 * s)
    }

    /// Applies the matrix to a vector.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let vec = DVector::from_column_slice(v);
        (&self.0 * vec).iter().copied().collect()
    }

    /// `⟨u|X|v⟩`.
    pub fn sandwich(&self, u: &[C64], v: &[C64]) -> C64 {
        let xv = self.apply(v);
        u.iter().zip(xv.iter()).map(|(a, b)| a.conj() * b).sum()
    }
}

impl Deref for Operator {
    type Target = DMatrix<C64>;
    fn deref(&self) -> &DMatrix<C64> {
        &self.0
    }
}

impl std::ops::Index<(usize, usize)> for Operator {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Operator {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-&self.0)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += &rhs.0;
    }
}

/// A vector of amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Self {
        StateVector { amplitudes }
    }

    /// Normalizes the input; fails on the zero vector.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let n = norm(&amplitudes);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidInput("cannot normalize zero vector".into()));
        }
        amplitudes.iter_mut().for_each(|a| *a /= n);
        Ok(StateVector { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-12
    }

    pub fn projector(&self) -> Operator {
        Operator::projector(&self.amplitudes)
    }

    /// Standard maximally entangled state `Σ_i |ii⟩/√d`.
    pub fn max_entangled(d: usize) -> Self {
        let mut amps = vec![ZERO; d * d];
        let c = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        for i in 0..d {
            amps[i * d + i] = c;
        }
        StateVector { amplitudes: amps }
    }

    /// Haar-random pure state.
    pub fn random(dim: usize, rng: &mut impl rand::Rng) -> Self {
        let amps = gaussian_vector(dim, rng);
        StateVector::normalized(amps).expect("gaussian vector is nonzero")
    }
}

pub(crate) fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn gaussian_vector(dim: usize, rng: &mut impl rand::Rng) -> Vec<C64> {
    (0..dim)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im)
        })
        .collect()
}

/// Ordered tensor factor dimensions of an operator's underlying space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorShape {
    factors: Vec<usize>,
}

impl TensorShape {
    pub fn new(factors: Vec<usize>) -> Result<Self> {
        if factors.is_empty() || factors.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid tensor shape {factors:?}")));
        }
        Ok(TensorShape { factors })
    }

    pub fn bipartite(a: usize, b: usize) -> Self {
        TensorShape::new(vec![a, b]).expect("nonzero factors")
    }

    pub fn uniform(d: usize, copies: usize) -> Self {
        TensorShape::new(vec![d; copies]).expect("nonzero factors")
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().product()
    }

    fn check(&self, x: &Operator) -> Result<()> {
        if self.dim() != x.dim() {
            return Err(Error::DimensionMismatch(format!(
                "shape {:?} has dimension {}, operator has {}",
                self.factors,
                self.dim(),
                x.dim()
            )));
        }
        Ok(())
    }

    /// Splits a flat index into per-factor digits.
    fn digits(&self, mut idx: usize, out: &mut [usize]) {
        for (k, &f) in self.factors.iter().enumerate().rev() {
            out[k] = idx % f;
            idx /= f;
        }
    }
}

fn flat_index(factors: &[usize], digits: impl Iterator<Item = usize>) -> usize {
    let mut idx = 0;
    for (f, dgt) in factors.iter().zip(digits) {
        idx = idx * f + dgt;
    }
    idx
}

/// Kronecker product in row-major block order.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator(a.0.kronecker(&b.0))
}

/// `U^{⊗t}`.
pub fn kron_power(u: &Operator, t: usize) -> Operator {
    assert!(t >= 1);
    let mut out = u.clone();
    for _ in 1..t {
        out = kron(&out, u);
    }
    out
}

/// Traces out every factor not listed in `keep`; kept factors stay in their original order.
pub fn partial_trace(x: &Operator, shape: &TensorShape, keep: &[usize]) -> Result<Operator> {
    shape.check(x)?;
    let nf = shape.factors.len();
    if let Some(&bad) = keep.iter().find(|&&k| k >= nf) {
        return Err(Error::DimensionMismatch(format!(
            "factor index {bad} out of range for {nf} factors"
        )));
    }
    let mut keep_sorted: Vec<usize> = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    let kept_factors: Vec<usize> = keep_sorted.iter().map(|&k| shape.factors[k]).collect();
    let out_dim: usize = kept_factors.iter().product();
    let mut is_kept = vec![false; nf];
    for &k in &keep_sorted {
        is_kept[k] = true;
    }

    let d = x.dim();
    let mut out = DMatrix::<C64>::zeros(out_dim, out_dim);
    let mut rd = vec![0; nf];
    let mut cd = vec![0; nf];
    for r in 0..d {
        shape.digits(r, &mut rd);
        for c in 0..d {
            shape.digits(c, &mut cd);
            if (0..nf).any(|k| !is_kept[k] && rd[k] != cd[k]) {
                continue;
            }
            let ro = flat_index(&kept_factors, keep_sorted.iter().map(|&k| rd[k]));
            let co = flat_index(&kept_factors, keep_sorted.iter().map(|&k| cd[k]));
            out[(ro, co)] += x.0[(r, c)];
        }
    }
    Ok(Operator(out))
}

/// Transposes factor `which` of a bipartite operator in the computational basis.
pub fn partial_transpose(x: &Operator, shape: &TensorShape, which: usize) -> Result<Operator> {
    shape.check(x)?;
    if shape.factors.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "partial transpose needs a bipartite shape, got {:?}",
            shape.factors
        )));
    }
    if which > 1 {
        return Err(Error::InvalidInput(format!("factor index {which} is not 0 or 1")));
    }
    let db = shape.factors[1];
    Ok(Operator::from_fn(x.dim(), |r, c| {
        let (i, k) = (r / db, r % db);
        let (j, l) = (c / db, c % db);
        let (i2, j2, k2, l2) = if which == 0 { (j, i, k, l) } else { (i, j, l, k) };
        x.0[(i2 * db + k2, j2 * db + l2)]
    }))
}

/// Reorders tensor factors: factor `k` of the result is factor `order[k]` of the input.
pub fn permute_factors(x: &Operator, shape: &TensorShape, order: &[usize]) -> Result<(Operator, TensorShape)> {
    shape.check(x)?;
    let nf = shape.factors.len();
    let mut seen = vec![false; nf];
    if order.len() != nf || order.iter().any(|&k| k >= nf || std::mem::replace(&mut seen[k], true)) {
        return Err(Error::InvalidInput(format!("{order:?} is not a permutation of 0..{nf}")));
    }
    let new_factors: Vec<usize> = order.iter().map(|&k| shape.factors[k]).collect();
    let map = factor_permutation_map(shape, order);
    let d = x.dim();
    let mut out = DMatrix::<C64>::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            out[(map[r], map[c])] = x.0[(r, c)];
        }
    }
    Ok((Operator(out), TensorShape { factors: new_factors }))
}

/// Flat-index map old → new for a factor reordering.
pub(crate) fn factor_permutation_map(shape: &TensorShape, order: &[usize]) -> Vec<usize> {
    let nf = shape.factors.len();
    let new_factors: Vec<usize> = order.iter().map(|&k| shape.factors[k]).collect();
    let mut digits = vec![0; nf];
    (0..shape.dim())
        .map(|idx| {
            shape.digits(idx, &mut digits);
            flat_index(&new_factors, order.iter().map(|&k| digits[k]))
        })
        .collect()
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// The input is symmetrized as `(X + X*)/2` when its asymmetry is within
/// [`HERMITIAN_TOL`]; larger asymmetry is an error.
pub fn eig_hermitian(x: &Operator) -> Result<(Vec<f64>, Operator)> {
    let asym = x.hermitian_asymmetry();
    let scale = 1.0f64.max(x.max_abs());
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian {
            asymmetry: asym,
            tolerance: HERMITIAN_TOL * scale,
        });
    }
    Ok(eig_hermitian_unchecked(x))
}

/// Same as [`eig_hermitian`] but symmetrizes without checking.
pub(crate) fn eig_hermitian_unchecked(x: &Operator) -> (Vec<f64>, Operator) {
    let h = x.hermitian_part();
    let eig = SymmetricEigen::new(h.0);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, Operator(vecs))
}

/// Column `k` of a matrix as a vector.
pub(crate) fn column(m: &Operator, k: usize) -> Vec<C64> {
    m.0.column(k).iter().copied().collect()
}

/// Haar-random unitary: QR of a complex Ginibre matrix with the phases of
/// `diag(R)` moved into `Q`.
pub fn ginibre_unitary(d: usize, rng: &mut impl rand::Rng) -> Operator {
    assert!(d >= 1, "dimension must be positive");
    let entries = gaussian_vector(d * d, rng);
    let g = DMatrix::from_row_slice(d, d, &entries);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let phases: Vec<C64> = (0..d)
        .map(|k| {
            let z = r[(k, k)];
            if z.norm() == 0.0 {
                ONE
            } else {
                z / z.norm()
            }
        })
        .collect();
    Operator(DMatrix::from_fn(d, d, |i, j| q[(i, j)] * phases[j]))
}

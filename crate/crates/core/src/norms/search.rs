//! Multi-restart alternating ascent for the nonconvex norm suprema.
//!
//! Each restart alternates between fixing the input and taking the best
//! output observable for it, then re-optimizing the input against that
//! observable. Every step is monotone, so a restart can only improve.
//! Restarts run in parallel with per-restart derived seeds and are merged
//! by maximum, lowest restart index winning ties.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::map::HermitianPreservingMap;
use super::report::NormReport;
use crate::error::{Error, Result};
use crate::tensor::{
    column, derived_rng, eig_hermitian, eig_hermitian_unchecked, gaussian_vector, norm, Operator, StateVector, C64,
    ZERO,
};

#[derive(Clone, Copy, Debug)]
pub struct SearchOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop a restart once an iteration improves the value by less than this (relative).
    pub rel_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            restarts: 64,
            seed: 0,
            max_iter: 500,
            rel_tol: 1e-14,
        }
    }
}

impl SearchOptions {
    pub fn with_restarts(restarts: usize, seed: u64) -> Self {
        SearchOptions {
            restarts,
            seed,
            ..Self::default()
        }
    }
}

/// Domain of the pure input state for the 1→∞ search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subspace {
    All,
    /// Inputs on `C^d ⊗ C^d` orthogonal to the maximally entangled state.
    OrthogonalToMaxEntangled,
}

fn best_of<T: Send>(restarts: usize, f: impl Fn(usize) -> (f64, T) + Sync + Send) -> (f64, T) {
    let results: Vec<(f64, T)> = (0..restarts.max(1)).into_par_iter().map(f).collect();
    let mut best: Option<(f64, T)> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| r.0 > b.0) {
            best = Some(r);
        }
    }
    best.expect("at least one restart")
}

fn converged(old: f64, new: f64, rel_tol: f64) -> bool {
    new - old <= rel_tol * 1f64.max(new.abs())
}

fn top_eigvec(h: &Operator) -> (f64, Vec<C64>) {
    let (vals, vecs) = eig_hermitian_unchecked(h);
    let n = vals.len();
    (vals[n - 1], column(&vecs, n - 1))
}

/// `Σ |λ|` together with `sign(X)`.
fn trace_norm_and_sign(x: &Operator) -> (f64, Operator) {
    let (vals, vecs) = eig_hermitian_unchecked(x);
    let signs: Vec<f64> = vals.iter().map(|&l| if l > 0.0 { 1.0 } else if l < 0.0 { -1.0 } else { 0.0 }).collect();
    let p = &vecs * &(&Operator::from_real_diagonal(&signs) * &vecs.dagger());
    (vals.iter().map(|l| l.abs()).sum(), p)
}

/// `‖(Φ ⊗ id_k)(u u*)‖₁` for `u ∈ C^{d_in} ⊗ C^k`.
pub fn evaluate_trace_norm(m: &HermitianPreservingMap, u: &[C64], k: usize) -> Result<f64> {
    m.apply_extended(u, k)?.trace_norm_hermitian()
}

/// `‖Φ(ψψ*)‖_∞`.
pub fn evaluate_operator_norm(m: &HermitianPreservingMap, psi: &[C64]) -> Result<f64> {
    m.apply(&Operator::projector(psi))?.operator_norm_hermitian()
}

/// `‖Φ(Y)‖_∞` for `Y` given row-major.
pub fn evaluate_spectral_norm(m: &HermitianPreservingMap, y: &[C64]) -> Result<f64> {
    Ok(m.apply(&Operator::from_row_major(m.d_in(), y)?)?.spectral_norm())
}

/// `sup ‖(Φ ⊗ id_k)(uu*)‖₁` over unit `u ∈ C^{d_in} ⊗ C^k`, a lower bound.
///
/// `k = 1` is the 1→1 norm on pure inputs and `k = d_in` the diamond norm.
pub fn trace_norm_ascent(m: &HermitianPreservingMap, k: usize, opts: &SearchOptions) -> Result<NormReport> {
    if k == 0 {
        return Err(Error::InvalidInput("ancilla dimension must be positive".into()));
    }
    if m.is_zero() {
        return Ok(NormReport::exact(0.0));
    }
    let (di, d) = (m.d_in(), m.d_out());
    let j = m.choi();
    let (_, witness) = best_of(opts.restarts, |r| {
        let mut rng = derived_rng(opts.seed, r as u64);
        let g = gaussian_vector(k * di, &mut rng);
        let s = norm(&g);
        let mut c = DMatrix::from_fn(k, di, |i, a| g[i * di + a] / s);
        let mut value = f64::NEG_INFINITY;
        for _ in 0..opts.max_iter {
            let out = m.sandwich_rows(&c);
            let (next, p) = trace_norm_and_sign(&out);
            if converged(value, next, opts.rel_tol) {
                value = value.max(next);
                break;
            }
            value = next;
            // K[(j,b),(i,a)] = Σ_{o,o'} P[(j,o'),(i,o)] J[(a,o),(b,o')]
            let kd = k * di;
            let kmat = Operator::from_fn(kd, |row, col| {
                let (jj, b) = (row / di, row % di);
                let (ii, a) = (col / di, col % di);
                let mut acc = ZERO;
                for o in 0..d {
                    for o2 in 0..d {
                        acc += p[(jj * d + o2, ii * d + o)] * j[(a * d + o, b * d + o2)];
                    }
                }
                acc
            });
            let (_, v) = top_eigvec(&kmat);
            c = DMatrix::from_fn(k, di, |i, a| v[i * di + a]);
        }
        // witness u_(a,i) = C[i,a]
        let u: Vec<C64> = (0..di * k).map(|idx| c[(idx % k, idx / k)]).collect();
        (value, u)
    });
    let value = evaluate_trace_norm(m, &witness, k)?;
    Ok(NormReport::heuristic(value, opts.restarts, witness))
}

/// 1→1 norm on pure inputs.
pub fn one_to_one_distance(m: &HermitianPreservingMap, opts: &SearchOptions) -> Result<NormReport> {
    trace_norm_ascent(m, 1, opts)
}

/// Orthonormal basis (as columns) of the complement of `Σ|ii⟩/√d` in `C^{d²}`.
fn max_entangled_complement(d: usize) -> Result<Vec<Vec<C64>>> {
    let psi = StateVector::max_entangled(d).projector();
    let q = &Operator::identity(d * d) - &psi;
    let (vals, vecs) = eig_hermitian(&q)?;
    Ok((0..d * d).filter(|&i| vals[i] > 0.5).map(|i| column(&vecs, i)).collect())
}

/// `sup ‖Φ(ψψ*)‖_∞` over pure `ψ` in `subspace`, a lower bound.
pub fn one_to_infty_distance(m: &HermitianPreservingMap, subspace: Subspace, opts: &SearchOptions) -> Result<NormReport> {
    if m.is_zero() {
        return Ok(NormReport::exact(0.0));
    }
    let di = m.d_in();
    let basis: Option<Vec<Vec<C64>>> = match subspace {
        Subspace::All => None,
        Subspace::OrthogonalToMaxEntangled => {
            let d = (di as f64).sqrt().round() as usize;
            if d * d != di || d < 2 {
                return Err(Error::InvalidInput(format!(
                    "orthogonal-to-ψ search needs input dimension d², got {di}"
                )));
            }
            Some(max_entangled_complement(d)?)
        }
    };
    let embed = |phi: &[C64]| -> Vec<C64> {
        match &basis {
            None => phi.to_vec(),
            Some(b) => {
                let mut psi = vec![ZERO; di];
                for (coef, col) in phi.iter().zip(b) {
                    for (p, x) in psi.iter_mut().zip(col) {
                        *p += coef * x;
                    }
                }
                psi
            }
        }
    };
    let sub_dim = basis.as_ref().map_or(di, |b| b.len());
    let (_, witness) = best_of(opts.restarts, |r| {
        let mut rng = derived_rng(opts.seed, r as u64);
        let mut phi = StateVector::random(sub_dim, &mut rng).amplitudes;
        let mut psi = embed(&phi);
        let mut value = f64::NEG_INFINITY;
        for _ in 0..opts.max_iter {
            let out = m.apply(&Operator::projector(&psi)).expect("dimensions checked");
            let (vals, vecs) = eig_hermitian_unchecked(&out);
            let n = vals.len();
            let (idx, sign) = if vals[n - 1].abs() >= vals[0].abs() { (n - 1, 1.0) } else { (0, -1.0) };
            let next = vals[idx].abs();
            if converged(value, next, opts.rel_tol) {
                value = value.max(next);
                break;
            }
            value = next;
            let v = column(&vecs, idx);
            let g = m.apply_adjoint(&Operator::projector(&v)).expect("dimensions checked").scale(sign);
            let restricted = match &basis {
                None => g,
                Some(b) => Operator::from_fn(sub_dim, |i, j| g.sandwich(&b[i], &b[j])),
            };
            phi = top_eigvec(&restricted).1;
            psi = embed(&phi);
        }
        (value, psi)
    });
    let value = evaluate_operator_norm(m, &witness)?;
    Ok(NormReport::heuristic(value, opts.restarts, witness))
}

/// `sup ‖Φ(Y)‖_∞` over traceless `Y` with `‖Y‖₂ = √d_in`, a lower bound.
pub fn traceless_spectral_ascent(m: &HermitianPreservingMap, opts: &SearchOptions) -> Result<NormReport> {
    if m.is_zero() {
        return Ok(NormReport::exact(0.0));
    }
    let (di, d) = (m.d_in(), m.d_out());
    if di < 2 {
        return Ok(NormReport::exact(0.0));
    }
    let j = m.choi();
    let scale = (di as f64).sqrt();
    let project = |mut y: Vec<C64>| -> Vec<C64> {
        let mean = (0..di).map(|i| y[i * di + i]).sum::<C64>() / di as f64;
        for i in 0..di {
            y[i * di + i] -= mean;
        }
        let s = norm(&y);
        y.iter().map(|z| z * (scale / s)).collect()
    };
    let (_, witness) = best_of(opts.restarts, |r| {
        let mut rng = derived_rng(opts.seed, r as u64);
        let mut y = project(gaussian_vector(di * di, &mut rng));
        let mut value = f64::NEG_INFINITY;
        for _ in 0..opts.max_iter {
            let out = m.apply(&Operator::from_row_major(di, &y).expect("square")).expect("dimensions checked");
            let svd = out.matrix().clone().svd(true, true);
            let (idx, &next) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, &f64::NEG_INFINITY), |acc, (i, s)| if *s > *acc.1 { (i, s) } else { acc });
            if converged(value, next, opts.rel_tol) {
                value = value.max(next);
                break;
            }
            value = next;
            let u = svd.u.as_ref().expect("requested");
            let vt = svd.v_t.as_ref().expect("requested");
            let a: Vec<C64> = u.column(idx).iter().copied().collect();
            let b: Vec<C64> = vt.row(idx).iter().map(|z| z.conj()).collect();
            // g_xy = ⟨a|J_(x,y)|b⟩
            let mut g = vec![ZERO; di * di];
            for x in 0..di {
                for yy in 0..di {
                    let mut acc = ZERO;
                    for o in 0..d {
                        for o2 in 0..d {
                            acc += a[o].conj() * j[(x * d + o, yy * d + o2)] * b[o2];
                        }
                    }
                    g[x * di + yy] = acc.conj();
                }
            }
            y = project(g);
        }
        (value, y)
    });
    let value = evaluate_spectral_norm(m, &witness)?;
    Ok(NormReport::heuristic(value, opts.restarts, witness))
}

/// Largest `‖Φ(ψψ*)‖₁` over `samples` Haar-random pure inputs.
pub fn sampled_one_to_one(m: &HermitianPreservingMap, samples: usize, seed: u64) -> Result<f64> {
    const CHUNK: usize = 4096;
    let chunks = samples.div_ceil(CHUNK);
    let maxima: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derived_rng(seed, c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            (0..count)
                .map(|_| {
                    let psi = StateVector::random(m.d_in(), &mut rng);
                    evaluate_trace_norm(m, &psi.amplitudes, 1).unwrap_or(f64::NAN)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(maxima.into_iter().fold(0.0, f64::max))
}

//! Primal-dual interior-point solver for small dense complex SDPs.
//!
//! Standard form over block-diagonal Hermitian variables:
//!
//! ```text
//! primal:  min Re⟨C, X⟩   s.t.  Re Tr(A_i X) = b_i,  X ⪰ 0
//! dual:    max bᵀy        s.t.  S = C − Σ y_i A_i ⪰ 0
//! ```
//!
//! Search directions are HKM with a Mehrotra predictor-corrector; the
//! iteration starts infeasible.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{C64, ZERO};

pub type Block = DMatrix<C64>;

/// Sparse Hermitian constraint matrix, stored as `(block, row, col, value)`
/// with both triangles present.
#[derive(Clone, Debug, Default)]
pub struct Constraint {
    entries: Vec<(usize, usize, usize, C64)>,
}

impl Constraint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `coeff · Re X_k[r, c]` to the constraint's linear form.
    pub fn add_re(&mut self, block: usize, r: usize, c: usize, coeff: f64) -> &mut Self {
        if r == c {
            self.entries.push((block, r, r, C64::new(coeff, 0.0)));
        } else {
            self.entries.push((block, r, c, C64::new(coeff / 2.0, 0.0)));
            self.entries.push((block, c, r, C64::new(coeff / 2.0, 0.0)));
        }
        self
    }

    /// Adds `coeff · Im X_k[r, c]`; a no-op on the diagonal.
    pub fn add_im(&mut self, block: usize, r: usize, c: usize, coeff: f64) -> &mut Self {
        if r != c {
            self.entries.push((block, c, r, C64::new(0.0, -coeff / 2.0)));
            self.entries.push((block, r, c, C64::new(0.0, coeff / 2.0)));
        }
        self
    }

    /// Raw entry; the caller keeps the matrix Hermitian.
    pub fn add_entry(&mut self, block: usize, r: usize, c: usize, value: C64) -> &mut Self {
        self.entries.push((block, r, c, value));
        self
    }

    pub fn entries(&self) -> &[(usize, usize, usize, C64)] {
        &self.entries
    }

    fn eval(&self, x: &[Block]) -> f64 {
        self.entries.iter().map(|&(k, r, c, v)| (v * x[k][(c, r)]).re).sum()
    }

    fn frobenius(&self, blocks: &[usize]) -> f64 {
        let mut dense: Vec<Block> = blocks.iter().map(|&n| Block::zeros(n, n)).collect();
        for &(k, r, c, v) in &self.entries {
            dense[k][(r, c)] += v;
        }
        dense.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    blocks: Vec<usize>,
    objective: Vec<Block>,
    constraints: Vec<Constraint>,
    rhs: Vec<f64>,
}

impl SdpProblem {
    pub fn new(blocks: Vec<usize>) -> Self {
        let objective = blocks.iter().map(|&n| Block::zeros(n, n)).collect();
        SdpProblem {
            blocks,
            objective,
            constraints: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Sets the objective block `C_k`; it is Hermitianized.
    pub fn set_objective(&mut self, block: usize, c: Block) -> Result<()> {
        let n = self.blocks[block];
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::DimensionMismatch(format!("objective block {block} must be {n}x{n}")));
        }
        self.objective[block] = (&c + c.adjoint()) * C64::new(0.5, 0.0);
        Ok(())
    }

    pub fn add_constraint(&mut self, a: Constraint, b: f64) -> Result<()> {
        for &(k, r, c, _) in &a.entries {
            if k >= self.blocks.len() || r >= self.blocks[k] || c >= self.blocks[k] {
                return Err(Error::DimensionMismatch(format!("constraint entry ({k},{r},{c}) out of range")));
            }
        }
        self.constraints.push(a);
        self.rhs.push(b);
        Ok(())
    }

    fn apply(&self, x: &[Block]) -> DVector<f64> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|a| a.eval(x)))
    }

    fn adjoint(&self, y: &DVector<f64>) -> Vec<Block> {
        let mut out = self.zero_blocks();
        for (a, &yi) in self.constraints.iter().zip(y.iter()) {
            for &(k, r, c, v) in &a.entries {
                out[k][(r, c)] += v * yi;
            }
        }
        out
    }

    fn zero_blocks(&self) -> Vec<Block> {
        self.blocks.iter().map(|&n| Block::zeros(n, n)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { tol: 1e-7, max_iter: 120 }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    /// `Re⟨C, X⟩` at the final iterate.
    pub primal: f64,
    /// `bᵀy` at the final iterate.
    pub dual: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub x: Vec<Block>,
    pub y: Vec<f64>,
    pub s: Vec<Block>,
}

fn inner(a: &[Block], b: &[Block]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dotc(y).re).sum()
}

fn hermitian(m: &Block) -> Block {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn chol_inverse(m: &Block) -> Option<Block> {
    Cholesky::new(hermitian(m)).map(|c| c.inverse())
}

/// Largest `α` with `X + α·ΔX ⪰ 0`, or `∞` when every step stays feasible.
fn max_step(x: &[Block], dx: &[Block]) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (xk, dk) in x.iter().zip(dx) {
        let l = Cholesky::new(hermitian(xk))?.l();
        let t = l.solve_lower_triangular(dk)?;
        let m = l.solve_lower_triangular(&t.adjoint())?;
        let eig = SymmetricEigen::new(hermitian(&m)).eigenvalues;
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            alpha = alpha.min(-1.0 / min);
        }
    }
    Some(alpha)
}

/// Schur complement `M_ij = Re Tr(A_i X A_j Z)`, evaluated from the sparse entries.
fn schur_complement(p: &SdpProblem, x: &[Block], z: &[Block]) -> DMatrix<f64> {
    let m = p.constraints.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let ai = &p.constraints[i].entries;
            (0..m)
                .map(|j| {
                    if j < i {
                        return 0.0;
                    }
                    let aj = &p.constraints[j].entries;
                    let mut acc = ZERO;
                    for &(k, r, c, u) in ai {
                        for &(k2, pp, q, v) in aj {
                            if k == k2 {
                                acc += u * v * x[k][(c, pp)] * z[k][(q, r)];
                            }
                        }
                    }
                    acc.re
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(m, m, |i, j| if j >= i { rows[i][j] } else { rows[j][i] })
}

struct Direction {
    dx: Vec<Block>,
    dy: DVector<f64>,
    ds: Vec<Block>,
}

fn solve_direction(
    p: &SdpProblem,
    schur: &Cholesky<f64, nalgebra::Dyn>,
    x: &[Block],
    z: &[Block],
    rp: &DVector<f64>,
    rd: &[Block],
    k: &[Block],
) -> Direction {
    let x_rd_z: Vec<Block> = x.iter().zip(rd).zip(z).map(|((xb, rb), zb)| xb * rb * zb).collect();
    let rhs = rp - p.apply(k) + p.apply(&x_rd_z);
    let dy = schur.solve(&rhs);
    let ady = p.adjoint(&dy);
    let ds: Vec<Block> = rd.iter().zip(&ady).map(|(r, a)| r - a).collect();
    let dx: Vec<Block> = k
        .iter()
        .zip(x)
        .zip(&ds)
        .zip(z)
        .map(|(((kb, xb), sb), zb)| hermitian(&(kb - xb * sb * zb)))
        .collect();
    Direction { dx, dy, ds }
}

pub fn sdp_solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    let m = p.constraints.len();
    let total_dim: usize = p.blocks.iter().sum();
    let nf = total_dim as f64;
    let b = DVector::from_vec(p.rhs.clone());
    let c_norm = p.objective.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
    let a_norms: Vec<f64> = p.constraints.iter().map(|a| a.frobenius(&p.blocks)).collect();
    let sqrt_n = nf.sqrt();
    let xi = a_norms
        .iter()
        .zip(p.rhs.iter())
        .map(|(an, bi)| sqrt_n * (1.0 + bi.abs()) / (1.0 + an))
        .fold(10f64.max(sqrt_n), f64::max);
    let eta = a_norms.iter().copied().fold(10f64.max(sqrt_n).max(c_norm), f64::max);

    let mut x: Vec<Block> = p.blocks.iter().map(|&n| Block::identity(n, n) * C64::new(xi, 0.0)).collect();
    let mut s: Vec<Block> = p.blocks.iter().map(|&n| Block::identity(n, n) * C64::new(eta, 0.0)).collect();
    let mut y = DVector::<f64>::zeros(m);
    let b_scale = 1.0 + b.norm();
    let c_scale = 1.0 + c_norm;

    // Gram matrix of the constraints, used to keep primal steps on the affine set.
    let gram = {
        let cols: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map_init(
                || p.zero_blocks(),
                |scratch, j| {
                    let entries = &p.constraints[j].entries;
                    for &(k, r, c, v) in entries {
                        scratch[k][(r, c)] += v;
                    }
                    let col = p.constraints.iter().map(|a| a.eval(scratch)).collect();
                    for &(k, r, c, _) in entries {
                        scratch[k][(r, c)] = ZERO;
                    }
                    col
                },
            )
            .collect();
        Cholesky::new(DMatrix::from_fn(m, m, |i, j| cols[j][i]))
    };

    let mut last = (f64::NAN, f64::NAN, f64::INFINITY);
    for iter in 0..=opts.max_iter {
        let rp = &b - p.apply(&x);
        let aty = p.adjoint(&y);
        let rd: Vec<Block> = p
            .objective
            .iter()
            .zip(&aty)
            .zip(&s)
            .map(|((c, a), sb)| c - a - sb)
            .collect();
        let primal = inner(&p.objective, &x);
        let dual = b.dot(&y);
        let gap = (primal - dual).abs();
        let pres = rp.norm() / b_scale;
        let dres = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / c_scale;
        last = (primal, dual, gap);
        if gap <= opts.tol && pres <= opts.tol && dres <= opts.tol {
            return Ok(SdpSolution {
                primal,
                dual,
                gap,
                primal_residual: pres,
                dual_residual: dres,
                iterations: iter,
                x,
                y: y.iter().copied().collect(),
                s,
            });
        }
        if iter == opts.max_iter {
            break;
        }
        let mu = inner(&x, &s) / nf;
        let Some(z) = s.iter().map(chol_inverse).collect::<Option<Vec<_>>>() else {
            break;
        };
        let mut schur = schur_complement(p, &x, &z);
        let diag_max = (0..m).map(|i| schur[(i, i)]).fold(0.0, f64::max);
        let chol = match Cholesky::new(schur.clone()) {
            Some(c) => c,
            None => {
                for i in 0..m {
                    schur[(i, i)] += 1e-13 * diag_max.max(1.0);
                }
                match Cholesky::new(schur) {
                    Some(c) => c,
                    None => break,
                }
            }
        };

        // predictor
        let k_aff: Vec<Block> = x.iter().map(|xb| -xb).collect();
        let aff = solve_direction(p, &chol, &x, &z, &rp, &rd, &k_aff);
        let (Some(ap), Some(ad)) = (max_step(&x, &aff.dx), max_step(&s, &aff.ds)) else {
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let x_aff: Vec<Block> = x.iter().zip(&aff.dx).map(|(a, d)| a + d * C64::new(ap, 0.0)).collect();
        let s_aff: Vec<Block> = s.iter().zip(&aff.ds).map(|(a, d)| a + d * C64::new(ad, 0.0)).collect();
        let mu_aff = inner(&x_aff, &s_aff) / nf;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let k: Vec<Block> = x
            .iter()
            .zip(&z)
            .zip(aff.dx.iter().zip(&aff.ds))
            .map(|((xb, zb), (dxa, dsa))| zb * C64::new(sigma * mu, 0.0) - xb - dxa * dsa * zb)
            .collect();
        let mut dir = solve_direction(p, &chol, &x, &z, &rp, &rd, &k);
        if let Some(g) = &gram {
            let fix = p.adjoint(&g.solve(&(&rp - p.apply(&dir.dx))));
            for (d, f) in dir.dx.iter_mut().zip(&fix) {
                *d += f;
            }
        }
        let (Some(ap), Some(ad)) = (max_step(&x, &dir.dx), max_step(&s, &dir.ds)) else {
            break;
        };
        let ap = (0.98 * ap).min(1.0);
        let ad = (0.98 * ad).min(1.0);
        for (xb, d) in x.iter_mut().zip(&dir.dx) {
            *xb += d * C64::new(ap, 0.0);
        }
        for (sb, d) in s.iter_mut().zip(&dir.ds) {
            *sb += d * C64::new(ad, 0.0);
        }
        y += &dir.dy * ad;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        primal: last.0,
        dual: last.1,
        gap: last.2,
    })
}

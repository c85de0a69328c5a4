//! Diamond norm by semidefinite programming on the Choi matrix.

use super::map::HermitianPreservingMap;
use super::report::NormReport;
use super::sdp::{sdp_solve, Block, Constraint, SdpOptions, SdpProblem};
use super::search::{trace_norm_ascent, SearchOptions};
use crate::error::{Error, Result};
use crate::tensor::{eig_hermitian, Operator, C64};

/// Largest `d_in · d_out` handed to the SDP by default.
pub const DIAMOND_CAP: usize = 64;
pub const DIAMOND_TOL: f64 = 1e-7;

/// Which program is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiamondForm {
    /// `2·max Tr(JW)` s.t. `0 ⪯ W ⪯ ρ⊗I`, `Tr ρ = 1`; valid for trace-annihilating maps.
    TraceAnnihilating,
    /// `max Re Tr(J*X)` s.t. `[[ρ0⊗I, X], [X*, ρ1⊗I]] ⪰ 0`, `ρ0`, `ρ1` density matrices.
    General,
    /// Pick by checking `Tr_out J = 0`.
    Auto,
}

#[derive(Clone, Copy, Debug)]
pub struct DiamondOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub cap: usize,
    pub form: DiamondForm,
}

impl Default for DiamondOptions {
    fn default() -> Self {
        DiamondOptions {
            tol: DIAMOND_TOL,
            max_iter: 120,
            cap: DIAMOND_CAP,
            form: DiamondForm::Auto,
        }
    }
}

impl DiamondOptions {
    pub fn with_tol(tol: f64) -> Self {
        DiamondOptions { tol, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct DiamondSolution {
    pub report: NormReport,
    pub form: DiamondForm,
    /// Optimal input marginal.
    pub rho: Operator,
    /// Optimal `W` of the trace-annihilating form.
    pub w: Option<Operator>,
}

fn sqrt_psd(rho: &Operator) -> Result<Operator> {
    let (vals, vecs) = eig_hermitian(rho)?;
    let roots: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(&vecs * &(&Operator::from_real_diagonal(&roots) * &vecs.dagger()))
}

/// `(√ρ ⊗ I)Σ_j |j⟩|j⟩`, indexed `(input, ancilla)`.
fn purification(rho: &Operator) -> Result<Vec<C64>> {
    let s = sqrt_psd(rho)?;
    let d = rho.dim();
    let mut u: Vec<C64> = (0..d * d).map(|idx| s[(idx / d, idx % d)]).collect();
    let n = crate::tensor::norm(&u);
    if n > 0.0 {
        u.iter_mut().for_each(|z| *z /= n);
    }
    Ok(u)
}

fn to_operator(b: &Block) -> Operator {
    Operator::from_matrix(b.clone()).expect("solver blocks are square and finite")
}

/// Adds the Hermitian equality `Σ_lhs X_block[off+r, off+c] = (ρ ⊗ I)[r, c]`
/// entrywise for `r ≤ c`.
fn couple_to_marginal(p: &mut SdpProblem, lhs: &[(usize, usize)], rho_block: usize, d_in: usize, d_out: usize) -> Result<()> {
    let n = d_in * d_out;
    for r in 0..n {
        for c in r..n {
            let (a, o) = (r / d_out, r % d_out);
            let (b, o2) = (c / d_out, c % d_out);
            let mut re = Constraint::new();
            for &(block, off) in lhs {
                re.add_re(block, off + r, off + c, 1.0);
            }
            if o == o2 {
                re.add_re(rho_block, a, b, -1.0);
            }
            p.add_constraint(re, 0.0)?;
            if r != c {
                let mut im = Constraint::new();
                for &(block, off) in lhs {
                    im.add_im(block, off + r, off + c, 1.0);
                }
                if o == o2 {
                    im.add_im(rho_block, a, b, -1.0);
                }
                p.add_constraint(im, 0.0)?;
            }
        }
    }
    Ok(())
}

fn unit_trace(p: &mut SdpProblem, block: usize, dim: usize) -> Result<()> {
    let mut tr = Constraint::new();
    for i in 0..dim {
        tr.add_re(block, i, i, 1.0);
    }
    p.add_constraint(tr, 1.0)
}

pub fn diamond_distance(m: &HermitianPreservingMap, tol: f64) -> Result<NormReport> {
    Ok(diamond_solve(m, &DiamondOptions::with_tol(tol))?.report)
}

pub fn diamond_solve(m: &HermitianPreservingMap, opts: &DiamondOptions) -> Result<DiamondSolution> {
    let (di, d) = (m.d_in(), m.d_out());
    let n = di * d;
    if m.is_zero() {
        return Ok(DiamondSolution {
            report: NormReport::exact(0.0),
            form: opts.form,
            rho: Operator::identity(di).scale(1.0 / di as f64),
            w: None,
        });
    }
    if n > opts.cap {
        return Err(Error::CapExceeded(format!("diamond SDP on d_in·d_out = {n} exceeds cap {}", opts.cap)));
    }
    let form = match opts.form {
        DiamondForm::Auto if m.is_trace_annihilating(1e-9) => DiamondForm::TraceAnnihilating,
        DiamondForm::Auto => DiamondForm::General,
        f => f,
    };
    // Solve for the unit-entry map; the absolute SDP tolerance then scales with the map.
    let scale = m.choi().max_abs();
    let j = m.choi().matrix().unscale(scale);
    let sdp_opts = SdpOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
    };
    match form {
        DiamondForm::TraceAnnihilating => {
            // blocks: W, Z = ρ⊗I − W, ρ
            let mut p = SdpProblem::new(vec![n, n, di]);
            p.set_objective(0, -j)?;
            couple_to_marginal(&mut p, &[(0, 0), (1, 0)], 2, di, d)?;
            unit_trace(&mut p, 2, di)?;
            let sol = sdp_solve(&p, &sdp_opts).map_err(|e| scale_bounds(e, -2.0 * scale))?;
            let rho = to_operator(&sol.x[2]);
            let value = -(sol.primal + sol.dual) * scale;
            let report = NormReport::certified(value, 2.0 * sol.gap * scale, Some(purification(&rho)?));
            Ok(DiamondSolution {
                report,
                form,
                rho,
                w: Some(to_operator(&sol.x[0])),
            })
        }
        DiamondForm::General => {
            // blocks: [[Y00, X], [X*, Y11]], ρ0, ρ1
            let mut p = SdpProblem::new(vec![2 * n, di, di]);
            let mut c = Block::zeros(2 * n, 2 * n);
            let half = C64::new(-0.5, 0.0);
            c.view_mut((0, n), (n, n)).copy_from(&(&j * half));
            c.view_mut((n, 0), (n, n)).copy_from(&(j.adjoint() * half));
            p.set_objective(0, c)?;
            couple_to_marginal(&mut p, &[(0, 0)], 1, di, d)?;
            couple_to_marginal(&mut p, &[(0, n)], 2, di, d)?;
            unit_trace(&mut p, 1, di)?;
            unit_trace(&mut p, 2, di)?;
            let sol = sdp_solve(&p, &sdp_opts).map_err(|e| scale_bounds(e, -scale))?;
            let rho = to_operator(&((&sol.x[1] + &sol.x[2]) * C64::new(0.5, 0.0)));
            let value = -(sol.primal + sol.dual) / 2.0 * scale;
            let report = NormReport::certified(value, sol.gap * scale, Some(purification(&rho)?));
            Ok(DiamondSolution { report, form, rho, w: None })
        }
        DiamondForm::Auto => unreachable!("resolved above"),
    }
}

/// Rescales the objective bounds of a non-convergence error to norm units.
fn scale_bounds(e: Error, factor: f64) -> Error {
    match e {
        Error::NonConvergence { iterations, primal, dual, gap } => Error::NonConvergence {
            iterations,
            primal: factor * primal,
            dual: factor * dual,
            gap: factor.abs() * gap,
        },
        other => other,
    }
}

/// The 1→1 norm stabilized by a `k`-dimensional ancilla.
///
/// `k ≥ d_in` is the diamond norm (certified). Smaller `k` is a Schmidt-rank
/// constrained, nonconvex problem: the value is a restart-search lower bound
/// and the full diamond SDP supplies the upper bound.
pub fn k_bounded_diamond_distance(
    m: &HermitianPreservingMap,
    k: usize,
    opts: &DiamondOptions,
    search: &SearchOptions,
) -> Result<NormReport> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k >= m.d_in() {
        return Ok(diamond_solve(m, opts)?.report);
    }
    let lower = trace_norm_ascent(m, k, search)?;
    match diamond_solve(m, opts) {
        Ok(full) => {
            let upper = full.report.upper.unwrap_or(full.report.value);
            Ok(lower.with_upper(upper))
        }
        Err(Error::CapExceeded(_)) => Ok(lower),
        Err(e) => Err(e),
    }
}

/// Builds the rank-one matrix of an optimal input, for callers that need the state.
pub fn witness_state(report: &NormReport) -> Option<Operator> {
    report.witness.as_ref().map(|u| Operator::projector(u))
}

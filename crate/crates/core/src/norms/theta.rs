//! Distance between the Haar channel twirl `Θ` and its sampled version `Θ_μ`.
//!
//! Both act on Choi matrices: `Θ_μ(J) = Σ w (Ū⊗U) J (Ū⊗U)*` and `Θ` is its
//! Haar average. With `k` spectator dimensions the twirl acts on the first
//! input and output factors of a channel on `L(C^d ⊗ C^k)` and leaves the
//! spectators alone.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::diamond::{diamond_solve, DiamondForm, DiamondOptions};
use super::map::HermitianPreservingMap;
use super::report::{NormKind, NormReport};
use super::sdp::{sdp_solve, Constraint, SdpOptions, SdpProblem};
use super::search::{one_to_infty_distance, traceless_spectral_ascent, SearchOptions, Subspace};
use crate::ensembles::{TwirlMode, UnitaryEnsemble};
use crate::error::{Error, Result};
use crate::schur_weyl::canonical_operators;
use crate::tensor::{
    derived_rng, eig_hermitian, gaussian_vector, kron, partial_trace, permute_factors, Operator, TensorShape, C64,
};

/// Largest `d` accepted by the Θ bounds by default.
pub const THETA_MAX_D: usize = 4;

#[derive(Clone, Copy, Debug)]
pub struct ThetaOptions {
    /// Random starting channels for the lower-bound ascent.
    pub restarts: usize,
    pub seed: u64,
    /// Alternations per restart.
    pub max_rounds: usize,
    pub diamond: DiamondOptions,
    /// Restart search used by the upper-bound terms.
    pub search: SearchOptions,
    pub max_d: usize,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        ThetaOptions {
            restarts: 8,
            seed: 0,
            max_rounds: 30,
            diamond: DiamondOptions::default(),
            search: SearchOptions::default(),
            max_d: THETA_MAX_D,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ThetaBounds {
    /// Best `‖Θ(N) − Θ_μ(N)‖_⋄` found over channels `N`.
    pub lower: NormReport,
    /// `d²·s_⊥ + 2√d·s₁`.
    pub upper: NormReport,
    /// 1→∞ deviation of the `U⊗Ū` twirl on inputs orthogonal to the maximally entangled state.
    pub s_perp: NormReport,
    /// Largest `‖T^{(1)}_μ(Y) − T^{(1)}(Y)‖_∞` over traceless `Y` with `‖Y‖₂ = √d`.
    pub s_one: NormReport,
}

/// The super-channel deviation `Θ − Θ_μ` with `k` spectators, as a linear map on Choi matrices.
struct Deviation {
    d: usize,
    k: usize,
    conjugations: Vec<Operator>,
    weights: Vec<f64>,
}

impl Deviation {
    fn new(ens: &UnitaryEnsemble, k: usize) -> Self {
        let id = Operator::identity(k);
        let conjugations = ens
            .elements()
            .iter()
            .map(|u| kron(&kron(&kron(&u.conj(), &id), u), &id))
            .collect();
        Deviation {
            d: ens.d(),
            k,
            conjugations,
            weights: ens.weights().to_vec(),
        }
    }

    fn channel_dim(&self) -> usize {
        self.d * self.k
    }

    /// Haar twirl on the (input d, output d) factors.
    fn exact(&self, j: &Operator) -> Result<Operator> {
        let (d, k) = (self.d, self.k);
        let shape = TensorShape::new(vec![d, k, d, k])?;
        let (x, _) = permute_factors(j, &shape, &[0, 2, 1, 3])?;
        let ops = canonical_operators(d)?;
        let bip = TensorShape::bipartite(d * d, k * k);
        let id_k = Operator::identity(k * k);
        let on_psi = partial_trace(&(&kron(&ops.psi_proj, &id_k) * &x), &bip, &[1])?;
        let on_q = partial_trace(&(&kron(&ops.q_proj, &id_k) * &x), &bip, &[1])?.scale(1.0 / (d * d - 1) as f64);
        let y = &kron(&ops.psi_proj, &on_psi) + &kron(&ops.q_proj, &on_q);
        let shape2 = TensorShape::new(vec![d, d, k, k])?;
        Ok(permute_factors(&y, &shape2, &[0, 2, 1, 3])?.0)
    }

    fn sampled(&self, j: &Operator) -> Operator {
        let mut out = Operator::zeros(j.dim());
        for (v, &w) in self.conjugations.iter().zip(&self.weights) {
            out += &v.conjugate(j).scale(w);
        }
        out
    }

    fn sampled_adjoint(&self, y: &Operator) -> Operator {
        let mut out = Operator::zeros(y.dim());
        for (v, &w) in self.conjugations.iter().zip(&self.weights) {
            out += &v.dagger().conjugate(y).scale(w);
        }
        out
    }

    fn apply(&self, j: &Operator) -> Result<HermitianPreservingMap> {
        let dk = self.channel_dim();
        HermitianPreservingMap::from_choi(dk, dk, &self.exact(j)? - &self.sampled(j))
    }

    /// The exact twirl is an orthogonal projection, hence self-adjoint.
    fn adjoint(&self, w: &Operator) -> Result<Operator> {
        Ok(&self.exact(w)? - &self.sampled_adjoint(w))
    }
}

/// Choi matrix of a random channel with a Stinespring isometry `C^n → C^n ⊗ C^{n²}`.
fn random_channel(n: usize, rng: &mut impl rand::Rng) -> Operator {
    let env = n * n;
    let g = DMatrix::from_row_slice(n * env, n, &gaussian_vector(n * env * n, rng));
    let v = g.qr().q();
    let mut choi = Operator::zeros(n * n);
    for e in 0..env {
        // vec(K_e)_(a,o) = V[(o,e), a]
        let vec: Vec<C64> = (0..n * n).map(|idx| v[((idx % n) * env + e, idx / n)]).collect();
        choi += &Operator::projector(&vec);
    }
    choi
}

/// Rescales `J` so `Tr_out J = I` exactly: `(M^{-1/2} ⊗ I) J (M^{-1/2} ⊗ I)`.
fn renormalize_channel(j: &Operator, n: usize) -> Result<Operator> {
    let shape = TensorShape::bipartite(n, n);
    let m = partial_trace(j, &shape, &[0])?;
    let (vals, vecs) = eig_hermitian(&m)?;
    if vals[0] <= 0.0 {
        return Err(Error::NotAChannel("input marginal is singular".into()));
    }
    let inv_sqrt = Operator::from_real_diagonal(&vals.iter().map(|v| 1.0 / v.sqrt()).collect::<Vec<_>>());
    let s = &vecs * &(&inv_sqrt * &vecs.dagger());
    Ok(kron(&s, &Operator::identity(n)).conjugate(&j.hermitian_part()))
}

/// `argmax Tr(G J)` over Choi matrices of channels on `L(C^n)`.
fn best_channel(g: &Operator, n: usize, opts: &DiamondOptions) -> Result<Operator> {
    let dim = n * n;
    let mut p = SdpProblem::new(vec![dim]);
    p.set_objective(0, -g.hermitian_part().matrix().clone())?;
    for a in 0..n {
        for b in a..n {
            let mut re = Constraint::new();
            let mut im = Constraint::new();
            for o in 0..n {
                re.add_re(0, a * n + o, b * n + o, 1.0);
                im.add_im(0, a * n + o, b * n + o, 1.0);
            }
            p.add_constraint(re, if a == b { 1.0 } else { 0.0 })?;
            if a != b {
                p.add_constraint(im, 0.0)?;
            }
        }
    }
    let sol = sdp_solve(
        &p,
        &SdpOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
    )?;
    renormalize_channel(&Operator::from_matrix(sol.x[0].clone())?, n)
}

fn check_dim(ens: &UnitaryEnsemble, opts: &ThetaOptions) -> Result<()> {
    if ens.d() < 2 || ens.d() > opts.max_d {
        return Err(Error::CapExceeded(format!(
            "Θ bounds support 2 ≤ d ≤ {}, got {}",
            opts.max_d,
            ens.d()
        )));
    }
    Ok(())
}

/// Lower bound on `sup_N ‖((Θ − Θ_μ) ⊗ id_k)(N)‖_⋄` by alternating ascent.
///
/// Each round solves the diamond SDP of the current deviation to get an
/// optimal observable `W`, then the channel SDP `max Tr(N · L*(W))`; the
/// objective never decreases. The witness is the best channel's Choi
/// matrix, row-major.
pub fn theta_k_bounded_estimate(ens: &UnitaryEnsemble, k: usize, opts: &ThetaOptions) -> Result<NormReport> {
    check_dim(ens, opts)?;
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let dev = Deviation::new(ens, k);
    let n = dev.channel_dim();
    let diamond_opts = DiamondOptions {
        form: DiamondForm::TraceAnnihilating,
        ..opts.diamond
    };
    let runs: Vec<Result<(f64, Operator)>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = derived_rng(opts.seed, r as u64);
            let mut j = random_channel(n, &mut rng);
            let mut best = (f64::NEG_INFINITY, j.clone());
            for _ in 0..opts.max_rounds {
                let xi = dev.apply(&j)?;
                let sol = diamond_solve(&xi, &diamond_opts)?;
                let value = sol.report.value;
                let improved = value - best.0;
                if value > best.0 {
                    best = (value, j.clone());
                }
                if improved <= 1e-9 * 1f64.max(value.abs()) {
                    break;
                }
                let Some(w) = sol.w else { break };
                j = best_channel(&dev.adjoint(&w)?, n, &opts.diamond)?;
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<(f64, Operator)> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.0 > b.0) {
            best = Some(run);
        }
    }
    let (_, j) = best.expect("at least one restart");
    let value = diamond_solve(&dev.apply(&j)?, &diamond_opts)?.report.value.max(0.0);
    Ok(NormReport::heuristic(value, opts.restarts, j.to_row_major()))
}

/// The triangle-inequality upper bound `d²·s_⊥ + 2√d·s₁` and its two terms.
pub fn theta_upper_bound(ens: &UnitaryEnsemble, search: &SearchOptions) -> Result<(NormReport, NormReport, NormReport)> {
    let d = ens.d();
    let uubar = HermitianPreservingMap::ensemble_deviation(ens, TwirlMode::UUbar)?;
    let s_perp = one_to_infty_distance(&uubar, Subspace::OrthogonalToMaxEntangled, search)?;
    let t1 = HermitianPreservingMap::ensemble_deviation(ens, TwirlMode::TFold(1))?;
    let s_one = traceless_spectral_ascent(&t1, search)?;
    let value = (d * d) as f64 * s_perp.value + 2.0 * (d as f64).sqrt() * s_one.value;
    let upper = NormReport {
        value,
        kind: NormKind::ComposedUpper,
        witness: None,
        upper: None,
    };
    Ok((upper, s_perp, s_one))
}

pub fn theta_distance_bounds(ens: &UnitaryEnsemble, opts: &ThetaOptions) -> Result<ThetaBounds> {
    check_dim(ens, opts)?;
    let lower = theta_k_bounded_estimate(ens, 1, opts)?;
    let (upper, s_perp, s_one) = theta_upper_bound(ens, &opts.search)?;
    Ok(ThetaBounds {
        lower,
        upper,
        s_perp,
        s_one,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{clifford_ensemble, sampled_twirl_apply, subsample, Provenance};
    use crate::schur_weyl::{channel_twirl_exact, check_channel_choi};

    fn quick() -> ThetaOptions {
        ThetaOptions {
            restarts: 2,
            max_rounds: 10,
            search: SearchOptions::with_restarts(8, 0),
            ..Default::default()
        }
    }

    #[test]
    fn deviation_matches_module_twirls() {
        let ens = subsample(&clifford_ensemble(1).unwrap(), 4, 2).unwrap();
        let j = random_channel(2, &mut derived_rng(1, 1));
        check_channel_choi(&j, 2, 2, 1e-10).unwrap();
        let dev = Deviation::new(&ens, 1);
        assert!(dev.exact(&j).unwrap().max_abs_diff(&channel_twirl_exact(&j, 2).unwrap()) < 1e-12);
        let sampled = sampled_twirl_apply(&ens, &j, TwirlMode::ChannelTwirl).unwrap();
        assert!(dev.sampled(&j).max_abs_diff(&sampled) < 1e-12);
    }

    #[test]
    fn deviation_adjoint_identity() {
        let ens = subsample(&clifford_ensemble(1).unwrap(), 3, 5).unwrap();
        let dev = Deviation::new(&ens, 2);
        let mut rng = derived_rng(2, 2);
        let a = Operator::from_row_major(16, &gaussian_vector(256, &mut rng)).unwrap().hermitian_part();
        let b = Operator::from_row_major(16, &gaussian_vector(256, &mut rng)).unwrap().hermitian_part();
        let lhs = dev.apply(&a).unwrap().choi().hs_inner(&b);
        let rhs = a.hs_inner(&dev.adjoint(&b).unwrap());
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn renormalized_channels_are_valid() {
        let j = random_channel(3, &mut derived_rng(4, 4)).scale(1.01);
        check_channel_choi(&renormalize_channel(&j, 3).unwrap(), 3, 3, 1e-12).unwrap();
    }

    #[test]
    fn exact_design_has_vanishing_bounds() {
        let b = theta_distance_bounds(&clifford_ensemble(1).unwrap(), &quick()).unwrap();
        assert!(b.lower.value <= 1e-8, "{}", b.lower.value);
        assert!(b.upper.value <= 1e-8, "{}", b.upper.value);
    }

    #[test]
    fn singleton_identity_ensemble() {
        let ens = UnitaryEnsemble::uniform(2, vec![Operator::identity(2)], Provenance::External("identity".into())).unwrap();
        let b = theta_distance_bounds(&ens, &quick()).unwrap();
        assert!(b.lower.value >= 0.5);
        assert!((b.lower.value - 1.5).abs() < 1e-6, "{}", b.lower.value);
        assert!((b.upper.value - 20.0 / 3.0).abs() < 1e-6, "{}", b.upper.value);
        let witness = Operator::from_row_major(4, b.lower.witness.as_ref().unwrap()).unwrap();
        check_channel_choi(&witness, 2, 2, 1e-9).unwrap();
        let diff = HermitianPreservingMap::from_choi(2, 2, &channel_twirl_exact(&witness, 2).unwrap() - &witness).unwrap();
        let general = DiamondOptions { form: DiamondForm::General, ..Default::default() };
        let dist = diamond_solve(&diff, &general).unwrap().report.value;
        assert!((dist - b.lower.value).abs() < 1e-6);
        assert!(b.lower.value <= b.upper.value + 1e-6);
    }

    #[test]
    fn traceless_unitary_twirls_onto_q() {
        // A unitary channel with Tr V = 0 has its Choi matrix inside the Q block.
        let x = Operator::from_row_major(2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let n = HermitianPreservingMap::from_kraus(2, 2, vec![x.matrix().clone()]).unwrap();
        let twirled = channel_twirl_exact(n.choi(), 2).unwrap();
        let q = canonical_operators(2).unwrap().q_proj.scale(2.0 / 3.0);
        assert!(twirled.max_abs_diff(&q) < 1e-12);
        let diff = HermitianPreservingMap::from_choi(2, 2, &twirled - n.choi()).unwrap();
        // Choi trace distance lower bound: eigenvalues −4/3, 2/3, 2/3, 0.
        assert!((diff.choi().trace_norm_hermitian().unwrap() / 2.0 - 4.0 / 3.0).abs() < 1e-12);
        let dist = diamond_solve(&diff, &DiamondOptions::default()).unwrap().report.value;
        assert!((dist - 4.0 / 3.0).abs() < 1e-6, "{dist}");
    }

    #[test]
    fn lower_never_exceeds_upper_on_subsamples() {
        let parent = clifford_ensemble(1).unwrap();
        for seed in 0..3 {
            let ens = subsample(&parent, 6, seed).unwrap();
            let b = theta_distance_bounds(&ens, &quick()).unwrap();
            assert!(b.lower.value <= b.upper.value + 1e-6, "seed {seed}: {} > {}", b.lower.value, b.upper.value);
        }
    }
}

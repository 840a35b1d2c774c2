//! Expectation values and weighted eigenbasis coherence tracks.

use num_complex::Complex;

use crate::dynamics::{trace_product, Trajectory};
use crate::error::{Error, Result};
use crate::hilbert::{EigenSystem, Operator, OperatorSet};
use crate::scalar::Scalar;

/// One eigenbasis coherence ρ_jk(t) with its position matrix elements.
#[derive(Debug, Clone)]
pub struct CoherenceTrack<R: Scalar> {
    /// (j, k) with j < k.
    pub pair: (usize, usize),
    /// ρ_jk(t) on the trajectory grid.
    pub rho_t: Vec<Complex<R>>,
    /// X_{1,kj} = ⟨ψ_k|X1|ψ_j⟩ (real under the fixed phase convention).
    pub weight_x1: R,
    pub weight_x2: R,
    /// Coherent frequency Ω_kj = ε_k − ε_j in cm⁻¹.
    pub omega_kj: R,
}

impl<R: Scalar> CoherenceTrack<R> {
    /// Contribution of this pair to ⟨X_i(t)⟩: 2·Re[ρ_jk(t)·X_{i,kj}].
    pub fn weighted_real(&self, weight: R) -> Vec<R> {
        self.rho_t.iter().map(|z| R::of(2.0) * z.re * weight).collect()
    }

    /// |ρ_jk(t)|·|X_{i,kj}| envelope.
    pub fn weighted_abs(&self, weight: R) -> Vec<R> {
        self.rho_t.iter().map(|z| z.norm() * weight.abs()).collect()
    }
}

/// Tr{O ρ(t)} over the trajectory's stored states. Returns (times, values);
/// the imaginary residue is audited (< 1e-8 expected for Hermitian O) and
/// discarded.
pub fn expectation_series<R: Scalar>(
    traj: &Trajectory<R>,
    op: &Operator<R>,
) -> Result<(Vec<R>, Vec<R>)> {
    let mut times = Vec::with_capacity(traj.stored.len());
    let mut values = Vec::with_capacity(traj.stored.len());
    for s in &traj.stored {
        op.check_basis(s.state.basis)?;
        let z = trace_product(&op.matrix.view(), &s.state.matrix.view());
        if z.im.abs() > R::of(1e-8) {
            return Err(Error::InvariantViolation(format!(
                "expectation value has imaginary residue {:e} at t = {}",
                z.im, s.state.time
            )));
        }
        times.push(s.state.time);
        values.push(z.re);
    }
    Ok((times, values))
}

/// Extract coherence tracks for the given pairs from a trajectory whose
/// record plan included them, attaching position weights and frequencies.
/// Each track is audited against the Cauchy–Schwarz bound
/// |ρ_jk| ≤ √(ρ_jj·ρ_kk) + 1e-6 at the stored states.
pub fn coherence_tracks<R: Scalar>(
    traj: &Trajectory<R>,
    eig: &EigenSystem<R>,
    ops: &OperatorSet<R>,
    pairs: &[(usize, usize)],
) -> Result<Vec<CoherenceTrack<R>>> {
    let dim = eig.dim();
    let mut out = Vec::with_capacity(pairs.len());
    for &(j, k) in pairs {
        if j >= dim || k >= dim {
            return Err(Error::IndexOutOfRange { j, k, dim });
        }
        let rho_t = traj
            .elements
            .get(&(j, k))
            .ok_or_else(|| {
                Error::Config(format!("pair ({j}, {k}) was not recorded on this trajectory"))
            })?
            .clone();
        for s in &traj.stored {
            let rho = &s.state.matrix;
            let bound = (rho[[j, j]].re * rho[[k, k]].re).max(R::zero()).sqrt() + R::of(1e-6);
            let coh = rho[[j, k]].norm();
            if coh > bound {
                return Err(Error::InvariantViolation(format!(
                    "Cauchy-Schwarz violated for pair ({j}, {k}) at t = {}: |rho_jk| = {coh:e} > {bound:e}",
                    s.state.time
                )));
            }
        }
        out.push(CoherenceTrack {
            pair: (j, k),
            rho_t,
            weight_x1: eig.element(&ops.x1, k, j).re,
            weight_x2: eig.element(&ops.x2, k, j).re,
            omega_kj: eig.gap(j, k),
        });
    }
    Ok(out)
}

/// Fock truncation used for the cheap pair-selection probe run.
const PAIR_PROBE_M: usize = 4;
/// Horizon of the pair-selection probe run in ps.
const PAIR_PROBE_T_END: f64 = 1.0;
/// Candidate pairs are drawn from the lowest this-many eigenstates.
const PAIR_PROBE_STATES: usize = 12;

/// The `cap` dominant coherence pairs (j < k) for the given parameters.
///
/// Pairs are ranked by the peak weighted amplitude max_t |ρ_jk(t)|·|X_{1,kj}|
/// over a short open-system probe run from the standard initial state, so the
/// selection reflects coherences the dissipative dynamics actually populates
/// (including ones fed by relaxation that carry no initial amplitude). The
/// probe runs at a reduced Fock truncation — the low-lying eigenstate
/// ordering, and hence the selected index pairs, is stable under truncation —
/// and candidates are restricted to pairs among the lowest eigenstates, where
/// that ordering is converged.
///
/// If the dynamics develops no eigenbasis coherence at all (e.g. g1 = g2 = 0
/// with a stationary initial state), the ranking falls back to the static
/// matrix-element magnitude |X_{1,kj}|.
pub fn default_pairs<R: Scalar>(
    params: &crate::hilbert::DimerParams<R>,
    cap: usize,
) -> Result<Vec<(usize, usize)>> {
    use crate::dynamics::{
        initial_state, propagate_open, standard_dissipators, PropagationConfig, RecordPlan,
    };
    use crate::hilbert::{build_hamiltonian, build_operators, diagonalise};

    let probe = params.with_m_levels(params.m_levels.min(PAIR_PROBE_M));
    let h = build_hamiltonian(&probe)?;
    let eig = diagonalise(&h)?;
    let ops = build_operators(&probe)?;
    let x1 = eig.to_eigenbasis(&ops.x1)?;
    let n_states = probe.dim().min(PAIR_PROBE_STATES);
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for j in 0..n_states {
        for k in (j + 1)..n_states {
            candidates.push((j, k));
        }
    }

    let diss = standard_dissipators(&probe)?;
    let rho0 = initial_state(&probe)?;
    let config = PropagationConfig {
        t_end: R::of(PAIR_PROBE_T_END),
        dt_out: R::of(0.002),
        max_stored_states: 2,
        ..PropagationConfig::default()
    };
    let plan = RecordPlan {
        series_ops: Vec::new(),
        pairs: candidates.clone(),
        eig: Some(eig.clone()),
    };
    let traj = propagate_open(&rho0, &h, &diss, &config, &plan)?;

    let mut scored: Vec<((usize, usize), R)> = candidates
        .iter()
        .map(|&(j, k)| {
            let weight = x1.matrix[[k, j]].norm();
            let peak = traj.elements[&(j, k)]
                .iter()
                .map(|z| z.norm())
                .fold(R::zero(), R::max);
            ((j, k), peak * weight)
        })
        .collect();
    let top = scored.iter().map(|s| s.1).fold(R::zero(), R::max);
    if top < R::of(1e-12) {
        // No coherence develops: rank by the bare matrix element instead.
        for entry in scored.iter_mut() {
            let (j, k) = entry.0;
            entry.1 = x1.matrix[[k, j]].norm();
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(cap);
    let mut pairs: Vec<(usize, usize)> = scored.into_iter().map(|(p, _)| p).collect();
    pairs.sort();
    Ok(pairs)
}

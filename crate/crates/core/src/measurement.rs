//! Sequential ground-state filtering measurement of an arbitrary observable.
//!
//! Step `k` maps the eigenstate `|ψ_k⟩` onto `|g,0⟩` with `Û_k†`, asks whether
//! the ion is in `|g,0⟩`, and maps back with `Û_k`. A "yes" at step `k` leaves
//! the ion in `|ψ_k⟩` and reports `a_k`; a "no" removes the `|ψ_k⟩` component
//! and the protocol moves on to `k + 1`. The product of the conditional
//! firing probabilities telescopes to the Born rule.

use crate::error::{Error, Result};
use crate::hamiltonians::{TrapParams, WaveConfig};
use crate::hilbert::{apply, inner_unchecked, make_joint_space, JointIndex, OperatorMatrix, SpaceDescriptor, StateVector, DEGENERACY_TOL};
use crate::num::{czero, Real, C};
use crate::observables::{pad_to, ObservableBasis};
use crate::propagator::{FullPropagator, IntegratorConfig};
use crate::pulse_compiler::{compile, invert};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Residual probability below which the complement of `|ψ_k⟩` is treated as
/// empty, so that step `k` fires with certainty.
pub const RESIDUE_TOL: f64 = 1e-10;

/// Extra phonon levels carried above the basis truncation in full mode.
pub const PHONON_PADDING: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullModeConfig<T> {
    pub trap: TrapParams<T>,
    pub q: T,
    pub wave: WaveConfig,
    pub integrator: IntegratorConfig<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ProtocolMode<T> {
    /// `Û_k` are exact basis changes.
    Ideal,
    /// `Û_k` are compiled pulse schedules played under the exact Hamiltonian.
    Full(FullModeConfig<T>),
}

/// One measurement outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord<T> {
    pub outcome_k: usize,
    pub eigenvalue: T,
    pub steps_taken: usize,
    /// `|⟨ψ_k|post-measurement state⟩|²`.
    pub final_fidelity: T,
    pub seed: u64,
    /// No filter fired; the outcome was attributed to the last step.
    pub forced: bool,
}

/// Both branches of the `|g,0⟩` filter.
#[derive(Debug, Clone)]
pub struct FilterBranches<T> {
    pub p_yes: T,
    pub yes_state: StateVector<T>,
    pub p_no: T,
    /// `None` when the complement branch is empty.
    pub no_state: Option<StateVector<T>>,
}

impl<T: Real> FilterBranches<T> {
    pub fn no_branch(&self) -> Result<&StateVector<T>> {
        self.no_state.as_ref().ok_or(Error::EmptyBranch { prob: self.p_no.to_f64_lossy() })
    }
}

/// Ideal projective filter distinguishing `|g,0⟩` from its complement. Flat
/// index 0 is `|g,0⟩` in both the joint and the phonon-only layout.
pub fn filter_ground<T: Real>(state: &StateVector<T>) -> FilterBranches<T> {
    let total = state.norm_sqr();
    let p_yes = state[0].norm_sqr() / total;
    let p_no = T::one() - p_yes;
    let mut no = state.clone();
    no[0] = czero();
    let no_state = if no.norm_sqr() / total > T::lit(DEGENERACY_TOL) { no.normalized().ok() } else { None };
    FilterBranches { p_yes, yes_state: StateVector::basis(state.dim(), 0), p_no, no_state }
}

#[derive(Debug)]
enum Engine<T> {
    Ideal,
    Full {
        space: SpaceDescriptor,
        forward: Vec<OperatorMatrix<T>>,
        inverse: Vec<OperatorMatrix<T>>,
    },
}

/// Outcome of a single protocol step.
#[derive(Debug, Clone)]
pub struct StepOutcome<T> {
    pub fired: bool,
    pub next_state: StateVector<T>,
}

/// A ready-to-run measurement of one observable. Construction compiles and
/// propagates all `Û_k` in full mode; afterwards the value is immutable and
/// can be shared between worker threads.
#[derive(Debug)]
pub struct Protocol<T> {
    basis: ObservableBasis<T>,
    engine: Engine<T>,
    targets: Vec<StateVector<T>>,
    efficiency: T,
}

impl<T: Real> Protocol<T> {
    pub fn new(basis: ObservableBasis<T>, mode: &ProtocolMode<T>) -> Result<Self> {
        match mode {
            ProtocolMode::Ideal => {
                let targets = basis.eigenstates.iter().map(|v| StateVector::from_amps(v.clone())).collect();
                Ok(Protocol { basis, engine: Engine::Ideal, targets, efficiency: T::one() })
            }
            ProtocolMode::Full(cfg) => {
                let space = make_joint_space(basis.n + PHONON_PADDING);
                let mut prop = FullPropagator::new(cfg.trap, space, cfg.integrator)?;
                let mut forward = Vec::with_capacity(basis.len());
                let mut inverse = Vec::with_capacity(basis.len());
                let mut targets = Vec::with_capacity(basis.len());
                for psi in &basis.eigenstates {
                    let sched = compile(psi, &cfg.trap, cfg.q, cfg.wave)?;
                    forward.push(prop.sequence_unitary(&sched.pulses(&cfg.trap)?)?);
                    inverse.push(prop.sequence_unitary(&invert(&sched).pulses(&cfg.trap)?)?);
                    targets.push(space.embed_ground(psi)?);
                }
                Ok(Protocol { basis, engine: Engine::Full { space, forward, inverse }, targets, efficiency: T::one() })
            }
        }
    }

    /// Probability that the fluorescence detector registers a present `|g,0⟩`.
    pub fn with_detector_efficiency(mut self, efficiency: T) -> Result<Self> {
        if !(efficiency > T::zero() && efficiency <= T::one()) {
            return Err(Error::invalid(format!("detector efficiency must lie in (0, 1], got {efficiency}")));
        }
        self.efficiency = efficiency;
        Ok(self)
    }

    pub fn basis(&self) -> &ObservableBasis<T> {
        &self.basis
    }

    pub fn is_full(&self) -> bool {
        matches!(self.engine, Engine::Full { .. })
    }

    /// State the protocol acts on for phonon coefficients `coeffs`.
    pub fn prepare(&self, coeffs: &[C<T>]) -> Result<StateVector<T>> {
        let v = match &self.engine {
            Engine::Ideal => StateVector::from_amps(pad_to(coeffs, self.basis.dim())?),
            Engine::Full { space, .. } => {
                if coeffs.len() > self.basis.dim() {
                    return Err(Error::DimensionMismatch { expected: self.basis.dim(), found: coeffs.len() });
                }
                space.embed_ground(coeffs)?
            }
        };
        v.normalized()
    }

    /// `|⟨ψ_k|state⟩|²` in this protocol's representation.
    pub fn overlap(&self, k: usize, state: &StateVector<T>) -> T {
        inner_unchecked(self.targets[k].amps(), state.amps()).norm_sqr()
    }

    /// One filter step for eigenstate `k`.
    pub fn step<R: Rng>(&self, state: &StateVector<T>, k: usize, rng: &mut R) -> Result<StepOutcome<T>> {
        if k >= self.basis.len() {
            return Err(Error::invalid(format!("step {k} outside basis of size {}", self.basis.len())));
        }
        let mut rng_fire = |p_yes: T| -> (bool, bool) {
            let collapsed = rng.gen::<f64>() < p_yes.to_f64_lossy();
            let fired = collapsed && (self.efficiency >= T::one() || rng.gen::<f64>() < self.efficiency.to_f64_lossy());
            (collapsed, fired)
        };
        let (fired, next_state) = match &self.engine {
            Engine::Ideal => {
                // Û_k† followed by projection onto |0⟩ is projection onto |ψ_k⟩
                let psi = &self.targets[k];
                let total = state.norm_sqr();
                let amp = inner_unchecked(psi.amps(), state.amps());
                let p_yes = amp.norm_sqr() / total;
                let (collapsed, fired) = rng_fire(p_yes);
                if collapsed {
                    (fired, psi.clone())
                } else {
                    let mut rest = state.clone();
                    for (r, p) in (0..rest.dim()).zip(psi.amps()) {
                        rest[r] -= p * amp;
                    }
                    if rest.norm_sqr() / total <= T::lit(RESIDUE_TOL) {
                        return Err(Error::EmptyBranch { prob: (T::one() - p_yes).to_f64_lossy() });
                    }
                    (false, rest.normalized()?)
                }
            }
            Engine::Full { forward, inverse, .. } => {
                let branches = filter_ground(&apply(&inverse[k], state)?);
                let (collapsed, fired) = rng_fire(branches.p_yes);
                let post = if collapsed { branches.yes_state } else { branches.no_branch()?.clone() };
                (fired, apply(&forward[k], &post)?)
            }
        };
        Ok(StepOutcome { fired, next_state })
    }

    /// Runs the protocol once with a generator seeded from `seed`.
    pub fn run_single(&self, coeffs: &[C<T>], seed: u64) -> Result<MeasurementRecord<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = self.prepare(coeffs)?;
        let last = self.basis.len() - 1;
        for k in 0..=last {
            match self.step(&state, k, &mut rng) {
                Ok(out) => {
                    state = out.next_state;
                    if out.fired {
                        return Ok(self.record(k, k + 1, &state, seed, false));
                    }
                }
                // nothing left outside |ψ_k⟩: the filter fires with certainty
                Err(Error::EmptyBranch { .. }) => {
                    let state = self.collapse_to(k)?;
                    return Ok(self.record(k, k + 1, &state, seed, false));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(self.record(last, last + 1, &state, seed, true))
    }

    fn collapse_to(&self, k: usize) -> Result<StateVector<T>> {
        match &self.engine {
            Engine::Ideal => Ok(self.targets[k].clone()),
            Engine::Full { forward, space, .. } => apply(&forward[k], &space.basis_state(JointIndex::g(0))),
        }
    }

    fn record(&self, k: usize, steps: usize, state: &StateVector<T>, seed: u64, forced: bool) -> MeasurementRecord<T> {
        MeasurementRecord {
            outcome_k: k,
            eigenvalue: self.basis.eigenvalues[k],
            steps_taken: steps,
            final_fidelity: self.overlap(k, state),
            seed,
            forced,
        }
    }

    /// Runs `trials` independent measurements in parallel on the current
    /// rayon pool. Trial `i` uses [`trial_seed`]`(seed, i)`, so results do not
    /// depend on the number of workers.
    pub fn run_trials(&self, coeffs: &[C<T>], trials: usize, seed: u64) -> Result<TrialSummary<T>> {
        if trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        let records = (0..trials)
            .into_par_iter()
            .map(|i| self.run_single(coeffs, trial_seed(seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let mut counts = vec![0u64; self.basis.len()];
        for r in &records {
            counts[r.outcome_k] += 1;
        }
        Ok(TrialSummary { counts, records })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary<T> {
    pub counts: Vec<u64>,
    pub records: Vec<MeasurementRecord<T>>,
}

impl<T: Real> TrialSummary<T> {
    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.records.len() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    pub fn forced_count(&self) -> usize {
        self.records.iter().filter(|r| r.forced).count()
    }
}

/// Per-trial seed derived from the master seed (SplitMix64 finalizer).
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Conditional firing probability of every step when the protocol is run to
/// exhaustion without sampling: `p_k = |⟨ψ_k|φ_{k-1}⟩|²`, with `φ_{k-1}` the
/// renormalized state after the first `k` "no" answers.
pub fn protocol_conditionals<T: Real>(state: &[C<T>], basis: &ObservableBasis<T>) -> Result<Vec<T>> {
    Error::check_dim(basis.dim(), state.len())?;
    let mut cur = StateVector::from_amps(state.to_vec()).normalized()?;
    let mut out = Vec::with_capacity(basis.len());
    let mut exhausted = false;
    for psi in &basis.eigenstates {
        if exhausted {
            out.push(T::zero());
            continue;
        }
        let amp = inner_unchecked(psi, cur.amps());
        out.push(amp.norm_sqr());
        for (r, p) in (0..cur.dim()).zip(psi) {
            cur[r] -= p * amp;
        }
        if cur.norm_sqr() <= T::lit(DEGENERACY_TOL) {
            exhausted = true;
        } else {
            cur.normalize()?;
        }
    }
    Ok(out)
}

/// Outcome distribution of the sequential protocol from the telescoping
/// product `P_k = Π_{j<k}(1 - p_j) · p_k`.
pub fn exact_protocol_distribution<T: Real>(state: &[C<T>], basis: &ObservableBasis<T>) -> Result<Vec<T>> {
    let cond = protocol_conditionals(state, basis)?;
    let mut survive = T::one();
    Ok(cond
        .into_iter()
        .map(|p| {
            let pk = survive * p;
            survive *= T::one() - p;
            pk
        })
        .collect())
}

/// Total-variation distance between two distributions.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::c;
    use crate::observables::{born_distribution, phase_basis, phase_state_coeffs, position_basis};

    #[test]
    fn filter_cases() {
        let s = make_joint_space(4);
        let f = filter_ground(&s.basis_state::<f64>(JointIndex::g(0)));
        assert_eq!(f.p_yes, 1.0);
        assert!(f.no_branch().is_err());
        let g1 = s.basis_state::<f64>(JointIndex::g(1));
        let f = filter_ground(&g1);
        assert_eq!(f.p_yes, 0.0);
        assert_eq!(f.no_branch().unwrap(), &g1);
        let h = 0.5f64.sqrt();
        let v = s.embed_ground(&[c(h, 0.0), czero(), czero(), c(h, 0.0)]).unwrap();
        let f = filter_ground(&v);
        assert!((f.p_yes - 0.5).abs() < 1e-15);
        assert!(f.no_branch().unwrap().max_abs_diff(&s.basis_state(JointIndex::g(3))) < 1e-15);
    }

    #[test]
    fn eigenstate_fires_at_its_step() {
        let p = Protocol::new(phase_basis::<f64>(6), &ProtocolMode::Ideal).unwrap();
        let psi3 = p.basis().eigenstates[3].clone();
        for seed in 0..50 {
            let r = p.run_single(&psi3, seed).unwrap();
            assert_eq!((r.outcome_k, r.steps_taken), (3, 4));
            assert!(1.0 - r.final_fidelity < 1e-12);
            assert!(!r.forced);
        }
    }

    #[test]
    fn orthogonal_state_never_fires_and_is_unchanged() {
        let p = Protocol::new(phase_basis::<f64>(4), &ProtocolMode::Ideal).unwrap();
        let psi1 = StateVector::from_amps(p.basis().eigenstates[1].clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let out = p.step(&psi1, 0, &mut rng).unwrap();
            assert!(!out.fired);
            assert!(out.next_state.max_abs_diff(&psi1) < 1e-14);
        }
    }

    #[test]
    fn two_component_superposition_outcomes() {
        let p = Protocol::new(position_basis::<f64>(5).unwrap(), &ProtocolMode::Ideal).unwrap();
        let h = 0.5f64.sqrt();
        let v: Vec<C<f64>> = (0..6).map(|r| (p.basis().eigenstates[0][r] + p.basis().eigenstates[1][r]) * h).collect();
        for seed in 0..200 {
            assert!(p.run_single(&v, seed).unwrap().outcome_k <= 1);
        }
    }

    #[test]
    fn second_step_probability_is_born() {
        // (1 - P_0) |⟨0|χ_1⟩|² = P_1
        let b = phase_basis::<f64>(8);
        let v = phase_state_coeffs(8, 2.0);
        let cond = protocol_conditionals(&v, &b).unwrap();
        let born = born_distribution(&v, &b).unwrap();
        assert!(((1.0 - cond[0]) * cond[1] - born[1]).abs() < 1e-12);
        assert!((cond[0] - born[0]).abs() < 1e-15);
    }

    #[test]
    fn exact_distribution_edge_cases() {
        let b = phase_basis::<f64>(5);
        let d = exact_protocol_distribution(&b.eigenstates[2], &b).unwrap();
        for (k, p) in d.iter().enumerate() {
            assert!((p - if k == 2 { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        let s = 1.0 / 6f64.sqrt();
        let uniform: Vec<C<f64>> = (0..6).map(|r| b.eigenstates.iter().map(|e| e[r]).sum::<C<f64>>() * s).collect();
        let d = exact_protocol_distribution(&uniform, &b).unwrap();
        assert!(d.iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-12));
        assert!(exact_protocol_distribution(&uniform[..3], &b).is_err());
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..1000).map(|i| trial_seed(42, i)).collect();
        let mut s = a.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 1000);
        assert_eq!(trial_seed(42, 7), a[7]);
        assert_ne!(trial_seed(43, 7), a[7]);
    }

    #[test]
    fn one_trial_reproduces_run_single() {
        let p = Protocol::new(phase_basis::<f64>(8), &ProtocolMode::Ideal).unwrap();
        let v = phase_state_coeffs(8, 2.0);
        let t = p.run_trials(&v, 1, 99).unwrap();
        assert_eq!(t.records[0], p.run_single(&v, trial_seed(99, 0)).unwrap());
        assert!(p.run_trials(&v, 0, 99).is_err());
    }

    #[test]
    fn detector_efficiency_validation() {
        let p = Protocol::new(phase_basis::<f64>(2), &ProtocolMode::Ideal).unwrap();
        assert!(Protocol::new(phase_basis::<f64>(2), &ProtocolMode::Ideal).unwrap().with_detector_efficiency(0.0).is_err());
        let p = p.with_detector_efficiency(0.5).unwrap();
        let t = p.run_trials(&p.basis().eigenstates[0].clone(), 400, 1).unwrap();
        // a missed detection leaves |ψ_0⟩, which no later step can catch
        assert!(t.forced_count() > 100 && t.forced_count() < 300);
    }

    proptest::proptest! {
        #[test]
        fn telescoping_matches_born(seed in 0u64..1000, n in 1usize..=16, position in proptest::bool::ANY) {
            use crate::harness::random_state;
            let basis = if position { position_basis::<f64>(n).unwrap() } else { phase_basis::<f64>(n) };
            let v = random_state(n + 1, &mut ChaCha8Rng::seed_from_u64(seed));
            let exact = exact_protocol_distribution(&v, &basis).unwrap();
            let born = born_distribution(&v, &basis).unwrap();
            for (a, b) in exact.iter().zip(&born) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
            proptest::prop_assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}

//! Compiles a target motional superposition into a laser-pulse schedule.
//!
//! The compiler runs the problem backwards: starting from the target state it
//! alternately empties the top ground level into the excited level below it
//! (a diagonal pulse) and that excited level into the ground level next to it
//! (a vertical pulse), tracking exactly what every other resonant pair does
//! under the same pulse. Reversing the resulting list and shifting every laser
//! phase by π yields the synthesis schedule from `|g,0⟩`.

use crate::error::{Error, Result};
use crate::hamiltonians::{effective_rabi, LaserPulse, PulseKind, TrapParams, WaveConfig};
use crate::hilbert::{inner_product, make_joint_space, JointIndex, SpaceDescriptor, StateVector};
use crate::num::{cis, norm_tol, wrap_angle, Real, C};
use crate::propagator::evolve_ideal;
use serde::{Deserialize, Serialize};

/// Amplitude below which a level counts as empty and its pulse is omitted.
pub const SKIP_TOL: f64 = 1e-13;

/// Two-level rotation
/// ```text
/// U = [[cos θ, -e^{iχ} sin θ], [e^{-iχ} sin θ, cos θ]]    in the (|e⟩, |g⟩) basis
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<T> {
    pub theta: T,
    pub chi: T,
}

impl<T: Real> Rotation<T> {
    /// Applies the rotation to `(a_g, a_e)`, returning the new `(a_g, a_e)`.
    pub fn apply(&self, a_g: C<T>, a_e: C<T>) -> (C<T>, C<T>) {
        let (s, co) = self.theta.sin_cos();
        let e_out = a_e.scale(co) - cis(self.chi) * a_g.scale(s);
        let g_out = cis(-self.chi) * a_e.scale(s) + a_g.scale(co);
        (g_out, e_out)
    }

    pub fn inverse(&self) -> Self {
        Rotation { theta: self.theta, chi: wrap_angle(self.chi + T::PI()) }
    }
}

fn check_pair<T: Real>(r_g: T, r_e: T) -> Result<()> {
    if r_g < T::zero() || r_e < T::zero() {
        return Err(Error::invalid("amplitude magnitudes must be non-negative"));
    }
    if r_g * r_g + r_e * r_e <= T::zero() {
        return Err(Error::invalid("both amplitudes are zero; rotation undefined"));
    }
    Ok(())
}

/// Rotation moving all of `r_g e^{iψ_g}|g⟩ + r_e e^{iψ_e}|e⟩` into `|g⟩`.
/// Returns the rotation and the phase of the final amplitude.
pub fn rotation_to_ground<T: Real>(r_g: T, psi_g: T, r_e: T, psi_e: T) -> Result<(Rotation<T>, T)> {
    check_pair(r_g, r_e)?;
    let theta = r_e.atan2(r_g);
    Ok((Rotation { theta, chi: wrap_angle(psi_e - psi_g) }, psi_g))
}

/// Rotation moving all of the pair into `|e⟩`.
pub fn rotation_to_excited<T: Real>(r_g: T, psi_g: T, r_e: T, psi_e: T) -> Result<(Rotation<T>, T)> {
    check_pair(r_g, r_e)?;
    let theta = r_g.atan2(r_e);
    Ok((Rotation { theta, chi: wrap_angle(psi_e - psi_g + T::PI()) }, psi_e))
}

/// Laser Rabi frequency set by the quality factor `q` for a state whose top
/// occupied phonon level is `n_top`.
pub fn rabi_from_quality<T: Real>(q: T, trap: &TrapParams<T>, n_top: usize, kind: PulseKind) -> Result<T> {
    if !(q > T::zero()) {
        return Err(Error::invalid(format!("quality factor must be positive, got {q}")));
    }
    trap.validate()?;
    let two = T::lit(2.0);
    match kind {
        PulseKind::Vertical => {
            let s = T::from_usize_lossy(n_top + 1) * trap.eta;
            Ok(two * q * T::lit(4.0) * trap.nu / (s * s))
        }
        PulseKind::Diagonal => {
            if n_top == 0 {
                return Err(Error::invalid("diagonal Rabi frequency undefined for a state with N = 0"));
            }
            Ok(two * q * trap.nu * trap.eta / T::from_usize_lossy(n_top))
        }
    }
}

/// Laser phase that makes a pulse act as `rotation` on the resonant pair of
/// phonon label `n`, whose effective coupling is `rabi`.
pub fn laser_phase<T: Real>(rotation: &Rotation<T>, rabi: C<T>) -> T {
    wrap_angle(rotation.chi - T::FRAC_PI_2() - rabi.arg())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Maps `|g,0⟩` to the target.
    Synthesis,
    /// Maps the target back to `|g,0⟩`.
    Inverse,
}

/// One pulse of a schedule; its detuning follows from `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseStep<T> {
    pub kind: PulseKind,
    pub wave: crate::hamiltonians::Wave,
    pub omega: T,
    pub phi: T,
    pub duration: T,
}

impl<T: Real> PulseStep<T> {
    pub fn to_pulse(&self, trap: &TrapParams<T>) -> Result<LaserPulse<T>> {
        LaserPulse::new(self.kind, self.wave, self.omega, self.phi, self.duration, trap)
    }

    fn inverted(&self) -> Self {
        PulseStep { phi: wrap_angle(self.phi + T::PI()), ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule<T> {
    pub steps: Vec<PulseStep<T>>,
    pub target_n: usize,
    pub q: T,
    pub direction: Direction,
}

impl<T: Real> Schedule<T> {
    pub fn empty(target_n: usize, q: T) -> Self {
        Schedule { steps: Vec::new(), target_n, q, direction: Direction::Synthesis }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn pulses(&self, trap: &TrapParams<T>) -> Result<Vec<LaserPulse<T>>> {
        self.steps.iter().map(|s| s.to_pulse(trap)).collect()
    }

    pub fn total_time(&self) -> T {
        self.steps.iter().fold(T::zero(), |acc, s| acc + s.duration)
    }

    /// Total duration as the dimensionless `ν t / 2π`.
    pub fn nu_t_over_2pi(&self, trap: &TrapParams<T>) -> T {
        self.total_time() * trap.nu / T::TAU()
    }

    /// The step list as a JSON array of `{kind, wave, omega, phi, duration}`.
    pub fn steps_to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.steps)?)
    }

    pub fn steps_from_json(json: &str) -> Result<Vec<PulseStep<T>>> {
        Ok(serde_json::from_str(json)?)
    }

    /// Plays the schedule under the ideal block-diagonal Hamiltonians.
    pub fn run_ideal(&self, state: &StateVector<T>, trap: &TrapParams<T>) -> Result<StateVector<T>> {
        let mut s = state.clone();
        for p in self.pulses(trap)? {
            s = evolve_ideal(&s, &p, trap)?;
        }
        Ok(s)
    }
}

/// Reverses the step order and shifts every laser phase by π.
pub fn invert<T: Real>(s: &Schedule<T>) -> Schedule<T> {
    Schedule {
        steps: s.steps.iter().rev().map(PulseStep::inverted).collect(),
        target_n: s.target_n,
        q: s.q,
        direction: match s.direction {
            Direction::Synthesis => Direction::Inverse,
            Direction::Inverse => Direction::Synthesis,
        },
    }
}

/// `F = |⟨a|b⟩|²`.
pub fn fidelity<T: Real>(a: &StateVector<T>, b: &StateVector<T>) -> Result<T> {
    Ok(inner_product(a, b)?.norm_sqr())
}

/// Highest phonon level with a non-negligible amplitude.
pub fn top_level<T: Real>(target: &[C<T>]) -> usize {
    target.iter().rposition(|c| c.norm() > T::lit(SKIP_TOL)).unwrap_or(0)
}

/// Compiles `Σ c_n |g,n⟩` into a synthesis schedule acting on `|g,0⟩`.
pub fn compile<T: Real>(target: &[C<T>], trap: &TrapParams<T>, q: T, wave: WaveConfig) -> Result<Schedule<T>> {
    trap.validate()?;
    if target.is_empty() {
        return Err(Error::invalid("empty target coefficient list"));
    }
    let norm_sq = target.iter().fold(T::zero(), |a, c| a + c.norm_sqr());
    if (norm_sq - T::one()).abs() > norm_tol() {
        return Err(Error::Unnormalized { norm_sq: norm_sq.to_f64_lossy() });
    }
    let n_top = top_level(target);
    if n_top == 0 {
        return Ok(Schedule::empty(0, q));
    }
    let omega_v = rabi_from_quality(q, trap, n_top, PulseKind::Vertical)?;
    let omega_d = rabi_from_quality(q, trap, n_top, PulseKind::Diagonal)?;
    let space: SpaceDescriptor = make_joint_space(n_top);
    let mut state = space.embed_ground(&target[..=n_top])?;
    let skip = T::lit(SKIP_TOL);
    let mut coalescing = Vec::with_capacity(2 * n_top);

    let mut emit = |state: &mut StateVector<T>, kind: PulseKind, omega: T, n_pair: usize, rot: Rotation<T>| -> Result<()> {
        let wave_k = wave.wave_for(kind);
        let rabi = effective_rabi(kind, wave_k, omega, trap.eta, n_pair);
        if rabi.norm() <= T::lit(1e-12) * omega {
            return Err(Error::invalid(format!(
                "effective Rabi frequency of the {kind:?} pair n={n_pair} vanishes at η={}",
                trap.eta
            )));
        }
        let step = PulseStep {
            kind,
            wave: wave_k,
            omega,
            phi: laser_phase(&rot, rabi),
            duration: T::lit(2.0) * rot.theta / rabi.norm(),
        };
        *state = evolve_ideal(state, &step.to_pulse(trap)?, trap)?;
        coalescing.push(step);
        Ok(())
    };

    for n in (1..=n_top).rev() {
        let g_top = space.flatten(JointIndex::g(n));
        let e_below = space.flatten(JointIndex::e(n - 1));
        let (a_g, a_e) = (state[g_top], state[e_below]);
        if a_g.norm() > skip {
            let (rot, _) = rotation_to_excited(a_g.norm(), a_g.arg(), a_e.norm(), a_e.arg())?;
            emit(&mut state, PulseKind::Diagonal, omega_d, n - 1, rot)?;
        }
        let g_below = space.flatten(JointIndex::g(n - 1));
        let (a_g, a_e) = (state[g_below], state[e_below]);
        if a_e.norm() > skip {
            let (rot, _) = rotation_to_ground(a_g.norm(), a_g.arg(), a_e.norm(), a_e.arg())?;
            emit(&mut state, PulseKind::Vertical, omega_v, n - 1, rot)?;
        }
    }

    let coalesce = Schedule { steps: coalescing, target_n: n_top, q, direction: Direction::Inverse };
    Ok(invert(&coalesce))
}

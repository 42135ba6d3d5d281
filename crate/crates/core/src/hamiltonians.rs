//! Exact and rotating-wave Hamiltonians of a laser-driven trapped ion.
//!
//! Everything here lives in the interaction picture with respect to the
//! internal and motional free evolution. In that picture
//!
//! ```text
//! ⟨e,n| H(t) |g,m⟩ = (Ω/2) e^{iφ} e^{-iΔt} e^{iνt(n-m)} ⟨n| f(η(â+â†)) |m⟩
//! ```
//!
//! with `f(x) = e^{-ix}` for a travelling wave, `cos x` for an ion sitting at
//! a standing-wave antinode and `sin x` at a node. Resonant couplings (Δ = 0
//! on `n = m`, Δ = -ν on `n + 1 = m`) are static, which is what makes the
//! block-diagonal approximations time independent.

use crate::error::{Error, Result};
use crate::hilbert::{symmetric_tridiagonal_eigen, OperatorMatrix, SpaceDescriptor};
use crate::num::{c, cis, czero, Real, C};
use serde::{Deserialize, Serialize};

/// Trap frequency and Lamb-Dicke parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParams<T> {
    pub nu: T,
    pub eta: T,
}

impl<T: Real> TrapParams<T> {
    pub fn new(nu: T, eta: T) -> Result<Self> {
        let t = TrapParams { nu, eta };
        t.validate()?;
        Ok(t)
    }

    /// Unit trap frequency.
    pub fn with_eta(eta: T) -> Result<Self> {
        Self::new(T::one(), eta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > T::zero()) || !self.nu.is_finite() {
            return Err(Error::invalid(format!("trap frequency must be positive, got {}", self.nu)));
        }
        if !(self.eta > T::zero() && self.eta < T::lit(2.0)) {
            return Err(Error::invalid(format!("Lamb-Dicke parameter must lie in (0, 2), got {}", self.eta)));
        }
        Ok(())
    }

    /// Oscillation period `2π/ν`.
    pub fn period(&self) -> T {
        T::TAU() / self.nu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    /// Carrier: `|g,n⟩ ↔ |e,n⟩`.
    Vertical,
    /// Red sideband: `|g,n+1⟩ ↔ |e,n⟩`.
    Diagonal,
}

/// Spatial mode seen by the ion for one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wave {
    Travelling,
    StandingAntinode,
    StandingNode,
}

/// Laser configuration for a whole schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveConfig {
    Travelling,
    Standing,
}

impl WaveConfig {
    /// Standing-wave carrier pulses sit at an antinode, sideband pulses at a node.
    pub fn wave_for(self, kind: PulseKind) -> Wave {
        match (self, kind) {
            (WaveConfig::Travelling, _) => Wave::Travelling,
            (WaveConfig::Standing, PulseKind::Vertical) => Wave::StandingAntinode,
            (WaveConfig::Standing, PulseKind::Diagonal) => Wave::StandingNode,
        }
    }
}

impl std::str::FromStr for WaveConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "travelling" | "traveling" => Ok(WaveConfig::Travelling),
            "standing" => Ok(WaveConfig::Standing),
            other => Err(Error::invalid(format!("unknown wave configuration `{other}`"))),
        }
    }
}

impl std::fmt::Display for WaveConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WaveConfig::Travelling => "travelling",
            WaveConfig::Standing => "standing",
        })
    }
}

/// One laser pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserPulse<T> {
    pub omega: T,
    pub delta: T,
    pub phi: T,
    pub duration: T,
    pub wave: Wave,
    pub kind: PulseKind,
}

impl<T: Real> LaserPulse<T> {
    /// Builds a pulse with the detuning its kind requires (0 or -ν).
    pub fn new(kind: PulseKind, wave: Wave, omega: T, phi: T, duration: T, trap: &TrapParams<T>) -> Result<Self> {
        let delta = match kind {
            PulseKind::Vertical => T::zero(),
            PulseKind::Diagonal => -trap.nu,
        };
        let p = LaserPulse { omega, delta, phi, duration, wave, kind };
        p.validate(trap)?;
        Ok(p)
    }

    pub fn validate(&self, trap: &TrapParams<T>) -> Result<()> {
        if !(self.duration >= T::zero()) || !self.duration.is_finite() {
            return Err(Error::invalid(format!("pulse duration must be finite and >= 0, got {}", self.duration)));
        }
        let tol = T::lit(1e-12) * trap.nu;
        match self.kind {
            PulseKind::Vertical if self.delta.abs() > tol => {
                return Err(Error::invalid("vertical pulse must be resonant"))
            }
            PulseKind::Diagonal if (self.delta + trap.nu).abs() > tol => {
                return Err(Error::invalid("diagonal pulse must be detuned by -ν"))
            }
            _ => {}
        }
        match (self.kind, self.wave) {
            (PulseKind::Diagonal, Wave::StandingAntinode) => {
                Err(Error::invalid("an antinode position only supports vertical pulses"))
            }
            (PulseKind::Vertical, Wave::StandingNode) => {
                Err(Error::invalid("a node position only supports diagonal pulses"))
            }
            _ => Ok(()),
        }
    }
}

/// Generalized Laguerre polynomial `L_n^{(α)}(x)` by upward recurrence.
pub fn laguerre<T: Real>(n: usize, alpha: usize, x: T) -> T {
    let a = T::from_usize_lossy(alpha);
    let mut prev = T::one();
    if n == 0 {
        return prev;
    }
    let mut cur = T::one() + a - x;
    for k in 1..n {
        let kf = T::from_usize_lossy(k);
        let next = ((T::lit(2.0) * kf + T::one() + a - x) * cur - (kf + a) * prev) / (kf + T::one());
        prev = cur;
        cur = next;
    }
    cur
}

/// `⟨n| e^{-iη(â+â†)} |m⟩` on the untruncated Fock space.
pub fn displacement_element<T: Real>(n: usize, m: usize, eta: T) -> C<T> {
    let lo = n.min(m);
    let d = n.max(m) - lo;
    let mut pref = T::one();
    for j in lo + 1..=lo + d {
        pref *= eta / T::from_usize_lossy(j).sqrt();
    }
    let x = eta * eta;
    let mag = pref * (-x / T::lit(2.0)).exp() * laguerre(lo, d, x);
    // (-i)^d
    match d % 4 {
        0 => c(mag, T::zero()),
        1 => c(T::zero(), -mag),
        2 => c(-mag, T::zero()),
        _ => c(T::zero(), mag),
    }
}

/// Carrier effective Rabi frequency `Ω_n` from its finite binomial sum.
pub fn effective_rabi_vertical<T: Real>(omega: T, eta: T, n: usize) -> C<T> {
    let x = eta * eta;
    let mut term = T::one();
    let mut sum = T::one();
    for k in 1..=n {
        let kf = T::from_usize_lossy(k);
        term = term * T::from_usize_lossy(n - k + 1) / kf * (-x) / kf;
        sum += term;
    }
    c(omega * sum * (-x / T::lit(2.0)).exp(), T::zero())
}

/// Red-sideband effective Rabi frequency `Ω'_n` from its finite binomial sum.
pub fn effective_rabi_diagonal<T: Real>(omega: T, eta: T, n: usize) -> C<T> {
    let x = eta * eta;
    let np1 = T::from_usize_lossy(n + 1);
    let mut term = np1 * eta;
    let mut sum = term;
    for k in 1..=n {
        let kf = T::from_usize_lossy(k);
        term = term * T::from_usize_lossy(n + 1 - k) / (kf + T::one()) * (-x) / kf;
        sum += term;
    }
    c(T::zero(), -omega * sum * (-x / T::lit(2.0)).exp() / np1.sqrt())
}

/// Effective two-level coupling for the resonant pair of phonon label `n`:
/// `|g,n⟩↔|e,n⟩` (vertical) or `|g,n+1⟩↔|e,n⟩` (diagonal).
pub fn effective_rabi<T: Real>(kind: PulseKind, wave: Wave, omega: T, eta: T, n: usize) -> C<T> {
    match (kind, wave) {
        (PulseKind::Vertical, Wave::Travelling) => effective_rabi_vertical(omega, eta, n),
        (PulseKind::Diagonal, Wave::Travelling) => effective_rabi_diagonal(omega, eta, n),
        // diagonal elements of e^{-iηx} are real, so cos(ηx) shares them
        (PulseKind::Vertical, _) => effective_rabi_vertical(omega, eta, n),
        // sin(ηx) = i (e^{-iηx} - cos ηx); cos ηx has no odd-parity elements
        (PulseKind::Diagonal, _) => effective_rabi_diagonal(omega, eta, n) * c(T::zero(), T::one()),
    }
}

/// `f(η(â+â†))` on the truncated phonon space `0..=n_max`, evaluated through the
/// eigen-decomposition of the truncated position quadrature.
pub fn coupling_operator<T: Real>(wave: Wave, eta: T, n_max: usize) -> Result<OperatorMatrix<T>> {
    let dim = n_max + 1;
    let off: Vec<T> = (1..dim).map(|k| T::from_usize_lossy(k).sqrt()).collect();
    let eig = symmetric_tridiagonal_eigen(&vec![T::zero(); dim], &off)?;
    let f: Vec<C<T>> = eig
        .values
        .iter()
        .map(|&lam| {
            let x = eta * lam;
            match wave {
                Wave::Travelling => cis(-x),
                Wave::StandingAntinode => c(x.cos(), T::zero()),
                Wave::StandingNode => c(x.sin(), T::zero()),
            }
        })
        .collect();
    Ok(OperatorMatrix::from_fn(dim, |r, col| {
        (0..dim).fold(czero(), |acc, j| {
            acc + f[j].scale(eig.vectors[j][r] * eig.vectors[j][col])
        })
    }))
}

/// Precomputed time-dependent Hamiltonian of one pulse on a fixed space.
///
/// Only the `e`-row / `g`-column block `C(t)` is stored; the full matrix is
/// `[[0, C†], [C, 0]]` in (g, e) block order.
#[derive(Debug, Clone)]
pub struct PulseHamiltonian<T> {
    coupling: OperatorMatrix<T>,
    half_omega: T,
    phi: T,
    delta: T,
    nu: T,
    space: SpaceDescriptor,
}

impl<T: Real> PulseHamiltonian<T> {
    pub fn new(pulse: &LaserPulse<T>, trap: &TrapParams<T>, space: SpaceDescriptor) -> Result<Self> {
        pulse.validate(trap)?;
        Ok(PulseHamiltonian {
            coupling: coupling_operator(pulse.wave, trap.eta, space.n_max)?,
            half_omega: pulse.omega / T::lit(2.0),
            phi: pulse.phi,
            delta: pulse.delta,
            nu: trap.nu,
            space,
        })
    }

    pub fn space(&self) -> SpaceDescriptor {
        self.space
    }

    /// Upper bound on `‖H(t)‖₂` over all `t`.
    pub fn norm_bound(&self) -> T {
        // f(η x) has spectral norm ≤ 1 for all three waves
        self.half_omega.abs()
    }

    /// Largest angular frequency present in the time dependence of `H(t)`.
    pub fn max_frequency(&self) -> T {
        self.nu * T::from_usize_lossy(self.space.n_max) + self.delta.abs()
    }

    /// Fills `block[n * p + m] = ⟨e,n|H(t)|g,m⟩`.
    pub fn block_at(&self, t: T, block: &mut [C<T>]) {
        let p = self.space.phonon_dim();
        let global = cis(self.phi - self.delta * t).scale(self.half_omega);
        let step = cis(self.nu * t);
        let step_inv = step.conj();
        // e^{iνt n}
        let mut row_phase = global;
        for n in 0..p {
            let mut ph = row_phase;
            let row = &mut block[n * p..(n + 1) * p];
            for (m, out) in row.iter_mut().enumerate() {
                *out = ph * self.coupling[(n, m)];
                ph *= step_inv;
            }
            row_phase *= step;
        }
    }

    pub fn matrix_at(&self, t: T) -> OperatorMatrix<T> {
        let p = self.space.phonon_dim();
        let mut block = vec![czero(); p * p];
        self.block_at(t, &mut block);
        let mut h = OperatorMatrix::zeros(self.space.dim());
        for n in 0..p {
            for m in 0..p {
                let v = block[n * p + m];
                h[(n + p, m)] = v;
                h[(m, n + p)] = v.conj();
            }
        }
        h
    }
}

/// Exact interaction-picture Hamiltonian at instant `t`.
pub fn full_hamiltonian<T: Real>(
    t: T,
    pulse: &LaserPulse<T>,
    trap: &TrapParams<T>,
    space: SpaceDescriptor,
) -> Result<OperatorMatrix<T>> {
    Ok(PulseHamiltonian::new(pulse, trap, space)?.matrix_at(t))
}

/// Resonant-pair couplings `(g index, e index, ⟨e|H|g⟩)` of the block-diagonal
/// approximation.
pub(crate) fn resonant_pairs<T: Real>(
    pulse: &LaserPulse<T>,
    trap: &TrapParams<T>,
    space: SpaceDescriptor,
) -> Vec<(usize, usize, C<T>)> {
    let p = space.phonon_dim();
    let phase = cis(pulse.phi).scale(T::lit(0.5));
    match pulse.kind {
        PulseKind::Vertical => (0..p)
            .map(|n| (n, n + p, effective_rabi(pulse.kind, pulse.wave, pulse.omega, trap.eta, n) * phase))
            .collect(),
        PulseKind::Diagonal => (0..p.saturating_sub(1))
            .map(|n| (n + 1, n + p, effective_rabi(pulse.kind, pulse.wave, pulse.omega, trap.eta, n) * phase))
            .collect(),
    }
}

/// Time-independent block-diagonal approximation: isolated two-level systems
/// driven at their effective Rabi frequencies.
pub fn approx_hamiltonian<T: Real>(
    pulse: &LaserPulse<T>,
    trap: &TrapParams<T>,
    space: SpaceDescriptor,
) -> Result<OperatorMatrix<T>> {
    pulse.validate(trap)?;
    let mut h = OperatorMatrix::zeros(space.dim());
    for (g, e, w) in resonant_pairs(pulse, trap, space) {
        h[(e, g)] = w;
        h[(g, e)] = w.conj();
    }
    Ok(h)
}

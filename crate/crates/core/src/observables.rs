//! Measurement bases and test states on the truncated phonon space `0..=N`.

use crate::error::{Error, Result};
use crate::hilbert::{inner_unchecked, symmetric_tridiagonal_eigen};
use crate::num::{c, cis, czero, norm_tol, Real, C};
use serde::{Deserialize, Serialize};

/// Largest acceptable population lost to truncation when building a state.
pub const TRUNCATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Phase,
    Position,
}

impl std::str::FromStr for BasisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase" => Ok(BasisKind::Phase),
            "position" => Ok(BasisKind::Position),
            other => Err(Error::invalid(format!("unknown basis `{other}`"))),
        }
    }
}

/// Eigenvalues `a_k` (ascending) and eigenstates `|ψ_k⟩` of an observable on
/// phonon levels `0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableBasis<T> {
    pub kind: BasisKind,
    pub n: usize,
    pub eigenvalues: Vec<T>,
    pub eigenstates: Vec<Vec<C<T>>>,
}

impl<T: Real> ObservableBasis<T> {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn build(kind: BasisKind, n: usize) -> Result<Self> {
        match kind {
            BasisKind::Phase => Ok(phase_basis(n)),
            BasisKind::Position => position_basis(n),
        }
    }

    /// `max |⟨ψ_j|ψ_k⟩ - δ_jk|`.
    pub fn orthonormality_defect(&self) -> T {
        let mut worst = T::zero();
        for (j, a) in self.eigenstates.iter().enumerate() {
            for (k, b) in self.eigenstates.iter().enumerate() {
                let want = if j == k { T::one() } else { T::zero() };
                worst = worst.max((inner_unchecked(a, b) - c(want, T::zero())).norm());
            }
        }
        worst
    }

    /// `Σ_k a_k |ψ_k⟩⟨ψ_k| v`.
    pub fn apply_observable(&self, v: &[C<T>]) -> Result<Vec<C<T>>> {
        Error::check_dim(self.dim(), v.len())?;
        let mut out = vec![czero(); self.dim()];
        for (a, psi) in self.eigenvalues.iter().zip(&self.eigenstates) {
            let w = inner_unchecked(psi, v).scale(*a);
            for (o, p) in out.iter_mut().zip(psi) {
                *o += p * w;
            }
        }
        Ok(out)
    }
}

/// Pegg-Barnett phase states `|φ_k⟩ = Σ_n e^{iφ_k n}|n⟩/√(N+1)`,
/// `φ_k = 2πk/(N+1)`.
pub fn phase_basis<T: Real>(n: usize) -> ObservableBasis<T> {
    let d = n + 1;
    let eigenvalues: Vec<T> = (0..d).map(|k| T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(d)).collect();
    let eigenstates = eigenvalues.iter().map(|&phi| phase_state_coeffs(n, phi)).collect();
    ObservableBasis { kind: BasisKind::Phase, n, eigenvalues, eigenstates }
}

/// Eigenstates of the truncated position quadrature `â + â†`.
pub fn position_basis<T: Real>(n: usize) -> Result<ObservableBasis<T>> {
    if n == 0 {
        return Err(Error::invalid("position basis needs N >= 1"));
    }
    let off: Vec<T> = (1..=n).map(|k| T::from_usize_lossy(k).sqrt()).collect();
    let eig = symmetric_tridiagonal_eigen(&vec![T::zero(); n + 1], &off)?;
    let eigenstates = eig
        .vectors
        .iter()
        .map(|v| v.iter().map(|&x| c(x, T::zero())).collect())
        .collect();
    Ok(ObservableBasis { kind: BasisKind::Position, n, eigenvalues: eig.values, eigenstates })
}

/// Physicists' Hermite polynomial `H_n(y)`.
pub fn hermite<T: Real>(n: usize, y: T) -> T {
    let two = T::lit(2.0);
    let mut prev = T::one();
    if n == 0 {
        return prev;
    }
    let mut cur = two * y;
    for k in 1..n {
        let next = two * y * cur - two * T::from_usize_lossy(k) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

pub fn phase_state_coeffs<T: Real>(n: usize, phi: T) -> Vec<C<T>> {
    let norm = T::one() / T::from_usize_lossy(n + 1).sqrt();
    (0..=n).map(|k| cis(phi * T::from_usize_lossy(k)).scale(norm)).collect()
}

/// `αⁿ/√(n!)` for `n = 0..=N` and the full-series norm `e^{|α|²}`.
fn coherent_series<T: Real>(alpha: C<T>, n: usize) -> Vec<C<T>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut term = c(T::one(), T::zero());
    out.push(term);
    for k in 1..=n {
        term *= alpha.unscale(T::from_usize_lossy(k).sqrt());
        out.push(term);
    }
    out
}

fn normalize_checked<T: Real>(mut v: Vec<C<T>>, full_norm_sq: T) -> Result<Vec<C<T>>> {
    let kept = v.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
    let loss = T::one() - kept / full_norm_sq;
    if loss.to_f64_lossy() > TRUNCATION_TOL {
        return Err(Error::Truncation { loss: loss.to_f64_lossy() });
    }
    let s = T::one() / kept.sqrt();
    v.iter_mut().for_each(|z| *z = z.scale(s));
    Ok(v)
}

/// Coherent state `|α⟩` truncated to `0..=N` and renormalized.
pub fn coherent_coeffs<T: Real>(alpha: C<T>, n: usize) -> Result<Vec<C<T>>> {
    normalize_checked(coherent_series(alpha, n), alpha.norm_sqr().exp())
}

/// Even cat state `|α⟩ + |-α⟩` truncated to `0..=N` and renormalized.
pub fn cat_coeffs<T: Real>(alpha: C<T>, n: usize) -> Result<Vec<C<T>>> {
    let series: Vec<C<T>> = coherent_series(alpha, n)
        .into_iter()
        .enumerate()
        .map(|(k, z)| if k % 2 == 0 { z.scale(T::lit(2.0)) } else { czero() })
        .collect();
    let x = alpha.norm_sqr();
    // Σ |αⁿ + (-α)ⁿ|²/n! = 2 e^{|α|²} (1 + e^{-2|α|²})
    let full = T::lit(2.0) * x.exp() * (T::one() + (-T::lit(2.0) * x).exp());
    normalize_checked(series, full)
}

/// Recipe for a motional state on levels `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateRecipe<T> {
    Explicit { coeffs: Vec<C<T>> },
    PhaseState { n: usize, phi: T },
    Coherent { alpha: C<T>, n: usize },
    Cat { alpha: C<T>, n: usize },
}

impl<T: Real> StateRecipe<T> {
    pub fn coefficients(&self) -> Result<Vec<C<T>>> {
        match self {
            StateRecipe::Explicit { coeffs } => {
                let norm_sq = coeffs.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
                if coeffs.is_empty() || (norm_sq - T::one()).abs() > norm_tol() {
                    return Err(Error::Unnormalized { norm_sq: norm_sq.to_f64_lossy() });
                }
                Ok(coeffs.clone())
            }
            StateRecipe::PhaseState { n, phi } => Ok(phase_state_coeffs(*n, *phi)),
            StateRecipe::Coherent { alpha, n } => coherent_coeffs(*alpha, *n),
            StateRecipe::Cat { alpha, n } => cat_coeffs(*alpha, *n),
        }
    }

    /// Top phonon level the recipe is defined on.
    pub fn n(&self) -> usize {
        match self {
            StateRecipe::Explicit { coeffs } => coeffs.len().saturating_sub(1),
            StateRecipe::PhaseState { n, .. } | StateRecipe::Coherent { n, .. } | StateRecipe::Cat { n, .. } => *n,
        }
    }

    /// Same recipe on a different truncation, where that makes sense.
    pub fn with_n(&self, n: usize) -> Self {
        match self.clone() {
            StateRecipe::Explicit { coeffs } => StateRecipe::Explicit { coeffs },
            StateRecipe::PhaseState { phi, .. } => StateRecipe::PhaseState { n, phi },
            StateRecipe::Coherent { alpha, .. } => StateRecipe::Coherent { alpha, n },
            StateRecipe::Cat { alpha, .. } => StateRecipe::Cat { alpha, n },
        }
    }
}

/// Zero-pads phonon coefficients to `dim` entries.
pub fn pad_to<T: Real>(coeffs: &[C<T>], dim: usize) -> Result<Vec<C<T>>> {
    if coeffs.len() > dim {
        return Err(Error::DimensionMismatch { expected: dim, found: coeffs.len() });
    }
    let mut v = coeffs.to_vec();
    v.resize(dim, czero());
    Ok(v)
}

/// `P_k = |⟨ψ_k|φ⟩|²`.
pub fn born_distribution<T: Real>(state: &[C<T>], basis: &ObservableBasis<T>) -> Result<Vec<T>> {
    Error::check_dim(basis.dim(), state.len())?;
    Ok(basis.eigenstates.iter().map(|psi| inner_unchecked(psi, state).norm_sqr()).collect())
}

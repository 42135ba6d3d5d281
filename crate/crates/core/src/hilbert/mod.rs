//! Dense complex linear algebra on the joint internal ⊗ phonon space.
//!
//! The joint space for a phonon cutoff `n_max` has dimension `2 (n_max + 1)`.
//! Ground-level states occupy the first half of the flat index range and
//! excited-level states the second half.

mod tridiag;

pub use tridiag::{symmetric_tridiagonal_eigen, TridiagEigen};

use crate::error::{Error, Result};
use crate::num::{c, cone, czero, Real, C};
use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

/// Weight below which a projected branch is treated as empty.
pub const DEGENERACY_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    G,
    E,
}

/// A `|level, n⟩` label in the joint space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointIndex {
    pub level: Level,
    pub phonons: usize,
}

impl JointIndex {
    pub fn g(phonons: usize) -> Self {
        JointIndex { level: Level::G, phonons }
    }

    pub fn e(phonons: usize) -> Self {
        JointIndex { level: Level::E, phonons }
    }
}

/// Shape of the joint two-level ⊗ truncated-phonon space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    pub n_max: usize,
}

/// Builds the joint space with phonon levels `0..=n_max`.
pub fn make_joint_space(n_max: usize) -> SpaceDescriptor {
    SpaceDescriptor { n_max }
}

impl SpaceDescriptor {
    pub fn dim(&self) -> usize {
        2 * self.phonon_dim()
    }

    pub fn phonon_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn flatten(&self, idx: JointIndex) -> usize {
        debug_assert!(idx.phonons <= self.n_max);
        match idx.level {
            Level::G => idx.phonons,
            Level::E => idx.phonons + self.phonon_dim(),
        }
    }

    pub fn unflatten(&self, flat: usize) -> JointIndex {
        debug_assert!(flat < self.dim());
        let p = self.phonon_dim();
        if flat < p {
            JointIndex::g(flat)
        } else {
            JointIndex::e(flat - p)
        }
    }

    /// `|level, n⟩` as a state vector.
    pub fn basis_state<T: Real>(&self, idx: JointIndex) -> StateVector<T> {
        StateVector::basis(self.dim(), self.flatten(idx))
    }

    /// Embeds phonon amplitudes `Σ c_n |n⟩` as `Σ c_n |g, n⟩`.
    pub fn embed_ground<T: Real>(&self, coeffs: &[C<T>]) -> Result<StateVector<T>> {
        if coeffs.len() > self.phonon_dim() {
            return Err(Error::DimensionMismatch { expected: self.phonon_dim(), found: coeffs.len() });
        }
        let mut amps = vec![czero(); self.dim()];
        amps[..coeffs.len()].copy_from_slice(coeffs);
        Ok(StateVector::from_amps(amps))
    }

    /// Total population in phonon levels `>= n` (both internal levels).
    pub fn population_at_or_above<T: Real>(&self, v: &StateVector<T>, n: usize) -> T {
        let p = self.phonon_dim();
        (n..p).fold(T::zero(), |acc, k| acc + v[k].norm_sqr() + v[k + p].norm_sqr())
    }
}

/// Complex amplitude vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector<T> {
    amps: Vec<C<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn from_amps(amps: Vec<C<T>>) -> Self {
        StateVector { amps }
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector { amps: vec![czero(); dim] }
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.amps[i] = cone();
        v
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C<T>] {
        &self.amps
    }

    pub fn into_amps(self) -> Vec<C<T>> {
        self.amps
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// Scales to unit norm. Fails on the zero vector.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n.to_f64_lossy() <= 0.0 {
            return Err(Error::EmptyBranch { prob: 0.0 });
        }
        let inv = T::one() / n;
        self.amps.iter_mut().for_each(|a| *a = a.scale(inv));
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn scale(&mut self, s: C<T>) {
        self.amps.iter_mut().for_each(|a| *a *= s);
    }

    /// `max_i |a_i - b_i|`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.amps
            .iter()
            .zip(&other.amps)
            .fold(T::zero(), |m, (a, b)| m.max((a - b).norm()))
    }
}

impl<T> Index<usize> for StateVector<T> {
    type Output = C<T>;
    fn index(&self, i: usize) -> &C<T> {
        &self.amps[i]
    }
}

impl<T> IndexMut<usize> for StateVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut C<T> {
        &mut self.amps[i]
    }
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner_product<T: Real>(a: &StateVector<T>, b: &StateVector<T>) -> Result<C<T>> {
    Error::check_dim(a.dim(), b.dim())?;
    Ok(inner_unchecked(a.amps(), b.amps()))
}

pub(crate) fn inner_unchecked<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix<T> {
    dim: usize,
    entries: Vec<C<T>>,
}

impl<T: Real> OperatorMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        OperatorMatrix { dim, entries: vec![czero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = cone();
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for col in 0..dim {
                entries.push(f(r, col));
            }
        }
        OperatorMatrix { dim, entries }
    }

    /// Diagonal matrix with the given entries.
    pub fn diagonal(diag: &[C<T>]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// `|v⟩⟨v|`.
    pub fn outer(v: &StateVector<T>) -> Self {
        Self::from_fn(v.dim(), |r, col| v[r] * v[col].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C<T>] {
        &self.entries
    }

    pub fn row(&self, r: usize) -> &[C<T>] {
        &self.entries[r * self.dim..(r + 1) * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |r, col| self[(col, r)].conj())
    }

    pub fn scaled(&self, s: C<T>) -> Self {
        OperatorMatrix { dim: self.dim, entries: self.entries.iter().map(|e| e * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Error::check_dim(self.dim, other.dim)?;
        Ok(OperatorMatrix {
            dim: self.dim,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(c(-T::one(), T::zero())))
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        Error::check_dim(self.dim, rhs.dim)?;
        let n = self.dim;
        let mut out = vec![czero(); n * n];
        for i in 0..n {
            let out_row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                let rhs_row = &rhs.entries[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(OperatorMatrix { dim: n, entries: out })
    }

    /// `self^k` by repeated squaring.
    pub fn powi(&self, mut k: u64) -> Self {
        let mut result = Self::identity(self.dim);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = result.matmul(&base).expect("square");
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base).expect("square");
            }
        }
        result
    }

    /// `max_ij |A_ij - B_ij|`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(T::zero(), |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn hermiticity_defect(&self) -> T {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn unitarity_defect(&self) -> T {
        let p = self.adjoint().matmul(self).expect("square");
        p.max_abs_diff(&Self::identity(self.dim))
    }

    /// `D · self · D†` for a diagonal unitary `D = diag(phases)`.
    pub fn conjugate_by_diagonal(&self, phases: &[C<T>]) -> Self {
        Self::from_fn(self.dim, |r, col| phases[r] * self[(r, col)] * phases[col].conj())
    }
}

impl<T> Index<(usize, usize)> for OperatorMatrix<T> {
    type Output = C<T>;
    fn index(&self, (r, col): (usize, usize)) -> &C<T> {
        &self.entries[r * self.dim + col]
    }
}

impl<T> IndexMut<(usize, usize)> for OperatorMatrix<T> {
    fn index_mut(&mut self, (r, col): (usize, usize)) -> &mut C<T> {
        &mut self.entries[r * self.dim + col]
    }
}

/// Exact matrix-vector product `M v`.
pub fn apply<T: Real>(m: &OperatorMatrix<T>, v: &StateVector<T>) -> Result<StateVector<T>> {
    Error::check_dim(m.dim(), v.dim())?;
    let amps = (0..m.dim()).map(|r| {
        m.row(r).iter().zip(v.amps()).fold(czero(), |acc, (a, x)| acc + a * x)
    });
    Ok(StateVector::from_amps(amps.collect()))
}

/// Projects `v` with the orthogonal projector `p`, returning the branch
/// weight `⟨v|P|v⟩` and the renormalized post-projection state.
pub fn project_and_normalize<T: Real>(
    v: &StateVector<T>,
    p: &OperatorMatrix<T>,
) -> Result<(T, StateVector<T>)> {
    let mut pv = apply(p, v)?;
    let prob = inner_product(v, &pv)?.re;
    if prob.to_f64_lossy() <= DEGENERACY_TOL {
        return Err(Error::EmptyBranch { prob: prob.to_f64_lossy() });
    }
    let n = pv.norm();
    pv.scale(c(T::one() / n, T::zero()));
    Ok((prob, pv))
}

/// Phonon annihilation operator `â` on levels `0..dim`.
pub fn annihilation<T: Real>(dim: usize) -> OperatorMatrix<T> {
    OperatorMatrix::from_fn(dim, |r, col| {
        if col == r + 1 {
            c(T::from_usize_lossy(col).sqrt(), T::zero())
        } else {
            czero()
        }
    })
}

/// `â + â†` on levels `0..dim`.
pub fn position_quadrature<T: Real>(dim: usize) -> OperatorMatrix<T> {
    let a = annihilation::<T>(dim);
    a.add(&a.adjoint()).expect("same dim")
}

/// Lifts a phonon-space operator `A` to `1 ⊗ A` on the joint space.
pub fn lift_phonon<T: Real>(space: &SpaceDescriptor, a: &OperatorMatrix<T>) -> Result<OperatorMatrix<T>> {
    let p = space.phonon_dim();
    Error::check_dim(p, a.dim())?;
    let mut m = OperatorMatrix::zeros(space.dim());
    for r in 0..p {
        for col in 0..p {
            m[(r, col)] = a[(r, col)];
            m[(r + p, col + p)] = a[(r, col)];
        }
    }
    Ok(m)
}

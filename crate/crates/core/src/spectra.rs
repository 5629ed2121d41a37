//! Spectral decompositions `H = Σ_m E_m P_m` and the projector families they
//! carry.
//!
//! A [`Blocks`] value is the projector family alone: it fixes a working basis
//! (the computational basis, or the eigenvector columns of a dense Hamiltonian)
//! and assigns every working-basis vector to one block. Block-coefficient maps,
//! Lüders projections and populations are all computed through it, so dense
//! `d × d` projectors are only built when [`Blocks::projector_matrix`] asks for
//! one.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, binomial};
use crate::C64;

/// Default relative tolerance used to merge numerically degenerate levels.
pub const DEFAULT_DEG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    /// Block `m` is the computational-basis range `offsets[m]..offsets[m + 1]`.
    Contiguous { offsets: Vec<usize> },
    /// Block label for every computational-basis index.
    Labelled { labels: Vec<usize> },
    /// Orthonormal columns of `vectors`, grouped contiguously by block.
    Eigenbasis { offsets: Vec<usize>, vectors: DMatrix<C64> },
}

/// A complete family of mutually orthogonal projectors on a `dim`-dimensional
/// space.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    dim: usize,
    ranks: Vec<usize>,
    layout: Layout,
}

/// One projector, either as computational-basis indices or as orthonormal
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub enum Projector {
    Indices(Vec<usize>),
    Columns(DMatrix<C64>),
}

fn offsets_of(ranks: &[usize]) -> Result<Vec<usize>> {
    let mut offsets = Vec::with_capacity(ranks.len() + 1);
    let mut acc = 0usize;
    offsets.push(0);
    for &r in ranks {
        if r == 0 {
            return Err(invalid("every block needs rank >= 1"));
        }
        acc = acc
            .checked_add(r)
            .ok_or_else(|| invalid("total dimension overflows usize"))?;
        offsets.push(acc);
    }
    Ok(offsets)
}

impl Blocks {
    /// Blocks occupying consecutive ranges of the computational basis.
    pub fn contiguous(ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        let offsets = offsets_of(&ranks)?;
        Ok(Self {
            dim: *offsets.last().unwrap(),
            ranks,
            layout: Layout::Contiguous { offsets },
        })
    }

    /// Blocks given by a label per computational-basis index.
    pub fn labelled(labels: Vec<usize>, count: usize) -> Result<Self> {
        if labels.is_empty() || count == 0 {
            return Err(Error::EmptySpectrum);
        }
        let mut ranks = vec![0usize; count];
        for &l in &labels {
            if l >= count {
                return Err(invalid("block label out of range"));
            }
            ranks[l] += 1;
        }
        if ranks.contains(&0) {
            return Err(invalid("every block needs rank >= 1"));
        }
        if labels.windows(2).all(|w| w[0] <= w[1]) {
            return Self::contiguous(ranks);
        }
        Ok(Self {
            dim: labels.len(),
            ranks,
            layout: Layout::Labelled { labels },
        })
    }

    /// Blocks spanned by groups of consecutive orthonormal columns.
    pub fn eigenbasis(vectors: DMatrix<C64>, ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        let offsets = offsets_of(&ranks)?;
        let dim = *offsets.last().unwrap();
        if vectors.nrows() != vectors.ncols() {
            return Err(Error::NotSquare {
                rows: vectors.nrows(),
                cols: vectors.ncols(),
            });
        }
        if vectors.nrows() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: vectors.nrows(),
            });
        }
        Ok(Self {
            dim,
            ranks,
            layout: Layout::Eigenbasis { offsets, vectors },
        })
    }

    /// The trivial family `{I}`.
    pub fn single(dim: usize) -> Result<Self> {
        Self::contiguous(vec![dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of blocks `N`.
    pub fn count(&self) -> usize {
        self.ranks.len()
    }

    pub fn rank(&self, m: usize) -> usize {
        self.ranks[m]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Whether the working basis is the computational basis.
    pub fn is_computational(&self) -> bool {
        !matches!(self.layout, Layout::Eigenbasis { .. })
    }

    /// Block containing working-basis vector `i`.
    pub fn level_of(&self, i: usize) -> usize {
        match &self.layout {
            Layout::Contiguous { offsets } | Layout::Eigenbasis { offsets, .. } => {
                offsets.partition_point(|&o| o <= i) - 1
            }
            Layout::Labelled { labels } => labels[i],
        }
    }

    /// Block label of every working-basis vector.
    pub fn labels(&self) -> Vec<usize> {
        match &self.layout {
            Layout::Labelled { labels } => labels.clone(),
            Layout::Contiguous { offsets } | Layout::Eigenbasis { offsets, .. } => {
                let mut out = Vec::with_capacity(self.dim);
                for (m, w) in offsets.windows(2).enumerate() {
                    out.extend(core::iter::repeat(m).take(w[1] - w[0]));
                }
                out
            }
        }
    }

    /// Working-basis indices belonging to block `m`.
    pub fn members(&self, m: usize) -> Vec<usize> {
        match &self.layout {
            Layout::Contiguous { offsets } | Layout::Eigenbasis { offsets, .. } => {
                (offsets[m]..offsets[m + 1]).collect()
            }
            Layout::Labelled { labels } => labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == m)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    /// First working-basis index of block `m`.
    pub fn first_member(&self, m: usize) -> usize {
        match &self.layout {
            Layout::Contiguous { offsets } | Layout::Eigenbasis { offsets, .. } => offsets[m],
            Layout::Labelled { labels } => labels.iter().position(|&l| l == m).unwrap(),
        }
    }

    pub fn projector(&self, m: usize) -> Projector {
        match &self.layout {
            Layout::Eigenbasis { offsets, vectors } => {
                Projector::Columns(vectors.columns(offsets[m], offsets[m + 1] - offsets[m]).into_owned())
            }
            _ => Projector::Indices(self.members(m)),
        }
    }

    /// Dense `d × d` matrix of projector `m`.
    pub fn projector_matrix(&self, m: usize) -> DMatrix<C64> {
        match self.projector(m) {
            Projector::Indices(idx) => {
                let mut p = DMatrix::zeros(self.dim, self.dim);
                for i in idx {
                    p[(i, i)] = C64::new(1.0, 0.0);
                }
                p
            }
            Projector::Columns(v) => &v * v.adjoint(),
        }
    }

    /// Unitary whose columns form the working basis, when it is not the
    /// computational one.
    pub fn change_of_basis(&self) -> Option<&DMatrix<C64>> {
        match &self.layout {
            Layout::Eigenbasis { vectors, .. } => Some(vectors),
            _ => None,
        }
    }

    /// Working-basis vector `i` expressed in the computational basis.
    pub fn basis_vector(&self, i: usize) -> DVector<C64> {
        match self.change_of_basis() {
            Some(v) => v.column(i).into_owned(),
            None => {
                let mut e = DVector::zeros(self.dim);
                e[i] = C64::new(1.0, 0.0);
                e
            }
        }
    }

    pub(crate) fn check_operator(&self, op: &DMatrix<C64>) -> Result<()> {
        if op.nrows() != op.ncols() {
            return Err(Error::NotSquare {
                rows: op.nrows(),
                cols: op.ncols(),
            });
        }
        if op.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: op.nrows(),
            });
        }
        Ok(())
    }

    /// Express an operator in the working basis.
    pub fn to_working(&self, op: &DMatrix<C64>) -> DMatrix<C64> {
        match self.change_of_basis() {
            Some(v) => v.adjoint() * op * v,
            None => op.clone(),
        }
    }

    /// Inverse of [`Blocks::to_working`].
    pub fn from_working(&self, op: DMatrix<C64>) -> DMatrix<C64> {
        match self.change_of_basis() {
            Some(v) => v * op * v.adjoint(),
            None => op,
        }
    }

    /// `Σ_{m,n} coeff[m][n] P_m X P_n`.
    pub fn schur(&self, coeff: &DMatrix<C64>, op: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        self.check_operator(op)?;
        let labels = self.labels();
        let mut w = self.to_working(op);
        for j in 0..self.dim {
            let lj = labels[j];
            for i in 0..self.dim {
                w[(i, j)] *= coeff[(labels[i], lj)];
            }
        }
        Ok(self.from_working(w))
    }

    /// `Σ_m P_m X P_m`.
    pub fn luders(&self, op: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        self.schur(&DMatrix::identity(self.count(), self.count()), op)
    }

    /// `tr(P_m X)` for every block (real part).
    pub fn populations(&self, op: &DMatrix<C64>) -> Result<Vec<f64>> {
        self.check_operator(op)?;
        let mut pops = vec![0.0; self.count()];
        match self.change_of_basis() {
            Some(v) => {
                for (i, l) in self.labels().into_iter().enumerate() {
                    let col = v.column(i);
                    pops[l] += (col.adjoint() * op * col)[(0, 0)].re;
                }
            }
            None => {
                for (i, l) in self.labels().into_iter().enumerate() {
                    pops[l] += op[(i, i)].re;
                }
            }
        }
        Ok(pops)
    }

    /// Product family `{P_α ⊗ Π_β}` labelled `α · other.count() + β`.
    ///
    /// Only families in the computational basis are supported.
    pub fn tensor(&self, other: &Blocks) -> Result<Blocks> {
        if !self.is_computational() || !other.is_computational() {
            return Err(invalid("tensor products need computational-basis blocks"));
        }
        let la = self.labels();
        let lb = other.labels();
        let mut labels = Vec::with_capacity(self.dim * other.dim);
        for &a in &la {
            for &b in &lb {
                labels.push(a * other.count() + b);
            }
        }
        Blocks::labelled(labels, self.count() * other.count())
    }

    /// Largest Frobenius-norm violation of completeness and orthogonality,
    /// computed from dense projectors.
    pub fn projector_algebra_defect(&self) -> f64 {
        let ps: Vec<DMatrix<C64>> = (0..self.count()).map(|m| self.projector_matrix(m)).collect();
        let mut sum = DMatrix::<C64>::zeros(self.dim, self.dim);
        let mut worst = 0.0f64;
        for (m, pm) in ps.iter().enumerate() {
            sum += pm;
            for (n, pn) in ps.iter().enumerate() {
                let prod = pm * pn;
                let target = if m == n {
                    pm.clone()
                } else {
                    DMatrix::zeros(self.dim, self.dim)
                };
                worst = worst.max((prod - target).norm());
            }
        }
        worst.max((sum - DMatrix::identity(self.dim, self.dim)).norm())
    }
}

/// A Hamiltonian as distinct energies `E_m` (strictly increasing) with their
/// eigenprojectors, in units where ħ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    blocks: Arc<Blocks>,
    energies: Vec<f64>,
    energy_scale: f64,
}

/// Groups sorted values into runs whose adjacent members lie within
/// `deg_tol · max(1, |E|)`. Returns (group mean, member positions) pairs.
fn group_sorted(sorted: &[(usize, f64)], deg_tol: f64) -> Vec<(f64, Vec<usize>)> {
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut prev = f64::NAN;
    for &(idx, e) in sorted {
        let merge = match groups.last() {
            Some(_) => (e - prev).abs() <= deg_tol * e.abs().max(1.0),
            None => false,
        };
        if merge {
            groups.last_mut().unwrap().1.push(idx);
        } else {
            groups.push((0.0, vec![idx]));
        }
        prev = e;
    }
    let lookup: alloc::collections::BTreeMap<usize, f64> = sorted.iter().copied().collect();
    for g in &mut groups {
        g.0 = g.1.iter().map(|i| lookup[i]).sum::<f64>() / g.1.len() as f64;
    }
    groups
}

/// Largest gap between adjacent levels, or `|E|` (1 when zero) for a single
/// level.
fn default_energy_scale(energies: &[f64]) -> f64 {
    if energies.len() < 2 {
        let e = energies.first().copied().unwrap_or(0.0).abs();
        return if e > 0.0 { e } else { 1.0 };
    }
    energies.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

impl SpectralDecomposition {
    /// Assemble from a projector family and one energy per block.
    pub fn new(blocks: Arc<Blocks>, energies: Vec<f64>) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if energies.len() != blocks.count() {
            return Err(Error::DimensionMismatch {
                expected: blocks.count(),
                found: energies.len(),
            });
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(invalid("energies must be finite"));
        }
        if energies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("energies must be strictly increasing"));
        }
        let energy_scale = default_energy_scale(&energies);
        Ok(Self {
            blocks,
            energies,
            energy_scale,
        })
    }

    /// Diagonal Hamiltonian in the computational basis. Values whose sorted
    /// neighbours differ by at most `deg_tol · max(1, |E|)` share a level.
    pub fn from_diagonal(energies: &[f64], deg_tol: f64) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if !(deg_tol >= 0.0) {
            return Err(invalid("deg_tol must be >= 0"));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(invalid("energies must be finite"));
        }
        let mut sorted: Vec<(usize, f64)> = energies.iter().copied().enumerate().collect();
        sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
        let groups = group_sorted(&sorted, deg_tol);
        let mut labels = vec![0usize; energies.len()];
        for (m, (_, members)) in groups.iter().enumerate() {
            for &i in members {
                labels[i] = m;
            }
        }
        let blocks = Blocks::labelled(labels, groups.len())?;
        Self::new(Arc::new(blocks), groups.into_iter().map(|g| g.0).collect())
    }

    /// Eigendecomposition of a Hermitian matrix (symmetrized first), with
    /// eigenvalues grouped by `deg_tol`.
    pub fn from_hermitian(matrix: &DMatrix<C64>, deg_tol: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::EmptySpectrum);
        }
        if !(deg_tol >= 0.0) {
            return Err(invalid("deg_tol must be >= 0"));
        }
        let (values, vectors) = linalg::hermitian_eigen(matrix);
        let sorted: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
        let groups = group_sorted(&sorted, deg_tol);
        let ranks = groups.iter().map(|g| g.1.len()).collect();
        let blocks = Blocks::eigenbasis(vectors, ranks)?;
        Self::new(Arc::new(blocks), groups.into_iter().map(|g| g.0).collect())
    }

    /// `N` non-interacting spin-1/2 particles, `H = ω₀ Σ S_z`: levels
    /// `(p − N/2) ω₀` with degeneracy `C(N, p)`, `d = 2^N`, `C = ω₀`.
    ///
    /// The basis is ordered by the number of up spins, so each level is a
    /// contiguous index range and nothing of size `2^N` is allocated.
    pub fn spin_ensemble(n_spins: u32, omega0: f64) -> Result<Self> {
        if n_spins == 0 {
            return Err(invalid("n_spins must be >= 1"));
        }
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(invalid("omega0 must be positive"));
        }
        if n_spins >= usize::BITS - 1 {
            return Err(invalid("n_spins too large for an addressable basis"));
        }
        let n = u64::from(n_spins);
        let ranks = (0..=n)
            .map(|p| binomial(n, p).map(|b| b as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| invalid("degeneracy overflow"))?;
        let energies = (0..=n).map(|p| (p as f64 - n as f64 / 2.0) * omega0).collect();
        let mut spec = Self::new(Arc::new(Blocks::contiguous(ranks)?), energies)?;
        spec.energy_scale = omega0;
        Ok(spec)
    }

    /// `M` uncoupled oscillators of one frequency truncated at `ν_max` total
    /// quanta: levels `(ν + M/2) ω₀`, degeneracy `C(ν + M − 1, M − 1)`,
    /// `C = ω₀`.
    pub fn oscillator_modes(n_modes: u32, omega0: f64, nu_max: u32) -> Result<Self> {
        if n_modes == 0 {
            return Err(invalid("n_modes must be >= 1"));
        }
        if nu_max == 0 {
            return Err(invalid("nu_max must be >= 1"));
        }
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(invalid("omega0 must be positive"));
        }
        let m = u64::from(n_modes);
        let ranks = (0..=u64::from(nu_max))
            .map(|nu| binomial(nu + m - 1, m - 1).map(|b| b as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| invalid("degeneracy overflow"))?;
        let energies = (0..=nu_max)
            .map(|nu| (f64::from(nu) + f64::from(n_modes) / 2.0) * omega0)
            .collect();
        let mut spec = Self::new(Arc::new(Blocks::contiguous(ranks)?), energies)?;
        spec.energy_scale = omega0;
        Ok(spec)
    }

    /// Override the characteristic energy scale `C`.
    pub fn with_energy_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid("energy scale must be positive"));
        }
        self.energy_scale = scale;
        Ok(self)
    }

    /// Multiply every energy (and the energy scale) by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(invalid("scale factor must be positive"));
        }
        Ok(Self {
            blocks: self.blocks.clone(),
            energies: self.energies.iter().map(|e| e * factor).collect(),
            energy_scale: self.energy_scale * factor,
        })
    }

    pub fn blocks(&self) -> &Arc<Blocks> {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.dim()
    }

    pub fn count(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, m: usize) -> f64 {
        self.energies[m]
    }

    pub fn degeneracies(&self) -> &[usize] {
        self.blocks.ranks()
    }

    pub fn energy_scale(&self) -> f64 {
        self.energy_scale
    }

    /// Lowest energy `E_g`.
    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn max_energy(&self) -> f64 {
        *self.energies.last().unwrap()
    }

    /// `E = E_max − E_g`.
    pub fn span(&self) -> f64 {
        self.max_energy() - self.ground_energy()
    }

    /// Dense `Σ_m E_m P_m`.
    pub fn hamiltonian(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut w = DMatrix::zeros(d, d);
        for (i, l) in self.blocks.labels().into_iter().enumerate() {
            w[(i, i)] = C64::new(self.energies[l], 0.0);
        }
        self.blocks.from_working(w)
    }

    /// Eigenvector of level `m` (its first working-basis vector).
    pub fn level_vector(&self, m: usize) -> DVector<C64> {
        self.blocks.basis_vector(self.blocks.first_member(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn duplicates_merge() {
        let s = SpectralDecomposition::from_diagonal(&[1.0, 1.0, 2.0], 1e-9).unwrap();
        assert_eq!(s.count(), 2);
        assert_eq!(s.degeneracies(), &[2, 1]);
    }

    #[test]
    fn single_level() {
        let s = SpectralDecomposition::from_diagonal(&[0.0], 1e-9).unwrap();
        assert_eq!((s.count(), s.dim()), (1, 1));
        assert_eq!(s.energy_scale(), 1.0);
    }

    #[test]
    fn three_spin_diagonal() {
        let s = SpectralDecomposition::from_diagonal(&[-1.5, -0.5, -0.5, 0.5, 0.5, 1.5], 1e-9).unwrap();
        assert_eq!(s.degeneracies(), &[1, 2, 2, 1]);
        let s = SpectralDecomposition::from_diagonal(&[-1.5, -0.5, -0.5, -0.5, 0.5, 0.5, 0.5, 1.5], 1e-9).unwrap();
        assert_eq!(s.degeneracies(), &[1, 3, 3, 1]);
    }

    #[test]
    fn empty_spectrum_rejected() {
        assert_eq!(
            SpectralDecomposition::from_diagonal(&[], 1e-9),
            Err(Error::EmptySpectrum)
        );
    }

    #[test]
    fn unsorted_diagonal_uses_labels() {
        let s = SpectralDecomposition::from_diagonal(&[2.0, 0.0, 2.0, 1.0], 1e-9).unwrap();
        assert_eq!(s.energies(), &[0.0, 1.0, 2.0]);
        assert_eq!(s.blocks().members(2), vec![0, 2]);
        assert!(s.blocks().projector_algebra_defect() < 1e-12);
        let h = s.hamiltonian();
        assert_eq!(h[(0, 0)], c(2.0));
        assert_eq!(h[(3, 3)], c(1.0));
    }

    #[test]
    fn hermitian_identity_is_one_level() {
        let s = SpectralDecomposition::from_hermitian(&DMatrix::identity(3, 3), 1e-9).unwrap();
        assert_eq!(s.count(), 1);
        assert!(max_abs_diff(&s.blocks().projector_matrix(0), &DMatrix::identity(3, 3)) < 1e-12);
    }

    #[test]
    fn hermitian_pauli_x() {
        let x = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let s = SpectralDecomposition::from_hermitian(&x, 1e-9).unwrap();
        assert_eq!(s.energies().len(), 2);
        assert!((s.energy(0) + 1.0).abs() < 1e-12 && (s.energy(1) - 1.0).abs() < 1e-12);
        assert_eq!(s.degeneracies(), &[1, 1]);
        assert!(max_abs_diff(&s.hamiltonian(), &x) < 1e-12);
        assert!(s.blocks().projector_algebra_defect() < 1e-12);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0), c(1.0)]));
        assert_eq!(SpectralDecomposition::from_hermitian(&diag, 1e-9).unwrap().count(), 2);
    }

    #[test]
    fn non_square_rejected() {
        let m = DMatrix::<C64>::zeros(2, 3);
        assert!(matches!(
            SpectralDecomposition::from_hermitian(&m, 1e-9),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn spin_models() {
        let s = SpectralDecomposition::spin_ensemble(1, 1.0).unwrap();
        assert_eq!(s.energies(), &[-0.5, 0.5]);
        assert_eq!(s.degeneracies(), &[1, 1]);
        let s = SpectralDecomposition::spin_ensemble(4, 1.0).unwrap();
        assert_eq!(s.degeneracies(), &[1, 4, 6, 4, 1]);
        assert_eq!(s.dim(), 16);
        let s = SpectralDecomposition::spin_ensemble(3, 2.0).unwrap();
        assert_eq!(s.span(), 6.0);
        assert_eq!(s.energy_scale(), 2.0);
        let big = SpectralDecomposition::spin_ensemble(40, 1.0).unwrap();
        assert_eq!(big.dim(), 1usize << 40);
        assert_eq!(big.blocks().level_of((1usize << 40) - 1), 40);
    }

    #[test]
    fn oscillator_models() {
        let s = SpectralDecomposition::oscillator_modes(1, 1.0, 3).unwrap();
        assert_eq!(s.energies(), &[0.5, 1.5, 2.5, 3.5]);
        assert_eq!(s.degeneracies(), &[1, 1, 1, 1]);
        let s = SpectralDecomposition::oscillator_modes(2, 1.0, 2).unwrap();
        assert_eq!(s.degeneracies(), &[1, 2, 3]);
        let s = SpectralDecomposition::oscillator_modes(1, 1.0, 1).unwrap();
        assert_eq!(s.span(), 1.0);
    }

    #[test]
    fn tensor_labels() {
        let a = Blocks::contiguous(vec![1, 1]).unwrap();
        let b = Blocks::contiguous(vec![2, 1]).unwrap();
        let t = a.tensor(&b).unwrap();
        assert_eq!(t.dim(), 6);
        assert_eq!(t.labels(), vec![0, 0, 1, 2, 2, 3]);
    }
}

//! Independent dense reference implementation.
//!
//! Evolves full density matrices over an enumerated truncated Fock basis
//! for small instances, to validate the sparse engine. The implementation
//! deliberately takes different routes from the sparse path: beam
//! splitters are built by exponentiating a second-quantized generator
//! (not by combinatorial expansion), loss is a beam splitter into a
//! traced-out ancilla mode (not a Kraus sum), and the eigensolver behind
//! trace distances is Householder tridiagonalization with QL iteration
//! (not Jacobi). Only the [`Occupation`] type is shared.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)] // used in the no_std build
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::{BranchEnsemble, DiagonalElement, Occupation, TruncationPolicy};

/// Memory guard on the enumerated basis.
pub const MAX_DENSE_DIM: usize = 10_000;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Enumerated occupation basis under a truncation policy, in
/// lexicographic order.
#[derive(Clone, Debug)]
pub struct DenseBasis {
    num_modes: usize,
    occs: Vec<Occupation>,
    index: BTreeMap<Occupation, usize>,
}

impl DenseBasis {
    pub fn enumerate(num_modes: usize, policy: &TruncationPolicy) -> Result<Self> {
        let mut occs = Vec::new();
        let mut cur = vec![0u8; num_modes];
        fn rec(
            mode: usize,
            budget: u16,
            cutoff: u8,
            cur: &mut Vec<u8>,
            occs: &mut Vec<Occupation>,
        ) -> Result<()> {
            if mode == cur.len() {
                if occs.len() >= MAX_DENSE_DIM {
                    return Err(Error::BasisTooLarge {
                        dim: occs.len() + 1,
                        max: MAX_DENSE_DIM,
                    });
                }
                occs.push(Occupation::from(cur.as_slice()));
                return Ok(());
            }
            let top = u16::from(cutoff).min(budget) as u8;
            for c in 0..=top {
                cur[mode] = c;
                rec(mode + 1, budget - u16::from(c), cutoff, cur, occs)?;
            }
            cur[mode] = 0;
            Ok(())
        }
        rec(
            0,
            policy.global_photon_bound,
            policy.per_mode_cutoff,
            &mut cur,
            &mut occs,
        )?;
        let index = occs
            .iter()
            .enumerate()
            .map(|(i, o)| (o.clone(), i))
            .collect();
        Ok(DenseBasis {
            num_modes,
            occs,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.occs.len()
    }

    pub fn occupations(&self) -> &[Occupation] {
        &self.occs
    }

    fn index_of(&self, occ: &Occupation) -> Option<usize> {
        self.index.get(occ).copied()
    }
}

/// A density operator over an enumerated basis (row-major Hermitian
/// matrix).
#[derive(Clone, Debug)]
pub struct DenseState {
    basis: DenseBasis,
    mat: Vec<Complex64>,
}

impl DenseState {
    /// Converts a branch ensemble: `rho = sum_b w_b |psi_b><psi_b|`.
    pub fn from_ensemble(state: &BranchEnsemble, policy: &TruncationPolicy) -> Result<DenseState> {
        let basis = DenseBasis::enumerate(state.num_modes(), policy)?;
        let dim = basis.dim();
        let mut mat = vec![zero(); dim * dim];
        for br in state.branches() {
            let mut v = vec![zero(); dim];
            for (occ, amp) in br.state.iter() {
                let idx = basis.index_of(occ).ok_or_else(|| {
                    if occ.counts().iter().any(|&c| c > policy.per_mode_cutoff) {
                        Error::CutoffExceeded {
                            cutoff: policy.per_mode_cutoff,
                            needed: occ.counts().iter().map(|&c| u16::from(c)).max().unwrap_or(0),
                            dropped_weight: br.weight,
                        }
                    } else {
                        Error::PhotonBoundExceeded {
                            bound: policy.global_photon_bound,
                            needed: occ.total(),
                            dropped_weight: br.weight,
                        }
                    }
                })?;
                v[idx] = *amp;
            }
            for r in 0..dim {
                if v[r].norm_sqr() == 0.0 {
                    continue;
                }
                for c in 0..dim {
                    mat[r * dim + c] += v[r] * v[c].conj() * br.weight;
                }
            }
        }
        Ok(DenseState { basis, mat })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn num_modes(&self) -> usize {
        self.basis.num_modes
    }

    pub fn trace(&self) -> f64 {
        let dim = self.dim();
        (0..dim).map(|i| self.mat[i * dim + i].re).sum()
    }

    pub fn matrix_element(&self, row: &Occupation, col: &Occupation) -> Complex64 {
        match (self.basis.index_of(row), self.basis.index_of(col)) {
            (Some(r), Some(c)) => self.mat[r * self.dim() + c],
            _ => zero(),
        }
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermiticity_error(&self) -> f64 {
        let dim = self.dim();
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in r..dim {
                let d = (self.mat[r * dim + c] - self.mat[c * dim + r].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(self.dim(), &self.mat)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the density-operator invariants: Hermitian, trace at most
    /// one, positive semidefinite.
    pub fn validate(&self) -> Result<()> {
        if self.hermiticity_error() > 1e-12 {
            return Err(Error::NotNormalized(self.hermiticity_error()));
        }
        let tr = self.trace();
        if tr > 1.0 + 1e-12 {
            return Err(Error::NotNormalized(tr));
        }
        if self.min_eigenvalue() < -1e-10 {
            return Err(Error::NotNormalized(self.min_eigenvalue()));
        }
        Ok(())
    }

    fn apply_unitary(&self, u: &[Complex64]) -> DenseState {
        let dim = self.dim();
        let tmp = matmul(dim, u, &self.mat);
        // rho' = U rho U^dag.
        let mut udag = vec![zero(); dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                udag[r * dim + c] = u[c * dim + r].conj();
            }
        }
        let mat = matmul(dim, &tmp, &udag);
        DenseState {
            basis: self.basis.clone(),
            mat,
        }
    }

    /// Beam splitter via the exponential of the second-quantized
    /// one-body generator. Same operator convention as the sparse
    /// engine's `beam_splitter`.
    pub fn beam_splitter(
        &self,
        mode_i: usize,
        mode_j: usize,
        t: f64,
        phi: f64,
        policy: &TruncationPolicy,
    ) -> Result<DenseState> {
        let dim = self.dim();
        if mode_i >= self.num_modes() || mode_j >= self.num_modes() {
            return Err(Error::ModeOutOfRange {
                mode: mode_i.max(mode_j),
                num_modes: self.num_modes(),
            });
        }
        if mode_i == mode_j {
            return Err(Error::RailCollision { mode: mode_i });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidTransmissivity(t));
        }
        // The pair-photon sectors are invariant subspaces; the truncated
        // generator is only faithful on sectors that fit the cutoff, so
        // the state may not occupy the others.
        let cutoff = u16::from(policy.per_mode_cutoff);
        for (r, occ) in self.basis.occs.iter().enumerate() {
            let pair = u16::from(occ.get(mode_i)) + u16::from(occ.get(mode_j));
            if pair > cutoff && self.mat[r * dim + r].norm() > 1e-30 {
                return Err(Error::CutoffExceeded {
                    cutoff: policy.per_mode_cutoff,
                    needed: pair,
                    dropped_weight: self.mat[r * dim + r].re,
                });
            }
        }

        // One-body map: creation operators pick up the columns of `c`.
        let alpha = Complex64::new(t.sqrt(), 0.0);
        let beta = Complex64::from_polar((1.0 - t).sqrt(), phi);
        let gamma = -Complex64::from_polar((1.0 - t).sqrt(), -phi);
        let delta = alpha;
        let c2 = [[alpha, gamma], [beta, delta]];
        let k2 = log_unitary_2x2(&c2);

        // Second-quantized generator G = sum_{kl} K_kl adag_k a_l.
        let modes = [mode_i, mode_j];
        let mut g = vec![zero(); dim * dim];
        for (r, occ) in self.basis.occs.iter().enumerate() {
            for (ki, &mk) in modes.iter().enumerate() {
                for (li, &ml) in modes.iter().enumerate() {
                    let kc = k2[ki][li];
                    if kc.norm_sqr() == 0.0 {
                        continue;
                    }
                    if mk == ml {
                        g[r * dim + r] += kc * f64::from(occ.get(mk));
                        continue;
                    }
                    let nl = occ.get(ml);
                    if nl == 0 {
                        continue;
                    }
                    let nk = occ.get(mk);
                    let target = occ.with(ml, nl - 1).with(mk, nk + 1);
                    if let Some(tidx) = self.basis.index_of(&target) {
                        let factor = (f64::from(nl) * (f64::from(nk) + 1.0)).sqrt();
                        g[tidx * dim + r] += kc * factor;
                    }
                }
            }
        }
        let u = expm(dim, &g);
        Ok(self.apply_unitary(&u))
    }

    /// Pure loss as a beam splitter of transmissivity `eta` into a fresh
    /// vacuum ancilla that is traced out afterwards.
    pub fn loss(&self, mode: usize, eta: f64, policy: &TruncationPolicy) -> Result<DenseState> {
        if mode >= self.num_modes() {
            return Err(Error::ModeOutOfRange {
                mode,
                num_modes: self.num_modes(),
            });
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidTransmissivity(eta));
        }
        let ext_basis = DenseBasis::enumerate(self.num_modes() + 1, policy)?;
        let ext_dim = ext_basis.dim();
        let mut ext = vec![zero(); ext_dim * ext_dim];
        let dim = self.dim();
        // Embed with the ancilla in vacuum.
        let embed: Vec<usize> = self
            .basis
            .occs
            .iter()
            .map(|occ| {
                let e = occ.concat(&Occupation::zeros(1));
                ext_basis.index_of(&e).expect("embedding stays in basis")
            })
            .collect();
        for r in 0..dim {
            for c in 0..dim {
                ext[embed[r] * ext_dim + embed[c]] = self.mat[r * dim + c];
            }
        }
        let ext_state = DenseState {
            basis: ext_basis,
            mat: ext,
        };
        let mixed = ext_state.beam_splitter(mode, self.num_modes(), eta, 0.0, policy)?;
        let (_, reduced) = mixed.partial_trace(&[self.num_modes()], policy)?;
        Ok(reduced)
    }

    /// Applies a diagonal POVM element on `modes` and removes them.
    /// Returns the outcome probability and the conditional state on the
    /// remaining modes (trace = probability).
    pub fn measure_remove(
        &self,
        modes: &[usize],
        element: &impl DiagonalElement,
        policy: &TruncationPolicy,
    ) -> Result<(f64, DenseState)> {
        if element.num_modes() != modes.len() {
            return Err(Error::ModeCountMismatch {
                expected: modes.len(),
                actual: element.num_modes(),
            });
        }
        let mut sorted = modes.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::RailCollision { mode: w[0] });
            }
        }
        if let Some(&m) = sorted.last() {
            if m >= self.num_modes() {
                return Err(Error::ModeOutOfRange {
                    mode: m,
                    num_modes: self.num_modes(),
                });
            }
        }
        let reduced_basis = DenseBasis::enumerate(self.num_modes() - sorted.len(), policy)?;
        let rdim = reduced_basis.dim();
        let dim = self.dim();
        let mut out = vec![zero(); rdim * rdim];
        // Precompute splits.
        let splits: Vec<(Occupation, usize)> = self
            .basis
            .occs
            .iter()
            .map(|occ| {
                let (meas, rest) = split_occ(occ, &sorted);
                let idx = reduced_basis.index_of(&rest).expect("reduced occ in basis");
                (meas, idx)
            })
            .collect();
        for r in 0..dim {
            let (mr, rr) = &splits[r];
            let coeff = element.coeff(mr.counts());
            if coeff == 0.0 {
                continue;
            }
            for c in 0..dim {
                let (mc, rc) = &splits[c];
                if mr != mc {
                    continue;
                }
                let v = self.mat[r * dim + c];
                if v.norm_sqr() == 0.0 {
                    continue;
                }
                out[rr * rdim + rc] += v * coeff;
            }
        }
        let reduced = DenseState {
            basis: reduced_basis,
            mat: out,
        };
        Ok((reduced.trace(), reduced))
    }

    /// Traces out `modes` (a measurement with the identity element).
    pub fn partial_trace(
        &self,
        modes: &[usize],
        policy: &TruncationPolicy,
    ) -> Result<(f64, DenseState)> {
        let ones = crate::fock::ProductElement {
            per_mode: vec![
                vec![1.0; usize::from(policy.per_mode_cutoff) + 1];
                modes.len()
            ],
        };
        self.measure_remove(modes, &ones, policy)
    }

    /// Fock-basis phase flip `(-1)^n` on one mode.
    pub fn phase_flip(&self, mode: usize) -> Result<DenseState> {
        if mode >= self.num_modes() {
            return Err(Error::ModeOutOfRange {
                mode,
                num_modes: self.num_modes(),
            });
        }
        let dim = self.dim();
        let signs: Vec<f64> = self
            .basis
            .occs
            .iter()
            .map(|o| if o.get(mode) % 2 == 1 { -1.0 } else { 1.0 })
            .collect();
        let mut mat = self.mat.clone();
        for r in 0..dim {
            for c in 0..dim {
                mat[r * dim + c] *= signs[r] * signs[c];
            }
        }
        Ok(DenseState {
            basis: self.basis.clone(),
            mat,
        })
    }

    /// Tensor product; `self`'s modes come first. Pairs exceeding the
    /// global photon bound are rejected (with the dropped diagonal weight
    /// estimated) unless the policy says to drop them.
    pub fn tensor(&self, other: &DenseState, policy: &TruncationPolicy) -> Result<DenseState> {
        let basis = DenseBasis::enumerate(self.num_modes() + other.num_modes(), policy)?;
        let dim = basis.dim();
        let (da, db) = (self.dim(), other.dim());
        // Map occupation pairs into the combined basis.
        let mut pair_index = vec![usize::MAX; da * db];
        let mut dropped = 0.0;
        for (ra, oa) in self.basis.occs.iter().enumerate() {
            for (rb, ob) in other.basis.occs.iter().enumerate() {
                match basis.index_of(&oa.concat(ob)) {
                    Some(i) => pair_index[ra * db + rb] = i,
                    None => {
                        dropped +=
                            (self.mat[ra * da + ra] * other.mat[rb * db + rb]).re.max(0.0);
                    }
                }
            }
        }
        if dropped > 0.0 && policy.on_overflow == crate::fock::OverflowMode::Error {
            return Err(Error::PhotonBoundExceeded {
                bound: policy.global_photon_bound,
                needed: policy.global_photon_bound + 1,
                dropped_weight: dropped,
            });
        }
        let mut mat = vec![zero(); dim * dim];
        for ra in 0..da {
            for ca in 0..da {
                let va = self.mat[ra * da + ca];
                if va.norm_sqr() == 0.0 {
                    continue;
                }
                for rb in 0..db {
                    let row = pair_index[ra * db + rb];
                    if row == usize::MAX {
                        continue;
                    }
                    for cb in 0..db {
                        let col = pair_index[ca * db + cb];
                        if col == usize::MAX {
                            continue;
                        }
                        mat[row * dim + col] += va * other.mat[rb * db + cb];
                    }
                }
            }
        }
        Ok(DenseState { basis, mat })
    }

    /// Operator sum, for mixing conditional states over outcomes.
    pub fn add(&self, other: &DenseState) -> Result<DenseState> {
        if self.dim() != other.dim() || self.num_modes() != other.num_modes() {
            return Err(Error::DimensionMismatch {
                a: self.dim(),
                b: other.dim(),
            });
        }
        let mat = self
            .mat
            .iter()
            .zip(&other.mat)
            .map(|(a, b)| a + b)
            .collect();
        Ok(DenseState {
            basis: self.basis.clone(),
            mat,
        })
    }

    /// Trace distance `0.5 * ||a - b||_1` via the eigenvalues of the
    /// (Hermitian) difference.
    pub fn trace_distance(&self, other: &DenseState) -> Result<f64> {
        if self.dim() != other.dim() || self.num_modes() != other.num_modes() {
            return Err(Error::DimensionMismatch {
                a: self.dim(),
                b: other.dim(),
            });
        }
        let dim = self.dim();
        let diff: Vec<Complex64> = self
            .mat
            .iter()
            .zip(&other.mat)
            .map(|(a, b)| a - b)
            .collect();
        let vals = hermitian_eigenvalues(dim, &diff);
        Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
    }
}

fn split_occ(occ: &Occupation, sorted_modes: &[usize]) -> (Occupation, Occupation) {
    let mut meas = Vec::new();
    let mut rest = Vec::new();
    let mut it = sorted_modes.iter().copied().peekable();
    for (i, &c) in occ.counts().iter().enumerate() {
        if it.peek() == Some(&i) {
            meas.push(c);
            it.next();
        } else {
            rest.push(c);
        }
    }
    (
        Occupation::from(meas.as_slice()),
        Occupation::from(rest.as_slice()),
    )
}

fn matmul(dim: usize, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![zero(); dim * dim];
    for r in 0..dim {
        for k in 0..dim {
            let av = a[r * dim + k];
            if av.norm_sqr() == 0.0 {
                continue;
            }
            let row = &b[k * dim..(k + 1) * dim];
            let dst = &mut out[r * dim..(r + 1) * dim];
            for (d, bv) in dst.iter_mut().zip(row) {
                *d += av * bv;
            }
        }
    }
    out
}

/// Matrix exponential by scaling and squaring with a Taylor series.
fn expm(dim: usize, g: &[Complex64]) -> Vec<Complex64> {
    // 1-norm for the scaling decision.
    let mut norm1 = 0.0f64;
    for c in 0..dim {
        let col: f64 = (0..dim).map(|r| g[r * dim + c].norm()).sum();
        norm1 = norm1.max(col);
    }
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings as i32);
    let a: Vec<Complex64> = g.iter().map(|z| z * scale).collect();

    let mut result = vec![zero(); dim * dim];
    for i in 0..dim {
        result[i * dim + i] = one();
    }
    let mut term = result.clone();
    for k in 1..=20u32 {
        term = matmul(dim, &term, &a);
        let inv = 1.0 / f64::from(k);
        for t in term.iter_mut() {
            *t *= inv;
        }
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
    }
    for _ in 0..squarings {
        result = matmul(dim, &result, &result);
    }
    result
}

/// Principal log of a 2x2 unitary via its spectral decomposition.
fn log_unitary_2x2(c: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let log_unit = |z: Complex64| Complex64::new(0.0, z.arg());
    let off = c[0][1].norm() + c[1][0].norm();
    if off < 1e-15 {
        return [
            [log_unit(c[0][0]), zero()],
            [zero(), log_unit(c[1][1])],
        ];
    }
    let tr = c[0][0] + c[1][1];
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let disc = (tr * tr - det * 4.0).sqrt();
    let l1 = (tr + disc) * 0.5;
    let l2 = (tr - disc) * 0.5;
    // Eigenvector for l1; the other eigenspace of a normal matrix is its
    // orthogonal complement.
    let v = if c[0][1].norm() >= c[1][0].norm() {
        [c[0][1], l1 - c[0][0]]
    } else {
        [l1 - c[1][1], c[1][0]]
    };
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let v = [v[0] / n, v[1] / n];
    let w = [-v[1].conj(), v[0].conj()];
    let (g1, g2) = (log_unit(l1), log_unit(l2));
    let mut k = [[zero(); 2]; 2];
    for r in 0..2 {
        for cc in 0..2 {
            k[r][cc] = g1 * v[r] * v[cc].conj() + g2 * w[r] * w[cc].conj();
        }
    }
    k
}

/// Eigenvalues of a Hermitian matrix: complex Householder reduction to a
/// real symmetric tridiagonal form, then implicit-shift QL iteration.
pub fn hermitian_eigenvalues(dim: usize, a: &[Complex64]) -> Vec<f64> {
    assert_eq!(a.len(), dim * dim);
    if dim == 0 {
        return Vec::new();
    }
    if dim == 1 {
        return vec![a[0].re];
    }
    let mut m = a.to_vec();
    // Columns whose below-subdiagonal mass is noise at this scale are
    // treated as already reduced; reflecting on noise feeds rounding
    // error back into the matrix.
    let scale2: f64 = m.iter().map(|z| z.norm_sqr()).sum();
    let noise2 = scale2 * 1e-28;
    for k in 0..dim - 1 {
        // Annihilate column k below the first subdiagonal.
        let mut tail2 = 0.0;
        for i in (k + 2)..dim {
            tail2 += m[i * dim + k].norm_sqr();
        }
        if tail2 <= noise2.max(1e-300) {
            continue;
        }
        let x0 = m[(k + 1) * dim + k];
        let xnorm = (tail2 + x0.norm_sqr()).sqrt();
        let phase = if x0.norm() > 1e-300 {
            x0 / x0.norm()
        } else {
            one()
        };
        let alpha = -phase * xnorm;
        let mut v = vec![zero(); dim];
        for i in (k + 1)..dim {
            v[i] = m[i * dim + k];
        }
        v[k + 1] -= alpha;
        let vn2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vn2 <= 1e-300 {
            continue;
        }
        let s = (2.0 / vn2).sqrt();
        for z in v.iter_mut() {
            *z *= s;
        }
        // Householder similarity M <- (I - vv^dag) M (I - vv^dag). The
        // rank-2 form assumes M Hermitian, so tau is real and the result
        // is re-symmetrized to stop rounding drift from compounding.
        let mut w = vec![zero(); dim];
        for (r, wr) in w.iter_mut().enumerate() {
            let mut acc = zero();
            for c in (k + 1)..dim {
                acc += m[r * dim + c] * v[c];
            }
            *wr = acc;
        }
        let tau: Complex64 = v.iter().zip(&w).map(|(vi, wi)| vi.conj() * wi).sum();
        let tau = Complex64::new(tau.re, 0.0);
        for r in 0..dim {
            for c in 0..dim {
                m[r * dim + c] = m[r * dim + c] - v[r] * w[c].conj() - w[r] * v[c].conj()
                    + v[r] * v[c].conj() * tau;
            }
        }
        for r in 0..dim {
            m[r * dim + r] = Complex64::new(m[r * dim + r].re, 0.0);
            for c in (r + 1)..dim {
                let sym = (m[r * dim + c] + m[c * dim + r].conj()) * 0.5;
                m[r * dim + c] = sym;
                m[c * dim + r] = sym.conj();
            }
        }
    }
    let mut d: Vec<f64> = (0..dim).map(|i| m[i * dim + i].re).collect();
    let mut e: Vec<f64> = (0..dim - 1)
        .map(|i| m[(i + 1) * dim + i].norm())
        .collect();
    e.push(0.0);
    tridiag_ql(&mut d, &mut e);
    d
}

/// Implicit-shift QL iteration for a real symmetric tridiagonal matrix;
/// eigenvalues land in `d`.
fn tridiag_ql(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for l in 0..n {
        let mut iterations = 0;
        'restart: loop {
            let mut mm = l;
            while mm + 1 < n {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iterations += 1;
            if iterations > 64 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let denom = g + if g >= 0.0 { r } else { -r };
            g = d[mm] - d[l] + e[l] / denom;
            let mut s = 1.0f64;
            let mut c = 1.0f64;
            let mut p = 0.0f64;
            for i in (l..mm).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    continue 'restart;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                f = (d[i] - g) * s + 2.0 * c * b;
                p = s * f;
                d[i + 1] = g + p;
                g = c * f - b;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
}

//! Sparse multimode Fock-space engine.
//!
//! A density operator is held as a [`BranchEnsemble`]: a list of weighted,
//! normalized pure states. Loss Kraus operators and diagonal-POVM
//! conditioning map pure branches to pure branches, so the representation
//! is closed under every channel used by the repeater simulation while the
//! global-photon-bounded basis keeps each branch sparse.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)] // used in the no_std build
use num_traits::Float;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::math::{binom, hermitian_eigen};

/// Two states are treated as equal (for branch merging) when all
/// amplitudes agree within this tolerance after phase canonicalization.
const MERGE_EPS: f64 = 1e-12;

/// Photon counts per mode.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Occupation(SmallVec<[u8; 8]>);

impl Occupation {
    pub fn new(counts: impl Into<SmallVec<[u8; 8]>>) -> Self {
        Occupation(counts.into())
    }

    pub fn zeros(num_modes: usize) -> Self {
        Occupation(SmallVec::from_elem(0, num_modes))
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, mode: usize) -> u8 {
        self.0[mode]
    }

    /// Total photon number.
    pub fn total(&self) -> u16 {
        self.0.iter().map(|&c| u16::from(c)).sum()
    }

    pub fn with(&self, mode: usize, count: u8) -> Self {
        let mut c = self.0.clone();
        c[mode] = count;
        Occupation(c)
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut c = self.0.clone();
        c.extend_from_slice(&other.0);
        Occupation(c)
    }

    /// Splits into (counts on `modes`, counts on the remaining modes in
    /// ascending original order). `modes` must be sorted and distinct.
    fn split(&self, modes: &[usize]) -> (Occupation, Occupation) {
        let mut picked = SmallVec::new();
        let mut rest = SmallVec::new();
        let mut it = modes.iter().copied().peekable();
        for (i, &c) in self.0.iter().enumerate() {
            if it.peek() == Some(&i) {
                picked.push(c);
                it.next();
            } else {
                rest.push(c);
            }
        }
        (Occupation(picked), Occupation(rest))
    }
}

impl From<&[u8]> for Occupation {
    fn from(counts: &[u8]) -> Self {
        Occupation(SmallVec::from_slice(counts))
    }
}

impl<const N: usize> From<[u8; N]> for Occupation {
    fn from(counts: [u8; N]) -> Self {
        Occupation(SmallVec::from_slice(&counts))
    }
}

/// How an operation should react when it would leave the truncated space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OverflowMode {
    /// Fail with an error carrying the estimated dropped weight.
    #[default]
    Error,
    /// Drop the offending terms and accumulate their weight in the
    /// ensemble's diagnostics counter.
    DropAndRecord,
}

/// Bounds of the truncated Fock space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    /// Maximum photon number per mode. Must be >= 2: the sources emit up
    /// to two photons per mode, and beam splitters can pile two such modes
    /// into one (hence the default of 4).
    pub per_mode_cutoff: u8,
    /// Maximum total photon number across all modes of a joint state.
    pub global_photon_bound: u16,
    /// Amplitudes below this magnitude are pruned; the pruned weight is
    /// accumulated in the ensemble diagnostics.
    pub amplitude_floor: f64,
    pub on_overflow: OverflowMode,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            per_mode_cutoff: 4,
            global_photon_bound: 8,
            amplitude_floor: 1e-15,
            on_overflow: OverflowMode::Error,
        }
    }
}

/// A pure state as a sparse map from occupations to complex amplitudes.
///
/// Unnormalized states are allowed (conditioning produces them), but a
/// state is never super-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    num_modes: usize,
    amps: BTreeMap<Occupation, Complex64>,
}

impl PureState {
    pub fn vacuum(num_modes: usize) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(Occupation::zeros(num_modes), Complex64::new(1.0, 0.0));
        PureState { num_modes, amps }
    }

    pub fn basis_ket(occ: impl Into<Occupation>) -> Self {
        let occ = occ.into();
        let num_modes = occ.len();
        let mut amps = BTreeMap::new();
        amps.insert(occ, Complex64::new(1.0, 0.0));
        PureState { num_modes, amps }
    }

    /// Builds a state from (occupation, amplitude) terms. Terms on the
    /// same occupation accumulate. Rejects super-normalized states.
    pub fn from_terms<I, O>(num_modes: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (O, Complex64)>,
        O: Into<Occupation>,
    {
        let mut amps: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        for (occ, amp) in terms {
            let occ = occ.into();
            if occ.len() != num_modes {
                return Err(Error::ModeCountMismatch {
                    expected: num_modes,
                    actual: occ.len(),
                });
            }
            *amps.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        let state = PureState { num_modes, amps };
        let n2 = state.norm_sqr();
        if n2 > 1.0 + 1e-12 {
            return Err(Error::NotNormalized(n2));
        }
        Ok(state)
    }

    fn from_map(num_modes: usize, amps: BTreeMap<Occupation, Complex64>) -> Self {
        PureState { num_modes, amps }
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.amps.get(occ).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.amps.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// Inner product <self|other>.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (occ, amp) in &self.amps {
            if let Some(b) = other.amps.get(occ) {
                acc += amp.conj() * b;
            }
        }
        acc
    }

    fn scale(&mut self, factor: Complex64) {
        for amp in self.amps.values_mut() {
            *amp *= factor;
        }
    }

    /// Fixes the global phase so the first nonzero amplitude (in
    /// occupation order) is real and positive. Makes equal-up-to-phase
    /// states byte-comparable for merging.
    fn canonicalize_phase(&mut self) {
        if let Some((_, amp)) = self.amps.iter().find(|(_, a)| a.norm_sqr() > 0.0) {
            let r = amp.norm();
            let phase = amp / r;
            self.scale(phase.conj());
        }
    }

    /// Prunes amplitudes below `floor`; returns the pruned squared norm.
    fn prune(&mut self, floor: f64) -> f64 {
        if floor <= 0.0 {
            return 0.0;
        }
        let mut dropped = 0.0;
        self.amps.retain(|_, amp| {
            if amp.norm() < floor {
                dropped += amp.norm_sqr();
                false
            } else {
                true
            }
        });
        dropped
    }

    /// Fock-basis phase flip: multiplies each amplitude by
    /// (-1)^(photon count in `mode`). A local diagonal unitary.
    pub fn phase_flip(&self, mode: usize) -> Result<PureState> {
        if mode >= self.num_modes {
            return Err(Error::ModeOutOfRange {
                mode,
                num_modes: self.num_modes,
            });
        }
        let amps = self
            .amps
            .iter()
            .map(|(occ, amp)| {
                let sign = if occ.get(mode) % 2 == 1 { -1.0 } else { 1.0 };
                (occ.clone(), amp * sign)
            })
            .collect();
        Ok(PureState::from_map(self.num_modes, amps))
    }

    fn states_equal(a: &PureState, b: &PureState) -> bool {
        if a.amps.len() != b.amps.len() {
            return false;
        }
        a.amps
            .iter()
            .zip(b.amps.iter())
            .all(|((ka, va), (kb, vb))| ka == kb && (va - vb).norm() <= MERGE_EPS)
    }
}

/// One weighted pure branch of an ensemble.
#[derive(Clone, Debug)]
pub struct Branch {
    /// Probability weight in [0, 1].
    pub weight: f64,
    /// Normalized pure state.
    pub state: PureState,
}

/// An ensemble of weighted pure branches representing a (generally
/// unnormalized) density operator. The trace equals the weight sum;
/// conditioning leaves the trace equal to the selection probability.
#[derive(Clone, Debug)]
pub struct BranchEnsemble {
    num_modes: usize,
    branches: Vec<Branch>,
    /// Diagnostics: weight removed by amplitude-floor pruning or by
    /// `DropAndRecord` overflow handling, accumulated across operations.
    dropped_weight: f64,
}

impl BranchEnsemble {
    pub fn vacuum(num_modes: usize) -> Self {
        BranchEnsemble {
            num_modes,
            branches: alloc::vec![Branch {
                weight: 1.0,
                state: PureState::vacuum(num_modes),
            }],
            dropped_weight: 0.0,
        }
    }

    /// Wraps a pure state, normalizing it; the branch weight is its
    /// squared norm. A zero state yields an empty (trace-0) ensemble.
    pub fn from_pure(state: PureState) -> Self {
        let num_modes = state.num_modes;
        let mut e = BranchEnsemble {
            num_modes,
            branches: Vec::new(),
            dropped_weight: 0.0,
        };
        e.push_branch(1.0, state);
        e
    }

    pub fn empty(num_modes: usize) -> Self {
        BranchEnsemble {
            num_modes,
            branches: Vec::new(),
            dropped_weight: 0.0,
        }
    }

    /// Adds `weight * |state><state|` (state need not be normalized; its
    /// squared norm folds into the weight). Zero-weight branches are
    /// silently skipped.
    pub fn push_branch(&mut self, weight: f64, mut state: PureState) {
        debug_assert_eq!(state.num_modes, self.num_modes);
        let n2 = state.norm_sqr();
        let w = weight * n2;
        if w <= 0.0 {
            return;
        }
        state.scale(Complex64::new(1.0 / n2.sqrt(), 0.0));
        state.canonicalize_phase();
        self.branches.push(Branch { weight: w, state });
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Trace of the represented density operator.
    pub fn trace(&self) -> f64 {
        self.branches.iter().map(|b| b.weight).sum()
    }

    /// Weight lost to pruning/overflow drops so far (diagnostic).
    pub fn dropped_weight(&self) -> f64 {
        self.dropped_weight
    }

    /// Returns the ensemble rescaled to trace 1 together with the
    /// original trace.
    pub fn normalized(&self) -> Result<(BranchEnsemble, f64)> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::ZeroTrace);
        }
        let mut out = self.clone();
        for b in &mut out.branches {
            b.weight /= tr;
        }
        Ok((out, tr))
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.num_modes {
            return Err(Error::ModeOutOfRange {
                mode,
                num_modes: self.num_modes,
            });
        }
        Ok(())
    }

    /// Merges branches whose states are equal within [`MERGE_EPS`]
    /// amplitude-wise (states are phase-canonicalized on construction).
    fn merge_branches(&mut self) {
        if self.branches.len() < 2 {
            return;
        }
        // Bucket by support; only within-bucket states can be equal.
        let mut buckets: BTreeMap<Vec<Occupation>, Vec<usize>> = BTreeMap::new();
        for (i, b) in self.branches.iter().enumerate() {
            let key: Vec<Occupation> = b.state.amps.keys().cloned().collect();
            buckets.entry(key).or_default().push(i);
        }
        let mut keep: Vec<Branch> = Vec::with_capacity(buckets.len());
        for (_, idxs) in buckets {
            let mut merged: Vec<Branch> = Vec::new();
            'outer: for &i in &idxs {
                let b = &self.branches[i];
                for m in &mut merged {
                    if PureState::states_equal(&m.state, &b.state) {
                        m.weight += b.weight;
                        continue 'outer;
                    }
                }
                merged.push(b.clone());
            }
            keep.extend(merged);
        }
        self.branches = keep;
    }

    fn prune_amplitudes(&mut self, floor: f64) {
        let mut dropped = 0.0;
        for b in &mut self.branches {
            let d = b.state.prune(floor);
            if d > 0.0 {
                // Renormalize the kept part; the branch weight shrinks by
                // exactly the pruned fraction, which is recorded.
                let kept = 1.0 - d;
                if kept <= 0.0 {
                    dropped += b.weight;
                    b.weight = 0.0;
                    continue;
                }
                dropped += b.weight * d;
                b.weight *= kept;
                b.state.scale(Complex64::new(1.0 / kept.sqrt(), 0.0));
            }
        }
        self.branches.retain(|b| b.weight > 0.0);
        self.dropped_weight += dropped;
    }

    fn finish(&mut self, policy: &TruncationPolicy) {
        self.prune_amplitudes(policy.amplitude_floor);
        self.merge_branches();
    }

    /// Tensor product on disjoint mode spaces; `self`'s modes come first.
    ///
    /// The combined state must respect `policy.global_photon_bound`;
    /// violations error (or drop, per `policy.on_overflow`) with the
    /// offending weight estimated.
    pub fn tensor(&self, other: &BranchEnsemble, policy: &TruncationPolicy) -> Result<BranchEnsemble> {
        let num_modes = self.num_modes + other.num_modes;
        let mut out = BranchEnsemble::empty(num_modes);
        out.dropped_weight = self.dropped_weight + other.dropped_weight;
        let bound = policy.global_photon_bound;
        let mut err_dropped = 0.0;
        let mut err_needed: u16 = 0;
        for a in &self.branches {
            for b in &other.branches {
                let mut amps = BTreeMap::new();
                let mut dropped = 0.0;
                for (oa, ca) in &a.state.amps {
                    for (ob, cb) in &b.state.amps {
                        let total = oa.total() + ob.total();
                        if total > bound {
                            dropped += (ca * cb).norm_sqr();
                            err_needed = err_needed.max(total);
                            continue;
                        }
                        amps.insert(oa.concat(ob), ca * cb);
                    }
                }
                let w = a.weight * b.weight;
                if dropped > 0.0 {
                    match policy.on_overflow {
                        OverflowMode::Error => {
                            err_dropped += w * dropped;
                            continue;
                        }
                        OverflowMode::DropAndRecord => out.dropped_weight += w * dropped,
                    }
                }
                out.push_branch(w, PureState::from_map(num_modes, amps));
            }
        }
        if err_dropped > 0.0 {
            return Err(Error::PhotonBoundExceeded {
                bound,
                needed: err_needed,
                dropped_weight: err_dropped,
            });
        }
        out.finish(policy);
        Ok(out)
    }

    /// Two-mode beam splitter with transmissivity `t` and phase `phi`.
    ///
    /// Creation operators transform as
    /// `a_i -> sqrt(T) a_i + e^{i phi} sqrt(1-T) a_j` and
    /// `a_j -> -e^{-i phi} sqrt(1-T) a_i + sqrt(T) a_j`.
    pub fn beam_splitter(
        &self,
        mode_i: usize,
        mode_j: usize,
        t: f64,
        phi: f64,
        policy: &TruncationPolicy,
    ) -> Result<BranchEnsemble> {
        self.check_mode(mode_i)?;
        self.check_mode(mode_j)?;
        if mode_i == mode_j {
            return Err(Error::RailCollision { mode: mode_i });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidTransmissivity(t));
        }
        let alpha = Complex64::new(t.sqrt(), 0.0);
        let beta = Complex64::from_polar((1.0 - t).sqrt(), phi);
        let gamma = -Complex64::from_polar((1.0 - t).sqrt(), -phi);
        let delta = alpha;

        let cutoff = u16::from(policy.per_mode_cutoff);
        let mut out = BranchEnsemble::empty(self.num_modes);
        out.dropped_weight = self.dropped_weight;
        let mut err_dropped = 0.0;
        let mut err_needed: u16 = 0;

        for br in &self.branches {
            let mut amps: BTreeMap<Occupation, Complex64> = BTreeMap::new();
            let mut dropped: BTreeMap<Occupation, Complex64> = BTreeMap::new();
            for (occ, c) in &br.state.amps {
                let ni = u32::from(occ.get(mode_i));
                let nj = u32::from(occ.get(mode_j));
                let denom = (crate::math::factorial(ni) * crate::math::factorial(nj)).sqrt();
                for k in 0..=ni {
                    for l in 0..=nj {
                        let out_i = k + l;
                        let out_j = ni + nj - out_i;
                        let coeff = binom(ni, k)
                            * binom(nj, l)
                            * (crate::math::factorial(out_i) * crate::math::factorial(out_j)).sqrt()
                            / denom;
                        let amp = c
                            * alpha.powu(k)
                            * beta.powu(ni - k)
                            * gamma.powu(l)
                            * delta.powu(nj - l)
                            * coeff;
                        if amp.norm_sqr() == 0.0 {
                            continue;
                        }
                        let target = occ.with(mode_i, out_i as u8).with(mode_j, out_j as u8);
                        if u16::from(out_i as u8).max(u16::from(out_j as u8)) > cutoff {
                            err_needed = err_needed.max(out_i.max(out_j) as u16);
                            *dropped.entry(target).or_insert(Complex64::new(0.0, 0.0)) += amp;
                            continue;
                        }
                        *amps.entry(target).or_insert(Complex64::new(0.0, 0.0)) += amp;
                    }
                }
            }
            if !dropped.is_empty() {
                let d: f64 = dropped.values().map(|a| a.norm_sqr()).sum();
                match policy.on_overflow {
                    OverflowMode::Error => {
                        err_dropped += br.weight * d;
                        continue;
                    }
                    OverflowMode::DropAndRecord => out.dropped_weight += br.weight * d,
                }
            }
            out.push_branch(br.weight, PureState::from_map(self.num_modes, amps));
        }
        if err_dropped > 0.0 {
            return Err(Error::CutoffExceeded {
                cutoff: policy.per_mode_cutoff,
                needed: err_needed,
                dropped_weight: err_dropped,
            });
        }
        out.finish(policy);
        Ok(out)
    }

    /// Pure-loss channel on one mode with transmissivity `eta`: the Kraus
    /// map `A_k |n> = sqrt(C(n,k) eta^(n-k) (1-eta)^k) |n-k>`, one branch
    /// per photon-loss count `k`. Trace preserving.
    pub fn loss(&self, mode: usize, eta: f64, policy: &TruncationPolicy) -> Result<BranchEnsemble> {
        self.check_mode(mode)?;
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidTransmissivity(eta));
        }
        let mut out = BranchEnsemble::empty(self.num_modes);
        out.dropped_weight = self.dropped_weight;
        for br in &self.branches {
            let n_max = br
                .state
                .amps
                .keys()
                .map(|occ| u32::from(occ.get(mode)))
                .max()
                .unwrap_or(0);
            for k in 0..=n_max {
                let mut amps = BTreeMap::new();
                for (occ, c) in &br.state.amps {
                    let n = u32::from(occ.get(mode));
                    if n < k {
                        continue;
                    }
                    let coeff =
                        (binom(n, k) * eta.powi((n - k) as i32) * (1.0 - eta).powi(k as i32)).sqrt();
                    if coeff == 0.0 {
                        continue;
                    }
                    amps.insert(occ.with(mode, (n - k) as u8), c * coeff);
                }
                out.push_branch(br.weight, PureState::from_map(self.num_modes, amps));
            }
        }
        out.finish(policy);
        Ok(out)
    }

    /// Decomposes the ensemble by the Fock content of `modes`: returns
    /// `(occupation on modes, weight, normalized state on the remaining
    /// modes)` entries whose weights sum to the trace. This is the
    /// primitive behind diagonal-POVM conditioning.
    pub fn split_by_modes(&self, modes: &[usize]) -> Result<Vec<(Occupation, f64, PureState)>> {
        let mut sorted = modes.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::RailCollision { mode: w[0] });
            }
        }
        if let Some(&m) = sorted.last() {
            self.check_mode(m)?;
        }
        let rest_modes = self.num_modes - sorted.len();
        let mut parts: Vec<(Occupation, f64, PureState)> = Vec::new();
        for br in &self.branches {
            let mut groups: BTreeMap<Occupation, BTreeMap<Occupation, Complex64>> = BTreeMap::new();
            for (occ, c) in &br.state.amps {
                let (meas, rest) = occ.split(&sorted);
                groups.entry(meas).or_default().insert(rest, *c);
            }
            for (meas, amps) in groups {
                let mut state = PureState::from_map(rest_modes, amps);
                let n2 = state.norm_sqr();
                if n2 <= 0.0 {
                    continue;
                }
                state.scale(Complex64::new(1.0 / n2.sqrt(), 0.0));
                state.canonicalize_phase();
                parts.push((meas, br.weight * n2, state));
            }
        }
        // Merge identical (occupation, state) entries across branches.
        let mut merged: Vec<(Occupation, f64, PureState)> = Vec::new();
        'outer: for (meas, w, state) in parts {
            for (m2, w2, s2) in &mut merged {
                if *m2 == meas && PureState::states_equal(s2, &state) {
                    *w2 += w;
                    continue 'outer;
                }
            }
            merged.push((meas, w, state));
        }
        Ok(merged)
    }

    /// Applies a diagonal POVM element on `modes`, removing them.
    ///
    /// Returns `(probability, conditional ensemble on the remaining
    /// modes)`; the conditional trace equals the probability.
    pub fn measure_remove(
        &self,
        modes: &[usize],
        element: &impl DiagonalElement,
    ) -> Result<(f64, BranchEnsemble)> {
        if element.num_modes() != modes.len() {
            return Err(Error::ModeCountMismatch {
                expected: modes.len(),
                actual: element.num_modes(),
            });
        }
        let parts = self.split_by_modes(modes)?;
        let mut out = BranchEnsemble::empty(self.num_modes - modes.len());
        out.dropped_weight = self.dropped_weight;
        let mut prob = 0.0;
        for (meas, w, state) in parts {
            let c = element.coeff(meas.counts());
            debug_assert!((-1e-12..=1.0 + 1e-12).contains(&c), "POVM coefficient {c}");
            if c <= 0.0 {
                continue;
            }
            prob += w * c;
            out.branches.push(Branch {
                weight: w * c,
                state,
            });
        }
        out.merge_branches();
        Ok((prob, out))
    }

    /// Unnormalized projection onto the occupations selected by `keep`
    /// (modes are retained). The resulting trace is the selection
    /// probability.
    pub fn project_with(&self, keep: impl Fn(&Occupation) -> bool) -> BranchEnsemble {
        let mut out = BranchEnsemble::empty(self.num_modes);
        out.dropped_weight = self.dropped_weight;
        for br in &self.branches {
            let amps: BTreeMap<Occupation, Complex64> = br
                .state
                .amps
                .iter()
                .filter(|(occ, _)| keep(occ))
                .map(|(occ, c)| (occ.clone(), *c))
                .collect();
            out.push_branch(br.weight, PureState::from_map(self.num_modes, amps));
        }
        out.merge_branches();
        out
    }

    /// Fock-basis phase flip `(-1)^n` on one mode, applied to every branch.
    pub fn phase_flip(&self, mode: usize) -> Result<BranchEnsemble> {
        self.check_mode(mode)?;
        let mut out = BranchEnsemble::empty(self.num_modes);
        out.dropped_weight = self.dropped_weight;
        for br in &self.branches {
            let mut state = br.state.phase_flip(mode)?;
            state.canonicalize_phase();
            out.branches.push(Branch {
                weight: br.weight,
                state,
            });
        }
        out.merge_branches();
        Ok(out)
    }

    /// Fidelity of the (normalized) ensemble with a pure reference:
    /// `sum_b w_b |<ref|b>|^2 / trace`.
    pub fn fidelity_with_pure(&self, reference: &PureState) -> Result<f64> {
        if reference.num_modes != self.num_modes {
            return Err(Error::ModeCountMismatch {
                expected: self.num_modes,
                actual: reference.num_modes,
            });
        }
        let n2 = reference.norm_sqr();
        if (n2 - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(n2));
        }
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::ZeroTrace);
        }
        let overlap: f64 = self
            .branches
            .iter()
            .map(|b| b.weight * reference.inner(&b.state).norm_sqr())
            .sum();
        Ok(overlap / tr)
    }

    /// Re-expresses the ensemble through the eigendecomposition of its
    /// density matrix on the support basis. The result represents the
    /// same operator (trace preserved exactly) with at most
    /// `support size` branches; numerically-zero eigenvalues are dropped.
    ///
    /// Branch merging alone cannot stop branch counts from growing
    /// multiplicatively across a chain of swaps; this keeps them bounded.
    pub fn condense(&self) -> BranchEnsemble {
        if self.branches.len() <= 1 {
            return self.clone();
        }
        let support: BTreeSet<Occupation> = self
            .branches
            .iter()
            .flat_map(|b| b.state.amps.keys().cloned())
            .collect();
        let basis: Vec<Occupation> = support.into_iter().collect();
        let dim = basis.len();
        if dim == 0 || self.branches.len() <= dim / 4 {
            // Already compact relative to the support dimension.
            return self.clone();
        }
        let index: BTreeMap<&Occupation, usize> =
            basis.iter().enumerate().map(|(i, o)| (o, i)).collect();
        let mut rho = alloc::vec![Complex64::new(0.0, 0.0); dim * dim];
        for br in &self.branches {
            let mut v = alloc::vec![Complex64::new(0.0, 0.0); dim];
            for (occ, c) in &br.state.amps {
                v[index[occ]] = *c;
            }
            for (r, vr) in v.iter().enumerate() {
                if vr.norm_sqr() == 0.0 {
                    continue;
                }
                for (c, vc) in v.iter().enumerate() {
                    rho[r * dim + c] += vr * vc.conj() * br.weight;
                }
            }
        }
        let tr = self.trace();
        let (vals, vecs) = hermitian_eigen(dim, &rho);
        let mut out = BranchEnsemble::empty(self.num_modes);
        out.dropped_weight = self.dropped_weight;
        let mut kept_sum = 0.0;
        for (k, &lambda) in vals.iter().enumerate() {
            if lambda <= tr * 1e-14 {
                continue;
            }
            kept_sum += lambda;
            let amps: BTreeMap<Occupation, Complex64> = basis
                .iter()
                .enumerate()
                .filter(|(r, _)| vecs[r * dim + k].norm_sqr() > 0.0)
                .map(|(r, occ)| (occ.clone(), vecs[r * dim + k]))
                .collect();
            out.push_branch(lambda, PureState::from_map(self.num_modes, amps));
        }
        if kept_sum > 0.0 {
            // Restore the exact trace lost to dropped near-zero eigenvalues.
            let fix = tr / out.trace();
            for b in &mut out.branches {
                b.weight *= fix;
            }
        }
        out
    }
}

/// A POVM element that is diagonal in the Fock basis of the modes it
/// measures. All detector models used here are of this form; non-diagonal
/// elements are unrepresentable by construction.
pub trait DiagonalElement {
    fn num_modes(&self) -> usize;
    /// Coefficient multiplying the projector onto `counts`.
    fn coeff(&self, counts: &[u8]) -> f64;
}

/// Projector onto a single Fock occupation.
#[derive(Clone, Debug)]
pub struct FockProjector(pub Occupation);

impl DiagonalElement for FockProjector {
    fn num_modes(&self) -> usize {
        self.0.len()
    }

    fn coeff(&self, counts: &[u8]) -> f64 {
        if self.0.counts() == counts {
            1.0
        } else {
            0.0
        }
    }
}

/// Tensor product of per-mode diagonal coefficient tables; the
/// coefficient of `|n1..nk>` is the product of `per_mode[i][n_i]`
/// (zero beyond each table's end).
#[derive(Clone, Debug)]
pub struct ProductElement {
    pub per_mode: Vec<Vec<f64>>,
}

impl DiagonalElement for ProductElement {
    fn num_modes(&self) -> usize {
        self.per_mode.len()
    }

    fn coeff(&self, counts: &[u8]) -> f64 {
        debug_assert_eq!(counts.len(), self.per_mode.len());
        counts
            .iter()
            .zip(&self.per_mode)
            .map(|(&n, table)| table.get(usize::from(n)).copied().unwrap_or(0.0))
            .product()
    }
}

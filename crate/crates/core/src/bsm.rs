//! Linear-optic Bell-state measurement on dual-rail qubits.
//!
//! Two 50/50 beam splitters interfere the rail pairs of two qubits; the
//! four outputs hit photon-counting detectors. Click patterns with exactly
//! one firing detector per rail pair herald a projection onto one of the
//! two psi Bell states; everything else is discarded. A Pauli frame
//! canonicalizes psi-minus heralds onto the psi-plus reference so that all
//! accepted outcomes compose identically downstream.

use alloc::vec::Vec;

use crate::devices::{detector_povm, DetectorSpec};
use crate::error::{Error, Result};
use crate::fock::{BranchEnsemble, TruncationPolicy};

/// Click counts at the four detectors `(u0, v0, u1, v1)`: `u`/`v` are the
/// two beam-splitter outputs, the suffix is the rail pair. For threshold
/// detectors the entries are 0/1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ClickPattern(pub [u8; 4]);

/// Which psi Bell state an accepted pattern heralds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BellIndex {
    PsiPlus,
    PsiMinus,
}

/// Classical correction that maps the heralded single-pair sector onto
/// the canonical Bell state: a Z flip (Fock phase `(-1)^n` on one rail of
/// one qubit) exactly when psi-minus was heralded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PauliFrame {
    pub z_flip: bool,
}

/// Result of classifying one click pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub accepted: bool,
    pub bell_index: Option<BellIndex>,
    pub frame: PauliFrame,
}

/// One exhaustively enumerated measurement outcome.
#[derive(Clone, Debug)]
pub struct BsmOutcome {
    pub pattern: ClickPattern,
    pub accepted: bool,
    pub bell_index: Option<BellIndex>,
    /// Unconditional probability of this pattern.
    pub probability: f64,
    /// State of the remaining modes given this pattern (trace =
    /// probability). Frame-corrected when accepted.
    pub conditional: BranchEnsemble,
}

/// Accepts patterns with exactly one firing detector in each rail pair
/// (a single detected photon each for number-resolving detectors).
/// `(u0,u1)` or `(v0,v1)` herald psi-plus; the mixed pairs herald
/// psi-minus. Two clicks within one rail pair are the phi-sector
/// signature and are rejected along with everything else.
pub fn classify_pattern(pattern: &ClickPattern) -> Classification {
    let [u0, v0, u1, v1] = pattern.0;
    let single = |a: u8, b: u8| (a == 1 && b == 0) || (a == 0 && b == 1);
    if !(single(u0, v0) && single(u1, v1)) {
        return Classification {
            accepted: false,
            bell_index: None,
            frame: PauliFrame { z_flip: false },
        };
    }
    let bell = if (u0 == 1) == (u1 == 1) {
        BellIndex::PsiPlus
    } else {
        BellIndex::PsiMinus
    };
    Classification {
        accepted: true,
        bell_index: Some(bell),
        frame: PauliFrame {
            z_flip: bell == BellIndex::PsiMinus,
        },
    }
}

fn check_rails(state: &BranchEnsemble, rails: [usize; 4]) -> Result<()> {
    for (i, &a) in rails.iter().enumerate() {
        if a >= state.num_modes() {
            return Err(Error::ModeOutOfRange {
                mode: a,
                num_modes: state.num_modes(),
            });
        }
        if rails[..i].contains(&a) {
            return Err(Error::RailCollision { mode: a });
        }
    }
    Ok(())
}

/// The measurement front end: 50/50 beam splitters between `l0 <-> r0`
/// and `l1 <-> r1`. After this, mode `l0` is detector `u0`, `r0` is `v0`,
/// `l1` is `u1` and `r1` is `v1`.
pub fn bsm_apply(
    state: &BranchEnsemble,
    left_rails: (usize, usize),
    right_rails: (usize, usize),
    policy: &TruncationPolicy,
) -> Result<BranchEnsemble> {
    check_rails(
        state,
        [left_rails.0, left_rails.1, right_rails.0, right_rails.1],
    )?;
    state
        .beam_splitter(left_rails.0, right_rails.0, 0.5, 0.0, policy)?
        .beam_splitter(left_rails.1, right_rails.1, 0.5, 0.0, policy)
}

/// Index of original mode `mode` after the modes in `removed` are
/// dropped. `mode` must not itself be removed.
pub fn remaining_index(mode: usize, removed: &[usize]) -> usize {
    debug_assert!(!removed.contains(&mode));
    mode - removed.iter().filter(|&&r| r < mode).count()
}

struct PatternEnumeration {
    /// (pattern, probability, frame, remaining-state part index).
    entries: Vec<(ClickPattern, f64, Classification, usize)>,
    parts: Vec<crate::fock::PureState>,
}

/// Shared enumeration core: splits the post-beam-splitter state by the
/// detector-mode Fock content and folds in the per-detector POVM.
fn enumerate_patterns(
    state: &BranchEnsemble,
    left_rails: (usize, usize),
    right_rails: (usize, usize),
    detector: &DetectorSpec,
    policy: &TruncationPolicy,
) -> Result<PatternEnumeration> {
    let mixed = bsm_apply(state, left_rails, right_rails, policy)?;
    let povm = detector_povm(detector, policy.per_mode_cutoff);
    // Detector order (u0, v0, u1, v1) in original mode indices.
    let det_modes = [left_rails.0, right_rails.0, left_rails.1, right_rails.1];
    let mut sorted = det_modes.to_vec();
    sorted.sort_unstable();
    // det_pos[i]: where detector i's mode sits in the sorted split order.
    let det_pos: Vec<usize> = det_modes
        .iter()
        .map(|m| sorted.iter().position(|s| s == m).unwrap())
        .collect();

    let split = mixed.split_by_modes(&sorted)?;
    let mut entries = Vec::new();
    let mut parts = Vec::new();
    for (meas, w, rest) in split {
        let part_idx = parts.len();
        parts.push(rest);
        let counts: [u8; 4] = [
            meas.get(det_pos[0]),
            meas.get(det_pos[1]),
            meas.get(det_pos[2]),
            meas.get(det_pos[3]),
        ];
        // Per-detector outcome tables for these photon counts.
        let tables: Vec<Vec<(u8, f64)>> = counts
            .iter()
            .map(|&n| povm.outcomes_for(n).collect())
            .collect();
        for &(k0, c0) in &tables[0] {
            for &(k1, c1) in &tables[1] {
                for &(k2, c2) in &tables[2] {
                    for &(k3, c3) in &tables[3] {
                        let p = w * c0 * c1 * c2 * c3;
                        if p <= 0.0 {
                            continue;
                        }
                        let pattern = ClickPattern([k0, k1, k2, k3]);
                        let class = classify_pattern(&pattern);
                        entries.push((pattern, p, class, part_idx));
                    }
                }
            }
        }
    }
    Ok(PatternEnumeration { entries, parts })
}

/// Exhaustive outcome enumeration: one [`BsmOutcome`] per click pattern
/// with nonzero probability. Pattern probabilities sum to the input
/// trace. Accepted conditionals are frame-corrected on
/// `correction_mode` (an index into the remaining-mode space).
pub fn bsm_outcomes(
    state: &BranchEnsemble,
    left_rails: (usize, usize),
    right_rails: (usize, usize),
    detector: &DetectorSpec,
    correction_mode: usize,
    policy: &TruncationPolicy,
) -> Result<Vec<BsmOutcome>> {
    let en = enumerate_patterns(state, left_rails, right_rails, detector, policy)?;
    let rest_modes = state.num_modes() - 4;
    let mut by_pattern: alloc::collections::BTreeMap<ClickPattern, BsmOutcome> =
        alloc::collections::BTreeMap::new();
    for (pattern, p, class, part_idx) in en.entries {
        let mut st = en.parts[part_idx].clone();
        if class.accepted && class.frame.z_flip && rest_modes > 0 {
            // On an empty remainder the flip is a global phase.
            st = st.phase_flip(correction_mode)?;
        }
        let out = by_pattern.entry(pattern).or_insert_with(|| BsmOutcome {
            pattern,
            accepted: class.accepted,
            bell_index: class.bell_index,
            probability: 0.0,
            conditional: BranchEnsemble::empty(rest_modes),
        });
        out.probability += p;
        out.conditional.push_branch(p, st);
    }
    Ok(by_pattern.into_values().collect())
}

/// Runs the measurement and keeps only accepted patterns.
///
/// Returns the total acceptance probability (the per-mode success
/// probability of the stage) and the Pauli-canonicalized mixture of the
/// accepted conditional states, with trace equal to the probability.
/// Zero acceptance yields `(0, empty ensemble)`.
pub fn bsm_measure(
    state: &BranchEnsemble,
    left_rails: (usize, usize),
    right_rails: (usize, usize),
    detector: &DetectorSpec,
    correction_mode: usize,
    policy: &TruncationPolicy,
) -> Result<(f64, BranchEnsemble)> {
    let en = enumerate_patterns(state, left_rails, right_rails, detector, policy)?;
    let rest_modes = state.num_modes() - 4;
    let mut total = 0.0;
    let mut conditional = BranchEnsemble::empty(rest_modes);
    for (_, p, class, part_idx) in en.entries {
        if !class.accepted {
            continue;
        }
        total += p;
        let mut st = en.parts[part_idx].clone();
        if class.frame.z_flip && rest_modes > 0 {
            st = st.phase_flip(correction_mode)?;
        }
        conditional.push_branch(p, st);
    }
    let conditional = conditional.condense();
    Ok((total, conditional))
}

/// Sum of probabilities over every click pattern; equals the input trace
/// for a complete detector POVM. Exposed for invariant checks.
pub fn pattern_probability_total(
    state: &BranchEnsemble,
    left_rails: (usize, usize),
    right_rails: (usize, usize),
    detector: &DetectorSpec,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let en = enumerate_patterns(state, left_rails, right_rails, detector, policy)?;
    Ok(en.entries.iter().map(|(_, p, _, _)| p).sum())
}

/// Canonical Bell reference on four rails `(q0 rail0, q0 rail1, q1 rail0,
/// q1 rail1)`: `(|10,01> + |01,10>)/sqrt(2)`.
pub fn canonical_bell() -> crate::fock::PureState {
    crate::devices::perfect_pair_state()
}

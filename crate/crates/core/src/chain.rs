//! Composes sources, fiber, memories and Bell measurements into
//! elementary links and full repeater chains.
//!
//! All multiplexed modes are identical and independent, so the chain
//! propagates a single mode's state exactly and folds the mode count in
//! through [`multiplex_prob`]. Stage acceptances are treated as
//! independent factors: states are renormalized between stages and the
//! per-stage probabilities recorded separately.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // used in the no_std build
use num_traits::Float;

use crate::bsm::{bsm_measure, remaining_index};
use crate::devices::{
    detector_povm, fiber_transmissivity, memory_apply, DetectorSpec, SourceSpec,
};
use crate::error::{Error, Result};
use crate::fock::{BranchEnsemble, TruncationPolicy};

/// Order in which entanglement swaps are composed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SwapOrder {
    /// Left to right; works for any link count.
    #[default]
    Sequential,
    /// Pairwise doubling; requires a power-of-two link count.
    Tree,
}

/// Endpoint measurement basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    Z,
    X,
}

/// Full experiment parameters for one chain evaluation.
#[derive(Clone, Debug)]
pub struct ChainConfig {
    pub total_distance_km: f64,
    pub num_links: usize,
    pub alpha_db_per_km: f64,
    pub source: SourceSpec,
    pub center_detectors: DetectorSpec,
    pub node_detectors: DetectorSpec,
    pub endpoint_detectors: DetectorSpec,
    pub memory_efficiency: f64,
    /// Whether the endpoint halves also sit in (lossy) memories while
    /// awaiting heralds.
    pub end_memory: bool,
    pub freq_modes: u64,
    pub spatial_modes: u64,
    pub rep_rate_hz: f64,
    pub swap_order: SwapOrder,
    pub truncation: TruncationPolicy,
}

impl ChainConfig {
    /// Total multiplexing: frequency times spatial modes.
    pub fn multiplexed_modes(&self) -> u64 {
        self.freq_modes * self.spatial_modes
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_links == 0 {
            return Err(Error::NoLinks);
        }
        if self.swap_order == SwapOrder::Tree && !self.num_links.is_power_of_two() {
            return Err(Error::TreeOrderNotPowerOfTwo(self.num_links));
        }
        if !(0.0..=1.0).contains(&self.memory_efficiency) {
            return Err(Error::InvalidEfficiency(self.memory_efficiency));
        }
        Ok(())
    }
}

/// One elementary link's heralding statistics and conditional state on
/// the four memory rails (left pair, right pair).
#[derive(Clone, Debug)]
pub struct LinkResult {
    /// Per-mode acceptance probability of the link-center measurement.
    pub p_s0: f64,
    /// Probability that at least one of the multiplexed modes heralds.
    pub p_link: f64,
    /// Conditional state, trace = `p_s0`.
    pub state: BranchEnsemble,
}

/// End-to-end statistics for the whole chain.
#[derive(Clone, Debug)]
pub struct EndToEndResult {
    pub link: LinkResult,
    /// Multiplexed heralding probability, one entry per link.
    pub p_links: Vec<f64>,
    /// Swap acceptance probability, one entry per repeater node.
    pub p_swaps: Vec<f64>,
    /// Endpoint post-selection probability (mean over the two bases).
    pub p_ab: f64,
    pub q_z: f64,
    pub q_x: f64,
    /// Normalized four-rail state handed to the endpoint measurements
    /// (after end-memory loss when enabled).
    pub final_state: BranchEnsemble,
}

/// `P_s(1) = 1 - (1 - p_s0)^M`, evaluated in log space so that tiny
/// `p_s0` survive large `M`. Exact passthrough at `M = 1`.
pub fn multiplex_prob(p_s0: f64, m: u64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_s0));
    if m == 1 {
        return p_s0;
    }
    if p_s0 <= 0.0 {
        return 0.0;
    }
    if p_s0 >= 1.0 {
        return 1.0;
    }
    -((m as f64) * (-p_s0).ln_1p()).exp_m1()
}

/// Builds one elementary link: two sources, fiber loss on the
/// center-bound rails, and the link-center Bell measurement.
///
/// The link spans `total_distance / num_links`; each source-to-center
/// half covers half of that.
pub fn elementary_link(cfg: &ChainConfig) -> Result<LinkResult> {
    cfg.validate()?;
    let link_length = cfg.total_distance_km / cfg.num_links as f64;
    let eta_fiber = fiber_transmissivity(link_length / 2.0, cfg.alpha_db_per_km);

    let (src, _) = cfg.source.state()?;
    let src = BranchEnsemble::from_pure(src);
    // Mode layout: (a0, a1, b0, b1 | a0', a1', b0', b1'); the b rails fly
    // to the link center, the a rails stay in the node memories.
    let joint = src.tensor(&src, &cfg.truncation)?;
    let mut lossy = joint;
    for rail in [2usize, 3, 6, 7] {
        lossy = lossy.loss(rail, eta_fiber, &cfg.truncation)?;
    }
    let correction = remaining_index(1, &[2, 3, 6, 7]);
    let (p_s0, state) = bsm_measure(
        &lossy,
        (2, 3),
        (6, 7),
        &cfg.center_detectors,
        correction,
        &cfg.truncation,
    )?;
    let p_link = multiplex_prob(p_s0, cfg.multiplexed_modes());
    Ok(LinkResult {
        p_s0,
        p_link,
        state,
    })
}

/// Entanglement swap between two heralded link states.
///
/// Inputs are normalized four-rail states (acceptance probabilities are
/// accounted separately by the caller). Memory readout loss hits the two
/// inner rail pairs, then a number-resolving Bell measurement connects
/// them. Returns the swap acceptance probability and the conditional
/// state on the outer rails with the Pauli frame folded in.
pub fn swap_links(
    left: &BranchEnsemble,
    right: &BranchEnsemble,
    node_detectors: &DetectorSpec,
    eta_memory: f64,
    policy: &TruncationPolicy,
) -> Result<(f64, BranchEnsemble)> {
    debug_assert!((left.trace() - 1.0).abs() < 1e-9, "left input not normalized");
    debug_assert!((right.trace() - 1.0).abs() < 1e-9, "right input not normalized");
    let left = memory_apply(left, &[2, 3], eta_memory, policy)?;
    let right = memory_apply(right, &[0, 1], eta_memory, policy)?;
    let joint = left.tensor(&right, policy)?;
    let correction = remaining_index(1, &[2, 3, 4, 5]);
    bsm_measure(&joint, (2, 3), (4, 5), node_detectors, correction, policy)
}

/// Endpoint measurement: photon counting on each rail, post-selecting on
/// exactly one detected photon per side.
///
/// In the X basis a 50/50 beam splitter mixes each side's rails first.
/// The error probability `q` counts outcomes that disagree with the
/// correlations of the canonical Bell state (anticorrelated rail clicks
/// in Z, correlated in X), normalized by the acceptance `p_ab`.
pub fn measure_qber(
    state: &BranchEnsemble,
    endpoint_detectors: &DetectorSpec,
    basis: Basis,
    policy: &TruncationPolicy,
) -> Result<(f64, f64)> {
    if state.num_modes() != 4 {
        return Err(Error::ModeCountMismatch {
            expected: 4,
            actual: state.num_modes(),
        });
    }
    let rotated = match basis {
        Basis::Z => state.clone(),
        Basis::X => state
            .beam_splitter(0, 1, 0.5, 0.0, policy)?
            .beam_splitter(2, 3, 0.5, 0.0, policy)?,
    };
    let povm = detector_povm(endpoint_detectors, policy.per_mode_cutoff);
    let single = |a: u8, b: u8| (a == 1 && b == 0) || (a == 0 && b == 1);

    let mut p_ab = 0.0;
    let mut p_err = 0.0;
    for (meas, w, _) in rotated.split_by_modes(&[0, 1, 2, 3])? {
        let n = meas.counts();
        for (ka0, ca0) in povm.outcomes_for(n[0]) {
            for (ka1, ca1) in povm.outcomes_for(n[1]) {
                if !single(ka0, ka1) {
                    continue;
                }
                for (kb0, cb0) in povm.outcomes_for(n[2]) {
                    for (kb1, cb1) in povm.outcomes_for(n[3]) {
                        if !single(kb0, kb1) {
                            continue;
                        }
                        let p = w * ca0 * ca1 * cb0 * cb1;
                        p_ab += p;
                        let bit_a = ka1 == 1;
                        let bit_b = kb1 == 1;
                        let error = match basis {
                            Basis::Z => bit_a == bit_b,
                            Basis::X => bit_a != bit_b,
                        };
                        if error {
                            p_err += p;
                        }
                    }
                }
            }
        }
    }
    if p_ab <= 0.0 {
        return Err(Error::UndefinedQber);
    }
    Ok((p_ab, p_err / p_ab))
}

/// Runs the full chain: N elementary links, N-1 swaps in the configured
/// order, optional end-memory loss, and endpoint QBER in both bases.
pub fn end_to_end(cfg: &ChainConfig) -> Result<EndToEndResult> {
    cfg.validate()?;
    let link = elementary_link(cfg)?;
    let (link_state, _) = link.state.normalized()?;

    let mut p_swaps = Vec::with_capacity(cfg.num_links - 1);
    let connected = match cfg.swap_order {
        SwapOrder::Sequential => {
            let mut chain = link_state.clone();
            for _ in 1..cfg.num_links {
                let (p, s) = swap_links(
                    &chain,
                    &link_state,
                    &cfg.node_detectors,
                    cfg.memory_efficiency,
                    &cfg.truncation,
                )?;
                p_swaps.push(p);
                chain = s.normalized()?.0;
            }
            chain
        }
        SwapOrder::Tree => {
            // All states at a given level are identical, so one swap per
            // level suffices; its probability repeats across the level.
            let mut level = link_state.clone();
            let mut remaining = cfg.num_links;
            while remaining > 1 {
                let (p, s) = swap_links(
                    &level,
                    &level,
                    &cfg.node_detectors,
                    cfg.memory_efficiency,
                    &cfg.truncation,
                )?;
                for _ in 0..remaining / 2 {
                    p_swaps.push(p);
                }
                level = s.normalized()?.0;
                remaining /= 2;
            }
            level
        }
    };

    let final_state = if cfg.end_memory {
        let lossy = memory_apply(
            &connected,
            &[0, 1, 2, 3],
            cfg.memory_efficiency,
            &cfg.truncation,
        )?;
        lossy.condense()
    } else {
        connected
    };

    let (p_ab_z, q_z) = measure_qber(&final_state, &cfg.endpoint_detectors, Basis::Z, &cfg.truncation)?;
    let (p_ab_x, q_x) = measure_qber(&final_state, &cfg.endpoint_detectors, Basis::X, &cfg.truncation)?;

    Ok(EndToEndResult {
        p_links: vec![link.p_link; cfg.num_links],
        link,
        p_swaps,
        p_ab: 0.5 * (p_ab_z + p_ab_x),
        q_z,
        q_x,
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsm::canonical_bell;
    use crate::devices::{DetectorKind, PovmModel};
    use crate::fock::PureState;
    use approx::assert_relative_eq;

    fn ideal_detector() -> DetectorSpec {
        DetectorSpec::ideal(DetectorKind::Pnr)
    }

    fn ideal_config(num_links: usize, source: SourceSpec) -> ChainConfig {
        ChainConfig {
            total_distance_km: 0.0,
            num_links,
            alpha_db_per_km: 0.2,
            source,
            center_detectors: ideal_detector(),
            node_detectors: ideal_detector(),
            endpoint_detectors: ideal_detector(),
            memory_efficiency: 1.0,
            end_memory: true,
            freq_modes: 1,
            spatial_modes: 1,
            rep_rate_hz: 3.0e7,
            swap_order: SwapOrder::Sequential,
            truncation: TruncationPolicy::default(),
        }
    }

    #[test]
    fn multiplex_prob_identities() {
        assert_eq!(multiplex_prob(0.0, 1_000_000), 0.0);
        assert_eq!(multiplex_prob(0.37, 1), 0.37);
        assert_relative_eq!(
            multiplex_prob(1e-6, 1_000_000),
            0.632121,
            epsilon = 1e-6
        );
        assert_eq!(multiplex_prob(1.0, 5), 1.0);
    }

    #[test]
    fn perfect_pair_link_accepts_at_half() {
        let cfg = ideal_config(1, SourceSpec::perfect_pair());
        let link = elementary_link(&cfg).unwrap();
        assert_relative_eq!(link.p_s0, 0.5, epsilon = 1e-9);
        assert_relative_eq!(link.state.trace(), link.p_s0, epsilon = 1e-12);
        assert_relative_eq!(link.p_link, link.p_s0, epsilon = 1e-15);
        let f = link
            .state
            .normalized()
            .unwrap()
            .0
            .fidelity_with_pure(&canonical_bell())
            .unwrap();
        assert_relative_eq!(f, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dark_source_never_heralds() {
        let cfg = ideal_config(1, SourceSpec::spdc(0.0));
        let link = elementary_link(&cfg).unwrap();
        assert_eq!(link.p_s0, 0.0);
    }

    #[test]
    fn ideal_swap_succeeds_at_half_with_perfect_fidelity() {
        let bell = BranchEnsemble::from_pure(canonical_bell());
        let (p, out) = swap_links(
            &bell,
            &bell,
            &ideal_detector(),
            1.0,
            &TruncationPolicy::default(),
        )
        .unwrap();
        assert_relative_eq!(p, 0.5, epsilon = 1e-12);
        let f = out
            .normalized()
            .unwrap()
            .0
            .fidelity_with_pure(&canonical_bell())
            .unwrap();
        assert_relative_eq!(f, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dead_memory_kills_the_swap() {
        let bell = BranchEnsemble::from_pure(canonical_bell());
        let (p, _) = swap_links(
            &bell,
            &bell,
            &ideal_detector(),
            0.0,
            &TruncationPolicy::default(),
        )
        .unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn qber_of_canonical_bell_is_zero_in_both_bases() {
        let bell = BranchEnsemble::from_pure(canonical_bell());
        let pol = TruncationPolicy::default();
        for basis in [Basis::Z, Basis::X] {
            let (p_ab, q) = measure_qber(&bell, &ideal_detector(), basis, &pol).unwrap();
            assert_relative_eq!(p_ab, 1.0, epsilon = 1e-12);
            assert!(q.abs() < 1e-12, "{basis:?} basis error {q}");
        }
    }

    #[test]
    fn qber_of_maximally_mixed_rails_is_half() {
        let mut mixed = BranchEnsemble::empty(4);
        for occ in [[1u8, 0, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [0, 1, 1, 0]] {
            mixed.push_branch(0.25, PureState::basis_ket(occ));
        }
        let pol = TruncationPolicy::default();
        for basis in [Basis::Z, Basis::X] {
            let (_, q) = measure_qber(&mixed, &ideal_detector(), basis, &pol).unwrap();
            assert_relative_eq!(q, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn dark_counts_only_give_random_bits() {
        let vacuum = BranchEnsemble::vacuum(4);
        let det =
            DetectorSpec::new(0.95, 1e3, 3.0e7, DetectorKind::Pnr, PovmModel::Exact).unwrap();
        let pol = TruncationPolicy::default();
        for basis in [Basis::Z, Basis::X] {
            let (p_ab, q) = measure_qber(&vacuum, &det, basis, &pol).unwrap();
            assert!(p_ab > 0.0);
            assert_relative_eq!(q, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn vacuum_with_no_dark_counts_has_undefined_qber() {
        let vacuum = BranchEnsemble::vacuum(4);
        let pol = TruncationPolicy::default();
        assert_eq!(
            measure_qber(&vacuum, &ideal_detector(), Basis::Z, &pol).unwrap_err(),
            Error::UndefinedQber
        );
    }

    #[test]
    fn perfect_chain_has_zero_qber_for_small_link_counts() {
        for n in 1..=4 {
            let cfg = ideal_config(n, SourceSpec::perfect_pair());
            let res = end_to_end(&cfg).unwrap();
            assert!(res.q_z.abs() < 1e-12, "N={n} q_z={}", res.q_z);
            assert!(res.q_x.abs() < 1e-12, "N={n} q_x={}", res.q_x);
            assert_relative_eq!(res.p_ab, 1.0, epsilon = 1e-9);
            assert_eq!(res.p_swaps.len(), n - 1);
            for p in &res.p_swaps {
                assert_relative_eq!(*p, 0.5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn multiphoton_errors_vanish_with_ideal_pnr_post_selection() {
        // Down-conversion sources with real fiber loss but ideal
        // detectors and memories: accepted endpoint events carry no error.
        let mut cfg = ideal_config(2, SourceSpec::spdc(0.1));
        cfg.total_distance_km = 100.0;
        let res = end_to_end(&cfg).unwrap();
        assert!(res.q_z.abs() < 1e-9, "q_z = {}", res.q_z);
        assert!(res.q_x.abs() < 1e-9, "q_x = {}", res.q_x);
        // The endpoint-post-selected single-pair sector is exactly Bell.
        let sector = res
            .final_state
            .project_with(|occ| {
                let c = occ.counts();
                u16::from(c[0]) + u16::from(c[1]) == 1 && u16::from(c[2]) + u16::from(c[3]) == 1
            })
            .normalized()
            .unwrap()
            .0;
        let f = sector.fidelity_with_pure(&canonical_bell()).unwrap();
        assert_relative_eq!(f, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sequential_and_tree_orders_agree_at_four_links() {
        let mut cfg = ideal_config(4, SourceSpec::spdc(0.05));
        cfg.total_distance_km = 400.0;
        cfg.memory_efficiency = 0.9;
        cfg.center_detectors =
            DetectorSpec::new(0.95, 1.0, 3.0e7, DetectorKind::Pnr, PovmModel::Exact).unwrap();
        cfg.node_detectors = cfg.center_detectors;
        cfg.endpoint_detectors = cfg.center_detectors;

        let seq = end_to_end(&cfg).unwrap();
        cfg.swap_order = SwapOrder::Tree;
        let tree = end_to_end(&cfg).unwrap();

        let prod = |v: &[f64]| v.iter().product::<f64>();
        assert_relative_eq!(
            prod(&seq.p_swaps),
            prod(&tree.p_swaps),
            max_relative = 1e-10
        );
        assert_relative_eq!(seq.q_z, tree.q_z, epsilon = 1e-10, max_relative = 1e-10);
        assert_relative_eq!(seq.q_x, tree.q_x, epsilon = 1e-10, max_relative = 1e-10);
    }

    #[test]
    fn tree_order_rejects_non_power_of_two() {
        let mut cfg = ideal_config(3, SourceSpec::perfect_pair());
        cfg.swap_order = SwapOrder::Tree;
        assert_eq!(
            end_to_end(&cfg).unwrap_err(),
            Error::TreeOrderNotPowerOfTwo(3)
        );
    }

    #[test]
    fn single_link_reduces_to_elementary_link_plus_endpoints() {
        let mut cfg = ideal_config(1, SourceSpec::spdc(0.035));
        cfg.total_distance_km = 50.0;
        let res = end_to_end(&cfg).unwrap();
        let link = elementary_link(&cfg).unwrap();
        assert_relative_eq!(res.link.p_s0, link.p_s0, epsilon = 1e-15);
        assert!(res.p_swaps.is_empty());
        let (p_ab_z, q_z) = measure_qber(
            &link.state.normalized().unwrap().0,
            &cfg.endpoint_detectors,
            Basis::Z,
            &cfg.truncation,
        )
        .unwrap();
        assert_relative_eq!(res.q_z, q_z, epsilon = 1e-12);
        assert!(p_ab_z > 0.0);
    }
}

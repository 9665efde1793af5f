//! Physical device models: down-conversion pair sources, photon-counting
//! detector POVMs (number-resolving and threshold), fiber transmissivity
//! and memory readout loss.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)] // used in the no_std build
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::{BranchEnsemble, PureState, TruncationPolicy};
use crate::math::binom;

/// Which entangled-pair source feeds the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceModel {
    /// Down-conversion state truncated at two pair emissions, with the
    /// pair-number distribution parameterized by the mean photon number.
    SpdcTruncated,
    /// Full down-conversion expansion kept to `pair_terms_max` pairs and
    /// renormalized.
    PdcExact,
    /// Deterministic maximally entangled pair (reference/cross-validation).
    PerfectPair,
}

/// Source parameters. `n_s` is the mean photon number per mode;
/// `pair_terms_max` only applies to [`SourceModel::PdcExact`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceSpec {
    pub model: SourceModel,
    pub n_s: f64,
    pub pair_terms_max: usize,
}

impl SourceSpec {
    pub fn spdc(n_s: f64) -> Self {
        SourceSpec {
            model: SourceModel::SpdcTruncated,
            n_s,
            pair_terms_max: 2,
        }
    }

    pub fn perfect_pair() -> Self {
        SourceSpec {
            model: SourceModel::PerfectPair,
            n_s: 0.0,
            pair_terms_max: 1,
        }
    }

    /// Emitted four-mode state `(a0, a1, b0, b1)` and the squared-norm
    /// fraction kept by truncation (1 except for `PdcExact`).
    pub fn state(&self) -> Result<(PureState, f64)> {
        match self.model {
            SourceModel::SpdcTruncated => Ok((spdc_state(self.n_s)?, 1.0)),
            SourceModel::PerfectPair => Ok((perfect_pair_state(), 1.0)),
            SourceModel::PdcExact => pdc_exact_state(self.n_s, self.pair_terms_max),
        }
    }
}

/// Pair-number probabilities of the truncated down-conversion state:
/// `p(0) = 1/(N+1)`, `p(1) = N/(N+1)^2`, `p(2) = 1 - p(0) - p(1)`.
pub fn spdc_pair_probabilities(n_s: f64) -> Result<[f64; 3]> {
    if !(n_s >= 0.0) {
        return Err(Error::InvalidMeanPhotonNumber(n_s));
    }
    let p0 = 1.0 / (n_s + 1.0);
    let p1 = n_s / ((n_s + 1.0) * (n_s + 1.0));
    let p2 = 1.0 - p0 - p1;
    Ok([p0, p1, p2.max(0.0)])
}

/// Four-mode truncated down-conversion state
/// `sqrt(p0)|00,00> + sqrt(p1/2)(|10,01> + |01,10>)
///  + sqrt(p2/3)(|20,02> - |11,11> + |02,20>)`.
pub fn spdc_state(n_s: f64) -> Result<PureState> {
    let [p0, p1, p2] = spdc_pair_probabilities(n_s)?;
    let c = |x: f64| Complex64::new(x, 0.0);
    let a1 = (p1 / 2.0).sqrt();
    let a2 = (p2 / 3.0).sqrt();
    PureState::from_terms(
        4,
        [
            ([0u8, 0, 0, 0], c(p0.sqrt())),
            ([1u8, 0, 0, 1], c(a1)),
            ([0u8, 1, 1, 0], c(a1)),
            ([2u8, 0, 0, 2], c(a2)),
            ([1u8, 1, 1, 1], c(-a2)),
            ([0u8, 2, 2, 0], c(a2)),
        ],
    )
}

/// The maximally entangled dual-rail pair `(|10,01> + |01,10>)/sqrt(2)`.
pub fn perfect_pair_state() -> PureState {
    let a = Complex64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
    PureState::from_terms(4, [([1u8, 0, 0, 1], a), ([0u8, 1, 1, 0], a)])
        .expect("normalized by construction")
}

/// Full down-conversion expansion truncated at `pair_terms_max` pair
/// emissions and renormalized. The n-pair term carries amplitude
/// `tanh^n(gt)/cosh^2(gt)` on each `(-1)^m |n-m, m; m, n-m>` ket, with
/// `cosh^2(gt) = n_s + 1`. Returns the state and the squared-norm
/// fraction kept before renormalization.
pub fn pdc_exact_state(n_s: f64, pair_terms_max: usize) -> Result<(PureState, f64)> {
    if !(n_s >= 0.0) {
        return Err(Error::InvalidMeanPhotonNumber(n_s));
    }
    if pair_terms_max < 1 {
        return Err(Error::InvalidPairTerms);
    }
    let cosh2 = n_s + 1.0;
    let tanh2 = n_s / (n_s + 1.0);
    let tanh = tanh2.sqrt();
    let mut terms: Vec<([u8; 4], Complex64)> = Vec::new();
    let mut kept = 0.0;
    for n in 0..=pair_terms_max {
        let amp = tanh.powi(n as i32) / cosh2;
        kept += (f64::from(n as u32) + 1.0) * amp * amp;
        for m in 0..=n {
            let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
            terms.push((
                [(n - m) as u8, m as u8, m as u8, (n - m) as u8],
                Complex64::new(sign * amp, 0.0),
            ));
        }
    }
    let mut state = PureState::from_terms(4, terms)?;
    let norm = state.norm_sqr().sqrt();
    state = PureState::from_terms(
        4,
        state
            .iter()
            .map(|(occ, a)| (occ.clone(), a / norm))
            .collect::<Vec<_>>(),
    )?;
    Ok((state, kept))
}

/// Detector family: full photon-number resolution or threshold click.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorKind {
    Pnr,
    Spd,
}

/// Which POVM construction to use for lossy, dark-count-prone detectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PovmModel {
    /// Binomial thinning of the incident photons plus an independent dark
    /// click (at most one per window); complete by construction.
    #[default]
    Exact,
    /// Three-outcome variant matching a legacy analysis: its one-of-two
    /// detected term omits the combinatorial factor 2, leaving an
    /// eta*(1-eta) completeness defect on the two-photon projector.
    /// Provided for comparison rather than silently corrected.
    Paper,
}

/// Detector parameters. The dark-click probability per detection window
/// is `dark_rate_hz / rep_rate_hz`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorSpec {
    pub eta: f64,
    pub dark_rate_hz: f64,
    pub rep_rate_hz: f64,
    pub kind: DetectorKind,
    pub povm_model: PovmModel,
}

impl DetectorSpec {
    pub fn new(
        eta: f64,
        dark_rate_hz: f64,
        rep_rate_hz: f64,
        kind: DetectorKind,
        povm_model: PovmModel,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidEfficiency(eta));
        }
        let spec = DetectorSpec {
            eta,
            dark_rate_hz,
            rep_rate_hz,
            kind,
            povm_model,
        };
        let pd = spec.dark_click_prob();
        if !(0.0..1.0).contains(&pd) {
            return Err(Error::InvalidDarkProbability(pd));
        }
        Ok(spec)
    }

    /// Ideal reference detector (unit efficiency, no dark counts).
    pub fn ideal(kind: DetectorKind) -> Self {
        DetectorSpec {
            eta: 1.0,
            dark_rate_hz: 0.0,
            rep_rate_hz: 1.0,
            kind,
            povm_model: PovmModel::Exact,
        }
    }

    pub fn dark_click_prob(&self) -> f64 {
        self.dark_rate_hz / self.rep_rate_hz
    }
}

/// One POVM outcome: the click count it reports and its diagonal
/// coefficients over the photon-number projectors `Pi_0 .. Pi_n_max`.
#[derive(Clone, Debug)]
pub struct PovmElement {
    pub clicks: u8,
    pub coeffs: Vec<f64>,
}

/// A detector's complete outcome set, diagonal in the Fock basis.
#[derive(Clone, Debug)]
pub struct PovmSet {
    n_max: u8,
    elements: Vec<PovmElement>,
}

impl PovmSet {
    pub fn n_max(&self) -> u8 {
        self.n_max
    }

    pub fn elements(&self) -> &[PovmElement] {
        &self.elements
    }

    /// Outcomes with nonzero coefficient for `n` incident photons, as
    /// `(clicks, probability)` pairs.
    pub fn outcomes_for(&self, n: u8) -> impl Iterator<Item = (u8, f64)> + '_ {
        self.elements.iter().filter_map(move |e| {
            let c = e.coeffs.get(usize::from(n)).copied().unwrap_or(0.0);
            (c > 0.0).then_some((e.clicks, c))
        })
    }

    /// `1 - sum_i F_i` on the photon-number projector `Pi_n`; zero for a
    /// complete POVM.
    pub fn completeness_defect(&self, n: u8) -> f64 {
        let sum: f64 = self
            .elements
            .iter()
            .map(|e| e.coeffs.get(usize::from(n)).copied().unwrap_or(0.0))
            .sum();
        1.0 - sum
    }
}

/// Builds the POVM of `spec` on the truncated space `Pi_0 .. Pi_n_max`.
pub fn detector_povm(spec: &DetectorSpec, n_max: u8) -> PovmSet {
    let eta = spec.eta;
    let pd = spec.dark_click_prob();
    // Dark counts: Poisson with mean pd, truncated at one event per
    // window and renormalized.
    let dark0 = 1.0 / (1.0 + pd);
    let dark1 = pd / (1.0 + pd);
    let nn = usize::from(n_max);

    let elements = match (spec.kind, spec.povm_model) {
        (DetectorKind::Pnr, PovmModel::Exact) => {
            // P(k clicks | n photons) = sum_d C(n,d) eta^d (1-eta)^(n-d)
            // * P_dark(k - d).
            (0..=n_max + 1)
                .map(|k| {
                    let coeffs = (0..=nn)
                        .map(|n| {
                            let n = n as u32;
                            let mut p = 0.0;
                            for d in 0..=n.min(u32::from(k)) {
                                let dark = u32::from(k) - d;
                                let pdark = match dark {
                                    0 => dark0,
                                    1 => dark1,
                                    _ => 0.0,
                                };
                                if pdark == 0.0 {
                                    continue;
                                }
                                p += binom(n, d)
                                    * eta.powi(d as i32)
                                    * (1.0 - eta).powi((n - d) as i32)
                                    * pdark;
                            }
                            p
                        })
                        .collect();
                    PovmElement { clicks: k, coeffs }
                })
                .collect()
        }
        (DetectorKind::Pnr, PovmModel::Paper) => {
            let pad = |mut v: Vec<f64>| {
                v.resize(nn + 1, 0.0);
                v
            };
            vec![
                PovmElement {
                    clicks: 0,
                    coeffs: pad(vec![
                        1.0 - pd,
                        (1.0 - eta) * (1.0 - pd),
                        (1.0 - eta) * (1.0 - eta) * (1.0 - pd),
                    ]),
                },
                PovmElement {
                    clicks: 1,
                    coeffs: pad(vec![
                        pd,
                        eta + (1.0 - eta) * pd,
                        eta * (1.0 - eta) + (1.0 - eta) * (1.0 - eta) * pd,
                    ]),
                },
                PovmElement {
                    clicks: 2,
                    coeffs: pad(vec![0.0, 0.0, eta * eta]),
                },
            ]
        }
        (DetectorKind::Spd, PovmModel::Exact) => {
            let f0: Vec<f64> = (0..=nn)
                .map(|n| (1.0 - eta).powi(n as i32) * dark0)
                .collect();
            let f1 = f0.iter().map(|c| 1.0 - c).collect();
            vec![
                PovmElement {
                    clicks: 0,
                    coeffs: f0,
                },
                PovmElement {
                    clicks: 1,
                    coeffs: f1,
                },
            ]
        }
        (DetectorKind::Spd, PovmModel::Paper) => {
            let mut f0 = vec![
                1.0 - pd,
                (1.0 - eta) * (1.0 - pd),
                (1.0 - eta) * (1.0 - eta) * (1.0 - pd),
            ];
            f0.resize(nn + 1, 0.0);
            let f1 = f0.iter().map(|c| 1.0 - c).collect();
            vec![
                PovmElement {
                    clicks: 0,
                    coeffs: f0,
                },
                PovmElement {
                    clicks: 1,
                    coeffs: f1,
                },
            ]
        }
    };
    PovmSet { n_max, elements }
}

/// Fiber power transmissivity `10^(-alpha L / 10)` for a length in km and
/// attenuation in dB/km.
pub fn fiber_transmissivity(length_km: f64, alpha_db_per_km: f64) -> f64 {
    debug_assert!(length_km >= 0.0 && alpha_db_per_km >= 0.0);
    10f64.powf(-alpha_db_per_km * length_km / 10.0)
}

/// Memory readout: fixed-efficiency loss applied to each listed rail.
pub fn memory_apply(
    state: &BranchEnsemble,
    rails: &[usize],
    eta_mem: f64,
    policy: &TruncationPolicy,
) -> Result<BranchEnsemble> {
    if !(0.0..=1.0).contains(&eta_mem) {
        return Err(Error::InvalidEfficiency(eta_mem));
    }
    let mut out = state.clone();
    for &rail in rails {
        out = out.loss(rail, eta_mem, policy)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Occupation;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spdc_probabilities_at_reference_point() {
        let [p0, p1, p2] = spdc_pair_probabilities(0.035).unwrap();
        assert_relative_eq!(p0, 0.966184, epsilon = 1e-6);
        assert_relative_eq!(p1, 0.032673, epsilon = 1e-6);
        assert_relative_eq!(p2, 0.001143, epsilon = 1e-6);
    }

    #[test]
    fn spdc_zero_mean_is_vacuum() {
        let s = spdc_state(0.0).unwrap();
        assert_relative_eq!(
            s.amplitude(&Occupation::zeros(4)).re,
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(s.norm_sqr(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn spdc_normalized_for_random_mean_photon_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let n_s = rng.gen_range(0.0..1.0);
            let [p0, p1, p2] = spdc_pair_probabilities(n_s).unwrap();
            assert_relative_eq!(p0 + p1 + p2, 1.0, epsilon = 1e-15);
            let s = spdc_state(n_s).unwrap();
            assert_relative_eq!(s.norm_sqr(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn spdc_rejects_negative_mean() {
        assert!(spdc_state(-0.1).is_err());
    }

    #[test]
    fn perfect_pair_is_normalized_and_matches_single_pair_sector() {
        let pp = perfect_pair_state();
        assert_relative_eq!(pp.norm_sqr(), 1.0, epsilon = 1e-15);
        // Same sign convention as the truncated source's one-pair sector.
        let s = spdc_state(0.2).unwrap();
        let p1 = spdc_pair_probabilities(0.2).unwrap()[1];
        let overlap = pp.inner(&s).norm_sqr() / p1;
        assert_relative_eq!(overlap, 1.0, epsilon = 1e-12);
        // Fidelity with one of its two kets is 1/2.
        let f = crate::fock::BranchEnsemble::from_pure(PureState::basis_ket([1u8, 0, 0, 1]))
            .fidelity_with_pure(&pp)
            .unwrap();
        assert_relative_eq!(f, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn pdc_exact_single_pair_sign_is_negative() {
        let (s, _) = pdc_exact_state(0.1, 3).unwrap();
        let a10 = s.amplitude(&Occupation::from([1u8, 0, 0, 1]));
        let a01 = s.amplitude(&Occupation::from([0u8, 1, 1, 0]));
        assert!(a10.re > 0.0);
        assert_relative_eq!((a10 + a01).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn pdc_exact_pair_probability() {
        // q(1) = 2 tanh^2(gt) / cosh^4(gt) before renormalization.
        let n_s = 0.25;
        let cosh2 = n_s + 1.0;
        let tanh2 = n_s / (n_s + 1.0);
        let expected = 2.0 * tanh2 / (cosh2 * cosh2);
        let (s, kept) = pdc_exact_state(n_s, 6).unwrap();
        let a10 = s.amplitude(&Occupation::from([1u8, 0, 0, 1]));
        let a01 = s.amplitude(&Occupation::from([0u8, 1, 1, 0]));
        let q1 = (a10.norm_sqr() + a01.norm_sqr()) * kept;
        assert_relative_eq!(q1, expected, epsilon = 1e-12);
    }

    #[test]
    fn pdc_exact_vanishing_mean_is_vacuum() {
        let (s, kept) = pdc_exact_state(0.0, 4).unwrap();
        assert_relative_eq!(kept, 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            s.amplitude(&Occupation::zeros(4)).re,
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn pdc_exact_kept_fraction_increases_with_terms() {
        let (_, k2) = pdc_exact_state(0.5, 2).unwrap();
        let (_, k6) = pdc_exact_state(0.5, 6).unwrap();
        assert!(k2 < k6);
        assert!(k6 < 1.0 + 1e-12);
    }

    #[test]
    fn ideal_pnr_povm_is_projective() {
        let spec = DetectorSpec::ideal(DetectorKind::Pnr);
        for model in [PovmModel::Exact, PovmModel::Paper] {
            let spec = DetectorSpec {
                povm_model: model,
                ..spec
            };
            let povm = detector_povm(&spec, 2);
            let f1 = povm.elements().iter().find(|e| e.clicks == 1).unwrap();
            assert_eq!(f1.coeffs[0], 0.0);
            assert_eq!(f1.coeffs[1], 1.0);
            assert_eq!(f1.coeffs[2], 0.0);
        }
    }

    #[test]
    fn exact_povm_is_complete_on_parameter_grid() {
        for kind in [DetectorKind::Pnr, DetectorKind::Spd] {
            for eta in [0.0, 0.2, 0.5, 0.8, 0.95, 1.0] {
                for pd in [0.0, 1e-8, 1e-3, 0.1] {
                    let spec =
                        DetectorSpec::new(eta, pd, 1.0, kind, PovmModel::Exact).unwrap();
                    let povm = detector_povm(&spec, 4);
                    for n in 0..=4 {
                        assert!(
                            povm.completeness_defect(n).abs() < 1e-12,
                            "defect at eta={eta}, pd={pd}, n={n}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn paper_povm_defect_is_eta_one_minus_eta() {
        for eta in [0.1, 0.5, 0.95] {
            for pd in [0.0, 1e-3, 0.05] {
                let spec =
                    DetectorSpec::new(eta, pd, 1.0, DetectorKind::Pnr, PovmModel::Paper).unwrap();
                let povm = detector_povm(&spec, 2);
                assert_relative_eq!(povm.completeness_defect(0), 0.0, epsilon = 1e-12);
                assert_relative_eq!(povm.completeness_defect(1), 0.0, epsilon = 1e-12);
                assert_relative_eq!(
                    povm.completeness_defect(2),
                    eta * (1.0 - eta),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn spd_paper_povm_sums_to_identity() {
        let spec =
            DetectorSpec::new(0.7, 1e-2, 1.0, DetectorKind::Spd, PovmModel::Paper).unwrap();
        let povm = detector_povm(&spec, 4);
        for n in 0..=4 {
            assert_eq!(povm.completeness_defect(n), 0.0);
        }
    }

    #[test]
    fn exact_and_paper_povms_agree_below_two_photons_without_dark_counts() {
        let mk = |model| {
            let spec = DetectorSpec::new(0.83, 0.0, 1.0, DetectorKind::Pnr, model).unwrap();
            detector_povm(&spec, 2)
        };
        let exact = mk(PovmModel::Exact);
        let paper = mk(PovmModel::Paper);
        for n in 0..=1u8 {
            for clicks in 0..=2u8 {
                let g = |p: &PovmSet| {
                    p.elements()
                        .iter()
                        .find(|e| e.clicks == clicks)
                        .map(|e| e.coeffs[usize::from(n)])
                        .unwrap_or(0.0)
                };
                assert_relative_eq!(g(&exact), g(&paper), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fiber_transmissivity_values() {
        assert_eq!(fiber_transmissivity(0.0, 0.2), 1.0);
        assert_relative_eq!(fiber_transmissivity(100.0, 0.2), 0.01, epsilon = 1e-14);
        assert_relative_eq!(fiber_transmissivity(50.0, 0.2), 0.1, epsilon = 1e-14);
    }

    #[test]
    fn fiber_transmissivity_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let l1 = rng.gen_range(0.0..500.0);
            let l2 = rng.gen_range(0.0..500.0);
            let t = fiber_transmissivity(l1 + l2, 0.2);
            let tt = fiber_transmissivity(l1, 0.2) * fiber_transmissivity(l2, 0.2);
            assert_relative_eq!(t, tt, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn memory_identity_at_unit_efficiency() {
        let s = BranchEnsemble::from_pure(perfect_pair_state());
        let out = memory_apply(&s, &[0, 1], 1.0, &TruncationPolicy::default()).unwrap();
        assert_eq!(out.branches().len(), 1);
        assert_relative_eq!(out.trace(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn memory_loss_weights() {
        // Single photon in one rail: photon branch keeps weight eta.
        let s = BranchEnsemble::from_pure(PureState::basis_ket([1u8, 0]));
        let out = memory_apply(&s, &[0], 0.9, &TruncationPolicy::default()).unwrap();
        assert_relative_eq!(out.trace(), 1.0, epsilon = 1e-14);
        let photon_weight: f64 = out
            .branches()
            .iter()
            .filter(|b| b.state.amplitude(&Occupation::from([1u8, 0])).norm() > 0.5)
            .map(|b| b.weight)
            .sum();
        assert_relative_eq!(photon_weight, 0.9, epsilon = 1e-14);

        // Two rails, one photon each: both survive with weight 0.81.
        let s = BranchEnsemble::from_pure(PureState::basis_ket([1u8, 1]));
        let out = memory_apply(&s, &[0, 1], 0.9, &TruncationPolicy::default()).unwrap();
        let both: f64 = out
            .branches()
            .iter()
            .filter(|b| b.state.amplitude(&Occupation::from([1u8, 1])).norm() > 0.5)
            .map(|b| b.weight)
            .sum();
        assert_relative_eq!(both, 0.81, epsilon = 1e-14);
    }
}

//! Secret-key rates and repeaterless baselines.

#[allow(unused_imports)] // used in the no_std build
use num_traits::Float;

use crate::chain::{ChainConfig, EndToEndResult};
use crate::devices::fiber_transmissivity;
use crate::error::{Error, Result};

/// One output record of a rate-versus-distance evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub distance_km: f64,
    pub n_links: usize,
    pub n_s: f64,
    pub p_s0: f64,
    pub p_link: f64,
    pub p_swap_product: f64,
    pub p_ab: f64,
    pub q_z: f64,
    pub q_x: f64,
    pub secret_fraction: f64,
    pub key_rate_bps: f64,
    pub tgw_bps: f64,
    pub direct_bps: f64,
}

/// Binary entropy `-x log2 x - (1-x) log2 (1-x)` with the limits
/// `h2(0) = h2(1) = 0`.
pub fn h2(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidDarkProbability(x));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Distillable secret fraction per post-selected coincidence:
/// `max(0, 0.5 - h2(q))`. Defined for `q` in [0, 0.5]; saturates to zero
/// beyond.
pub fn secret_fraction(q: f64) -> f64 {
    if q <= 0.0 {
        return 0.5;
    }
    if q >= 0.5 {
        return 0.0;
    }
    (0.5 - h2(q).expect("q in range")).max(0.0)
}

/// Distilled bits per second: repetition rate times every heralding
/// factor times the secret fraction at the basis-averaged error rate.
/// Composed in log space so deep chains with tiny stage probabilities
/// do not underflow.
pub fn key_rate_bps(e2e: &EndToEndResult, cfg: &ChainConfig) -> f64 {
    let q_mean = 0.5 * (e2e.q_z + e2e.q_x);
    let sf = secret_fraction(q_mean);
    if sf <= 0.0 {
        return 0.0;
    }
    let mut log_rate = cfg.rep_rate_hz.ln() + sf.ln();
    for &p in e2e.p_links.iter().chain(&e2e.p_swaps) {
        if p <= 0.0 {
            return 0.0;
        }
        log_rate += p.ln();
    }
    if e2e.p_ab <= 0.0 {
        return 0.0;
    }
    log_rate += e2e.p_ab.ln();
    log_rate.exp()
}

/// Repeaterless key-capacity bound per channel use,
/// `log2((1 + eta)/(1 - eta))` for channel transmissivity `eta`.
/// Divergent (positive infinity) at `eta = 1`. Evaluated via `ln_1p` so
/// long-distance values do not round to zero.
pub fn tgw_bits_per_use(eta: f64) -> f64 {
    if eta >= 1.0 {
        return f64::INFINITY;
    }
    (eta.ln_1p() - (-eta).ln_1p()) / core::f64::consts::LN_2
}

/// The repeaterless bound scaled by repetition rate and the same mode
/// multiplexing as the repeater (the most conservative comparison).
pub fn tgw_bps(distance_km: f64, alpha_db_per_km: f64, rep_rate_hz: f64, modes: u64) -> f64 {
    let eta = fiber_transmissivity(distance_km, alpha_db_per_km);
    rep_rate_hz * modes as f64 * tgw_bits_per_use(eta)
}

/// Fraction of single-click events on one side that are dark-count
/// impostors, given the signal-click probability `s`.
fn noise_fraction(s: f64, pd: f64) -> f64 {
    let p_signal = s * (1.0 - pd);
    let p_false = 2.0 * pd * (1.0 - s);
    let denom = p_signal + p_false;
    if denom <= 0.0 {
        1.0
    } else {
        p_false / denom
    }
}

/// A simple entanglement-based direct-transmission baseline: one source,
/// full-distance fiber to the far side, basis sifting factor 1/2 and the
/// same multiplexing. Dark counts degrade the error rate with distance.
pub fn direct_bps(distance_km: f64, cfg: &ChainConfig) -> f64 {
    let eta_end = fiber_transmissivity(distance_km, cfg.alpha_db_per_km);
    let det = &cfg.endpoint_detectors;
    let eta_d = det.eta;
    let pd = det.dark_click_prob();
    // Near side holds its half locally; far side sees the full channel.
    let f_near = noise_fraction(eta_d, pd);
    let f_far = noise_fraction(eta_end * eta_d, pd);
    let q_dark = 0.5 * (f_near + f_far - f_near * f_far);
    cfg.rep_rate_hz
        * cfg.multiplexed_modes() as f64
        * eta_end
        * eta_d
        * eta_d
        * 0.5
        * secret_fraction(q_dark)
}

/// Assembles the full output record for one chain evaluation.
pub fn rate_row(cfg: &ChainConfig, e2e: &EndToEndResult) -> RateRow {
    let q_mean = 0.5 * (e2e.q_z + e2e.q_x);
    RateRow {
        distance_km: cfg.total_distance_km,
        n_links: cfg.num_links,
        n_s: cfg.source.n_s,
        p_s0: e2e.link.p_s0,
        p_link: e2e.link.p_link,
        p_swap_product: e2e.p_swaps.iter().product(),
        p_ab: e2e.p_ab,
        q_z: e2e.q_z,
        q_x: e2e.q_x,
        secret_fraction: secret_fraction(q_mean),
        key_rate_bps: key_rate_bps(e2e, cfg),
        tgw_bps: tgw_bps(
            cfg.total_distance_km,
            cfg.alpha_db_per_km,
            cfg.rep_rate_hz,
            cfg.multiplexed_modes(),
        ),
        direct_bps: direct_bps(cfg.total_distance_km, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{end_to_end, SwapOrder};
    use crate::devices::{DetectorKind, DetectorSpec, SourceSpec};
    use crate::fock::TruncationPolicy;
    use approx::assert_relative_eq;

    #[test]
    fn binary_entropy_anchors() {
        assert_eq!(h2(0.0).unwrap(), 0.0);
        assert_eq!(h2(1.0).unwrap(), 0.0);
        assert_relative_eq!(h2(0.5).unwrap(), 1.0, epsilon = 1e-15);
        // The quoted 0.1104 threshold is a rounded zero of 0.5 - h2(q);
        // the entropy there sits within 2e-3 of one half.
        assert_relative_eq!(h2(0.1104).unwrap(), 0.5, epsilon = 2e-3);
        assert!(h2(1.2).is_err());
    }

    #[test]
    fn secret_fraction_anchors() {
        assert_eq!(secret_fraction(0.0), 0.5);
        assert_eq!(secret_fraction(0.1104), 0.0);
        assert!(secret_fraction(0.1100) > 0.0);
        assert_eq!(secret_fraction(0.25), 0.0);
        assert_eq!(secret_fraction(0.5), 0.0);
    }

    #[test]
    fn secret_fraction_is_non_increasing() {
        let mut last = f64::INFINITY;
        for i in 0..=500 {
            let q = 0.5 * f64::from(i) / 500.0;
            let sf = secret_fraction(q);
            assert!(sf <= last + 1e-15);
            last = sf;
        }
    }

    #[test]
    fn tgw_asymptotics_and_values() {
        // Small-eta expansion: log2((1+x)/(1-x)) -> 2x/ln 2.
        let eta = 1e-6;
        assert_relative_eq!(
            tgw_bits_per_use(eta),
            2.0 * eta / core::f64::consts::LN_2,
            max_relative = 1e-6
        );
        assert_relative_eq!(tgw_bits_per_use(0.01), 0.02886, epsilon = 1e-4);
        assert_eq!(tgw_bits_per_use(1.0), f64::INFINITY);
        assert_eq!(tgw_bps(0.0, 0.2, 1.0, 1), f64::INFINITY);
        // No underflow to zero deep in the loss regime.
        assert!(tgw_bits_per_use(1e-28) > 0.0);
        assert_relative_eq!(
            tgw_bits_per_use(1e-28),
            2.0 * 1e-28 / core::f64::consts::LN_2,
            max_relative = 1e-10
        );
    }

    fn baseline_config() -> crate::chain::ChainConfig {
        crate::chain::ChainConfig {
            total_distance_km: 0.0,
            num_links: 1,
            alpha_db_per_km: 0.2,
            source: SourceSpec::perfect_pair(),
            center_detectors: DetectorSpec::ideal(DetectorKind::Pnr),
            node_detectors: DetectorSpec::ideal(DetectorKind::Pnr),
            endpoint_detectors: DetectorSpec::ideal(DetectorKind::Pnr),
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
    fn ideal_single_link_rate_hits_the_bsm_ceiling() {
        // 30 MHz x p_link(=0.5) x p_ab(=1) x secret fraction(=0.5).
        let cfg = baseline_config();
        let e2e = end_to_end(&cfg).unwrap();
        let rate = key_rate_bps(&e2e, &cfg);
        assert_relative_eq!(rate, 7.5e6, max_relative = 1e-9);
    }

    #[test]
    fn direct_baseline_at_zero_distance() {
        let cfg = baseline_config();
        // rep x M x 0.5 (sifting) x 0.5 (secret fraction at q=0).
        assert_relative_eq!(direct_bps(0.0, &cfg), 3.0e7 * 0.25, epsilon = 1e-6);
    }

    #[test]
    fn direct_baseline_decreases_with_distance_and_respects_tgw() {
        let mut cfg = baseline_config();
        cfg.endpoint_detectors =
            DetectorSpec::new(0.95, 1.0, 3.0e7, DetectorKind::Pnr, Default::default()).unwrap();
        let mut last = f64::INFINITY;
        for d in (0..=1400).step_by(100) {
            let d = f64::from(d);
            let direct = direct_bps(d, &cfg);
            let tgw = tgw_bps(d, cfg.alpha_db_per_km, cfg.rep_rate_hz, 1);
            assert!(direct <= last + 1e-12);
            assert!(direct <= tgw, "direct {direct} above bound {tgw} at {d} km");
            last = direct;
        }
    }

    #[test]
    fn rate_row_collects_all_columns() {
        let cfg = baseline_config();
        let e2e = end_to_end(&cfg).unwrap();
        let row = rate_row(&cfg, &e2e);
        assert_eq!(row.n_links, 1);
        assert_relative_eq!(row.p_s0, 0.5, epsilon = 1e-9);
        assert_eq!(row.p_swap_product, 1.0);
        assert_relative_eq!(row.secret_fraction, 0.5, epsilon = 1e-12);
        assert_relative_eq!(row.key_rate_bps, 7.5e6, max_relative = 1e-9);
    }
}

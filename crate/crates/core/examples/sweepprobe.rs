// probe: envelope vs bound across n_s (lean grid)
use repsim_core::chain::{end_to_end, ChainConfig, SwapOrder};
use repsim_core::devices::{DetectorKind, DetectorSpec, PovmModel, SourceSpec};
use repsim_core::fock::TruncationPolicy;
use repsim_core::rates;

fn main() {
    let det = DetectorSpec::new(0.95, 1.0, 3.0e7, DetectorKind::Pnr, PovmModel::Exact).unwrap();
    for ns in [0.035f64, 0.01, 0.004] {
        println!("=== n_s={ns} (no end memory) ===");
        for d in [300.0f64, 500.0, 700.0, 900.0, 1100.0, 1400.0] {
            let mut best = (0usize, 0.0f64);
            let mut qbar7 = 0.0;
            for n in 1..=7usize {
                let cfg = ChainConfig {
                    total_distance_km: d,
                    num_links: n,
                    alpha_db_per_km: 0.2,
                    source: SourceSpec::spdc(ns),
                    center_detectors: det,
                    node_detectors: det,
                    endpoint_detectors: det,
                    memory_efficiency: 0.9,
                    end_memory: false,
                    freq_modes: 10_000,
                    spatial_modes: 100,
                    rep_rate_hz: 3.0e7,
                    swap_order: SwapOrder::Sequential,
                    truncation: TruncationPolicy::default(),
                };
                if let Ok(e2e) = end_to_end(&cfg) {
                    let r = rates::rate_row(&cfg, &e2e);
                    if n == 7 { qbar7 = 0.5 * (r.q_z + r.q_x); }
                    if r.key_rate_bps > best.1 {
                        best = (n, r.key_rate_bps);
                    }
                }
            }
            let tgw = rates::tgw_bps(d, 0.2, 3.0e7, 1_000_000);
            println!("  d={d:5.0} bestN={} rate={:.3e} tgw={:.3e} beats={} qbar(N7)={qbar7:.3}",
                best.0, best.1, tgw, best.1 > tgw);
        }
    }
}

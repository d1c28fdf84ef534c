//! Shared fixtures for the benchmarks under `benches/`.

use secalloc_core::{generate_ensemble, ChannelEnsemble, DualState, ProblemConfig};

/// Ensemble sizes swept by the solver benchmarks.
pub const SIZES: [usize; 2] = [100, 400];

/// 64 subcarriers, 8 users, 4 secure, 30 dB, common target `c`.
pub fn reference_config(c: f64) -> ProblemConfig {
    ProblemConfig::uniform(64, 8, 4, c, 30.0).expect("valid reference config")
}

/// Reference problem with an `m`-realization ensemble drawn from seed 7.
pub fn fixture(c: f64, m: usize) -> (ProblemConfig, ChannelEnsemble) {
    let cfg = reference_config(c);
    let ens = generate_ensemble(&cfg, m, 7).expect("valid ensemble size");
    (cfg, ens)
}

/// Multipliers under which SUs win some subcarriers at 30 dB.
pub fn bid_duals() -> DualState {
    DualState::new(vec![5.0; 4], Some(0.1)).expect("non-negative duals")
}

#![allow(dead_code)]

use rand::Rng;

use specsense::channel::ChannelModel;
use specsense::dynamics::LinearSystem;
use specsense::estimation::{self, ConstraintOrder};
use specsense::optimizer::{tau_grid, ProblemSpec};
use specsense::sensing::{eps_f_from_snr, EnergyParams, SensingConfig};

/// A random spec around the reference plant whose target is the average bound
/// at a reachable `(gamma, n)`, so at least that schedule is feasible.
pub fn random_feasible_spec<R: Rng>(rng: &mut R) -> ProblemSpec {
    loop {
        let alpha = rng.random_range(1.0..10.0);
        let beta = rng.random_range(5.0..40.0);
        let eps_d = rng.random_range(1.02..1.5);
        let snr_db = rng.random_range(-6.0..0.0);
        let e_s = 100.0;
        let e_tx = e_s * rng.random_range(0.5..8.0);
        let sense = SensingConfig::new(0.0, 0.02, 2e6, eps_d, eps_f_from_snr(eps_d, snr_db), 0.05).unwrap();
        let ch = ChannelModel::new(alpha, beta).unwrap();
        let sys = LinearSystem::reference_plant();

        let reachable = tau_grid(sense.tau_max, 1001)
            .into_iter()
            .map(|t| sense.reception_rate_at(t, &ch))
            .fold(0.0, f64::max);
        let n_ref = rng.random_range(1..=6);
        let gamma_ref = reachable * rng.random_range(0.6..0.95);
        let Ok(p_bar) = estimation::average_bound_default(&sys, gamma_ref, n_ref) else {
            continue;
        };
        let energy = EnergyParams::new(e_s, e_tx).unwrap();
        return ProblemSpec::new(sys, ch, sense, energy, p_bar, ConstraintOrder::Loewner).unwrap();
    }
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

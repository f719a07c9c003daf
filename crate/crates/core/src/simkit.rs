//! Event-level Monte Carlo validation of the analytic model.
//!
//! Each sensing step draws a fresh stationary channel state, runs the
//! detector, and (if the detector declares the channel idle) transmits. The
//! packet survives when the channel is idle and its sampled idle interval
//! outlasts the transmit time. The random covariance recursion is driven by
//! the resulting arrivals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{ChannelModel, ChannelState};
use crate::dynamics::LinearSystem;
use crate::error::{Error, Result};
use crate::estimation;
use crate::linalg::CovMatrix;
use crate::optimizer::ProblemSpec;
use crate::sensing::SensingConfig;

/// Covariance trace beyond which a trial is declared diverged.
pub const DIVERGENCE_TRACE: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceptionEvent {
    Received,
    TransmittedCollided,
    NoTransmit,
}

impl ReceptionEvent {
    pub fn transmitted(self) -> bool {
        self != ReceptionEvent::NoTransmit
    }
}

/// One listen-before-talk attempt.
pub fn simulate_reception_event<R: Rng + ?Sized>(
    sense: &SensingConfig,
    ch: &ChannelModel,
    rng: &mut R,
) -> Result<ReceptionEvent> {
    let traj = ch.sample_trajectory(sense.t_x, rng)?;
    let state = traj.state_at(0.0)?;
    let (pd, pf) = sense.detection_probabilities();
    let declared_idle = match state {
        ChannelState::Idle => rng.random::<f64>() < pd,
        ChannelState::Busy => rng.random::<f64>() < pf,
    };
    if !declared_idle {
        return Ok(ReceptionEvent::NoTransmit);
    }
    if state == ChannelState::Idle && traj.residual_idle(0.0)? >= sense.t_x {
        Ok(ReceptionEvent::Received)
    } else {
        Ok(ReceptionEvent::TransmittedCollided)
    }
}

/// Source of measurement arrivals at sensing steps.
#[derive(Debug, Clone, Copy)]
pub enum ArrivalModel<'a> {
    /// Full sensing/transmission event simulation.
    Events { sense: &'a SensingConfig, ch: &'a ChannelModel },
    /// Each sensing step is a Bernoulli(gamma) arrival; energy is not charged.
    Bernoulli(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    /// Trace of `(1/horizon) Σ P_k`.
    pub avg_cov_trace: f64,
    #[serde(skip)]
    pub avg_cov: CovMatrix,
    pub energy_per_step: f64,
    pub total_energy: f64,
    pub packets_attempted: u64,
    pub packets_transmitted: u64,
    pub packets_received: u64,
    pub horizon: usize,
    pub peak_trace: f64,
    pub diverged: bool,
}

/// Per-step energy charges.
#[derive(Debug, Clone, Copy)]
pub struct EnergyCharges {
    /// Charged at every sensing step (`tau · e_s`).
    pub per_sensing: f64,
    /// Charged per transmission.
    pub per_transmission: f64,
}

/// Runs `horizon` steps of the random covariance recursion from `P_0 = Q`.
/// Steps `k` with `k % n == 0` are sensing steps. `on_step` sees each `P_k`.
pub fn run_covariance_trial<R: Rng + ?Sized>(
    sys: &LinearSystem,
    n: usize,
    horizon: usize,
    arrivals: ArrivalModel<'_>,
    charges: EnergyCharges,
    rng: &mut R,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrialResult> {
    if n == 0 || horizon == 0 {
        return Err(Error::invariant("trial.positive_period_and_horizon", format!("n = {n}, horizon = {horizon}")));
    }
    let dim = sys.state_dim();
    let mut p = sys.q().clone();
    let mut sum = CovMatrix::zeros(dim, dim);
    let (mut attempted, mut transmitted, mut received) = (0u64, 0u64, 0u64);
    let mut energy = 0.0;
    let mut peak = 0.0f64;
    let mut diverged = false;
    for k in 1..=horizon {
        if !diverged {
            let arrival = if k % n == 0 {
                attempted += 1;
                energy += charges.per_sensing;
                let (tx, rx) = match arrivals {
                    ArrivalModel::Events { sense, ch } => {
                        let ev = simulate_reception_event(sense, ch, rng)?;
                        (ev.transmitted(), ev == ReceptionEvent::Received)
                    }
                    ArrivalModel::Bernoulli(g) => {
                        let rx = rng.random::<f64>() < g;
                        (rx, rx)
                    }
                };
                if tx {
                    transmitted += 1;
                    energy += charges.per_transmission;
                }
                if rx {
                    received += 1;
                }
                rx
            } else {
                false
            };
            p = estimation::correct_cov(&p, sys, arrival)?;
            let tr = p.trace();
            peak = peak.max(tr);
            if !tr.is_finite() || tr > DIVERGENCE_TRACE {
                diverged = true;
            }
        }
        on_step(k, p.trace());
        sum += &p;
    }
    let avg_cov = sum / horizon as f64;
    Ok(TrialResult {
        avg_cov_trace: avg_cov.trace(),
        avg_cov,
        energy_per_step: energy / horizon as f64,
        total_energy: energy,
        packets_attempted: attempted,
        packets_transmitted: transmitted,
        packets_received: received,
        horizon,
        peak_trace: peak,
        diverged,
    })
}

/// One trial of the full system at `(n, tau)`.
pub fn run_trial<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    n: usize,
    tau: f64,
    horizon: usize,
    rng: &mut R,
) -> Result<TrialResult> {
    let sense = spec.sense.with_tau(tau)?;
    let charges = EnergyCharges {
        per_sensing: tau * spec.energy.e_s,
        per_transmission: spec.energy.e_tx,
    };
    run_covariance_trial(
        &spec.sys,
        n,
        horizon,
        ArrivalModel::Events { sense: &sense, ch: &spec.ch },
        charges,
        rng,
        |_, _| {},
    )
}

/// RNG for trial `index` under `master_seed`; independent of scheduling.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std_error: f64,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl Stat {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = compensated_sum(xs.iter().copied()) / n;
        let std_error = if xs.len() > 1 {
            let var = compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub horizon: usize,
    pub diverged: usize,
    pub avg_cov_trace: Stat,
    pub energy_per_step: Stat,
    pub packets_attempted: Stat,
    pub packets_transmitted: Stat,
    pub packets_received: Stat,
    /// Received packets over sensing attempts, pooled across trials.
    pub empirical_gamma: f64,
    /// Standard error of `empirical_gamma` from per-trial reception ratios.
    pub empirical_gamma_se: f64,
}

impl MonteCarloSummary {
    pub fn from_trials(results: &[TrialResult]) -> Self {
        let col = |f: fn(&TrialResult) -> f64| results.iter().map(f).collect::<Vec<_>>();
        let attempted: u64 = results.iter().map(|r| r.packets_attempted).sum();
        let received: u64 = results.iter().map(|r| r.packets_received).sum();
        let ratios = col(|r| r.packets_received as f64 / (r.packets_attempted.max(1)) as f64);
        Self {
            trials: results.len(),
            horizon: results.first().map_or(0, |r| r.horizon),
            diverged: results.iter().filter(|r| r.diverged).count(),
            avg_cov_trace: Stat::from_samples(&col(|r| r.avg_cov_trace)),
            energy_per_step: Stat::from_samples(&col(|r| r.energy_per_step)),
            packets_attempted: Stat::from_samples(&col(|r| r.packets_attempted as f64)),
            packets_transmitted: Stat::from_samples(&col(|r| r.packets_transmitted as f64)),
            packets_received: Stat::from_samples(&col(|r| r.packets_received as f64)),
            empirical_gamma: if attempted == 0 { 0.0 } else { received as f64 / attempted as f64 },
            empirical_gamma_se: Stat::from_samples(&ratios).std_error,
        }
    }
}

/// Independent trials in parallel. Results depend only on `master_seed`.
pub fn monte_carlo(
    spec: &ProblemSpec,
    n: usize,
    tau: f64,
    trials: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<MonteCarloSummary> {
    if trials == 0 {
        return Err(Error::invariant("monte_carlo.trials_positive", "trials = 0"));
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(spec, n, tau, horizon, &mut trial_rng(master_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloSummary::from_trials(&results))
}

/// Mean over trials of `trace(P_k)` for each `k = 1..=horizon` under
/// Bernoulli(gamma) arrivals. Diverged trials hold their last value.
pub fn mean_trace_path(
    sys: &LinearSystem,
    gamma: f64,
    n: usize,
    horizon: usize,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    let none = EnergyCharges {
        per_sensing: 0.0,
        per_transmission: 0.0,
    };
    let paths = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut path = Vec::with_capacity(horizon);
            run_covariance_trial(
                sys,
                n,
                horizon,
                ArrivalModel::Bernoulli(gamma),
                none,
                &mut trial_rng(master_seed, i as u64),
                |_, tr| path.push(tr),
            )?;
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..horizon)
        .map(|k| compensated_sum(paths.iter().map(|p| p[k])) / trials as f64)
        .collect())
}

/// Human-readable warnings when the configuration strains the modelling
/// assumptions (slow sampling relative to the channel, short sensing).
pub fn assumption_warnings(ch: &ChannelModel, tau: f64, sample_period: f64) -> Vec<String> {
    let mut out = Vec::new();
    let slowest = (1.0 / ch.alpha()).max(1.0 / ch.beta());
    if sample_period < 5.0 * slowest {
        out.push(format!(
            "sample period {sample_period} s is not much longer than the mean holding time {slowest:.4} s; per-step channel draws are treated as independent"
        ));
    }
    let fastest = ch.alpha().max(ch.beta());
    if tau > 0.1 / fastest {
        out.push(format!(
            "sensing time {tau} s exceeds 0.1/max(alpha, beta) = {:.4} s; channel changes during sensing are not modelled",
            0.1 / fastest
        ));
    }
    out
}

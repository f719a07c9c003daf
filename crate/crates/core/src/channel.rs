//! Exponential on/off channel occupancy.
//!
//! Idle periods last `Exp(alpha)` seconds and busy periods `Exp(beta)`, so the
//! stationary idle probability is `beta / (alpha + beta)`.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelState {
    Idle,
    Busy,
}

impl ChannelState {
    fn flip(self) -> Self {
        match self {
            ChannelState::Idle => ChannelState::Busy,
            ChannelState::Busy => ChannelState::Idle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    alpha: f64,
    beta: f64,
}

impl ChannelModel {
    /// `alpha` is the idle→busy rate (mean idle time `1/alpha`), `beta` the
    /// busy→idle rate.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invariant("channel.alpha_positive", format!("alpha = {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invariant("channel.beta_positive", format!("beta = {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `alpha / beta`.
    pub fn rate_ratio(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Stationary `(p_idle, p_busy)`.
    pub fn occupancy_probabilities(&self) -> (f64, f64) {
        let total = self.alpha + self.beta;
        (self.beta / total, self.alpha / total)
    }

    pub fn p_idle(&self) -> f64 {
        self.occupancy_probabilities().0
    }

    /// Probability that an idle channel stays idle for at least `t_x` seconds.
    pub fn hold_probability(&self, t_x: f64) -> f64 {
        (-self.alpha * t_x).exp()
    }

    /// Trajectory starting from the stationary distribution.
    pub fn sample_trajectory<R: Rng + ?Sized>(&self, duration: f64, rng: &mut R) -> Result<ChannelTrajectory> {
        let start = if rng.random::<f64>() < self.p_idle() {
            ChannelState::Idle
        } else {
            ChannelState::Busy
        };
        self.sample_trajectory_from(start, duration, rng)
    }

    /// Trajectory with a fixed initial state. Holding times alternate between
    /// `Exp(alpha)` (idle) and `Exp(beta)` (busy) until `duration` is covered.
    pub fn sample_trajectory_from<R: Rng + ?Sized>(
        &self,
        start: ChannelState,
        duration: f64,
        rng: &mut R,
    ) -> Result<ChannelTrajectory> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::invariant("trajectory.duration_positive", format!("duration = {duration}")));
        }
        let idle = Exp::new(self.alpha).map_err(|e| Error::Numerical(e.to_string()))?;
        let busy = Exp::new(self.beta).map_err(|e| Error::Numerical(e.to_string()))?;
        let mut holding_times = Vec::new();
        let mut state = start;
        let mut elapsed = 0.0;
        while elapsed < duration {
            let mut h = match state {
                ChannelState::Idle => idle.sample(rng),
                ChannelState::Busy => busy.sample(rng),
            };
            if h <= 0.0 {
                h = f64::MIN_POSITIVE;
            }
            holding_times.push(h);
            elapsed += h;
            state = state.flip();
        }
        Ok(ChannelTrajectory {
            start_state: start,
            holding_times,
            total_duration: duration,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrajectory {
    pub start_state: ChannelState,
    pub holding_times: Vec<f64>,
    pub total_duration: f64,
}

impl ChannelTrajectory {
    /// Index of the interval covering `t`, and the time that interval ends.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(0.0..=self.total_duration).contains(&t) {
            return Err(Error::Query(format!("t = {t} outside [0, {}]", self.total_duration)));
        }
        let mut end = 0.0;
        for (i, h) in self.holding_times.iter().enumerate() {
            end += h;
            if t < end {
                return Ok((i, end));
            }
        }
        // t == total_duration == sum of holding times (up to rounding)
        let last = self.holding_times.len() - 1;
        Ok((last, end))
    }

    fn state_of(&self, interval: usize) -> ChannelState {
        if interval.is_multiple_of(2) {
            self.start_state
        } else {
            self.start_state.flip()
        }
    }

    pub fn state_at(&self, t: f64) -> Result<ChannelState> {
        let (i, _) = self.locate(t)?;
        Ok(self.state_of(i))
    }

    /// Remaining time in the idle interval covering `t`; 0 when busy.
    /// May extend past `total_duration`.
    pub fn residual_idle(&self, t: f64) -> Result<f64> {
        let (i, end) = self.locate(t)?;
        Ok(match self.state_of(i) {
            ChannelState::Idle => end - t,
            ChannelState::Busy => 0.0,
        })
    }

    /// Total idle time inside `[0, total_duration]`.
    pub fn idle_time(&self) -> f64 {
        let mut start = 0.0;
        let mut idle = 0.0;
        for (i, h) in self.holding_times.iter().enumerate() {
            let end = (start + h).min(self.total_duration);
            if self.state_of(i) == ChannelState::Idle {
                idle += (end - start).max(0.0);
            }
            start += h;
        }
        idle
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn occupancy() {
        let ch = ChannelModel::new(5.0, 20.0).unwrap();
        let (pi, pb) = ch.occupancy_probabilities();
        assert!((pi - 0.8).abs() < 1e-15);
        assert!((pb - 0.2).abs() < 1e-15);
        assert!((pi + pb - 1.0).abs() < 1e-15);

        let (pi, pb) = ChannelModel::new(3.0, 3.0).unwrap().occupancy_probabilities();
        assert_eq!(pi, 0.5);
        assert_eq!(pb, 0.5);

        let pi = ChannelModel::new(1.0, 1e9).unwrap().p_idle();
        assert!(pi > 1.0 - 1e-8);
    }

    #[test]
    fn hold_probability_values() {
        let ch = ChannelModel::new(5.0, 20.0).unwrap();
        // exp(-0.25), mpmath
        assert!((ch.hold_probability(0.05) - 0.778_800_783_071_404_9).abs() < 1e-15);
        assert_eq!(ch.hold_probability(0.0), 1.0);
        let slow = ChannelModel::new(1e-12, 1.0).unwrap();
        assert!((slow.hold_probability(0.05) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_rates() {
        for (a, b) in [(-1.0, 1.0), (0.0, 1.0), (1.0, 0.0), (f64::NAN, 1.0)] {
            assert!(matches!(ChannelModel::new(a, b), Err(Error::Invariant { .. })));
        }
    }

    #[test]
    fn long_trajectory_statistics() {
        let ch = ChannelModel::new(5.0, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let traj = ch.sample_trajectory(1e4, &mut rng).unwrap();
        let frac = traj.idle_time() / traj.total_duration;
        assert!((frac - 0.8).abs() < 0.01, "idle fraction {frac}");

        let idle: Vec<f64> = traj
            .holding_times
            .iter()
            .enumerate()
            .filter(|(i, _)| traj.state_of(*i) == ChannelState::Idle)
            .map(|(_, h)| *h)
            .collect();
        let mean = idle.iter().sum::<f64>() / idle.len() as f64;
        assert!((mean - 0.2).abs() < 0.005, "mean idle holding {mean}");
        assert!(traj.holding_times.iter().all(|&h| h > 0.0));
        assert!(traj.holding_times.iter().sum::<f64>() >= traj.total_duration);
    }

    #[test]
    fn frozen_channel_stays_idle() {
        let ch = ChannelModel::new(1e-12, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = ch.sample_trajectory_from(ChannelState::Idle, 1.0, &mut rng).unwrap();
        for i in 0..=100 {
            assert_eq!(traj.state_at(i as f64 / 100.0).unwrap(), ChannelState::Idle);
        }
    }

    #[test]
    fn queries_outside_window_fail() {
        let ch = ChannelModel::new(5.0, 20.0).unwrap();
        let traj = ch.sample_trajectory(1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(traj.state_at(-0.1), Err(Error::Query(_))));
        assert!(matches!(traj.residual_idle(1.5), Err(Error::Query(_))));
        assert!(traj.state_at(1.0).is_ok());
    }

    #[test]
    fn stationary_start_and_memoryless_hold() {
        let ch = ChannelModel::new(5.0, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 20_000;
        let t = 0.37;
        let t_x = 0.05;
        let (mut idle, mut held) = (0u32, 0u32);
        for _ in 0..trials {
            let traj = ch.sample_trajectory(1.0, &mut rng).unwrap();
            if traj.state_at(t).unwrap() == ChannelState::Idle {
                idle += 1;
                if traj.residual_idle(t).unwrap() >= t_x {
                    held += 1;
                }
            }
        }
        let p = idle as f64 / trials as f64;
        let se = (0.8 * 0.2 / trials as f64).sqrt();
        assert!((p - 0.8).abs() < 3.0 * se, "P[idle] {p}");
        let eta = ch.hold_probability(t_x);
        let q = held as f64 / idle as f64;
        let se = (eta * (1.0 - eta) / idle as f64).sqrt();
        assert!((q - eta).abs() < 3.0 * se, "P[hold] {q} vs {eta}");
    }
}

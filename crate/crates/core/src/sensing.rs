//! Energy-detection spectrum sensing: detection probabilities, transmission and
//! reception probabilities, the per-step energy objective and its derivatives
//! in the sensing time.

use std::f64::consts::PI;

use libm::erfc;

use crate::channel::ChannelModel;
use crate::error::{Error, Result};

/// Gaussian upper-tail probability `Q(z) = P[N(0,1) > z]`.
pub fn q_function(z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::Numerical("Q-function of NaN".into()));
    }
    Ok(q_tail(z))
}

#[inline]
fn q_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// False-idle threshold factor implied by equating the two detector thresholds:
/// `eps_f = eps_d / (1 + snr)` with `snr` linear.
pub fn eps_f_from_snr(eps_d: f64, snr_db: f64) -> f64 {
    eps_d / (1.0 + 10f64.powf(snr_db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingConfig {
    /// Sensing time, seconds.
    pub tau: f64,
    /// Upper bound on the sensing time, seconds.
    pub tau_max: f64,
    /// Detector sample rate (bandwidth), so `tau * bandwidth` is a sample count.
    pub bandwidth: f64,
    pub eps_d: f64,
    pub eps_f: f64,
    /// Packet transmit time, seconds.
    pub t_x: f64,
}

impl SensingConfig {
    pub fn new(tau: f64, tau_max: f64, bandwidth: f64, eps_d: f64, eps_f: f64, t_x: f64) -> Result<Self> {
        let cfg = Self {
            tau,
            tau_max,
            bandwidth,
            eps_d,
            eps_f,
            t_x,
        };
        cfg.check()?;
        Ok(cfg)
    }

    /// Defaults of the reference scenario: 2e6 samples/s, eps_d = 1.2, eps_f
    /// derived at -3 dB SNR, tau_max = 20 ms, t_x = 50 ms.
    pub fn reference(tau: f64) -> Self {
        Self {
            tau,
            tau_max: 0.02,
            bandwidth: 2e6,
            eps_d: 1.2,
            eps_f: eps_f_from_snr(1.2, -3.0),
            t_x: 0.05,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.tau_max >= 0.0 && self.tau_max.is_finite()) {
            return Err(Error::invariant("sensing.tau_max_nonnegative", format!("tau_max = {}", self.tau_max)));
        }
        if !(0.0..=self.tau_max).contains(&self.tau) {
            return Err(Error::invariant(
                "sensing.tau_in_range",
                format!("tau = {} not in [0, {}]", self.tau, self.tau_max),
            ));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invariant("sensing.bandwidth_positive", format!("W = {}", self.bandwidth)));
        }
        if !(self.eps_d > self.eps_f && self.eps_f > 0.0 && self.eps_d.is_finite()) {
            return Err(Error::invariant(
                "sensing.eps_d_gt_eps_f_gt_0",
                format!("eps_d = {}, eps_f = {}", self.eps_d, self.eps_f),
            ));
        }
        if !(self.t_x > 0.0 && self.t_x.is_finite()) {
            return Err(Error::invariant("sensing.t_x_positive", format!("t_x = {}", self.t_x)));
        }
        Ok(())
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let mut c = *self;
        c.tau = tau;
        c.check()?;
        Ok(c)
    }

    /// `(p_d, p_f)` at the configured sensing time.
    pub fn detection_probabilities(&self) -> (f64, f64) {
        self.detection_probabilities_at(self.tau)
    }

    pub fn detection_probabilities_at(&self, tau: f64) -> (f64, f64) {
        let s = (tau * self.bandwidth).sqrt();
        (q_tail((1.0 - self.eps_d) * s), q_tail((1.0 - self.eps_f) * s))
    }

    pub fn transmission_probability(&self, ch: &ChannelModel) -> f64 {
        self.transmission_probability_at(self.tau, ch)
    }

    /// `p_I p_d + p_B p_f`.
    pub fn transmission_probability_at(&self, tau: f64, ch: &ChannelModel) -> f64 {
        let (pd, pf) = self.detection_probabilities_at(tau);
        (ch.beta() * pd + ch.alpha() * pf) / (ch.alpha() + ch.beta())
    }

    pub fn reception_rate(&self, ch: &ChannelModel) -> f64 {
        self.reception_rate_at(self.tau, ch)
    }

    /// `p_I · exp(-alpha t_x) · p_d`.
    pub fn reception_rate_at(&self, tau: f64, ch: &ChannelModel) -> f64 {
        self.reception_ceiling(ch) * self.detection_probabilities_at(tau).0
    }

    /// Reception rate with a perfect detector, `p_I · exp(-alpha t_x)`.
    pub fn reception_ceiling(&self, ch: &ChannelModel) -> f64 {
        ch.p_idle() * ch.hold_probability(self.t_x)
    }

    /// `f(tau) = (eps_d-1) e^{-(1-eps_d)^2 W tau/2} - rho (1-eps_f) e^{-(1-eps_f)^2 W tau/2}`.
    pub fn shape_function(&self, tau: f64, rho: f64) -> f64 {
        let w = self.bandwidth;
        let ad = (1.0 - self.eps_d).powi(2) * w * tau / 2.0;
        let af = (1.0 - self.eps_f).powi(2) * w * tau / 2.0;
        (self.eps_d - 1.0) * (-ad).exp() - rho * (1.0 - self.eps_f) * (-af).exp()
    }

    pub fn d_gamma_d_tau(&self, tau: f64, ch: &ChannelModel) -> Result<f64> {
        if tau <= 0.0 {
            return Err(Error::SingularDerivative);
        }
        let w = self.bandwidth;
        let dpd = (self.eps_d - 1.0) * w.sqrt() / (2.0 * (2.0 * PI * tau).sqrt())
            * (-(1.0 - self.eps_d).powi(2) * w * tau / 2.0).exp();
        Ok(self.reception_ceiling(ch) * dpd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    /// Energy per second of sensing.
    pub e_s: f64,
    /// Energy per transmitted packet.
    pub e_tx: f64,
}

impl EnergyParams {
    pub fn new(e_s: f64, e_tx: f64) -> Result<Self> {
        if !(e_s >= 0.0 && e_tx >= 0.0 && e_s.is_finite() && e_tx.is_finite()) || (e_s == 0.0 && e_tx == 0.0) {
            return Err(Error::invariant(
                "energy.nonnegative_not_both_zero",
                format!("e_s = {e_s}, e_tx = {e_tx}"),
            ));
        }
        Ok(Self { e_s, e_tx })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub d_phi_d_tau: f64,
    pub d_gamma_d_tau: f64,
    pub f_value: f64,
}

/// Average energy per step `(tau e_s + p_tx e_tx) / n`.
pub fn energy_per_step(cfg: &SensingConfig, ch: &ChannelModel, ep: &EnergyParams, n: usize, tau: f64) -> f64 {
    (tau * ep.e_s + cfg.transmission_probability_at(tau, ch) * ep.e_tx) / n as f64
}

pub fn derivatives(cfg: &SensingConfig, ch: &ChannelModel, ep: &EnergyParams, n: usize, tau: f64) -> Result<Derivatives> {
    if tau <= 0.0 {
        return Err(Error::SingularDerivative);
    }
    let rho = ch.rate_ratio();
    let f_value = cfg.shape_function(tau, rho);
    let d_phi_d_tau = (ep.e_s
        + ep.e_tx * cfg.bandwidth.sqrt() / (2.0 * (1.0 + rho) * (2.0 * PI * tau).sqrt()) * f_value)
        / n as f64;
    Ok(Derivatives {
        d_phi_d_tau,
        d_gamma_d_tau: cfg.d_gamma_d_tau(tau, ch)?,
        f_value,
    })
}

/// Objective at `cfg.tau` plus its tau-derivatives. The derivatives are an
/// error at `tau = 0`; the objective is still returned.
pub fn objective_and_derivatives(
    cfg: &SensingConfig,
    ch: &ChannelModel,
    ep: &EnergyParams,
    n: usize,
) -> (f64, Result<Derivatives>) {
    (
        energy_per_step(cfg, ch, ep, n, cfg.tau),
        derivatives(cfg, ch, ep, n, cfg.tau),
    )
}

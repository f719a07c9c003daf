//! Kalman filtering with intermittent observations and the deterministic
//! Riccati-type bound on the expected prediction covariance.
//!
//! Under a periodic schedule with period `n`, measurements can only arrive at
//! sensing steps, and each arrives with probability `gamma`. The bound
//! sequence
//!
//! ```text
//! Y_k = A Y_{k-1} A' + Q - θ_k γ A Y_{k-1} C' (C Y_{k-1} C' + R)^{-1} C Y_{k-1} A'
//! ```
//!
//! dominates `E[P_k]` and settles into an `n`-periodic limit cycle whose phase
//! average is `Ȳ(γ, n)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{self, CovMatrix};

/// Convergence tolerance on successive sensing-instant iterates.
pub const BOUND_TOL: f64 = 1e-10;
pub const BOUND_MAX_ITER: usize = 100_000;
/// Bisection width for `min_gamma`.
pub const GAMMA_TOL: f64 = 1e-6;

/// How `Ȳ ≤ P̄` is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintOrder {
    /// `P̄ - Ȳ` is PSD.
    #[default]
    Loewner,
    /// `trace(Ȳ) ≤ trace(P̄)`.
    Trace,
}

impl ConstraintOrder {
    pub fn holds(self, bound: &CovMatrix, target: &CovMatrix) -> bool {
        match self {
            ConstraintOrder::Loewner => linalg::loewner_le(bound, target),
            ConstraintOrder::Trace => bound.trace() <= target.trace() * (1.0 + linalg::PSD_TOL),
        }
    }
}

/// `A P A' + Q`.
pub fn predict_cov(p: &CovMatrix, sys: &LinearSystem) -> CovMatrix {
    let a = sys.a();
    linalg::symmetrize(&(a * p * a.transpose() + sys.q()))
}

/// `A P A' + Q - A P C' (C P C' + R)^{-1} C P A'`.
pub fn correct_cov_gain_form(p: &CovMatrix, sys: &LinearSystem) -> Result<CovMatrix> {
    let (a, c) = (sys.a(), sys.c());
    let pct = p * c.transpose();
    let s = c * &pct + sys.r();
    let s_inv = s
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::Numerical("C P C' + R is not positive definite".into()))?;
    let apct = a * &pct;
    let out = a * p * a.transpose() + sys.q() - &apct * s_inv * apct.transpose();
    Ok(linalg::symmetrize(&out))
}

/// `A (P^{-1} + C' R^{-1} C)^{-1} A' + Q`; `None` when `P` is not invertible.
pub fn correct_cov_information_form(p: &CovMatrix, sys: &LinearSystem) -> Option<CovMatrix> {
    let p_inv = p.clone().cholesky()?.inverse();
    let r_inv = sys.r().clone().cholesky()?.inverse();
    let c = sys.c();
    let info = p_inv + c.transpose() * r_inv * c;
    let upsilon = info.cholesky()?.inverse();
    let a = sys.a();
    Some(linalg::symmetrize(&(a * upsilon * a.transpose() + sys.q())))
}

/// One step of the random covariance recursion. With `received` the
/// information form is used when `P` is invertible, otherwise the gain form.
pub fn correct_cov(p: &CovMatrix, sys: &LinearSystem, received: bool) -> Result<CovMatrix> {
    if !received {
        return Ok(predict_cov(p, sys));
    }
    match correct_cov_information_form(p, sys) {
        Some(out) => Ok(out),
        None => correct_cov_gain_form(p, sys),
    }
}

/// One step of the bound sequence. `gamma = 1` at a sensing step coincides
/// with a received measurement; `gamma = 0` or a non-sensing step is a pure
/// prediction.
pub fn bound_step(y: &CovMatrix, sys: &LinearSystem, sensing_step: bool, gamma: f64) -> Result<CovMatrix> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invariant("gamma_in_unit_interval", format!("gamma = {gamma}")));
    }
    if !sensing_step || gamma == 0.0 {
        return Ok(predict_cov(y, sys));
    }
    let (a, c) = (sys.a(), sys.c());
    let yct = y * c.transpose();
    let s = c * &yct + sys.r();
    let s_inv = s
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::Numerical("C Y C' + R is not positive definite".into()))?;
    let ayct = a * &yct;
    let out = a * y * a.transpose() + sys.q() - (&ayct * s_inv * ayct.transpose()) * gamma;
    Ok(linalg::symmetrize(&out))
}

/// Mean-covariance stability: `(1 - gamma) rho(A)^{2n} < 1`.
pub fn is_stable(sys: &LinearSystem, gamma: f64, n: usize) -> bool {
    stability_margin(sys.spectral_radius(), gamma, n) < 1.0
}

/// Left side of the stability condition.
pub fn stability_margin(spectral_radius: f64, gamma: f64, n: usize) -> f64 {
    (1.0 - gamma) * spectral_radius.powi(2 * n as i32)
}

/// Smallest reception rate that keeps period `n` stable (the condition is
/// strict, so this value itself is unstable when positive).
pub fn stability_threshold(sys: &LinearSystem, n: usize) -> f64 {
    (1.0 - sys.spectral_radius().powi(-2 * n as i32)).max(0.0)
}

/// The periodic limit of the bound sequence.
#[derive(Debug, Clone)]
pub struct LimitCycle {
    /// `Y` after the corrected step, then after each of the `n - 1` predictions.
    pub phases: Vec<CovMatrix>,
    pub iterations: usize,
}

impl LimitCycle {
    pub fn average(&self) -> CovMatrix {
        phase_average(&self.phases)
    }
}

fn phase_average(phases: &[CovMatrix]) -> CovMatrix {
    let mut sum = phases[0].clone();
    for p in &phases[1..] {
        sum += p;
    }
    linalg::symmetrize(&(sum / phases.len() as f64))
}

/// Applies one period (corrected step then `n - 1` predictions), returning
/// every phase.
fn period_map(z: &CovMatrix, sys: &LinearSystem, gamma: f64, n: usize) -> Result<Vec<CovMatrix>> {
    let mut phases = Vec::with_capacity(n);
    let mut y = bound_step(z, sys, true, gamma)?;
    for _ in 1..n {
        let next = predict_cov(&y, sys);
        phases.push(y);
        y = next;
    }
    phases.push(y);
    Ok(phases)
}

fn check_period(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invariant("period_positive", "n = 0"));
    }
    Ok(())
}

/// Converges the period map from `y0`. Successive sensing-instant iterates
/// must differ by less than `tol · max(1, max|Y|)` in max-abs norm.
pub fn limit_cycle_from(
    sys: &LinearSystem,
    gamma: f64,
    n: usize,
    y0: &CovMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<LimitCycle> {
    check_period(n)?;
    if !is_stable(sys, gamma, n) {
        return Err(Error::Unstable { gamma, n });
    }
    let mut z = y0.clone();
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iter {
        let phases = period_map(&z, sys, gamma, n)?;
        let next = phases.last().expect("n >= 1").clone();
        last_change = linalg::max_abs_diff(&next, &z);
        if !last_change.is_finite() {
            return Err(Error::Numerical("bound sequence overflowed".into()));
        }
        z = next;
        if last_change < tol * z.amax().max(1.0) {
            return Ok(LimitCycle { phases, iterations: it });
        }
    }
    Err(Error::NoConvergence { max_iter, last_change })
}

pub fn limit_cycle(sys: &LinearSystem, gamma: f64, n: usize, tol: f64, max_iter: usize) -> Result<LimitCycle> {
    limit_cycle_from(sys, gamma, n, sys.q(), tol, max_iter)
}

/// `Ȳ(γ, n)`, the long-run average of the bound sequence started at `Q`.
pub fn average_bound(sys: &LinearSystem, gamma: f64, n: usize, tol: f64, max_iter: usize) -> Result<CovMatrix> {
    limit_cycle(sys, gamma, n, tol, max_iter).map(|c| c.average())
}

/// `Ȳ(γ, n)` with the default tolerance and iteration cap.
pub fn average_bound_default(sys: &LinearSystem, gamma: f64, n: usize) -> Result<CovMatrix> {
    average_bound(sys, gamma, n, BOUND_TOL, BOUND_MAX_ITER)
}

/// `(1/L) Σ_{k=1}^{L} Y_k` computed by plain iteration from `y0`, with
/// sensing at every `k` divisible by `n`.
pub fn running_bound_average(
    sys: &LinearSystem,
    gamma: f64,
    n: usize,
    y0: &CovMatrix,
    horizon: usize,
) -> Result<CovMatrix> {
    check_period(n)?;
    let mut y = y0.clone();
    let mut sum = DMatrix::zeros(y.nrows(), y.ncols());
    for k in 1..=horizon {
        y = bound_step(&y, sys, k % n == 0, gamma)?;
        sum += &y;
    }
    Ok(sum / horizon as f64)
}

/// Whether `Ȳ(γ, n)` satisfies the target. Iterates from `Q` increase in the
/// Löwner order, so the check stops as soon as a partial average violates the
/// target. Close to the stability threshold the iteration contracts too slowly
/// to converge within the cap; there the remaining growth of the average is
/// extrapolated from its geometric decay and added as a multiple of `I`.
pub fn bound_within(
    sys: &LinearSystem,
    gamma: f64,
    n: usize,
    target: &CovMatrix,
    order: ConstraintOrder,
) -> bool {
    if n == 0 || !is_stable(sys, gamma, n) {
        return false;
    }
    let mut z = sys.q().clone();
    let mut avg = z.clone();
    let mut avg_changes = (f64::INFINITY, f64::INFINITY);
    for _ in 0..BOUND_MAX_ITER {
        let phases = match period_map(&z, sys, gamma, n) {
            Ok(p) => p,
            Err(_) => return false,
        };
        let next_avg = phase_average(&phases);
        if !order.holds(&next_avg, target) {
            return false;
        }
        avg_changes = (avg_changes.1, linalg::max_abs_diff(&next_avg, &avg));
        avg = next_avg;
        let next = phases.last().expect("n >= 1").clone();
        let change = linalg::max_abs_diff(&next, &z);
        if !change.is_finite() {
            return false;
        }
        z = next;
        if change < BOUND_TOL * z.amax().max(1.0) {
            return true;
        }
    }
    let (prev, last) = avg_changes;
    let rate = last / prev;
    if !(rate < 1.0) {
        log::debug!("bound_within: no convergence for gamma={gamma}, n={n}; treating as violated");
        return false;
    }
    let dim = avg.nrows() as f64;
    let tail = last * rate / (1.0 - rate) * dim;
    let extrapolated = &avg + CovMatrix::identity(avg.nrows(), avg.ncols()) * tail;
    order.holds(&extrapolated, target)
}

/// `γ̲(n)`: the smallest `γ ∈ [0, 1]` with a stable schedule and
/// `Ȳ(γ, n) ≤ target`, to bisection width `tol`. `None` when even `γ = 1`
/// misses the target.
pub fn min_gamma(
    sys: &LinearSystem,
    n: usize,
    target: &CovMatrix,
    tol: f64,
    order: ConstraintOrder,
) -> Option<f64> {
    if !bound_within(sys, 1.0, n, target, order) {
        return None;
    }
    let mut lo = stability_threshold(sys, n);
    let mut hi = 1.0;
    if lo == 0.0 && bound_within(sys, 0.0, n, target, order) {
        return Some(0.0);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if bound_within(sys, mid, n, target, order) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// Prediction `x̂_{k|k-1}`.
    pub x_hat: DVector<f64>,
    /// Prediction covariance `P_{k|k-1}`.
    pub p: CovMatrix,
    /// Filtered estimate `x̂_{k-1|k-1}` from the last step (prior mean before any step).
    pub x_filtered: DVector<f64>,
    pub k: usize,
}

impl FilterState {
    pub fn new(x_hat: DVector<f64>, p: CovMatrix) -> Self {
        Self {
            x_filtered: x_hat.clone(),
            x_hat,
            p,
            k: 1,
        }
    }
}

/// One step of the Kalman filter with a possibly missing measurement. The
/// returned state carries the next prediction and its covariance.
pub fn kf_step(fs: &FilterState, sys: &LinearSystem, measurement: Option<&DVector<f64>>) -> Result<FilterState> {
    let n = sys.state_dim();
    if fs.x_hat.len() != n || fs.p.shape() != (n, n) {
        return Err(Error::Dimension(format!("filter state does not match a {n}-state system")));
    }
    let x_filtered = match measurement {
        Some(y) => {
            if y.len() != sys.meas_dim() {
                return Err(Error::Dimension(format!(
                    "measurement has length {}, expected {}",
                    y.len(),
                    sys.meas_dim()
                )));
            }
            let c = sys.c();
            let pct = &fs.p * c.transpose();
            let s = c * &pct + sys.r();
            let s_inv = s
                .cholesky()
                .map(|ch| ch.inverse())
                .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
            let gain = pct * s_inv;
            &fs.x_hat + gain * (y - c * &fs.x_hat)
        }
        None => fs.x_hat.clone(),
    };
    Ok(FilterState {
        x_hat: sys.a() * &x_filtered,
        p: correct_cov(&fs.p, sys, measurement.is_some())?,
        x_filtered,
        k: fs.k + 1,
    })
}

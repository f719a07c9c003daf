//! Joint choice of sensing period `n` and sensing time `tau`.
//!
//! For each admissible `n` the estimation target becomes a floor on the
//! reception rate, `gamma(tau) >= gamma_floor(n)`, leaving a one-dimensional
//! problem in `tau` whose optimum lies in a small candidate set determined by
//! the detector thresholds. The outer problem enumerates `n`.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::ChannelModel;
use crate::dynamics::LinearSystem;
use crate::error::{Error, Result};
use crate::estimation::{self, ConstraintOrder, GAMMA_TOL};
use crate::linalg::{self, CovMatrix};
use crate::sensing::{self, EnergyParams, SensingConfig};

/// Absolute bisection width on `tau`, seconds.
pub const TAU_TOL: f64 = 1e-9;
/// Bracket width relative to `tau`, so roots far below `TAU_TOL` still resolve.
pub const TAU_REL_TOL: f64 = 1e-9;
const BISECT_MAX_ITER: usize = 200;
/// Log-spaced points used to bracket stationary points of the objective.
pub const STATIONARY_SCAN_POINTS: usize = 64;
/// Relative tolerance under which two periods count as tied on energy.
pub const TIE_REL_TOL: f64 = 1e-12;
/// Hard cap on the period scan when the plant is open-loop stable.
pub const MAX_PERIOD: usize = 1000;
/// Slack allowed on `gamma(tau) >= gamma_floor` for a reported optimum.
pub const GAMMA_SLACK: f64 = 1e-9;
/// Smallest log-spaced grid point relative to `tau_max`.
pub const GRID_LOG_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub sys: LinearSystem,
    pub ch: ChannelModel,
    /// Sensing parameters; `tau` itself is the decision variable and ignored here.
    pub sense: SensingConfig,
    pub energy: EnergyParams,
    pub p_bar: CovMatrix,
    pub order: ConstraintOrder,
}

impl ProblemSpec {
    pub fn new(
        sys: LinearSystem,
        ch: ChannelModel,
        sense: SensingConfig,
        energy: EnergyParams,
        p_bar: CovMatrix,
        order: ConstraintOrder,
    ) -> Result<Self> {
        if let Some(fail) = sys.validate().first_failure() {
            return Err(Error::invariant(fail.name, fail.evidence.clone()));
        }
        sense.check()?;
        let n = sys.state_dim();
        if p_bar.shape() != (n, n) {
            return Err(Error::Dimension(format!("P_bar must be {n}x{n}")));
        }
        if !linalg::is_symmetric(&p_bar, 1e-12) || !linalg::is_psd(&p_bar) {
            return Err(Error::invariant("p_bar_symmetric_psd", format!("{p_bar}")));
        }
        Ok(Self {
            sys,
            ch,
            sense,
            energy,
            p_bar,
            order,
        })
    }

    /// The reference scenario with the target `Ȳ(0.7, 6)`.
    pub fn reference() -> Self {
        let sys = LinearSystem::reference_plant();
        let p_bar = estimation::average_bound_default(&sys, 0.7, 6).expect("reference target converges");
        Self {
            sys,
            ch: ChannelModel::new(5.0, 20.0).expect("valid rates"),
            sense: SensingConfig::reference(0.0),
            energy: EnergyParams::new(100.0, 100.0).expect("valid energies"),
            p_bar,
            order: ConstraintOrder::Loewner,
        }
    }

    pub fn gamma_at(&self, tau: f64) -> f64 {
        self.sense.reception_rate_at(tau, &self.ch)
    }

    pub fn phi_at(&self, n: usize, tau: f64) -> f64 {
        sensing::energy_per_step(&self.sense, &self.ch, &self.energy, n, tau)
    }

    /// `p_I · exp(-alpha t_x)`, the reception rate of a perfect detector.
    pub fn gamma_max(&self) -> f64 {
        self.sense.reception_ceiling(&self.ch)
    }

    pub fn case(&self) -> SensingCase {
        classify_case(self.sense.eps_d, self.sense.eps_f, self.ch.rate_ratio())
    }

    pub fn min_gamma(&self, n: usize) -> Option<f64> {
        estimation::min_gamma(&self.sys, n, &self.p_bar, GAMMA_TOL, self.order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NBounds {
    /// Stability bound on `n`; `None` when `rho(A) <= 1`.
    pub n_bar_1: Option<usize>,
    /// Largest `n` meeting the target with a perfect detector; 0 when none does.
    pub n_bar_2: usize,
    pub n_bar: usize,
}

/// Upper bounds on the sensing period.
pub fn n_bounds(spec: &ProblemSpec) -> NBounds {
    let (alpha, beta) = (spec.ch.alpha(), spec.ch.beta());
    let rho_a = spec.sys.spectral_radius();
    let n_bar_1 = (rho_a > 1.0).then(|| {
        let x = ((alpha + beta) / alpha).ln() / (2.0 * rho_a.ln());
        (x.ceil() as i64 - 1).max(0) as usize
    });

    let gamma_max = spec.gamma_max();
    let fits = |n: usize| estimation::bound_within(&spec.sys, gamma_max, n, &spec.p_bar, spec.order);
    let mut n_bar_2 = 0;
    let mut m = 1;
    // Ȳ grows with n, so the first failure normally ends the scan; one extra
    // probe guards against a numerically non-monotone configuration.
    while m <= MAX_PERIOD {
        if fits(m) {
            n_bar_2 = m;
            m += 1;
        } else if m < MAX_PERIOD && fits(m + 1) {
            log::warn!("average bound not monotone in n at n={m}; continuing scan");
            n_bar_2 = m + 1;
            m += 2;
        } else {
            break;
        }
    }
    let n_bar = match n_bar_1 {
        Some(n1) => n1.min(n_bar_2),
        None => n_bar_2,
    };
    NBounds {
        n_bar_1,
        n_bar_2,
        n_bar,
    }
}

/// Shape of `gamma(tau)` and the objective, from the detector thresholds and
/// `rho = alpha / beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SensingCase {
    /// Both `gamma` and the objective increase in `tau`.
    Case1,
    /// `gamma` increases; the objective may rise, dip and rise again.
    Case2,
    /// `gamma` increases; the objective is convex.
    Case3,
    /// `gamma` decreases; the objective is convex.
    Case4,
}

impl SensingCase {
    pub fn id(self) -> u8 {
        match self {
            SensingCase::Case1 => 1,
            SensingCase::Case2 => 2,
            SensingCase::Case3 => 3,
            SensingCase::Case4 => 4,
        }
    }
}

pub fn classify_case(eps_d: f64, eps_f: f64, rho: f64) -> SensingCase {
    let ratio = (eps_d - 1.0) / (1.0 - eps_f);
    if (eps_d >= 1.0 && eps_f >= 1.0) || (eps_f < 1.0 && rho <= ratio && ratio <= 1.0) {
        SensingCase::Case1
    } else if eps_f < 1.0 && ratio > 1.0 {
        SensingCase::Case2
    } else if eps_d >= 1.0 && eps_d - 1.0 < rho * (1.0 - eps_f) {
        SensingCase::Case3
    } else {
        SensingCase::Case4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Zero,
    Stationary,
    GammaBoundary,
    TauMax,
}

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub kind: CandidateKind,
    pub tau: f64,
    pub phi: f64,
    pub gamma: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubproblemRecord {
    pub n: usize,
    pub feasible: bool,
    /// `None` when no reception rate in `[0, 1]` meets the target.
    pub gamma_floor: Option<f64>,
    pub tau: Option<f64>,
    pub phi: Option<f64>,
    pub candidates: Vec<Candidate>,
    /// Root-finding problems that caused a candidate to be skipped.
    pub diagnostics: Vec<String>,
}

impl SubproblemRecord {
    fn infeasible(n: usize, gamma_floor: Option<f64>, candidates: Vec<Candidate>, diagnostics: Vec<String>) -> Self {
        Self {
            n,
            feasible: false,
            gamma_floor,
            tau: None,
            phi: None,
            candidates,
            diagnostics,
        }
    }
}

/// Bisection for the boundary of `{tau : g(tau) true}` on `[lo, hi]` where
/// `g(lo) != g(hi)`; returns the endpoint of the final bracket on the `true` side.
fn bisect_predicate(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> bool) -> f64 {
    let g_lo = g(lo);
    for _ in 0..BISECT_MAX_ITER {
        if hi - lo <= TAU_TOL.min(TAU_REL_TOL * hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) == g_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if g_lo {
        lo
    } else {
        hi
    }
}

/// Feasible interval of `tau` under `gamma(tau) >= floor`, and the point where
/// the constraint binds (an interval endpoint when it is slack).
fn feasible_interval(spec: &ProblemSpec, floor: f64) -> Option<((f64, f64), f64)> {
    let tau_max = spec.sense.tau_max;
    let ok = |t: f64| spec.gamma_at(t) >= floor;
    let (ok0, ok1) = (ok(0.0), ok(tau_max));
    let eps_d = spec.sense.eps_d;
    match (ok0, ok1) {
        (false, false) => None,
        (true, true) => {
            let boundary = if eps_d < 1.0 { tau_max } else { 0.0 };
            Some(((0.0, tau_max), boundary))
        }
        (false, true) => {
            let r = bisect_predicate(0.0, tau_max, ok);
            Some(((r, tau_max), r))
        }
        (true, false) => {
            let r = bisect_predicate(0.0, tau_max, ok);
            Some(((0.0, r), r))
        }
    }
}

/// Zeros of the objective's tau-derivative in `(0, tau_max]`, bracketed on a
/// log-spaced grid.
fn stationary_points(spec: &ProblemSpec, n: usize, diagnostics: &mut Vec<String>) -> Vec<f64> {
    let tau_max = spec.sense.tau_max;
    if tau_max <= 0.0 {
        return Vec::new();
    }
    let lo = tau_max * 1e-9;
    let step = (tau_max / lo).ln() / (STATIONARY_SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..STATIONARY_SCAN_POINTS)
        .map(|i| if i + 1 == STATIONARY_SCAN_POINTS { tau_max } else { lo * (step * i as f64).exp() })
        .collect();
    let deriv = |t: f64| sensing::derivatives(&spec.sense, &spec.ch, &spec.energy, n, t).map(|d| d.d_phi_d_tau);
    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &t in &grid {
        let d = match deriv(t) {
            Ok(d) if d.is_finite() => d,
            _ => {
                diagnostics.push(format!("derivative not finite at tau={t:e}"));
                prev = None;
                continue;
            }
        };
        if let Some((t0, d0)) = prev {
            if d == 0.0 {
                roots.push(t);
            } else if d0.signum() != d.signum() && d0 != 0.0 {
                roots.push(bisect_predicate(t0, t, |x| deriv(x).is_ok_and(|v| v < 0.0)));
            }
        }
        prev = Some((t, d));
    }
    roots
}

/// Best sensing time for a fixed period `n` given the reception-rate floor.
pub fn solve_subproblem(spec: &ProblemSpec, n: usize, gamma_floor: f64) -> SubproblemRecord {
    let mut diagnostics = Vec::new();
    let Some(((lo, hi), tau_gamma)) = feasible_interval(spec, gamma_floor) else {
        diagnostics.push(format!(
            "gamma over [0, tau_max] never reaches the floor {gamma_floor:.6}"
        ));
        return SubproblemRecord::infeasible(n, Some(gamma_floor), Vec::new(), diagnostics);
    };
    let tau_max = spec.sense.tau_max;

    let mut points: Vec<(CandidateKind, f64)> = Vec::new();
    match spec.case() {
        SensingCase::Case1 => points.push((CandidateKind::GammaBoundary, tau_gamma.min(tau_max))),
        case => {
            if case == SensingCase::Case2 {
                points.push((CandidateKind::Zero, 0.0));
            }
            points.extend(
                stationary_points(spec, n, &mut diagnostics)
                    .into_iter()
                    .map(|t| (CandidateKind::Stationary, t)),
            );
            points.push((CandidateKind::GammaBoundary, tau_gamma));
            points.push((CandidateKind::TauMax, tau_max));
        }
    }

    let candidates: Vec<Candidate> = points
        .into_iter()
        .map(|(kind, tau)| {
            let gamma = spec.gamma_at(tau);
            Candidate {
                kind,
                tau,
                phi: spec.phi_at(n, tau),
                gamma,
                feasible: tau >= lo && tau <= hi && gamma >= gamma_floor,
            }
        })
        .collect();

    let best = candidates
        .iter()
        .filter(|c| c.feasible)
        .min_by(|a, b| a.phi.total_cmp(&b.phi).then(a.tau.total_cmp(&b.tau)));
    match best {
        Some(c) => SubproblemRecord {
            n,
            feasible: true,
            gamma_floor: Some(gamma_floor),
            tau: Some(c.tau),
            phi: Some(c.phi),
            candidates: candidates.clone(),
            diagnostics,
        },
        None => SubproblemRecord::infeasible(n, Some(gamma_floor), candidates, diagnostics),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Optimum {
    pub n: usize,
    pub tau: f64,
    pub phi: f64,
    pub gamma: f64,
    pub gamma_floor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub feasible: bool,
    pub optimum: Option<Optimum>,
    pub case: SensingCase,
    pub bounds: NBounds,
    pub per_n: Vec<SubproblemRecord>,
}

impl Solution {
    pub fn n_star(&self) -> Option<usize> {
        self.optimum.map(|o| o.n)
    }
    pub fn tau_star(&self) -> Option<f64> {
        self.optimum.map(|o| o.tau)
    }
    pub fn phi_star(&self) -> Option<f64> {
        self.optimum.map(|o| o.phi)
    }
}

fn pick_best(spec: &ProblemSpec, case: SensingCase, bounds: NBounds, per_n: Vec<SubproblemRecord>) -> Solution {
    let mut best: Option<&SubproblemRecord> = None;
    for rec in per_n.iter().filter(|r| r.feasible) {
        let phi = rec.phi.expect("feasible record has phi");
        best = match best {
            None => Some(rec),
            Some(b) => {
                let bphi = b.phi.expect("feasible record has phi");
                let tied = (phi - bphi).abs() <= TIE_REL_TOL * bphi.abs().max(phi.abs());
                if phi < bphi && !tied || tied && rec.n > b.n {
                    Some(rec)
                } else {
                    Some(b)
                }
            }
        };
    }
    let optimum = best.map(|r| {
        let tau = r.tau.expect("feasible");
        Optimum {
            n: r.n,
            tau,
            phi: r.phi.expect("feasible"),
            gamma: spec.gamma_at(tau),
            gamma_floor: r.gamma_floor.expect("feasible"),
        }
    });
    Solution {
        feasible: optimum.is_some(),
        optimum,
        case,
        bounds,
        per_n,
    }
}

/// `gamma_floor(n)` for `n = 1..=n_bar`, computed in parallel.
fn gamma_floors(spec: &ProblemSpec, n_bar: usize) -> Vec<(usize, Option<f64>)> {
    (1..=n_bar)
        .into_par_iter()
        .map(|n| (n, spec.min_gamma(n)))
        .collect()
}

/// Enumerates `n = 1..=n_bar` and returns the minimum-energy schedule.
pub fn solve(spec: &ProblemSpec) -> Solution {
    let bounds = n_bounds(spec);
    let case = spec.case();
    let per_n: Vec<SubproblemRecord> = gamma_floors(spec, bounds.n_bar)
        .into_par_iter()
        .map(|(n, floor)| match floor {
            Some(g) => solve_subproblem(spec, n, g),
            None => SubproblemRecord::infeasible(n, None, Vec::new(), vec!["target unreachable even at gamma = 1".into()]),
        })
        .collect();
    pick_best(spec, case, bounds, per_n)
}

/// Search grid over `[0, tau_max]`: `size / 2` uniform points (including both
/// ends) merged with log-spaced points from `tau_max · 1e-9`, so the grid
/// resolves the steep small-`tau` region too. A single point means `tau = 0`.
pub fn tau_grid(tau_max: f64, size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => vec![0.0, tau_max],
        _ => {
            let uniform = (size / 2).max(2);
            let log = size - uniform;
            let lo = (tau_max * GRID_LOG_FLOOR).ln();
            let hi = tau_max.ln();
            let mut g: Vec<f64> = (0..uniform)
                .map(|j| tau_max * j as f64 / (uniform - 1) as f64)
                .chain((0..log).map(|j| (lo + (hi - lo) * j as f64 / log.max(2).saturating_sub(1) as f64).exp()))
                .filter(|&t| t <= tau_max)
                .collect();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
    }
}

/// Exhaustive search over `n = 1..=n_bar` and a uniform `tau` grid.
pub fn brute_force_solve(spec: &ProblemSpec, tau_grid_size: usize) -> Solution {
    brute_force_solve_on(spec, &tau_grid(spec.sense.tau_max, tau_grid_size))
}

/// Exhaustive search on an explicit `tau` grid.
pub fn brute_force_solve_on(spec: &ProblemSpec, grid: &[f64]) -> Solution {
    let bounds = n_bounds(spec);
    let case = spec.case();
    let gammas: Vec<f64> = grid.iter().map(|&t| spec.gamma_at(t)).collect();
    let per_n: Vec<SubproblemRecord> = gamma_floors(spec, bounds.n_bar)
        .into_par_iter()
        .map(|(n, floor)| {
            let Some(g) = floor else {
                return SubproblemRecord::infeasible(n, None, Vec::new(), Vec::new());
            };
            let best = grid
                .iter()
                .zip(&gammas)
                .filter(|(_, &gam)| gam >= g)
                .map(|(&t, _)| (t, spec.phi_at(n, t)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((tau, phi)) => SubproblemRecord {
                    n,
                    feasible: true,
                    gamma_floor: Some(g),
                    tau: Some(tau),
                    phi: Some(phi),
                    candidates: Vec::new(),
                    diagnostics: Vec::new(),
                },
                None => SubproblemRecord::infeasible(n, Some(g), Vec::new(), Vec::new()),
            }
        })
        .collect();
    pick_best(spec, case, bounds, per_n)
}

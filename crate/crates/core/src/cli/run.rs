use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::estimation;
use crate::optimizer::{self, ProblemSpec, Solution};
use crate::sensing::EnergyParams;
use crate::simkit;

use super::config::{ExperimentConfig, Sweep, SweepVariable};
use super::output::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Sweep,
    Validate,
}

pub const SOLUTION_COLUMNS: [&str; 6] = ["p_I", "n_star", "tau_star_s", "phi_star", "gamma_star", "feasible"];
pub const VALIDATION_COLUMNS: [&str; 5] = ["quantity", "analytic", "empirical", "std_error", "pass"];

#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub table: Table,
    /// Per-period subproblem diagnostics for every solve that was run.
    pub per_n: Table,
    /// Feasible and converged.
    pub success: bool,
}

fn solution_row(key: f64, sol: &Solution) -> Vec<Cell> {
    let opt = sol.optimum;
    vec![
        key.into(),
        opt.map(|o| o.n).into(),
        opt.map(|o| o.tau).into(),
        opt.map(|o| o.phi).into(),
        opt.map(|o| o.gamma).into(),
        sol.feasible.into(),
    ]
}

fn per_n_table(key_name: &str) -> Table {
    Table::new(&[key_name, "n", "feasible", "gamma_floor", "tau_n_s", "phi_n", "candidates"])
}

fn push_per_n(table: &mut Table, key: f64, sol: &Solution) {
    for rec in &sol.per_n {
        let candidates = rec
            .candidates
            .iter()
            .map(|c| {
                let kind = serde_json::to_value(c.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
                format!("{kind}:{:e}:{}", super::output::round_sig(c.tau), if c.feasible { "ok" } else { "infeasible" })
            })
            .collect::<Vec<_>>()
            .join(";");
        table.push(vec![
            key.into(),
            rec.n.into(),
            rec.feasible.into(),
            rec.gamma_floor.into(),
            rec.tau.into(),
            rec.phi.into(),
            Cell::Text(candidates),
        ]);
    }
}

/// Spec with the channel's idle probability moved to `p_idle` by changing `beta`.
pub fn with_idle_probability(spec: &ProblemSpec, p_idle: f64) -> Result<ProblemSpec> {
    let alpha = spec.ch.alpha();
    let mut out = spec.clone();
    out.ch = ChannelModel::new(alpha, alpha * p_idle / (1.0 - p_idle))?;
    Ok(out)
}

/// Spec with `e_tx = ratio · e_s`.
pub fn with_energy_ratio(spec: &ProblemSpec, ratio: f64) -> Result<ProblemSpec> {
    if spec.energy.e_s == 0.0 {
        return Err(Error::Config("energy_ratio sweep needs e_s > 0".into()));
    }
    let mut out = spec.clone();
    out.energy = EnergyParams::new(spec.energy.e_s, ratio * spec.energy.e_s)?;
    Ok(out)
}

pub fn run_sweep(spec: &ProblemSpec, sweep: &Sweep) -> Result<Vec<(f64, Solution)>> {
    sweep
        .values
        .iter()
        .map(|&v| {
            let s = match sweep.variable {
                SweepVariable::IdleProbability => with_idle_probability(spec, v)?,
                SweepVariable::EnergyRatio => with_energy_ratio(spec, v)?,
            };
            Ok((v, optimizer::solve(&s)))
        })
        .collect()
}

pub fn run_command(cfg: &ExperimentConfig, command: Command) -> Result<CommandOutput> {
    let spec = &cfg.spec;
    match command {
        Command::Solve => {
            let sol = optimizer::solve(spec);
            let key = spec.ch.p_idle();
            let mut table = Table::new(&SOLUTION_COLUMNS);
            table.push(solution_row(key, &sol));
            let mut per_n = per_n_table("p_I");
            push_per_n(&mut per_n, key, &sol);
            Ok(CommandOutput {
                table,
                per_n,
                success: sol.feasible,
            })
        }
        Command::Sweep => {
            let sweep = cfg.sweep.clone().unwrap_or_else(Sweep::default_idle_probability);
            let key_name = match sweep.variable {
                SweepVariable::IdleProbability => "p_I",
                SweepVariable::EnergyRatio => "energy_ratio",
            };
            let mut columns = SOLUTION_COLUMNS;
            columns[0] = key_name;
            let mut table = Table::new(&columns);
            let mut per_n = per_n_table(key_name);
            let mut success = true;
            for (v, sol) in run_sweep(spec, &sweep)? {
                table.push(solution_row(v, &sol));
                push_per_n(&mut per_n, v, &sol);
                success &= sol.feasible;
            }
            Ok(CommandOutput { table, per_n, success })
        }
        Command::Validate => {
            for w in simkit::assumption_warnings(&spec.ch, 0.0, cfg.sample_period) {
                log::warn!("{w}");
            }
            let sol = optimizer::solve(spec);
            let mut per_n = per_n_table("p_I");
            push_per_n(&mut per_n, spec.ch.p_idle(), &sol);
            let mut table = Table::new(&VALIDATION_COLUMNS);
            let Some(opt) = sol.optimum else {
                return Ok(CommandOutput {
                    table,
                    per_n,
                    success: false,
                });
            };
            for w in simkit::assumption_warnings(&spec.ch, opt.tau, cfg.sample_period) {
                log::warn!("{w}");
            }
            let mc = cfg.monte_carlo;
            let summary = simkit::monte_carlo(spec, opt.n, opt.tau, mc.trials, mc.horizon, mc.master_seed)?;
            let bound = estimation::average_bound_default(&spec.sys, opt.gamma, opt.n)?;

            let within = |a: f64, e: f64, se: f64| (a - e).abs() <= 3.0 * se.max(1e-12);
            let below = |a: f64, e: f64, se: f64| e <= a + 3.0 * se;
            let rows: [(&str, f64, simkit::Stat, bool); 4] = [
                (
                    "reception_rate",
                    opt.gamma,
                    simkit::Stat {
                        mean: summary.empirical_gamma,
                        std_error: summary.empirical_gamma_se,
                    },
                    within(opt.gamma, summary.empirical_gamma, summary.empirical_gamma_se),
                ),
                (
                    "energy_per_step",
                    opt.phi,
                    summary.energy_per_step,
                    within(opt.phi, summary.energy_per_step.mean, summary.energy_per_step.std_error),
                ),
                (
                    "avg_cov_trace_vs_bound",
                    bound.trace(),
                    summary.avg_cov_trace,
                    below(bound.trace(), summary.avg_cov_trace.mean, summary.avg_cov_trace.std_error),
                ),
                (
                    "avg_cov_trace_vs_target",
                    spec.p_bar.trace(),
                    summary.avg_cov_trace,
                    below(spec.p_bar.trace(), summary.avg_cov_trace.mean, summary.avg_cov_trace.std_error),
                ),
            ];
            for (name, analytic, stat, pass) in rows {
                table.push(vec![name.into(), analytic.into(), stat.mean.into(), stat.std_error.into(), pass.into()]);
            }
            Ok(CommandOutput {
                table,
                per_n,
                success: summary.diverged == 0,
            })
        }
    }
}

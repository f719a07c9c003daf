mod common;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use specsense::estimation;
use specsense::linalg;
use specsense::optimizer::{self, ProblemSpec, Solution};
use specsense::sensing::EnergyParams;

use common::{random_feasible_spec, rel_gap};

fn assert_constraints_hold(spec: &ProblemSpec, sol: &Solution) {
    let opt = sol.optimum.expect("feasible");
    assert!(opt.n <= sol.bounds.n_bar);
    assert!(opt.tau >= 0.0 && opt.tau <= spec.sense.tau_max);
    assert!(opt.gamma >= opt.gamma_floor - 1e-9, "gamma {} floor {}", opt.gamma, opt.gamma_floor);
    assert!(estimation::is_stable(&spec.sys, opt.gamma, opt.n));
    let bound = estimation::average_bound_default(&spec.sys, opt.gamma, opt.n).unwrap();
    assert!(
        linalg::min_eigenvalue(&(&spec.p_bar - &bound)) >= -1e-9 * spec.p_bar.trace(),
        "bound {bound} exceeds target {}",
        spec.p_bar
    );
    let best = sol.per_n.iter().filter_map(|r| r.phi).fold(f64::INFINITY, f64::min);
    assert_eq!(opt.phi, best);
}

#[test]
fn subproblems_match_grid() {
    let spec = ProblemSpec::reference();
    let grid = optimizer::brute_force_solve(&spec, 100_000);
    for brute in &grid.per_n {
        let floor = spec.min_gamma(brute.n).unwrap();
        let rec = optimizer::solve_subproblem(&spec, brute.n, floor);
        let (phi, phi_grid) = (rec.phi.unwrap(), brute.phi.unwrap());
        assert!(phi <= phi_grid * (1.0 + 1e-12));
        assert!(rel_gap(phi, phi_grid) <= 1e-4, "n={}: solve {phi} grid {phi_grid}", brute.n);
    }
}

#[test]
fn period_six_is_out_of_reach() {
    // The target is the bound at gamma = 0.7, above the channel's ceiling.
    let spec = ProblemSpec::reference();
    let floor = spec.min_gamma(6).unwrap();
    assert!(floor > spec.gamma_max());
    assert!(!optimizer::solve_subproblem(&spec, 6, floor).feasible);
    assert!(optimizer::tau_grid(spec.sense.tau_max, 100_000).iter().all(|&t| spec.gamma_at(t) < floor));
}

#[test]
fn reference_solution_satisfies_constraints() {
    let spec = ProblemSpec::reference();
    let sol = optimizer::solve(&spec);
    assert_constraints_hold(&spec, &sol);
    assert_eq!(sol.n_star(), Some(4));
}

#[test]
fn random_solutions_satisfy_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let spec = random_feasible_spec(&mut rng);
        let sol = optimizer::solve(&spec);
        assert!(sol.feasible);
        assert_constraints_hold(&spec, &sol);
    }
}

#[test]
fn loosening_the_target_never_costs_energy() {
    let base = ProblemSpec::reference();
    let mut last = f64::INFINITY;
    for c in [0.0, 1.0, 5.0, 20.0, 100.0, 500.0] {
        let mut spec = base.clone();
        spec.p_bar = &base.p_bar + DMatrix::identity(2, 2) * c;
        let phi = optimizer::solve(&spec).phi_star().unwrap();
        assert!(phi <= last * (1.0 + 1e-12), "c={c}: {phi} > {last}");
        last = phi;
    }
}

#[test]
fn free_sensing_never_shortens_tau() {
    let spec = ProblemSpec::reference();
    let mut free = spec.clone();
    free.energy = EnergyParams::new(0.0, spec.energy.e_tx).unwrap();
    let paid = optimizer::solve(&spec);
    let unpaid = optimizer::solve(&free);
    for (a, b) in paid.per_n.iter().zip(&unpaid.per_n) {
        assert_eq!(a.n, b.n);
        assert_eq!(a.feasible, b.feasible);
        if let (Some(t_paid), Some(t_free)) = (a.tau, b.tau) {
            assert!(t_free >= t_paid - optimizer::TAU_TOL, "n={}: {t_free} < {t_paid}", a.n);
        }
    }
    let grid = optimizer::brute_force_solve(&free, 100_000);
    assert!(rel_gap(grid.phi_star().unwrap(), unpaid.phi_star().unwrap()) <= 1e-3);
}

#[test]
fn single_point_grid_reproduces_known_optimum() {
    let spec = ProblemSpec::reference();
    let sol = optimizer::solve(&spec);
    let opt = sol.optimum.unwrap();
    let grid = optimizer::brute_force_solve_on(&spec, &[opt.tau]);
    let rec = grid.per_n.iter().find(|r| r.n == opt.n).unwrap();
    assert_eq!(rec.tau, Some(opt.tau));
    assert_eq!(rec.phi, Some(opt.phi));
}

#[test]
fn infeasible_targets_agree() {
    let mut spec = ProblemSpec::reference();
    spec.p_bar = spec.sys.q() * 0.5;
    let sol = optimizer::solve(&spec);
    let grid = optimizer::brute_force_solve(&spec, 1000);
    assert!(!sol.feasible && !grid.feasible);
    assert!(sol.optimum.is_none() && grid.optimum.is_none());
}

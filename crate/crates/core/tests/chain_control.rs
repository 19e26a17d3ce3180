use chain_lqg::chain::{scalar_chain, ChainSystem};
use chain_lqg::riccati::SolverOptions;
use chain_lqg::simulate::{empirical_average_cost, Plant};
use chain_lqg::synthesis::{
    static_closed_loop_cost, synth_centralized, synth_suboptimal_local, synth_three_vehicle,
    synth_two_vehicle, synth_two_vehicle_finite, LocalCosts,
};
use nalgebra::DMatrix;

fn three_chain() -> ChainSystem {
    let a = DMatrix::from_row_slice(3, 3, &[1.05, 0.0, 0.0, 0.4, 0.9, 0.0, 0.0, 0.6, 1.1]);
    let i = DMatrix::identity(3, 3);
    let q = DMatrix::from_row_slice(3, 3, &[2.0, -0.5, 0.0, -0.5, 1.5, -0.4, 0.0, -0.4, 1.0]);
    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.0, 0.8]));
    scalar_chain(a, i.clone(), q, i * 0.5, w).unwrap()
}

#[test]
fn information_ordering_of_costs() {
    let sys = three_chain();
    let opts = SolverOptions::default();
    let (_, dec) = synth_three_vehicle(&sys, &opts, false).unwrap();
    let (cen, cen_report) = synth_centralized(&sys, &opts).unwrap();
    let local = synth_suboptimal_local(&sys, &LocalCosts::from_blocks(&sys).unwrap(), &opts).unwrap();

    // The stationary cost of the static centralized gain equals its trace formula.
    let cen_cost = static_closed_loop_cost(&sys, &cen).unwrap();
    assert!((cen_cost - cen_report.analytical_cost).abs() < 1e-9 * cen_cost);

    let local_cost = static_closed_loop_cost(&sys, &local).unwrap();
    assert!(cen_cost <= dec.analytical_cost + 1e-12);
    assert!(dec.analytical_cost < local_cost);
}

#[test]
fn decentralized_cost_matches_monte_carlo() {
    let sys = three_chain();
    let (ctrl, report) = synth_three_vehicle(&sys, &SolverOptions::default(), false).unwrap();
    let plant = Plant::from_chain(sys, 1.0);
    let (mean, se) = empirical_average_cost(&plant, &ctrl, 5_000, 40, 9).unwrap();
    assert!(
        (mean - report.analytical_cost).abs() < 3.0 * se,
        "mean {mean} se {se} analytical {}",
        report.analytical_cost
    );
}

#[test]
fn finite_horizon_cost_per_step_approaches_stationary() {
    let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.7, 1.2]);
    let i = DMatrix::identity(2, 2);
    let sys = scalar_chain(a, i.clone(), i.clone(), i.clone(), i).unwrap();
    let (_, stationary) = synth_two_vehicle(&sys, &SolverOptions::default()).unwrap();
    let per_step = |n: usize| synth_two_vehicle_finite(&sys, n).unwrap().analytical_cost() / n as f64;
    let (short, long) = (per_step(20), per_step(2000));
    assert!((long - stationary.analytical_cost).abs() < (short - stationary.analytical_cost).abs());
    assert!((long - stationary.analytical_cost).abs() < 1e-2 * stationary.analytical_cost);
}

//! Analytic gradients against central finite differences in 64-bit.

#[path = "support/gradient_oracle.rs"]
mod gradient_oracle;

use gradient_oracle::*;
use pat_core::Execution;

#[test]
fn every_parameter_matches_finite_differences() {
    for seed in 1000..1005 {
        if let Outcome::Smooth { worst } = check(seed) {
            println!("seed {seed}: max relative error {worst:e}");
        }
    }
    let s = run_trials(20, 1000).unwrap();
    println!(
        "{} smooth trials, {} skipped at kinks, worst {:e}",
        s.accepted, s.kinks, s.worst
    );
    assert!(s.worst < TOLERANCE, "max relative error {:e}", s.worst);
}

#[test]
fn loss_matches_forward_cross_entropy() {
    let (net, input, labels) = random_instance(7);
    let r = net
        .loss_and_grads(&input, &labels, Execution::Sequential)
        .unwrap();
    assert!((r.loss - loss(&net, &input, &labels)).abs() < 1e-12);
}

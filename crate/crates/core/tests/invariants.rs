use proptest::prelude::*;

use pmm_core::algorithm::checks::cumulative_violations;
use pmm_core::algorithm::run_pmmsopt_observed;
use pmm_core::bounds::check_drift;
use pmm_core::{run_pmmsopt, AlgoConfig, InstanceSpec, StochasticProgram};

fn toy() -> pmm_core::Instance {
    InstanceSpec::ScalarToy { noise_amp: 0.5 }.build().unwrap()
}

#[test]
fn identical_seeds_identical_traces() {
    let inst = InstanceSpec::AffineQp {
        n: 3,
        p: 2,
        seed: 2,
        noise_amp: 0.2,
    }
    .build()
    .unwrap();
    let cfg = AlgoConfig::theory_schedule(300).with_seed(1, 9);
    let a = run_pmmsopt(&inst, &cfg).unwrap();
    let b = run_pmmsopt(&inst, &cfg).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_state, b.final_state);
    let c = run_pmmsopt(&inst, &cfg.clone().with_seed(1, 10)).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn drift_diagnostic_is_clean_on_toy() {
    let inst = toy();
    let trace = run_pmmsopt(&inst, &AlgoConfig::theory_schedule(2500).with_seed(4, 0)).unwrap();
    let rep = check_drift(&trace, trace.config.sigma, inst.constants());
    assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    assert_eq!(rep.window, 50);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multipliers_stay_nonnegative_and_cumulative_bound_holds(
        seed in 0u64..1000,
        horizon in 5usize..400,
        sigma in 1e-3f64..0.5,
        alpha in 1.0f64..50.0,
    ) {
        let inst = InstanceSpec::AffineQp { n: 2, p: 2, seed: 3, noise_amp: 0.3 }.build().unwrap();
        let cfg = AlgoConfig::fixed(horizon, sigma, alpha).with_seed(seed, 0);
        let mut ok = true;
        let trace = run_pmmsopt_observed(&inst, &cfg, |v| {
            ok &= v.lambda_next.iter().all(|l| *l >= 0.0);
            ok &= inst.domain().contains(v.x_next, 1e-12);
        }).unwrap();
        prop_assert!(ok);
        prop_assert_eq!(trace.records.len(), horizon);
        prop_assert!(cumulative_violations(&trace, inst.constants().kappa_g).is_empty());
    }
}

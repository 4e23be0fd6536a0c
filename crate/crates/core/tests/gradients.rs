mod common;

use common::{Check, Fixture};
use recdenoise::{Arch, Mode};

const CHECKS: [Check; 5] = [
    Check::Bce,
    Check::Dpi(Mode::Dp),
    Check::Dpi(Mode::Dn),
    Check::Dvae(Mode::Dp),
    Check::Dvae(Mode::Dn),
];

#[test]
fn analytic_gradients_match_central_differences() {
    for arch in [Arch::Mf, Arch::Gmf] {
        for (n, check) in CHECKS.into_iter().enumerate() {
            let mut fx = Fixture::new(check, arch, 17 + n as u64);
            let err = fx.max_relative_error(50, 1e-4, 99);
            assert!(err < 1e-4, "{arch} {check:?}: relative error {err:e}");
        }
    }
}

#[test]
fn neumf_cross_entropy_gradient() {
    let mut fx = Fixture::new(Check::Bce, Arch::NeuMf, 5);
    let err = fx.max_relative_error(50, 1e-4, 3);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn neumf_dpi_gradient() {
    let mut fx = Fixture::new(Check::Dpi(Mode::Dn), Arch::NeuMf, 6);
    let err = fx.max_relative_error(50, 1e-4, 4);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn analytic_loss_matches_reference_formulas() {
    for check in CHECKS {
        let fx = Fixture::new(check, Arch::Gmf, 2);
        let a = fx.analytic().loss;
        let b = fx.oracle_loss();
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{check:?}: {a} vs {b}");
    }
}

#[test]
fn frozen_prior_gets_no_tape() {
    let fx = Fixture::new(Check::Dvae(Mode::Dp), Arch::Mf, 8);
    assert!(fx.analytic().aux.is_none());
}

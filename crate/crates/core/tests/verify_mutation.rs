use adahessian::harness::{verify, verify_with, VerifyOptions};
use adahessian::optim::hessian_momentum_update;

fn sign_flipped(v_raw: &mut [f64], ds: &[f64], beta2: f64, t: u64) -> Vec<f64> {
    hessian_momentum_update(v_raw, ds, beta2, t)
        .into_iter()
        .map(|x| -x)
        .collect()
}

fn no_bias_correction(v_raw: &mut [f64], ds: &[f64], beta2: f64, _t: u64) -> Vec<f64> {
    // pretend every step is far into training
    hessian_momentum_update(v_raw, ds, beta2, 1_000_000)
}

#[test]
fn unmodified_library_passes() {
    let report = verify();
    let failures: Vec<_> = report.failures().collect();
    assert!(report.passed, "{failures:#?}");
}

#[test]
fn sign_flip_is_caught() {
    let report = verify_with(&VerifyOptions {
        momentum_rule: sign_flipped,
    });
    assert!(!report.passed);
    for name in ["one-step-quadratic", "descent-inequalities", "adam-reduction"] {
        assert!(!report.get(name).unwrap().passed, "{name} missed the mutation");
    }
    // properties that never touch the optimizer stay green
    assert!(report.get("hvp-fidelity").unwrap().passed);
}

#[test]
fn missing_bias_correction_is_caught() {
    let report = verify_with(&VerifyOptions {
        momentum_rule: no_bias_correction,
    });
    assert!(!report.get("adam-reduction").unwrap().passed);
}

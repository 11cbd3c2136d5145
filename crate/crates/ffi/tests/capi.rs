use std::ffi::{CStr, CString};
use std::ptr;

use adahessian_ffi::*;

fn last_error() -> String {
    let p = ah_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn problem(name: &str) -> *mut AhProblem {
    let name = CString::new(name).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ah_problem_new(name.as_ptr(), 0, &mut p) }, AhStatus::Ok);
    p
}

#[test]
fn quadratic_value_gradient_hvp() {
    let p = problem("diagonal-quadratic");
    unsafe {
        assert_eq!(ah_problem_dim(p), 2);
        let mut theta = [0.0; 2];
        assert_eq!(ah_problem_initial_point(p, 0, theta.as_mut_ptr(), 2), AhStatus::Ok);
        assert_eq!(theta, [1.0, 1.0]);

        let mut loss = 0.0;
        assert_eq!(ah_problem_evaluate(p, theta.as_ptr(), 2, &mut loss), AhStatus::Ok);
        assert_eq!(loss, 11.0);

        let mut g = [0.0; 2];
        assert_eq!(ah_problem_gradient(p, theta.as_ptr(), 2, g.as_mut_ptr()), AhStatus::Ok);
        assert_eq!(g, [20.0, 2.0]);

        let z = [1.0, -1.0];
        let mut hz = [0.0; 2];
        assert_eq!(
            ah_problem_hvp(p, theta.as_ptr(), z.as_ptr(), 2, hz.as_mut_ptr()),
            AhStatus::Ok
        );
        assert_eq!(hz, [20.0, -2.0]);

        let mut d = [0.0; 2];
        assert_eq!(
            ah_problem_estimate_diag(p, theta.as_ptr(), 2, 1, 9, 1, d.as_mut_ptr()),
            AhStatus::Ok
        );
        assert_eq!(d, [20.0, 2.0]);
        ah_problem_free(p);
    }
}

#[test]
fn one_step_to_the_minimum() {
    let p = problem("diagonal-quadratic");
    let mut hyper = ah_hyper_default();
    hyper.lr = 1.0;
    hyper.eps = 0.0;
    let groups = [2usize];
    let mut o = ptr::null_mut();
    unsafe {
        assert_eq!(ah_optimizer_new(&hyper, groups.as_ptr(), 1, 1, &mut o), AhStatus::Ok);
        let mut theta = [1.0, 1.0];
        let mut g = [0.0; 2];
        let mut d = [0.0; 2];
        ah_problem_gradient(p, theta.as_ptr(), 2, g.as_mut_ptr());
        ah_problem_estimate_diag(p, theta.as_ptr(), 2, 1, 0, 1, d.as_mut_ptr());
        assert_eq!(
            ah_optimizer_step(o, theta.as_mut_ptr(), g.as_ptr(), d.as_ptr(), 2, 1.0),
            AhStatus::Ok
        );
        assert!(theta[0].hypot(theta[1]) <= 1e-12);
        assert_eq!(ah_optimizer_iteration(o), 1);
        ah_optimizer_free(o);
        ah_problem_free(p);
    }
}

#[test]
fn reused_curvature_on_skipped_iterations() {
    let hyper = ah_hyper_default();
    let groups = [3usize];
    let mut o = ptr::null_mut();
    unsafe {
        assert_eq!(ah_optimizer_new(&hyper, groups.as_ptr(), 1, 3, &mut o), AhStatus::Ok);
        let mut theta = [1.0, 2.0, 3.0];
        let g = [0.1, 0.2, 0.3];
        let before = theta;
        // no estimate has been seen yet
        let s = ah_optimizer_step(o, theta.as_mut_ptr(), g.as_ptr(), ptr::null(), 3, 1.0);
        assert_ne!(s, AhStatus::Ok);
        assert_eq!(theta, before);
        assert!(!last_error().is_empty());

        let d = [1.0, 2.0, 3.0];
        assert_eq!(
            ah_optimizer_step(o, theta.as_mut_ptr(), g.as_ptr(), d.as_ptr(), 3, 1.0),
            AhStatus::Ok
        );
        assert_eq!(
            ah_optimizer_step(o, theta.as_mut_ptr(), g.as_ptr(), ptr::null(), 3, 1.0),
            AhStatus::Ok
        );
        assert_eq!(ah_optimizer_iteration(o), 2);
        ah_optimizer_free(o);
    }
}

#[test]
fn spatial_average_in_place() {
    let mut x = [1.0, 3.0, 5.0, 7.0, 9.0];
    let s = unsafe { ah_spatial_average(x.as_ptr(), 5, 2, x.as_mut_ptr()) };
    assert_eq!(s, AhStatus::Ok);
    assert_eq!(x, [2.0, 2.0, 6.0, 6.0, 9.0]);
    let s = unsafe { ah_spatial_average(x.as_ptr(), 5, 0, x.as_mut_ptr()) };
    assert_eq!(s, AhStatus::InvalidArgument);
}

#[test]
fn error_statuses() {
    unsafe {
        let mut p = ptr::null_mut();
        let bad = CString::new("no-such-problem").unwrap();
        assert_eq!(ah_problem_new(bad.as_ptr(), 0, &mut p), AhStatus::Config);
        assert!(last_error().contains("no-such-problem"));
        assert!(p.is_null());
        assert_eq!(ah_problem_new(ptr::null(), 0, &mut p), AhStatus::NullPointer);

        let p = problem("quadratic-2x2");
        let theta = [1.0, 2.0, 3.0];
        let mut out = [0.0; 3];
        assert_eq!(
            ah_problem_gradient(p, theta.as_ptr(), 3, out.as_mut_ptr()),
            AhStatus::DimensionMismatch
        );
        assert_eq!(
            ah_problem_gradient(p, ptr::null(), 2, out.as_mut_ptr()),
            AhStatus::NullPointer
        );
        let nan = [f64::NAN, 0.0];
        let mut loss = 0.0;
        assert_eq!(ah_problem_evaluate(p, nan.as_ptr(), 2, &mut loss), AhStatus::NonFinite);
        assert_eq!(ah_problem_dim(ptr::null()), 0);
        ah_problem_free(p);
        ah_problem_free(ptr::null_mut());

        let mut hyper = ah_hyper_default();
        hyper.lr = -1.0;
        let groups = [2usize];
        let mut o = ptr::null_mut();
        assert_eq!(
            ah_optimizer_new(&hyper, groups.as_ptr(), 1, 1, &mut o),
            AhStatus::Config
        );
        assert!(o.is_null());
    }
}

#[test]
fn header_is_generated_and_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/adahessian.h")).unwrap();
    for name in [
        "ah_problem_new",
        "ah_problem_hvp",
        "ah_problem_estimate_diag",
        "ah_spatial_average",
        "ah_optimizer_step",
        "ah_last_error",
        "typedef struct AhProblem AhProblem;",
        "AH_STATUS_NON_FINITE = 4",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

//! Release-gate property suite behind `adahessian verify`.
//!
//! Every property compares the library against an independent reference
//! (closed forms, finite differences, exhaustive enumeration or the Adam
//! baseline) and reports a one-line detail either way.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::run;
use super::trajectory::TrajectoryWriter;
use crate::autodiff::{hvp, Batch, DifferentiableProblem, HessianOperator, SecondOrderTape};
use crate::hutchinson::{estimate_with_probes, rademacher, should_compute, HutchinsonConfig};
use crate::optim::{
    hessian_momentum_update, spatial_average, AdaHessianHyper, AdaHessianState, BaselineHyper, BaselineKind,
    BaselineState, MomentumRule, OptimizerKind,
};
use crate::oracle::{exact_hutchinson_expectation, fd_hvp, reference_descent_check, Preconditioner};
use crate::param::{BlockSpec, ParamVector};
use crate::problems::{make_random_spd_quadratic, ProblemSpec, QuadraticProblem, PROBLEM_NAMES};

/// Knobs of the suite. `momentum_rule` replaces the curvature momentum
/// used by the optimizer properties, which lets tests confirm the suite
/// catches a broken rule.
#[derive(Clone, Copy)]
pub struct VerifyOptions {
    pub momentum_rule: MomentumRule,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            momentum_rule: hessian_momentum_update,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &PropertyResult> {
        self.properties.iter().filter(|p| !p.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

type Outcome = std::result::Result<String, String>;
type Property = fn(&VerifyOptions) -> Outcome;

/// Names and bodies of every property, in execution order.
pub const PROPERTIES: [(&str, Property); 11] = [
    ("one-step-quadratic", one_step_quadratic),
    ("sgd-contraction", sgd_contraction),
    ("hutchinson-enumeration", hutchinson_enumeration),
    ("hutchinson-diagonal-exact", hutchinson_diagonal_exact),
    ("enumeration-d12-speed", enumeration_speed),
    ("hvp-fidelity", hvp_fidelity),
    ("descent-inequalities", descent_inequalities),
    ("adam-reduction", adam_reduction),
    ("spatial-average-preserves-block-sums", spatial_sums),
    ("hessian-frequency-schedule", frequency_schedule),
    ("deterministic-trajectories", deterministic_trajectories),
];

pub fn verify() -> VerifyReport {
    verify_with(&VerifyOptions::default())
}

pub fn verify_with(opts: &VerifyOptions) -> VerifyReport {
    let properties: Vec<PropertyResult> = PROPERTIES.iter().map(|(name, prop)| check(name, *prop, opts)).collect();
    VerifyReport {
        passed: properties.iter().all(|p| p.passed),
        properties,
    }
}

/// Runs the single property called `name`.
pub fn run_property(name: &str, opts: &VerifyOptions) -> Option<PropertyResult> {
    PROPERTIES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, prop)| check(n, *prop, opts))
}

fn check(name: &str, prop: Property, opts: &VerifyOptions) -> PropertyResult {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| prop(opts))).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    PropertyResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            scale * e
        })
        .collect()
}

fn pv(v: Vec<f64>) -> ParamVector {
    ParamVector::new(v).expect("finite test vector")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn one_step_quadratic(opts: &VerifyOptions) -> Outcome {
    let problem = ProblemSpec::named("diagonal-quadratic")
        .build()
        .map_err(|e| e.to_string())?;
    let theta = problem.initial_point(0);
    let mut tape = SecondOrderTape::record(problem.as_ref(), &theta, &Batch::Full).map_err(|e| e.to_string())?;
    let g = tape.gradient().map_err(|e| e.to_string())?;
    // one probe recovers a diagonal Hessian exactly
    let z = rademacher(2, &mut ChaCha8Rng::seed_from_u64(1));
    let ds = estimate_with_probes(&mut tape, [&z]).map_err(|e| e.to_string())?;
    let hyper = AdaHessianHyper {
        lr: 1.0,
        eps: 0.0,
        ..Default::default()
    };
    let mut state = AdaHessianState::new(2, hyper).map_err(|e| e.to_string())?;
    let next = state
        .step_with(&theta, &g, &ds, 1.0, opts.momentum_rule)
        .map_err(|e| e.to_string())?;
    let norm = next.norm();
    ensure(norm <= 1e-12, || format!("|theta_1| = {norm:e}"))?;
    Ok(format!("|theta_1| = {norm:e}"))
}

fn sgd_contraction(_: &VerifyOptions) -> Outcome {
    for lr in [0.01, 0.05, 0.09] {
        let mut cfg = RunConfig::default();
        cfg.optimizer.kind = OptimizerKind::Sgd;
        cfg.optimizer.lr = lr;
        cfg.optimizer.beta1 = 0.0;
        cfg.run.iterations = 10;
        cfg.run.timing_reference = false;
        let out = run(&cfg).map_err(|e| e.to_string())?;
        let losses: Vec<f64> = out.trajectory.records.iter().map(|r| r.loss).collect();
        ensure(losses.windows(2).all(|w| w[1] < w[0]), || {
            format!("lr {lr}: loss not strictly decreasing")
        })?;
        let last = *losses.last().expect("ten records");
        ensure(last > 1e-6, || format!("lr {lr}: final loss {last:e} <= 1e-6"))?;
    }
    Ok("gradient descent at lr <= 0.09 decreases but stays above 1e-6 after 10 steps".into())
}

/// Dense symmetric matrix as a Hessian operator.
struct DenseOperator(DMatrix<f64>);

impl HessianOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&mut self, z: &[f64]) -> crate::error::Result<Vec<f64>> {
        Ok((&self.0 * nalgebra::DVector::from_column_slice(z))
            .iter()
            .copied()
            .collect())
    }
}

fn all_sign_vectors(d: usize) -> Vec<ParamVector> {
    (0u64..1 << d)
        .map(|mask| pv((0..d).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect()))
        .collect()
}

fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let m = DMatrix::from_vec(d, d, gaussian(rng, d * d, 1.0));
    (&m + m.transpose()) * 0.5
}

fn hutchinson_enumeration(_: &VerifyOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let d = rng.random_range(1..=12);
        let h = random_symmetric(&mut rng, d);
        let diag: Vec<f64> = h.diagonal().iter().copied().collect();
        let probes = all_sign_vectors(d);
        let est = estimate_with_probes(&mut DenseOperator(h.clone()), &probes).map_err(|e| e.to_string())?;
        let reference = exact_hutchinson_expectation(&h).map_err(|e| e.to_string())?;
        let err = max_abs_diff(est.as_slice(), &diag).max(max_abs_diff(&reference, &diag));
        ensure(err <= 1e-12, || format!("case {case} (d={d}): error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("50 matrices, worst error {worst:e}"))
}

fn hutchinson_diagonal_exact(_: &VerifyOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let d = rng.random_range(1..=40);
        let diag = gaussian(&mut rng, d, 3.0);
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag.clone()));
        let z = rademacher(d, &mut rng);
        let est = estimate_with_probes(&mut DenseOperator(h), [&z]).map_err(|e| e.to_string())?;
        ensure(est.as_slice() == diag.as_slice(), || {
            format!("d={d}: single probe not exact")
        })?;
    }
    Ok("single probes reproduce 20 diagonal Hessians exactly".into())
}

fn enumeration_speed(_: &VerifyOptions) -> Outcome {
    let start = Instant::now();
    let q = make_random_spd_quadratic(12, 50.0, 12).map_err(|e| e.to_string())?;
    let theta = pv(vec![0.3; 12]);
    let mut tape = SecondOrderTape::record(&q, &theta, &Batch::Full).map_err(|e| e.to_string())?;
    let est = estimate_with_probes(&mut tape, &all_sign_vectors(12)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let err = max_abs_diff(est.as_slice(), &q.hessian_diagonal());
    ensure(err <= 1e-10, || format!("enumerated estimate off by {err:e}"))?;
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("4096 tape hvps in {secs:.2}s, error {err:e}"))
}

/// Relative error used for Hessian-vector products against finite
/// differences: `|a - b| / max(|b|, 1)` in the Euclidean norm.
pub fn hvp_relative_error(tape: &[f64], reference: &[f64]) -> f64 {
    let diff = tape
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = reference.iter().map(|b| b * b).sum::<f64>().sqrt().max(1.0);
    diff / scale
}

/// Step for central differences of the gradient on `problem`.
pub fn hvp_fd_step(problem: &dyn DifferentiableProblem) -> f64 {
    problem.fd_step()
}

fn hvp_fidelity(_: &VerifyOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst_fd: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    for name in PROBLEM_NAMES {
        let problem = ProblemSpec::named(name).build().map_err(|e| e.to_string())?;
        let p = problem.as_ref();
        let d = p.dim();
        let base = p.initial_point(0);
        for pair in 0..20 {
            let theta = pv(base
                .iter()
                .zip(gaussian(&mut rng, d, 0.5))
                .map(|(a, b)| a + b)
                .collect());
            let z = pv(gaussian(&mut rng, d, 1.0));
            let hz = hvp(p, &theta, &Batch::Full, &z).map_err(|e| e.to_string())?;
            let fd = fd_hvp(p, &theta, &Batch::Full, &z, hvp_fd_step(p)).map_err(|e| e.to_string())?;
            let err = hvp_relative_error(hz.as_slice(), &fd);
            ensure(err <= 1e-5, || format!("{name} pair {pair}: fd relative error {err:e}"))?;

            let u = pv(gaussian(&mut rng, d, 1.0));
            let hu = hvp(p, &theta, &Batch::Full, &u).map_err(|e| e.to_string())?;
            let (a, b) = (u.dot(&hz), z.dot(&hu));
            let sym = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            ensure(sym <= 1e-8, || format!("{name} pair {pair}: symmetry gap {sym:e}"))?;
            worst_fd = worst_fd.max(err);
            worst_sym = worst_sym.max(sym);
        }
    }
    Ok(format!(
        "{} problems x 20 pairs, worst fd error {worst_fd:e}, worst symmetry gap {worst_sym:e}",
        PROBLEM_NAMES.len()
    ))
}

/// Tolerance on the slack of the descent inequality.
pub fn descent_tolerance(grad_norm_sq: f64) -> f64 {
    1e-12 * grad_norm_sq.max(1.0)
}

/// One AdaHessian step from a fresh state on `q` at `w` with step size
/// `alpha^k / beta`, exact Hessian diagonal and block size `b`. Returns
/// `(f(w_1) - f(w), bound, |g|^2, step)` with the change expanded exactly.
fn adahessian_descent(
    q: &QuadraticProblem,
    w: &[f64],
    k: f64,
    b: usize,
    rule: MomentumRule,
) -> std::result::Result<(f64, f64, f64, Vec<f64>), String> {
    let d = w.len();
    let a = q.matrix();
    let wv = nalgebra::DVector::from_column_slice(w);
    let g: Vec<f64> = (a * &wv).iter().copied().collect();
    let g2: f64 = g.iter().map(|x| x * x).sum();
    let lr = q.alpha().powf(k) / q.beta();
    let hyper = AdaHessianHyper {
        lr,
        beta1: 0.9,
        beta2: 0.999,
        hessian_power: k,
        eps: 0.0,
        weight_decay: 0.0,
    };
    let blocks = BlockSpec::single(d, b).map_err(|e| e.to_string())?;
    let ds = spatial_average(&pv(q.hessian_diagonal()), &blocks);
    let mut state = AdaHessianState::new(d, hyper).map_err(|e| e.to_string())?;
    let next = state
        .step_with(&pv(w.to_vec()), &pv(g.clone()), &ds, 1.0, rule)
        .map_err(|e| e.to_string())?;
    let s: Vec<f64> = w.iter().zip(next.iter()).map(|(a, b)| a - b).collect();
    let sv = nalgebra::DVector::from_vec(s.clone());
    let gs: f64 = g.iter().zip(&s).map(|(a, b)| a * b).sum();
    let change = -gs + 0.5 * sv.dot(&(a * &sv));
    let bound = -(q.alpha().powf(k) / (2.0 * q.beta().powf(1.0 + k))) * g2;
    Ok((change, bound, g2, s))
}

fn descent_inequalities(opts: &VerifyOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut worst = f64::INFINITY;
    let mut checks = 0;
    for case in 0..100u64 {
        let d = rng.random_range(2..=10);
        let cond = 10f64.powf(rng.random_range(0.0..3.0));
        let q = make_random_spd_quadratic(d, cond, 1000 + case).map_err(|e| e.to_string())?;
        let w = gaussian(&mut rng, d, 1.0);
        for k in [0.0, 0.5, 1.0] {
            let full = reference_descent_check(&q, &w, k, Preconditioner::Full).map_err(|e| e.to_string())?;
            ensure(full.holds, || format!("case {case} k={k} full: slack {:e}", full.slack))?;
            let diag = reference_descent_check(&q, &w, k, Preconditioner::Diagonal).map_err(|e| e.to_string())?;
            ensure(diag.holds && diag.curvature_in_range, || {
                format!("case {case} k={k} diagonal: slack {:e}", diag.slack)
            })?;
            worst = worst.min(full.slack).min(diag.slack);
            checks += 2;
            for b in [1, 2, (d / 2).max(1)] {
                let (change, bound, g2, s) = adahessian_descent(&q, &w, k, b, opts.momentum_rule)?;
                let slack = bound - change;
                ensure(slack >= -descent_tolerance(g2), || {
                    format!("case {case} d={d} k={k} b={b}: slack {slack:e}")
                })?;
                // the optimizer's step must be the reference preconditioned step
                let reference =
                    reference_descent_check(&q, &w, k, Preconditioner::BlockAveraged(b)).map_err(|e| e.to_string())?;
                ensure(reference.holds && reference.curvature_in_range, || {
                    format!("case {case} k={k} b={b}: reference slack {:e}", reference.slack)
                })?;
                let step_gap = (change - reference.change).abs();
                ensure(step_gap <= 1e-10 * g2.max(1.0), || {
                    format!("case {case} k={k} b={b}: optimizer step differs from reference by {step_gap:e}")
                })?;
                ensure(s.iter().all(|x| x.is_finite()), || "non-finite step".into())?;
                worst = worst.min(slack);
                checks += 1;
            }
        }
    }
    Ok(format!("{checks} checks, smallest slack {worst:e}"))
}

fn adam_reduction(opts: &VerifyOptions) -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let d = rng.random_range(1..=16);
        let (lr, beta1, beta2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let mut ada = AdaHessianState::new(
            d,
            AdaHessianHyper {
                lr,
                beta1,
                beta2,
                hessian_power: 1.0,
                eps,
                weight_decay: 0.0,
            },
        )
        .map_err(|e| e.to_string())?;
        let mut adam = BaselineState::new(
            BaselineKind::Adam,
            d,
            BaselineHyper {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay: 0.0,
            },
        )
        .map_err(|e| e.to_string())?;
        let mut a = pv(gaussian(&mut rng, d, 1.0));
        let mut b = a.clone();
        for t in 1..=200 {
            let g = pv(gaussian(&mut rng, d, 1.0));
            a = ada
                .step_with(&a, &g, &g, 1.0, opts.momentum_rule)
                .map_err(|e| format!("seed {seed} step {t}: {e}"))?;
            b = adam.step(&b, &g, 1.0).map_err(|e| e.to_string())?;
            let gap = max_abs_diff(a.as_slice(), b.as_slice());
            ensure(gap <= 1e-12, || format!("seed {seed} step {t}: gap {gap:e}"))?;
            worst = worst.max(gap);
        }
    }
    Ok(format!("10 seeds x 200 steps, worst gap {worst:e}"))
}

fn spatial_sums(_: &VerifyOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..200 {
        let groups: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(1..=9)).collect();
        let b = rng.random_range(1..=6);
        let spec = BlockSpec::new(groups, b).map_err(|e| e.to_string())?;
        let x = pv(gaussian(&mut rng, spec.dim(), 2.0));
        let avg = spatial_average(&x, &spec);
        for r in spec.blocks() {
            let before: f64 = x.as_slice()[r.clone()].iter().sum();
            let after: f64 = avg.as_slice()[r.clone()].iter().sum();
            ensure((before - after).abs() <= 1e-12 * before.abs().max(1.0), || {
                format!("block {r:?}: sum {before} became {after}")
            })?;
            let first = avg[r.start];
            ensure(avg.as_slice()[r.clone()].iter().all(|v| *v == first), || {
                format!("block {r:?} not constant")
            })?;
        }
    }
    Ok("200 random layouts".into())
}

fn frequency_schedule(_: &VerifyOptions) -> Outcome {
    for freq in 1..=5usize {
        for warmup in [0u64, 3] {
            let cfg = HutchinsonConfig {
                frequency: freq,
                warmup_steps: warmup,
                ..Default::default()
            };
            let n = (1..=100).filter(|&t| should_compute(t, &cfg)).count() as u64;
            let expected = warmup + (100 - warmup).div_ceil(freq as u64);
            ensure(n == expected, || {
                format!("freq {freq} warmup {warmup}: {n} estimates, expected {expected}")
            })?;
        }
    }
    Ok("estimate counts match for frequencies 1..=5".into())
}

fn trajectory_bytes(cfg: &RunConfig) -> std::result::Result<Vec<u8>, String> {
    let out = run(cfg).map_err(|e| e.to_string())?;
    let mut w = TrajectoryWriter::new(Vec::new());
    w.header(&out.trajectory.header).map_err(|e| e.to_string())?;
    for r in &out.trajectory.records {
        w.record(r).map_err(|e| e.to_string())?;
    }
    Ok(w.into_inner())
}

fn deterministic_trajectories(_: &VerifyOptions) -> Outcome {
    for (name, batch) in [("logreg", Some(32)), ("tiny-mlp", Some(16)), ("noisy-parabola", None)] {
        let mut cfg = RunConfig::for_problem(name);
        cfg.hutchinson.frequency = 2;
        cfg.run.iterations = 25;
        cfg.run.seed = 9;
        cfg.run.batch_size = batch;
        cfg.run.timing_reference = false;
        let a = trajectory_bytes(&cfg)?;
        let b = trajectory_bytes(&cfg)?;
        ensure(a == b, || format!("{name}: trajectories differ"))?;
    }
    Ok("repeated runs are byte-identical".into())
}

use adahessian::autodiff::{gradient, hvp, Batch, DifferentiableProblem, HessianOperator, SecondOrderTape};
use adahessian::hutchinson::{estimate_with_operator, probe_rng, rademacher};
use adahessian::optim::{spatial_average, AdaHessianHyper, AdaHessianState};
use adahessian::oracle::fd_gradient;
use adahessian::problems::{ProblemSpec, PROBLEM_NAMES};
use adahessian::{BlockSpec, ParamVector};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn build(name: &str) -> Box<dyn DifferentiableProblem> {
    ProblemSpec::named(name).build().unwrap()
}

fn perturbed(p: &dyn DifferentiableProblem, seed: u64, scale: f64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = p.initial_point(seed);
    ParamVector::new(
        base.iter()
            .map(|x| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x + scale * e
            })
            .collect(),
    )
    .unwrap()
}

fn direction(d: usize, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    ParamVector::new((0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1.0);
    diff / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_finite_differences(which in 0..PROBLEM_NAMES.len(), seed in 0u64..1000) {
        let p = build(PROBLEM_NAMES[which]);
        let theta = perturbed(p.as_ref(), seed, 0.3);
        let g = gradient(p.as_ref(), &theta, &Batch::Full).unwrap();
        let fd = fd_gradient(p.as_ref(), &theta, &Batch::Full, p.fd_step()).unwrap();
        prop_assert!(rel(g.as_slice(), &fd) <= 1e-6, "{} rel {}", PROBLEM_NAMES[which], rel(g.as_slice(), &fd));
    }

    #[test]
    fn hvp_is_linear_in_direction(which in 0..PROBLEM_NAMES.len(), seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let p = build(PROBLEM_NAMES[which]);
        let theta = perturbed(p.as_ref(), seed, 0.3);
        let u = direction(p.dim(), seed);
        let v = direction(p.dim(), seed + 1);
        let combo = u.scaled(a).unwrap().add_scaled(b, &v).unwrap();
        let lhs = hvp(p.as_ref(), &theta, &Batch::Full, &combo).unwrap();
        let hu = hvp(p.as_ref(), &theta, &Batch::Full, &u).unwrap();
        let hv = hvp(p.as_ref(), &theta, &Batch::Full, &v).unwrap();
        let rhs: Vec<f64> = hu.iter().zip(&hv).map(|(x, y)| a * x + b * y).collect();
        prop_assert!(rel(lhs.as_slice(), &rhs) <= 1e-10);
    }

    #[test]
    fn hvp_is_symmetric(which in 0..PROBLEM_NAMES.len(), seed in 0u64..1000) {
        let p = build(PROBLEM_NAMES[which]);
        let theta = perturbed(p.as_ref(), seed, 0.3);
        let u = direction(p.dim(), seed);
        let v = direction(p.dim(), seed + 7);
        let mut tape = SecondOrderTape::record(p.as_ref(), &theta, &Batch::Full).unwrap();
        let uhv = u.dot(&tape.hvp(v.as_slice()).unwrap());
        let vhu = v.dot(&tape.hvp(u.as_slice()).unwrap());
        prop_assert!((uhv - vhu).abs() <= 1e-8 * uhv.abs().max(vhu.abs()).max(1.0));
    }

    #[test]
    fn spatial_average_is_blockwise_mean(groups in prop::collection::vec(1usize..10, 1..4), b in 1usize..7, seed in 0u64..1000) {
        let spec = BlockSpec::new(groups, b).unwrap();
        let x = direction(spec.dim(), seed);
        let avg = spatial_average(&x, &spec);
        for r in spec.blocks() {
            prop_assert!(r.len() <= b);
            let mean = x.as_slice()[r.clone()].iter().sum::<f64>() / r.len() as f64;
            for i in r {
                prop_assert!((avg[i] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            }
        }
        // averaging twice changes nothing, up to rounding of the block sum
        let twice = spatial_average(&avg, &spec);
        prop_assert!(rel(twice.as_slice(), avg.as_slice()) <= 1e-14);
    }

    #[test]
    fn hessian_power_zero_is_momentum_sgd(seed in 0u64..1000, lr in 1e-3f64..1.0) {
        let d = 5;
        let hyper = AdaHessianHyper { lr, hessian_power: 0.0, eps: 0.0, ..Default::default() };
        let mut state = AdaHessianState::new(d, hyper.clone()).unwrap();
        let theta = direction(d, seed);
        let g = direction(d, seed + 1);
        let ds = direction(d, seed + 2);
        let next = state.step(&theta, &g, &ds, 1.0).unwrap();
        // first step: m_hat = g and the curvature term is 1
        for i in 0..d {
            prop_assert!((next[i] - (theta[i] - lr * g[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn update_ignores_curvature_sign_and_scales_inversely(seed in 0u64..1000, c in 0.1f64..10.0) {
        let d = 4;
        let hyper = AdaHessianHyper { lr: 0.1, eps: 0.0, ..Default::default() };
        let theta = direction(d, seed);
        let g = direction(d, seed + 1);
        let ds = direction(d, seed + 2);
        let step = |ds: &ParamVector| {
            let mut s = AdaHessianState::new(d, hyper.clone()).unwrap();
            let next = s.step(&theta, &g, ds, 1.0).unwrap();
            theta.iter().zip(next.iter()).map(|(a, b)| a - b).collect::<Vec<f64>>()
        };
        let base = step(&ds);
        let flipped = step(&ds.scaled(-1.0).unwrap());
        let scaled = step(&ds.scaled(c).unwrap());
        for i in 0..d {
            prop_assert!((base[i] - flipped[i]).abs() <= 1e-12 * base[i].abs().max(1e-300));
            prop_assert!((base[i] - c * scaled[i]).abs() <= 1e-10 * base[i].abs().max(1e-300));
        }
    }
}

struct Dense(DMatrix<f64>);

impl HessianOperator for Dense {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&mut self, z: &[f64]) -> adahessian::Result<Vec<f64>> {
        Ok((&self.0 * nalgebra::DVector::from_column_slice(z))
            .iter()
            .copied()
            .collect())
    }
}

#[test]
fn single_probe_moments_match_theory() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 6;
    let m = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let h: DMatrix<f64> = (&m + m.transpose()) * 0.5;
    let n = 40_000;
    let mut op = Dense(h.clone());
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for t in 0..n {
        let est = estimate_with_operator(&mut op, 1, &mut probe_rng(11, t)).unwrap();
        for i in 0..d {
            sum[i] += est[i];
            sq[i] += est[i] * est[i];
        }
    }
    for i in 0..d {
        let mean = sum[i] / n as f64;
        let var = sq[i] / n as f64 - mean * mean;
        let off: f64 = (0..d).filter(|&j| j != i).map(|j| h[(i, j)].powi(2)).sum();
        // standard error of the mean is sqrt(off / n)
        assert!(
            (mean - h[(i, i)]).abs() <= 5.0 * (off / n as f64).sqrt(),
            "coordinate {i} mean {mean}"
        );
        assert!(
            (var - off).abs() <= 0.05 * off,
            "coordinate {i}: variance {var} vs {off}"
        );
    }
}

#[test]
fn probes_depend_only_on_seed_and_iteration() {
    let a = rademacher(100, &mut probe_rng(3, 17));
    let b = rademacher(100, &mut probe_rng(3, 17));
    let c = rademacher(100, &mut probe_rng(3, 18));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.iter().all(|x| *x == 1.0 || *x == -1.0));
}

//! Hutchinson estimation of the Hessian diagonal, `diag(H) = E[z * (H z)]`
//! with Rademacher probes `z`.
//!
//! Probes come from ChaCha8 (`rand_chacha`), seeded with the configured
//! 64-bit seed and switched to stream `t` for iteration `t`. Each `u64`
//! drawn from the generator supplies 64 signs, least significant bit
//! first; a set bit means `+1`. The output therefore only depends on
//! `(seed, t)` and is identical across platforms.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Batch, DifferentiableProblem, HessianOperator, SecondOrderTape};
use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HutchinsonConfig {
    /// Probes averaged per estimate.
    pub samples: usize,
    /// Estimate every `frequency` iterations after warmup.
    pub frequency: usize,
    /// Iterations `1..=warmup_steps` always compute a fresh estimate.
    pub warmup_steps: u64,
    pub seed: u64,
}

impl Default for HutchinsonConfig {
    fn default() -> Self {
        Self {
            samples: 1,
            frequency: 1,
            warmup_steps: 0,
            seed: 0,
        }
    }
}

impl HutchinsonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("hutchinson samples must be >= 1".into()));
        }
        if self.frequency == 0 {
            return Err(Error::Config("hessian frequency must be >= 1".into()));
        }
        Ok(())
    }
}

/// Generator for the probes of one iteration.
pub fn probe_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// A vector of i.i.d. `+1`/`-1` entries.
pub fn rademacher(d: usize, rng: &mut impl RngCore) -> ParamVector {
    assert!(d >= 1, "rademacher dimension must be >= 1");
    let mut out = Vec::with_capacity(d);
    while out.len() < d {
        let bits = rng.next_u64();
        let take = (d - out.len()).min(64);
        out.extend((0..take).map(|i| if (bits >> i) & 1 == 1 { 1.0 } else { -1.0 }));
    }
    ParamVector::new(out).expect("signs are finite")
}

/// Hessian diagonal estimate and the iteration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagEstimate {
    pub values: ParamVector,
    pub iteration: u64,
}

/// Mean of `z * (H z)` over the given probes.
pub fn estimate_with_probes<'a>(
    op: &mut dyn HessianOperator,
    probes: impl IntoIterator<Item = &'a ParamVector>,
) -> Result<ParamVector> {
    let d = op.dim();
    let mut acc = vec![0.0; d];
    let mut count = 0usize;
    for z in probes {
        z.expect_len(d, "probe")?;
        let hz = op.apply(z.as_slice())?;
        for ((a, zi), hi) in acc.iter_mut().zip(z).zip(&hz) {
            *a += zi * hi;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no probes given".into()));
    }
    let inv = 1.0 / count as f64;
    ParamVector::checked(acc.into_iter().map(|a| a * inv).collect(), "diagonal estimate")
}

/// Draws `samples` probes from `rng` and averages `z * (H z)`.
pub fn estimate_with_operator(
    op: &mut dyn HessianOperator,
    samples: usize,
    rng: &mut impl RngCore,
) -> Result<ParamVector> {
    let probes: Vec<ParamVector> = (0..samples).map(|_| rademacher(op.dim(), rng)).collect();
    estimate_with_probes(op, &probes)
}

/// Hutchinson estimate of the Hessian diagonal of `problem` at `theta` on `batch`.
pub fn estimate_diag(
    problem: &dyn DifferentiableProblem,
    theta: &ParamVector,
    batch: &Batch,
    cfg: &HutchinsonConfig,
    iteration: u64,
    rng: &mut impl RngCore,
) -> Result<DiagEstimate> {
    cfg.validate()?;
    let mut tape = SecondOrderTape::record(problem, theta, batch)?;
    let values = estimate_with_operator(&mut tape, cfg.samples, rng)?;
    Ok(DiagEstimate { values, iteration })
}

/// Whether iteration `t` (1-based) computes a fresh estimate.
pub fn should_compute(t: u64, cfg: &HutchinsonConfig) -> bool {
    assert!(t >= 1, "iterations are 1-based");
    t <= cfg.warmup_steps || (t - cfg.warmup_steps - 1).is_multiple_of(cfg.frequency as u64)
}

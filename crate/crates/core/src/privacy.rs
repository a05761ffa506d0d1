//! Local perturbation of sensed values and the accuracy side of the privacy
//! contract.
//!
//! Reports are privatized by adding Laplace noise of scale `zeta / epsilon`,
//! where `zeta` bounds the magnitude of a sensed value and `epsilon` is the
//! per-report privacy budget. The aggregator averages perturbed reports, so
//! the residual error shrinks as more winners report; `empirical_accuracy`
//! measures that error frequency by Monte Carlo.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{accuracy_requirement, AccuracySpec};

/// Noise scale calibrated so a report of magnitude at most `zeta` satisfies
/// the `epsilon` privacy budget.
pub fn noise_scale(epsilon: f64, zeta: f64) -> Result<f64> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            requirement: "positive and finite",
        });
    }
    if !zeta.is_finite() || zeta <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "zeta",
            value: zeta,
            requirement: "positive and finite",
        });
    }
    Ok(zeta / epsilon)
}

/// Inverse-CDF transform taking `u` uniform on (-1/2, 1/2) to a
/// Laplace(0, `scale`) variate. `u = 0` maps to exactly zero.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let magnitude = -scale * (1.0 - 2.0 * u.abs()).ln();
    magnitude.copysign(u)
}

/// Draw one Laplace(0, `scale`) variate from the caller's generator.
///
/// Sampling consumes exactly one uniform per returned variate except for the
/// measure-zero draw at the interval edge, which is rejected and redrawn.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "scale",
            value: scale,
            requirement: "positive and finite",
        });
    }
    loop {
        let u = rng.gen::<f64>() - 0.5;
        if u > -0.5 {
            return Ok(laplace_from_uniform(u, scale));
        }
    }
}

/// Privatize one sensed value under budget `epsilon` and magnitude bound
/// `zeta`.
pub fn perturb<R: Rng + ?Sized>(value: f64, epsilon: f64, zeta: f64, rng: &mut R) -> Result<f64> {
    let scale = noise_scale(epsilon, zeta)?;
    Ok(value + laplace_sample(scale, rng)?)
}

/// True iff Laplace noise of the given scale meets the `epsilon` budget for
/// values bounded by `zeta`, i.e. `zeta / scale <= epsilon`. Equality is
/// accepted up to one part in 1e12 so that the calibrated scale
/// `zeta / epsilon` always verifies despite rounding.
pub fn verify_ldp(scale: f64, zeta: f64, epsilon: f64) -> bool {
    let well_formed = scale.is_finite()
        && scale > 0.0
        && zeta.is_finite()
        && zeta > 0.0
        && epsilon.is_finite()
        && epsilon > 0.0;
    well_formed && zeta / scale <= epsilon * (1.0 + 1e-12)
}

/// Average a set of perturbed reports.
pub fn aggregate(reports: &[f64]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    Ok(reports.iter().sum::<f64>() / reports.len() as f64)
}

/// Fraction of Monte Carlo trials in which the mean of `n_winners`
/// noise-only reports misses the accuracy target `spec.alpha`.
///
/// Requires `n_winners` to meet the accuracy requirement for `spec` and at
/// least 10^4 trials. The sensed value cancels out of the aggregate error,
/// so trials draw pure noise.
pub fn empirical_accuracy<R: Rng + ?Sized>(
    n_winners: u32,
    spec: &AccuracySpec,
    epsilon: f64,
    zeta: f64,
    trials: u64,
    rng: &mut R,
) -> Result<f64> {
    const MIN_TRIALS: u64 = 10_000;
    let requirement = accuracy_requirement(spec, epsilon, zeta)?;
    if n_winners < requirement {
        return Err(Error::BelowRequirement {
            n_winners,
            requirement,
        });
    }
    if trials < MIN_TRIALS {
        return Err(Error::TooFewTrials {
            trials,
            minimum: MIN_TRIALS,
        });
    }
    let scale = noise_scale(epsilon, zeta)?;
    let mut misses = 0u64;
    for _ in 0..trials {
        let mut sum = 0.0;
        for _ in 0..n_winners {
            sum += laplace_sample(scale, rng)?;
        }
        if (sum / f64::from(n_winners)).abs() >= spec.alpha {
            misses += 1;
        }
    }
    Ok(misses as f64 / trials as f64)
}

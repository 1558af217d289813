use rand::Rng;
use rand_distr::{Distribution, Normal as Gaussian};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::gp::GpSurrogate;
use super::space::SearchSpace;
use super::trace::{TrialPhase, TrialRecord};
use crate::dsl::Assignment;

/// Expected improvement over `best` for a maximization problem.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64, xi: f64) -> f64 {
    let gain = mu - best - xi;
    if sigma < 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    let n = Normal::standard();
    (gain * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

fn primes(count: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().take_while(|p| *p * *p <= c).all(|p| !c.is_multiple_of(*p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// The first `n` points of the `dim`-dimensional Halton sequence (index 0
/// skipped), each coordinate shifted by `shift` modulo 1.
pub fn halton(n: usize, dim: usize, shift: &[f64]) -> Vec<Vec<f64>> {
    let bases = primes(dim);
    (1..=n as u64)
        .map(|i| {
            bases
                .iter()
                .zip(shift)
                .map(|(&b, s)| (radical_inverse(i, b) + s).fract())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuggestConfig {
    pub n_init: usize,
    pub xi: f64,
    pub n_candidates: usize,
    pub n_local: usize,
    pub local_std: f64,
}

impl SuggestConfig {
    /// Default random-phase length for a space with `dims` tunables.
    pub fn default_n_init(dims: usize) -> usize {
        (2 * dims).max(5)
    }
}

/// Next assignment to evaluate. Until `n_init` successful observations
/// exist the point is uniform random; afterwards it maximizes expected
/// improvement under a GP fitted to the history, over shifted Halton points
/// and Gaussian perturbations of the incumbent.
pub fn suggest<R: Rng + ?Sized>(
    history: &[TrialRecord],
    space: &SearchSpace,
    rng: &mut R,
    cfg: &SuggestConfig,
) -> (Assignment, TrialPhase) {
    let observed: Vec<(Vec<f64>, f64)> = history
        .iter()
        .filter_map(|r| Some((space.encode(&r.assignment).ok()?, r.objective?)))
        .collect();
    if observed.len() < cfg.n_init.max(1) {
        return (space.sample(rng), TrialPhase::Random);
    }
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = observed.into_iter().unzip();
    let Ok(gp) = GpSurrogate::fit(&x, &y) else {
        return (space.sample(rng), TrialPhase::Random);
    };

    let dim = space.encoded_len();
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut candidates = halton(cfg.n_candidates, dim, &shift);
    let incumbent = y
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > y[b] { i } else { b });
    let noise = Gaussian::new(0.0, cfg.local_std.max(0.0)).expect("finite std");
    for _ in 0..cfg.n_local {
        candidates.push(x[incumbent].iter().map(|c| (c + noise.sample(rng)).clamp(0.0, 1.0)).collect());
    }

    // EI runs on the surrogate's standardized scale, xi included
    let best_z = (y[incumbent] - gp.y_mean()) / gp.y_std();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in candidates {
        let p = space.project(&c);
        let (m, v) = gp.predict_standardized(&p);
        let ei = expected_improvement(m, v.sqrt(), best_z, cfg.xi);
        if best.as_ref().is_none_or(|(b, _)| ei > *b) {
            best = Some((ei, p));
        }
    }
    let (_, point) = best.expect("at least one candidate");
    (space.decode(&point).expect("projected point"), TrialPhase::Bayesian)
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::anderson::{check_alpha, AdMethod, AdTestResult, PValueSource, Pooled, TieMode, Verdict};
use super::StatsError;

pub const MIN_PERMUTATIONS: usize = 1000;

/// Iterations per independently seeded chunk. Chunking is fixed, so the
/// result depends only on the seed, never on the worker count.
const CHUNK: usize = 250;

/// Monte-Carlo p-value of the k-sample statistic under random relabelling
/// of the pooled observations: `(#{perm >= observed} + 1) / (iterations + 1)`.
pub fn ad_permutation_pvalue<S: AsRef<[f64]> + Sync>(
    samples: &[S],
    iterations: usize,
    seed: u64,
    tie_mode: TieMode,
) -> Result<f64, StatsError> {
    let pooled = Pooled::new(samples)?;
    run(&pooled, iterations, seed, tie_mode).map(|(_, p)| p)
}

fn run(pooled: &Pooled, iterations: usize, seed: u64, tie_mode: TieMode) -> Result<(f64, f64), StatsError> {
    if iterations < MIN_PERMUTATIONS {
        return Err(StatsError::TooFewIterations(iterations));
    }
    let observed = pooled.statistic(&pooled.labels, tie_mode, &mut Vec::new());
    let threshold = observed - 1e-12 * observed.abs().max(1.0);
    let chunks = iterations.div_ceil(CHUNK);
    let exceed: usize = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let todo = CHUNK.min(iterations - chunk * CHUNK);
            let mut labels = pooled.labels.clone();
            let mut counts = Vec::new();
            (0..todo)
                .filter(|_| {
                    labels.shuffle(&mut rng);
                    pooled.statistic(&labels, tie_mode, &mut counts) >= threshold
                })
                .count()
        })
        .sum();
    Ok((observed, (exceed + 1) as f64 / (iterations + 1) as f64))
}

/// The k-sample test with its p-value taken from the permutation
/// distribution instead of the asymptotic approximation.
pub fn ad_ksample_permutation<S: AsRef<[f64]> + Sync>(
    samples: &[S],
    alpha: f64,
    tie_mode: TieMode,
    iterations: usize,
    seed: u64,
) -> Result<AdTestResult, StatsError> {
    check_alpha(alpha)?;
    let pooled = Pooled::new(samples)?;
    let (raw, p_value) = run(&pooled, iterations, seed, tie_mode)?;
    Ok(AdTestResult {
        statistic: pooled.standardize(raw),
        raw_statistic: raw,
        p_value,
        p_value_source: PValueSource::Permutation,
        method: AdMethod::Permutation,
        tie_mode,
        k: samples.len(),
        n_total: pooled.n_total(),
        alpha,
        verdict: if p_value < alpha {
            Verdict::Different
        } else {
            Verdict::Similar
        },
    })
}

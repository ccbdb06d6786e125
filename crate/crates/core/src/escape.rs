//! Monte-Carlo estimation of where PGD trajectories end up: random starts,
//! independent per-trial RNG streams, label counts with binomial errors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::manifold::{random_point, ManifoldPoint, ManifoldSpec};
use crate::objective::Objective;
use crate::parallel::map_trials;
use crate::pgd::{classify_limit, run_pgd, LimitClass, PGDConfig, UNDETERMINED_LABEL};

/// Aggregated outcome counts over a batch of PGD trials.
#[derive(Debug, Clone)]
pub struct EscapeStats {
    pub trials: usize,
    pub counts: BTreeMap<String, usize>,
    pub seeds: Vec<u64>,
}

impl EscapeStats {
    pub fn count(&self, label: &str) -> usize {
        self.counts.get(label).copied().unwrap_or(0)
    }

    pub fn fraction(&self, label: &str) -> f64 {
        self.count(label) as f64 / self.trials as f64
    }

    /// Binomial standard error of the label's empirical probability.
    pub fn standard_error(&self, label: &str) -> f64 {
        let p = self.fraction(label);
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// SplitMix64-style stream derivation: one master seed fans out into
/// decorrelated per-trial seeds.
pub fn derive_seeds(master_seed: u64, trials: usize) -> Vec<u64> {
    let mut state = master_seed;
    (0..trials)
        .map(|_| {
            state = state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^ (z >> 31)
        })
        .collect()
}

/// Runs one PGD trial per seed from a random start on `spec` and tallies
/// the classified limits. Failed trials count as undetermined.
pub fn escape_monte_carlo<O: Objective + Sync + ?Sized>(
    objective: &O,
    spec: &ManifoldSpec,
    config: &PGDConfig,
    references: &[LimitClass],
    classify_tol: f64,
    seeds: &[u64],
) -> Result<EscapeStats> {
    escape_monte_carlo_from(
        objective,
        |seed| random_point(spec, seed),
        config,
        references,
        classify_tol,
        seeds,
    )
}

/// Variant taking an explicit start-point sampler (used when starts need
/// problem-specific scaling or conditioning).
pub fn escape_monte_carlo_from<O, S>(
    objective: &O,
    sample_start: S,
    config: &PGDConfig,
    references: &[LimitClass],
    classify_tol: f64,
    seeds: &[u64],
) -> Result<EscapeStats>
where
    O: Objective + Sync + ?Sized,
    S: Fn(u64) -> ManifoldPoint + Sync,
{
    if seeds.is_empty() {
        return Err(Error::Parameter("need at least one trial seed".into()));
    }
    if references.is_empty() {
        return Err(Error::Misuse("empty reference list".into()));
    }
    config.validate()?;

    let labels = map_trials(seeds, |&seed| {
        let start = sample_start(seed);
        match run_pgd(&start, objective, config) {
            Ok(traj) => classify_limit(&traj, references, classify_tol)
                .unwrap_or_else(|_| UNDETERMINED_LABEL.to_string()),
            Err(_) => UNDETERMINED_LABEL.to_string(),
        }
    });

    let mut counts = BTreeMap::new();
    for label in labels {
        *counts.entry(label).or_insert(0) += 1;
    }
    Ok(EscapeStats {
        trials: seeds.len(),
        counts,
        seeds: seeds.to_vec(),
    })
}

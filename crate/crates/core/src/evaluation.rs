//! Dice overlap and cross-validation folds.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::volume::VoxelVolume;

/// Folds used for evaluation: 22 folds of 5 cases.
pub const DEFAULT_FOLDS: usize = 22;
pub const DEFAULT_FOLD_SIZE: usize = 5;

/// `2|A∩B| / (|A| + |B|)`. Two empty masks agree perfectly (1.0).
pub fn dice(a: &VoxelVolume, b: &VoxelVolume) -> Result<f64> {
    if !a.is_mask() || !b.is_mask() {
        return Err(Error::WrongKind { expected: "mask" });
    }
    if a.dims() != b.dims() {
        return Err(Error::DimMismatch(a.dims(), b.dims()));
    }
    let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        na += x as u64;
        nb += y as u64;
        both += (x && y) as u64;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    /// Index of the fold holding `case_id`.
    pub fn fold_of(&self, case_id: &str) -> Option<usize> {
        self.folds
            .iter()
            .position(|f| f.iter().any(|c| c == case_id))
    }

    pub fn case_count(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }
}

/// Sorts the ids, shuffles them with a seeded ChaCha8 stream and cuts the
/// result into `k` consecutive folds of `fold_size`.
pub fn make_folds(case_ids: &[String], k: usize, fold_size: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || fold_size == 0 || k * fold_size != case_ids.len() {
        return Err(Error::FoldDivisibility {
            cases: case_ids.len(),
            folds: k,
            fold_size,
        });
    }
    let mut ids = case_ids.to_vec();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("duplicate case ids".into()));
    }
    let mut rng = seed::stream(seed, &[b"folds"]);
    ids.shuffle(&mut rng);
    Ok(FoldPlan {
        seed,
        folds: ids.chunks(fold_size).map(<[String]>::to_vec).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceSummary {
    pub cases: usize,
    pub mean: f64,
    pub median: f64,
    /// Mean Dice of each fold over the cases present in `per_case`; `None`
    /// for folds without scored cases.
    pub fold_means: Vec<Option<f64>>,
}

/// Pools per-case Dice values. Sums run in case-id order.
pub fn pool_and_score(
    per_case: &BTreeMap<String, f64>,
    plan: Option<&FoldPlan>,
) -> Result<DiceSummary> {
    if per_case.is_empty() {
        return Err(Error::InvalidArgument("no Dice values to pool".into()));
    }
    let values: Vec<f64> = per_case.values().copied().collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let fold_means = plan
        .map(|p| {
            p.folds
                .iter()
                .map(|fold| {
                    let members: HashSet<&str> = fold.iter().map(String::as_str).collect();
                    let vals: Vec<f64> = per_case
                        .iter()
                        .filter(|(k, _)| members.contains(k.as_str()))
                        .map(|(_, &v)| v)
                        .collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(DiceSummary {
        cases: n,
        mean,
        median,
        fold_means,
    })
}

//! Prior-shift benchmark construction.
//!
//! The pool is shuffled once and cut into train/val/test. The source domain
//! keeps every row of each split except those of the omitted classes. The
//! target domain is a random fraction of each split over all classes. The
//! two domains therefore overlap, but a target test row can only appear in
//! the source test split, never in source train or val.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub omitted_classes: BTreeSet<usize>,
    pub target_fraction: f64,
    pub seed: u64,
}

impl ShiftSpec {
    pub fn new(omitted: impl IntoIterator<Item = usize>, target_fraction: f64, seed: u64) -> Self {
        ShiftSpec {
            omitted_classes: omitted.into_iter().collect(),
            target_fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&r| !(r > 0.0 && r < 1.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split ratios {parts:?} must be positive and sum to 1"
            )));
        }
        Ok(())
    }

    fn counts(&self, n: usize) -> [usize; 3] {
        let train = (self.train * n as f64).round() as usize;
        let val = ((self.val * n as f64).round() as usize).min(n - train.min(n));
        let train = train.min(n);
        [train, val, n - train - val]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Uniform,
    /// Per-class fractions, for lower-variance tests.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShiftOptions {
    pub ratios: SplitRatios,
    pub sampling: Sampling,
    /// Standardize every column using statistics of the source train split.
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl DomainSplits {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn total_len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    /// Class counts summed over the three splits.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = self.train.class_counts();
        for ds in [&self.val, &self.test] {
            for (c, n) in counts.iter_mut().zip(ds.class_counts()) {
                *c += n;
            }
        }
        counts
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut Dataset> {
        [&mut self.train, &mut self.val, &mut self.test].into_iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedData {
    pub source: DomainSplits,
    pub target: DomainSplits,
}

fn sample_fraction(
    pool: &Dataset,
    indices: &[usize],
    fraction: f64,
    sampling: Sampling,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let take = |n: usize| ((fraction * n as f64).round() as usize).min(n);
    // sample positions within `indices`, then restore their original order
    let mut positions: Vec<usize> = match sampling {
        Sampling::Uniform => {
            let mut all: Vec<usize> = (0..indices.len()).collect();
            all.shuffle(rng);
            all.truncate(take(indices.len()));
            all
        }
        Sampling::Stratified => {
            let mut chosen = Vec::new();
            for c in 0..pool.num_classes() {
                let mut members: Vec<usize> = (0..indices.len())
                    .filter(|&k| pool.labels()[indices[k]] == c)
                    .collect();
                members.shuffle(rng);
                members.truncate(take(members.len()));
                chosen.extend(members);
            }
            chosen
        }
    };
    positions.sort_unstable();
    positions.into_iter().map(|k| indices[k]).collect()
}

pub fn apply_shift(pool: &Dataset, spec: &ShiftSpec, options: &ShiftOptions) -> Result<ShiftedData> {
    options.ratios.validate()?;
    if !(spec.target_fraction > 0.0 && spec.target_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "target fraction {} outside (0, 1]",
            spec.target_fraction
        )));
    }
    let counts = pool.class_counts();
    for &c in &spec.omitted_classes {
        if c >= pool.num_classes() || counts[c] == 0 {
            return Err(Error::invalid(format!("omitted class {c} does not occur in the pool")));
        }
    }
    if spec.omitted_classes.len() >= pool.num_classes() {
        return Err(Error::invalid("cannot omit every class from the source domain"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    let [n_train, n_val, _] = options.ratios.counts(pool.len());
    let base = [
        &order[..n_train],
        &order[n_train..n_train + n_val],
        &order[n_train + n_val..],
    ];

    let mut source = Vec::with_capacity(3);
    let mut target = Vec::with_capacity(3);
    for (split, idx) in Split::ALL.into_iter().zip(base) {
        let kept: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| !spec.omitted_classes.contains(&pool.labels()[i]))
            .collect();
        let sampled = sample_fraction(pool, idx, spec.target_fraction, options.sampling, &mut rng);
        for (domain, rows, out) in [("source", &kept, &mut source), ("target", &sampled, &mut target)] {
            if rows.is_empty() {
                return Err(Error::invalid(format!(
                    "{domain} {split} split is empty for a pool of {} rows",
                    pool.len()
                )));
            }
            let omitted: Vec<usize> = spec.omitted_classes.iter().copied().collect();
            out.push(
                pool.subset(rows)
                    .with_split(split)
                    .with_provenance(format!(
                        "{} | {domain} {split} (omit {omitted:?}, fraction {}, seed {})",
                        pool.provenance(),
                        spec.target_fraction,
                        spec.seed
                    )),
            );
        }
    }
    let into_domain = |mut v: Vec<Dataset>| {
        let test = v.pop().unwrap();
        let val = v.pop().unwrap();
        let train = v.pop().unwrap();
        DomainSplits { train, val, test }
    };
    let mut shifted = ShiftedData {
        source: into_domain(source),
        target: into_domain(target),
    };
    if options.standardize {
        standardize(&mut shifted);
    }
    Ok(shifted)
}

fn standardize(data: &mut ShiftedData) {
    let fit = &data.source.train;
    let n = fit.len() as f64;
    let d = fit.dim();
    let mean: Vec<f64> = (0..d)
        .map(|j| fit.features().iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = fit
                .features()
                .iter()
                .map(|r| (r[j] - mean[j]).powi(2))
                .sum::<f64>()
                / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let apply = |row: &mut [f64]| {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) / s;
        }
    };
    for ds in data.source.iter_mut().chain(data.target.iter_mut()) {
        ds.map_features(apply);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;

    fn pool() -> Dataset {
        make_blobs(100, 10, 12, 1.0, 4).unwrap()
    }

    #[test]
    fn omitting_one_class() {
        let shifted = apply_shift(&pool(), &ShiftSpec::new([3], 0.1, 1), &ShiftOptions::default()).unwrap();
        assert_eq!(shifted.source.class_counts()[3], 0);
        assert!(shifted.target.class_counts()[3] > 0);
        assert_eq!(shifted.target.total_len(), 100);
    }

    #[test]
    fn omitting_two_classes() {
        let shifted = apply_shift(&pool(), &ShiftSpec::new([3, 7], 0.1, 1), &ShiftOptions::default()).unwrap();
        let counts = shifted.source.class_counts();
        assert_eq!(counts.iter().filter(|&&c| c > 0).count(), 8);
        assert_eq!((counts[3], counts[7]), (0, 0));
    }

    #[test]
    fn identity_shift() {
        let p = pool();
        let shifted = apply_shift(&p, &ShiftSpec::new([], 1.0, 5), &ShiftOptions::default()).unwrap();
        for split in Split::ALL {
            let (s, t) = (shifted.source.get(split), shifted.target.get(split));
            assert_eq!(s.features(), t.features());
            assert_eq!(s.labels(), t.labels());
        }
        assert_eq!(shifted.target.class_counts(), p.class_counts());
    }

    #[test]
    fn splits_are_disjoint_and_test_is_never_trained_on() {
        // tag every row with its pool index in an extra feature
        let p = pool();
        let tagged = Dataset::new(
            p.features()
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let mut r = r.clone();
                    r.push(i as f64);
                    r
                })
                .collect(),
            p.labels().to_vec(),
            p.num_classes(),
            "tagged",
        )
        .unwrap();
        let s = apply_shift(&tagged, &ShiftSpec::new([2], 0.3, 8), &ShiftOptions::default()).unwrap();
        let ids = |ds: &Dataset| -> BTreeSet<u64> {
            ds.features().iter().map(|r| *r.last().unwrap() as u64).collect()
        };
        let source_fit: BTreeSet<u64> = ids(&s.source.train).union(&ids(&s.source.val)).copied().collect();
        assert!(ids(&s.target.test).is_disjoint(&source_fit));
        assert!(ids(&s.target.train).is_disjoint(&ids(&s.target.test)));
        assert!(ids(&s.target.train).is_disjoint(&ids(&s.target.val)));
        assert!(ids(&s.source.train).is_disjoint(&ids(&s.source.test)));

        let kept_test: Vec<usize> = (0..s.target.test.len())
            .filter(|&i| s.target.test.labels()[i] != 2)
            .collect();
        assert!(ids(&s.target.test.subset(&kept_test)).is_subset(&ids(&s.source.test)));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let p = pool();
        let spec = ShiftSpec::new([1], 0.2, 10);
        let a = apply_shift(&p, &spec, &ShiftOptions::default()).unwrap();
        let b = apply_shift(&p, &spec, &ShiftOptions::default()).unwrap();
        assert_eq!(a, b);
        let c = apply_shift(&p, &ShiftSpec::new([1], 0.2, 11), &ShiftOptions::default()).unwrap();
        assert_ne!(a.target.train, c.target.train);
    }

    #[test]
    fn stratified_sampling_keeps_priors() {
        let opts = ShiftOptions {
            sampling: Sampling::Stratified,
            ..ShiftOptions::default()
        };
        let s = apply_shift(&pool(), &ShiftSpec::new([0], 0.5, 2), &opts).unwrap();
        let counts = s.target.class_counts();
        let max = *counts.iter().max().unwrap();
        let min = *counts.iter().min().unwrap();
        assert!(max - min <= 3, "{counts:?}");
    }

    #[test]
    fn standardization_uses_source_train() {
        let opts = ShiftOptions {
            standardize: true,
            ..ShiftOptions::default()
        };
        let s = apply_shift(&pool(), &ShiftSpec::new([0], 0.5, 2), &opts).unwrap();
        let n = s.source.train.len() as f64;
        for j in 0..s.source.train.dim() {
            let m: f64 = s.source.train.features().iter().map(|r| r[j]).sum::<f64>() / n;
            assert!(m.abs() < 1e-9);
        }
    }

    #[test]
    fn error_paths() {
        let p = pool();
        let opts = ShiftOptions::default();
        assert!(apply_shift(&p, &ShiftSpec::new([10], 0.1, 0), &opts).is_err());
        assert!(apply_shift(&p, &ShiftSpec::new([], 0.0, 0), &opts).is_err());
        assert!(apply_shift(&p, &ShiftSpec::new([], 0.001, 0), &opts).is_err());
        assert!(apply_shift(&p, &ShiftSpec::new(0..10, 0.5, 0), &opts).is_err());
    }
}

//! Splitting the training set across clients.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{Dataset, LearningError};
use crate::rng::{names, SimRng, Streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    /// Per-client class proportions drawn from a symmetric Dirichlet.
    Dirichlet {
        alpha: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    pub owner: usize,
    /// Indices into the training set this shard was cut from.
    pub source_indices: Vec<usize>,
    pub data: Dataset,
}

impl DatasetShard {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn shard_sizes(n: usize, clients: usize) -> Vec<usize> {
    (0..clients)
        .map(|c| n / clients + usize::from(c < n % clients))
        .collect()
}

fn dirichlet(alpha: f64, k: usize, rng: &mut SimRng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter().map(|g| g / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

/// Integer counts summing to `total`, proportional to `p` (largest remainder).
fn apportion(p: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = p.iter().map(|x| x * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..p.len()).collect();
    rest.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &c in rest.iter().take(total.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

pub fn partition(
    train: &Dataset,
    clients: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<Vec<DatasetShard>, LearningError> {
    if clients == 0 {
        return Err(LearningError::Partition("no clients".into()));
    }
    if train.len() < clients {
        return Err(LearningError::Partition(format!(
            "{} examples cannot cover {clients} clients",
            train.len()
        )));
    }
    let mut rng = Streams::new(seed).rng(names::PARTITION, &[]);
    let sizes = shard_sizes(train.len(), clients);
    let assignments: Vec<Vec<usize>> = match mode {
        PartitionMode::Iid => {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng);
            let mut out = Vec::with_capacity(clients);
            let mut start = 0;
            for s in &sizes {
                out.push(order[start..start + s].to_vec());
                start += s;
            }
            out
        }
        PartitionMode::Dirichlet { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(LearningError::Partition(format!(
                    "Dirichlet alpha {alpha} must be positive"
                )));
            }
            let k = train.n_classes;
            let mut pools: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &y) in train.labels.iter().enumerate() {
                pools[y].push(i);
            }
            for pool in &mut pools {
                pool.shuffle(&mut rng);
            }
            let mut out = Vec::with_capacity(clients);
            for &size in &sizes {
                let p = dirichlet(alpha, k, &mut rng);
                let want = apportion(&p, size);
                let mut mine = Vec::with_capacity(size);
                for (c, &w) in want.iter().enumerate() {
                    let take = w.min(pools[c].len());
                    let at = pools[c].len() - take;
                    mine.extend(pools[c].drain(at..));
                }
                // Shortfall from exhausted classes comes from the fullest pools.
                while mine.len() < size {
                    let c = (0..k)
                        .max_by(|&a, &b| pools[a].len().cmp(&pools[b].len()).then(b.cmp(&a)))
                        .expect("k > 0");
                    mine.push(pools[c].pop().expect("total examples cover all shards"));
                }
                out.push(mine);
            }
            out
        }
    };
    Ok(assignments
        .into_iter()
        .enumerate()
        .map(|(owner, mut idx)| {
            idx.sort_unstable();
            DatasetShard {
                owner,
                data: train.subset(&idx),
                source_indices: idx,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::synthetic;
    use proptest::prelude::*;

    #[test]
    fn iid_even_split() {
        let train = synthetic(1000, 3, 10, 1.0, 0);
        let shards = partition(&train, 10, PartitionMode::Iid, 1).unwrap();
        assert!(shards.iter().all(|s| s.len() == 100));
    }

    #[test]
    fn large_alpha_approaches_global_mix() {
        let train = synthetic(2000, 3, 10, 1.0, 0);
        let shards = partition(&train, 20, PartitionMode::Dirichlet { alpha: 1e6 }, 2).unwrap();
        let global: Vec<f64> = train
            .class_counts()
            .iter()
            .map(|&c| c as f64 / train.len() as f64)
            .collect();
        for s in &shards {
            let tv: f64 = s
                .data
                .class_counts()
                .iter()
                .zip(&global)
                .map(|(&c, g)| (c as f64 / s.len() as f64 - g).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.05, "tv {tv}");
        }
    }

    #[test]
    fn small_alpha_is_skewed() {
        let train = synthetic(2000, 3, 10, 1.0, 0);
        let shards = partition(&train, 20, PartitionMode::Dirichlet { alpha: 0.1 }, 2).unwrap();
        let max_share = shards
            .iter()
            .map(|s| *s.data.class_counts().iter().max().unwrap() as f64 / s.len() as f64)
            .fold(0.0, f64::max);
        assert!(max_share > 0.5);
    }

    #[test]
    fn infeasible_partition() {
        let train = synthetic(5, 2, 2, 1.0, 0);
        assert!(partition(&train, 6, PartitionMode::Iid, 0).is_err());
        assert!(partition(&train, 3, PartitionMode::Dirichlet { alpha: 0.0 }, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn shards_are_disjoint_and_nonempty(
            n in 20usize..300,
            clients in 1usize..20,
            alpha in prop::option::of(0.05f64..50.0),
            seed in any::<u64>(),
        ) {
            let train = synthetic(n, 2, 4, 1.0, 7);
            let mode = alpha.map_or(PartitionMode::Iid, |a| PartitionMode::Dirichlet { alpha: a });
            let shards = partition(&train, clients, mode, seed).unwrap();
            prop_assert_eq!(shards.len(), clients);
            let mut seen = vec![false; n];
            for s in &shards {
                prop_assert!(!s.is_empty());
                for &i in &s.source_indices {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
        }
    }
}

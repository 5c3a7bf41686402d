use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::SplitAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Training nodes split over `M` partitions; every unlabeled node goes to
    /// one extra partition so it keeps all neighbor labels.
    #[default]
    Aps,
    /// All target nodes split over `M` partitions.
    Uniform,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "aps" => Ok(Scheme::Aps),
            "uniform" => Ok(Scheme::Uniform),
            other => Err(format!("unknown partitioning scheme {other}")),
        }
    }
}

/// Disjoint cover of the target nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    scheme: Scheme,
    m: usize,
    seed: u64,
    assignment: Vec<usize>,
}

impl Partitioning {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Number of training partitions `M`.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total partitions, including the dedicated unlabeled one under APS.
    pub fn num_partitions(&self) -> usize {
        match self.scheme {
            Scheme::Aps => self.m + 1,
            Scheme::Uniform => self.m,
        }
    }

    /// Index of the unlabeled partition under APS.
    pub fn unlabeled_partition(&self) -> Option<usize> {
        (self.scheme == Scheme::Aps).then_some(self.m)
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn partition_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    /// Partition mask: `true` for members of partition `i`.
    pub fn mask(&self, i: usize) -> Vec<bool> {
        self.assignment.iter().map(|&p| p == i).collect()
    }

    pub fn members(&self, i: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&v| self.assignment[v] == i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_partitions()];
        for &p in &self.assignment {
            sizes[p] += 1;
        }
        sizes
    }
}

/// Seeded shuffle followed by round-robin slicing, so partition sizes differ
/// by at most one.
pub fn make_partitioning(split: &SplitAssignment, scheme: Scheme, m: usize, seed: u64) -> Result<Partitioning> {
    if m == 0 {
        return Err(Error::Partition("partition count must be at least 1".into()));
    }
    let n_train = split.num_train();
    if n_train == 0 {
        return Err(Error::Partition("no training nodes to partition".into()));
    }
    if m > n_train {
        return Err(Error::Partition(format!(
            "{m} partitions for {n_train} training nodes would leave training partitions empty"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; split.len()];
    let mut pool = match scheme {
        Scheme::Aps => {
            for v in split.unlabeled_nodes() {
                assignment[v] = m;
            }
            split.train_nodes()
        }
        Scheme::Uniform => (0..split.len()).collect(),
    };
    pool.shuffle(&mut rng);
    for (rank, &v) in pool.iter().enumerate() {
        assignment[v] = rank % m;
    }
    Ok(Partitioning {
        scheme,
        m,
        seed,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Split;
    use proptest::prelude::*;

    fn split6() -> SplitAssignment {
        use Split::*;
        SplitAssignment::new(vec![Train, Train, Train, Train, Valid, Test])
    }

    #[test]
    fn aps_two_partitions() {
        let p = make_partitioning(&split6(), Scheme::Aps, 2, 1).unwrap();
        assert_eq!(p.num_partitions(), 3);
        assert_eq!(p.sizes(), vec![2, 2, 2]);
        assert_eq!(p.members(2), vec![4, 5]);
    }

    #[test]
    fn uniform_spreads_everything() {
        let p = make_partitioning(&split6(), Scheme::Uniform, 2, 1).unwrap();
        assert_eq!(p.num_partitions(), 2);
        assert_eq!(p.sizes(), vec![3, 3]);
        assert_eq!(p.unlabeled_partition(), None);
    }

    #[test]
    fn deterministic() {
        let a = make_partitioning(&split6(), Scheme::Aps, 2, 42).unwrap();
        let b = make_partitioning(&split6(), Scheme::Aps, 2, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_partitions() {
        assert!(matches!(
            make_partitioning(&split6(), Scheme::Aps, 5, 0),
            Err(Error::Partition(_))
        ));
        assert!(make_partitioning(&split6(), Scheme::Aps, 0, 0).is_err());
        let none = SplitAssignment::new(vec![Split::Test; 3]);
        assert!(make_partitioning(&none, Scheme::Aps, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn aps_invariants(
            splits in proptest::collection::vec(0u8..3, 1..200),
            m in 1usize..6,
            seed in any::<u64>(),
        ) {
            let splits: Vec<Split> = splits.into_iter().map(|s| match s {
                0 => Split::Train, 1 => Split::Valid, _ => Split::Test,
            }).collect();
            let split = SplitAssignment::new(splits);
            let n_train = split.num_train();
            prop_assume!(n_train >= m);
            let p = make_partitioning(&split, Scheme::Aps, m, seed).unwrap();
            let sizes = p.sizes();
            let (lo, hi) = (n_train / m, n_train.div_ceil(m));
            for &s in &sizes[..m] {
                prop_assert!(s == lo || s == hi);
            }
            prop_assert_eq!(sizes.iter().sum::<usize>(), split.len());
            for v in 0..split.len() {
                prop_assert_eq!(p.partition_of(v) == m, !split.is_train(v));
            }
        }
    }
}

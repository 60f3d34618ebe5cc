use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A seeded permutation of the pool cut into `N` contiguous, near-equal subsets.
/// Subset 0 is the clustered subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    /// Pool positions in shuffled order.
    pub permutation: Vec<u32>,
    /// `N + 1` offsets into `permutation`.
    pub boundaries: Vec<usize>,
    pub seed: u64,
}

impl EpochPlan {
    pub fn n_subsets(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn subset(&self, j: usize) -> &[u32] {
        &self.permutation[self.boundaries[j]..self.boundaries[j + 1]]
    }

    pub fn subset_sizes(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Shuffles `0..pool_len` with `epoch_seed` and cuts it into `n` subsets whose
/// sizes differ by at most one (the first `pool_len % n` get the extra sample).
pub fn epoch_split(pool_len: usize, n: usize, epoch_seed: u64) -> Result<EpochPlan> {
    if n == 0 || n > pool_len {
        return Err(Error::SplitTooLarge { n, pool: pool_len });
    }
    let mut permutation: Vec<u32> = (0..pool_len as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    permutation.shuffle(&mut rng);
    let base = pool_len / n;
    let extra = pool_len % n;
    let mut boundaries = Vec::with_capacity(n + 1);
    boundaries.push(0);
    for j in 0..n {
        let size = base + usize::from(j < extra);
        boundaries.push(boundaries[j] + size);
    }
    Ok(EpochPlan { permutation, boundaries, seed: epoch_seed })
}

/// PK batch: `p` distinct labels without replacement, `i` instances of each.
/// Instances are drawn without replacement when the label has at least `i`
/// members and with replacement otherwise. Returns positions into `labels`.
pub fn pk_sample<L, R>(labels: &[L], p: usize, i: usize, rng: &mut R) -> Result<Vec<usize>>
where
    L: Ord + Clone,
    R: Rng + ?Sized,
{
    let mut groups: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (pos, l) in labels.iter().enumerate() {
        groups.entry(l.clone()).or_default().push(pos);
    }
    if groups.len() < p {
        return Err(Error::TooFewLabels { needed: p, available: groups.len() });
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let chosen = index::sample(rng, groups.len(), p);
    let mut batch = Vec::with_capacity(p * i);
    for g in chosen.iter() {
        let members = &groups[g];
        if members.len() >= i {
            batch.extend(index::sample(rng, members.len(), i).iter().map(|m| members[m]));
        } else {
            batch.extend((0..i).map(|_| members[rng.random_range(0..members.len())]));
        }
    }
    Ok(batch)
}

/// Independent RNG stream for `(tag, epoch)` under a base seed.
pub fn stream_rng(seed: u64, tag: u64, epoch: usize) -> ChaCha8Rng {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (epoch as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

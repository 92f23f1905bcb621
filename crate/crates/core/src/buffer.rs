//! Fixed-capacity FIFO replay buffer with uniform sampling.

use ndarray::Array2;
use rand::Rng;

use crate::approx::Matrix;
use crate::envcore::Transition;
use crate::error::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 200_000;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    /// Slot the next push overwrites once the buffer is full.
    head: usize,
}

/// A mini-batch in matrix form, one row per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub terminated: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Result<Self> {
        let first = ts.first().ok_or_else(|| Error::Precondition("empty batch".into()))?;
        let (sd, ad) = (first.obs.len(), first.action.len());
        let n = ts.len();
        let mut obs = Array2::zeros((n, sd));
        let mut actions = Array2::zeros((n, ad));
        let mut next_obs = Array2::zeros((n, sd));
        for (i, t) in ts.iter().enumerate() {
            if t.obs.len() != sd || t.next_obs.len() != sd || t.action.len() != ad {
                return Err(Error::Dimension {
                    context: "batch transition",
                    expected: sd,
                    got: t.obs.len(),
                });
            }
            obs.row_mut(i).assign(&ndarray::aview1(&t.obs));
            actions.row_mut(i).assign(&ndarray::aview1(&t.action));
            next_obs.row_mut(i).assign(&ndarray::aview1(&t.next_obs));
        }
        Ok(Self {
            obs,
            actions,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_obs,
            terminated: ts.iter().map(|t| t.terminated).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `1 - terminated` per row.
    pub fn not_done(&self) -> Vec<f64> {
        self.terminated.iter().map(|&d| if d { 0.0 } else { 1.0 }).collect()
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Append, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.storage.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::Precondition("batch size must be positive".into()));
        }
        if self.storage.len() < n {
            return Err(Error::Precondition(format!(
                "buffer holds {} transitions, {} requested",
                self.storage.len(),
                n
            )));
        }
        let size = self.storage.len();
        Ok((0..n).map(|_| rng.random_range(0..size)).collect())
    }

    /// `n` independent uniform draws, with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| self.storage[i].clone())
            .collect())
    }

    /// Same draws as [`ReplayBuffer::sample`] for an equal RNG state, in matrix form.
    pub fn sample_batch(&self, n: usize, rng: &mut impl Rng) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        let first = &self.storage[idx[0]];
        let (sd, ad) = (first.obs.len(), first.action.len());
        let mut batch = Batch {
            obs: Array2::zeros((n, sd)),
            actions: Array2::zeros((n, ad)),
            rewards: Vec::with_capacity(n),
            next_obs: Array2::zeros((n, sd)),
            terminated: Vec::with_capacity(n),
        };
        for (row, &i) in idx.iter().enumerate() {
            let t = &self.storage[i];
            batch.obs.row_mut(row).assign(&ndarray::aview1(&t.obs));
            batch.actions.row_mut(row).assign(&ndarray::aview1(&t.action));
            batch.next_obs.row_mut(row).assign(&ndarray::aview1(&t.next_obs));
            batch.rewards.push(t.reward);
            batch.terminated.push(t.terminated);
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(k: usize) -> Transition {
        Transition {
            obs: vec![k as f64],
            action: vec![0.0],
            reward: k as f64,
            next_obs: vec![k as f64 + 1.0],
            terminated: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for k in 0..4 {
            b.push(tr(k));
        }
        let rewards: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![1.0, 2.0, 3.0]);
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn keeps_last_min_k_capacity_in_order() {
        for k in [0, 1, 5, 7, 20] {
            let mut b = ReplayBuffer::new(7).unwrap();
            for i in 0..k {
                b.push(tr(i));
            }
            let got: Vec<f64> = b.iter().map(|t| t.reward).collect();
            let want: Vec<f64> = (k.saturating_sub(7)..k).map(|i| i as f64).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn sampling_returns_only_stored_items() {
        let mut b = ReplayBuffer::new(4).unwrap();
        for k in 0..10 {
            b.push(tr(k));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = &b.sample(1, &mut rng).unwrap()[0];
            assert!((6.0..=9.0).contains(&t.reward));
        }
    }

    #[test]
    fn single_item_sample() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(tr(4));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(b.sample(1, &mut rng).unwrap(), vec![tr(4)]);
    }

    #[test]
    fn underfull_sampling_is_an_error() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(tr(0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample(2, &mut rng), Err(Error::Precondition(_))));
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn batch_and_list_sampling_agree() {
        let mut b = ReplayBuffer::new(50).unwrap();
        for k in 0..30 {
            b.push(tr(k));
        }
        let list = b.sample(16, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let batch = b.sample_batch(16, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(Batch::from_transitions(&list).unwrap(), batch);
    }

    #[test]
    fn uniform_frequencies_within_three_sigma() {
        let size = 10;
        let mut b = ReplayBuffer::new(size).unwrap();
        for k in 0..size {
            b.push(tr(k));
        }
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = vec![0usize; size];
        for _ in 0..draws {
            counts[b.sample(1, &mut rng).unwrap()[0].reward as usize] += 1;
        }
        let p = 1.0 / size as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for c in &counts {
            assert!((*c as f64 - mean).abs() < 3.0 * sigma, "{counts:?}");
            chi2 += (*c as f64 - mean).powi(2) / mean;
        }
        // 9 degrees of freedom: the 0.999 quantile is 27.88
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }
}

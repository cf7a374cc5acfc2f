//! Per-task replay buffers with class-balanced retention and seeded draws.
//! Source samples for every two-sample test layer come from here.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One observation: a raw input vector with its ground-truth task and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub task_id: usize,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, task_id: usize, label: usize) -> Self {
        Self {
            features,
            task_id,
            label,
        }
    }
}

/// Fixed-capacity, class-balanced replay buffers, one per learned task.
#[derive(Debug, Clone)]
pub struct MemoryStore {
    buffers: BTreeMap<usize, Vec<Sample>>,
    capacity_per_task: usize,
    rng: ChaCha8Rng,
}

impl MemoryStore {
    pub fn new(capacity_per_task: usize, seed: u64) -> Self {
        assert!(capacity_per_task >= 1, "capacity must be at least 1");
        Self {
            buffers: BTreeMap::new(),
            capacity_per_task,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity_per_task(&self) -> usize {
        self.capacity_per_task
    }

    /// Task ids with a buffer, ascending.
    pub fn tasks(&self) -> Vec<usize> {
        self.buffers.keys().copied().collect()
    }

    pub fn buffer(&self, task: usize) -> Option<&[Sample]> {
        self.buffers.get(&task).map(Vec::as_slice)
    }

    pub fn buffer_len(&self, task: usize) -> usize {
        self.buffers.get(&task).map_or(0, Vec::len)
    }

    /// Merges `samples` into task `task`'s buffer and re-balances.
    ///
    /// At most `capacity_per_task` samples are retained. Capacity is spread
    /// over the classes present so that retained counts differ by at most
    /// one, except where a class has too few samples, in which case that
    /// class is kept whole and its spare quota goes to the others.
    /// Within a class, survivors are drawn seeded-uniform.
    pub fn store(&mut self, task: usize, samples: &[Sample]) -> Result<()> {
        for s in samples {
            if s.task_id != task {
                return Err(Error::TaskMismatch {
                    expected: task,
                    got: s.task_id,
                });
            }
        }
        let mut pool = self.buffers.remove(&task).unwrap_or_default();
        pool.extend_from_slice(samples);

        let mut by_class: BTreeMap<usize, Vec<Sample>> = BTreeMap::new();
        for s in pool {
            by_class.entry(s.label).or_default().push(s);
        }
        let counts: Vec<(usize, usize)> = by_class.iter().map(|(c, v)| (*c, v.len())).collect();
        let quotas = balanced_quotas(&counts, self.capacity_per_task);

        let mut kept = Vec::with_capacity(self.capacity_per_task);
        for (class, quota) in quotas {
            let members = by_class.remove(&class).unwrap();
            if members.len() <= quota {
                kept.extend(members);
            } else {
                let mut picked: Vec<Sample> = members
                    .choose_multiple(&mut self.rng, quota)
                    .cloned()
                    .collect();
                kept.append(&mut picked);
            }
        }
        self.buffers.insert(task, kept);
        Ok(())
    }

    /// Draws exactly `n` samples from task `task`'s buffer: without
    /// replacement while the buffer is large enough, with replacement
    /// otherwise so the requested quantity is always met.
    pub fn draw(&mut self, task: usize, n: usize) -> Result<Vec<Sample>> {
        let buffer = self
            .buffers
            .get(&task)
            .filter(|b| !b.is_empty())
            .ok_or(Error::EmptyBuffer(task))?;
        if n <= buffer.len() {
            Ok(buffer
                .choose_multiple(&mut self.rng, n)
                .cloned()
                .collect())
        } else {
            Ok((0..n)
                .map(|_| buffer[self.rng.gen_range(0..buffer.len())].clone())
                .collect())
        }
    }

    /// Draws `n` samples spread as evenly as possible over all non-empty
    /// buffers: per-task counts differ by at most one, remainders going to
    /// the lowest task ids.
    pub fn draw_even(&mut self, n: usize) -> Result<Vec<Sample>> {
        let tasks: Vec<usize> = self
            .buffers
            .iter()
            .filter(|(_, b)| !b.is_empty())
            .map(|(t, _)| *t)
            .collect();
        if tasks.is_empty() {
            return Err(Error::EmptyInput("all memory buffers are empty"));
        }
        let base = n / tasks.len();
        let remainder = n % tasks.len();
        let mut out = Vec::with_capacity(n);
        for (i, task) in tasks.iter().enumerate() {
            let quota = base + usize::from(i < remainder);
            if quota > 0 {
                out.extend(self.draw(*task, quota)?);
            }
        }
        Ok(out)
    }
}

/// Splits `capacity` over classes such that granted quotas differ by at
/// most one unless a class is exhausted, in which case its unused share is
/// redistributed. Returns `(class, quota)` pairs.
fn balanced_quotas(counts: &[(usize, usize)], capacity: usize) -> Vec<(usize, usize)> {
    let total: usize = counts.iter().map(|(_, n)| n).sum();
    if total <= capacity {
        return counts.to_vec();
    }
    // Fill scarce classes first; split what remains evenly among the rest.
    let mut order: Vec<(usize, usize)> = counts.to_vec();
    order.sort_by_key(|&(class, n)| (n, class));
    let mut quotas = BTreeMap::new();
    let mut remaining_cap = capacity;
    let mut remaining_classes = order.len();
    for (class, available) in order {
        let fair = remaining_cap / remaining_classes;
        let extra = usize::from(remaining_cap % remaining_classes > 0);
        let share = (fair + extra).min(available);
        quotas.insert(class, share);
        remaining_cap -= share;
        remaining_classes -= 1;
    }
    counts.iter().map(|&(c, _)| (c, quotas[&c])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(task: usize, per_class: &[(usize, usize)]) -> Vec<Sample> {
        let mut out = Vec::new();
        for &(label, count) in per_class {
            for i in 0..count {
                out.push(Sample::new(vec![i as f64, label as f64], task, label));
            }
        }
        out
    }

    fn class_counts(buffer: &[Sample]) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for s in buffer {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn balanced_retention_even_classes() {
        let mut store = MemoryStore::new(20, 1);
        store.store(1, &samples(1, &[(0, 50), (1, 50)])).unwrap();
        let counts = class_counts(store.buffer(1).unwrap());
        assert_eq!(counts[&0], 10);
        assert_eq!(counts[&1], 10);
    }

    #[test]
    fn balanced_retention_with_scarce_minority() {
        let mut store = MemoryStore::new(20, 1);
        store.store(1, &samples(1, &[(0, 90), (1, 10)])).unwrap();
        let counts = class_counts(store.buffer(1).unwrap());
        assert_eq!(counts[&0], 10);
        assert_eq!(counts[&1], 10);
    }

    #[test]
    fn scarce_minority_quota_redistributes() {
        let mut store = MemoryStore::new(20, 1);
        store.store(1, &samples(1, &[(0, 90), (1, 4)])).unwrap();
        let counts = class_counts(store.buffer(1).unwrap());
        assert_eq!(counts[&1], 4);
        assert_eq!(counts[&0], 16);
        assert_eq!(store.buffer_len(1), 20);
    }

    #[test]
    fn underfull_input_is_kept_whole() {
        let mut store = MemoryStore::new(200, 1);
        store.store(1, &samples(1, &[(0, 5), (1, 7)])).unwrap();
        assert_eq!(store.buffer_len(1), 12);
    }

    #[test]
    fn repeated_stores_respect_capacity_and_balance() {
        let mut store = MemoryStore::new(30, 3);
        for _ in 0..4 {
            store.store(2, &samples(2, &[(0, 25), (1, 10), (2, 40)])).unwrap();
        }
        assert!(store.buffer_len(2) <= 30);
        let counts = class_counts(store.buffer(2).unwrap());
        // No class is scarce here, so retained counts must be within one.
        let max = counts.values().max().unwrap();
        let min = counts.values().min().unwrap();
        assert!(max - min <= 1, "unbalanced retention: {counts:?}");
    }

    #[test]
    fn task_mismatch_is_an_error() {
        let mut store = MemoryStore::new(10, 0);
        let s = samples(3, &[(0, 1)]);
        assert!(matches!(
            store.store(2, &s),
            Err(Error::TaskMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn draw_without_replacement_when_large_enough() {
        let mut store = MemoryStore::new(200, 9);
        let pool: Vec<Sample> = (0..200)
            .map(|i| Sample::new(vec![i as f64], 1, i % 2))
            .collect();
        store.store(1, &pool).unwrap();
        let drawn = store.draw(1, 50).unwrap();
        assert_eq!(drawn.len(), 50);
        let mut ids: Vec<i64> = drawn.iter().map(|s| s.features[0] as i64).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 50, "draw must be without replacement");
    }

    #[test]
    fn oversized_draw_falls_back_to_replacement() {
        let mut store = MemoryStore::new(10, 9);
        store.store(1, &samples(1, &[(0, 10)])).unwrap();
        let drawn = store.draw(1, 25).unwrap();
        assert_eq!(drawn.len(), 25);
        assert!(drawn.iter().all(|s| s.task_id == 1));
    }

    #[test]
    fn draw_is_deterministic_under_seed() {
        let build = || {
            let mut store = MemoryStore::new(50, 123);
            store.store(1, &samples(1, &[(0, 30), (1, 30)])).unwrap();
            store
        };
        let a = build().draw(1, 10).unwrap();
        let b = build().draw(1, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_buffer_draw_is_an_error() {
        let mut store = MemoryStore::new(10, 0);
        assert!(matches!(store.draw(4, 3), Err(Error::EmptyBuffer(4))));
        assert!(matches!(store.draw_even(3), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn even_draw_splits_with_remainder_to_lowest_tasks() {
        let mut store = MemoryStore::new(20, 5);
        for task in 1..=4 {
            store.store(task, &samples(task, &[(0, 20)])).unwrap();
        }
        let drawn = store.draw_even(10).unwrap();
        let mut per_task = BTreeMap::new();
        for s in &drawn {
            *per_task.entry(s.task_id).or_insert(0usize) += 1;
        }
        assert_eq!(per_task[&1], 3);
        assert_eq!(per_task[&2], 3);
        assert_eq!(per_task[&3], 2);
        assert_eq!(per_task[&4], 2);
    }

    #[test]
    fn even_draw_single_task_and_exact_split() {
        let mut store = MemoryStore::new(20, 5);
        store.store(1, &samples(1, &[(0, 20)])).unwrap();
        assert_eq!(store.draw_even(7).unwrap().len(), 7);

        let mut store = MemoryStore::new(20, 5);
        for task in 1..=5 {
            store.store(task, &samples(task, &[(0, 20)])).unwrap();
        }
        let drawn = store.draw_even(5).unwrap();
        let tasks: Vec<usize> = drawn.iter().map(|s| s.task_id).collect();
        assert_eq!(tasks, vec![1, 2, 3, 4, 5]);
    }
}

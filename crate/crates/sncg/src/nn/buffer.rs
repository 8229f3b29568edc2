//! Bounded FIFO replay buffer with uniform sampling (with replacement).

use rand::Rng;
use std::collections::VecDeque;

use crate::rng::StreamRng;

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Pushes a record, evicting the oldest one at capacity.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    /// `batch` uniform draws with replacement over the current contents.
    /// Sampling from an empty buffer is a caller error.
    pub fn sample<'a>(&'a self, batch: usize, rng: &mut StreamRng) -> Option<Vec<&'a T>> {
        if self.items.is_empty() {
            return None;
        }
        Some(
            (0..batch)
                .map(|_| &self.items[rng.random_range(0..self.items.len())])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(2);
        buf.push('a');
        buf.push('b');
        buf.push('c');
        assert_eq!(buf.items.iter().collect::<Vec<_>>(), vec![&'b', &'c']);
    }

    #[test]
    fn sample_singleton_repeats() {
        let mut buf = ReplayBuffer::new(4);
        buf.push(42);
        let mut rng = stream_rng(0, Stream::CentralBuffer);
        let s = buf.sample(4, &mut rng).unwrap();
        assert_eq!(s, vec![&42, &42, &42, &42]);
    }

    #[test]
    fn sample_empty_rejected() {
        let buf: ReplayBuffer<u8> = ReplayBuffer::new(4);
        let mut rng = stream_rng(0, Stream::CentralBuffer);
        assert!(buf.sample(1, &mut rng).is_none());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(i);
        }
        let mut rng = stream_rng(1, Stream::CentralBuffer);
        let mut counts = [0usize; 10];
        let draws = 100_000;
        for item in buf.sample(draws, &mut rng).unwrap() {
            counts[*item] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() < 0.003, "freq {freq}");
        }
    }
}

//! Experience replay, constraint replay and the per-generation constraint store.

use std::collections::VecDeque;

use rand::Rng;

use crate::env::Transition;
use crate::error::{Error, Result};

/// Fixed-capacity FIFO store; once full, each push evicts the oldest item.
#[derive(Debug, Clone)]
pub struct Ring<T> {
    capacity: usize,
    items: VecDeque<T>,
    name: &'static str,
}

impl<T> Ring<T> {
    pub fn new(name: &'static str, capacity: usize) -> Self {
        assert!(capacity > 0, "{name} capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            name,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn extend<I: IntoIterator<Item = T>>(&mut self, items: I) {
        for item in items {
            self.push(item);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Draws `k` items uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&T>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer(self.name));
        }
        let n = self.items.len();
        Ok((0..k).map(|_| &self.items[rng.random_range(0..n)]).collect())
    }
}

/// Transitions of every actor, each tagged with its actor's multiplier.
pub type ReplayBuffer = Ring<Transition>;

/// Historical episodic constraint values.
pub type ConstraintBuffer = Ring<f64>;

pub fn replay_buffer(capacity: usize) -> ReplayBuffer {
    Ring::new("replay buffer", capacity)
}

pub fn constraint_buffer(capacity: usize) -> ConstraintBuffer {
    Ring::new("constraint buffer", capacity)
}

/// Episodic constraint values of the current generation only.
#[derive(Debug, Clone, Default)]
pub struct GenerationalConstraintBuffer {
    values: Vec<f64>,
}

impl GenerationalConstraintBuffer {
    pub fn push(&mut self, j_c: f64) {
        self.values.push(j_c);
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.values.is_empty()).then(|| self.values.iter().sum::<f64>() / self.values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(lambda: f64) -> Transition {
        Transition {
            state: vec![0.0],
            action: vec![0.0],
            next_state: vec![0.0],
            reward: 0.0,
            cost: 0.0,
            done: false,
            lambda,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = Ring::new("test", 2);
        b.extend(['a', 'b', 'c']);
        assert_eq!(b.iter().copied().collect::<String>(), "bc");
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn trajectory_push_grows_by_length() {
        let mut b = replay_buffer(100);
        b.extend((0..7).map(|_| transition(0.5)));
        assert_eq!(b.len(), 7);
        b.extend((0..5).map(|_| transition(0.5)));
        assert_eq!(b.len(), 12);
    }

    #[test]
    fn stored_transition_keeps_actor_lambda() {
        let mut b = replay_buffer(4);
        b.push(transition(0.73));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(b.sample(1, &mut rng).unwrap()[0].lambda, 0.73);
    }

    #[test]
    fn single_item_sample() {
        let mut b = constraint_buffer(5);
        b.push(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s: Vec<f64> = b.sample(3, &mut rng).unwrap().into_iter().copied().collect();
        assert_eq!(s, vec![0.3; 3]);
    }

    #[test]
    fn empty_sample_is_error() {
        let b = constraint_buffer(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample(1, &mut rng), Err(Error::EmptyBuffer(_))));
    }

    #[test]
    fn generational_buffer_clears() {
        let mut g = GenerationalConstraintBuffer::default();
        assert_eq!(g.mean(), None);
        g.push(0.2);
        g.push(0.4);
        assert!((g.mean().unwrap() - 0.3).abs() < 1e-15);
        g.clear();
        assert!(g.is_empty());
    }

    proptest::proptest! {
        #[test]
        fn capacity_and_order(capacity in 1usize..20, n in 0usize..60) {
            let mut b = Ring::new("prop", capacity);
            b.extend(0..n);
            proptest::prop_assert!(b.len() <= capacity);
            let expected: Vec<usize> = (n.saturating_sub(capacity)..n).collect();
            proptest::prop_assert_eq!(b.iter().copied().collect::<Vec<_>>(), expected);
        }
    }
}

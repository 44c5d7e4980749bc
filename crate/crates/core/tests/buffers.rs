use ecrl::buffers::{constraint_buffer, GenerationalConstraintBuffer, Ring};
use ecrl::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fifo_eviction_and_capacity() {
    let mut ring = Ring::new("ring", 3);
    for i in 0..7 {
        ring.push(i);
        assert!(ring.len() <= 3);
    }
    assert_eq!(ring.iter().copied().collect::<Vec<_>>(), vec![4, 5, 6]);
}

#[test]
fn sampling_is_uniform_within_five_percent() {
    let mut ring = Ring::new("ring", 10);
    ring.extend(0..10usize);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut counts = [0usize; 10];
    for &i in ring.sample(100_000, &mut rng).unwrap() {
        counts[i] += 1;
    }
    for c in counts {
        let rel = (c as f64 - 10_000.0).abs() / 10_000.0;
        assert!(rel <= 0.05, "{counts:?}");
    }
}

#[test]
fn empty_sample_is_an_error() {
    let buffer = constraint_buffer(5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(buffer.sample(1, &mut rng), Err(Error::EmptyBuffer(_))));
}

#[test]
fn generational_buffer_clears() {
    let mut b = GenerationalConstraintBuffer::default();
    b.push(0.25);
    b.push(0.75);
    assert_eq!(b.mean(), Some(0.5));
    b.clear();
    assert!(b.is_empty());
    assert_eq!(b.mean(), None);
}

use rand::Rng;

use crate::error::{Error, Result};

/// Fixed-capacity ring of transitions with uniform minibatch sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer { capacity, items: Vec::new(), next: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, overwriting the oldest item once full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `n` items drawn uniformly with replacement; the buffer must hold at
    /// least `n` items.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Result<Vec<&T>> {
        if n == 0 {
            return Err(Error::Empty("minibatch"));
        }
        if self.items.len() < n {
            return Err(Error::Contract(format!("buffer holds {} < {n} transitions", self.items.len())));
        }
        Ok((0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_for;

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(i);
        }
        let mut v: Vec<i32> = b.iter().copied().collect();
        v.sort();
        assert_eq!(v, vec![2, 3, 4]);
        assert!(ReplayBuffer::<i32>::new(0).is_err());
    }

    #[test]
    fn sampling_needs_a_full_batch() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(1);
        let mut rng = rng_for(0, &[]);
        assert!(b.sample(&mut rng, 2).is_err());
        assert!(b.sample(&mut rng, 0).is_err());
        assert_eq!(b.sample(&mut rng, 1).unwrap(), vec![&1]);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(100).unwrap();
        for i in 0..100usize {
            b.push(i);
        }
        let mut rng = rng_for(3, &[]);
        let mut counts = [0u32; 100];
        for _ in 0..1000 {
            for &&i in &b.sample(&mut rng, 100).unwrap() {
                counts[i] += 1;
            }
        }
        // 10⁵ draws, 1000 expected per item. χ² with 99 degrees of freedom
        // exceeds 148.2 with probability 0.001.
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 1000.0).powi(2) / 1000.0).sum();
        assert!(chi2 < 148.2, "χ² = {chi2}");
        assert!(counts.iter().all(|&c| (850..=1150).contains(&c)), "{counts:?}");
    }
}

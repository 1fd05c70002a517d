//! Uniform experience replay.

use crate::env::ObsVec;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Experience {
    pub obs: ObsVec,
    pub action: u8,
    pub reward: f64,
    pub next_obs: ObsVec,
    pub done: bool,
}

/// Fixed-capacity ring buffer of transitions.
pub struct Replay {
    buf: Vec<Experience>,
    capacity: usize,
    next: usize,
}

impl Replay {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Replay { buf: Vec::with_capacity(capacity.min(1 << 16)), capacity, next: 0 }
    }

    pub fn push(&mut self, e: Experience) {
        if self.buf.len() < self.capacity {
            self.buf.push(e);
        } else {
            self.buf[self.next] = e;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn sample<'a>(&'a self, rng: &mut impl Rng, batch: usize) -> Vec<&'a Experience> {
        (0..batch).map(|_| &self.buf[rng.gen_range(0..self.buf.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::rc::Rc;

    fn exp(tag: f64) -> Experience {
        Experience {
            obs: Rc::new(vec![tag]),
            action: 0,
            reward: tag,
            next_obs: Rc::new(vec![tag]),
            done: false,
        }
    }

    #[test]
    fn wraps_at_capacity() {
        let mut r = Replay::new(3);
        for i in 0..5 {
            r.push(exp(i as f64));
        }
        assert_eq!(r.len(), 3);
        let rewards: Vec<f64> = r.buf.iter().map(|e| e.reward).collect();
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn samples_only_stored_items() {
        let mut r = Replay::new(8);
        for i in 0..4 {
            r.push(exp(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for e in r.sample(&mut rng, 64) {
            assert!(e.reward < 4.0);
        }
    }
}

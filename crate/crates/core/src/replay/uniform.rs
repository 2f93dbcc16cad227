use std::collections::VecDeque;

use rand::Rng;

use super::ReplayError;

/// FIFO replay with uniform sampling. Protected items share the capacity but are never
/// evicted.
#[derive(Clone, Debug)]
pub struct UniformBuffer<T> {
    capacity: usize,
    protected: Vec<(u64, T)>,
    ring: VecDeque<(u64, T)>,
    next_id: u64,
}

impl<T: Clone> UniformBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self { capacity, protected: Vec::new(), ring: VecDeque::new(), next_id: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.protected.len() + self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn protected_len(&self) -> usize {
        self.protected.len()
    }

    fn make_room(&mut self) -> Result<Option<u64>, ReplayError> {
        if self.len() < self.capacity {
            return Ok(None);
        }
        match self.ring.pop_front() {
            Some((id, _)) => Ok(Some(id)),
            None => Err(ReplayError::ProtectedFull),
        }
    }

    /// Appends, evicting the oldest unprotected item when full. Returns the new id and
    /// the evicted one.
    pub fn insert(&mut self, item: T) -> Result<(u64, Option<u64>), ReplayError> {
        let evicted = self.make_room()?;
        let id = self.next_id;
        self.next_id += 1;
        self.ring.push_back((id, item));
        Ok((id, evicted))
    }

    pub fn insert_protected(&mut self, item: T) -> Result<(u64, Option<u64>), ReplayError> {
        let evicted = self.make_room()?;
        let id = self.next_id;
        self.next_id += 1;
        self.protected.push((id, item));
        Ok((id, evicted))
    }

    fn at(&self, i: usize) -> &(u64, T) {
        if i < self.protected.len() {
            &self.protected[i]
        } else {
            &self.ring[i - self.protected.len()]
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<(u64, T)>, ReplayError> {
        let n = self.len();
        if n == 0 {
            return Err(ReplayError::Empty);
        }
        Ok((0..batch).map(|_| self.at(rng.random_range(0..n)).clone()).collect())
    }

    /// Ids in storage order: protected first, then oldest to newest.
    pub fn ids(&self) -> Vec<u64> {
        self.protected.iter().chain(self.ring.iter()).map(|e| e.0).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u64, T)> {
        self.protected.iter().chain(self.ring.iter())
    }
}

use std::collections::HashMap;

use rand::Rng;

use super::tree::PriorityTree;
use super::{ReplayError, PRIORITY_FLOOR};

#[derive(Clone, Debug)]
struct Entry<T> {
    id: u64,
    seq: u64,
    priority: f64,
    item: T,
}

/// What happened to an insert into a full prioritized buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Stored { id: u64 },
    /// Stored after evicting the lowest-priority item.
    Replaced { id: u64, evicted: u64 },
    /// The new item had the lowest priority and was dropped immediately.
    Dropped { id: u64 },
}

impl InsertOutcome {
    pub fn id(&self) -> u64 {
        match *self {
            Self::Stored { id } | Self::Replaced { id, .. } | Self::Dropped { id } => id,
        }
    }
}

/// Proportional-priority replay with lowest-priority eviction.
///
/// Under eviction pressure the retained set is exactly the `capacity` highest-priority
/// items, with ties resolved in favour of the newer insert.
#[derive(Clone, Debug)]
pub struct PrioritizedBuffer<T> {
    capacity: usize,
    slots: Vec<Entry<T>>,
    tree: PriorityTree,
    index: HashMap<u64, usize>,
    next_id: u64,
    next_seq: u64,
}

fn check_priority(p: f64) -> Result<f64, ReplayError> {
    if p.is_finite() && p > 0.0 {
        Ok(p)
    } else {
        Err(ReplayError::InvalidPriority(p))
    }
}

impl<T: Clone> PrioritizedBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            slots: Vec::with_capacity(capacity.min(1 << 16)),
            tree: PriorityTree::new(capacity),
            index: HashMap::new(),
            next_id: 0,
            next_seq: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn total_priority(&self) -> f64 {
        self.tree.total()
    }

    /// Largest live priority, or 1 when empty.
    pub fn max_priority(&self) -> f64 {
        if self.is_empty() {
            1.0
        } else {
            self.tree.max()
        }
    }

    /// Inserts with an explicit priority, or the current maximum when `None`.
    pub fn insert(&mut self, item: T, priority: Option<f64>) -> Result<InsertOutcome, ReplayError> {
        let priority = match priority {
            Some(p) => check_priority(p)?,
            None => self.max_priority(),
        };
        let id = self.next_id;
        self.next_id += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        let entry = Entry { id, seq, priority, item };

        if self.slots.len() < self.capacity {
            let slot = self.slots.len();
            self.tree.set(slot, Some((priority, seq)));
            self.index.insert(id, slot);
            self.slots.push(entry);
            return Ok(InsertOutcome::Stored { id });
        }
        let slot = self.tree.min_slot().expect("full buffer has a minimum");
        if priority < self.slots[slot].priority {
            return Ok(InsertOutcome::Dropped { id });
        }
        let evicted = self.slots[slot].id;
        self.index.remove(&evicted);
        self.index.insert(id, slot);
        self.tree.set(slot, Some((priority, seq)));
        self.slots[slot] = entry;
        Ok(InsertOutcome::Replaced { id, evicted })
    }

    /// Independent draws with probability proportional to priority, with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<(u64, T)>, ReplayError> {
        if self.is_empty() {
            return Err(ReplayError::Empty);
        }
        let total = self.tree.total();
        Ok((0..batch)
            .map(|_| {
                let slot = self.tree.find(rng.random::<f64>() * total);
                let e = &self.slots[slot];
                (e.id, e.item.clone())
            })
            .collect())
    }

    /// Draws ignoring priorities.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<(u64, T)>, ReplayError> {
        if self.is_empty() {
            return Err(ReplayError::Empty);
        }
        Ok((0..batch)
            .map(|_| {
                let e = &self.slots[rng.random_range(0..self.slots.len())];
                (e.id, e.item.clone())
            })
            .collect())
    }

    /// Unknown (evicted) ids are skipped; non-positive or non-finite priorities are
    /// raised to [`PRIORITY_FLOOR`]. Returns how many ids were live.
    pub fn update_priorities(&mut self, ids: &[u64], priorities: &[f64]) -> Result<usize, ReplayError> {
        if ids.len() != priorities.len() {
            return Err(ReplayError::LengthMismatch(ids.len(), priorities.len()));
        }
        let mut live = 0;
        for (id, &p) in ids.iter().zip(priorities) {
            let Some(&slot) = self.index.get(id) else { continue };
            let p = if p.is_finite() { p.max(PRIORITY_FLOOR) } else { PRIORITY_FLOOR };
            let e = &mut self.slots[slot];
            e.priority = p;
            self.tree.set(slot, Some((p, e.seq)));
            live += 1;
        }
        Ok(live)
    }

    pub fn priority(&self, id: u64) -> Option<f64> {
        self.index.get(&id).map(|&s| self.slots[s].priority)
    }

    pub fn get(&self, id: u64) -> Option<&T> {
        self.index.get(&id).map(|&s| &self.slots[s].item)
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    pub fn priorities(&self) -> Vec<f64> {
        self.slots.iter().map(|e| e.priority).collect()
    }

    /// Live `(id, priority, item)` triples ordered by id.
    pub fn entries(&self) -> Vec<(u64, f64, &T)> {
        let mut out: Vec<_> = self.slots.iter().map(|e| (e.id, e.priority, &e.item)).collect();
        out.sort_by_key(|e| e.0);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn insert_into_empty() {
        let mut b = PrioritizedBuffer::new(4).unwrap();
        assert_eq!(b.insert('a', Some(2.0)).unwrap(), InsertOutcome::Stored { id: 0 });
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn full_buffer_evicts_minimum() {
        let mut b = PrioritizedBuffer::new(2).unwrap();
        b.insert(5, Some(5.0)).unwrap();
        b.insert(1, Some(1.0)).unwrap();
        assert_eq!(b.insert(3, Some(3.0)).unwrap(), InsertOutcome::Replaced { id: 2, evicted: 1 });
        let mut held = b.priorities();
        held.sort_by(f64::total_cmp);
        assert_eq!(held, vec![3.0, 5.0]);
        assert_eq!(b.insert(0, Some(0.5)).unwrap(), InsertOutcome::Dropped { id: 3 });
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn ties_evict_the_older_item() {
        let mut b = PrioritizedBuffer::new(2).unwrap();
        b.insert('a', Some(1.0)).unwrap();
        b.insert('b', Some(1.0)).unwrap();
        b.insert('c', Some(1.0)).unwrap();
        assert!(!b.contains(0));
        assert!(b.contains(1) && b.contains(2));
    }

    #[test]
    fn non_positive_priority_rejected() {
        let mut b = PrioritizedBuffer::new(2).unwrap();
        assert_eq!(b.insert((), Some(0.0)), Err(ReplayError::InvalidPriority(0.0)));
        assert!(b.insert((), Some(f64::NAN)).is_err());
        assert!(b.insert((), Some(-1.0)).is_err());
    }

    #[test]
    fn default_priority_is_current_max() {
        let mut b = PrioritizedBuffer::new(4).unwrap();
        b.insert(0, None).unwrap();
        assert_eq!(b.priority(0), Some(1.0));
        b.insert(1, Some(7.0)).unwrap();
        b.insert(2, None).unwrap();
        assert_eq!(b.priority(2), Some(7.0));
    }

    #[test]
    fn single_item_batch_repeats_it() {
        let mut b = PrioritizedBuffer::new(3).unwrap();
        b.insert("only", Some(0.3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = b.sample(5, &mut rng).unwrap();
        assert!(batch.iter().all(|(id, v)| *id == 0 && *v == "only"));
        let empty = PrioritizedBuffer::<u8>::new(3).unwrap();
        assert_eq!(empty.sample(1, &mut rng), Err(ReplayError::Empty));
    }

    #[test]
    fn updates_skip_evicted_and_floor_bad_values() {
        let mut b = PrioritizedBuffer::new(2).unwrap();
        b.insert(0, Some(1.0)).unwrap();
        b.insert(1, Some(2.0)).unwrap();
        b.insert(2, Some(3.0)).unwrap();
        assert_eq!(b.update_priorities(&[0, 1, 2], &[9.0, -4.0, f64::NAN]).unwrap(), 2);
        assert_eq!(b.priority(1), Some(PRIORITY_FLOOR));
        assert_eq!(b.priority(2), Some(PRIORITY_FLOOR));
        assert!(b.update_priorities(&[1], &[]).is_err());
    }

    #[test]
    fn dominant_priority_wins_nearly_every_draw() {
        let mut b = PrioritizedBuffer::new(10).unwrap();
        for i in 0..10 {
            b.insert(i, Some(1.0)).unwrap();
        }
        let ids: Vec<u64> = (0..10).collect();
        let mut ps = vec![1e-6; 10];
        ps[4] = 1e6;
        b.update_priorities(&ids, &ps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hits = b.sample(10_000, &mut rng).unwrap().iter().filter(|(id, _)| *id == 4).count();
        assert!(hits as f64 > 0.99 * 10_000.0);
    }
}

/// Complete binary tree over a fixed number of leaves holding, per node, the sum and
/// maximum of leaf priorities and the minimum `(priority, seq)` key. Parents are
/// recomputed from their children on every update, so the root sum never accumulates
/// incremental rounding drift.
#[derive(Clone, Debug)]
pub(crate) struct PriorityTree {
    leaves: usize,
    sum: Vec<f64>,
    max: Vec<f64>,
    min: Vec<(f64, u64)>,
}

const EMPTY_MIN: (f64, u64) = (f64::INFINITY, u64::MAX);

fn min_key(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

impl PriorityTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            sum: vec![0.0; 2 * leaves],
            max: vec![0.0; 2 * leaves],
            min: vec![EMPTY_MIN; 2 * leaves],
        }
    }

    /// Sets leaf `slot`; `None` marks it empty.
    pub fn set(&mut self, slot: usize, value: Option<(f64, u64)>) {
        let mut node = self.leaves + slot;
        match value {
            Some((p, seq)) => {
                self.sum[node] = p;
                self.max[node] = p;
                self.min[node] = (p, seq);
            }
            None => {
                self.sum[node] = 0.0;
                self.max[node] = 0.0;
                self.min[node] = EMPTY_MIN;
            }
        }
        while node > 1 {
            node /= 2;
            let (l, r) = (2 * node, 2 * node + 1);
            self.sum[node] = self.sum[l] + self.sum[r];
            self.max[node] = self.max[l].max(self.max[r]);
            self.min[node] = min_key(self.min[l], self.min[r]);
        }
    }

    pub fn total(&self) -> f64 {
        self.sum[1]
    }

    pub fn max(&self) -> f64 {
        self.max[1]
    }

    /// Slot holding the smallest priority, oldest first among ties.
    pub fn min_slot(&self) -> Option<usize> {
        if self.min[1] == EMPTY_MIN {
            return None;
        }
        let mut node = 1;
        while node < self.leaves {
            node = if self.min[2 * node] == self.min[node] { 2 * node } else { 2 * node + 1 };
        }
        Some(node - self.leaves)
    }

    #[cfg(test)]
    pub fn min_key(&self) -> Option<(f64, u64)> {
        (self.min[1] != EMPTY_MIN).then_some(self.min[1])
    }

    /// Leaf whose cumulative priority interval contains `mass`, for `mass` in `[0, total)`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let (l, r) = (2 * node, 2 * node + 1);
            if mass < self.sum[l] || self.sum[r] == 0.0 {
                node = l;
            } else {
                mass -= self.sum[l];
                node = r;
            }
        }
        node - self.leaves
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn find_walks_cumulative_intervals() {
        let mut t = PriorityTree::new(4);
        for (i, p) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            t.set(i, Some((p, i as u64)));
        }
        assert_eq!(t.total(), 10.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 1);
        assert_eq!(t.find(5.5), 2);
        assert_eq!(t.find(9.99), 3);
        assert_eq!(t.max(), 4.0);
    }

    #[test]
    fn min_prefers_older_on_ties() {
        let mut t = PriorityTree::new(3);
        t.set(0, Some((2.0, 5)));
        t.set(1, Some((1.0, 9)));
        t.set(2, Some((1.0, 7)));
        assert_eq!(t.min_slot(), Some(2));
        t.set(2, None);
        assert_eq!(t.min_slot(), Some(1));
        assert_eq!(t.min_key(), Some((1.0, 9)));
    }

    #[test]
    fn empty_tree_has_no_min() {
        let t = PriorityTree::new(5);
        assert_eq!(t.min_slot(), None);
        assert_eq!(t.total(), 0.0);
    }
}

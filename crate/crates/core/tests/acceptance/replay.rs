use std::collections::VecDeque;

use metamimic::replay::{InsertOutcome, PrioritizedBuffer, UniformBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::Verdict;

const DRAWS: usize = 100_000;
const OPS: usize = 1_000_000;

fn chi_square() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut buf = PrioritizedBuffer::new(50).unwrap();
    let mut priorities = Vec::new();
    for i in 0..50 {
        let p = rng.random_range(0.05..5.0);
        priorities.push(p);
        assert_eq!(buf.insert(i, Some(p)).unwrap().id(), i as u64);
    }
    let mut counts = [0usize; 50];
    for (_, item) in buf.sample(DRAWS, &mut rng).unwrap() {
        counts[item] += 1;
    }
    let total: f64 = priorities.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(&priorities)
        .map(|(&c, p)| {
            let e = DRAWS as f64 * p / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(49.0).unwrap().cdf(stat);
    (p_value > 0.01, format!("chi2 {stat:.1} on 49 dof, p = {p_value:.3}"))
}

/// Reference model: linear scans over (id, insertion order, priority).
struct NaivePrioritized {
    capacity: usize,
    items: Vec<(u64, u64, f64)>,
    next: u64,
}

impl NaivePrioritized {
    fn max(&self) -> f64 {
        if self.items.is_empty() {
            return 1.0;
        }
        self.items.iter().map(|e| e.2).fold(f64::NEG_INFINITY, f64::max)
    }

    fn insert(&mut self, p: Option<f64>) -> InsertOutcome {
        let p = p.unwrap_or_else(|| self.max());
        let id = self.next;
        self.next += 1;
        if self.items.len() < self.capacity {
            self.items.push((id, id, p));
            return InsertOutcome::Stored { id };
        }
        let (pos, min) = self.items.iter().enumerate().min_by(|a, b| a.1 .2.total_cmp(&b.1 .2).then(a.1 .1.cmp(&b.1 .1))).map(|(i, e)| (i, *e)).unwrap();
        if p < min.2 {
            return InsertOutcome::Dropped { id };
        }
        self.items[pos] = (id, id, p);
        InsertOutcome::Replaced { id, evicted: min.0 }
    }
}

fn prioritized_invariants(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let capacity = 97;
    let mut buf = PrioritizedBuffer::new(capacity).unwrap();
    let mut model = NaivePrioritized { capacity, items: Vec::new(), next: 0 };
    let mut worst_drift: f64 = 0.0;
    for op in 0..OPS {
        match rng.random_range(0..10) {
            0..=4 => {
                let p = if rng.random_bool(0.2) { None } else { Some(rng.random_range(1e-3..10.0)) };
                let got = buf.insert(op, p).unwrap();
                let want = model.insert(p);
                if got != want {
                    return Err(format!("op {op}: insert gave {got:?}, model {want:?}"));
                }
            }
            5..=8 => {
                let k = rng.random_range(1..5);
                let hi = model.next.max(1);
                let ids: Vec<u64> = (0..k).map(|_| rng.random_range(hi.saturating_sub(300)..hi)).collect();
                let ps: Vec<f64> = (0..k).map(|_| rng.random_range(1e-3..10.0)).collect();
                buf.update_priorities(&ids, &ps).unwrap();
                for (id, p) in ids.iter().zip(&ps) {
                    if let Some(e) = model.items.iter_mut().find(|e| e.0 == *id) {
                        e.2 = *p;
                    }
                }
            }
            _ => {
                if !model.items.is_empty() {
                    for (id, _) in buf.sample(4, rng).unwrap() {
                        if !model.items.iter().any(|e| e.0 == id) {
                            return Err(format!("op {op}: sampled evicted id {id}"));
                        }
                    }
                }
            }
        }
        let exact: f64 = model.items.iter().map(|e| e.2).sum();
        let drift = (buf.total_priority() - exact).abs() / exact.max(1e-12);
        worst_drift = worst_drift.max(drift);
        if drift > 1e-6 {
            return Err(format!("op {op}: sum drift {drift:.2e}"));
        }
        if op % 997 == 0 {
            let mut got: Vec<(u64, f64)> = buf.entries().into_iter().map(|(id, p, _)| (id, p)).collect();
            let mut want: Vec<(u64, f64)> = model.items.iter().map(|e| (e.0, e.2)).collect();
            got.sort_by_key(|e| e.0);
            want.sort_by_key(|e| e.0);
            if got != want {
                return Err(format!("op {op}: contents differ from the model"));
            }
        }
    }
    Ok(worst_drift)
}

fn fifo_invariants(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let capacity = 64;
    let mut buf = UniformBuffer::new(capacity).unwrap();
    let mut ring: VecDeque<u64> = VecDeque::new();
    let mut protected: Vec<u64> = Vec::new();
    let mut next = 0u64;
    for op in 0..OPS {
        match rng.random_range(0..100) {
            0 if protected.len() + 1 < capacity => {
                let (id, evicted) = buf.insert_protected(op).unwrap();
                let want = if protected.len() + ring.len() == capacity { ring.pop_front() } else { None };
                protected.push(next);
                if (id, evicted) != (next, want) {
                    return Err(format!("op {op}: protected insert gave {:?}", (id, evicted)));
                }
                next += 1;
            }
            1..=79 => {
                let (id, evicted) = buf.insert(op).unwrap();
                let want = if protected.len() + ring.len() == capacity { ring.pop_front() } else { None };
                ring.push_back(next);
                if (id, evicted) != (next, want) {
                    return Err(format!("op {op}: insert gave {:?}, expected {:?}", (id, evicted), (next, want)));
                }
                next += 1;
            }
            _ => {
                if !buf.is_empty() {
                    for (id, _) in buf.sample(2, rng).unwrap() {
                        if !ring.contains(&id) && !protected.contains(&id) {
                            return Err(format!("op {op}: sampled evicted id {id}"));
                        }
                    }
                }
            }
        }
        if buf.len() > capacity {
            return Err(format!("op {op}: length {} above capacity", buf.len()));
        }
        if op % 1009 == 0 {
            let want: Vec<u64> = protected.iter().chain(ring.iter()).copied().collect();
            if buf.ids() != want {
                return Err(format!("op {op}: FIFO order differs from the model"));
            }
        }
    }
    Ok(())
}

pub fn run() -> Verdict {
    let started = std::time::Instant::now();
    let (chi_ok, chi) = chi_square();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let prio = prioritized_invariants(&mut rng);
    let fifo = fifo_invariants(&mut rng);
    let secs = started.elapsed().as_secs_f64();
    let pass = chi_ok && prio.is_ok() && fifo.is_ok() && secs < 120.0;
    let prio_text = match &prio {
        Ok(d) => format!("min-eviction model agrees over {OPS} ops, max sum drift {d:.1e}"),
        Err(e) => format!("prioritized: {e}"),
    };
    let fifo_text = match &fifo {
        Ok(()) => format!("FIFO model agrees over {OPS} ops"),
        Err(e) => format!("fifo: {e}"),
    };
    Verdict::new(pass, format!("{chi}; {prio_text}; {fifo_text}; {secs:.1}s (limit 120s)"))
}

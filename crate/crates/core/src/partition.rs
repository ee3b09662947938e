//! Time-domain partition into sub-intervals, each of which gets its own
//! reduced model.
//!
//! Intervals are half-open `[b_j, b_{j+1})` except the last, which also
//! contains the end point. [`auto_partition`] places the cuts on snapshot
//! instants so that the rank-`n_probe` POD tail energy of every interval is
//! of the same order.

use std::cell::RefCell;
use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::dataset::{SnapshotSet, TimeWindow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    boundaries: Vec<f64>,
}

impl TimePartition {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidArgument("a partition needs at least two boundaries".into()));
        }
        if boundaries.iter().any(|b| !b.is_finite()) || boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(format!(
                "partition boundaries {boundaries:?} must be finite and strictly increasing"
            )));
        }
        Ok(Self { boundaries })
    }

    pub fn single(start: f64, end: f64) -> Result<Self> {
        Self::new(vec![start, end])
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn n_intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn end(&self) -> f64 {
        *self.boundaries.last().expect("at least two boundaries")
    }

    pub fn window(&self, j: usize) -> TimeWindow {
        let w = TimeWindow::half_open(self.boundaries[j], self.boundaries[j + 1]);
        if j + 1 == self.n_intervals() {
            TimeWindow { right_closed: true, ..w }
        } else {
            w
        }
    }

    /// Zero-based index of the interval holding `t`.
    pub fn locate_interval(&self, t: f64) -> Result<usize> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::OutOfRange {
                t,
                t_min: self.start(),
                t_max: self.end(),
            });
        }
        // number of interior boundaries <= t
        let j = self.boundaries[1..self.boundaries.len() - 1].partition_point(|&b| b <= t);
        Ok(j)
    }
}

/// Rank-`n_probe` tail energies of time blocks, evaluated from a cached Gram
/// matrix of all snapshots.
struct BlockTails<'a> {
    set: &'a SnapshotSet,
    gram: DMatrix<f64>,
    n_probe: usize,
    cache: RefCell<HashMap<(usize, usize), f64>>,
}

impl<'a> BlockTails<'a> {
    fn new(set: &'a SnapshotSet, n_probe: usize) -> Self {
        let s = set.states();
        Self {
            set,
            gram: s.tr_mul(s),
            n_probe,
            cache: RefCell::new(HashMap::new()),
        }
    }

    /// Tail energy of time indices `a..b` over all parameters.
    fn tail(&self, a: usize, b: usize) -> f64 {
        if let Some(&v) = self.cache.borrow().get(&(a, b)) {
            return v;
        }
        let cols: Vec<usize> = (0..self.set.n_params())
            .flat_map(|k| (a..b).map(move |t| (k, t)))
            .map(|(k, t)| self.set.column_index(k, t))
            .collect();
        let m = cols.len();
        let sub = DMatrix::from_fn(m, m, |r, c| self.gram[(cols[r], cols[c])]);
        let trace = sub.trace();
        let mut eig: Vec<f64> = sub.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|x, y| y.total_cmp(x));
        let head: f64 = eig.iter().take(self.n_probe).map(|l| l.max(0.0)).sum();
        // differences at round-off level of the trace are zero tails
        let tail = if trace - head <= 1e-11 * trace { 0.0 } else { trace - head };
        self.cache.borrow_mut().insert((a, b), tail);
        tail
    }

    /// Greedy sweep: grow each block while its tail stays within `tau`.
    /// Returns block start indices, or `None` once more than `max_blocks` are
    /// needed.
    fn greedy(&self, tau: f64, max_blocks: usize) -> Option<Vec<usize>> {
        let n_t = self.set.n_times();
        let mut starts = Vec::new();
        let mut a = 0;
        while a < n_t {
            if starts.len() == max_blocks {
                return None;
            }
            starts.push(a);
            // largest b in (a, n_t] with tail(a, b) <= tau; at least a + 1
            let (mut lo, mut hi) = (a + 1, n_t);
            while lo < hi {
                let mid = (lo + hi + 1) / 2;
                if self.tail(a, mid) <= tau {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            a = lo;
        }
        Some(starts)
    }
}

/// Cuts (block start indices, first is 0) adjusted so there are exactly `j`
/// blocks, every block is non-empty and the last holds at least two instants.
fn repair_cuts(mut starts: Vec<usize>, j: usize, n_t: usize, tails: &BlockTails<'_>) -> Vec<usize> {
    // split the block with the largest tail until there are j of them
    while starts.len() < j {
        let ends: Vec<usize> = starts.iter().skip(1).copied().chain([n_t]).collect();
        let (best, _) = starts
            .iter()
            .zip(&ends)
            .enumerate()
            .filter(|(_, (a, b))| **b - **a >= 2)
            .map(|(k, (a, b))| (k, tails.tail(*a, *b)))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX {
            break;
        }
        let (a, b) = (starts[best], ends[best]);
        starts.insert(best + 1, a + (b - a) / 2);
    }
    // last block needs two instants so the final boundary is a distinct time
    if let Some(last) = starts.last_mut() {
        if *last > 0 && *last > n_t - 2 {
            *last = n_t - 2;
        }
    }
    for k in (1..starts.len()).rev() {
        if k + 1 < starts.len() && starts[k] >= starts[k + 1] {
            starts[k] = starts[k + 1] - 1;
        }
    }
    for k in 1..starts.len() {
        if starts[k] <= starts[k - 1] {
            starts[k] = starts[k - 1] + 1;
        }
    }
    starts
}

fn partition_from_cuts(set: &SnapshotSet, starts: &[usize]) -> Result<TimePartition> {
    let times = set.times();
    let mut b: Vec<f64> = starts.iter().map(|&s| times[s]).collect();
    b.push(*times.last().expect("non-empty times"));
    TimePartition::new(b)
}

/// Choose `j` intervals whose rank-`n_probe` projection tail energies are
/// balanced.
///
/// The sweep accumulates consecutive instants into the current interval until
/// its tail energy would exceed a threshold `tau`, then cuts. `tau` is
/// bisected down to the smallest value that still needs at most `j`
/// intervals, which minimises the largest interval tail. If every tail is zero
/// the instants are split into equal counts.
pub fn auto_partition(set: &SnapshotSet, j: usize, n_probe: usize) -> Result<TimePartition> {
    let n_t = set.n_times();
    if j == 0 {
        return Err(Error::InvalidArgument("need at least one interval".into()));
    }
    if n_t < 2 || j > n_t - 1 {
        return Err(Error::InvalidArgument(format!(
            "{j} intervals requested but only {n_t} distinct time instants"
        )));
    }
    if j == 1 {
        return TimePartition::single(set.times()[0], set.times()[n_t - 1]);
    }
    let tails = BlockTails::new(set, n_probe);
    let total = tails.tail(0, n_t);

    let starts = if total <= 0.0 {
        (0..j).map(|k| k * n_t / j).collect()
    } else {
        let (mut lo, mut hi) = (0.0, total);
        let mut best = tails.greedy(hi, j).expect("one block always fits");
        for _ in 0..200 {
            if hi - lo <= 1e-12 * total {
                break;
            }
            let mid = 0.5 * (lo + hi);
            match tails.greedy(mid, j) {
                Some(s) => {
                    hi = mid;
                    best = s;
                }
                None => lo = mid,
            }
        }
        best
    };
    let starts = repair_cuts(starts, j, n_t, &tails);
    partition_from_cuts(set, &starts)
}

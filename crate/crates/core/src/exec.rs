//! Ordered parallel accumulation.

use std::ops::Range;

use rayon::prelude::*;

/// How accumulations over many items are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Exec {
    /// Run every accumulation as one serial pass in index order, making the
    /// floating-point summation order independent of the worker count.
    pub deterministic: bool,
}

impl Exec {
    pub const SERIAL: Exec = Exec { deterministic: true };
    pub const PARALLEL: Exec = Exec { deterministic: false };

    /// Accumulates `add(acc, k)` for `k in 0..n`. In parallel mode each
    /// worker fills its own buffer over a contiguous index range and the
    /// buffers are merged in range order.
    pub(crate) fn accumulate<A, M, F, G>(&self, n: usize, make: M, add: F, merge: G) -> A
    where
        A: Send,
        M: Fn() -> A + Sync,
        F: Fn(&mut A, usize) + Sync,
        G: Fn(&mut A, A),
    {
        let workers = rayon::current_num_threads();
        if self.deterministic || workers == 1 || n < 2 * workers {
            let mut acc = make();
            for k in 0..n {
                add(&mut acc, k);
            }
            return acc;
        }
        let ranges: Vec<Range<usize>> = (0..workers)
            .map(|w| (w * n / workers)..((w + 1) * n / workers))
            .collect();
        let parts: Vec<A> = ranges
            .into_par_iter()
            .map(|range| {
                let mut acc = make();
                for k in range {
                    add(&mut acc, k);
                }
                acc
            })
            .collect();
        let mut iter = parts.into_iter();
        let mut acc = iter.next().unwrap_or_else(&make);
        for part in iter {
            merge(&mut acc, part);
        }
        acc
    }

    /// Maps `f` over `0..n`, preserving order.
    pub(crate) fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.deterministic {
            (0..n).map(f).collect()
        } else {
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_and_parallel_sums_agree() {
        let sum = |exec: Exec| exec.accumulate(10_000, || 0u64, |a, k| *a += k as u64, |a, b| *a += b);
        assert_eq!(sum(Exec::SERIAL), sum(Exec::PARALLEL));
        assert_eq!(sum(Exec::SERIAL), 49_995_000);
    }
}

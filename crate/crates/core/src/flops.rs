//! Thread-local floating point operation counters.
//!
//! Every dense kernel in [`crate::linalg`] adds its nominal real-flop count
//! to the counter of the calling thread. Workers (threads) therefore count
//! only their own work, which is what the partition workload accounting in
//! [`crate::dist`] relies on.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub fn add(n: u64) {
    FLOPS.with(|f| f.set(f.get().wrapping_add(n)));
}

/// Current value of the calling thread's counter.
pub fn read() -> u64 {
    FLOPS.with(|f| f.get())
}

pub fn reset() {
    FLOPS.with(|f| f.set(0));
}

/// Runs `f` and returns its result along with the flops it performed on this thread.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let start = read();
    let out = f();
    (out, read().wrapping_sub(start))
}

/// Nominal real flops of a complex `m x k` by `k x n` product.
pub const fn gemm(m: usize, k: usize, n: usize) -> u64 {
    8 * (m as u64) * (k as u64) * (n as u64)
}

/// Nominal real flops of an LU-based complex inversion of an `n x n` matrix.
pub const fn inverse(n: usize) -> u64 {
    8 * (n as u64) * (n as u64) * (n as u64)
}

/// Nominal real flops of an LU factorisation plus a solve with `nrhs` columns.
pub const fn lu_solve(n: usize, nrhs: usize) -> u64 {
    let n = n as u64;
    (8 * n * n * n) / 3 + 8 * n * n * (nrhs as u64)
}

//! Process-wide counter of solver invocations.
//!
//! Every factorization-based kernel in [`crate::numerics`] and every
//! iterative sparse-coding call in [`crate::bench`] bumps this counter. The
//! patch classification path touches none of them, which is checked by
//! reading the counter before and after a classification batch.

use std::sync::atomic::{AtomicU64, Ordering};

static SOLVER_CALLS: AtomicU64 = AtomicU64::new(0);

/// Total solver invocations recorded so far in this process.
pub fn solver_invocations() -> u64 {
    SOLVER_CALLS.load(Ordering::Relaxed)
}

pub(crate) fn record_solver_call() {
    SOLVER_CALLS.fetch_add(1, Ordering::Relaxed);
}

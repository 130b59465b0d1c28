//! Execution of independent replicas.
//!
//! Experiments describe work as `n` independent jobs indexed `0..n`; an
//! [`Executor`] runs them and returns the results in index order. Every job
//! derives its randomness from its own index, so results do not depend on
//! how the executor schedules jobs.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(job).collect()
    }
}

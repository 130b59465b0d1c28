//! Sum tree over non-negative rates for event selection in O(log n).
//!
//! Internal nodes are recomputed as the sum of their two children on every
//! update, so the stored totals never accumulate drift from repeated
//! increments and decrements.

use alloc::vec::Vec;

#[derive(Clone, Debug)]
pub struct RateTree {
    nodes: Vec<f64>,
    leaves: usize,
    len: usize,
}

impl RateTree {
    pub fn new(rates: &[f64]) -> Self {
        let len = rates.len();
        let leaves = len.next_power_of_two().max(1);
        let mut nodes = alloc::vec![0.0; 2 * leaves];
        nodes[leaves..leaves + len].copy_from_slice(rates);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self { nodes, leaves, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn rate(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, rate: f64) {
        debug_assert!(rate >= 0.0 && i < self.len);
        let mut k = self.leaves + i;
        self.nodes[k] = rate;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Index `i` such that the rates before `i` sum to at most `target` and
    /// including `i` exceed it. Descent never enters a zero subtree, so the
    /// returned leaf has a positive rate whenever the total is positive, even
    /// if round-off pushes `target` up to the total.
    pub fn find(&self, mut target: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if target < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                target -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

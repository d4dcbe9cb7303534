/// Counters for numeric edge cases that are handled by convention rather
/// than by failing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// `p(gold)` below the cross-entropy floor.
    pub ce_clamped: u64,
    /// Cosine similarities involving a near-zero vector (defined as 0).
    pub degenerate_cosines: u64,
    /// Contrastive pair terms skipped because no negatives were present.
    pub skipped_scl_terms: u64,
    /// Retrieval distributions that were all zero for lack of entity centroids.
    pub empty_retrievals: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.ce_clamped += other.ce_clamped;
        self.degenerate_cosines += other.degenerate_cosines;
        self.skipped_scl_terms += other.skipped_scl_terms;
        self.empty_retrievals += other.empty_retrievals;
    }
}

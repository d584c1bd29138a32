/// Round-major, learner-minor stage order: (1,1)…(1,K),(2,1)…(M,K).
#[derive(Debug, Clone)]
pub struct IlSchedule {
    pub learners: usize,
    pub rounds: usize,
    pub lambda: f64,
}

impl IlSchedule {
    pub fn stage_count(&self) -> usize {
        self.learners * self.rounds
    }

    /// Flat 1-based stage index of (round, learner), both 1-based.
    pub fn stage_of(&self, round: usize, learner: usize) -> usize {
        (round - 1) * self.learners + learner
    }

    /// (round, learner) of a flat 1-based stage index.
    pub fn round_learner(&self, stage: usize) -> (usize, usize) {
        let m = (stage - 1) / self.learners + 1;
        let k = (stage - 1) % self.learners + 1;
        (m, k)
    }

    /// The stage order as (round, learner) pairs.
    pub fn order(&self) -> Vec<(usize, usize)> {
        (1..=self.stage_count()).map(|s| self.round_learner(s)).collect()
    }

    /// Predecessor of a stage under the wrap rule: the predecessor of
    /// (m, 1) is (m-1, K); the very first stage has none.
    pub fn predecessor(&self, stage: usize) -> Option<usize> {
        (stage > 1).then(|| stage - 1)
    }
}

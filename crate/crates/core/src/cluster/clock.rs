/// Simulation time in nanoseconds; never moves backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct VirtualClock {
    now: u64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn seconds(&self) -> f64 {
        self.now as f64 / super::NS_PER_SECOND as f64
    }

    /// Moves to `t`; earlier instants are a caller bug.
    pub fn advance_to(&mut self, t: u64) {
        assert!(t >= self.now, "virtual clock cannot go back from {} to {t}", self.now);
        self.now = t;
    }
}

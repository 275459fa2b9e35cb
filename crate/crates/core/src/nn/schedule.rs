/// Step decay: rate(e) = initial · factor^⌊e / period⌋.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub factor: f64,
    pub period: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 1e-3,
            factor: 0.1,
            period: 26,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.period.max(1)) as i32;
        self.initial * self.factor.powi(steps)
    }
}

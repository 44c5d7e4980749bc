/// A non-negative Lagrange multiplier and its learning rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierState {
    pub value: f64,
    pub eta: f64,
}

impl MultiplierState {
    pub fn new(value: f64, eta: f64) -> Self {
        assert!(value >= 0.0, "multiplier must be non-negative, got {value}");
        Self { value, eta }
    }

    /// Projected dual ascent: `value <- max(value + eta * violation, 0)`.
    pub fn ascend(&mut self, violation: f64) -> f64 {
        self.value = (self.value + self.eta * violation).max(0.0);
        self.value
    }
}

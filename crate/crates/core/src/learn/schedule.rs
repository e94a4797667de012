use serde::{Deserialize, Serialize};

/// Inverse-time decay: lr_t = lr₀ / (1 + k·t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseTime {
    pub initial: f64,
    pub decay: f64,
}

impl InverseTime {
    pub fn at(&self, step: u64) -> f64 {
        self.initial / (1.0 + self.decay * step as f64)
    }
}

/// Linear interpolation from `start` to `end` as `frac` goes 0 → 1.
pub fn linear(start: f64, end: f64, frac: f64) -> f64 {
    let f = frac.clamp(0.0, 1.0);
    if f >= 1.0 {
        return end;
    }
    start + (end - start) * f
}

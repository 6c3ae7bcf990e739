/// `max(η_min, min(η̄, gap / prev_norm))` where `gap = ‖Ĝ(x_t, x_{t−1}, H) − G(x_t)‖`.
pub fn forcing_term(eta_bar: f64, eta_min: f64, gap: f64, prev_norm: f64) -> f64 {
    debug_assert!(prev_norm > 0.0);
    (gap / prev_norm).min(eta_bar).max(eta_min)
}

/// Adaptive forcing-term schedule. `η_0 = η̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingState {
    pub eta_bar: f64,
    pub eta_min: f64,
    pub current: f64,
}

impl ForcingState {
    pub fn new(eta_bar: f64, eta_min: f64) -> Self {
        Self { eta_bar, eta_min, current: eta_bar.max(eta_min) }
    }

    pub fn advance(&mut self, gap: f64, prev_norm: f64) -> f64 {
        self.current = forcing_term(self.eta_bar, self.eta_min, gap, prev_norm);
        self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_below_cap() {
        assert!((forcing_term(0.5, 1e-10, 0.02, 0.1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_gap_hits_floor() {
        assert_eq!(forcing_term(0.5, 1e-10, 0.0, 0.1), 1e-10);
    }

    #[test]
    fn cap_applies_and_state_starts_at_cap() {
        let mut s = ForcingState::new(0.1, 1e-10);
        assert_eq!(s.current, 0.1);
        assert_eq!(s.advance(5.0, 1.0), 0.1);
        assert_eq!(s.advance(1e-4, 1.0), 1e-4);
        assert!(s.current >= s.eta_min && s.current <= s.eta_bar);
    }
}

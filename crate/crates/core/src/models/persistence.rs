//! Clear-sky-index persistence.

/// Clear-sky irradiance below which the clear-sky index is undefined.
pub const CLEARSKY_EPS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceForecast {
    pub value: f64,
    /// Set when `Ic_h <= CLEARSKY_EPS` and `k_c = 1` was assumed.
    pub fallback: bool,
}

/// Clear-sky index `I / Ic`, or 1 when the clear-sky value is too small.
pub fn clearsky_index(irradiance: f64, clearsky: f64) -> f64 {
    if clearsky > CLEARSKY_EPS {
        irradiance / clearsky
    } else {
        1.0
    }
}

/// `k_c(h) * Ic(h+p)`.
pub fn persistence_forecast(i_h: f64, ic_h: f64, ic_hp: f64) -> PersistenceForecast {
    let fallback = !(ic_h > CLEARSKY_EPS);
    PersistenceForecast {
        value: clearsky_index(i_h, ic_h) * ic_hp,
        fallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clear_sky_index_one() {
        assert_eq!(persistence_forecast(500.0, 500.0, 300.0).value, 300.0);
    }

    #[test]
    fn half_clear() {
        let f = persistence_forecast(400.0, 800.0, 600.0);
        assert_eq!(f.value, 300.0);
        assert!(!f.fallback);
    }

    #[test]
    fn tiny_clear_sky_falls_back() {
        let f = persistence_forecast(0.3, 0.5, 123.0);
        assert_eq!(f.value, 123.0);
        assert!(f.fallback);
    }
}

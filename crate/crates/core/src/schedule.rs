//! Learning-rate and inverse-temperature schedules.

use crate::error::{arg, Result};

/// How the base learning rates evolve with the outer step `t` and inner step `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayRule {
    Constant,
    /// Outer rate `c / t`, inner rate `c / (t k)`.
    InverseT {
        c: f64,
    },
    /// `base * rate^(t / period)` for both rates.
    Exponential {
        rate: f64,
        period: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rate {
    OuterLr,
    InnerLr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedules {
    pub eta0: f64,
    pub beta0: f64,
    pub gamma_outer: f64,
    pub gamma_inner: f64,
    pub decay: DecayRule,
}

impl Schedules {
    pub fn constant(eta0: f64, beta0: f64, gamma_outer: f64, gamma_inner: f64) -> Self {
        Self {
            eta0,
            beta0,
            gamma_outer,
            gamma_inner,
            decay: DecayRule::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta", self.eta0),
            ("beta", self.beta0),
            ("gamma_outer", self.gamma_outer),
            ("gamma_inner", self.gamma_inner),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(arg(format!("{name} must be positive and finite, got {v}")));
            }
        }
        match self.decay {
            DecayRule::Constant => {}
            DecayRule::InverseT { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(arg(format!("inverse_t constant must be positive, got {c}")));
                }
            }
            DecayRule::Exponential { rate, period } => {
                if !(rate > 0.0 && rate.is_finite() && period > 0.0 && period.is_finite()) {
                    return Err(arg(format!(
                        "exponential decay needs positive rate and period, got {rate}, {period}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The outer rate at step `t` (1-based).
    pub fn eta(&self, t: usize) -> Result<f64> {
        schedule_value(self, Rate::OuterLr, t, 1)
    }

    /// The inner rate at outer step `t`, inner step `k` (both 1-based).
    pub fn beta(&self, t: usize, k: usize) -> Result<f64> {
        schedule_value(self, Rate::InnerLr, t, k)
    }
}

/// Evaluates `η_t` or `β_{t,k}` under the schedule's decay rule.
pub fn schedule_value(s: &Schedules, which: Rate, t: usize, k: usize) -> Result<f64> {
    if t == 0 {
        return Err(arg("schedule step t must be >= 1"));
    }
    if which == Rate::InnerLr && k == 0 {
        return Err(arg("inner step k must be >= 1"));
    }
    let base = match which {
        Rate::OuterLr => s.eta0,
        Rate::InnerLr => s.beta0,
    };
    let v = match s.decay {
        DecayRule::Constant => base,
        DecayRule::InverseT { c } => match which {
            Rate::OuterLr => c / t as f64,
            Rate::InnerLr => c / (t as f64 * k as f64),
        },
        DecayRule::Exponential { rate, period } => base * rate.powf(t as f64 / period),
    };
    Ok(v)
}

/// Langevin noise standard deviation `sqrt(2 lr / gamma)`.
pub fn noise_std(lr: f64, gamma: f64) -> Result<f64> {
    if !(lr > 0.0) || !(gamma > 0.0) {
        return Err(arg(format!(
            "noise_std needs positive lr and gamma, got {lr}, {gamma}"
        )));
    }
    Ok((2.0 * lr / gamma).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rate() {
        let s = Schedules::constant(0.2, 0.4, 1e4, 1e4);
        assert_eq!(s.eta(57).unwrap(), 0.2);
        assert_eq!(s.beta(57, 3).unwrap(), 0.4);
    }

    #[test]
    fn inverse_t() {
        let mut s = Schedules::constant(0.2, 0.4, 1e4, 1e4);
        s.decay = DecayRule::InverseT { c: 1.0 };
        assert_eq!(s.eta(1).unwrap(), 1.0);
        s.decay = DecayRule::InverseT { c: 3.0 };
        assert_eq!(s.eta(6).unwrap(), 0.5);
        assert_eq!(s.beta(6, 2).unwrap(), 0.25);
    }

    #[test]
    fn exponential() {
        let mut s = Schedules::constant(1e-3, 0.3, 1e8, 1e8);
        s.decay = DecayRule::Exponential {
            rate: 0.96,
            period: 800.0,
        };
        assert!((s.eta(800).unwrap() - 0.96e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_rejected() {
        let s = Schedules::constant(0.2, 0.4, 1e4, 1e4);
        assert!(schedule_value(&s, Rate::OuterLr, 0, 1).is_err());
        assert!(schedule_value(&s, Rate::InnerLr, 1, 0).is_err());
        // k is ignored for the outer rate
        assert!(schedule_value(&s, Rate::OuterLr, 1, 0).is_ok());
    }

    #[test]
    fn noise_std_values() {
        // sqrt(4e-5) = 6.324555320336759e-3 (computed with mpmath at 30 digits)
        assert!((noise_std(0.2, 1e4).unwrap() - 6.324_555_320_336_759e-3).abs() < 1e-17);
        assert_eq!(noise_std(0.5, 1.0).unwrap(), 1.0);
        assert_eq!(noise_std(2.0, 4.0).unwrap(), 1.0);
        assert!(noise_std(0.0, 1.0).is_err());
        assert!(noise_std(1.0, -1.0).is_err());
    }

    #[test]
    fn positivity_over_grid() {
        let mut s = Schedules::constant(0.2, 0.4, 1e4, 1e4);
        for decay in [
            DecayRule::Constant,
            DecayRule::InverseT { c: 0.5 },
            DecayRule::Exponential {
                rate: 0.96,
                period: 10.0,
            },
        ] {
            s.decay = decay;
            for t in 1..=200 {
                for k in 1..=4 {
                    let b = s.beta(t, k).unwrap();
                    let e = s.eta(t).unwrap();
                    assert!(b > 0.0 && e > 0.0);
                    assert!(noise_std(b, s.gamma_inner).unwrap() > 0.0);
                    assert!(noise_std(e, s.gamma_outer).unwrap() > 0.0);
                }
            }
        }
    }
}

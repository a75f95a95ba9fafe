//! Barotropic pressure laws p(rho) and the associated pressure potential P,
//! defined by P'(rho)*rho - P(rho) = p(rho) with P(0) = 0.
//!
//! Two laws are shipped: `GammaLaw` (p = a*rho^gamma, admits vacuum, P'(0+) = 0)
//! and `Isothermal` (p = a*rho, vacuum-free, P'(0+) = -infinity). They are the
//! two possible behaviours of P' at vacuum for a monotone barotropic law.

use core::fmt;

#[cfg(all(not(feature = "std"), feature = "libm"))]
use crate::math::FloatExt;

/// Errors from evaluating a pressure law outside its domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EosError {
    /// Density argument was negative.
    NegativeDensity(f64),
    /// The isothermal marginal potential P' diverges to -infinity at vacuum.
    DivergesAtVacuum,
    /// Law parameters violate a > 0 or gamma > 1.
    InvalidParameter(&'static str),
}

impl fmt::Display for EosError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EosError::NegativeDensity(rho) => write!(f, "negative density {rho}"),
            EosError::DivergesAtVacuum => {
                write!(f, "marginal potential diverges to -infinity at vacuum")
            }
            EosError::InvalidParameter(what) => write!(f, "invalid law parameter: {what}"),
        }
    }
}

impl core::error::Error for EosError {}

/// Limit behaviour of the marginal potential P' as density tends to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VacuumSlope {
    /// P'(0+) = 0: vacuum regions are admissible in equilibrium.
    Zero,
    /// P'(0+) = -infinity: the inverse of P' is positive, no vacuum forms.
    MinusInfinity,
}

/// A barotropic pressure law together with its potential calculus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PressureLaw {
    /// p = a * rho^gamma, a > 0, gamma > 1.
    GammaLaw { a: f64, gamma: f64 },
    /// p = a * rho, a > 0.
    Isothermal { a: f64 },
}

impl PressureLaw {
    pub fn gamma_law(a: f64, gamma: f64) -> Result<Self, EosError> {
        let law = PressureLaw::GammaLaw { a, gamma };
        law.validate()?;
        Ok(law)
    }

    pub fn isothermal(a: f64) -> Result<Self, EosError> {
        let law = PressureLaw::Isothermal { a };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<(), EosError> {
        match *self {
            PressureLaw::GammaLaw { a, gamma } => {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(EosError::InvalidParameter("pressure scale a must be > 0"));
                }
                if !(gamma > 1.0) || !gamma.is_finite() {
                    return Err(EosError::InvalidParameter("adiabatic exponent gamma must be > 1"));
                }
                Ok(())
            }
            PressureLaw::Isothermal { a } => {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(EosError::InvalidParameter("pressure scale a must be > 0"));
                }
                Ok(())
            }
        }
    }

    /// Pressure p(rho).
    pub fn pressure(&self, rho: f64) -> Result<f64, EosError> {
        if rho < 0.0 {
            return Err(EosError::NegativeDensity(rho));
        }
        Ok(match *self {
            PressureLaw::GammaLaw { a, gamma } => a * rho.powf(gamma),
            PressureLaw::Isothermal { a } => a * rho,
        })
    }

    /// Pressure potential P(rho), the convex primitive with P'rho - P = p, P(0) = 0.
    pub fn potential(&self, rho: f64) -> Result<f64, EosError> {
        if rho < 0.0 {
            return Err(EosError::NegativeDensity(rho));
        }
        Ok(match *self {
            PressureLaw::GammaLaw { a, gamma } => a * rho.powf(gamma) / (gamma - 1.0),
            PressureLaw::Isothermal { a } => {
                if rho == 0.0 {
                    0.0
                } else {
                    a * rho * rho.ln()
                }
            }
        })
    }

    /// Marginal potential P'(rho).
    pub fn potential_prime(&self, rho: f64) -> Result<f64, EosError> {
        if rho < 0.0 {
            return Err(EosError::NegativeDensity(rho));
        }
        match *self {
            PressureLaw::GammaLaw { a, gamma } => {
                Ok(a * gamma * rho.powf(gamma - 1.0) / (gamma - 1.0))
            }
            PressureLaw::Isothermal { a } => {
                if rho == 0.0 {
                    Err(EosError::DivergesAtVacuum)
                } else {
                    Ok(a * (rho.ln() + 1.0))
                }
            }
        }
    }

    /// Behaviour of P' at vacuum; decides whether equilibria can contain vacuum.
    pub fn vacuum_slope(&self) -> VacuumSlope {
        match self {
            PressureLaw::GammaLaw { .. } => VacuumSlope::Zero,
            PressureLaw::Isothermal { .. } => VacuumSlope::MinusInfinity,
        }
    }

    /// Inverse of P', extended to all of R.
    ///
    /// For a vacuum-admitting law the negative part of y maps to zero density
    /// (the positive-part convention of the stationary density formula); the
    /// isothermal inverse is exp(y/a - 1) > 0 for every y.
    pub fn potential_prime_inverse(&self, y: f64) -> f64 {
        match *self {
            PressureLaw::GammaLaw { a, gamma } => {
                let arg = (gamma - 1.0) * y.max(0.0) / (a * gamma);
                arg.powf(1.0 / (gamma - 1.0))
            }
            PressureLaw::Isothermal { a } => (y / a - 1.0).exp(),
        }
    }

    /// Relative pressure potential: the Bregman gap of P between rho and rho_e.
    ///
    /// For rho_e > 0 this is P(rho) - (rho - rho_e)P'(rho_e) - P(rho_e) and
    /// `head_minus_ce` is ignored. For rho_e = 0 the supporting slope P'(rho_e)
    /// is replaced by the effective potential value `head_minus_ce` at that
    /// point, which the stationary formula guarantees to lie below P'(0+).
    pub fn bregman(&self, rho: f64, rho_e: f64, head_minus_ce: f64) -> Result<f64, EosError> {
        if rho < 0.0 {
            return Err(EosError::NegativeDensity(rho));
        }
        if rho_e < 0.0 {
            return Err(EosError::NegativeDensity(rho_e));
        }
        let p_rho = self.potential(rho)?;
        let val = if rho_e > 0.0 {
            let slope = self.potential_prime(rho_e)?;
            p_rho - (rho - rho_e) * slope - self.potential(rho_e)?
        } else {
            p_rho - rho * head_minus_ce
        };
        // Guard against round-off: the gap of a convex function cannot be
        // negative, but cancellation near rho = rho_e can produce -1e-17s.
        if val < 0.0 && val > -1e-12 * (1.0 + p_rho.abs()) {
            Ok(0.0)
        } else {
            Ok(val)
        }
    }

    /// Squared sound speed p'(rho).
    pub fn sound_speed_sq(&self, rho: f64) -> Result<f64, EosError> {
        if rho < 0.0 {
            return Err(EosError::NegativeDensity(rho));
        }
        Ok(match *self {
            PressureLaw::GammaLaw { a, gamma } => a * gamma * rho.powf(gamma - 1.0),
            PressureLaw::Isothermal { a } => a,
        })
    }

    /// Exponent used by the convergence metrics; the isothermal law reports
    /// with the pair (2, 4/3) by convention since its growth exponent is 1.
    pub fn metric_gamma(&self) -> f64 {
        match *self {
            PressureLaw::GammaLaw { gamma, .. } => gamma,
            PressureLaw::Isothermal { .. } => 2.0,
        }
    }
}

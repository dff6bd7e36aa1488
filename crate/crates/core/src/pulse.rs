//! Driving field: a cosine carrier switched on hard at `t = 0` and off at `t = T`.
//!
//! `F(t) = F₀ cos(ωt)` on the closed interval `[0, T]`, zero elsewhere. The
//! circular components `F± = Fx ± i·Fy` feed the channel equations.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Polarization {
    /// Field along x only.
    LinearX,
    /// `Fy(t) = fy_scale · F₀ cos(ωt − phase)`. `fy_scale = 1, phase = π/2` is circular.
    General { fy_scale: f64, phase: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub f0: f64,
    pub omega: f64,
    pub duration: f64,
    pub polarization: Polarization,
}

/// Which circular component of the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Circular {
    /// `F₊ = Fx + i·Fy`
    Plus,
    /// `F₋ = Fx − i·Fy`
    Minus,
}

/// A field component written as `pos·e^{iωt} + neg·e^{−iωt}` while the pulse is on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonics {
    pub omega: f64,
    pub pos: C64,
    pub neg: C64,
}

impl Harmonics {
    pub fn eval(&self, t: f64) -> C64 {
        let (s, c) = (self.omega * t).sin_cos();
        let e = C64::new(c, s);
        self.pos * e + self.neg * e.conj()
    }
}

impl PulseParams {
    pub fn new(f0: f64, omega: f64, duration: f64, polarization: Polarization) -> Result<Self> {
        let p = Self {
            f0,
            omega,
            duration,
            polarization,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn linear_x(f0: f64, omega: f64, duration: f64) -> Result<Self> {
        Self::new(f0, omega, duration, Polarization::LinearX)
    }

    /// `F₀ = 0.6, ω = π, T = 2`, linear polarization along x.
    pub fn reference() -> Self {
        Self {
            f0: 0.6,
            omega: std::f64::consts::PI,
            duration: 2.0,
            polarization: Polarization::LinearX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f0.is_finite() && self.f0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pulse amplitude must be finite and >= 0, got {}",
                self.f0
            )));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "carrier frequency must be > 0, got {}",
                self.omega
            )));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pulse duration must be > 0, got {}",
                self.duration
            )));
        }
        if let Polarization::General { fy_scale, phase } = self.polarization {
            if !(fy_scale.is_finite() && phase.is_finite()) {
                return Err(Error::InvalidParameter(
                    "polarization parameters must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn with_f0(&self, f0: f64) -> Self {
        Self { f0, ..*self }
    }

    pub fn with_duration(&self, duration: f64) -> Self {
        Self { duration, ..*self }
    }

    /// Closed support `[0, T]`.
    pub fn is_on(&self, t: f64) -> bool {
        (0.0..=self.duration).contains(&t)
    }

    /// Upper limit of every time integral started at zero: `min(t, T)`, clamped at 0.
    pub fn integration_end(&self, t: f64) -> f64 {
        t.clamp(0.0, self.duration)
    }

    /// `(Fx, Fy)` at time `t`.
    pub fn field_at(&self, t: f64) -> [f64; 2] {
        if !self.is_on(t) {
            return [0.0, 0.0];
        }
        let fx = self.f0 * (self.omega * t).cos();
        let fy = match self.polarization {
            Polarization::LinearX => 0.0,
            Polarization::General { fy_scale, phase } => {
                fy_scale * self.f0 * (self.omega * t - phase).cos()
            }
        };
        [fx, fy]
    }

    /// `(F₊, F₋)` at time `t`.
    pub fn f_plus_minus(&self, t: f64) -> (C64, C64) {
        let [fx, fy] = self.field_at(t);
        (C64::new(fx, fy), C64::new(fx, -fy))
    }

    pub fn circular(&self, which: Circular, t: f64) -> C64 {
        let (fp, fm) = self.f_plus_minus(t);
        match which {
            Circular::Plus => fp,
            Circular::Minus => fm,
        }
    }

    /// Harmonic decomposition of `F₊` or `F₋` inside the support.
    pub fn harmonics(&self, which: Circular) -> Harmonics {
        let half = 0.5 * self.f0;
        let (pos, neg) = match self.polarization {
            Polarization::LinearX => (C64::new(half, 0.0), C64::new(half, 0.0)),
            Polarization::General { fy_scale, phase } => {
                // cos(ωt − φ) = (e^{−iφ}e^{iωt} + e^{iφ}e^{−iωt}) / 2
                let sign = match which {
                    Circular::Plus => 1.0,
                    Circular::Minus => -1.0,
                };
                let i_s = C64::new(0.0, sign * fy_scale);
                let e = C64::from_polar(1.0, phase);
                (
                    half * (C64::new(1.0, 0.0) + i_s * e.conj()),
                    half * (C64::new(1.0, 0.0) + i_s * e),
                )
            }
        };
        Harmonics {
            omega: self.omega,
            pos,
            neg,
        }
    }
}

//! Run configuration: a flat `key = value` file with dotted keys.
//!
//! ```text
//! pulse.f0 = 0.6
//! pulse.omega = 3.141592653589793
//! cartesian.nx = 512
//! outputs = density, phase, vortices
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::amplitudes::RadialGrid;
use crate::currents::QuiverStyle;
use crate::pulse::{Polarization, PulseParams};
use crate::tdse_oracle::{OracleConfig, Stencil};
use crate::wavefield::CartesianGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Output {
    Density,
    Phase,
    CurrentStandard,
    CurrentSymmetric,
    Vortices,
    Svg,
    Amplitudes,
}

impl Output {
    pub const ALL: [Output; 7] = [
        Output::Density,
        Output::Phase,
        Output::CurrentStandard,
        Output::CurrentSymmetric,
        Output::Vortices,
        Output::Svg,
        Output::Amplitudes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Output::Density => "density",
            Output::Phase => "phase",
            Output::CurrentStandard => "current_standard",
            Output::CurrentSymmetric => "current_symmetric",
            Output::Vortices => "vortices",
            Output::Svg => "svg",
            Output::Amplitudes => "amplitudes",
        }
    }
}

impl FromStr for Output {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Output::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown output {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pulse: PulseParams,
    pub radial: RadialGrid,
    pub cartesian: CartesianGrid,
    pub t_eval: f64,
    pub include_free_phase: bool,
    pub outputs: BTreeSet<Output>,
    pub output_dir: PathBuf,
    pub oracle: OracleConfig,
    pub quiver: QuiverStyle,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pulse: PulseParams::reference(),
            radial: RadialGrid {
                k_min: 0.05,
                k_max: 6.0,
                n_k: 2000,
            },
            cartesian: CartesianGrid {
                kx_min: -4.0,
                kx_max: 4.0,
                ky_min: -4.0,
                ky_max: 4.0,
                nx: 512,
                ny: 512,
            },
            t_eval: 2.0,
            include_free_phase: true,
            outputs: [Output::Density, Output::Phase, Output::Vortices].into_iter().collect(),
            output_dir: PathBuf::from("out"),
            oracle: OracleConfig::default(),
            quiver: QuiverStyle::default(),
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key=value` assignment (also used for `--set` overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "pulse.f0" => self.pulse.f0 = num(key, value)?,
            "pulse.omega" => self.pulse.omega = num(key, value)?,
            "pulse.duration" => self.pulse.duration = num(key, value)?,
            "pulse.polarization" => {
                self.pulse.polarization = match value {
                    "linear_x" => Polarization::LinearX,
                    "general" => match self.pulse.polarization {
                        p @ Polarization::General { .. } => p,
                        Polarization::LinearX => Polarization::General {
                            fy_scale: 0.0,
                            phase: 0.0,
                        },
                    },
                    _ => return Err(Error::Config(format!("{key}: expected linear_x or general"))),
                }
            }
            "pulse.fy_scale" | "pulse.phase" => {
                let v: f64 = num(key, value)?;
                let (mut fy, mut ph) = match self.pulse.polarization {
                    Polarization::General { fy_scale, phase } => (fy_scale, phase),
                    Polarization::LinearX => (0.0, 0.0),
                };
                if key == "pulse.fy_scale" {
                    fy = v;
                } else {
                    ph = v;
                }
                self.pulse.polarization = Polarization::General { fy_scale: fy, phase: ph };
            }
            "radial.k_min" => self.radial.k_min = num(key, value)?,
            "radial.k_max" => self.radial.k_max = num(key, value)?,
            "radial.n_k" => self.radial.n_k = num(key, value)?,
            "cartesian.kx_min" => self.cartesian.kx_min = num(key, value)?,
            "cartesian.kx_max" => self.cartesian.kx_max = num(key, value)?,
            "cartesian.ky_min" => self.cartesian.ky_min = num(key, value)?,
            "cartesian.ky_max" => self.cartesian.ky_max = num(key, value)?,
            "cartesian.nx" => self.cartesian.nx = num(key, value)?,
            "cartesian.ny" => self.cartesian.ny = num(key, value)?,
            "t_eval" => self.t_eval = num(key, value)?,
            "include_free_phase" => self.include_free_phase = num(key, value)?,
            "outputs" => {
                self.outputs = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(Output::from_str)
                    .collect::<Result<_>>()?
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "oracle.m_max" => self.oracle.m_max = num(key, value)?,
            "oracle.dt" => self.oracle.dt = num(key, value)?,
            "oracle.stencil" => {
                self.oracle.k_derivative_stencil = match value {
                    "central2" => Stencil::Central2,
                    "central4" => Stencil::Central4,
                    _ => return Err(Error::Config(format!("{key}: expected central2 or central4"))),
                }
            }
            "svg.stride" => self.quiver.stride = num(key, value)?,
            "svg.log_compress" => self.quiver.log_compress = num(key, value)?,
            "svg.width" => self.quiver.width = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.pulse.validate().map_err(wrap)?;
        self.radial.validate().map_err(wrap)?;
        self.cartesian.validate().map_err(wrap)?;
        self.oracle.validate().map_err(wrap)?;
        if !(self.t_eval.is_finite() && self.t_eval >= 0.0) {
            return Err(Error::Config(format!("t_eval must be >= 0, got {}", self.t_eval)));
        }
        if self.radial.n_k < 4 {
            return Err(Error::Config("radial.n_k must be at least 4 for cubic interpolation".into()));
        }
        let reach = self.cartesian.max_radius();
        if self.radial.k_max < reach {
            return Err(Error::Config(format!(
                "radial.k_max = {} does not cover the cartesian window (needs >= {reach:.4})",
                self.radial.k_max
            )));
        }
        if self.quiver.stride == 0 || !(self.quiver.width.is_finite() && self.quiver.width > 0.0) {
            return Err(Error::Config("svg.stride and svg.width must be positive".into()));
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.t_eval < self.pulse.duration {
            w.push(format!(
                "t_eval = {} is inside the pulse (T = {}); the distribution is not yet stationary",
                self.t_eval, self.pulse.duration
            ));
        }
        w
    }

    /// Serializes every key; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let f = |x: f64| format!("{x:?}");
        let _ = writeln!(s, "{}", crate::FORMAT_HEADER);
        let _ = writeln!(s, "pulse.f0 = {}", f(self.pulse.f0));
        let _ = writeln!(s, "pulse.omega = {}", f(self.pulse.omega));
        let _ = writeln!(s, "pulse.duration = {}", f(self.pulse.duration));
        match self.pulse.polarization {
            Polarization::LinearX => {
                let _ = writeln!(s, "pulse.polarization = linear_x");
            }
            Polarization::General { fy_scale, phase } => {
                let _ = writeln!(s, "pulse.polarization = general");
                let _ = writeln!(s, "pulse.fy_scale = {}", f(fy_scale));
                let _ = writeln!(s, "pulse.phase = {}", f(phase));
            }
        }
        let _ = writeln!(s, "radial.k_min = {}", f(self.radial.k_min));
        let _ = writeln!(s, "radial.k_max = {}", f(self.radial.k_max));
        let _ = writeln!(s, "radial.n_k = {}", self.radial.n_k);
        let c = &self.cartesian;
        let _ = writeln!(s, "cartesian.kx_min = {}", f(c.kx_min));
        let _ = writeln!(s, "cartesian.kx_max = {}", f(c.kx_max));
        let _ = writeln!(s, "cartesian.ky_min = {}", f(c.ky_min));
        let _ = writeln!(s, "cartesian.ky_max = {}", f(c.ky_max));
        let _ = writeln!(s, "cartesian.nx = {}", c.nx);
        let _ = writeln!(s, "cartesian.ny = {}", c.ny);
        let _ = writeln!(s, "t_eval = {}", f(self.t_eval));
        let _ = writeln!(s, "include_free_phase = {}", self.include_free_phase);
        let outs: Vec<&str> = self.outputs.iter().map(|o| o.name()).collect();
        let _ = writeln!(s, "outputs = {}", outs.join(", "));
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "oracle.m_max = {}", self.oracle.m_max);
        let _ = writeln!(s, "oracle.dt = {}", f(self.oracle.dt));
        let stencil = match self.oracle.k_derivative_stencil {
            Stencil::Central2 => "central2",
            Stencil::Central4 => "central4",
        };
        let _ = writeln!(s, "oracle.stencil = {stencil}");
        let _ = writeln!(s, "svg.stride = {}", self.quiver.stride);
        let _ = writeln!(s, "svg.log_compress = {}", self.quiver.log_compress);
        let _ = writeln!(s, "svg.width = {}", f(self.quiver.width));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_reference_run() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.pulse.f0, 0.6);
        assert_eq!(c.pulse.omega, std::f64::consts::PI);
        assert_eq!(c.pulse.duration, 2.0);
        assert_eq!(c.cartesian.nx, 512);
        assert_eq!(c.t_eval, 2.0);
        assert!(c.warnings().is_empty());
    }

    #[test]
    fn parse_and_override() {
        let text = "# comment\npulse.f0 = 0.05\n\noutputs = vortices, svg\noracle.stencil = central2\n";
        let mut c = RunConfig::parse(text).unwrap();
        assert_eq!(c.pulse.f0, 0.05);
        assert_eq!(c.outputs.len(), 2);
        assert!(c.outputs.contains(&Output::Svg));
        c.set("pulse.phase", "1.5").unwrap();
        assert!(matches!(c.pulse.polarization, Polarization::General { phase, .. } if phase == 1.5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("pulse.f0 0.6").is_err());
        assert!(RunConfig::parse("pulse.f1 = 0.6").is_err());
        assert!(RunConfig::parse("pulse.f0 = abc").is_err());
        assert!(RunConfig::parse("pulse.f0 = -1").is_err());
        assert!(RunConfig::parse("outputs = density, nope").is_err());
        assert!(RunConfig::parse("radial.k_max = 5.0").is_err());
        assert!(RunConfig::parse("t_eval = -1").is_err());
    }

    #[test]
    fn early_evaluation_warns() {
        let c = RunConfig::parse("t_eval = 1.0").unwrap();
        assert_eq!(c.warnings().len(), 1);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            0.0f64..2.0,
            0.1f64..10.0,
            0.1f64..10.0,
            prop::option::of((-2.0f64..2.0, -3.0f64..3.0)),
            0.01f64..0.5,
            16usize..600,
            0.0f64..20.0,
            any::<bool>(),
            prop::collection::btree_set(prop::sample::select(Output::ALL.to_vec()), 0..7),
            1e-4f64..1e-2,
            2usize..8,
        )
            .prop_map(|(f0, om, dur, pol, kmin, n, t, fp, outs, dt, mmax)| RunConfig {
                pulse: PulseParams {
                    f0,
                    omega: om,
                    duration: dur,
                    polarization: match pol {
                        None => Polarization::LinearX,
                        Some((fy_scale, phase)) => Polarization::General { fy_scale, phase },
                    },
                },
                radial: RadialGrid {
                    k_min: kmin,
                    k_max: 7.0,
                    n_k: 3 * n,
                },
                cartesian: CartesianGrid {
                    kx_min: -3.3,
                    kx_max: 4.1,
                    ky_min: -4.0,
                    ky_max: 1.7,
                    nx: n,
                    ny: n + 1,
                },
                t_eval: t,
                include_free_phase: fp,
                outputs: outs,
                output_dir: PathBuf::from("some/dir"),
                oracle: OracleConfig {
                    m_max: mmax,
                    dt,
                    k_derivative_stencil: if fp { Stencil::Central4 } else { Stencil::Central2 },
                },
                quiver: QuiverStyle::default(),
            })
    }

    proptest! {
        #[test]
        fn serialize_round_trip(c in arb_config()) {
            let text = c.serialize();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.serialize(), text);
        }
    }
}

//! Direct time integration of the full coupled channel system, truncated to
//! `|m| <= m_max`, on the radial grid. Used only to validate the perturbative
//! amplitudes; it carries every order in the field, not just the first two.
//!
//! Radial derivatives use central differences with one-sided second-order
//! closures at both grid ends. Time stepping is classic RK4 with a fixed step
//! that divides `min(t_end, T)` exactly; after the pulse the right-hand side
//! vanishes identically so the state is simply carried forward.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitudes::{neg_i_pow, transition_frequency, AmplitudeSet, Provenance, RadialGrid};
use crate::export::fmt_f64;
use crate::pulse::{Polarization, PulseParams};
use crate::{Error, Result, C64, FORMAT_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    Central2,
    Central4,
}

impl Stencil {
    /// Spectral radius of the interior stencil times `Δk`.
    fn spectral_radius(self) -> f64 {
        match self {
            Stencil::Central2 => 1.0,
            Stencil::Central4 => 1.372,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub m_max: usize,
    pub dt: f64,
    pub k_derivative_stencil: Stencil,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            m_max: 4,
            dt: 1e-3,
            k_derivative_stencil: Stencil::Central4,
        }
    }
}

/// Largest `|λ|·dt` accepted; RK4 is stable on the imaginary axis up to 2√2.
const STABILITY_LIMIT: f64 = 2.5;
const BLOW_UP: f64 = 1e6;

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_max < 2 {
            return Err(Error::InvalidParameter(format!(
                "oracle needs m_max >= 2, got {}",
                self.m_max
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("oracle dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    /// Rough bound on `|λ|·dt` for the discretized system over `[0, tau]`.
    pub fn stability_number(&self, p: &PulseParams, g: &RadialGrid, tau: f64) -> f64 {
        let fy = match p.polarization {
            Polarization::LinearX => 0.0,
            Polarization::General { fy_scale, .. } => fy_scale.abs(),
        };
        let field = p.f0 * (1.0 + fy);
        let per_neighbour = 0.5
            * field
            * (g.k_max * tau
                + self.k_derivative_stencil.spectral_radius() / g.spacing()
                + (self.m_max as f64 + 1.0) / g.k_min);
        2.0 * per_neighbour * self.dt
    }
}

struct System<'a> {
    p: &'a PulseParams,
    m_max: i32,
    stencil: Stencil,
    h: f64,
    k: Vec<f64>,
    inv_k: Vec<f64>,
    omega_k: Vec<f64>,
    /// `−(i/2)·6k/(k²+1)^{5/2}`
    source: Vec<C64>,
}

impl<'a> System<'a> {
    fn new(p: &'a PulseParams, g: &RadialGrid, cfg: &OracleConfig) -> Self {
        let k = g.nodes();
        Self {
            p,
            m_max: cfg.m_max as i32,
            stencil: cfg.k_derivative_stencil,
            h: g.spacing(),
            inv_k: k.iter().map(|k| 1.0 / k).collect(),
            omega_k: k.iter().map(|&k| transition_frequency(k)).collect(),
            source: k
                .iter()
                .map(|&k| C64::new(0.0, -3.0 * k / (k * k + 1.0).powf(2.5)))
                .collect(),
            k,
        }
    }

    fn channels(&self) -> usize {
        (2 * self.m_max + 1) as usize
    }

    fn derivative(&self, b: &[C64], d: &mut [C64]) {
        let n = b.len();
        let h = self.h;
        let inv2h = 1.0 / (2.0 * h);
        d[0] = (-3.0 * b[0] + 4.0 * b[1] - b[2]) * inv2h;
        d[n - 1] = (3.0 * b[n - 1] - 4.0 * b[n - 2] + b[n - 3]) * inv2h;
        match self.stencil {
            Stencil::Central2 => {
                for i in 1..n - 1 {
                    d[i] = (b[i + 1] - b[i - 1]) * inv2h;
                }
            }
            Stencil::Central4 => {
                d[1] = (b[2] - b[0]) * inv2h;
                d[n - 2] = (b[n - 1] - b[n - 3]) * inv2h;
                let inv12h = 1.0 / (12.0 * h);
                for i in 2..n - 2 {
                    d[i] = (-b[i + 2] + 8.0 * b[i + 1] - 8.0 * b[i - 1] + b[i - 2]) * inv12h;
                }
            }
        }
    }

    fn rhs(&self, t: f64, b: &[Vec<C64>], db: &mut [Vec<C64>], out: &mut [Vec<C64>]) {
        let (fp, fm) = self.p.f_plus_minus(t);
        if fp == C64::new(0.0, 0.0) && fm == C64::new(0.0, 0.0) {
            out.iter_mut().for_each(|o| o.fill(C64::new(0.0, 0.0)));
            return;
        }
        db.par_iter_mut()
            .zip(b.par_iter())
            .for_each(|(d, bc)| self.derivative(bc, d));
        let db: &[Vec<C64>] = db;
        let last = self.channels() - 1;
        out.par_iter_mut().enumerate().for_each(|(c, o)| {
            let m = c as i32 - self.m_max;
            o.fill(C64::new(0.0, 0.0));
            let drive = match m {
                1 => Some(fm),
                -1 => Some(fp),
                _ => None,
            };
            if let Some(f) = drive {
                for (i, oi) in o.iter_mut().enumerate() {
                    let (s, co) = (self.omega_k[i] * t).sin_cos();
                    *oi += f * self.source[i] * C64::new(co, s);
                }
            }
            if c > 0 {
                let lower = m - 1;
                let coef = 0.5 * neg_i_pow(lower.abs() - m.abs()) * fm;
                let cent = -(lower as f64);
                self.couple(o, &b[c - 1], &db[c - 1], coef, cent, t);
            }
            if c < last {
                let upper = m + 1;
                let coef = 0.5 * neg_i_pow(upper.abs() - m.abs()) * fp;
                let cent = upper as f64;
                self.couple(o, &b[c + 1], &db[c + 1], coef, cent, t);
            }
        });
    }

    /// `o += coef · (∂b − ik t b + cent·b/k)`
    fn couple(&self, o: &mut [C64], b: &[C64], db: &[C64], coef: C64, cent: f64, t: f64) {
        if coef == C64::new(0.0, 0.0) {
            return;
        }
        for i in 0..o.len() {
            let radial = db[i] - C64::new(0.0, self.k[i] * t) * b[i] + cent * self.inv_k[i] * b[i];
            o[i] += coef * radial;
        }
    }
}

fn axpy(dst: &mut [Vec<C64>], base: &[Vec<C64>], a: f64, x: &[Vec<C64>]) {
    for ((d, b), xv) in dst.iter_mut().zip(base).zip(x) {
        for ((di, bi), xi) in d.iter_mut().zip(b).zip(xv) {
            *di = bi + a * xi;
        }
    }
}

/// Integrates all channels `|m| <= m_max` and returns every one of them.
pub fn integrate_all_channels(
    p: &PulseParams,
    g: &RadialGrid,
    cfg: &OracleConfig,
    t_end: f64,
) -> Result<AmplitudeSet> {
    p.validate()?;
    g.validate()?;
    cfg.validate()?;
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!("t_end must be >= 0, got {t_end}")));
    }
    if g.n_k < 5 {
        return Err(Error::InvalidParameter("oracle grid needs at least 5 nodes".into()));
    }
    let tau = p.integration_end(t_end);
    let lambda_dt = cfg.stability_number(p, g, tau);
    if lambda_dt > STABILITY_LIMIT {
        return Err(Error::Instability {
            time: 0.0,
            reason: format!("step too large: |λ|·dt ≈ {lambda_dt:.3} exceeds {STABILITY_LIMIT}"),
        });
    }

    let sys = System::new(p, g, cfg);
    let nc = sys.channels();
    let n = g.n_k;
    let zero = || vec![vec![C64::new(0.0, 0.0); n]; nc];
    let mut b = zero();
    let steps = if tau > 0.0 { (tau / cfg.dt).ceil() as usize } else { 0 };
    if p.f0 > 0.0 && steps > 0 {
        let mut db = zero();
        let (mut k1, mut k2, mut k3, mut k4) = (zero(), zero(), zero(), zero());
        let mut tmp = zero();
        for step in 0..steps {
            let t0 = tau * step as f64 / steps as f64;
            let t1 = tau * (step + 1) as f64 / steps as f64;
            let h = t1 - t0;
            let tm = 0.5 * (t0 + t1);
            sys.rhs(t0, &b, &mut db, &mut k1);
            axpy(&mut tmp, &b, 0.5 * h, &k1);
            sys.rhs(tm, &tmp, &mut db, &mut k2);
            axpy(&mut tmp, &b, 0.5 * h, &k2);
            sys.rhs(tm, &tmp, &mut db, &mut k3);
            axpy(&mut tmp, &b, h, &k3);
            sys.rhs(t1, &tmp, &mut db, &mut k4);
            let mut worst: f64 = 0.0;
            for c in 0..nc {
                for i in 0..n {
                    let v = b[c][i] + h / 6.0 * (k1[c][i] + 2.0 * k2[c][i] + 2.0 * k3[c][i] + k4[c][i]);
                    b[c][i] = v;
                    let a = v.norm();
                    if !a.is_finite() {
                        worst = f64::INFINITY;
                    } else {
                        worst = worst.max(a);
                    }
                }
            }
            if !worst.is_finite() || worst > BLOW_UP {
                return Err(Error::Instability {
                    time: t1,
                    reason: format!("max |b| = {worst:e}"),
                });
            }
        }
    }
    let channels: BTreeMap<i32, Vec<C64>> = b
        .into_iter()
        .enumerate()
        .map(|(c, v)| (c as i32 - sys.m_max, v))
        .collect();
    AmplitudeSet::new(*g, t_end, Provenance::Oracle, channels)
}

/// Oracle amplitudes for channels `m ∈ {−2, …, 2}`.
pub fn integrate(p: &PulseParams, g: &RadialGrid, cfg: &OracleConfig, t_end: f64) -> Result<AmplitudeSet> {
    Ok(integrate_all_channels(p, g, cfg, t_end)?.truncated(2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub channel: i32,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn value(&self, channel: i32, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.channel == channel && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{FORMAT_HEADER}")?;
        writeln!(out, "channel,metric,value")?;
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.channel, r.metric, fmt_f64(r.value))?;
        }
        Ok(())
    }
}

pub const METRIC_DT_HALVING: &str = "dt_halving_max_abs";
pub const METRIC_STENCIL_UPGRADE: &str = "stencil_upgrade_max_abs";

/// Max-abs channel differences for `dt → dt/2` and for `Central2 → Central4`
/// (both at the configured `dt`).
pub fn convergence_report(
    p: &PulseParams,
    g: &RadialGrid,
    cfg: &OracleConfig,
    t_end: f64,
) -> Result<ConvergenceReport> {
    let base = integrate(p, g, cfg, t_end)?;
    let half = integrate(
        p,
        g,
        &OracleConfig {
            dt: 0.5 * cfg.dt,
            ..*cfg
        },
        t_end,
    )?;
    let c2 = OracleConfig {
        k_derivative_stencil: Stencil::Central2,
        ..*cfg
    };
    let c4 = OracleConfig {
        k_derivative_stencil: Stencil::Central4,
        ..*cfg
    };
    let (lo, hi) = match cfg.k_derivative_stencil {
        Stencil::Central2 => (base.clone(), integrate(p, g, &c4, t_end)?),
        Stencil::Central4 => (integrate(p, g, &c2, t_end)?, base.clone()),
    };
    let max_abs = |a: &AmplitudeSet, b: &AmplitudeSet, m: i32| {
        (0..g.n_k)
            .map(|i| (a.value(m, i) - b.value(m, i)).norm())
            .fold(0.0, f64::max)
    };
    let mut rows = Vec::new();
    for m in -2..=2 {
        rows.push(ConvergenceRow {
            channel: m,
            metric: METRIC_DT_HALVING.into(),
            value: max_abs(&base, &half, m),
        });
        rows.push(ConvergenceRow {
            channel: m,
            metric: METRIC_STENCIL_UPGRADE.into(),
            value: max_abs(&lo, &hi, m),
        });
    }
    Ok(ConvergenceReport { rows })
}

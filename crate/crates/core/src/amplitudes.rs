//! Perturbative continuum channel amplitudes.
//!
//! First order populates `m = ±1` directly from the ground state; second order
//! feeds `m = 0, ±2` from the first-order channels through the radial coupling
//! operators `∂/∂k − ik·t ∓ (m∓1)/k`. Time integrals run from 0 to `min(t, T)`.
//!
//! Conventions: `ω_k = (k² + 1)/2` is the transition frequency from the ground
//! state (`E₁ = −1/2`) to a continuum state of energy `E_k = k²/2`. Amplitudes
//! are stored without the free phase `e^{−iE_k t}`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::export::fmt_f64;
use crate::pulse::{Circular, Harmonics, PulseParams};
use crate::quadrature::GaussLegendre;
use crate::{Error, Result, C64, FORMAT_HEADER};

/// Ground state of the 2D hydrogen atom in the momentum representation.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundStateMomentum;

impl GroundStateMomentum {
    pub const ENERGY: f64 = -0.5;

    /// Radial factor `2 / (k² + 1)^{3/2}`; the angular part is `Φ₀`.
    pub fn amplitude(k: f64) -> f64 {
        2.0 / (k * k + 1.0).powf(1.5)
    }
}

/// Continuum energy `k²/2`.
pub fn continuum_energy(k: f64) -> f64 {
    0.5 * k * k
}

/// Transition frequency from the ground state, `(k² + 1)/2`.
pub fn transition_frequency(k: f64) -> f64 {
    0.5 * (k * k + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub k_min: f64,
    pub k_max: f64,
    pub n_k: usize,
}

impl RadialGrid {
    pub fn new(k_min: f64, k_max: f64, n_k: usize) -> Result<Self> {
        let g = Self { k_min, k_max, n_k };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_min.is_finite() && self.k_max.is_finite()) {
            return Err(Error::InvalidParameter("radial grid bounds must be finite".into()));
        }
        if !(self.k_min > 0.0 && self.k_min < self.k_max) {
            return Err(Error::InvalidParameter(format!(
                "radial grid needs 0 < k_min < k_max, got [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        if self.n_k < 2 {
            return Err(Error::InvalidParameter(format!(
                "radial grid needs at least 2 nodes, got {}",
                self.n_k
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.k_max - self.k_min) / (self.n_k - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_k {
            self.k_max
        } else {
            self.k_min + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_k).map(|i| self.node(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Perturbative,
    Oracle,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Perturbative => "perturbative",
            Provenance::Oracle => "oracle",
        }
    }
}

/// Channel amplitudes `b_{k,m}(t)` on a radial grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSet {
    pub grid: RadialGrid,
    pub time: f64,
    pub provenance: Provenance,
    channels: BTreeMap<i32, Vec<C64>>,
}

impl AmplitudeSet {
    pub fn new(
        grid: RadialGrid,
        time: f64,
        provenance: Provenance,
        channels: BTreeMap<i32, Vec<C64>>,
    ) -> Result<Self> {
        for (m, values) in &channels {
            if values.len() != grid.n_k {
                return Err(Error::InvalidParameter(format!(
                    "channel {m} has {} values, grid has {}",
                    values.len(),
                    grid.n_k
                )));
            }
            if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(Error::NonFinite(format!("channel {m}")));
            }
        }
        Ok(Self {
            grid,
            time,
            provenance,
            channels,
        })
    }

    /// Perturbative order of a stored channel (`None` for oracle sets).
    pub fn order(&self, m: i32) -> Option<u32> {
        match (self.provenance, m.abs()) {
            (Provenance::Perturbative, 1) => Some(1),
            (Provenance::Perturbative, 0 | 2) => Some(2),
            _ => None,
        }
    }

    pub fn channel(&self, m: i32) -> Option<&[C64]> {
        self.channels.get(&m).map(Vec::as_slice)
    }

    pub fn channel_indices(&self) -> impl Iterator<Item = i32> + '_ {
        self.channels.keys().copied()
    }

    /// Value at node `i`; absent channels read as zero.
    pub fn value(&self, m: i32, i: usize) -> C64 {
        self.channels
            .get(&m)
            .map(|c| c[i])
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn max_abs(&self, m: i32) -> f64 {
        self.channel(m)
            .map(|c| c.iter().map(|v| v.norm()).fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    /// Keeps only channels with `|m| <= m_max`.
    pub fn truncated(mut self, m_max: i32) -> Self {
        self.channels.retain(|m, _| m.abs() <= m_max);
        self
    }

    /// `max|self − other| / max|other|` over nodes with `k` in `[k_lo, k_hi]`,
    /// for channel `m`. Zero when both are identically zero.
    pub fn relative_linf_deviation(&self, other: &AmplitudeSet, m: i32, k_lo: f64, k_hi: f64) -> f64 {
        assert_eq!(self.grid, other.grid, "deviation needs matching grids");
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..self.grid.n_k {
            let k = self.grid.node(i);
            if k < k_lo || k > k_hi {
                continue;
            }
            num = num.max((self.value(m, i) - other.value(m, i)).norm());
            den = den.max(other.value(m, i).norm());
        }
        if num == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// CSV with columns `k, re_b_m, im_b_m, ...` in ascending `m`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{FORMAT_HEADER}")?;
        writeln!(out, "# kind = amplitudes")?;
        writeln!(out, "# time = {}", fmt_f64(self.time))?;
        writeln!(out, "# provenance = {}", self.provenance.as_str())?;
        let ms: Vec<i32> = self.channels.keys().copied().collect();
        let mut header = String::from("k");
        for m in &ms {
            header.push_str(&format!(",re_b_{m},im_b_{m}"));
        }
        writeln!(out, "{header}")?;
        for i in 0..self.grid.n_k {
            let mut line = fmt_f64(self.grid.node(i));
            for m in &ms {
                let v = self.value(*m, i);
                line.push(',');
                line.push_str(&fmt_f64(v.re));
                line.push(',');
                line.push_str(&fmt_f64(v.im));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut time = None;
        let mut provenance = Provenance::Perturbative;
        let mut header: Option<Vec<String>> = None;
        let mut ks = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((key, value)) = meta.split_once('=') {
                    match key.trim() {
                        "time" => time = Some(parse_f64(value.trim())?),
                        "provenance" => {
                            provenance = match value.trim() {
                                "oracle" => Provenance::Oracle,
                                _ => Provenance::Perturbative,
                            }
                        }
                        _ => {}
                    }
                }
                continue;
            }
            match &header {
                None => {
                    let h: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                    cols = vec![Vec::new(); h.len().saturating_sub(1)];
                    header = Some(h);
                }
                Some(h) => {
                    let fields: Vec<&str> = line.split(',').collect();
                    if fields.len() != h.len() {
                        return Err(Error::Parse(format!("row has {} fields, expected {}", fields.len(), h.len())));
                    }
                    ks.push(parse_f64(fields[0])?);
                    for (c, f) in cols.iter_mut().zip(&fields[1..]) {
                        c.push(parse_f64(f)?);
                    }
                }
            }
        }
        let header = header.ok_or_else(|| Error::Parse("missing column header".into()))?;
        if ks.len() < 2 {
            return Err(Error::Parse("amplitude CSV needs at least two rows".into()));
        }
        let grid = RadialGrid::new(ks[0], ks[ks.len() - 1], ks.len())?;
        let mut channels = BTreeMap::new();
        for (pair, names) in cols.chunks(2).zip(header[1..].chunks(2)) {
            let m: i32 = names[0]
                .strip_prefix("re_b_")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad column name {}", names[0])))?;
            let values = pair[0]
                .iter()
                .zip(&pair[1])
                .map(|(&re, &im)| C64::new(re, im))
                .collect();
            channels.insert(m, values);
        }
        let time = time.ok_or_else(|| Error::Parse("missing time metadata".into()))?;
        Self::new(grid, time, provenance, channels)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

/// `∫₀^τ e^{iνs} ds`.
pub(crate) fn exp_integral(nu: f64, tau: f64) -> C64 {
    let x = nu * tau;
    if x.abs() < 1.0 {
        // τ Σ (ix)^n / (n+1)!
        let ix = C64::new(0.0, x);
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for n in 1..30 {
            term = term * ix / (n as f64 + 1.0);
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        tau * sum
    } else {
        let e = C64::new(0.0, x).exp();
        (e - 1.0) / C64::new(0.0, nu)
    }
}

/// `∫₀^τ s·e^{iνs} ds`.
pub(crate) fn moment_integral(nu: f64, tau: f64) -> C64 {
    let x = nu * tau;
    if x.abs() < 1.0 {
        // τ² Σ (ix)^n / (n! (n+2))
        let ix = C64::new(0.0, x);
        let mut pow_over_fact = C64::new(1.0, 0.0);
        let mut sum = pow_over_fact / 2.0;
        for n in 1..30 {
            pow_over_fact = pow_over_fact * ix / n as f64;
            let term = pow_over_fact / (n as f64 + 2.0);
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        tau * tau * sum
    } else {
        let e = C64::new(0.0, x).exp();
        tau * e / C64::new(0.0, nu) + (e - 1.0) / (nu * nu)
    }
}

fn check_k(k: f64) -> Result<()> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "continuum momentum must be > 0, got {k}"
        )));
    }
    Ok(())
}

/// `F₋` drives `m = +1`, `F₊` drives `m = −1`.
fn source_component(m: i32) -> Result<Circular> {
    match m {
        1 => Ok(Circular::Minus),
        -1 => Ok(Circular::Plus),
        _ => Err(Error::UnsupportedChannel(m)),
    }
}

/// Closed-form first-order amplitude of one channel at fixed `k`.
#[derive(Debug, Clone, Copy)]
struct FirstOrderChannel {
    k: f64,
    omega_k: f64,
    drive: Harmonics,
}

impl FirstOrderChannel {
    fn new(p: &PulseParams, k: f64, m: i32) -> Result<Self> {
        check_k(k)?;
        Ok(Self {
            k,
            omega_k: transition_frequency(k),
            drive: p.harmonics(source_component(m)?),
        })
    }

    /// `−(i/2) · 6k / (k²+1)^{5/2}`
    fn prefactor(&self) -> C64 {
        let k = self.k;
        C64::new(0.0, -3.0 * k / (k * k + 1.0).powf(2.5))
    }

    fn prefactor_dk(&self) -> C64 {
        let k = self.k;
        C64::new(0.0, -3.0 * (1.0 - 4.0 * k * k) / (k * k + 1.0).powf(3.5))
    }

    /// `∫₀^τ F_s(s) e^{iω_k s} ds`
    fn time_integral(&self, tau: f64) -> C64 {
        let w = self.drive.omega;
        self.drive.pos * exp_integral(self.omega_k + w, tau)
            + self.drive.neg * exp_integral(self.omega_k - w, tau)
    }

    /// `∂/∂k` of the time integral: `ik ∫₀^τ s F_s(s) e^{iω_k s} ds`
    fn time_integral_dk(&self, tau: f64) -> C64 {
        let w = self.drive.omega;
        let m = self.drive.pos * moment_integral(self.omega_k + w, tau)
            + self.drive.neg * moment_integral(self.omega_k - w, tau);
        C64::new(0.0, self.k) * m
    }

    fn value(&self, tau: f64) -> C64 {
        self.prefactor() * self.time_integral(tau)
    }

    fn value_and_dk(&self, tau: f64) -> (C64, C64) {
        let integral = self.time_integral(tau);
        let d = self.prefactor_dk() * integral + self.prefactor() * self.time_integral_dk(tau);
        (self.prefactor() * integral, d)
    }
}

/// First-order amplitude `b⁽¹⁾_{k,m}(t)` for `m = ±1`.
pub fn first_order(p: &PulseParams, k: f64, t: f64, m: i32) -> Result<C64> {
    let ch = FirstOrderChannel::new(p, k, m)?;
    Ok(ch.value(p.integration_end(t)))
}

/// `∂/∂k` of [`first_order`], analytic.
pub fn first_order_dk(p: &PulseParams, k: f64, t: f64, m: i32) -> Result<C64> {
    let ch = FirstOrderChannel::new(p, k, m)?;
    Ok(ch.value_and_dk(p.integration_end(t)).1)
}

/// `(−i)^n` for any integer `n`.
pub(crate) fn neg_i_pow(n: i32) -> C64 {
    match n.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, -1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, 1.0),
    }
}

/// One coupling term feeding `target` from a first-order neighbour.
struct Feed {
    source: FirstOrderChannel,
    field: Circular,
    /// `(−i)^{|m∓1|−|m|} / 2`
    phase: C64,
    /// Coefficient of `b/k` inside the radial operator.
    centrifugal: f64,
}

fn feeds(p: &PulseParams, k: f64, target: i32) -> Result<Vec<Feed>> {
    if !matches!(target, 0 | 2 | -2) {
        return Err(Error::UnsupportedChannel(target));
    }
    let mut out = Vec::with_capacity(2);
    // from m − 1 via F₋: operator ∂k − ik t − (m−1)/k
    let lower = target - 1;
    if lower.abs() == 1 {
        out.push(Feed {
            source: FirstOrderChannel::new(p, k, lower)?,
            field: Circular::Minus,
            phase: 0.5 * neg_i_pow(lower.abs() - target.abs()),
            centrifugal: -(lower as f64),
        });
    }
    // from m + 1 via F₊: operator ∂k − ik t + (m+1)/k
    let upper = target + 1;
    if upper.abs() == 1 {
        out.push(Feed {
            source: FirstOrderChannel::new(p, k, upper)?,
            field: Circular::Plus,
            phase: 0.5 * neg_i_pow(upper.abs() - target.abs()),
            centrifugal: upper as f64,
        });
    }
    Ok(out)
}

/// Panel count for the second-order time integral: each panel spans at most
/// half a period of the fastest oscillation in the integrand, `ω_k + 2ω`
/// (which is never shorter than half a carrier period).
fn panel_count(p: &PulseParams, k: f64, tau: f64) -> usize {
    let fastest = p.omega.max(transition_frequency(k) + 2.0 * p.omega);
    ((tau * fastest / std::f64::consts::PI).ceil() as usize).max(1)
}

pub const NODES_PER_PANEL: usize = 16;

/// Second-order amplitude `b⁽²⁾_{k,m}(t)` for `m ∈ {0, ±2}`.
pub fn second_order(p: &PulseParams, k: f64, t: f64, m: i32) -> Result<C64> {
    second_order_refined(p, k, t, m, 1)
}

/// [`second_order`] with the panel count multiplied by `refine` (for convergence checks).
pub fn second_order_refined(p: &PulseParams, k: f64, t: f64, m: i32, refine: usize) -> Result<C64> {
    check_k(k)?;
    let rule = GaussLegendre::new(NODES_PER_PANEL);
    second_order_with_rule(p, k, t, m, refine, &rule)
}

fn second_order_with_rule(
    p: &PulseParams,
    k: f64,
    t: f64,
    m: i32,
    refine: usize,
    rule: &GaussLegendre,
) -> Result<C64> {
    let feeds = feeds(p, k, m)?;
    let tau = p.integration_end(t);
    if tau == 0.0 || p.f0 == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let panels = panel_count(p, k, tau) * refine.max(1);
    let inv_k = 1.0 / k;
    Ok(rule.integrate_composite(0.0, tau, panels, |s| {
        let mut acc = C64::new(0.0, 0.0);
        for f in &feeds {
            let (b, db) = f.source.value_and_dk(s);
            let radial = db - C64::new(0.0, k * s) * b + f.centrifugal * inv_k * b;
            acc += f.phase * p.circular(f.field, s) * radial;
        }
        acc
    }))
}

/// Evaluates first order for `m = ±1` and second order for `m ∈ {0, ±2}` at every node.
pub fn build_amplitude_set(p: &PulseParams, g: &RadialGrid, t: f64) -> Result<AmplitudeSet> {
    p.validate()?;
    g.validate()?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    let rule = GaussLegendre::new(NODES_PER_PANEL);
    let rows: Vec<[C64; 5]> = (0..g.n_k)
        .into_par_iter()
        .map(|i| {
            let k = g.node(i);
            Ok([
                second_order_with_rule(p, k, t, -2, 1, &rule)?,
                first_order(p, k, t, -1)?,
                second_order_with_rule(p, k, t, 0, 1, &rule)?,
                first_order(p, k, t, 1)?,
                second_order_with_rule(p, k, t, 2, 1, &rule)?,
            ])
        })
        .collect::<Result<_>>()?;
    let mut channels = BTreeMap::new();
    for (slot, m) in (-2..=2).enumerate() {
        channels.insert(m, rows.iter().map(|r| r[slot]).collect());
    }
    AmplitudeSet::new(*g, t, Provenance::Perturbative, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::Polarization;
    use std::f64::consts::PI;

    fn reference() -> PulseParams {
        PulseParams::reference()
    }

    /// Adaptive Simpson on a complex integrand; independent of the closed forms.
    fn adaptive_simpson<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64) -> C64 {
        fn rec<F: Fn(f64) -> C64>(
            f: &F,
            a: f64,
            b: f64,
            fa: C64,
            fm: C64,
            fb: C64,
            whole: C64,
            tol: f64,
            depth: u32,
        ) -> C64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.norm() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    #[test]
    fn ground_state_shape() {
        assert_eq!(GroundStateMomentum::amplitude(0.0), 2.0);
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let v = GroundStateMomentum::amplitude(0.1 * i as f64);
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
        assert_eq!(GroundStateMomentum::ENERGY, -0.5);
    }

    #[test]
    fn radial_grid_validation() {
        assert!(RadialGrid::new(0.0, 5.0, 10).is_err());
        assert!(RadialGrid::new(1.0, 0.5, 10).is_err());
        assert!(RadialGrid::new(0.05, 5.0, 1).is_err());
        let g = RadialGrid::new(0.05, 5.0, 100).unwrap();
        assert_eq!(g.node(0), 0.05);
        assert_eq!(g.node(99), 5.0);
        assert!((g.spacing() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn integrals_match_quadrature_across_branch() {
        for &nu in &[0.0, 1e-12, 1e-7, 0.3, 0.49, 0.51, 3.0, -2.2] {
            let tau = 2.0;
            let e = exp_integral(nu, tau);
            let m = moment_integral(nu, tau);
            let qe = adaptive_simpson(&|s: f64| C64::new(0.0, nu * s).exp(), 0.0, tau, 1e-15);
            let qm = adaptive_simpson(&|s: f64| s * C64::new(0.0, nu * s).exp(), 0.0, tau, 1e-15);
            assert!((e - qe).norm() < 1e-13, "nu={nu}");
            assert!((m - qm).norm() < 1e-13, "nu={nu}");
        }
    }

    #[test]
    fn first_order_matches_adaptive_quadrature() {
        let p = reference();
        let k: f64 = 1.0;
        let omega_k = transition_frequency(k);
        let pref = -0.5 * 6.0 * k / (k * k + 1.0).powf(2.5);
        let integrand = |s: f64| {
            let [fx, fy] = p.field_at(s);
            let fm = C64::new(fx, -fy);
            C64::new(0.0, pref) * fm * C64::new(0.0, omega_k * s).exp()
        };
        let oracle = adaptive_simpson(&integrand, 0.0, 2.0, 1e-15);
        let v = first_order(&p, k, 2.0, 1).unwrap();
        assert!((v - oracle).norm() < 1e-12, "closed {v} vs quad {oracle}");
    }

    #[test]
    fn first_order_resonance_is_regular() {
        // ω_k = ω at k = sqrt(2π − 1)
        let p = reference();
        let k_res = (2.0 * PI - 1.0).sqrt();
        let v0 = first_order(&p, k_res, 2.0, 1).unwrap();
        let v1 = first_order(&p, k_res * (1.0 + 1e-10), 2.0, 1).unwrap();
        assert!(v0.re.is_finite() && v0.im.is_finite());
        assert!((v0 - v1).norm() < 1e-9);
    }

    #[test]
    fn first_order_trivial_cases() {
        let p = reference();
        let off = p.with_f0(0.0);
        assert_eq!(first_order(&off, 1.3, 2.0, 1).unwrap(), C64::new(0.0, 0.0));
        assert!(first_order(&p, 1e-9, 2.0, 1).unwrap().norm() < 1e-8);
        assert_eq!(
            first_order(&p, 1.7, 2.0, 1).unwrap(),
            first_order(&p, 1.7, 2.0, -1).unwrap()
        );
        assert!(first_order(&p, 0.0, 1.0, 1).is_err());
        assert!(first_order(&p, -1.0, 1.0, 1).is_err());
        assert!(first_order(&p, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn first_order_dk_matches_finite_difference() {
        let p = reference();
        let h = 1e-5;
        for &k in &[0.3, 1.5, 2.3, 4.0] {
            let d = first_order_dk(&p, k, 2.0, 1).unwrap();
            let fd = (first_order(&p, k + h, 2.0, 1).unwrap()
                - first_order(&p, k - h, 2.0, 1).unwrap())
                / (2.0 * h);
            assert!((d - fd).norm() / fd.norm() < 1e-6, "k={k}");
        }
        assert_eq!(first_order_dk(&p.with_f0(0.0), 1.5, 2.0, 1).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(first_order_dk(&p, 1.0, 0.0, 1).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn second_order_matches_nested_quadrature() {
        // Outer integral by adaptive Simpson, inner amplitudes by finite
        // differences of first_order so the closed-form derivative is not reused.
        let p = reference();
        let h = 1e-5;
        for &(k, m) in &[(0.8, 0), (2.3, 0), (2.3, 2), (3.7, -2)] {
            let src = |mm: i32, s: f64| first_order(&p, k, s, mm).unwrap();
            let dsrc = |mm: i32, s: f64| {
                (first_order(&p, k + h, s, mm).unwrap() - first_order(&p, k - h, s, mm).unwrap())
                    / (2.0 * h)
            };
            let integrand = |s: f64| {
                let (fp, fm) = p.f_plus_minus(s);
                let mut acc = C64::new(0.0, 0.0);
                if m == 0 {
                    // (−i)^1/2 F₋ (∂ − iks + 1/k) b₋₁ + (−i)^1/2 F₊ (∂ − iks + 1/k) b₊₁
                    for (f, mm) in [(fm, -1), (fp, 1)] {
                        let b = src(mm, s);
                        acc += C64::new(0.0, -0.5)
                            * f
                            * (dsrc(mm, s) - C64::new(0.0, k * s) * b + b / k);
                    }
                } else {
                    let (f, mm) = if m == 2 { (fm, 1) } else { (fp, -1) };
                    let b = src(mm, s);
                    acc += C64::new(0.0, 0.5) * f * (dsrc(mm, s) - C64::new(0.0, k * s) * b - b / k);
                }
                acc
            };
            let oracle = adaptive_simpson(&integrand, 0.0, 2.0, 1e-13);
            let v = second_order(&p, k, 2.0, m).unwrap();
            assert!((v - oracle).norm() / oracle.norm() < 1e-7, "k={k} m={m}: {v} vs {oracle}");
        }
    }

    #[test]
    fn second_order_panel_doubling_converged() {
        let p = reference();
        for &k in &[0.2, 1.0, 2.3, 4.9] {
            for m in [-2, 0, 2] {
                let a = second_order_refined(&p, k, 2.0, m, 1).unwrap();
                let b = second_order_refined(&p, k, 2.0, m, 2).unwrap();
                assert!((a - b).norm() <= 1e-13 * (1.0 + b.norm()) + 1e-16, "k={k} m={m}");
            }
        }
    }

    #[test]
    fn second_order_symmetry_and_errors() {
        let p = reference();
        for &k in &[0.1, 1.1, 2.3, 4.4] {
            assert_eq!(
                second_order(&p, k, 2.0, 2).unwrap(),
                second_order(&p, k, 2.0, -2).unwrap()
            );
        }
        assert_eq!(second_order(&p.with_f0(0.0), 2.0, 2.0, 0).unwrap(), C64::new(0.0, 0.0));
        assert!(second_order(&p, 1.0, 2.0, 1).is_err());
        assert!(second_order(&p, 1.0, 2.0, 3).is_err());
        assert!(second_order(&p, 0.0, 2.0, 0).is_err());
    }

    #[test]
    fn circular_drive_breaks_mirror_symmetry() {
        let p = PulseParams::new(
            0.3,
            PI,
            2.0,
            Polarization::General {
                fy_scale: 1.0,
                phase: PI / 2.0,
            },
        )
        .unwrap();
        let a = first_order(&p, 1.2, 2.0, 1).unwrap();
        let b = first_order(&p, 1.2, 2.0, -1).unwrap();
        assert!((a - b).norm() > 1e-3);
    }

    #[test]
    fn saturation_after_pulse() {
        let p = reference();
        for &k in &[0.5, 2.3] {
            assert_eq!(first_order(&p, k, 2.5, 1).unwrap(), first_order(&p, k, 7.0, 1).unwrap());
            assert_eq!(second_order(&p, k, 2.5, 0).unwrap(), second_order(&p, k, 40.0, 0).unwrap());
        }
    }

    #[test]
    fn order_scaling_is_exact() {
        let p = reference();
        let q = p.with_f0(2.0 * p.f0);
        for &k in &[0.3, 2.3, 4.1] {
            let a1 = first_order(&p, k, 2.0, 1).unwrap();
            let b1 = first_order(&q, k, 2.0, 1).unwrap();
            assert!((b1 - 2.0 * a1).norm() <= 1e-12 * b1.norm());
            let a2 = second_order(&p, k, 2.0, 0).unwrap();
            let b2 = second_order(&q, k, 2.0, 0).unwrap();
            assert!((b2 - 4.0 * a2).norm() <= 1e-12 * b2.norm());
        }
    }

    #[test]
    fn amplitude_set_trivial_cases() {
        let g = RadialGrid::new(0.05, 5.0, 64).unwrap();
        let zero = build_amplitude_set(&reference().with_f0(0.0), &g, 2.0).unwrap();
        let at_start = build_amplitude_set(&reference(), &g, 0.0).unwrap();
        for m in -2..=2 {
            assert!(zero.channel(m).unwrap().iter().all(|v| v.norm() == 0.0));
            assert!(at_start.channel(m).unwrap().iter().all(|v| v.norm() == 0.0));
        }
        assert_eq!(zero.value(5, 3), C64::new(0.0, 0.0));
        assert_eq!(at_start.order(1), Some(1));
        assert_eq!(at_start.order(-2), Some(2));
    }

    #[test]
    fn amplitude_set_reference_grid_is_finite() {
        let g = RadialGrid::new(0.05, 5.0, 1000).unwrap();
        let set = build_amplitude_set(&reference(), &g, 2.0).unwrap();
        for m in -2..=2 {
            assert!(set.channel(m).unwrap().iter().all(|v| v.re.is_finite() && v.im.is_finite()));
            assert_eq!(set.channel(m).unwrap(), set.channel(-m).unwrap());
        }
        // ordering holds cleanly in the weak-field limit
        let weak = build_amplitude_set(&reference().with_f0(0.1), &g, 2.0).unwrap();
        let second = weak.max_abs(0).max(weak.max_abs(2));
        assert!(weak.max_abs(1) > second);
    }

    #[test]
    fn csv_round_trip() {
        let g = RadialGrid::new(0.05, 5.0, 17).unwrap();
        let set = build_amplitude_set(&reference(), &g, 2.0).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(FORMAT_HEADER));
        assert!(text.contains("k,re_b_-2,im_b_-2,re_b_-1"));
        let back = AmplitudeSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.grid.n_k, 17);
        for m in -2..=2 {
            for i in 0..17 {
                assert_eq!(back.value(m, i), set.value(m, i));
            }
        }
    }
}

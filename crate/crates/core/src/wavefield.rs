//! Continuum wavefunction `Ψ̃(k, t)` on a Cartesian momentum grid.
//!
//! `Ψ̃ = Σ_{|m|≤2} (−i)^{|m|} b_{k,m} Φ_m(φ_k) e^{−iE_k t}` with
//! `Φ_m(φ) = e^{imφ}/√(2π)`. The bound-state term is never included.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitudes::{continuum_energy, first_order, second_order, AmplitudeSet, RadialGrid};
use crate::export::fmt_f64;
use crate::pulse::PulseParams;
use crate::{Error, Result, C64, FORMAT_HEADER};

/// Floor applied to `ln|Ψ̃|²` at exact zeros.
pub const LOG_DENSITY_FLOOR: f64 = -60.0;
/// Below this density the phase is reported as undefined.
pub const PHASE_DENSITY_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianGrid {
    pub kx_min: f64,
    pub kx_max: f64,
    pub ky_min: f64,
    pub ky_max: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Node `i` of `n` on `[lo, hi]`, written so that symmetric intervals give
/// exactly mirrored coordinates.
fn axis_node(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let last = (n - 1) as f64;
    centre + half * ((2 * i) as f64 - last) / last
}

impl CartesianGrid {
    pub fn new(kx: (f64, f64), ky: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        let g = Self {
            kx_min: kx.0,
            kx_max: kx.1,
            ky_min: ky.0,
            ky_max: ky.1,
            nx,
            ny,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square window `[−half, half]²` with `n × n` nodes.
    pub fn square(half: f64, n: usize) -> Result<Self> {
        Self::new((-half, half), (-half, half), n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 16 || self.ny < 16 {
            return Err(Error::InvalidParameter(format!(
                "cartesian grid needs at least 16 nodes per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        let ok = [self.kx_min, self.kx_max, self.ky_min, self.ky_max]
            .iter()
            .all(|v| v.is_finite());
        if !ok || self.kx_max <= self.kx_min || self.ky_max <= self.ky_min {
            return Err(Error::InvalidParameter(
                "cartesian grid bounds must be finite with min < max".into(),
            ));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        (self.kx_max - self.kx_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.ky_max - self.ky_min) / (self.ny - 1) as f64
    }

    pub fn kx(&self, i: usize) -> f64 {
        axis_node(self.kx_min, self.kx_max, self.nx, i)
    }

    pub fn ky(&self, j: usize) -> f64 {
        axis_node(self.ky_min, self.ky_max, self.ny, j)
    }

    /// Row-major in `ky`, then `kx`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest `|k|` over the window.
    pub fn max_radius(&self) -> f64 {
        let x = self.kx_min.abs().max(self.kx_max.abs());
        let y = self.ky_min.abs().max(self.ky_max.abs());
        x.hypot(y)
    }

    /// Nearest node to `(kx, ky)`, clamped into the grid.
    pub fn nearest(&self, kx: f64, ky: f64) -> (usize, usize) {
        let i = ((kx - self.kx_min) / self.hx()).round().clamp(0.0, (self.nx - 1) as f64);
        let j = ((ky - self.ky_min) / self.hy()).round().clamp(0.0, (self.ny - 1) as f64);
        (i as usize, j as usize)
    }
}

/// Radial channel amplitudes evaluated at arbitrary `k`.
pub trait AmplitudeSource: Sync {
    /// Below this momentum the field is taken to be zero.
    fn k_min(&self) -> f64;
    fn radial(&self, m: i32, k: f64) -> Result<C64>;
}

/// Four-point cubic interpolation of an [`AmplitudeSet`] on its uniform grid.
#[derive(Debug, Clone)]
pub struct RadialInterpolant {
    grid: RadialGrid,
    pub time: f64,
    channels: Vec<Vec<C64>>,
}

impl RadialInterpolant {
    pub fn new(set: &AmplitudeSet) -> Result<Self> {
        if set.grid.n_k < 4 {
            return Err(Error::InvalidParameter("cubic interpolation needs at least 4 radial nodes".into()));
        }
        let channels = (-2..=2)
            .map(|m| {
                set.channel(m)
                    .map(<[C64]>::to_vec)
                    .unwrap_or_else(|| vec![C64::new(0.0, 0.0); set.grid.n_k])
            })
            .collect();
        Ok(Self {
            grid: set.grid,
            time: set.time,
            channels,
        })
    }
}

impl AmplitudeSource for RadialInterpolant {
    fn k_min(&self) -> f64 {
        self.grid.k_min
    }

    fn radial(&self, m: i32, k: f64) -> Result<C64> {
        if m.abs() > 2 {
            return Ok(C64::new(0.0, 0.0));
        }
        let g = &self.grid;
        if k < g.k_min {
            return Ok(C64::new(0.0, 0.0));
        }
        if k > g.k_max * (1.0 + 1e-12) {
            return Err(Error::OutOfDomain { k, k_max: g.k_max });
        }
        let s = (k - g.k_min) / g.spacing();
        let start = (s.floor() as isize - 1).clamp(0, g.n_k as isize - 4) as usize;
        let x = s - start as f64;
        // Lagrange weights for nodes at 0, 1, 2, 3
        let w = [
            -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0,
            x * (x - 2.0) * (x - 3.0) / 2.0,
            -x * (x - 1.0) * (x - 3.0) / 2.0,
            x * (x - 1.0) * (x - 2.0) / 6.0,
        ];
        let c = &self.channels[(m + 2) as usize][start..start + 4];
        Ok(w[0] * c[0] + w[1] * c[1] + w[2] * c[2] + w[3] * c[3])
    }
}

/// Amplitudes evaluated directly from the perturbative expressions at each `k`.
#[derive(Debug, Clone, Copy)]
pub struct DirectAmplitudes {
    pub pulse: PulseParams,
    pub time: f64,
    pub k_min: f64,
}

impl AmplitudeSource for DirectAmplitudes {
    fn k_min(&self) -> f64 {
        self.k_min
    }

    fn radial(&self, m: i32, k: f64) -> Result<C64> {
        if k < self.k_min {
            return Ok(C64::new(0.0, 0.0));
        }
        match m {
            1 | -1 => first_order(&self.pulse, k, self.time, m),
            0 | 2 | -2 => second_order(&self.pulse, k, self.time, m),
            _ => Ok(C64::new(0.0, 0.0)),
        }
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `Ψ̃` at polar momentum `(k, φ)`.
pub fn assemble_point<S: AmplitudeSource + ?Sized>(
    src: &S,
    k: f64,
    phi: f64,
    t: f64,
    include_free_phase: bool,
) -> Result<C64> {
    let psi = assemble_envelope(src, k, phi)?;
    Ok(if include_free_phase { psi * free_phase(k, t) } else { psi })
}

/// `e^{−iE_k t}`
fn free_phase(k: f64, t: f64) -> C64 {
    let (s, c) = (continuum_energy(k) * t).sin_cos();
    C64::new(c, -s)
}

/// `Ψ̃` without the free-propagation phase.
fn assemble_envelope<S: AmplitudeSource + ?Sized>(src: &S, k: f64, phi: f64) -> Result<C64> {
    if k < src.k_min() {
        return Ok(C64::new(0.0, 0.0));
    }
    let mut psi = src.radial(0, k)?;
    for n in 1..=2 {
        let (s, c) = (n as f64 * phi).sin_cos();
        let up = C64::new(c, s);
        let down = C64::new(c, -s);
        let pair = src.radial(-n, k)? * down + src.radial(n, k)? * up;
        // (−i)^{|m|}: −i for |m| = 1, −1 for |m| = 2
        psi += if n == 1 { C64::new(pair.im, -pair.re) } else { -pair };
    }
    Ok(psi * INV_SQRT_2PI)
}

/// `Ψ̃` at Cartesian momentum `(kx, ky)`.
pub fn assemble_cartesian<S: AmplitudeSource + ?Sized>(
    src: &S,
    kx: f64,
    ky: f64,
    t: f64,
    include_free_phase: bool,
) -> Result<C64> {
    assemble_point(src, kx.hypot(ky), ky.atan2(kx), t, include_free_phase)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub grid: CartesianGrid,
    pub time: f64,
    pub include_free_phase: bool,
    values: Vec<C64>,
    /// `|Ψ̃|²`, taken before any global or free phase factor so that it does
    /// not depend on one.
    density: Vec<f64>,
}

impl WaveField {
    pub fn from_values(grid: CartesianGrid, time: f64, include_free_phase: bool, values: Vec<C64>) -> Result<Self> {
        let density = values.iter().map(|v| v.norm_sqr()).collect();
        Self::from_parts(grid, time, include_free_phase, values, density)
    }

    /// Like [`WaveField::from_values`] with a precomputed density.
    pub fn from_parts(
        grid: CartesianGrid,
        time: f64,
        include_free_phase: bool,
        values: Vec<C64>,
        density: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() || density.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(n) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(format!("field value at node {n}")));
        }
        if let Some(n) = density.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::NonFinite(format!("density at node {n}")));
        }
        Ok(Self {
            grid,
            time,
            include_free_phase,
            values,
            density,
        })
    }

    /// Samples a closure over the grid; used for synthetic fields.
    pub fn from_fn<F>(grid: CartesianGrid, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> C64,
    {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.kx(i), grid.ky(j)));
            }
        }
        Self::from_values(grid, 0.0, false, values)
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.values[self.grid.index(i, j)]
    }

    /// Applies `f` to every value; the density is recomputed.
    pub fn map_values<F: Fn(C64) -> C64>(&self, f: F) -> Self {
        let values: Vec<C64> = self.values.iter().map(|&v| f(v)).collect();
        Self {
            density: values.iter().map(|v| v.norm_sqr()).collect(),
            values,
            ..self.clone()
        }
    }

    pub fn density(&self) -> Vec<f64> {
        self.density.clone()
    }

    pub fn density_at(&self, i: usize, j: usize) -> f64 {
        self.density[self.grid.index(i, j)]
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }

    pub fn log_density(&self) -> Vec<f64> {
        self.density.iter().map(|&d| log_density_of(d)).collect()
    }

    /// Principal argument in `(−π, π]`; `None` where the density is below
    /// [`PHASE_DENSITY_FLOOR`].
    pub fn phase(&self) -> Vec<Option<f64>> {
        self.values
            .iter()
            .zip(&self.density)
            .map(|(&v, &d)| (d >= PHASE_DENSITY_FLOOR).then(|| principal_arg(v)))
            .collect()
    }

    /// `∬|Ψ̃|² dkx dky` over the window by the trapezoid rule.
    pub fn total_probability(&self) -> f64 {
        let g = &self.grid;
        let mut sum = 0.0;
        for j in 0..g.ny {
            let wy = if j == 0 || j + 1 == g.ny { 0.5 } else { 1.0 };
            for i in 0..g.nx {
                let wx = if i == 0 || i + 1 == g.nx { 0.5 } else { 1.0 };
                sum += wx * wy * self.density_at(i, j);
            }
        }
        sum * g.hx() * g.hy()
    }

    /// CSV: `kx, ky, re, im, density, log_density, phase`, row-major in `ky` then `kx`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let g = &self.grid;
        writeln!(out, "{FORMAT_HEADER}")?;
        writeln!(out, "# kind = field")?;
        writeln!(out, "# time = {}", fmt_f64(self.time))?;
        writeln!(out, "# include_free_phase = {}", self.include_free_phase)?;
        writeln!(out, "# nx = {}", g.nx)?;
        writeln!(out, "# ny = {}", g.ny)?;
        writeln!(out, "kx,ky,re,im,density,log_density,phase")?;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let v = self.at(i, j);
                let d = self.density_at(i, j);
                let phase = if d < PHASE_DENSITY_FLOOR { "NaN".into() } else { fmt_f64(principal_arg(v)) };
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_f64(g.kx(i)),
                    fmt_f64(g.ky(j)),
                    fmt_f64(v.re),
                    fmt_f64(v.im),
                    fmt_f64(d),
                    fmt_f64(log_density_of(d)),
                    phase
                )?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut time = 0.0;
        let mut free_phase = true;
        let mut nx = None;
        let mut ny = None;
        let mut body = String::new();
        let mut lines = input.lines();
        for line in lines.by_ref() {
            let line = line?;
            if let Some(meta) = line.trim().strip_prefix('#') {
                if let Some((key, value)) = meta.split_once('=') {
                    let value = value.trim();
                    let bad = || Error::Parse(format!("bad metadata value {value:?}"));
                    match key.trim() {
                        "time" => time = value.parse().map_err(|_| bad())?,
                        "include_free_phase" => free_phase = value.parse().map_err(|_| bad())?,
                        "nx" => nx = Some(value.parse::<usize>().map_err(|_| bad())?),
                        "ny" => ny = Some(value.parse::<usize>().map_err(|_| bad())?),
                        _ => {}
                    }
                }
                continue;
            }
            body.push_str(&line);
            body.push('\n');
            break;
        }
        for line in lines {
            body.push_str(&line?);
            body.push('\n');
        }
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Parse(format!("missing column {name}")))
        };
        let (ckx, cky, cre, cim) = (col("kx")?, col("ky")?, col("re")?, col("im")?);
        let cdens = col("density").ok();
        let mut kxs = Vec::new();
        let mut kys = Vec::new();
        let mut values = Vec::new();
        let mut density = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .unwrap_or("")
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number in column {c}")))
            };
            kxs.push(num(ckx)?);
            kys.push(num(cky)?);
            let v = C64::new(num(cre)?, num(cim)?);
            density.push(match cdens {
                Some(c) => num(c)?,
                None => v.norm_sqr(),
            });
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::Parse("field CSV has no rows".into()));
        }
        let nx = match nx {
            Some(n) => n,
            None => kys.iter().take_while(|&&y| y == kys[0]).count(),
        };
        let ny = ny.unwrap_or(values.len() / nx.max(1));
        if nx * ny != values.len() {
            return Err(Error::Parse(format!(
                "field CSV has {} rows, expected {nx} x {ny}",
                values.len()
            )));
        }
        let grid = CartesianGrid::new(
            (kxs[0], kxs[nx - 1]),
            (kys[0], kys[values.len() - 1]),
            nx,
            ny,
        )?;
        Self::from_parts(grid, time, free_phase, values, density)
    }
}

pub fn log_density_of(d: f64) -> f64 {
    if d > 0.0 {
        d.ln().max(LOG_DENSITY_FLOOR)
    } else {
        LOG_DENSITY_FLOOR
    }
}

/// Principal argument in `(−π, π]`, `None` below the phase floor.
pub fn phase_of(v: C64) -> Option<f64> {
    if v.norm_sqr() < PHASE_DENSITY_FLOOR {
        None
    } else {
        Some(principal_arg(v))
    }
}

/// `arg v` in `(−π, π]`.
pub fn principal_arg(v: C64) -> f64 {
    let a = v.im.atan2(v.re);
    if a == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

/// Maps [`assemble_cartesian`] over every node.
pub fn sample<S: AmplitudeSource + ?Sized>(
    src: &S,
    grid: &CartesianGrid,
    t: f64,
    include_free_phase: bool,
) -> Result<WaveField> {
    grid.validate()?;
    let rows: Vec<Vec<(C64, f64)>> = (0..grid.ny)
        .into_par_iter()
        .map(|j| {
            let ky = grid.ky(j);
            (0..grid.nx)
                .map(|i| {
                    let kx = grid.kx(i);
                    let k = kx.hypot(ky);
                    let psi = assemble_envelope(src, k, ky.atan2(kx))?;
                    let v = if include_free_phase { psi * free_phase(k, t) } else { psi };
                    Ok((v, psi.norm_sqr()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (values, density) = rows.into_iter().flatten().unzip();
    WaveField::from_parts(*grid, t, include_free_phase, values, density)
}

/// Phase view of a field (see [`WaveField::phase`]).
pub fn phase_field(w: &WaveField) -> Vec<Option<f64>> {
    w.phase()
}

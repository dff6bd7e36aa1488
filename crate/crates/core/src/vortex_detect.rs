//! Phase singularities of a sampled field.
//!
//! Every grid cell (plaquette) is tested by summing the four wrapped phase
//! differences around its boundary, counter-clockwise in `(kx, ky)`. A sum of
//! `±2π` marks a vortex of charge `±1` inside the cell; its centre is then
//! located as the common zero of the bilinear interpolants of `Re Ψ̃` and
//! `Im Ψ̃` over the cell.

use std::f64::consts::TAU;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::currents::VectorField2D;
use crate::wavefield::{principal_arg, CartesianGrid, WaveField};
use crate::{wrap_angle, Error, Result, FORMAT_HEADER};

/// Accepted distance of a plaquette sum from a multiple of 2π.
pub const WINDING_TOLERANCE: f64 = 0.5;
/// Vortices whose refined density is below this fraction of the maximum are dropped.
pub const DEAD_REGION_RATIO: f64 = 1e-25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plaquette {
    /// Lower-left node index along kx.
    pub i: usize,
    /// Lower-left node index along ky.
    pub j: usize,
    pub winding: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vortex {
    pub center_kx: f64,
    pub center_ky: f64,
    pub charge: i32,
    pub min_density: f64,
    pub plaquette_ij: [usize; 2],
    /// False when the bilinear system was degenerate and the cell centre was used.
    pub refined: bool,
    /// Set for `|charge| > 1`.
    pub high_charge: bool,
}

fn corner_phases(w: &WaveField, i: usize, j: usize) -> [f64; 4] {
    [
        principal_arg(w.at(i, j)),
        principal_arg(w.at(i + 1, j)),
        principal_arg(w.at(i + 1, j + 1)),
        principal_arg(w.at(i, j + 1)),
    ]
}

/// Winding number of the cell with lower-left node `(i, j)`.
pub fn plaquette_winding(w: &WaveField, i: usize, j: usize) -> i32 {
    let p = corner_phases(w, i, j);
    let sum: f64 = (0..4).map(|c| wrap_angle(p[(c + 1) % 4] - p[c])).sum();
    let turns = (sum / TAU).round();
    if turns != 0.0 && (sum - turns * TAU).abs() < WINDING_TOLERANCE {
        turns as i32
    } else {
        0
    }
}

/// All cells with nonzero winding, in row-major order.
pub fn winding_census(w: &WaveField) -> Vec<Plaquette> {
    let g = w.grid;
    (0..g.ny - 1)
        .into_par_iter()
        .map(|j| {
            (0..g.nx - 1)
                .filter_map(|i| {
                    let winding = plaquette_winding(w, i, j);
                    (winding != 0).then_some(Plaquette { i, j, winding })
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub kx: f64,
    pub ky: f64,
    /// Local cell coordinates in `[0, 1]²`.
    pub u: f64,
    pub v: f64,
    pub degenerate: bool,
}

/// Bilinear coefficients `a0 + a1 u + a2 v + a3 uv` from corner values
/// `f00, f10, f11, f01`.
fn bilinear(c: [f64; 4]) -> [f64; 4] {
    let [f00, f10, f11, f01] = c;
    [f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00]
}

fn eval_bilinear(a: [f64; 4], u: f64, v: f64) -> f64 {
    a[0] + a[1] * u + a[2] * v + a[3] * u * v
}

/// Real roots of `c2 x² + c1 x + c0`.
fn quadratic_roots(c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let scale = c2.abs().max(c1.abs()).max(c0.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if c2.abs() <= 1e-14 * scale {
        if c1.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-c0 / c1];
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    let mut r = vec![q / c2];
    if q != 0.0 {
        r.push(c0 / q);
    }
    r
}

/// Common zero of the bilinear interpolants of `Re Ψ̃` and `Im Ψ̃` in the cell.
pub fn refine_center(w: &WaveField, plaquette: &Plaquette) -> Result<Refinement> {
    let (i, j) = (plaquette.i, plaquette.j);
    let g = &w.grid;
    if i + 1 >= g.nx || j + 1 >= g.ny || plaquette_winding(w, i, j) == 0 {
        return Err(Error::NoWinding { i, j });
    }
    let corners = [w.at(i, j), w.at(i + 1, j), w.at(i + 1, j + 1), w.at(i, j + 1)];
    let a = bilinear(corners.map(|c| c.re));
    let b = bilinear(corners.map(|c| c.im));
    // f = 0 ⇒ v = −(a0 + a1 u)/(a2 + a3 u); substitute into g = 0.
    let c2 = b[1] * a[3] - b[3] * a[1];
    let c1 = b[0] * a[3] + b[1] * a[2] - b[2] * a[1] - b[3] * a[0];
    let c0 = b[0] * a[2] - b[2] * a[0];
    const SLACK: f64 = 1e-9;
    let inside = |x: f64| (-SLACK..=1.0 + SLACK).contains(&x);
    let mut best: Option<(f64, f64)> = None;
    for u in quadratic_roots(c2, c1, c0) {
        if !inside(u) {
            continue;
        }
        let den_a = a[2] + a[3] * u;
        let den_b = b[2] + b[3] * u;
        let v = if den_a.abs() >= den_b.abs() {
            if den_a == 0.0 {
                continue;
            }
            -(a[0] + a[1] * u) / den_a
        } else {
            -(b[0] + b[1] * u) / den_b
        };
        if inside(v) {
            let resid = eval_bilinear(a, u, v).abs() + eval_bilinear(b, u, v).abs();
            let better = match best {
                None => true,
                Some((bu, bv)) => resid < eval_bilinear(a, bu, bv).abs() + eval_bilinear(b, bu, bv).abs(),
            };
            if better {
                best = Some((u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)));
            }
        }
    }
    let (u, v, degenerate) = match best {
        Some((u, v)) => (u, v, false),
        None => (0.5, 0.5, true),
    };
    Ok(Refinement {
        kx: g.kx(i) + u * g.hx(),
        ky: g.ky(j) + v * g.hy(),
        u,
        v,
        degenerate,
    })
}

fn bilinear_density(w: &WaveField, i: usize, j: usize, u: f64, v: f64) -> f64 {
    let d = [
        w.density_at(i, j),
        w.density_at(i + 1, j),
        w.density_at(i + 1, j + 1),
        w.density_at(i, j + 1),
    ];
    eval_bilinear(bilinear(d), u, v).max(0.0)
}

/// Census, refinement, and dead-region filtering.
pub fn detect_vortices(w: &WaveField) -> Result<Vec<Vortex>> {
    let max_d = w.max_density();
    let mut out = Vec::new();
    for p in winding_census(w) {
        let r = refine_center(w, &p)?;
        let min_density = bilinear_density(w, p.i, p.j, r.u, r.v);
        if max_d == 0.0 || min_density < DEAD_REGION_RATIO * max_d {
            continue;
        }
        out.push(Vortex {
            center_kx: r.kx,
            center_ky: r.ky,
            charge: p.winding,
            min_density,
            plaquette_ij: [p.i, p.j],
            refined: !r.degenerate,
            high_charge: p.winding.abs() > 1,
        });
    }
    Ok(out)
}

/// Axis-aligned rectangle of nodes `[i0, i1] × [j0, j1]`, traversed counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLoop {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl NodeLoop {
    pub fn new(i0: usize, j0: usize, i1: usize, j1: usize) -> Result<Self> {
        if i1 <= i0 || j1 <= j0 {
            return Err(Error::InvalidParameter("loop must span at least one cell".into()));
        }
        Ok(Self { i0, j0, i1, j1 })
    }

    /// Square loop through the nodes nearest to `centre ± half_width`.
    pub fn around(grid: &CartesianGrid, center: (f64, f64), half_width: f64) -> Result<Self> {
        let (i0, j0) = grid.nearest(center.0 - half_width, center.1 - half_width);
        let (i1, j1) = grid.nearest(center.0 + half_width, center.1 + half_width);
        Self::new(i0, j0, i1, j1)
    }

    /// Node sequence around the loop, closing back on the first node.
    pub fn nodes(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        v.extend((self.i0..self.i1).map(|i| (i, self.j0)));
        v.extend((self.j0..self.j1).map(|j| (self.i1, j)));
        v.extend((self.i0 + 1..=self.i1).rev().map(|i| (i, self.j1)));
        v.extend((self.j0 + 1..=self.j1).rev().map(|j| (self.i0, j)));
        v.push((self.i0, self.j0));
        v
    }

    fn check(&self, grid: &CartesianGrid) -> Result<()> {
        if self.i1 >= grid.nx || self.j1 >= grid.ny {
            return Err(Error::InvalidParameter("loop leaves the grid".into()));
        }
        Ok(())
    }
}

/// `∮∇χ·dl` from wrapped phase differences; `2π·q` around a charge-`q` vortex.
pub fn phase_circulation(w: &WaveField, lp: &NodeLoop) -> Result<f64> {
    lp.check(&w.grid)?;
    let nodes = lp.nodes();
    Ok(nodes
        .windows(2)
        .map(|s| wrap_angle(principal_arg(w.at(s[1].0, s[1].1)) - principal_arg(w.at(s[0].0, s[0].1))))
        .sum())
}

/// Trapezoidal `∮ v·dl` around the loop.
pub fn vector_circulation(field: &VectorField2D, lp: &NodeLoop) -> Result<f64> {
    let g = &field.grid;
    lp.check(g)?;
    let nodes = lp.nodes();
    for &(i, j) in &nodes {
        if !field.is_valid(i, j) {
            return Err(Error::MaskedLoop { i, j });
        }
    }
    let mut total = 0.0;
    for s in nodes.windows(2) {
        let (a, b) = (s[0], s[1]);
        let va = field.at(a.0, a.1).unwrap_or_default();
        let vb = field.at(b.0, b.1).unwrap_or_default();
        let dx = g.kx(b.0) - g.kx(a.0);
        let dy = g.ky(b.1) - g.ky(a.1);
        total += 0.5 * ((va.0 + vb.0) * dx + (va.1 + vb.1) * dy);
    }
    Ok(total)
}

/// Run metadata stored with a vortex report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub pulse: Option<crate::pulse::PulseParams>,
    pub grid: CartesianGrid,
    pub t_eval: f64,
    pub include_free_phase: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexReport {
    pub format: String,
    pub metadata: ReportMetadata,
    pub vortices: Vec<Vortex>,
}

impl VortexReport {
    pub fn new(metadata: ReportMetadata, vortices: Vec<Vortex>) -> Self {
        Self {
            format: FORMAT_HEADER.trim_start_matches("# ").to_string(),
            metadata,
            vortices,
        }
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    /// One line per vortex plus a count.
    pub fn summary(&self) -> String {
        let mut s = format!("vortices: {}\n", self.vortices.len());
        for v in &self.vortices {
            s.push_str(&format!(
                "  charge {:+} at (kx, ky) = ({:.4}, {:.4}), density {:.3e}{}\n",
                v.charge,
                v.center_kx,
                v.center_ky,
                v.min_density,
                if v.high_charge { " [high charge]" } else { "" }
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use std::f64::consts::PI;

    fn grid_h002() -> CartesianGrid {
        // spacing 0.02
        CartesianGrid::new((-0.5, 0.5), (1.8, 2.8), 51, 51).unwrap()
    }

    fn synthetic(a: f64, b: f64) -> WaveField {
        WaveField::from_fn(grid_h002(), |x, y| C64::new(x - a, y - b)).unwrap()
    }

    #[test]
    fn single_positive_vortex() {
        let (a, b) = (0.013, 2.297);
        let w = synthetic(a, b);
        let census = winding_census(&w);
        assert_eq!(census.len(), 1);
        let p = census[0];
        assert_eq!(p.winding, 1);
        let g = w.grid;
        assert!(g.kx(p.i) <= a && a <= g.kx(p.i + 1));
        assert!(g.ky(p.j) <= b && b <= g.ky(p.j + 1));
        let r = refine_center(&w, &p).unwrap();
        assert!(!r.degenerate);
        assert!((r.kx - a).abs() < 1e-3 && (r.ky - b).abs() < 1e-3);
        assert!((r.kx - a).abs() < 1e-12 && (r.ky - b).abs() < 1e-12);
    }

    #[test]
    fn conjugate_flips_charge() {
        let w = synthetic(0.013, 2.297).map_values(|v| v.conj());
        let v = detect_vortices(&w).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].charge, -1);
        assert!(v[0].refined);
    }

    #[test]
    fn refine_rejects_cell_without_winding() {
        let g = grid_h002();
        let w = WaveField::from_fn(g, |x, _| C64::new(x, 0.7)).unwrap();
        let p = Plaquette { i: 10, j: 10, winding: 1 };
        assert!(matches!(refine_center(&w, &p), Err(Error::NoWinding { .. })));
    }

    #[test]
    fn circulation_examples() {
        let (a, b) = (0.013, 2.297);
        let w = synthetic(a, b);
        let around = NodeLoop::around(&w.grid, (a, b), 0.2).unwrap();
        assert!((phase_circulation(&w, &around).unwrap() - 2.0 * PI).abs() < 1e-9);
        let empty = NodeLoop::new(0, 0, 10, 10).unwrap();
        assert!(phase_circulation(&w, &empty).unwrap().abs() < 1e-6);
        let conj = w.map_values(|v| v.conj());
        assert!((phase_circulation(&conj, &around).unwrap() + 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn winding_is_additive() {
        // +1 at (−0.2, 2.1), +1 at (0.2, 2.5), −1 at (0.25, 2.05)
        let g = grid_h002();
        let w = WaveField::from_fn(g, |x, y| {
            C64::new(x + 0.2, y - 2.1) * C64::new(x - 0.2, y - 2.5) * C64::new(x - 0.25, -(y - 2.05))
        })
        .unwrap();
        let census = winding_census(&w);
        assert_eq!(census.iter().map(|p| p.winding).sum::<i32>(), 1);
        let all = NodeLoop::new(1, 1, 49, 49).unwrap();
        let left = NodeLoop::new(1, 1, 20, 49).unwrap();
        let right = NodeLoop::new(20, 1, 49, 49).unwrap();
        let c = |l: &NodeLoop| (phase_circulation(&w, l).unwrap() / (2.0 * PI)).round() as i32;
        assert_eq!(c(&all), 1);
        assert_eq!(c(&left) + c(&right), c(&all));
        let inside = |l: &NodeLoop| {
            census
                .iter()
                .filter(|p| p.i >= l.i0 && p.i < l.i1 && p.j >= l.j0 && p.j < l.j1)
                .map(|p| p.winding)
                .sum::<i32>()
        };
        assert_eq!(c(&left), inside(&left));
        assert_eq!(c(&right), inside(&right));
    }

    #[test]
    fn vector_circulation_of_rotation() {
        // v = (−y, x) has circulation 2·area
        let g = CartesianGrid::square(1.0, 21).unwrap();
        let n = g.len();
        let mut f = VectorField2D {
            grid: g,
            vx: vec![0.0; n],
            vy: vec![0.0; n],
            valid: vec![true; n],
        };
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                f.vx[k] = -g.ky(j);
                f.vy[k] = g.kx(i);
            }
        }
        let lp = NodeLoop::new(5, 5, 15, 15).unwrap();
        assert!((vector_circulation(&f, &lp).unwrap() - 2.0).abs() < 1e-12);
        f.valid[g.index(5, 9)] = false;
        assert!(matches!(vector_circulation(&f, &lp), Err(Error::MaskedLoop { .. })));
    }

    #[test]
    fn json_report() {
        let w = synthetic(0.013, 2.297);
        let v = detect_vortices(&w).unwrap();
        let rep = VortexReport::new(
            ReportMetadata {
                pulse: None,
                grid: w.grid,
                t_eval: 0.0,
                include_free_phase: false,
            },
            v,
        );
        let mut buf = Vec::new();
        rep.write_json(&mut buf).unwrap();
        let back: VortexReport = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, rep);
        assert_eq!(back.format, "vortexscope-format 1");
        assert!(rep.summary().starts_with("vortices: 1"));
    }
}

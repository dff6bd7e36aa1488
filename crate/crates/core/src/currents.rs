//! Momentum-space probability currents.
//!
//! * standard: `j = k |Ψ̃|²`, radial by construction and blind to the phase;
//! * symmetric: `j̄ = −Im[Ψ̃* ∇_k Ψ̃]`, which equals `−|Ψ̃|² ∇_k χ`.
//!
//! Gradients use fifth-point (fourth-order) central differences, so the two
//! outermost rings of the grid are masked.

use std::io::Write;

use rayon::prelude::*;

use crate::export::fmt_f64;
use crate::wavefield::{CartesianGrid, WaveField};
use crate::{wrap_angle, Result, C64, FORMAT_HEADER};

/// Density below which the phase gradient is not evaluated.
pub const PHASE_GRADIENT_DENSITY_FLOOR: f64 = 1e-20;
/// Nodes on each side consumed by the 4th-order stencil.
pub const STENCIL_RING: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2D {
    pub grid: CartesianGrid,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub valid: Vec<bool>,
}

impl VectorField2D {
    pub fn at(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        let n = self.grid.index(i, j);
        self.valid[n].then(|| (self.vx[n], self.vy[n]))
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[self.grid.index(i, j)]
    }

    pub fn magnitude(&self, n: usize) -> f64 {
        self.vx[n].hypot(self.vy[n])
    }

    /// Field divided node-wise by `density`, valid only where `density > floor`.
    pub fn divided_by(&self, density: &[f64], floor: f64) -> Self {
        let mut out = self.clone();
        for n in 0..out.vx.len() {
            if out.valid[n] && density[n] > floor {
                out.vx[n] /= density[n];
                out.vy[n] /= density[n];
            } else {
                out.valid[n] = false;
                out.vx[n] = 0.0;
                out.vy[n] = 0.0;
            }
        }
        out
    }

    /// CSV: `kx, ky, vx, vy, valid_flag`.
    pub fn write_csv<W: Write>(&self, mut out: W, kind: &str) -> Result<()> {
        let g = &self.grid;
        writeln!(out, "{FORMAT_HEADER}")?;
        writeln!(out, "# kind = {kind}")?;
        writeln!(out, "# nx = {}", g.nx)?;
        writeln!(out, "# ny = {}", g.ny)?;
        writeln!(out, "kx,ky,vx,vy,valid_flag")?;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let n = g.index(i, j);
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_f64(g.kx(i)),
                    fmt_f64(g.ky(j)),
                    fmt_f64(self.vx[n]),
                    fmt_f64(self.vy[n]),
                    u8::from(self.valid[n])
                )?;
            }
        }
        Ok(())
    }
}

/// `j = (kx, ky)·|Ψ̃|²`; valid everywhere.
pub fn standard_current(w: &WaveField) -> VectorField2D {
    let g = w.grid;
    let mut vx = Vec::with_capacity(g.len());
    let mut vy = Vec::with_capacity(g.len());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let d = w.density_at(i, j);
            vx.push(g.kx(i) * d);
            vy.push(g.ky(j) * d);
        }
    }
    VectorField2D {
        grid: g,
        vx,
        vy,
        valid: vec![true; g.len()],
    }
}

fn interior(g: &CartesianGrid, i: usize, j: usize) -> bool {
    i >= STENCIL_RING && j >= STENCIL_RING && i + STENCIL_RING < g.nx && j + STENCIL_RING < g.ny
}

/// `(f(+1) − f(−1), f(+2) − f(−2))` combined into the 4th-order derivative.
fn d4(near: f64, far: f64, h: f64) -> f64 {
    (8.0 * near - far) / (12.0 * h)
}

fn d4c(near: C64, far: C64, h: f64) -> C64 {
    (8.0 * near - far) / (12.0 * h)
}

/// Builds a field from a per-node closure returning `None` for masked nodes.
fn build<F>(g: CartesianGrid, f: F) -> VectorField2D
where
    F: Fn(usize, usize) -> Option<(f64, f64)> + Sync,
{
    let rows: Vec<Vec<Option<(f64, f64)>>> = (0..g.ny)
        .into_par_iter()
        .map(|j| (0..g.nx).map(|i| f(i, j)).collect())
        .collect();
    let mut vx = Vec::with_capacity(g.len());
    let mut vy = Vec::with_capacity(g.len());
    let mut valid = Vec::with_capacity(g.len());
    for v in rows.into_iter().flatten() {
        let (x, y) = v.unwrap_or((0.0, 0.0));
        vx.push(x);
        vy.push(y);
        valid.push(v.is_some());
    }
    VectorField2D { grid: g, vx, vy, valid }
}

/// `j̄ = −Im[Ψ̃* ∇Ψ̃]`.
pub fn symmetric_current(w: &WaveField) -> VectorField2D {
    let g = w.grid;
    let (hx, hy) = (g.hx(), g.hy());
    build(g, |i, j| {
        if !interior(&g, i, j) {
            return None;
        }
        let psi = w.at(i, j);
        let dx = d4c(
            w.at(i + 1, j) - w.at(i - 1, j),
            w.at(i + 2, j) - w.at(i - 2, j),
            hx,
        );
        let dy = d4c(
            w.at(i, j + 1) - w.at(i, j - 1),
            w.at(i, j + 2) - w.at(i, j - 2),
            hy,
        );
        let c = psi.conj();
        Some((-(c * dx).im, -(c * dy).im))
    })
}

/// `−|Ψ̃|² ∇χ`, with `∇χ` from wrapped phase differences.
pub fn phase_gradient_current(w: &WaveField) -> VectorField2D {
    let g = w.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let arg = |i: usize, j: usize| {
        let v = w.at(i, j);
        v.im.atan2(v.re)
    };
    let dead = |i: usize, j: usize| w.density_at(i, j) < PHASE_GRADIENT_DENSITY_FLOOR;
    build(g, |i, j| {
        if !interior(&g, i, j) {
            return None;
        }
        let stencil = [
            (i, j),
            (i - 1, j),
            (i + 1, j),
            (i - 2, j),
            (i + 2, j),
            (i, j - 1),
            (i, j + 1),
            (i, j - 2),
            (i, j + 2),
        ];
        if stencil.iter().any(|&(a, b)| dead(a, b)) {
            return None;
        }
        let gx = d4(
            wrap_angle(arg(i + 1, j) - arg(i - 1, j)),
            wrap_angle(arg(i + 2, j) - arg(i - 2, j)),
            hx,
        );
        let gy = d4(
            wrap_angle(arg(i, j + 1) - arg(i, j - 1)),
            wrap_angle(arg(i, j + 2) - arg(i, j - 2)),
            hy,
        );
        let d = w.density_at(i, j);
        Some((-d * gx, -d * gy))
    })
}

/// `max |a − b| / max |b|` over nodes valid in both fields where `weight[n] > threshold`.
pub fn relative_linf_deviation(a: &VectorField2D, b: &VectorField2D, weight: &[f64], threshold: f64) -> f64 {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for n in 0..a.vx.len() {
        if !(a.valid[n] && b.valid[n] && weight[n] > threshold) {
            continue;
        }
        num = num.max((a.vx[n] - b.vx[n]).hypot(a.vy[n] - b.vy[n]));
        den = den.max(b.magnitude(n));
    }
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Arrow scaling for the SVG quiver plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuiverStyle {
    /// Draw every `stride`-th node along each axis.
    pub stride: usize,
    /// Compress magnitudes as `ln(1 + |v|/v_ref)` with `v_ref = 1e-4·max|v|`.
    pub log_compress: bool,
    /// Canvas width in pixels; height follows the window aspect ratio.
    pub width: f64,
}

impl Default for QuiverStyle {
    fn default() -> Self {
        Self {
            stride: 16,
            log_compress: true,
            width: 800.0,
        }
    }
}

/// Quiver plot of `field`, optionally over a `ln|Ψ̃|²` background and with
/// vortex centres circled.
pub fn write_quiver_svg<W: Write>(
    mut out: W,
    field: &VectorField2D,
    background: Option<&[f64]>,
    markers: &[(f64, f64)],
    style: &QuiverStyle,
) -> Result<()> {
    let g = &field.grid;
    let stride = style.stride.max(1);
    let w = style.width;
    let span_x = g.kx_max - g.kx_min;
    let span_y = g.ky_max - g.ky_min;
    let h = w * span_y / span_x;
    let sx = |kx: f64| (kx - g.kx_min) / span_x * w;
    let sy = |ky: f64| (g.ky_max - ky) / span_y * h;

    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}">"#
    )?;
    writeln!(out, "<!-- vortexscope-format 1 -->")?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;

    if let Some(bg) = background {
        let (lo, hi) = bg
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let range = (hi - lo).max(1e-300);
        let cw = w / (g.nx as f64 / stride as f64).ceil();
        let ch = h / (g.ny as f64 / stride as f64).ceil();
        for j in (0..g.ny).step_by(stride) {
            for i in (0..g.nx).step_by(stride) {
                let v = ((bg[g.index(i, j)] - lo) / range * 255.0).round() as u8;
                writeln!(
                    out,
                    r##"<rect x="{:.3}" y="{:.3}" width="{cw:.3}" height="{ch:.3}" fill="#{v:02x}{v:02x}{v:02x}"/>"##,
                    sx(g.kx(i)) - 0.5 * cw,
                    sy(g.ky(j)) - 0.5 * ch,
                )?;
            }
        }
    }

    let max_mag = (0..g.len())
        .filter(|&n| field.valid[n])
        .map(|n| field.magnitude(n))
        .fold(0.0, f64::max);
    let v_ref = 1e-4 * max_mag;
    let compress = |m: f64| {
        if style.log_compress {
            (1.0 + m / v_ref).ln()
        } else {
            m
        }
    };
    let full = compress(max_mag);
    let max_len = 0.9 * stride as f64 * w / g.nx as f64;
    if max_mag > 0.0 {
        writeln!(out, r#"<g stroke="crimson" stroke-width="1" fill="none">"#)?;
        for j in (0..g.ny).step_by(stride) {
            for i in (0..g.nx).step_by(stride) {
                let n = g.index(i, j);
                let m = field.magnitude(n);
                if !field.valid[n] || m == 0.0 {
                    continue;
                }
                let len = max_len * compress(m) / full;
                let (ux, uy) = (field.vx[n] / m, field.vy[n] / m);
                let (x0, y0) = (sx(g.kx(i)), sy(g.ky(j)));
                let (x1, y1) = (x0 + len * ux, y0 - len * uy);
                let head = 0.3 * len;
                let (ax, ay) = (-ux, uy);
                let (lx, ly) = (x1 + head * (ax * 0.866 - ay * 0.5), y1 + head * (ax * 0.5 + ay * 0.866));
                let (rx, ry) = (x1 + head * (ax * 0.866 + ay * 0.5), y1 + head * (-ax * 0.5 + ay * 0.866));
                writeln!(
                    out,
                    r#"<path d="M{x0:.2} {y0:.2}L{x1:.2} {y1:.2}M{lx:.2} {ly:.2}L{x1:.2} {y1:.2}L{rx:.2} {ry:.2}"/>"#
                )?;
            }
        }
        writeln!(out, "</g>")?;
    }
    for &(kx, ky) in markers {
        writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="8" stroke="royalblue" stroke-width="2" fill="none"/>"#,
            sx(kx),
            sy(ky)
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane(n: usize, a: f64, b: f64, amp: f64) -> WaveField {
        let g = CartesianGrid::square(1.0, n).unwrap();
        WaveField::from_fn(g, |x, y| amp * C64::new(0.0, a * x + b * y).exp()).unwrap()
    }

    #[test]
    fn standard_current_is_radial() {
        let g = CartesianGrid::square(2.0, 33).unwrap();
        let w = WaveField::from_fn(g, |x, y| C64::new(x - 0.3, y * y + 0.1)).unwrap();
        let j = standard_current(&w);
        let d = w.density();
        for jj in 0..g.ny {
            for i in 0..g.nx {
                let n = g.index(i, jj);
                let (kx, ky) = (g.kx(i), g.ky(jj));
                let cross = j.vx[n] * ky - j.vy[n] * kx;
                let scale = (j.vx[n] * ky).abs() + (j.vy[n] * kx).abs();
                assert!(cross.abs() <= 2.0 * f64::EPSILON * scale);
                assert!(j.valid[n]);
                if kx == 0.0 && ky == 0.0 {
                    assert_eq!((j.vx[n], j.vy[n]), (0.0, 0.0));
                }
                let _ = d[n];
            }
        }
        // node (1, 0) with density d → (d, 0)
        let g = CartesianGrid::new((0.0, 1.5), (-1.0, 1.0), 16, 17).unwrap();
        let w = WaveField::from_fn(g, |_, _| C64::new(0.0, 2.0)).unwrap();
        let j = standard_current(&w);
        assert_eq!(j.at(10, 8), Some((4.0, 0.0)));
    }

    #[test]
    fn real_field_has_no_symmetric_current() {
        let g = CartesianGrid::square(1.0, 24).unwrap();
        let w = WaveField::from_fn(g, |x, y| C64::new(1.0 + x * y - x * x, 0.0)).unwrap();
        let j = symmetric_current(&w);
        for n in 0..g.len() {
            if j.valid[n] {
                assert_eq!((j.vx[n], j.vy[n]), (0.0, 0.0));
            }
        }
        // mask is exactly the two outer rings
        assert_eq!(j.valid.iter().filter(|&&v| v).count(), 20 * 20);
    }

    #[test]
    fn plane_phase_gives_constant_current() {
        let (a, b, amp) = (1.3, -0.7, 0.5);
        let w = plane(65, a, b, amp);
        let sym = symmetric_current(&w);
        let pg = phase_gradient_current(&w);
        for n in 0..w.grid.len() {
            if sym.valid[n] {
                assert!((sym.vx[n] + amp * amp * a).abs() < 1e-7);
                assert!((sym.vy[n] + amp * amp * b).abs() < 1e-7);
                assert!((pg.vx[n] + amp * amp * a).abs() < 1e-7);
                assert!((pg.vy[n] + amp * amp * b).abs() < 1e-7);
            }
        }
        let constant = WaveField::from_fn(w.grid, |_, _| C64::from_polar(0.3, 1.1)).unwrap();
        let z = phase_gradient_current(&constant);
        assert!(z.vx.iter().chain(&z.vy).all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn gradient_stencil_is_fourth_order() {
        let (a, b) = (5.0, 3.0);
        let err = |n: usize| {
            let w = plane(n, a, b, 1.0);
            let j = symmetric_current(&w);
            (0..w.grid.len())
                .filter(|&k| j.valid[k])
                .map(|k| (j.vx[k] + a).abs().max((j.vy[k] + b).abs()))
                .fold(0.0, f64::max)
        };
        let e1 = err(33);
        let e2 = err(65);
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn phase_gradient_masks_dead_nodes() {
        let g = CartesianGrid::square(1.0, 21).unwrap();
        let w = WaveField::from_fn(g, |x, y| if x.abs() < 1e-9 && y.abs() < 1e-9 { C64::new(0.0, 0.0) } else { C64::new(x, y) }).unwrap();
        let j = phase_gradient_current(&w);
        assert!(!j.is_valid(10, 10));
        assert!(!j.is_valid(12, 10));
        assert!(j.is_valid(13, 10));
    }

    #[test]
    fn svg_has_arrows_and_markers() {
        let w = plane(32, 1.0, 2.0, 1.0);
        let j = symmetric_current(&w);
        let mut buf = Vec::new();
        let style = QuiverStyle {
            stride: 4,
            ..Default::default()
        };
        write_quiver_svg(&mut buf, &j, Some(&w.log_density()), &[(0.0, 0.5)], &style).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("<path"));
        assert!(text.contains("<circle"));
        assert!(text.trim_end().ends_with("</svg>"));
    }

    proptest! {
        #[test]
        fn symmetric_current_ignores_global_phase(theta in -3.0f64..3.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let g = CartesianGrid::square(1.0, 16).unwrap();
            let w = WaveField::from_fn(g, |x, y| C64::new(x + a * y, 0.3 + b * x * y)).unwrap();
            let rot = w.map_values(|v| v * C64::from_polar(1.0, theta));
            let j0 = symmetric_current(&w);
            let j1 = symmetric_current(&rot);
            for n in 0..g.len() {
                let scale = 1.0 + j0.magnitude(n);
                prop_assert!((j0.vx[n] - j1.vx[n]).abs() < 1e-12 * scale);
                prop_assert!((j0.vy[n] - j1.vy[n]).abs() < 1e-12 * scale);
            }
        }
    }
}

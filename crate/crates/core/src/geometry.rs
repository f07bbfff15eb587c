//! Exact overlap measures between parabolic cylinders and tensor-grid cells.
//!
//! A cylinder `Q_ρ(t₀, x₀) = (t₀ − ρ², t₀ + ρ²) × B_ρ(x₀)` uses the Euclidean
//! ball in `x`. Supported spatial dimensions are 1 and 2.

use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Volume of the Euclidean unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        _ => PI / (n as f64 / 2.0) * unit_ball_volume(n - 2),
    }
}

/// Measure of `Q_1` in `R^{n+1}`: time length 2 times the unit-ball volume.
pub fn unit_cylinder_measure(n: usize) -> f64 {
    2.0 * unit_ball_volume(n)
}

/// `|Q_ρ| = C_{n+2} ρ^{n+2}`.
pub fn cylinder_measure(n: usize, rho: f64) -> f64 {
    unit_cylinder_measure(n) * rho.powi(n as i32 + 2)
}

pub fn interval_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// `∫ sqrt(R² − x²) dx` antiderivative.
fn half_chord_primitive(x: f64, r: f64) -> f64 {
    let x = x.clamp(-r, r);
    0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).asin())
}

/// Area of `{(x, y) ∈ disc(0, R) : x ≤ X, y ≤ Y}`.
fn disc_corner_area(x_max: f64, y_max: f64, r: f64) -> f64 {
    let hi = x_max.min(r);
    if hi <= -r || y_max <= -r {
        return 0.0;
    }
    // Breakpoints where the chord top sqrt(R²−x²) crosses y = Y.
    let mut cuts = vec![-r, hi];
    if y_max.abs() < r {
        let c = (r * r - y_max * y_max).sqrt();
        for v in [-c, c] {
            if v > -r && v < hi {
                cuts.push(v);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let m = 0.5 * (a + b);
        let h = (r * r - m * m).max(0.0).sqrt();
        let hp = half_chord_primitive(b, r) - half_chord_primitive(a, r);
        if y_max >= h {
            area += 2.0 * hp;
        } else if y_max > -h {
            area += y_max * (b - a) + hp;
        }
    }
    area
}

/// Area of the intersection of the disc of radius `r` centered at `c` with
/// the rectangle `[lo₀, hi₀] × [lo₁, hi₁]`.
pub fn disc_rect_area(c: [f64; 2], r: f64, lo: [f64; 2], hi: [f64; 2]) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let (x0, x1) = (lo[0] - c[0], hi[0] - c[0]);
    let (y0, y1) = (lo[1] - c[1], hi[1] - c[1]);
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let f = |x: f64, y: f64| disc_corner_area(x, y, r);
    (f(x1, y1) - f(x0, y1) - f(x1, y0) + f(x0, y0)).max(0.0)
}

/// Measure of `B_r(c) ∩ Π[lo_d, hi_d]` for n ∈ {1, 2}.
pub fn ball_box_overlap(c: &[f64], r: f64, lo: &[f64], hi: &[f64]) -> f64 {
    match c.len() {
        1 => interval_overlap(c[0] - r, c[0] + r, lo[0], hi[0]),
        2 => disc_rect_area([c[0], c[1]], r, [lo[0], lo[1]], [hi[0], hi[1]]),
        n => panic!("ball_box_overlap supports n ∈ {{1,2}}, got {n}"),
    }
}

pub(crate) fn check_dimension(n: usize) -> Result<()> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        domain(format!("spatial dimension {n} not supported (n ∈ {{1,2}})"))
    }
}

/// Radii at which `B_ρ(c)` changes which cell faces it crosses: distances
/// to edge hyperplanes and, for n = 2, to edge corners.
pub fn ball_kink_radii(c: &[f64], edges: &[Vec<f64>], out: &mut Vec<f64>) {
    for (d, e) in edges.iter().enumerate() {
        out.extend(e.iter().map(|v| (v - c[d]).abs()));
    }
    if c.len() == 2 {
        for &x in &edges[0] {
            for &y in &edges[1] {
                out.push((x - c[0]).hypot(y - c[1]));
            }
        }
    }
}

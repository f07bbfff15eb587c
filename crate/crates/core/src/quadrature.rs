//! Gauss–Legendre rules cached per degree, composite and log-spaced panel
//! rules built on them, and pairwise summation.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

/// Nodes on [-1, 1] and weights of the degree-`n` Gauss–Legendre rule,
/// ordered by increasing node.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static [(f64, f64)]>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("quadrature cache poisoned");
    map.entry(n).or_insert_with(|| {
        let degree = NonZeroUsize::new(n).expect("quadrature degree must be positive");
        let mut pairs = GaussLegendre::new(degree).as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Box::leak(pairs.into_boxed_slice())
    })
}

/// ∫_a^b f with a single degree-`n` Gauss–Legendre panel.
pub fn gl<F: FnMut(f64) -> f64>(n: usize, a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut acc = 0.0;
    for &(x, w) in gauss_legendre(n) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// ∫_a^b f with `panels` equal panels of degree `n`.
pub fn gl_composite<F: FnMut(f64) -> f64>(n: usize, panels: usize, a: f64, b: f64, mut f: F) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = if p + 1 == panels { b } else { lo + h };
        acc += gl(n, lo, hi, &mut f);
    }
    acc
}

/// ∫_a^b f(t) dt for 0 < a < b, substituting t = e^u and splitting [ln a, ln b]
/// into panels of at most one decade with `n` nodes each.
///
/// Suited to integrands with power-type behavior at the left endpoint.
pub fn gl_log<F: FnMut(f64) -> f64>(n: usize, a: f64, b: f64, mut f: F) -> f64 {
    assert!(a > 0.0 && b > a, "gl_log needs 0 < a < b");
    let (la, lb) = (a.ln(), b.ln());
    let decade = std::f64::consts::LN_10;
    let panels = ((lb - la) / decade).ceil().max(1.0) as usize;
    let h = (lb - la) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = la + p as f64 * h;
        acc += gl(n, lo, lo + h, |u| {
            let t = u.exp();
            f(t) * t
        });
    }
    acc
}

/// Pairwise summation: deterministic and with O(log n) error growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

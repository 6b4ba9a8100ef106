//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls the routine it checks: spatial integrals are done by
//! brute-force tensor quadrature and moments come from cumulant formulas.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;
use sbm_core::kernel::{Endpoint, HeatKernelFactor, KernelGraph};
use sbm_core::rng::StreamRng;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on `P_m`.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=m {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite rule with `panels` 16-point panels on `[lo, hi]`.
pub fn composite_nodes(lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    let base = gauss_legendre(16);
    let h = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * base.len());
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * h;
        out.extend(base.iter().map(|&(x, w)| (mid + 0.5 * h * x, 0.5 * h * w)));
    }
    out
}

fn pdf(v: f64, d: f64) -> f64 {
    (-d * d / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

/// `int prod factors dz` for graphs with at most two variables, by tensor
/// Gauss-Legendre over a box covering every fixed location with a wide margin.
pub fn brute_force_integral(g: &KernelGraph) -> f64 {
    assert!(g.n_vars() <= 2, "brute force is for n' <= 2");
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut spread = 0.0;
    for f in g.factors() {
        spread += f.variance;
        for e in [f.left, f.right] {
            if let Endpoint::Fixed(y) = e {
                lo = lo.min(y);
                hi = hi.max(y);
            }
        }
    }
    let margin = 12.0 * spread.sqrt();
    let (lo, hi) = (lo - margin, hi + margin);
    let nodes = composite_nodes(lo, hi, ((hi - lo) * 2.0).ceil() as usize);
    let eval = |z: &[f64]| -> f64 {
        let at = |e: Endpoint| match e {
            Endpoint::Fixed(y) => y,
            Endpoint::Var(k) => z[k],
        };
        g.factors()
            .iter()
            .map(|f| pdf(f.variance, at(f.left) - at(f.right)))
            .product()
    };
    let sum = match g.n_vars() {
        0 => eval(&[]),
        1 => nodes.iter().map(|&(z, w)| w * eval(&[z])).sum(),
        _ => nodes
            .iter()
            .map(|&(z0, w0)| w0 * nodes.iter().map(|&(z1, w1)| w1 * eval(&[z0, z1])).sum::<f64>())
            .sum(),
    };
    g.prefactor() * sum
}

/// A random connected graph on `n_vars <= 2` variables. Variances lie in
/// [0.2, 2] and fixed locations in [-2, 2], so the brute-force box resolves
/// every factor.
pub fn random_graph(rng: &mut StreamRng, n_vars: usize) -> KernelGraph {
    let var = |rng: &mut StreamRng| rng.random_range(0.2..2.0);
    let fixed = |rng: &mut StreamRng| Endpoint::Fixed(rng.random_range(-2.0..2.0));
    let mut fs = Vec::new();
    // Anchor variable 0 to a fixed point and chain the rest to it or to fresh points.
    for k in 0..n_vars {
        let left = if k == 0 || rng.random_bool(0.5) {
            fixed(rng)
        } else {
            Endpoint::Var(k - 1)
        };
        fs.push(HeatKernelFactor::new(var(rng), left, Endpoint::Var(k)).unwrap());
    }
    for _ in 0..rng.random_range(0..=3) {
        let pick = |rng: &mut StreamRng| {
            if n_vars == 0 || rng.random_bool(0.4) {
                fixed(rng)
            } else {
                Endpoint::Var(rng.random_range(0..n_vars))
            }
        };
        let (a, b) = (pick(rng), pick(rng));
        if a == b {
            continue;
        }
        fs.push(HeatKernelFactor::new(var(rng), a, b).unwrap());
    }
    if fs.is_empty() {
        fs.push(HeatKernelFactor::new(var(rng), fixed(rng), fixed(rng)).unwrap());
    }
    KernelGraph::new(n_vars, fs, rng.random_range(-1.0..1.0)).unwrap()
}

/// Third moment for a constant density `K`, from the cumulants of the
/// log-Laplace equation `dV = V''/2 - V^2/2`:
/// `k1 = K`, `k2 = K sqrt(t/pi)`, `k3 = K t / 2`.
pub fn third_moment_constant(k: f64, t: f64) -> f64 {
    let k2 = k * (t / PI).sqrt();
    k.powi(3) + 3.0 * k * k2 + k * t / 2.0
}

/// `E[u^2]` for a constant density: `K^2 + K sqrt(t/pi)`.
pub fn second_moment_constant(k: f64, t: f64) -> f64 {
    k * k + k * (t / PI).sqrt()
}

/// `|J_{n,n'}|` in exact integer arithmetic.
pub fn triple_count(n: usize, np: usize) -> u128 {
    let f = |m: usize| (1..=m as u128).product::<u128>();
    f(n) * f(n - 1) / ((1u128 << np) * f(n - np) * f(n - np - 1))
}

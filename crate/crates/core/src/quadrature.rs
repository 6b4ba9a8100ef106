//! Integration over the ordered time simplex `0 < s_n' < ... < s_1 < t`.
//!
//! Integrands of the moment expansion blow up like `(t - s_i)^{-1/2}` as branch
//! times approach the observation time. Two estimators are provided:
//!
//! - **importance-mc**: coordinates are drawn i.i.d. with density proportional to
//!   `(t - s)^{-1/2}` and sorted, so the sampling density on the simplex is
//!   exactly proportional to `prod_i (t - s_i)^{-1/2}` and cancels that
//!   singularity.
//! - **qmc-substituted**: the distances `t - s_i` are substituted by squares,
//!   `t - s_i = t v_i^2`, with `v` the sorted coordinates of a point in the unit
//!   cube. The Jacobian `prod_i 2 t v_i` absorbs the same singularities as the
//!   importance density and is smooth in the cube. Points come from
//!   Owen-scrambled Sobol sequences; independent scramblings give the error
//!   estimate.
//!
//! Work is cut into fixed chunks with one random stream per chunk and reduced in
//! chunk order, so results are bit-identical for a given seed regardless of the
//! number of threads.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, stream};

/// Evaluations per importance-sampling chunk.
pub const CHUNK: u64 = 1024;

/// Independent scramblings used by the quasi-Monte Carlo estimator.
pub const QMC_REPLICATES: u64 = 16;

/// Points per scrambled Sobol sequence are capped by the generator.
pub const QMC_MAX_POINTS: u64 = 1 << 16;

/// A nonnegative function on the open ordered simplex of a given dimension.
pub trait SimplexIntegrand: Sync {
    fn dimension(&self) -> usize;
    fn evaluate(&self, s: &[f64]) -> Result<f64>;
}

/// Adapter turning a closure into a [`SimplexIntegrand`].
pub struct FnIntegrand<F> {
    dimension: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnIntegrand<F> {
    pub fn new(dimension: usize, f: F) -> Self {
        Self { dimension, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> SimplexIntegrand for FnIntegrand<F> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, s: &[f64]) -> Result<f64> {
        Ok((self.f)(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadMethod {
    ImportanceMc,
    QmcSubstituted,
}

impl fmt::Display for QuadMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ImportanceMc => "importance-mc",
            Self::QmcSubstituted => "qmc-substituted",
        })
    }
}

impl FromStr for QuadMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "importance-mc" | "mc" => Ok(Self::ImportanceMc),
            "qmc-substituted" | "qmc" => Ok(Self::QmcSubstituted),
            other => Err(invalid(format!("unknown quadrature method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSettings {
    pub method: QuadMethod,
    /// Hard cap on integrand evaluations.
    pub budget: u64,
    pub seed: u64,
    /// Stop early once the standard error is below `rel_tol * |estimate|`
    /// (importance-mc only). Zero disables.
    pub rel_tol: f64,
    /// Stop early once the standard error is below this. Zero disables.
    pub abs_tol: f64,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            method: QuadMethod::ImportanceMc,
            budget: 1 << 18,
            seed: 0,
            rel_tol: 1e-3,
            abs_tol: 0.0,
        }
    }
}

impl QuadSettings {
    /// Uses the whole budget, no early stopping.
    pub fn fixed(method: QuadMethod, budget: u64, seed: u64) -> Self {
        Self {
            method,
            budget,
            seed,
            rel_tol: 0.0,
            abs_tol: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub std_error: f64,
    pub evaluations: u64,
    pub method: QuadMethod,
}

/// `int_{T^t_{n'}} prod_i (t - s_i)^{-1/2} ds = (2 sqrt t)^{n'} / n'!`.
///
/// By symmetry the ordered integral is `1/n'!` of the integral over the cube,
/// which factorizes into `n'` copies of `int_0^t (t - s)^{-1/2} ds = 2 sqrt t`.
pub fn reference_weight_integral(n_prime: usize, t: f64) -> f64 {
    let base = 2.0 * t.sqrt();
    (1..=n_prime).fold(1.0, |acc, k| acc * base / k as f64)
}

/// Draws an interior point of the simplex with density proportional to
/// `prod (t - s_i)^{-1/2}` and returns `1 / density` at that point.
///
/// Each coordinate is `s = t (1 - U^2)`, the inverse CDF of
/// `(2 sqrt t)^{-1} (t - s)^{-1/2}` on `(0, t)`. Draws that collapse in floating
/// point (ties or landing on an endpoint) are redrawn; they have probability
/// zero in exact arithmetic.
pub fn sample_singular_importance<R: Rng + ?Sized>(s: &mut [f64], t: f64, rng: &mut R) -> f64 {
    let n_prime = s.len();
    let norm = reference_weight_integral(n_prime, t);
    loop {
        // Store the distances a_i = t - s_i first; ascending distance is
        // descending time.
        for v in s.iter_mut() {
            let u: f64 = 1.0 - rng.random::<f64>();
            *v = t * u * u;
        }
        s.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let root_prod: f64 = s.iter().map(|a| a.sqrt()).product();
        for v in s.iter_mut() {
            *v = t - *v;
        }
        let interior = s[0] < t && s[n_prime - 1] > 0.0 && s.windows(2).all(|w| w[1] < w[0]);
        if interior {
            return norm * root_prod;
        }
    }
}

/// Streaming mean/variance accumulator with an exact parallel merge.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.count as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.count as f64 * other.count as f64) / n as f64;
        Self { count: n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

fn check_value(s: &[f64], value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            point: s.to_vec(),
            value,
        })
    }
}

/// Estimates `int_{T^t_{n'}} f(s) ds`.
pub fn integrate_ordered_simplex(
    f: &dyn SimplexIntegrand,
    t: f64,
    settings: &QuadSettings,
) -> Result<QuadratureResult> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {t}")));
    }
    if f.dimension() == 0 {
        return Err(invalid("the zero-dimensional simplex is handled by the caller"));
    }
    if settings.budget == 0 {
        return Err(invalid("quadrature budget must be positive"));
    }
    match settings.method {
        QuadMethod::ImportanceMc => importance_mc(f, t, settings),
        QuadMethod::QmcSubstituted => qmc_substituted(f, t, settings),
    }
}

fn importance_chunk(f: &dyn SimplexIntegrand, t: f64, seed: u64, chunk: u64, count: u64) -> Result<Moments> {
    let mut rng = stream(seed, &[chunk]);
    let mut s = vec![0.0; f.dimension()];
    let mut acc = Moments::default();
    for _ in 0..count {
        let w = sample_singular_importance(&mut s, t, &mut rng);
        let v = check_value(&s, f.evaluate(&s)?)?;
        acc.push(v * w);
    }
    Ok(acc)
}

fn importance_mc(f: &dyn SimplexIntegrand, t: f64, settings: &QuadSettings) -> Result<QuadratureResult> {
    let budget = settings.budget;
    let total_chunks = budget.div_ceil(CHUNK);
    let chunk_len = |c: u64| CHUNK.min(budget - c * CHUNK);

    let mut acc = Moments::default();
    let mut done = 0;
    // Rounds double the work done so far; the stopping rule only looks at
    // completed rounds, which keeps the result independent of scheduling.
    let mut round = 2.min(total_chunks);
    while done < total_chunks {
        let end = (done + round).min(total_chunks);
        let parts: Vec<Moments> = (done..end)
            .into_par_iter()
            .map(|c| importance_chunk(f, t, settings.seed, c, chunk_len(c)))
            .collect::<Result<_>>()?;
        acc = parts.into_iter().fold(acc, Moments::merge);
        done = end;
        round = done;
        let se = acc.std_error();
        let target = (settings.rel_tol * acc.mean.abs()).max(settings.abs_tol);
        if target > 0.0 && se <= target {
            break;
        }
    }
    Ok(QuadratureResult {
        value: acc.mean,
        std_error: acc.std_error(),
        evaluations: acc.count,
        method: QuadMethod::ImportanceMc,
    })
}

/// Owen-scrambled Sobol coordinate as a raw 32-bit integer.
fn sobol_bits(index: u32, dimension: u32, seed: u32) -> u32 {
    use sobol_burley::parts::{hash, owen_scramble_rev, sobol_rev};
    let shuffled = owen_scramble_rev(index.reverse_bits(), hash(seed ^ 0x79c6_8e4a));
    let sobol = sobol_rev(shuffled, dimension);
    let scramble = {
        let seed = seed.wrapping_mul(0x9c8f_2d3b);
        let ds = dimension >> 2;
        ds ^ seed ^ [0x912f_69ba, 0x174f_18ab, 0x691e_72ca, 0xb40c_c1b8][dimension as usize & 0b11]
    };
    owen_scramble_rev(sobol, hash(scramble)).reverse_bits()
}

/// Maps a point of the unit cube to the simplex; returns the Jacobian, or
/// `None` when the image collapses onto the boundary in floating point.
///
/// With `v` the coordinates of `u` in ascending order, `s_i = t (1 - v_i^2)`,
/// and `ds = prod_i 2 t v_i du / n'!` (the sort is `n'!`-to-one).
const V_FLOOR: f64 = 1.0 / (1u64 << 25) as f64;

pub(crate) fn sorted_map(u: &[f64], t: f64, s: &mut [f64]) -> Option<f64> {
    let n = u.len();
    s.copy_from_slice(u);
    s.sort_unstable_by(f64::total_cmp);
    let mut jac = 1.0;
    for (k, si) in s.iter_mut().enumerate() {
        // Smaller values would round `s` onto `t`; the shift is far below sampling error.
        *si = si.max(V_FLOOR * (k + 1) as f64);
        jac *= 2.0 * t * *si / (k + 1) as f64;
        *si = t * (1.0 - *si * *si);
    }
    let interior = s[0] < t && s[n - 1] > 0.0 && s.windows(2).all(|w| w[1] < w[0]);
    interior.then_some(jac)
}

fn qmc_substituted(f: &dyn SimplexIntegrand, t: f64, settings: &QuadSettings) -> Result<QuadratureResult> {
    let dim = f.dimension();
    let per_replicate = (settings.budget / QMC_REPLICATES).clamp(1, QMC_MAX_POINTS);
    let points = 1u64 << (63 - per_replicate.leading_zeros());

    let means: Vec<f64> = (0..QMC_REPLICATES)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let scramble = derive_seed(settings.seed, &[r]) as u32;
            let mut u = vec![0.0; dim];
            let mut s = vec![0.0; dim];
            let mut acc = Moments::default();
            for i in 0..points as u32 {
                // The per-dimension offset keeps coordinates distinct, so sorting never ties.
                for (d, uk) in u.iter_mut().enumerate() {
                    let offset = (d + 1) as f64 / (dim + 1) as f64;
                    *uk = (sobol_bits(i, d as u32, scramble) as f64 + offset) * (1.0 / 4_294_967_296.0);
                }
                // Collapsed points have measure zero; they contribute zero.
                let v = match sorted_map(&u, t, &mut s) {
                    Some(jac) => check_value(&s, f.evaluate(&s)?)? * jac,
                    None => 0.0,
                };
                acc.push(v);
            }
            Ok(acc.mean)
        })
        .collect::<Result<_>>()?;

    let mut acc = Moments::default();
    for m in means {
        acc.push(m);
    }
    Ok(QuadratureResult {
        value: acc.mean,
        std_error: acc.std_error(),
        evaluations: points * QMC_REPLICATES,
        method: QuadMethod::QmcSubstituted,
    })
}

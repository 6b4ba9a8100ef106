//! Growth envelopes, log-log slopes and tail bounds for pointwise moments.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::kernel::{initial_potential, InitialCondition};
use crate::particles::TailPoint;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Hypotheses on the initial condition under which the moment envelopes hold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    /// `k1 <= u_0 <= k2`.
    H1 { k1: f64, k2: f64 },
    /// `L/2 <= t^gamma (p_t * u_0)(x) <= 2L` for `t >= c_x`.
    H2 { gamma: f64, l: f64, c_x: f64 },
}

impl Hypothesis {
    pub fn h1_for(u0: &InitialCondition) -> Result<Self> {
        match u0 {
            InitialCondition::ConstantDensity { level } => Ok(Self::H1 { k1: *level, k2: *level }),
            _ => Err(Error::Domain("H1 needs a density bounded above and below".into())),
        }
    }

    /// `gamma = 1/2`, `L = mass / sqrt(2 pi)` and a numerically located `C_x`.
    pub fn h2_for(u0: &InitialCondition, x: f64) -> Result<Self> {
        Ok(Self::H2 {
            gamma: 0.5,
            l: u0.total_mass() / (2.0 * std::f64::consts::PI).sqrt(),
            c_x: h2_constant_c_x(u0, x)?,
        })
    }

    fn shape(&self, n: usize, t: f64) -> f64 {
        let e = 0.5 * (n as f64 - 1.0);
        match *self {
            Hypothesis::H1 { .. } => 1.0 + factorial(n) * t.powf(e),
            Hypothesis::H2 { gamma, .. } => factorial(n) * t.powf(e - gamma),
        }
    }
}

/// Smallest `C` such that `t^{1/2} (p_t * u_0)(x)` stays within `[L/2, 2L]` for
/// every `t >= C`; zero when it never leaves the band.
///
/// A geometric scan from `1e12` down to `1e-12` locates the last violation and
/// bisection refines it.
pub fn h2_constant_c_x(u0: &InitialCondition, x: f64) -> Result<f64> {
    if !matches!(u0, InitialCondition::AtomicMeasure { .. }) {
        return Err(Error::Domain("H2 needs a finite initial measure".into()));
    }
    u0.validate()?;
    let l = u0.total_mass() / (2.0 * std::f64::consts::PI).sqrt();
    let ok = |t: f64| -> Result<bool> {
        let g = t.sqrt() * initial_potential(u0, t, x)?;
        Ok(g >= 0.5 * l && g <= 2.0 * l)
    };
    let step = 2f64.powf(0.125);
    let mut hi = 1e12;
    if !ok(hi)? {
        return Err(Error::Domain("heat potential does not settle by t = 1e12".into()));
    }
    loop {
        let lo = hi / step;
        if lo < 1e-12 {
            return Ok(0.0);
        }
        if !ok(lo)? {
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-13 * b {
                let m = 0.5 * (a + b);
                if ok(m)? {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Ok(b);
        }
        hi = lo;
    }
}

/// Bracketing shapes with unit constants; `None` outside the validity domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Under H1 both sides are `1 + n! t^{(n-1)/2}`. Under H2 both are
/// `n! t^{(n-1)/2 - gamma}`, the upper one for `t >= C_x` and the lower one for
/// `t >= max(n C_x, 1)`.
pub fn theorem1_envelope(n: usize, t: f64, hyp: &Hypothesis) -> Result<Envelope> {
    if n == 0 || !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("need n >= 1 and t > 0, got n = {n}, t = {t}")));
    }
    let shape = hyp.shape(n, t);
    Ok(match *hyp {
        Hypothesis::H1 { .. } => Envelope {
            lower: Some(shape),
            upper: Some(shape),
        },
        Hypothesis::H2 { c_x, .. } => Envelope {
            lower: (t >= (n as f64 * c_x).max(1.0)).then_some(shape),
            upper: (t >= c_x).then_some(shape),
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub n: usize,
    pub t: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsPoint {
    pub n: usize,
    pub t: f64,
    pub moment: f64,
    pub std_error: f64,
    pub envelope: Envelope,
    /// `(1/n) log(m_n / shape)`, only where the two-sided envelope applies.
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub hypothesis: Hypothesis,
    pub points: Vec<BoundsPoint>,
    /// Fitted `log K_*` and `log K^*`.
    pub rho_min: f64,
    pub rho_max: f64,
    pub band_width: f64,
    pub max_band_width: f64,
    pub pass: bool,
}

pub fn bounds_report(hyp: Hypothesis, moments: &[MomentPoint], max_band_width: f64) -> Result<BoundsReport> {
    let mut points = Vec::with_capacity(moments.len());
    for m in moments {
        if !(m.value > 0.0) {
            return Err(invalid(format!(
                "moment at n = {}, t = {} must be positive, got {}",
                m.n, m.t, m.value
            )));
        }
        let envelope = theorem1_envelope(m.n, m.t, &hyp)?;
        let rho = match (envelope.lower, envelope.upper) {
            (Some(s), Some(_)) => Some((m.value / s).ln() / m.n as f64),
            _ => None,
        };
        points.push(BoundsPoint {
            n: m.n,
            t: m.t,
            moment: m.value,
            std_error: m.std_error,
            envelope,
            rho,
        });
    }
    let rhos: Vec<f64> = points.iter().filter_map(|p| p.rho).collect();
    if rhos.is_empty() {
        return Err(Error::Domain("no grid point lies inside the envelope domain".into()));
    }
    let rho_min = rhos.iter().copied().fold(f64::INFINITY, f64::min);
    let rho_max = rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let band_width = rho_max - rho_min;
    Ok(BoundsReport {
        hypothesis: hyp,
        points,
        rho_min,
        rho_max,
        band_width,
        max_band_width,
        pass: band_width <= max_band_width,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    /// 95% Student-t half-width of the slope.
    pub half_width: f64,
    pub target: f64,
    pub points: usize,
}

/// Least squares of `log m` on `log t`; with `weighted`, each point is weighted
/// by the inverse variance of `log m`, i.e. `(m / err)^2`.
pub fn fit_log_slope(n: usize, points: &[MomentPoint], weighted: bool, target: f64) -> Result<SlopeEstimate> {
    if points.len() < 4 {
        return Err(invalid(format!(
            "slope fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.t > 0.0 && p.value > 0.0)) {
        return Err(invalid("slope fit needs positive t and moments"));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.t), b.max(p.t)));
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(invalid(format!("t must span two decades, got [{lo}, {hi}]")));
    }
    let w: Vec<f64> = points
        .iter()
        .map(|p| {
            if weighted && p.std_error > 0.0 {
                (p.value / p.std_error).powi(2)
            } else {
                1.0
            }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.t.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.value.ln()).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&xs).map(|(w, x)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = w
        .iter()
        .zip(&xs)
        .zip(&ys)
        .map(|((w, x), y)| w * (x - xm) * (y - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let k = points.len();
    let rss: f64 = w
        .iter()
        .zip(&xs)
        .zip(&ys)
        .map(|((w, x), y)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (k - 2) as f64;
    let se = (rss / dof / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| invalid(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(SlopeEstimate {
        n,
        slope,
        intercept,
        half_width: q * se,
        target,
        points: k,
    })
}

/// `(n, log m_n / (n log n))` for every entry.
pub fn high_moment_ratio(moments: &[(usize, f64)]) -> Result<Vec<(usize, f64)>> {
    moments
        .iter()
        .map(|&(n, m)| {
            if n < 2 {
                return Err(invalid(format!("ratio needs n >= 2, got {n}")));
            }
            if !(m > 0.0) {
                return Err(invalid(format!("moment must be positive, got {m}")));
            }
            let nf = n as f64;
            Ok((n, m.ln() / (nf * nf.ln())))
        })
        .collect()
}

/// `max_n [m_n / (1 + n! t^{(n-1)/2})]^{1/n}` over the supplied orders.
pub fn k_star_hat(moments: &[(usize, f64)], t: f64) -> Result<f64> {
    if moments.is_empty() {
        return Err(invalid("no moments supplied"));
    }
    let h1 = Hypothesis::H1 { k1: 1.0, k2: 1.0 };
    moments.iter().try_fold(0.0f64, |acc, &(n, m)| {
        if n == 0 || !(m > 0.0) {
            return Err(invalid(format!("bad moment (n = {n}, m = {m})")));
        }
        Ok(acc.max((m / h1.shape(n, t)).powf(1.0 / n as f64)))
    })
}

/// Default exponential rate `1 / (2 K^* sqrt t)`.
pub fn default_alpha(t: f64, k_star: f64) -> f64 {
    1.0 / (2.0 * k_star * t.sqrt())
}

/// `e^{-alpha z} [e^{alpha K^*} + (sqrt t (1 - alpha K^* sqrt t))^{-1}]`.
pub fn tail_upper_bound(z: f64, t: f64, k_star: f64, alpha_override: Option<f64>) -> Result<f64> {
    if !(t > 0.0 && k_star > 0.0 && z.is_finite()) {
        return Err(invalid(format!(
            "need t > 0, K* > 0, finite z (t = {t}, K* = {k_star}, z = {z})"
        )));
    }
    let alpha = alpha_override.unwrap_or_else(|| default_alpha(t, k_star));
    let a = alpha * k_star * t.sqrt();
    if !(alpha > 0.0 && a < 1.0) {
        return Err(Error::Domain(format!(
            "need 0 < alpha K* sqrt(t) < 1, got {a} (alpha = {alpha})"
        )));
    }
    Ok((-alpha * z).exp() * ((alpha * k_star).exp() + 1.0 / (t.sqrt() * (1.0 - a))))
}

/// `(theta m_n^{1/n}, (1 - theta^n)^2 m_n^2 / m_2n)`.
pub fn paley_zygmund_lower(m_n: f64, m_2n: f64, n: usize, theta: f64) -> Result<(f64, f64)> {
    if n == 0 || !(theta > 0.0 && theta < 1.0) || !(m_n > 0.0 && m_2n > 0.0) {
        return Err(invalid(format!(
            "bad Paley-Zygmund input (n = {n}, theta = {theta}, m_n = {m_n}, m_2n = {m_2n})"
        )));
    }
    let threshold = theta * m_n.powf(1.0 / n as f64);
    let bound = (1.0 - theta.powi(n as i32)).powi(2) * m_n * m_n / m_2n;
    Ok((threshold, bound))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisKind {
    H1,
    H2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeObservation {
    pub probability: f64,
    /// Sample size behind an empirical probability, used to censor zeros.
    pub replicates: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub t: f64,
    pub z: f64,
    /// `t^{1/2 - sigma} log P(u_t(x) > t^sigma)`.
    pub normalized: f64,
    /// A zero frequency replaced by `1/replicates`; the value is then an upper bound.
    pub censored: bool,
}

pub fn large_deviation_probe(
    ts: &[f64],
    sigma: f64,
    kind: HypothesisKind,
    mut probability: impl FnMut(f64, f64) -> Result<ProbeObservation>,
) -> Result<Vec<ProbePoint>> {
    let ok = match kind {
        HypothesisKind::H1 => sigma > 0.5,
        HypothesisKind::H2 => sigma > 0.5 && sigma < 1.5,
    };
    if !ok {
        return Err(Error::Domain(format!("sigma = {sigma} outside the range for {kind:?}")));
    }
    ts.iter()
        .map(|&t| {
            if !(t > 0.0) {
                return Err(invalid(format!("probe time must be positive, got {t}")));
            }
            let z = t.powf(sigma);
            let obs = probability(t, z)?;
            let (p, censored) = if obs.probability > 0.0 {
                (obs.probability, false)
            } else {
                match obs.replicates {
                    Some(r) if r > 0 => (1.0 / r as f64, true),
                    _ => {
                        return Err(Error::Domain(format!(
                            "zero probability at t = {t} with no sample size"
                        )))
                    }
                }
            };
            Ok(ProbePoint {
                t,
                z,
                normalized: t.powf(0.5 - sigma) * p.ln(),
                censored,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperTailPoint {
    pub z: f64,
    pub upper_bound: f64,
    pub frequency: f64,
    pub std_error: f64,
    /// Fewer than five exceedances: outside the resolvable range, not checked.
    pub censored: bool,
    pub consistent: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerTailPoint {
    pub n: usize,
    pub theta: f64,
    pub threshold: f64,
    pub lower_bound: f64,
    pub frequency: f64,
    pub std_error: f64,
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub t: f64,
    pub x: f64,
    pub k_star_hat: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub upper: Vec<UpperTailPoint>,
    pub paley_zygmund: Vec<LowerTailPoint>,
    pub pass: bool,
}

/// Inputs to [`tail_report`].
pub struct TailInputs<'a> {
    pub t: f64,
    pub x: f64,
    /// `(n, m_n)`; must cover `1..=5` for `K^*` and `n, 2n` for every Paley-Zygmund order.
    pub moments: &'a [(usize, f64)],
    pub thresholds: &'a [f64],
    pub pz_orders: &'a [usize],
    pub theta: f64,
    pub replicates: usize,
}

/// Checks empirical exceedance frequencies against the analytic upper bound
/// and the Paley-Zygmund lower points, both with a binomial `3 sigma` allowance.
pub fn tail_report(inputs: &TailInputs<'_>, empirical: impl Fn(&[f64]) -> Vec<TailPoint>) -> Result<TailReport> {
    let lookup = |n: usize| {
        inputs
            .moments
            .iter()
            .find(|m| m.0 == n)
            .map(|m| m.1)
            .ok_or_else(|| invalid(format!("missing moment of order {n}")))
    };
    let k_orders: Vec<(usize, f64)> = (1..=5).map(|n| lookup(n).map(|m| (n, m))).collect::<Result<_>>()?;
    let k_star = k_star_hat(&k_orders, inputs.t)?;
    let alpha = default_alpha(inputs.t, k_star);
    let r = inputs.replicates.max(1) as f64;
    let upper = empirical(inputs.thresholds)
        .into_iter()
        .map(|p| {
            let bound = tail_upper_bound(p.z, inputs.t, k_star, None)?;
            Ok(UpperTailPoint {
                z: p.z,
                upper_bound: bound,
                frequency: p.frequency,
                std_error: p.std_error,
                censored: p.censored,
                consistent: p.censored || p.frequency <= bound + 3.0 * p.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pz = Vec::new();
    for &n in inputs.pz_orders {
        let (threshold, bound) = paley_zygmund_lower(lookup(n)?, lookup(2 * n)?, n, inputs.theta)?;
        let p = empirical(&[threshold])[0];
        // Binomial spread at the larger of the two probabilities.
        let q = p.frequency.max(bound).min(1.0);
        let sigma = (q * (1.0 - q) / r).sqrt();
        pz.push(LowerTailPoint {
            n,
            theta: inputs.theta,
            threshold,
            lower_bound: bound,
            frequency: p.frequency,
            std_error: p.std_error,
            consistent: bound <= p.frequency + 3.0 * sigma,
        });
    }
    let pass = upper.iter().all(|p| p.consistent) && pz.iter().all(|p| p.consistent);
    Ok(TailReport {
        t: inputs.t,
        x: inputs.x,
        k_star_hat: k_star,
        alpha,
        replicates: inputs.replicates,
        upper,
        paley_zygmund: pz,
        pass,
    })
}

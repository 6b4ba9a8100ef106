//! Assembly of `E[u_t(x)^n]` from the combinatorial moment expansion.
//!
//! ```text
//! E[u_t(x)^n] = sum_{n'=0}^{n-1} sum_{(alpha,beta,tau) in J_{n,n'}}
//!     potential(t,x)^{n - |alpha|} int_{T^t_{n'}} ds int_{R^{n'}} dz
//!     prod_{beta_k = 0} (p_{s_k} * u0)(z_k)
//!     prod_{i <= |alpha|} p(t - s_tau(i), x - z_tau(i))
//!     prod_{i > |alpha|} p(s_iota_beta(i-|alpha|) - s_tau(i), z_iota_beta(..) - z_tau(i))
//! ```
//!
//! The spatial integral is done in closed form by [`crate::kernel`], the time
//! integral per triple by [`crate::quadrature`].

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::index::{enumerate_triples, IndexTriple};
use crate::kernel::{build_kernel_graph, gaussian_pdf, initial_potential, spatial_integral_sum, InitialCondition};
use crate::quadrature::{integrate_ordered_simplex, QuadMethod, QuadSettings, QuadratureResult, SimplexIntegrand};
use crate::rng::derive_seed;

pub const DEFAULT_ORDER_CAP: usize = 7;

/// Default relative standard-error target for a whole moment.
pub const DEFAULT_REL_TOL: f64 = 2.5e-4;

/// Evaluations spent per triple to size the main pass.
const PILOT_BUDGET: u64 = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRequest {
    pub n: usize,
    pub t: f64,
    pub x: f64,
    pub u0: InitialCondition,
    /// `budget` is the per-triple cap; `rel_tol` targets the whole moment.
    pub quad: QuadSettings,
    pub order_cap: usize,
}

impl MomentRequest {
    pub fn new(n: usize, t: f64, x: f64, u0: InitialCondition) -> Self {
        Self {
            n,
            t,
            x,
            u0,
            quad: QuadSettings {
                rel_tol: DEFAULT_REL_TOL,
                ..QuadSettings::default()
            },
            order_cap: DEFAULT_ORDER_CAP,
        }
    }

    pub fn with_quad(mut self, quad: QuadSettings) -> Self {
        self.quad = quad;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.quad.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("moment order must be positive"));
        }
        if self.n > self.order_cap {
            return Err(Error::OrderCap {
                n: self.n,
                cap: self.order_cap,
            });
        }
        if !(self.t > 0.0 && self.t.is_finite()) || !self.x.is_finite() {
            return Err(invalid(format!(
                "need t > 0 and finite x, got t = {}, x = {}",
                self.t, self.x
            )));
        }
        self.u0.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NPrimeTerm {
    pub n_prime: usize,
    pub value: f64,
    pub std_error: f64,
    pub triples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub n: usize,
    pub t: f64,
    pub x: f64,
    pub value: f64,
    pub std_error: f64,
    pub per_nprime: Vec<NPrimeTerm>,
    pub triples_evaluated: usize,
    pub evaluations: u64,
}

/// `s -> sum of spatial integrals of the summand labelled by `triple``.
pub struct TripleIntegrand<'a> {
    triple: &'a IndexTriple,
    t: f64,
    x: f64,
    u0: &'a InitialCondition,
}

impl<'a> TripleIntegrand<'a> {
    pub fn new(triple: &'a IndexTriple, t: f64, x: f64, u0: &'a InitialCondition) -> Self {
        Self { triple, t, x, u0 }
    }
}

impl SimplexIntegrand for TripleIntegrand<'_> {
    fn dimension(&self) -> usize {
        self.triple.n_prime()
    }

    fn evaluate(&self, s: &[f64]) -> Result<f64> {
        spatial_integral_sum(&build_kernel_graph(self.triple, s, self.t, self.x, self.u0)?)
    }
}

/// One summand of the expansion, quadrature settings taken as given.
pub fn moment_term(
    triple: &IndexTriple,
    t: f64,
    x: f64,
    u0: &InitialCondition,
    quad: &QuadSettings,
) -> Result<QuadratureResult> {
    if triple.n_prime() == 0 {
        let p = initial_potential(u0, t, x)?;
        return Ok(QuadratureResult {
            value: p.powi(triple.n() as i32),
            std_error: 0.0,
            evaluations: 0,
            method: quad.method,
        });
    }
    integrate_ordered_simplex(&TripleIntegrand::new(triple, t, x, u0), t, quad)
}

fn wrap(n: usize, n_prime: usize, index: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Triple {
        n,
        n_prime,
        index,
        source: Box::new(e),
    }
}

/// `E[u_t(x)^n]` with a per-`n'` breakdown and a propagated standard error.
///
/// Sampling effort is spread over triples in two passes: a short pilot measures
/// each triple's per-sample spread, then each triple gets a sample size
/// proportional to that spread (Neyman allocation) so that the combined
/// standard error meets `rel_tol`, capped by the per-triple `budget`. Every
/// triple uses its own stream derived from `(seed, n', triple index)` and
/// partial sums are reduced in enumeration order.
pub fn moment(req: &MomentRequest) -> Result<MomentResult> {
    req.validate()?;
    let (n, t, x, u0) = (req.n, req.t, req.x, &req.u0);
    let potential = initial_potential(u0, t, x)?;

    let mut groups: Vec<(usize, Vec<IndexTriple>)> = Vec::with_capacity(n);
    for n_prime in 1..n {
        groups.push((n_prime, enumerate_triples(n, n_prime)?));
    }
    let flat: Vec<(usize, usize, &IndexTriple)> = groups
        .iter()
        .flat_map(|(np, ts)| ts.iter().enumerate().map(move |(i, tr)| (*np, i, tr)))
        .collect();

    let head = potential.powi(n as i32);
    let seed_for = |np: usize, i: usize, pass: u64| derive_seed(req.quad.seed, &[pass, n as u64, np as u64, i as u64]);

    let results: Vec<QuadratureResult> = match req.quad.method {
        QuadMethod::ImportanceMc if req.quad.rel_tol > 0.0 && !flat.is_empty() => {
            let pilot: Vec<QuadratureResult> = flat
                .par_iter()
                .map(|&(np, i, tr)| {
                    let st = QuadSettings::fixed(
                        QuadMethod::ImportanceMc,
                        PILOT_BUDGET.min(req.quad.budget),
                        seed_for(np, i, 0),
                    );
                    moment_term(tr, t, x, u0, &st).map_err(wrap(n, np, i))
                })
                .collect::<Result<_>>()?;
            let total: f64 = head + pilot.iter().map(|r| r.value).sum::<f64>();
            // Per-sample standard deviations from the pilot.
            let sigma: Vec<f64> = pilot
                .iter()
                .map(|r| r.std_error * (r.evaluations as f64).sqrt())
                .collect();
            let sigma_sum: f64 = sigma.iter().sum();
            let target = req.quad.rel_tol * total;
            flat.par_iter()
                .zip(sigma.par_iter())
                .map(|(&(np, i, tr), &sd)| {
                    let wanted = if target > 0.0 {
                        (sd * sigma_sum / (target * target)).ceil()
                    } else {
                        f64::INFINITY
                    };
                    let budget = if wanted.is_finite() {
                        (wanted as u64).clamp(PILOT_BUDGET, req.quad.budget.max(1))
                    } else {
                        req.quad.budget
                    };
                    let st = QuadSettings::fixed(QuadMethod::ImportanceMc, budget, seed_for(np, i, 1));
                    moment_term(tr, t, x, u0, &st).map_err(wrap(n, np, i))
                })
                .collect::<Result<_>>()?
        }
        _ => flat
            .par_iter()
            .map(|&(np, i, tr)| {
                let st = QuadSettings {
                    seed: seed_for(np, i, 1),
                    ..req.quad
                };
                moment_term(tr, t, x, u0, &st).map_err(wrap(n, np, i))
            })
            .collect::<Result<_>>()?,
    };

    let mut per_nprime = vec![NPrimeTerm {
        n_prime: 0,
        value: head,
        std_error: 0.0,
        triples: 1,
    }];
    let mut offset = 0;
    let mut evaluations = 0;
    for (np, ts) in &groups {
        let slice = &results[offset..offset + ts.len()];
        offset += ts.len();
        let value: f64 = slice.iter().map(|r| r.value).sum();
        let var: f64 = slice.iter().map(|r| r.std_error * r.std_error).sum();
        evaluations += slice.iter().map(|r| r.evaluations).sum::<u64>();
        per_nprime.push(NPrimeTerm {
            n_prime: *np,
            value,
            std_error: var.sqrt(),
            triples: ts.len(),
        });
    }
    let value = per_nprime.iter().map(|p| p.value).sum();
    let std_error = per_nprime.iter().map(|p| p.std_error * p.std_error).sum::<f64>().sqrt();
    Ok(MomentResult {
        n,
        t,
        x,
        value,
        std_error,
        triples_evaluated: 1 + flat.len(),
        per_nprime,
        evaluations,
    })
}

/// Analytic moments for `n <= 2`.
///
/// - `n = 1`: the heat potential.
/// - `n = 2`, constant `K`: `K^2 + K sqrt(t / pi)`.
/// - `n = 2`, single atom of weight `c` at `w`:
///   `c^2 p_t(x-w)^2 + c int_0^t (4 pi (t-s))^{-1/2} p_{(t+s)/2}(x-w) ds`,
///   which is `c^2/(2 pi t) + c/4` at `x = w`; off the atom the time integral
///   is evaluated numerically after `s = t - r^2`, which makes it smooth.
pub fn closed_form_moment(n: usize, t: f64, x: f64, u0: &InitialCondition) -> Result<f64> {
    u0.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    match (n, u0) {
        (1, _) => initial_potential(u0, t, x),
        (2, InitialCondition::ConstantDensity { level }) => Ok(level * level + level * (t / PI).sqrt()),
        (2, InitialCondition::AtomicMeasure { atoms }) if atoms.len() == 1 => {
            let (c, d) = (atoms[0].weight, x - atoms[0].location);
            let head = c * c * gaussian_pdf(t, d).powi(2);
            let branch = if d == 0.0 { 0.25 } else { dirac_branch_term(t, d) };
            Ok(head + c * branch)
        }
        _ => Err(Error::Unsupported(format!("no closed form for n = {n} with {u0:?}"))),
    }
}

/// `int_0^t (4 pi (t-s))^{-1/2} p_{(t+s)/2}(d) ds = pi^{-1/2} int_0^{sqrt t} p_{t - r^2/2}(d) dr`.
fn dirac_branch_term(t: f64, d: f64) -> f64 {
    // Composite Gauss-Legendre, 5 nodes per panel; the integrand is smooth.
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let panels = 400;
    let h = t.sqrt() / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (node, w) in NODES.iter().zip(WEIGHTS) {
            let r = mid + 0.5 * h * node;
            sum += w * gaussian_pdf(t - 0.5 * r * r, d);
        }
    }
    sum * 0.5 * h / PI.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn first_moment_is_the_potential() {
        for u0 in [InitialCondition::constant(2.0).unwrap(), InitialCondition::dirac(0.5)] {
            let r = moment(&MomentRequest::new(1, 1.7, -0.2, u0.clone())).unwrap();
            assert_eq!(r.value, initial_potential(&u0, 1.7, -0.2).unwrap());
            assert_eq!(r.std_error, 0.0);
            assert_eq!(r.per_nprime.len(), 1);
        }
    }

    #[test]
    fn second_moment_constant_density() {
        let u0 = InitialCondition::constant(1.0).unwrap();
        let r = moment(&MomentRequest::new(2, 1.0, 0.0, u0)).unwrap();
        let exact = 1.0 + 1.0 / PI.sqrt();
        assert!(rel(r.value, exact) < 1e-9, "{r:?}");
        assert_eq!(r.per_nprime[0].value, 1.0);
    }

    #[test]
    fn second_moment_dirac() {
        let r = moment(&MomentRequest::new(2, 1.0, 0.0, InitialCondition::dirac(0.0)).with_seed(9)).unwrap();
        let exact = 0.25 + 1.0 / (2.0 * PI);
        assert!(rel(r.value, exact) < 1e-3);
        assert!((r.value - exact).abs() < 3.0 * r.std_error, "{r:?}");
        assert!(r.std_error / r.value <= 3e-4);
    }

    #[test]
    fn single_n2_terms() {
        let tr = &enumerate_triples(2, 1).unwrap()[0];
        let st = QuadSettings::fixed(QuadMethod::ImportanceMc, 200_000, 4);
        let c = moment_term(tr, 1.0, 0.0, &InitialCondition::constant(1.0).unwrap(), &st).unwrap();
        assert!(rel(c.value, (1.0 / PI).sqrt()) < 1e-10);
        let d = moment_term(tr, 1.0, 0.0, &InitialCondition::dirac(0.0), &st).unwrap();
        assert!((d.value - 0.25).abs() < 3.0 * d.std_error + 1e-12, "{d:?}");

        let tr0 = &enumerate_triples(3, 0).unwrap()[0];
        let z = moment_term(tr0, 2.0, 0.0, &InitialCondition::dirac(0.0), &st).unwrap();
        assert_eq!(z.std_error, 0.0);
        assert!(rel(z.value, gaussian_pdf(2.0, 0.0).powi(3)) < 1e-14);
    }

    #[test]
    fn closed_form_examples() {
        let d = InitialCondition::dirac(0.0);
        assert!(rel(closed_form_moment(1, 4.0, 0.0, &d).unwrap(), 0.199_471_140_2) < 1e-9);
        let c = InitialCondition::constant(1.0).unwrap();
        assert!(rel(closed_form_moment(2, 100.0, 0.0, &c).unwrap(), 1.0 + 10.0 / PI.sqrt()) < 1e-14);
        let big_t = closed_form_moment(2, 1e8, 0.0, &d).unwrap();
        assert!((big_t - 0.25).abs() < 1e-8);
        // The off-atom quadrature reduces to the exact value as d -> 0.
        assert!((dirac_branch_term(1.0, 1e-9) - 0.25).abs() < 1e-12);
        assert!(closed_form_moment(3, 1.0, 0.0, &c).is_err());
    }

    #[test]
    fn off_atom_second_moment_matches_engine() {
        let d = InitialCondition::dirac(0.7);
        let exact = closed_form_moment(2, 1.3, -0.4, &d).unwrap();
        let r = moment(&MomentRequest::new(2, 1.3, -0.4, d).with_seed(2)).unwrap();
        assert!(
            (r.value - exact).abs() < 3.5 * r.std_error,
            "{} vs {exact} (se {})",
            r.value,
            r.std_error
        );
    }

    #[test]
    fn order_cap_and_validation() {
        let c = InitialCondition::constant(1.0).unwrap();
        assert!(matches!(
            moment(&MomentRequest::new(8, 1.0, 0.0, c.clone())),
            Err(Error::OrderCap { .. })
        ));
        assert!(moment(&MomentRequest::new(0, 1.0, 0.0, c.clone())).is_err());
        assert!(moment(&MomentRequest::new(2, 0.0, 0.0, c)).is_err());
    }

    #[test]
    fn seeded_moment_is_reproducible() {
        let req = MomentRequest::new(3, 1.0, 0.0, InitialCondition::dirac(0.0)).with_seed(77);
        let a = moment(&req).unwrap();
        let b = moment(&req).unwrap();
        assert_eq!(a, b);
    }
}

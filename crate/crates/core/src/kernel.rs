//! Heat kernels, initial conditions and closed-form Gaussian integration.
//!
//! For fixed branch times a summand of the moment expansion is an integral over
//! `R^{n'}` of a product of heat kernels whose endpoints are either fixed points
//! (the observation point `x`, atom locations) or integration variables. The
//! exponent is a quadratic form in the variables, so the integral is
//!
//! ```text
//! prefactor * prod_e (2 pi v_e)^{-1/2} * (2 pi)^{n'/2} * det(Q)^{-1/2} * exp(b' Q^{-1} b / 2 + c)
//! ```
//!
//! with precision matrix `Q`, linear term `b` and constant `c` assembled from
//! the factors. Everything is accumulated in the log domain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::index::{iota, IndexTriple};

/// Factors with a variance at or below this are rejected, never regularized.
pub const MIN_VARIANCE: f64 = 1e-300;

/// Upper limit on the number of graphs an atomic initial measure may expand into.
pub const MAX_EXPANSION: usize = 1 << 16;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[inline]
pub(crate) fn gaussian_pdf(variance: f64, x: f64) -> f64 {
    (-x * x / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}

/// `p_t(x) = (2 pi t)^{-1/2} exp(-x^2 / 2t)`.
pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("heat kernel time must be positive, got {t}")));
    }
    Ok(gaussian_pdf(t, x))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub location: f64,
}

/// Deterministic initial state of the process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `u_0 = K` everywhere.
    ConstantDensity { level: f64 },
    /// A finite sum of weighted point masses.
    AtomicMeasure { atoms: Vec<Atom> },
}

impl InitialCondition {
    pub fn constant(level: f64) -> Result<Self> {
        let u0 = Self::ConstantDensity { level };
        u0.validate()?;
        Ok(u0)
    }

    pub fn atomic(atoms: Vec<Atom>) -> Result<Self> {
        let u0 = Self::AtomicMeasure { atoms };
        u0.validate()?;
        Ok(u0)
    }

    /// Unit point mass at `location`.
    pub fn dirac(location: f64) -> Self {
        Self::AtomicMeasure {
            atoms: vec![Atom { weight: 1.0, location }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::ConstantDensity { level } => {
                if !(*level > 0.0 && level.is_finite()) {
                    return Err(invalid(format!("constant density must be positive, got {level}")));
                }
            }
            Self::AtomicMeasure { atoms } => {
                if atoms.is_empty() {
                    return Err(invalid("atomic measure needs at least one atom"));
                }
                for a in atoms {
                    if !(a.weight > 0.0 && a.weight.is_finite() && a.location.is_finite()) {
                        return Err(invalid(format!("bad atom {a:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Location of the single unit atom, if this is a Dirac mass.
    pub fn dirac_location(&self) -> Option<f64> {
        match self {
            Self::AtomicMeasure { atoms } if atoms.len() == 1 && atoms[0].weight == 1.0 => Some(atoms[0].location),
            _ => None,
        }
    }

    /// Total mass; infinite for a constant density.
    pub fn total_mass(&self) -> f64 {
        match self {
            Self::ConstantDensity { .. } => f64::INFINITY,
            Self::AtomicMeasure { atoms } => atoms.iter().map(|a| a.weight).sum(),
        }
    }
}

/// `int p_t(x - z) u0(dz)`.
pub fn initial_potential(u0: &InitialCondition, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    Ok(match u0 {
        InitialCondition::ConstantDensity { level } => *level,
        InitialCondition::AtomicMeasure { atoms } => {
            atoms.iter().map(|a| a.weight * gaussian_pdf(t, x - a.location)).sum()
        }
    })
}

/// End of a heat-kernel factor. Variables are 0-based: `Var(k)` is `z_{k+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Fixed(f64),
    Var(usize),
}

/// `p_variance(left - right)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelFactor {
    pub variance: f64,
    pub left: Endpoint,
    pub right: Endpoint,
}

impl HeatKernelFactor {
    pub fn new(variance: f64, left: Endpoint, right: Endpoint) -> Result<Self> {
        if !(variance > MIN_VARIANCE && variance.is_finite()) {
            return Err(Error::DegenerateVariance(variance));
        }
        if let (Endpoint::Var(i), Endpoint::Var(j)) = (left, right) {
            if i == j {
                return Err(invalid(format!("kernel between z{} and itself", i + 1)));
            }
        }
        for e in [left, right] {
            if let Endpoint::Fixed(y) = e {
                if !y.is_finite() {
                    return Err(invalid("fixed endpoint must be finite"));
                }
            }
        }
        Ok(Self { variance, left, right })
    }
}

/// A product of heat kernels over variables `z_1..z_{n'}` times a constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelGraph {
    n_vars: usize,
    factors: Vec<HeatKernelFactor>,
    log_prefactor: f64,
}

impl KernelGraph {
    /// Validates indices and that every variable is tied, through some chain of
    /// factors, to a fixed endpoint. Otherwise the integral diverges.
    pub fn new(n_vars: usize, factors: Vec<HeatKernelFactor>, log_prefactor: f64) -> Result<Self> {
        if log_prefactor.is_nan() || log_prefactor == f64::INFINITY {
            return Err(invalid(format!("log prefactor must be finite, got {log_prefactor}")));
        }
        let root = n_vars;
        let mut parent: Vec<usize> = (0..=n_vars).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let node = |e: Endpoint| -> Result<usize> {
            match e {
                Endpoint::Fixed(_) => Ok(root),
                Endpoint::Var(k) if k < n_vars => Ok(k),
                Endpoint::Var(k) => Err(invalid(format!("variable index {k} out of range 0..{n_vars}"))),
            }
        };
        for f in &factors {
            let (a, b) = (node(f.left)?, node(f.right)?);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let r = find(&mut parent, root);
        for k in 0..n_vars {
            if find(&mut parent, k) != r {
                return Err(Error::Disconnected(k + 1));
            }
        }
        Ok(Self {
            n_vars,
            factors,
            log_prefactor,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn factors(&self) -> &[HeatKernelFactor] {
        &self.factors
    }

    pub fn log_prefactor(&self) -> f64 {
        self.log_prefactor
    }

    pub fn prefactor(&self) -> f64 {
        self.log_prefactor.exp()
    }

    /// The same graph with every fixed location moved by `offset`.
    pub fn translated(&self, offset: f64) -> Self {
        let shift = |e: Endpoint| match e {
            Endpoint::Fixed(y) => Endpoint::Fixed(y + offset),
            v => v,
        };
        let factors = self
            .factors
            .iter()
            .map(|f| HeatKernelFactor {
                variance: f.variance,
                left: shift(f.left),
                right: shift(f.right),
            })
            .collect();
        Self {
            n_vars: self.n_vars,
            factors,
            log_prefactor: self.log_prefactor,
        }
    }
}

/// `ln int_{R^{n'}} prod factors dz`.
pub fn log_spatial_integral(graph: &KernelGraph) -> Result<f64> {
    let n = graph.n_vars;
    // Fixed locations are measured from a common reference so that the
    // quadratic and constant terms do not cancel catastrophically.
    let reference = graph
        .factors
        .iter()
        .find_map(|f| match (f.left, f.right) {
            (Endpoint::Fixed(y), _) | (_, Endpoint::Fixed(y)) => Some(y),
            _ => None,
        })
        .unwrap_or(0.0);

    let mut q = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    let mut c = 0.0;
    let mut log_norm = 0.0;
    for f in &graph.factors {
        let w = 1.0 / f.variance;
        log_norm -= 0.5 * (LN_2PI + f.variance.ln());
        match (f.left, f.right) {
            (Endpoint::Var(i), Endpoint::Var(j)) => {
                q[i * n + i] += w;
                q[j * n + j] += w;
                q[i * n + j] -= w;
                q[j * n + i] -= w;
            }
            (Endpoint::Var(i), Endpoint::Fixed(y)) | (Endpoint::Fixed(y), Endpoint::Var(i)) => {
                let y = y - reference;
                q[i * n + i] += w;
                b[i] += w * y;
                c -= 0.5 * w * y * y;
            }
            (Endpoint::Fixed(y1), Endpoint::Fixed(y2)) => {
                let d = y1 - y2;
                c -= 0.5 * w * d * d;
            }
        }
    }

    // In-place Cholesky, lower triangle.
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = q[j * n + j];
        for k in 0..j {
            d -= q[j * n + k] * q[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::SingularPrecision { pivot: j, value: d });
        }
        let l = d.sqrt();
        q[j * n + j] = l;
        log_det += 2.0 * l.ln();
        for i in j + 1..n {
            let mut v = q[i * n + j];
            for k in 0..j {
                v -= q[i * n + k] * q[j * n + k];
            }
            q[i * n + j] = v / l;
        }
    }
    // Forward substitution: L u = b, so b' Q^{-1} b = |u|^2.
    let mut quad = 0.0;
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= q[i * n + k] * b[k];
        }
        b[i] = v / q[i * n + i];
        quad += b[i] * b[i];
    }

    Ok(graph.log_prefactor + log_norm + 0.5 * n as f64 * LN_2PI - 0.5 * log_det + 0.5 * quad + c)
}

pub fn spatial_integral(graph: &KernelGraph) -> Result<f64> {
    log_spatial_integral(graph).map(f64::exp)
}

/// Sum of the spatial integrals of an expansion produced by [`build_kernel_graph`].
pub fn spatial_integral_sum(graphs: &[KernelGraph]) -> Result<f64> {
    graphs.iter().map(spatial_integral).sum()
}

/// Checks `0 < s_{n'} < ... < s_1 < t`.
pub fn check_interior(s: &[f64], t: f64) -> Result<()> {
    let ok = s.iter().all(|v| v.is_finite())
        && s.first().is_none_or(|&s1| s1 < t)
        && s.last().is_none_or(|&sl| sl > 0.0)
        && s.windows(2).all(|w| w[1] < w[0]);
    if ok {
        Ok(())
    } else {
        Err(Error::NotInterior(s.to_vec()))
    }
}

/// The Gaussian network of one moment-formula summand at branch times `s`.
///
/// A constant density yields a single graph. An atomic measure yields one graph
/// per assignment of atoms to the branch variables with `beta_k = 0`; the
/// summand is the sum of their spatial integrals.
pub fn build_kernel_graph(
    triple: &IndexTriple,
    s: &[f64],
    t: f64,
    x: f64,
    u0: &InitialCondition,
) -> Result<Vec<KernelGraph>> {
    let n_prime = triple.n_prime();
    if s.len() != n_prime {
        return Err(invalid(format!("expected {n_prime} branch times, got {}", s.len())));
    }
    check_interior(s, t)?;

    let alpha = triple.alpha();
    let beta = triple.beta();
    let tau = triple.tau_values();
    let a = triple.pair().alpha_weight();

    let potential = initial_potential(u0, t, x)?;
    let mut log_prefactor = (alpha.len() - a) as f64 * potential.ln();

    let mut factors = Vec::with_capacity(3 * n_prime);
    for &k in &tau[..a] {
        factors.push(HeatKernelFactor::new(
            t - s[k - 1],
            Endpoint::Fixed(x),
            Endpoint::Var(k - 1),
        )?);
    }
    for (&k, &j) in tau[a..].iter().zip(iota(beta).iter()) {
        factors.push(HeatKernelFactor::new(
            s[j - 1] - s[k - 1],
            Endpoint::Var(j - 1),
            Endpoint::Var(k - 1),
        )?);
    }
    let roots: Vec<usize> = (0..n_prime).filter(|&k| beta[k] == 0).collect();

    match u0 {
        InitialCondition::ConstantDensity { level } => {
            log_prefactor += roots.len() as f64 * level.ln();
            Ok(vec![KernelGraph::new(n_prime, factors, log_prefactor)?])
        }
        InitialCondition::AtomicMeasure { atoms } => {
            let count = atoms
                .len()
                .checked_pow(roots.len() as u32)
                .filter(|&c| c <= MAX_EXPANSION)
                .ok_or_else(|| {
                    Error::Unsupported(format!(
                        "{} atoms over {} initial factors exceeds {MAX_EXPANSION} graphs",
                        atoms.len(),
                        roots.len()
                    ))
                })?;
            let mut graphs = Vec::with_capacity(count);
            for mut code in 0..count {
                let mut fs = factors.clone();
                let mut lp = log_prefactor;
                for &k in &roots {
                    let atom = atoms[code % atoms.len()];
                    code /= atoms.len();
                    lp += atom.weight.ln();
                    fs.push(HeatKernelFactor::new(
                        s[k],
                        Endpoint::Var(k),
                        Endpoint::Fixed(atom.location),
                    )?);
                }
                graphs.push(KernelGraph::new(n_prime, fs, lp)?);
            }
            Ok(graphs)
        }
    }
}

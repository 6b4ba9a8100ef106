//! Critical binary branching Brownian motion as a particle approximation of
//! super-Brownian motion, with kernel-smoothed pointwise statistics.
//!
//! Particles carry mass `1/N`, move as standard Brownian motions and, at rate
//! `N`, either die or split in two with probability one half each.
//!
//! Two exact samplers are provided. [`Method::EventDriven`] follows every
//! particle clock. [`Method::Genealogy`] samples only the lineages that are
//! still alive at `t_end`: an initial particle survives with probability
//! `q(r) = 1 / (1 + b r)` (`b = N/2`, `r` the remaining time), and a surviving
//! lineage splits into two surviving lineages at rate `b q(r)`. Its cost is
//! proportional to the final population instead of the number of clock rings.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{gaussian_pdf, initial_potential, InitialCondition};
use crate::quadrature::Moments;
use crate::rng::{stream, StreamRng};

pub const DEFAULT_BANDWIDTHS: [f64; 4] = [0.01, 0.02, 0.04, 0.08];
pub const DEFAULT_CAP_FACTOR: f64 = 50.0;
pub const MIN_REPLICATES: usize = 30;
pub const MAX_ABORTED_FRACTION: f64 = 0.01;

/// Subtrees farther than this many standard deviations from the observation
/// point are counted but not expanded.
const PRUNE_SIGMAS: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Genealogy,
    EventDriven,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genealogy" => Ok(Self::Genealogy),
            "event-driven" => Ok(Self::EventDriven),
            _ => Err(invalid(format!("unknown simulation method '{s}'"))),
        }
    }
}

/// Polynomial in `sqrt(h)` fitted across the bandwidth ladder; its intercept
/// is the `h -> 0` estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extrapolation {
    /// `a + b sqrt(h)`.
    Linear,
    /// `a + b sqrt(h) + c h`.
    #[default]
    Quadratic,
}

impl Extrapolation {
    fn basis_len(self) -> usize {
        match self {
            Extrapolation::Linear => 2,
            Extrapolation::Quadratic => 3,
        }
    }
}

impl std::str::FromStr for Extrapolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            _ => Err(invalid(format!("unknown extrapolation '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub particles_n: u64,
    pub t_end: f64,
    /// Ascending KDE bandwidths.
    pub bandwidths: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    /// Half-width `W` of the constant-density window; `max(8 sqrt t, 8)` if unset.
    pub domain_truncation: Option<f64>,
    pub method: Method,
    pub cap_factor: f64,
    pub extrapolation: Extrapolation,
}

impl SimulationConfig {
    pub fn new(particles_n: u64, t_end: f64, replicates: usize, seed: u64) -> Self {
        Self {
            particles_n,
            t_end,
            bandwidths: DEFAULT_BANDWIDTHS.to_vec(),
            replicates,
            seed,
            domain_truncation: None,
            method: Method::default(),
            cap_factor: DEFAULT_CAP_FACTOR,
            extrapolation: Extrapolation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles_n == 0 || self.replicates == 0 {
            return Err(invalid("particle count and replicates must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.bandwidths.is_empty() || self.bandwidths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(invalid("bandwidths must be a non-empty list of positive reals"));
        }
        if self.bandwidths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("bandwidths must be strictly ascending"));
        }
        if let Some(w) = self.domain_truncation {
            if !(w > 0.0 && w.is_finite()) {
                return Err(invalid(format!("domain truncation must be positive, got {w}")));
            }
        }
        if !(self.cap_factor >= 1.0) {
            return Err(invalid("population cap factor must be at least 1"));
        }
        Ok(())
    }

    pub fn window(&self) -> f64 {
        self.domain_truncation
            .unwrap_or_else(|| (8.0 * self.t_end.sqrt()).max(8.0))
    }

    fn birth_rate(&self) -> f64 {
        0.5 * self.particles_n as f64
    }
}

/// Equal-mass atoms at a fixed time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    pub positions: Vec<f64>,
    pub mass: f64,
    pub time: f64,
}

impl ParticleSystem {
    pub fn total_mass(&self) -> f64 {
        self.mass * self.positions.len() as f64
    }
}

/// `sum_i mass * p_h(x - position_i)`.
pub fn estimate_density(sys: &ParticleSystem, x: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    Ok(sys.mass * sys.positions.iter().map(|y| gaussian_pdf(h, x - y)).sum::<f64>())
}

/// Exact `E[uhat]` at bandwidth `h`: the heat potential at time `t + h`.
pub fn smoothed_mean(u0: &InitialCondition, t: f64, x: f64, h: f64) -> Result<f64> {
    initial_potential(u0, t + h, x)
}

/// Exact `E[uhat^2]` at bandwidth `h` for a constant density `K`:
/// `K^2 + K (sqrt(t + h) - sqrt(h)) / sqrt(pi)`.
pub fn smoothed_second_moment_constant(level: f64, t: f64, h: f64) -> f64 {
    level * level + level * ((t + h).sqrt() - h.sqrt()) / std::f64::consts::PI.sqrt()
}

/// Initial particles as (count, position generator).
enum Start {
    /// `count` particles stratified over `[lo, lo + width)`.
    Stratified { lo: f64, width: f64, count: u64 },
    /// `(count, location)` groups.
    Points(Vec<(u64, f64)>),
}

impl Start {
    fn new(config: &SimulationConfig, u0: &InitialCondition, x: f64) -> Result<Self> {
        u0.validate()?;
        if !x.is_finite() {
            return Err(invalid("observation point must be finite"));
        }
        let n = config.particles_n as f64;
        let start = match u0 {
            InitialCondition::ConstantDensity { level } => {
                let w = config.window();
                Start::Stratified {
                    lo: x - w,
                    width: 2.0 * w,
                    count: (level * 2.0 * w * n).round() as u64,
                }
            }
            InitialCondition::AtomicMeasure { atoms } => Start::Points(
                atoms
                    .iter()
                    .map(|a| ((a.weight * n).round() as u64, a.location))
                    .collect(),
            ),
        };
        if start.count() == 0 {
            return Err(invalid("initial condition rounds to zero particles"));
        }
        Ok(start)
    }

    fn count(&self) -> u64 {
        match self {
            Start::Stratified { count, .. } => *count,
            Start::Points(groups) => groups.iter().map(|g| g.0).sum(),
        }
    }

    /// Calls `f` with the position of every initial particle that is kept with
    /// probability `keep`, in a fixed order.
    fn thinned(
        &self,
        keep: f64,
        rng: &mut StreamRng,
        mut f: impl FnMut(f64, &mut StreamRng) -> std::result::Result<(), Aborted>,
    ) -> std::result::Result<(), Aborted> {
        let visit = |count: u64,
                     rng: &mut StreamRng,
                     f: &mut dyn FnMut(u64, &mut StreamRng) -> std::result::Result<(), Aborted>| {
            let mut i = next_kept(0, keep, rng);
            while i < count {
                f(i, rng)?;
                i = next_kept(i + 1, keep, rng);
            }
            Ok(())
        };
        match self {
            Start::Stratified { lo, width, count } => {
                let cell = width / *count as f64;
                visit(*count, rng, &mut |i, rng| {
                    let y = lo + (i as f64 + rng.random::<f64>()) * cell;
                    f(y, rng)
                })
            }
            Start::Points(groups) => {
                for &(count, y) in groups {
                    visit(count, rng, &mut |_, rng| f(y, rng))?;
                }
                Ok(())
            }
        }
    }
}

/// Smallest index `>= from` that survives Bernoulli(`keep`) thinning.
fn next_kept(from: u64, keep: f64, rng: &mut StreamRng) -> u64 {
    if keep >= 1.0 {
        return from;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    let skip = (u.ln() / (-keep).ln_1p()).floor();
    if skip >= (u64::MAX / 2) as f64 {
        u64::MAX / 2
    } else {
        from + skip as u64
    }
}

/// Geometric on `{1, 2, ...}` with success probability `p`.
fn geometric(p: f64, rng: &mut StreamRng) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    1 + (u.ln() / (-p).ln_1p()).floor() as u64
}

#[derive(Debug, Clone, Copy)]
struct Aborted;

/// Visitor over final particles.
trait Sink {
    /// Receives a final position.
    fn leaf(&mut self, y: f64) -> std::result::Result<(), Aborted>;
    /// Offered a subtree root; returning `true` means the sink accounted for it.
    fn prune(&mut self, _y: f64, _remaining: f64, _rng: &mut StreamRng) -> std::result::Result<bool, Aborted> {
        Ok(false)
    }
}

/// Surviving genealogy of one lineage at `y` with `remaining` time left.
fn grow_genealogy(
    y: f64,
    remaining: f64,
    b: f64,
    rng: &mut StreamRng,
    sink: &mut dyn Sink,
    stack: &mut Vec<(f64, f64)>,
) -> std::result::Result<(), Aborted> {
    stack.clear();
    stack.push((y, remaining));
    while let Some((y, r)) = stack.pop() {
        if sink.prune(y, r, rng)? {
            continue;
        }
        let u: f64 = rng.random();
        // Remaining time at the next split; none if not positive.
        let next = ((1.0 + b * r) * u - 1.0) / b;
        let z: f64 = rng.sample(StandardNormal);
        if next <= 0.0 {
            sink.leaf(y + r.sqrt() * z)?;
        } else {
            let ys = y + (r - next).sqrt() * z;
            stack.push((ys, next));
            stack.push((ys, next));
        }
    }
    Ok(())
}

/// Full particle history of one initial particle at `y`, time `0`.
fn grow_events(
    y: f64,
    t_end: f64,
    rate: f64,
    rng: &mut StreamRng,
    sink: &mut dyn Sink,
    stack: &mut Vec<(f64, f64)>,
) -> std::result::Result<(), Aborted> {
    stack.clear();
    stack.push((y, 0.0));
    while let Some((y, s)) = stack.pop() {
        let life = -(1.0 - rng.random::<f64>()).ln() / rate;
        let z: f64 = rng.sample(StandardNormal);
        if s + life >= t_end {
            sink.leaf(y + (t_end - s).sqrt() * z)?;
            continue;
        }
        let ys = y + life.sqrt() * z;
        if rng.random::<bool>() {
            stack.push((ys, s + life));
            stack.push((ys, s + life));
        }
        if stack.len() as f64 > 1e9 {
            return Err(Aborted);
        }
    }
    Ok(())
}

fn evolve(
    config: &SimulationConfig,
    start: &Start,
    rng: &mut StreamRng,
    sink: &mut dyn Sink,
) -> std::result::Result<(), Aborted> {
    let b = config.birth_rate();
    let t = config.t_end;
    let mut stack = Vec::new();
    match config.method {
        Method::Genealogy => {
            let survive = 1.0 / (1.0 + b * t);
            start.thinned(survive, rng, |y, rng| grow_genealogy(y, t, b, rng, sink, &mut stack))
        }
        Method::EventDriven => start.thinned(1.0, rng, |y, rng| grow_events(y, t, 2.0 * b, rng, sink, &mut stack)),
    }
}

fn population_cap(config: &SimulationConfig, start: &Start) -> u64 {
    (config.cap_factor * (config.particles_n.max(start.count())) as f64) as u64
}

struct Collect {
    positions: Vec<f64>,
    cap: u64,
}

impl Sink for Collect {
    fn leaf(&mut self, y: f64) -> std::result::Result<(), Aborted> {
        self.positions.push(y);
        if self.positions.len() as u64 > self.cap {
            return Err(Aborted);
        }
        Ok(())
    }
}

/// One realization of the particle system at `t_end`.
///
/// `x` centres the constant-density window and is otherwise unused.
pub fn simulate_path(
    config: &SimulationConfig,
    u0: &InitialCondition,
    x: f64,
    rng: &mut StreamRng,
) -> Result<ParticleSystem> {
    config.validate()?;
    let start = Start::new(config, u0, x)?;
    let cap = population_cap(config, &start);
    let mut sink = Collect {
        positions: Vec::new(),
        cap,
    };
    evolve(config, &start, rng, &mut sink).map_err(|_| Error::TooManyAborted {
        aborted: 1,
        replicates: 1,
    })?;
    Ok(ParticleSystem {
        positions: sink.positions,
        mass: 1.0 / config.particles_n as f64,
        time: config.t_end,
    })
}

/// Kernel sums at `x` for every bandwidth, plus the final particle count.
struct Smoother {
    x: f64,
    inv_two_h: Vec<f64>,
    norm: Vec<f64>,
    sums: Vec<f64>,
    /// Leaves farther than this contribute nothing representable.
    reach: f64,
    h_max: f64,
    b: f64,
    count: u64,
    cap: u64,
    pruning: bool,
}

impl Smoother {
    fn new(x: f64, bandwidths: &[f64], b: f64, cap: u64, pruning: bool) -> Self {
        let h_max = bandwidths[bandwidths.len() - 1];
        Self {
            x,
            inv_two_h: bandwidths.iter().map(|h| 0.5 / h).collect(),
            norm: bandwidths
                .iter()
                .map(|h| 1.0 / (2.0 * std::f64::consts::PI * h).sqrt())
                .collect(),
            sums: vec![0.0; bandwidths.len()],
            reach: if pruning {
                PRUNE_SIGMAS * h_max.sqrt()
            } else {
                f64::INFINITY
            },
            h_max,
            b,
            count: 0,
            cap,
            pruning,
        }
    }

    fn add(&mut self, k: u64) -> std::result::Result<(), Aborted> {
        self.count += k;
        if self.count > self.cap {
            Err(Aborted)
        } else {
            Ok(())
        }
    }
}

impl Sink for Smoother {
    fn leaf(&mut self, y: f64) -> std::result::Result<(), Aborted> {
        self.add(1)?;
        let d = self.x - y;
        if d.abs() <= self.reach {
            let d2 = d * d;
            for ((s, c), n) in self.sums.iter_mut().zip(&self.inv_two_h).zip(&self.norm) {
                *s += n * (-d2 * c).exp();
            }
        }
        Ok(())
    }

    fn prune(&mut self, y: f64, remaining: f64, rng: &mut StreamRng) -> std::result::Result<bool, Aborted> {
        if !self.pruning || (self.x - y).abs() <= PRUNE_SIGMAS * (remaining + self.h_max).sqrt() {
            return Ok(false);
        }
        // Leaf count of a surviving lineage is geometric with mean 1 + b r.
        let k = geometric(1.0 / (1.0 + self.b * remaining), rng);
        self.add(k)?;
        Ok(true)
    }
}

/// Smoothed density at each bandwidth and total mass, for one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSample {
    pub replicate: usize,
    pub uhat: Vec<f64>,
    pub total_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSet {
    pub bandwidths: Vec<f64>,
    pub initial_mass: f64,
    /// Completed replicates in replicate order.
    pub samples: Vec<ReplicateSample>,
    pub aborted: usize,
}

/// Runs every replicate on its own stream `(seed, replicate)`.
///
/// Aborted replicates (population above the cap) are excluded and counted;
/// more than 1% aborted fails the run.
pub fn run_replicates(config: &SimulationConfig, u0: &InitialCondition, x: f64) -> Result<ReplicateSet> {
    config.validate()?;
    let start = Start::new(config, u0, x)?;
    let cap = population_cap(config, &start);
    let mass = 1.0 / config.particles_n as f64;
    let outcomes: Vec<Option<ReplicateSample>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(config.seed, &[r as u64]);
            // The event-driven sampler is the unpruned reference.
            let pruning = config.method == Method::Genealogy;
            let mut sink = Smoother::new(x, &config.bandwidths, config.birth_rate(), cap, pruning);
            evolve(config, &start, &mut rng, &mut sink)
                .ok()
                .map(|_| ReplicateSample {
                    replicate: r,
                    uhat: sink.sums.iter().map(|s| s * mass).collect(),
                    total_mass: sink.count as f64 * mass,
                })
        })
        .collect();
    let aborted = outcomes.iter().filter(|o| o.is_none()).count();
    if aborted as f64 > MAX_ABORTED_FRACTION * config.replicates as f64 {
        return Err(Error::TooManyAborted {
            aborted,
            replicates: config.replicates,
        });
    }
    Ok(ReplicateSet {
        bandwidths: config.bandwidths.clone(),
        initial_mass: start.count() as f64 * mass,
        samples: outcomes.into_iter().flatten().collect(),
        aborted,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub n: usize,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthMoments {
    pub bandwidth: f64,
    pub moments: Vec<MomentEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub replicates: usize,
    pub aborted: usize,
    pub initial_mass: f64,
    /// Mean final total mass.
    pub total_mass: MomentEstimate,
    pub per_bandwidth: Vec<BandwidthMoments>,
    pub extrapolation: Extrapolation,
    /// `h -> 0` estimates, combined per replicate so the error reflects the
    /// correlation between bandwidths. Absent when the ladder is too short.
    pub extrapolated: Option<Vec<MomentEstimate>>,
}

/// Weights `w` with `sum_j w_j y_j` the least-squares intercept of `y` on the
/// basis `(1, sqrt h, h)` truncated to `order.basis_len()` terms.
pub fn extrapolation_weights(bandwidths: &[f64], order: Extrapolation) -> Option<Vec<f64>> {
    let k = order.basis_len();
    if bandwidths.len() < k {
        return None;
    }
    let basis = |h: f64| [1.0, h.sqrt(), h];
    // Normal matrix and its inverse's first row via Gauss-Jordan.
    let mut a = [[0.0f64; 6]; 3];
    for &h in bandwidths {
        let phi = basis(h);
        for i in 0..k {
            for j in 0..k {
                a[i][j] += phi[i] * phi[j];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate().take(k) {
        row[k + i] = 1.0;
    }
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        let pivot = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= pivot);
        for i in 0..k {
            if i != c {
                let f = a[i][c];
                let row_c = a[c];
                a[i].iter_mut().zip(row_c).for_each(|(v, r)| *v -= f * r);
            }
        }
    }
    let first_row: Vec<f64> = (0..k).map(|j| a[0][k + j]).collect();
    Some(
        bandwidths
            .iter()
            .map(|&h| {
                let phi = basis(h);
                (0..k).map(|j| first_row[j] * phi[j]).sum()
            })
            .collect(),
    )
}

fn estimate(n: usize, values: impl Iterator<Item = f64>) -> MomentEstimate {
    let mut m = Moments::default();
    values.for_each(|v| m.push(v));
    MomentEstimate {
        n,
        mean: m.mean,
        std_error: m.std_error(),
    }
}

/// Moments of `uhat^n` from already simulated replicates.
pub fn moments_from_samples(
    set: &ReplicateSet,
    orders: &[usize],
    extrapolation: Extrapolation,
) -> Result<EmpiricalMoments> {
    if set.samples.len() < MIN_REPLICATES {
        return Err(invalid(format!(
            "need at least {MIN_REPLICATES} replicates, got {}",
            set.samples.len()
        )));
    }
    if orders.contains(&0) {
        return Err(invalid("moment orders must be positive"));
    }
    let per_bandwidth = set
        .bandwidths
        .iter()
        .enumerate()
        .map(|(j, &h)| BandwidthMoments {
            bandwidth: h,
            moments: orders
                .iter()
                .map(|&n| estimate(n, set.samples.iter().map(|s| s.uhat[j].powi(n as i32))))
                .collect(),
        })
        .collect();
    let extrapolated = extrapolation_weights(&set.bandwidths, extrapolation).map(|w| {
        orders
            .iter()
            .map(|&n| {
                estimate(
                    n,
                    set.samples
                        .iter()
                        .map(|s| s.uhat.iter().zip(&w).map(|(u, w)| w * u.powi(n as i32)).sum()),
                )
            })
            .collect()
    });
    Ok(EmpiricalMoments {
        replicates: set.samples.len(),
        aborted: set.aborted,
        initial_mass: set.initial_mass,
        total_mass: estimate(1, set.samples.iter().map(|s| s.total_mass)),
        per_bandwidth,
        extrapolation,
        extrapolated,
    })
}

pub fn empirical_moments(
    config: &SimulationConfig,
    u0: &InitialCondition,
    x: f64,
    orders: &[usize],
) -> Result<EmpiricalMoments> {
    if config.replicates < MIN_REPLICATES {
        return Err(invalid(format!(
            "need at least {MIN_REPLICATES} replicates, got {}",
            config.replicates
        )));
    }
    moments_from_samples(&run_replicates(config, u0, x)?, orders, config.extrapolation)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub z: f64,
    pub frequency: f64,
    pub std_error: f64,
    pub exceedances: usize,
    /// Fewer than 5 exceedances: the frequency is only resolved as `<= 5/replicates`.
    pub censored: bool,
}

/// Exceedance frequencies `P(uhat > z)` at the smallest bandwidth.
pub fn tail_from_samples(set: &ReplicateSet, thresholds: &[f64]) -> Vec<TailPoint> {
    let total = set.samples.len();
    thresholds
        .iter()
        .map(|&z| {
            let k = set.samples.iter().filter(|s| s.uhat[0] > z).count();
            let p = if total == 0 { 0.0 } else { k as f64 / total as f64 };
            TailPoint {
                z,
                frequency: p,
                std_error: if total == 0 {
                    0.0
                } else {
                    (p * (1.0 - p) / total as f64).sqrt()
                },
                exceedances: k,
                censored: k < 5,
            }
        })
        .collect()
}

pub fn empirical_tail(
    config: &SimulationConfig,
    u0: &InitialCondition,
    x: f64,
    thresholds: &[f64],
) -> Result<Vec<TailPoint>> {
    Ok(tail_from_samples(&run_replicates(config, u0, x)?, thresholds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn within(est: &MomentEstimate, exact: f64, k: f64) -> bool {
        (est.mean - exact).abs() <= k * est.std_error
    }

    #[test]
    fn density_examples() {
        let empty = ParticleSystem {
            positions: vec![],
            mass: 1.0,
            time: 1.0,
        };
        assert_eq!(estimate_density(&empty, 0.0, 1.0).unwrap(), 0.0);
        let one = ParticleSystem {
            positions: vec![0.3],
            mass: 1.0,
            time: 1.0,
        };
        assert!((estimate_density(&one, 0.3, 1.0).unwrap() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        let two = ParticleSystem {
            positions: vec![-1.0, 1.0],
            mass: 0.5,
            time: 1.0,
        };
        assert!((estimate_density(&two, 0.0, 1.0).unwrap() - 0.241_970_724_5).abs() < 1e-10);
        assert!(estimate_density(&two, 0.0, 0.0).is_err());
    }

    #[test]
    fn extrapolation_weights_reproduce_basis() {
        let h = DEFAULT_BANDWIDTHS;
        for order in [Extrapolation::Linear, Extrapolation::Quadratic] {
            let w = extrapolation_weights(&h, order).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().zip(h).map(|(w, h)| w * h.sqrt()).sum::<f64>().abs() < 1e-12);
            if order == Extrapolation::Quadratic {
                assert!(w.iter().zip(h).map(|(w, h)| w * h).sum::<f64>().abs() < 1e-12);
            }
        }
        assert!(extrapolation_weights(&[0.01, 0.02], Extrapolation::Quadratic).is_none());
        assert!(extrapolation_weights(&[0.01, 0.02], Extrapolation::Linear).is_some());
    }

    #[test]
    fn config_validation() {
        let mut c = SimulationConfig::new(100, 1.0, 40, 0);
        assert!(c.validate().is_ok());
        assert_eq!(c.window(), 8.0);
        c.t_end = 4.0;
        assert_eq!(c.window(), 16.0);
        c.bandwidths = vec![0.02, 0.01];
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::new(0, 1.0, 40, 0);
        assert!(c.validate().is_err());
        c.particles_n = 5;
        c.t_end = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn simulate_path_is_deterministic_and_sized() {
        let c = SimulationConfig::new(200, 0.5, 1, 3);
        let u0 = InitialCondition::constant(1.0).unwrap();
        let a = simulate_path(&c, &u0, 0.0, &mut stream(3, &[0])).unwrap();
        let b = simulate_path(&c, &u0, 0.0, &mut stream(3, &[0])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mass, 1.0 / 200.0);
        assert!(a.positions.iter().all(|y| y.is_finite()));
        let c = simulate_path(&c, &u0, 0.0, &mut stream(3, &[1])).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dirac_mean_density_is_smoothed_kernel() {
        let mut c = SimulationConfig::new(500, 1.0, 4000, 11);
        c.bandwidths = vec![0.01, 0.1];
        let m = empirical_moments(&c, &InitialCondition::dirac(0.0), 0.0, &[1]).unwrap();
        for bm in &m.per_bandwidth {
            assert!(
                within(&bm.moments[0], gaussian_pdf(1.0 + bm.bandwidth, 0.0), 3.5),
                "{bm:?}"
            );
        }
        assert!(within(&m.total_mass, 1.0, 3.5), "{:?}", m.total_mass);
    }

    #[test]
    fn genealogy_and_event_driven_agree() {
        let u0 = InitialCondition::constant(1.0).unwrap();
        let mut c = SimulationConfig::new(20, 1.0, 3000, 5);
        c.bandwidths = vec![0.05];
        let g = empirical_moments(&c, &u0, 0.0, &[1, 2]).unwrap();
        c.method = Method::EventDriven;
        let e = empirical_moments(&c, &u0, 0.0, &[1, 2]).unwrap();
        for k in 0..2 {
            let (a, b) = (g.per_bandwidth[0].moments[k], e.per_bandwidth[0].moments[k]);
            let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            assert!((a.mean - b.mean).abs() < 3.5 * se, "{a:?} vs {b:?}");
        }
        let se = (g.total_mass.std_error.powi(2) + e.total_mass.std_error.powi(2)).sqrt();
        assert!((g.total_mass.mean - e.total_mass.mean).abs() < 3.5 * se);
        assert_eq!(g.initial_mass, e.initial_mass);
    }

    #[test]
    fn tail_frequencies_are_monotone() {
        let mut c = SimulationConfig::new(200, 1.0, 500, 1);
        c.bandwidths = vec![0.01];
        let tail = empirical_tail(
            &c,
            &InitialCondition::constant(1.0).unwrap(),
            0.0,
            &[0.0, 0.5, 1.0, 2.0, 1e6],
        )
        .unwrap();
        assert_eq!(tail[0].frequency, 1.0);
        assert_eq!(tail[4].frequency, 0.0);
        assert!(tail[4].censored);
        assert!(tail.windows(2).all(|w| w[0].frequency >= w[1].frequency));
    }

    #[test]
    fn too_many_aborts_fail_the_run() {
        let mut c = SimulationConfig::new(50, 5.0, 40, 0);
        c.cap_factor = 1.0;
        let r = run_replicates(&c, &InitialCondition::dirac(0.0), 0.0);
        assert!(matches!(r, Err(Error::TooManyAborted { .. })), "{r:?}");
        assert!(empirical_moments(
            &SimulationConfig::new(50, 1.0, 10, 0),
            &InitialCondition::dirac(0.0),
            0.0,
            &[1]
        )
        .is_err());
    }
}

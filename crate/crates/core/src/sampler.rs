//! Markov chains for the plaquette random-cluster model and its coupling with
//! Potts lattice gauge theory.
//!
//! Chain `k` of a run seeded with `s` draws from `ChaCha8Rng::seed_from_u64(s)`
//! switched to stream `k`; pooled results are merged in chain order.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::homology::boundary_matrix;
use crate::lattice::{Cell, Chain, Configuration};
use crate::measure::{cycle_vector, is_null_homologous, BoundaryCondition, MeasureError, Model};
use crate::zq_linalg::{kernel_mod, HowellForm};

/// Largest plaquette count for which class orders are cached densely.
const DENSE_CACHE_LIMIT: usize = 18;

/// Largest number of cocycle bases kept by a coupled chain.
const KERNEL_CACHE_LIMIT: usize = 1 << 16;

/// Smallest batch count the batch-means doubling will go down to.
const MIN_BATCHES: usize = 32;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error("the coupled chain needs the free boundary condition, got {0}")]
    CoupledNeedsFree(&'static str),
    #[error("observable {0} needs spins, which only the coupled chain carries")]
    NeedsSpins(String),
    #[error("spin value {value} at cell {cell} is not below q={q}")]
    SpinRange { cell: usize, value: u64, q: u64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// `f`: the `(i-1)`-cells of a context complex to `Z_q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    q: u64,
    values: Vec<u64>,
}

impl SpinConfig {
    pub fn new(values: Vec<u64>, q: u64) -> Result<SpinConfig, SamplerError> {
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, &v)| v >= q) {
            return Err(SamplerError::SpinRange { cell, value, q });
        }
        Ok(SpinConfig { q, values })
    }

    pub fn zero(len: usize, q: u64) -> SpinConfig {
        SpinConfig {
            q,
            values: vec![0; len],
        }
    }

    /// The assignment whose cell `k` carries base-`q` digit `k` of `index`.
    pub fn from_index(len: usize, q: u64, mut index: u64) -> SpinConfig {
        let values = (0..len)
            .map(|_| {
                let v = index % q;
                index /= q;
                v
            })
            .collect();
        SpinConfig { q, values }
    }

    pub fn index(&self) -> u64 {
        self.values.iter().rev().fold(0, |acc, &v| acc * self.q + v)
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `f(gamma)` for a coefficient vector over the same cells.
    pub fn evaluate(&self, gamma: &[u64]) -> u64 {
        let q = self.q as u128;
        (gamma
            .iter()
            .zip(&self.values)
            .map(|(&a, &b)| a as u128 * b as u128 % q)
            .sum::<u128>()
            % q) as u64
    }
}

/// Signed faces of every plaquette, as `(i-1)`-cell ids.
#[derive(Clone, Debug)]
struct Faces(Vec<Vec<(usize, i64)>>);

impl Faces {
    fn of(model: &Model) -> Faces {
        let complex = model.complex();
        let lower = complex.cells(complex.top_dim() - 1);
        let faces = complex
            .plaquettes()
            .cells()
            .iter()
            .map(|c| {
                c.boundary()
                    .into_iter()
                    .map(|(f, s)| (lower.id(&f).expect("face in complex"), s))
                    .collect()
            })
            .collect();
        Faces(faces)
    }

    fn coboundary_at(&self, f: &SpinConfig, j: usize) -> u64 {
        let q = f.q as i64;
        let s: i64 = self.0[j]
            .iter()
            .map(|&(k, sign)| sign * f.values[k] as i64)
            .sum();
        s.rem_euclid(q) as u64
    }
}

/// `(delta f)(sigma)` for every plaquette.
pub fn coboundary(model: &Model, f: &SpinConfig) -> Vec<u64> {
    let faces = Faces::of(model);
    (0..model.plaquette_count())
        .map(|j| faces.coboundary_at(f, j))
        .collect()
}

/// `H(f) = -#{sigma : (delta f)(sigma) = 0}`.
pub fn plgt_energy(model: &Model, f: &SpinConfig) -> i64 {
    -(coboundary(model, f).iter().filter(|&&v| v == 0).count() as i64)
}

/// Open probability of the heat-bath move when closing the plaquette
/// multiplies the cluster term by `m`.
pub fn open_probability(p: &BigRational, m: u64) -> BigRational {
    p / (p + (BigRational::one() - p) * BigRational::from_integer(m.into()))
}

/// Checks `w(P u s) P(close) = w(P \ s) P(open)` exactly for every `P`, `s`.
/// Returns the first failing pair as `(bit string, plaquette)`.
pub fn detailed_balance_violation(model: &Model) -> Option<(String, usize)> {
    let n = model.plaquette_count();
    let p = &model.context().p;
    (0..1u64 << n).into_par_iter().find_map_first(|k| {
        let config = Configuration::from_index(n, k);
        (0..n).filter(|&j| !config.is_open(j)).find_map(|j| {
            let open = config.with(j, true);
            let up = open_probability(p, model.class_order(&config, j));
            let lhs = model.weight(&open) * (BigRational::one() - &up);
            let rhs = model.weight(&config) * up;
            (lhs != rhs).then(|| (config.to_bit_string(), j))
        })
    })
}

/// Single-plaquette heat-bath chain.
#[derive(Clone, Debug)]
pub struct HeatBathChain<'a> {
    model: &'a Model,
    p: f64,
    state: Configuration,
    rng: ChaCha8Rng,
    sweeps: u64,
    /// Class order of plaquette `j` given the rest, at `j * 2^(n-1) + rest`.
    cache: Option<Vec<u64>>,
}

impl<'a> HeatBathChain<'a> {
    pub fn new(model: &'a Model, seed: u64, stream: u64) -> HeatBathChain<'a> {
        let n = model.plaquette_count();
        let cache = (n <= DENSE_CACHE_LIMIT && n > 0).then(|| vec![0u64; n << (n - 1)]);
        HeatBathChain {
            model,
            p: model.context().p.to_f64().expect("finite"),
            state: Configuration::empty(n),
            rng: stream_rng(seed, stream),
            sweeps: 0,
            cache,
        }
    }

    pub fn state(&self) -> &Configuration {
        &self.state
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    fn class_order(&mut self, j: usize) -> u64 {
        let Some(cache) = self.cache.as_mut() else {
            return self.model.class_order(&self.state, j);
        };
        let idx = self.state.index();
        let low = idx & ((1u64 << j) - 1);
        let high = idx >> (j + 1);
        let n = self.state.len();
        let slot = (j << (n - 1)) | (high << j | low) as usize;
        if cache[slot] == 0 {
            cache[slot] = self.model.class_order(&self.state, j);
        }
        cache[slot]
    }

    /// Resamples plaquette `j` from its conditional law.
    pub fn heat_bath_step(&mut self, j: usize) {
        let m = self.class_order(j) as f64;
        let prob = self.p / (self.p + (1.0 - self.p) * m);
        let open = self.rng.gen::<f64>() < prob;
        self.state.set(j, open);
    }

    /// One systematic scan over all plaquettes.
    pub fn sweep(&mut self) {
        for j in 0..self.state.len() {
            self.heat_bath_step(j);
        }
        self.sweeps += 1;
    }
}

/// Alternates uniform cocycle resampling with independent plaquette updates.
#[derive(Clone, Debug)]
pub struct CoupledChain<'a> {
    model: &'a Model,
    faces: Faces,
    p: f64,
    q: u64,
    complex_state: Configuration,
    spins: SpinConfig,
    rng: ChaCha8Rng,
    sweeps: u64,
    kernels: HashMap<Configuration, HowellForm>,
}

impl<'a> CoupledChain<'a> {
    pub fn new(model: &'a Model, seed: u64, stream: u64) -> Result<CoupledChain<'a>, SamplerError> {
        if model.context().boundary != BoundaryCondition::Free {
            return Err(SamplerError::CoupledNeedsFree(
                model.context().boundary.name(),
            ));
        }
        let complex = model.complex();
        let q = model.context().q;
        Ok(CoupledChain {
            model,
            faces: Faces::of(model),
            p: model.context().p.to_f64().expect("finite"),
            q,
            complex_state: Configuration::empty(model.plaquette_count()),
            spins: SpinConfig::zero(complex.cells(complex.top_dim() - 1).len(), q),
            rng: stream_rng(seed, stream),
            sweeps: 0,
            kernels: HashMap::new(),
        })
    }

    pub fn complex_state(&self) -> &Configuration {
        &self.complex_state
    }

    pub fn spins(&self) -> &SpinConfig {
        &self.spins
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn sweep(&mut self) {
        self.spins = self.sample_spins();
        self.complex_state =
            sample_complex_given_spins_with(&self.faces, &self.spins, self.p, &mut self.rng);
        self.sweeps += 1;
    }

    fn sample_spins(&mut self) -> SpinConfig {
        let values = match self.kernels.get(&self.complex_state) {
            Some(k) => k.sample(&mut self.rng),
            None => {
                let k = cocycle_basis(self.model, &self.complex_state, self.q);
                let v = k.sample(&mut self.rng);
                if self.kernels.len() < KERNEL_CACHE_LIMIT {
                    self.kernels.insert(self.complex_state.clone(), k);
                }
                v
            }
        };
        SpinConfig { q: self.q, values }
    }
}

/// Howell basis of `{f : (delta f)(sigma) = 0 for every open sigma}`.
fn cocycle_basis(model: &Model, open: &Configuration, q: u64) -> HowellForm {
    let coboundary = boundary_matrix(model.complex(), open).transpose();
    kernel_mod(&coboundary, q).expect("q >= 1").kernel
}

/// Uniform `f` among the cochains whose coboundary vanishes on `open`.
pub fn sample_spins_given_complex<R: Rng + ?Sized>(
    model: &Model,
    open: &Configuration,
    rng: &mut R,
) -> SpinConfig {
    let q = model.context().q;
    SpinConfig {
        q,
        values: cocycle_basis(model, open, q).sample(rng),
    }
}

/// Opens each plaquette with `(delta f)(sigma) = 0` independently with
/// probability `p`; every other plaquette stays closed.
pub fn sample_complex_given_spins<R: Rng + ?Sized>(
    model: &Model,
    f: &SpinConfig,
    p: f64,
    rng: &mut R,
) -> Configuration {
    sample_complex_given_spins_with(&Faces::of(model), f, p, rng)
}

fn sample_complex_given_spins_with<R: Rng + ?Sized>(
    faces: &Faces,
    f: &SpinConfig,
    p: f64,
    rng: &mut R,
) -> Configuration {
    let mut c = Configuration::empty(faces.0.len());
    for j in 0..faces.0.len() {
        let u = rng.gen::<f64>();
        if faces.coboundary_at(f, j) == 0 && u < p {
            c.set(j, true);
        }
    }
    c
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A quantity recorded once per sweep.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Observable {
    /// Fraction of open plaquettes.
    OpenDensity,
    /// Indicator that the plaquette is open.
    PlaquetteOpen(Cell),
    /// Indicator that the cycle bounds in the open complex.
    NullHomology(Chain),
    /// Indicator that `f(gamma) = 0`.
    SpinIndicator(Chain),
    /// `cos(2 pi f(gamma) / q)`.
    SpinCharacter(Chain),
}

impl Observable {
    pub fn name(&self) -> String {
        let flat = |c: &Chain| c.to_string().trim().replace('\n', " ");
        match self {
            Observable::OpenDensity => "density".into(),
            Observable::PlaquetteOpen(c) => format!("open[{c}]"),
            Observable::NullHomology(g) => format!("null-homology[{}]", flat(g)),
            Observable::SpinIndicator(g) => format!("spin-indicator[{}]", flat(g)),
            Observable::SpinCharacter(g) => format!("spin-character[{}]", flat(g)),
        }
    }

    fn needs_spins(&self) -> bool {
        matches!(
            self,
            Observable::SpinIndicator(_) | Observable::SpinCharacter(_)
        )
    }
}

enum Probe {
    Density,
    Plaquette(usize),
    Null(Vec<u64>),
    Indicator(Vec<u64>),
    Character(Vec<u64>),
}

impl Probe {
    fn resolve(model: &Model, obs: &Observable) -> Result<Probe, SamplerError> {
        Ok(match obs {
            Observable::OpenDensity => Probe::Density,
            Observable::PlaquetteOpen(c) => {
                Probe::Plaquette(model.plaquettes().id(c).ok_or_else(|| {
                    SamplerError::InvalidRun(format!("{c} is not a plaquette of the context"))
                })?)
            }
            Observable::NullHomology(g) => Probe::Null(cycle_vector(model, g)?),
            Observable::SpinIndicator(g) => Probe::Indicator(cycle_vector(model, g)?),
            Observable::SpinCharacter(g) => Probe::Character(cycle_vector(model, g)?),
        })
    }

    fn measure(
        &self,
        model: &Model,
        open: &Configuration,
        spins: Option<&SpinConfig>,
        memo: &mut NullMemo,
    ) -> f64 {
        let q = model.context().q;
        match self {
            Probe::Density => open.count_open() as f64 / open.len().max(1) as f64,
            Probe::Plaquette(j) => f64::from(u8::from(open.is_open(*j))),
            Probe::Null(v) => f64::from(u8::from(memo.get(model, open, v))),
            Probe::Indicator(v) => f64::from(u8::from(spins.expect("coupled").evaluate(v) == 0)),
            Probe::Character(v) => {
                let r = spins.expect("coupled").evaluate(v);
                (std::f64::consts::TAU * r as f64 / q as f64).cos()
            }
        }
    }
}

/// Null-homology answers per configuration, shared by all cycles of a run.
#[derive(Default)]
struct NullMemo(HashMap<(Configuration, Vec<u64>), bool>);

impl NullMemo {
    fn get(&mut self, model: &Model, open: &Configuration, v: &[u64]) -> bool {
        let key = (open.clone(), v.to_vec());
        if let Some(&b) = self.0.get(&key) {
            return b;
        }
        let b = is_null_homologous(model, open, v).expect("q >= 1");
        if self.0.len() < KERNEL_CACHE_LIMIT {
            self.0.insert(key, b);
        }
        b
    }
}

/// Length and seeding of a (possibly multi-chain) run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    /// Sweeps per chain, burn-in included.
    pub sweeps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub chains: usize,
    /// Count visited configurations (plaquette count at most 20).
    pub histogram: bool,
}

impl RunConfig {
    pub fn new(sweeps: u64, burn_in: u64, seed: u64) -> RunConfig {
        RunConfig {
            sweeps,
            burn_in,
            seed,
            chains: 1,
            histogram: false,
        }
    }

    fn validate(&self, n: usize) -> Result<(), SamplerError> {
        if self.sweeps <= self.burn_in {
            return Err(SamplerError::InvalidRun(format!(
                "sweeps ({}) must exceed burn-in ({})",
                self.sweeps, self.burn_in
            )));
        }
        if self.chains == 0 {
            return Err(SamplerError::InvalidRun(
                "at least one chain is needed".into(),
            ));
        }
        if self.histogram && n > 20 {
            return Err(SamplerError::InvalidRun(format!(
                "a histogram over {n} plaquettes is too large"
            )));
        }
        Ok(())
    }

    pub fn recorded(&self) -> u64 {
        self.sweeps - self.burn_in
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableStats {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    /// Batch-means standard error; absent with fewer than two batches.
    pub stderr: Option<f64>,
    pub batches: usize,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleStats {
    pub observables: Vec<ObservableStats>,
    pub sweeps: u64,
    pub burn_in: u64,
    pub chains: usize,
    pub seed: u64,
}

impl SampleStats {
    pub fn get(&self, name: &str) -> Option<&ObservableStats> {
        self.observables.iter().find(|o| o.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub stats: SampleStats,
    /// Visit counts of plaquette configurations by index.
    pub histogram: Option<Vec<u64>>,
    /// Visit counts of `(f, P)` at `f.index() * 2^n + P.index()`; coupled
    /// runs on tiny complexes only.
    pub joint_histogram: Option<Vec<u64>>,
    pub final_states: Vec<Configuration>,
}

impl ChainOutput {
    /// Total variation distance between the visited and the given law.
    pub fn total_variation(&self, exact: &[f64]) -> Option<f64> {
        self.histogram.as_ref().map(|h| total_variation(h, exact))
    }
}

/// `1/2 sum |count/total - exact|`.
pub fn total_variation(counts: &[u64], exact: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(exact)
        .map(|(&c, &e)| (c as f64 / total as f64 - e).abs())
        .sum::<f64>()
}

struct Trace {
    series: Vec<Vec<f64>>,
    histogram: Option<Vec<u64>>,
    joint: Option<Vec<u64>>,
    last: Configuration,
}

/// Runs `cfg.chains` heat-bath chains in parallel.
pub fn run_chain(
    model: &Model,
    cfg: &RunConfig,
    observables: &[Observable],
) -> Result<ChainOutput, SamplerError> {
    let n = model.plaquette_count();
    cfg.validate(n)?;
    if let Some(o) = observables.iter().find(|o| o.needs_spins()) {
        return Err(SamplerError::NeedsSpins(o.name()));
    }
    let probes = observables
        .iter()
        .map(|o| Probe::resolve(model, o))
        .collect::<Result<Vec<_>, _>>()?;
    let traces: Vec<Trace> = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|k| {
            let mut chain = HeatBathChain::new(model, cfg.seed, k);
            let mut memo = NullMemo::default();
            let mut trace = Trace::new(probes.len(), cfg, n, None);
            for _ in 0..cfg.burn_in {
                chain.sweep();
            }
            for _ in cfg.burn_in..cfg.sweeps {
                chain.sweep();
                trace.record(model, &probes, chain.state(), None, &mut memo, n);
            }
            trace.last = chain.state().clone();
            trace
        })
        .collect();
    Ok(merge(cfg, observables, traces))
}

/// Runs `cfg.chains` coupled chains in parallel (free boundary only).
pub fn run_coupled(
    model: &Model,
    cfg: &RunConfig,
    observables: &[Observable],
) -> Result<ChainOutput, SamplerError> {
    let n = model.plaquette_count();
    cfg.validate(n)?;
    CoupledChain::new(model, cfg.seed, 0)?;
    let probes = observables
        .iter()
        .map(|o| Probe::resolve(model, o))
        .collect::<Result<Vec<_>, _>>()?;
    let spin_cells = model.complex().cells(model.complex().top_dim() - 1).len();
    let q = model.context().q;
    let joint_size = (q as f64).powi(spin_cells as i32) * (1u64 << n.min(63)) as f64;
    let joint = (cfg.histogram && joint_size <= (1u64 << 20) as f64).then_some(joint_size as usize);
    let traces: Vec<Trace> = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|k| {
            let mut chain = CoupledChain::new(model, cfg.seed, k).expect("checked");
            let mut memo = NullMemo::default();
            let mut trace = Trace::new(probes.len(), cfg, n, joint);
            for _ in 0..cfg.burn_in {
                chain.sweep();
            }
            for _ in cfg.burn_in..cfg.sweeps {
                chain.sweep();
                trace.record(
                    model,
                    &probes,
                    chain.complex_state(),
                    Some(chain.spins()),
                    &mut memo,
                    n,
                );
            }
            trace.last = chain.complex_state().clone();
            trace
        })
        .collect();
    Ok(merge(cfg, observables, traces))
}

impl Trace {
    fn new(probes: usize, cfg: &RunConfig, n: usize, joint: Option<usize>) -> Trace {
        Trace {
            series: vec![Vec::with_capacity(cfg.recorded() as usize); probes],
            histogram: cfg.histogram.then(|| vec![0; 1 << n]),
            joint: joint.map(|s| vec![0; s]),
            last: Configuration::empty(n),
        }
    }

    fn record(
        &mut self,
        model: &Model,
        probes: &[Probe],
        open: &Configuration,
        spins: Option<&SpinConfig>,
        memo: &mut NullMemo,
        n: usize,
    ) {
        for (s, p) in self.series.iter_mut().zip(probes) {
            s.push(p.measure(model, open, spins, memo));
        }
        if let Some(h) = self.histogram.as_mut() {
            h[open.index() as usize] += 1;
        }
        if let (Some(h), Some(f)) = (self.joint.as_mut(), spins) {
            h[((f.index() << n) | open.index()) as usize] += 1;
        }
    }
}

fn merge(cfg: &RunConfig, observables: &[Observable], traces: Vec<Trace>) -> ChainOutput {
    let add = |acc: Option<Vec<u64>>, h: &Option<Vec<u64>>| match (acc, h) {
        (Some(mut a), Some(h)) => {
            a.iter_mut().zip(h).for_each(|(x, y)| *x += y);
            Some(a)
        }
        (None, Some(h)) => Some(h.clone()),
        (a, None) => a,
    };
    let histogram = traces.iter().fold(None, |acc, t| add(acc, &t.histogram));
    let joint_histogram = traces.iter().fold(None, |acc, t| add(acc, &t.joint));
    let stats = observables
        .iter()
        .enumerate()
        .map(|(k, o)| pooled_stats(o.name(), traces.iter().map(|t| t.series[k].as_slice())))
        .collect();
    ChainOutput {
        stats: SampleStats {
            observables: stats,
            sweeps: cfg.sweeps,
            burn_in: cfg.burn_in,
            chains: cfg.chains,
            seed: cfg.seed,
        },
        histogram,
        joint_histogram,
        final_states: traces.into_iter().map(|t| t.last).collect(),
    }
}

fn pooled_stats<'a>(name: String, chains: impl Iterator<Item = &'a [f64]>) -> ObservableStats {
    let chains: Vec<&[f64]> = chains.collect();
    let samples: u64 = chains.iter().map(|c| c.len() as u64).sum();
    let all = chains.iter().flat_map(|c| c.iter());
    let mean = all.clone().sum::<f64>() / samples as f64;
    let variance = if samples > 1 {
        all.map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64
    } else {
        0.0
    };
    let per: Vec<Option<(f64, usize)>> = chains.iter().map(|c| batch_means(c)).collect();
    let (stderr, batches) = if per.iter().all(Option::is_some) {
        let k = chains.len() as f64;
        let var: f64 = per.iter().flatten().map(|(s, _)| s * s).sum();
        (
            Some(var.sqrt() / k),
            per.iter().flatten().map(|(_, b)| b).sum(),
        )
    } else {
        (None, 0)
    };
    ObservableStats {
        name,
        mean,
        variance,
        stderr,
        batches,
        samples,
    }
}

/// Standard error of the mean by batch means. The batch length doubles while
/// the estimate still grows by more than 5% and at least [`MIN_BATCHES`]
/// batches remain. Returns the error and the batch count used.
pub fn batch_means(x: &[f64]) -> Option<(f64, usize)> {
    let at = |b: usize| -> Option<f64> {
        let k = x.len() / b;
        if k < 2 {
            return None;
        }
        let means: Vec<f64> = x
            .chunks_exact(b)
            .map(|c| c.iter().sum::<f64>() / b as f64)
            .collect();
        let m = means.iter().sum::<f64>() / k as f64;
        let var = means.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (k - 1) as f64;
        Some((var / k as f64).sqrt())
    };
    let mut b = 1;
    let mut se = at(b)?;
    while x.len() / (2 * b) >= MIN_BATCHES {
        let next = at(2 * b).expect("enough batches");
        b *= 2;
        if next <= se * 1.05 {
            se = se.max(next);
            break;
        }
        se = next;
    }
    Some((se, x.len() / b))
}

/// Exact joint law of spins and plaquettes on a small complex.
#[derive(Clone, Debug)]
pub struct CouplingTable {
    pub q: u64,
    pub plaquettes: usize,
    pub spin_cells: usize,
    /// Probability of `(f, P)` at `f.index() * 2^n + P.index()`.
    pub probabilities: Vec<BigRational>,
}

impl CouplingTable {
    pub fn probability(&self, f: &SpinConfig, p: &Configuration) -> &BigRational {
        &self.probabilities[((f.index() << self.plaquettes) | p.index()) as usize]
    }

    /// Law of `P`, by configuration index.
    pub fn complex_marginal(&self) -> Vec<BigRational> {
        let n = self.plaquettes;
        let mut out = vec![BigRational::zero(); 1 << n];
        for (k, w) in self.probabilities.iter().enumerate() {
            out[k & ((1 << n) - 1)] += w;
        }
        out
    }

    /// Law of `f`, by spin index.
    pub fn spin_marginal(&self) -> Vec<BigRational> {
        let n = self.plaquettes;
        let mut out = vec![BigRational::zero(); self.probabilities.len() >> n];
        for (k, w) in self.probabilities.iter().enumerate() {
            out[k >> n] += w;
        }
        out
    }
}

/// `kappa(f, P) ∝ prod_sigma [(1-p) 1{sigma not in P} + p 1{sigma in P, (delta f)(sigma) = 0}]`.
pub fn coupling_table(model: &Model) -> Result<CouplingTable, SamplerError> {
    if model.context().boundary != BoundaryCondition::Free {
        return Err(SamplerError::CoupledNeedsFree(
            model.context().boundary.name(),
        ));
    }
    let faces = Faces::of(model);
    let n = model.plaquette_count();
    let q = model.context().q;
    let spin_cells = model.complex().cells(model.complex().top_dim() - 1).len();
    let size = (q as u128).pow(spin_cells as u32) << n;
    if size > 1 << 22 {
        return Err(SamplerError::InvalidRun(format!(
            "joint table of {size} entries is too large"
        )));
    }
    let p = &model.context().p;
    let not_p = BigRational::one() - p;
    let pow = |x: &BigRational, k: usize| num_traits::pow(x.clone(), k);
    let weights: Vec<BigRational> = (0..size as u64)
        .into_par_iter()
        .map(|k| {
            let f = SpinConfig::from_index(spin_cells, q, k >> n);
            let config = Configuration::from_index(n, k & ((1 << n) - 1));
            if config
                .open_indices()
                .any(|j| faces.coboundary_at(&f, j) != 0)
            {
                return BigRational::zero();
            }
            let open = config.count_open();
            pow(p, open) * pow(&not_p, n - open)
        })
        .collect();
    let total: BigRational = weights.iter().sum();
    Ok(CouplingTable {
        q,
        plaquettes: n,
        spin_cells,
        probabilities: weights.into_iter().map(|w| w / &total).collect(),
    })
}

/// Gauge-theory law `nu(f) ∝ (1-p)^(#plaquettes with (delta f) != 0)`,
/// i.e. `exp(-beta H(f))` with `1 - p = exp(-beta)`.
pub fn plgt_gibbs(model: &Model) -> Vec<BigRational> {
    let faces = Faces::of(model);
    let q = model.context().q;
    let n = model.plaquette_count();
    let spin_cells = model.complex().cells(model.complex().top_dim() - 1).len();
    let not_p = BigRational::one() - &model.context().p;
    let weights: Vec<BigRational> = (0..q.pow(spin_cells as u32))
        .map(|k| {
            let f = SpinConfig::from_index(spin_cells, q, k);
            let violated = (0..n).filter(|&j| faces.coboundary_at(&f, j) != 0).count();
            num_traits::pow(not_p.clone(), violated)
        })
        .collect();
    let total: BigRational = weights.iter().sum();
    weights.into_iter().map(|w| w / &total).collect()
}

/// Exact values of the candidate Wilson-loop observables.
#[derive(Clone, Debug)]
pub struct WilsonExact {
    /// Probability that `gamma` bounds in the random complex.
    pub null_homology: BigRational,
    /// Law of `f(gamma)` under the coupling, by residue.
    pub spin_value_law: Vec<BigRational>,
}

impl WilsonExact {
    pub fn spin_indicator(&self) -> &BigRational {
        &self.spin_value_law[0]
    }

    /// `E cos(2 pi f(gamma)/q)`.
    pub fn spin_character(&self) -> f64 {
        let q = self.spin_value_law.len() as f64;
        self.spin_value_law
            .iter()
            .enumerate()
            .map(|(r, w)| {
                w.to_f64().unwrap_or(f64::NAN) * (std::f64::consts::TAU * r as f64 / q).cos()
            })
            .sum()
    }

    /// The character average as an exact rational when every
    /// `cos(2 pi r/q)` is rational (q in {1, 2, 3, 4, 6}).
    pub fn spin_character_exact(&self) -> Option<BigRational> {
        let q = self.spin_value_law.len() as u64;
        let mut acc = BigRational::zero();
        for (r, w) in self.spin_value_law.iter().enumerate() {
            acc += w * rational_cos(r as u64, q)?;
        }
        Some(acc)
    }
}

/// `cos(2 pi r / q)` when it is rational.
fn rational_cos(r: u64, q: u64) -> Option<BigRational> {
    let half = |a: i64| BigRational::new(a.into(), 2.into());
    let r = r % q;
    // 12 r / q in twelfths of a turn.
    if (12 * r) % q != 0 {
        return None;
    }
    match 12 * r / q {
        0 => Some(half(2)),
        2 | 10 => Some(half(1)),
        3 | 9 => Some(half(0)),
        4 | 8 => Some(half(-1)),
        6 => Some(half(-2)),
        _ => None,
    }
}

/// Wilson-loop quantities from the exact coupling.
pub fn wilson_exact(model: &Model, gamma: &Chain) -> Result<WilsonExact, SamplerError> {
    let v = cycle_vector(model, gamma)?;
    let table = coupling_table(model)?;
    let n = table.plaquettes;
    let mut law = vec![BigRational::zero(); table.q as usize];
    let mut null = BigRational::zero();
    let mut by_complex: HashMap<u64, bool> = HashMap::new();
    for (k, w) in table.probabilities.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        let f = SpinConfig::from_index(table.spin_cells, table.q, (k >> n) as u64);
        law[f.evaluate(&v) as usize] += w;
        let idx = (k & ((1 << n) - 1)) as u64;
        let bounds = match by_complex.get(&idx) {
            Some(&b) => b,
            None => {
                let b = is_null_homologous(model, &Configuration::from_index(n, idx), &v)?;
                by_complex.insert(idx, b);
                b
            }
        };
        if bounds {
            null += w;
        }
    }
    Ok(WilsonExact {
        null_homology: null,
        spin_value_law: law,
    })
}

/// Runs the coupled chain and reports the null-homology indicator with both
/// spin-side estimators.
pub fn wilson_estimate(
    model: &Model,
    cfg: &RunConfig,
    gamma: &Chain,
) -> Result<SampleStats, SamplerError> {
    let obs = [
        Observable::NullHomology(gamma.clone()),
        Observable::SpinIndicator(gamma.clone()),
        Observable::SpinCharacter(gamma.clone()),
    ];
    Ok(run_coupled(model, cfg, &obs)?.stats)
}

/// Pressure estimate by integrating the sampled density in
/// `pi = log(p/(1-p))`.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureEstimate {
    pub pi: f64,
    pub mean: f64,
    pub stderr: f64,
    pub grid_points: usize,
}

/// `f(pi) = log(cluster(empty))/n + int_{-inf}^{pi} h`, with Simpson's rule on
/// `[pi - span, pi]` and the tail taken as `h(pi - span)` since `h` decays
/// like `e^pi` there. `intervals` must be even.
pub fn estimate_pressure(
    model: &Model,
    cfg: &RunConfig,
    span: f64,
    intervals: usize,
) -> Result<PressureEstimate, SamplerError> {
    let ctx = model.context();
    if ctx.p.is_zero() || ctx.p >= BigRational::one() {
        return Err(SamplerError::InvalidRun("pressure needs 0 < p < 1".into()));
    }
    if intervals == 0 || intervals % 2 == 1 || span <= 0.0 {
        return Err(SamplerError::InvalidRun(
            "need an even positive interval count and a positive span".into(),
        ));
    }
    let n = model.plaquette_count().max(1) as f64;
    let x = &ctx.p / (BigRational::one() - &ctx.p);
    let pi = x.to_f64().expect("finite").ln();
    let h = span / intervals as f64;
    let base = ln_big(&model.cluster_term(&Configuration::empty(model.plaquette_count()))) / n;
    let mut mean = base;
    let mut var = 0.0;
    for k in 0..=intervals {
        let t = pi - span + k as f64 * h;
        let w = if k == 0 || k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        } * h
            / 3.0
            + if k == 0 { 1.0 } else { 0.0 };
        let p = 1.0 / (1.0 + (-t).exp());
        let point = Model::new(&ctx.with_p(approximate_rational(p)))?;
        let run = RunConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            histogram: false,
            ..cfg.clone()
        };
        let stats = run_chain(&point, &run, &[Observable::OpenDensity])?.stats;
        let d = &stats.observables[0];
        mean += w * d.mean;
        var += (w * d.stderr.unwrap_or(0.0)).powi(2);
    }
    Ok(PressureEstimate {
        pi,
        mean,
        stderr: var.sqrt(),
        grid_points: intervals + 1,
    })
}

fn ln_big(a: &BigUint) -> f64 {
    let bits = a.bits();
    if bits <= 1000 {
        return a.to_f64().expect("finite").ln();
    }
    let shift = bits - 64;
    (a >> shift).to_f64().expect("finite").ln() + shift as f64 * std::f64::consts::LN_2
}

fn approximate_rational(p: f64) -> BigRational {
    BigRational::from_float(p).unwrap_or_else(BigRational::zero)
}

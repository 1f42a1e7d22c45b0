//! Exact finite-volume plaquette random-cluster measures.
//!
//! A configuration with `k` of `n` plaquettes open has weight
//! `p^k (1-p)^(n-k)` times a cluster term from [`ClusterEvaluator`]. With
//! `p = a/b`, tables store the integer `a^k (b-a)^(n-k) * cluster` so that all
//! normalizations stay exact.

use std::collections::HashSet;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::homology::{ClusterEvaluator, CubicalComplex, HomologyError};
use crate::lattice::{
    Cell, CellIndex, Chain, Configuration, Convention, DualPairing, LatticeBox, LatticeError,
};
use crate::zq_linalg::{solve_mod, LinalgError};

/// Largest plaquette count [`enumerate_measure`] accepts by default.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Largest truncation radius tried before giving up on stabilization.
pub const MAX_TRUNCATION_RADIUS: u32 = 16;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("{count} plaquettes exceed the enumeration cap of {cap}")]
    CapExceeded { count: usize, cap: usize },
    #[error("truncation did not stabilize up to radius {0}")]
    NoStabilization(u32),
    #[error("duality needs 1 <= i <= d-1, got i={i}, d={d}")]
    NoDual { i: usize, d: usize },
    #[error("chain is not an (i-1)-cycle of the context: {0}")]
    NotACycle(String),
    #[error("measures live on different plaquette sets")]
    Mismatch,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Homology(#[from] HomologyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// External plaquette data for a box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    Free,
    Wired,
    /// The listed external plaquettes are open, every other one closed.
    Plaquettes(Vec<Cell>),
    /// The listed external plaquettes are closed, every other one open.
    WiredAtInfinity(Vec<Cell>),
}

impl BoundaryCondition {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryCondition::Free => "free",
            BoundaryCondition::Wired => "wired",
            BoundaryCondition::Plaquettes(_) => "plaquettes",
            BoundaryCondition::WiredAtInfinity(_) => "wired-at-infinity",
        }
    }

    pub fn cells(&self) -> &[Cell] {
        match self {
            BoundaryCondition::Plaquettes(c) | BoundaryCondition::WiredAtInfinity(c) => c,
            _ => &[],
        }
    }

    fn needs_truncation(&self) -> bool {
        matches!(
            self,
            BoundaryCondition::Plaquettes(_) | BoundaryCondition::WiredAtInfinity(_)
        )
    }
}

/// Everything that fixes a finite-volume measure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Context {
    pub lattice_box: LatticeBox,
    pub i: usize,
    pub q: u64,
    pub p: BigRational,
    pub boundary: BoundaryCondition,
    /// Truncation radius for `Plaquettes` and `WiredAtInfinity`; the minimal
    /// admissible radius is used when unset.
    pub radius: Option<u32>,
}

impl Context {
    pub fn new(
        lattice_box: LatticeBox,
        i: usize,
        q: u64,
        p: BigRational,
        boundary: BoundaryCondition,
    ) -> Result<Context, MeasureError> {
        let ctx = Context {
            lattice_box,
            i,
            q,
            p,
            boundary,
            radius: None,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        let d = self.d();
        let bad = |m: String| Err(MeasureError::InvalidContext(m));
        if self.i == 0 || self.i > d {
            return bad(format!("need 1 <= i <= d, got i={} d={d}", self.i));
        }
        if self.q == 0 {
            return bad("q must be at least 1".into());
        }
        if self.p.is_negative() || self.p > BigRational::one() {
            return bad(format!("p={} is not in [0,1]", self.p));
        }
        if self.boundary.needs_truncation() && self.i == d {
            return bad("external plaquettes need i < d".into());
        }
        let own: HashSet<Cell> = self.lattice_box.cells(self.i, self.i).into_iter().collect();
        for c in self.boundary.cells() {
            if c.ambient_dim() != d
                || c.dim() != self.i
                || c.lattice() != self.lattice_box.lattice()
            {
                return bad(format!(
                    "boundary cell {c} is not an {}-cell of the box lattice",
                    self.i
                ));
            }
            if own.contains(c) {
                return bad(format!("boundary cell {c} is a plaquette of the box"));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.lattice_box.dim()
    }

    pub fn with_p(&self, p: BigRational) -> Context {
        Context { p, ..self.clone() }
    }

    pub fn with_boundary(&self, boundary: BoundaryCondition) -> Context {
        Context {
            boundary,
            radius: None,
            ..self.clone()
        }
    }

    pub fn with_radius(&self, radius: u32) -> Context {
        Context {
            radius: Some(radius),
            ..self.clone()
        }
    }

    pub fn plaquettes(&self) -> Vec<Cell> {
        self.lattice_box.cells(self.i, self.i)
    }

    pub fn plaquette_count(&self) -> usize {
        self.plaquettes().len()
    }

    /// Smallest radius whose grown box holds the boundary data; for
    /// `WiredAtInfinity` the closed cells must also avoid its boundary.
    pub fn minimal_radius(&self) -> u32 {
        let cells = self.boundary.cells();
        match self.boundary {
            BoundaryCondition::Plaquettes(_) => (0..)
                .find(|&n| cells.iter().all(|c| self.lattice_box.grow(n).contains(c)))
                .expect("finite support"),
            BoundaryCondition::WiredAtInfinity(_) => (1..)
                .find(|&n| {
                    let g = self.lattice_box.grow(n);
                    cells.iter().all(|c| g.contains(c) && !g.in_boundary(c))
                })
                .expect("finite support"),
            _ => 0,
        }
    }
}

/// A context with its complex and cluster evaluator built.
#[derive(Clone, Debug)]
pub struct Model {
    ctx: Context,
    complex: CubicalComplex,
    cluster: ClusterEvaluator,
    radius: u32,
}

impl Model {
    pub fn new(ctx: &Context) -> Result<Model, MeasureError> {
        ctx.validate()?;
        let radius = ctx.radius.unwrap_or_else(|| ctx.minimal_radius());
        Model::at_radius(ctx, radius)
    }

    fn at_radius(ctx: &Context, radius: u32) -> Result<Model, MeasureError> {
        let complex = CubicalComplex::of_box(&ctx.lattice_box, ctx.i)?;
        let b = &ctx.lattice_box;
        let cluster = match &ctx.boundary {
            BoundaryCondition::Free => ClusterEvaluator::free(&complex, ctx.q)?,
            BoundaryCondition::Wired => ClusterEvaluator::wired(b, ctx.i, ctx.q)?,
            BoundaryCondition::Plaquettes(open) => {
                let ambient = b.grow(radius).with_convention(Convention::Closed);
                let extra: Vec<Cell> = open
                    .iter()
                    .filter(|c| ambient.contains(c))
                    .cloned()
                    .collect();
                ClusterEvaluator::relative(&complex, &ambient, &extra, ctx.q)?
            }
            BoundaryCondition::WiredAtInfinity(closed) => {
                let ambient = b.grow(radius).with_convention(Convention::Closed);
                let own: HashSet<&Cell> = complex.plaquettes().cells().iter().collect();
                let shut: HashSet<&Cell> =
                    closed.iter().filter(|c| !ambient.in_boundary(c)).collect();
                let extra: Vec<Cell> = ambient
                    .closed_cells(ctx.i)
                    .into_iter()
                    .filter(|c| !own.contains(c) && !shut.contains(c))
                    .collect();
                ClusterEvaluator::relative(&complex, &ambient, &extra, ctx.q)?
            }
        };
        Ok(Model {
            ctx: ctx.clone(),
            complex,
            cluster,
            radius,
        })
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn complex(&self) -> &CubicalComplex {
        &self.complex
    }

    pub fn plaquettes(&self) -> &CellIndex {
        self.complex.plaquettes()
    }

    pub fn plaquette_count(&self) -> usize {
        self.complex.plaquettes().len()
    }

    /// Truncation radius in use (zero when none is needed).
    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn cluster_term(&self, open: &Configuration) -> BigUint {
        self.cluster.term(open)
    }

    /// Cluster-term ratio between plaquette `j` closed and open.
    pub fn class_order(&self, open: &Configuration, j: usize) -> u64 {
        self.cluster.class_order(open, j)
    }

    /// Unnormalized weight `p^|P| (1-p)^(n-|P|) * cluster`.
    pub fn weight(&self, open: &Configuration) -> BigRational {
        let n = self.plaquette_count();
        let k = open.count_open();
        let p = &self.ctx.p;
        let one_minus = BigRational::one() - p;
        pow_rational(p, k)
            * pow_rational(&one_minus, n - k)
            * BigRational::from_integer(self.cluster_term(open).into())
    }

    /// All cluster terms in configuration-index order.
    pub fn cluster_table(&self) -> Vec<BigUint> {
        let n = self.plaquette_count();
        (0..1u64 << n)
            .into_par_iter()
            .map(|k| self.cluster_term(&Configuration::from_index(n, k)))
            .collect()
    }
}

fn pow_rational(x: &BigRational, k: usize) -> BigRational {
    num_traits::pow(x.clone(), k)
}

/// Unnormalized weight of a single configuration.
pub fn weight(open: &Configuration, ctx: &Context) -> Result<BigRational, MeasureError> {
    Ok(Model::new(ctx)?.weight(open))
}

/// Exact law of a small context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasureTable {
    n: usize,
    p: BigRational,
    cluster: Vec<BigUint>,
    scaled: Vec<BigUint>,
    total: BigUint,
}

impl MeasureTable {
    /// Builds the table from cluster terms listed in configuration-index order.
    pub fn from_clusters(n: usize, p: &BigRational, cluster: Vec<BigUint>) -> MeasureTable {
        assert_eq!(cluster.len(), 1usize << n);
        let (a, b) = split_probability(p);
        let c = &b - &a;
        let pow_a: Vec<BigUint> = (0..=n).map(|k| num_traits::pow(a.clone(), k)).collect();
        let pow_c: Vec<BigUint> = (0..=n).map(|k| num_traits::pow(c.clone(), k)).collect();
        let scaled: Vec<BigUint> = cluster
            .par_iter()
            .enumerate()
            .map(|(idx, t)| {
                let k = (idx as u64).count_ones() as usize;
                &pow_a[k] * &pow_c[n - k] * t
            })
            .collect();
        let total = scaled.iter().sum();
        MeasureTable {
            n,
            p: p.clone(),
            cluster,
            scaled,
            total,
        }
    }

    /// The same cluster terms at another `p`.
    pub fn with_p(&self, p: &BigRational) -> MeasureTable {
        MeasureTable::from_clusters(self.n, p, self.cluster.clone())
    }

    pub fn plaquette_count(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    pub fn p(&self) -> &BigRational {
        &self.p
    }

    pub fn cluster_terms(&self) -> &[BigUint] {
        &self.cluster
    }

    /// Integer weights proportional to the probabilities.
    pub fn scaled_weights(&self) -> &[BigUint] {
        &self.scaled
    }

    pub fn probability(&self, index: u64) -> BigRational {
        ratio(&self.scaled[index as usize], &self.total)
    }

    pub fn probabilities(&self) -> Vec<BigRational> {
        (0..self.len() as u64)
            .map(|k| self.probability(k))
            .collect()
    }

    pub fn total_probability(&self) -> BigRational {
        self.probabilities().into_iter().sum()
    }

    /// `Z = sum_P p^|P| (1-p)^(n-|P|) cluster(P)`.
    pub fn partition_function(&self) -> BigRational {
        let (_, b) = split_probability(&self.p);
        ratio(&self.total, &num_traits::pow(b, self.n))
    }

    /// `Y = (1-p)^(-n) Z`, undefined at `p = 1`.
    pub fn rescaled_partition_function(&self) -> Option<BigRational> {
        let (a, b) = split_probability(&self.p);
        let c = b - a;
        (!c.is_zero()).then(|| ratio(&self.total, &num_traits::pow(c, self.n)))
    }

    /// Probability that plaquette `j` is open.
    pub fn marginal(&self, j: usize) -> BigRational {
        let open: BigUint = self
            .scaled
            .iter()
            .enumerate()
            .filter(|(k, _)| (*k as u64) >> j & 1 == 1)
            .map(|(_, w)| w)
            .sum();
        ratio(&open, &self.total)
    }

    pub fn expected_open(&self) -> BigRational {
        let s: BigUint = self
            .scaled
            .iter()
            .enumerate()
            .map(|(k, w)| w * BigUint::from((k as u64).count_ones()))
            .sum();
        ratio(&s, &self.total)
    }

    /// `A_k = sum_{|P|=k} cluster(P)`, so that `Y(x) = sum_k A_k x^k` with
    /// `x = p/(1-p)`.
    pub fn partition_polynomial(&self) -> Vec<BigUint> {
        let mut a = vec![BigUint::zero(); self.n + 1];
        for (k, t) in self.cluster.iter().enumerate() {
            a[(k as u64).count_ones() as usize] += t;
        }
        a
    }
}

fn ratio(a: &BigUint, b: &BigUint) -> BigRational {
    BigRational::new(BigInt::from(a.clone()), BigInt::from(b.clone()))
}

/// `p = a/b` in lowest terms with `0 <= a <= b`.
fn split_probability(p: &BigRational) -> (BigUint, BigUint) {
    let a = p.numer().to_biguint().expect("p is nonnegative");
    let b = p.denom().to_biguint().expect("denominator is positive");
    (a, b)
}

/// Exact table for contexts with at most [`DEFAULT_ENUMERATION_CAP`] plaquettes.
pub fn enumerate_measure(ctx: &Context) -> Result<MeasureTable, MeasureError> {
    enumerate_measure_with_cap(ctx, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_measure_with_cap(ctx: &Context, cap: usize) -> Result<MeasureTable, MeasureError> {
    let model = Model::new(ctx)?;
    enumerate_model(&model, cap)
}

pub fn enumerate_model(model: &Model, cap: usize) -> Result<MeasureTable, MeasureError> {
    let n = model.plaquette_count();
    if n > cap.min(63) {
        return Err(MeasureError::CapExceeded { count: n, cap });
    }
    Ok(MeasureTable::from_clusters(
        n,
        &model.ctx.p,
        model.cluster_table(),
    ))
}

/// Evidence that truncating at `radius` already gives the limiting weights.
#[derive(Clone, Debug)]
pub struct StabilizationCertificate {
    pub radius: u32,
    pub terms_at_radius: Vec<BigUint>,
    pub terms_at_next: Vec<BigUint>,
}

impl StabilizationCertificate {
    pub fn holds(&self) -> bool {
        self.terms_at_radius == self.terms_at_next
    }
}

/// Searches radii from the minimal one, doubling on disagreement, until the
/// cluster terms at `n` and `n+1` coincide for every configuration.
pub fn stabilize_truncation(ctx: &Context) -> Result<StabilizationCertificate, MeasureError> {
    let n_plaq = ctx.plaquette_count();
    if n_plaq > DEFAULT_ENUMERATION_CAP {
        return Err(MeasureError::CapExceeded {
            count: n_plaq,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let mut n = ctx.minimal_radius();
    while n <= MAX_TRUNCATION_RADIUS {
        let here = Model::at_radius(ctx, n)?.cluster_table();
        if !ctx.boundary.needs_truncation() {
            return Ok(StabilizationCertificate {
                radius: n,
                terms_at_next: here.clone(),
                terms_at_radius: here,
            });
        }
        let next = Model::at_radius(ctx, n + 1)?.cluster_table();
        if here == next {
            return Ok(StabilizationCertificate {
                radius: n,
                terms_at_radius: here,
                terms_at_next: next,
            });
        }
        n = (2 * n).max(n + 1);
    }
    Err(MeasureError::NoStabilization(MAX_TRUNCATION_RADIUS))
}

/// `p* = (1-p) q / ((1-p) q + p)`.
pub fn p_star(p: &BigRational, q: u64) -> BigRational {
    let qr = BigRational::from_integer(q.into());
    let t = (BigRational::one() - p) * qr;
    &t / (&t + p)
}

/// Rational approximation of the self-dual point `sqrt(q)/(1+sqrt(q))` by
/// bisection on `p* - p`, to within `1/den`.
pub fn self_dual_point(q: u64, den: u64) -> BigRational {
    let mut lo = BigRational::zero();
    let mut hi = BigRational::one();
    let eps = BigRational::new(1.into(), den.into());
    while &hi - &lo > eps {
        let mid = (&lo + &hi) / BigRational::from_integer(2.into());
        if p_star(&mid, q) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = (lo + hi) / BigRational::from_integer(2.into());
    // Snap to the nearest fraction with denominator `den`.
    let scaled = (mid * BigRational::from_integer(den.into())).round();
    scaled / BigRational::from_integer(den.into())
}

/// The dual context on the dual box, with dimension `d-i` and parameter `p*`.
pub fn dual_context(ctx: &Context) -> Result<Context, MeasureError> {
    let d = ctx.d();
    if ctx.i == 0 || ctx.i >= d {
        return Err(MeasureError::NoDual { i: ctx.i, d });
    }
    let dual_box = ctx.lattice_box.dual()?;
    let boundary = match &ctx.boundary {
        BoundaryCondition::Free => BoundaryCondition::Wired,
        BoundaryCondition::Wired => BoundaryCondition::Free,
        BoundaryCondition::Plaquettes(open) => {
            BoundaryCondition::WiredAtInfinity(open.iter().map(Cell::dual).collect())
        }
        BoundaryCondition::WiredAtInfinity(closed) => {
            BoundaryCondition::Plaquettes(closed.iter().map(Cell::dual).collect())
        }
    };
    Context::new(dual_box, d - ctx.i, ctx.q, p_star(&ctx.p, ctx.q), boundary)
}

/// Plaquette pairing between a context and its dual.
pub fn dual_pairing(ctx: &Context) -> Result<DualPairing, MeasureError> {
    let dual = dual_context(ctx)?;
    let primal = CellIndex::new(ctx.plaquettes());
    let other = CellIndex::new(dual.plaquettes());
    DualPairing::new(&primal, &other)
        .ok_or_else(|| MeasureError::InvalidContext("dual box does not pair plaquettes".into()))
}

/// Opens the duals of the closed plaquettes of `open`.
pub fn dual_configuration(
    ctx: &Context,
    open: &Configuration,
) -> Result<Configuration, MeasureError> {
    Ok(dual_pairing(ctx)?.dual_configuration(open))
}

#[derive(Clone, Debug)]
pub struct DualityReport {
    pub p: BigRational,
    pub p_star: BigRational,
    pub configs_checked: usize,
    pub max_discrepancy: BigRational,
    /// First configuration with a nonzero discrepancy.
    pub witness: Option<String>,
}

impl DualityReport {
    pub fn passed(&self) -> bool {
        self.max_discrepancy.is_zero()
    }
}

/// Compares `mu(P)` with `mu*(Q)` for every configuration.
pub fn verify_duality(ctx: &Context) -> Result<DualityReport, MeasureError> {
    let dual = dual_context(ctx)?;
    let primal = enumerate_measure(ctx)?;
    let other = enumerate_measure(&dual)?;
    let pairing = dual_pairing(ctx)?;
    let n = primal.plaquette_count();
    let mut max = BigRational::zero();
    let mut witness = None;
    for k in 0..primal.len() as u64 {
        let p = Configuration::from_index(n, k);
        let q = pairing.dual_configuration(&p);
        let diff = (primal.probability(k) - other.probability(q.index())).abs();
        if !diff.is_zero() && witness.is_none() {
            witness = Some(p.to_bit_string());
        }
        if diff > max {
            max = diff;
        }
    }
    Ok(DualityReport {
        p: ctx.p.clone(),
        p_star: dual.p,
        configs_checked: primal.len(),
        max_discrepancy: max,
        witness,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeConditionReport {
    pub checks: u64,
    /// A failing pair, as bit strings (and the plaquette for Holley checks).
    pub violation: Option<(String, String, Option<usize>)>,
}

impl LatticeConditionReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// `mu(P u P') mu(P n P') >= mu(P) mu(P')` over all pairs.
pub fn verify_fkg(table: &MeasureTable) -> LatticeConditionReport {
    let n = table.plaquette_count();
    let w = table.scaled_weights();
    let size = 1u64 << n;
    let violation = (0..size).into_par_iter().find_map_first(|a| {
        (a + 1..size).find_map(|b| {
            let lhs = &w[(a | b) as usize] * &w[(a & b) as usize];
            let rhs = &w[a as usize] * &w[b as usize];
            (lhs < rhs).then(|| {
                (
                    Configuration::from_index(n, a).to_bit_string(),
                    Configuration::from_index(n, b).to_bit_string(),
                    None,
                )
            })
        })
    });
    LatticeConditionReport {
        checks: size * (size - 1) / 2,
        violation,
    }
}

/// Holley's single-site criterion: for all `W <= Z` and every plaquette `j`,
/// `mu1(j open | W off j) <= mu2(j open | Z off j)`.
pub fn verify_holley(
    lower: &MeasureTable,
    upper: &MeasureTable,
) -> Result<LatticeConditionReport, MeasureError> {
    let n = lower.plaquette_count();
    if upper.plaquette_count() != n {
        return Err(MeasureError::Mismatch);
    }
    let (w1, w2) = (lower.scaled_weights(), upper.scaled_weights());
    if w1.iter().chain(w2).any(Zero::is_zero) {
        return Err(MeasureError::InvalidContext(
            "Holley's criterion needs strictly positive measures".into(),
        ));
    }
    let size = 1u64 << n;
    let checks = std::sync::atomic::AtomicU64::new(0);
    let violation = (0..size).into_par_iter().find_map_first(|z| {
        // Enumerate the subsets of z as the W side.
        let mut sub = z;
        loop {
            for j in 0..n {
                let bit = 1u64 << j;
                let (w_open, w_shut) = ((sub | bit) as usize, (sub & !bit) as usize);
                let (z_open, z_shut) = ((z | bit) as usize, (z & !bit) as usize);
                // a/(a+b) <= c/(c+d)  <=>  a d <= c b
                if &w1[w_open] * &w2[z_shut] > &w2[z_open] * &w1[w_shut] {
                    return Some((
                        Configuration::from_index(n, sub).to_bit_string(),
                        Configuration::from_index(n, z).to_bit_string(),
                        Some(j),
                    ));
                }
            }
            checks.fetch_add(n as u64, std::sync::atomic::Ordering::Relaxed);
            if sub == 0 {
                return None;
            }
            sub = (sub - 1) & z;
        }
    });
    Ok(LatticeConditionReport {
        checks: checks.into_inner(),
        violation,
    })
}

/// Plaquettes of `outer` that are not plaquettes of `inner`.
pub fn annulus_plaquettes(outer: &Context, inner: &LatticeBox) -> Result<Vec<Cell>, MeasureError> {
    let own: HashSet<Cell> = inner.cells(outer.i, outer.i).into_iter().collect();
    let all = outer.plaquettes();
    let all_set: HashSet<&Cell> = all.iter().collect();
    if own.iter().any(|c| !all_set.contains(c)) {
        return Err(MeasureError::InvalidContext(
            "inner box is not inside the outer box".into(),
        ));
    }
    Ok(all.into_iter().filter(|c| !own.contains(c)).collect())
}

/// The boundary condition seen by the inner box once the annulus is fixed.
pub fn combined_boundary(
    outer: &BoundaryCondition,
    annulus: &[Cell],
    state: &Configuration,
) -> BoundaryCondition {
    let open = || state.open_indices().map(|j| annulus[j].clone());
    let closed = || {
        (0..annulus.len())
            .filter(|&j| !state.is_open(j))
            .map(|j| annulus[j].clone())
    };
    match outer {
        BoundaryCondition::Free => BoundaryCondition::Plaquettes(open().collect()),
        BoundaryCondition::Plaquettes(s) => {
            BoundaryCondition::Plaquettes(s.iter().cloned().chain(open()).collect())
        }
        BoundaryCondition::Wired => BoundaryCondition::WiredAtInfinity(closed().collect()),
        BoundaryCondition::WiredAtInfinity(c) => {
            BoundaryCondition::WiredAtInfinity(c.iter().cloned().chain(closed()).collect())
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConditioningReport {
    pub inner_boundary: BoundaryCondition,
    pub configs_checked: usize,
    pub witness: Option<String>,
}

impl ConditioningReport {
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

/// Conditions the measure on `outer` on the annulus state `state` (indexed
/// like [`annulus_plaquettes`]), restricts to `inner` and compares with the
/// inner measure under the combined boundary condition.
pub fn verify_conditioning(
    outer: &Context,
    inner: &LatticeBox,
    state: &Configuration,
) -> Result<ConditioningReport, MeasureError> {
    let annulus = annulus_plaquettes(outer, inner)?;
    if state.len() != annulus.len() {
        return Err(MeasureError::InvalidContext(format!(
            "annulus state has {} bits for {} plaquettes",
            state.len(),
            annulus.len()
        )));
    }
    let big = enumerate_measure(outer)?;
    let outer_index = CellIndex::new(outer.plaquettes());
    let inner_boundary = combined_boundary(&outer.boundary, &annulus, state);
    let inner_ctx = Context::new(
        inner.clone(),
        outer.i,
        outer.q,
        outer.p.clone(),
        inner_boundary.clone(),
    )?;
    let small = enumerate_measure(&inner_ctx)?;
    let inner_ids: Vec<usize> = inner_ctx
        .plaquettes()
        .iter()
        .map(|c| outer_index.id(c).expect("nested"))
        .collect();
    let mut fixed = 0u64;
    for j in state.open_indices() {
        fixed |= 1 << outer_index.id(&annulus[j]).expect("annulus cell");
    }
    let lift = |u: u64| -> u64 {
        inner_ids.iter().enumerate().fold(
            fixed,
            |acc, (t, &id)| if u >> t & 1 == 1 { acc | 1 << id } else { acc },
        )
    };
    let m = small.plaquette_count();
    let conditional: Vec<BigUint> = (0..1u64 << m)
        .map(|u| big.scaled_weights()[lift(u) as usize].clone())
        .collect();
    let norm: BigUint = conditional.iter().sum();
    let witness = (0..1u64 << m)
        .find(|&u| ratio(&conditional[u as usize], &norm) != small.probability(u))
        .map(|u| Configuration::from_index(m, u).to_bit_string());
    Ok(ConditioningReport {
        inner_boundary,
        configs_checked: 1 << m,
        witness,
    })
}

/// Marginals of the given cells (which must be plaquettes of `model`).
pub fn marginals_on(
    model: &Model,
    table: &MeasureTable,
    cells: &[Cell],
) -> Result<Vec<BigRational>, MeasureError> {
    cells
        .iter()
        .map(|c| {
            model
                .plaquettes()
                .id(c)
                .map(|j| table.marginal(j))
                .ok_or_else(|| {
                    MeasureError::InvalidContext(format!("{c} is not a plaquette of the context"))
                })
        })
        .collect()
}

/// Single-plaquette open probability.
pub fn plaquette_marginal(ctx: &Context, sigma: &Cell) -> Result<BigRational, MeasureError> {
    let model = Model::new(ctx)?;
    let table = enumerate_model(&model, DEFAULT_ENUMERATION_CAP)?;
    Ok(marginals_on(&model, &table, std::slice::from_ref(sigma))?.remove(0))
}

/// Finite-volume pressure data at one `p` in `(0, 1)`.
#[derive(Clone, Debug)]
pub struct Pressure {
    pub plaquettes: usize,
    /// `pi = log(p/(1-p))`.
    pub pi: f64,
    pub rescaled_partition: BigRational,
    /// `f = log(Y) / n`.
    pub f: f64,
    /// `E[#open] / n`, exact.
    pub dfdpi: BigRational,
    /// Richardson-extrapolated central difference of `f` in `pi`.
    pub dfdpi_numeric: f64,
}

impl Pressure {
    pub fn derivative_error(&self) -> f64 {
        (self.dfdpi.to_f64().unwrap_or(f64::NAN) - self.dfdpi_numeric).abs()
    }
}

/// `log Y(e^pi) / n` evaluated stably from the partition polynomial.
pub fn log_partition_per_plaquette(poly: &[BigUint], pi: f64) -> f64 {
    let terms: Vec<f64> = poly
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.is_zero())
        .map(|(k, a)| ln_biguint(a) + k as f64 * pi)
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    (top + s.ln()) / (poly.len() - 1).max(1) as f64
}

fn ln_biguint(a: &BigUint) -> f64 {
    let bits = a.bits();
    if bits <= 1000 {
        return a.to_f64().expect("finite").ln();
    }
    let shift = bits - 64;
    (a >> shift).to_f64().expect("finite").ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn pressure(table: &MeasureTable) -> Result<Pressure, MeasureError> {
    let p = table.p();
    if p.is_zero() || p >= &BigRational::one() {
        return Err(MeasureError::InvalidContext(
            "pressure needs 0 < p < 1".into(),
        ));
    }
    let n = table.plaquette_count();
    let poly = table.partition_polynomial();
    let x = p / (BigRational::one() - p);
    let pi = x.to_f64().expect("finite").ln();
    let f = |t: f64| log_partition_per_plaquette(&poly, t);
    let central = |h: f64| (f(pi + h) - f(pi - h)) / (2.0 * h);
    let h = 1e-2;
    let dfdpi_numeric = (4.0 * central(h / 2.0) - central(h)) / 3.0;
    let dfdpi = table.expected_open() / BigRational::from_integer(n.max(1).into());
    Ok(Pressure {
        plaquettes: n,
        pi,
        rescaled_partition: table.rescaled_partition_function().expect("p < 1"),
        f: f(pi),
        dfdpi,
        dfdpi_numeric,
    })
}

fn eval_polynomial(poly: &[BigUint], x: &BigRational) -> BigRational {
    poly.iter().rev().fold(BigRational::zero(), |acc, a| {
        acc * x + BigRational::from_integer(a.clone().into())
    })
}

/// Exact convexity of `f` on the grid `pi_k = pi_0 + k log(ratio)`: the
/// second difference is nonnegative iff `Y(x_{k-1}) Y(x_{k+1}) >= Y(x_k)^2`.
/// Returns the first failing interior index.
pub fn convexity_violation(
    poly: &[BigUint],
    x0: &BigRational,
    ratio: &BigRational,
    points: usize,
) -> Option<usize> {
    let xs: Vec<BigRational> = (0..points).map(|k| x0 * pow_rational(ratio, k)).collect();
    let ys: Vec<BigRational> = xs.iter().map(|x| eval_polynomial(poly, x)).collect();
    (1..points.saturating_sub(1)).find(|&k| &ys[k - 1] * &ys[k + 1] < &ys[k] * &ys[k])
}

/// Whether `gamma` is a boundary in the percolation complex `open`.
pub fn is_null_homologous(
    model: &Model,
    open: &Configuration,
    gamma: &[u64],
) -> Result<bool, MeasureError> {
    let d = crate::homology::boundary_matrix(model.complex(), open);
    Ok(solve_mod(&d, gamma, model.context().q)?.is_some())
}

/// Validates `gamma` as an `(i-1)`-cycle of the context and returns its
/// coefficient vector over `Z_q`.
pub fn cycle_vector(model: &Model, gamma: &Chain) -> Result<Vec<u64>, MeasureError> {
    let i = model.context().i;
    let fail = |why: &str| {
        MeasureError::NotACycle(format!("{why}: {}", gamma.to_string().replace('\n', " ")))
    };
    if !gamma.is_zero() && gamma.dim() != Some(i - 1) {
        return Err(fail("wrong dimension"));
    }
    if !gamma.is_cycle() {
        return Err(fail("nonzero boundary"));
    }
    gamma
        .to_vector(model.complex().cells(i - 1), model.context().q)
        .ok_or_else(|| fail("support leaves the box"))
}

/// `mu([gamma] = 0 in H_{i-1}(P; Z_q))`, exact.
pub fn null_homology_probability(
    ctx: &Context,
    gamma: &Chain,
) -> Result<BigRational, MeasureError> {
    let model = Model::new(ctx)?;
    let table = enumerate_model(&model, DEFAULT_ENUMERATION_CAP)?;
    let v = cycle_vector(&model, gamma)?;
    let n = model.plaquette_count();
    let mut hit = BigUint::zero();
    for k in 0..table.len() as u64 {
        if is_null_homologous(&model, &Configuration::from_index(n, k), &v)? {
            hit += &table.scaled_weights()[k as usize];
        }
    }
    Ok(ratio(&hit, &table.total))
}

/// Parses `a/b` or a finite decimal into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, MeasureError> {
    let s = s.trim();
    let bad = || MeasureError::InvalidContext(format!("cannot read {s:?} as a rational"));
    if let Some((a, b)) = s.split_once('/') {
        let a: BigInt = a.trim().parse().map_err(|_| bad())?;
        let b: BigInt = b.trim().parse().map_err(|_| bad())?;
        if b.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(a, b));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.chars().any(|c| !c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    Ok(BigRational::new(
        num,
        num_traits::pow(BigInt::from(10), frac.len()),
    ))
}

/// `num/den` text for reports.
pub struct RationalText<'a>(pub &'a BigRational);

impl fmt::Display for RationalText<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

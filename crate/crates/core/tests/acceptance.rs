//! One PASS/FAIL line per acceptance criterion.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use prcm_core::homology::EulerPoincare;
use prcm_core::lattice::{Cell, Configuration, Convention, LatticeBox};
use prcm_core::measure::{
    annulus_plaquettes, convexity_violation, enumerate_measure, marginals_on, pressure,
    stabilize_truncation, verify_conditioning, verify_duality, verify_fkg, verify_holley,
    BoundaryCondition, Context, MeasureTable, Model,
};
use prcm_core::sampler::{
    coupling_table, detailed_balance_violation, run_chain, run_coupled, RunConfig, SpinConfig,
};
use prcm_core::zq_linalg::{howell_form, kernel_mod, smith_normal_form, IntMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn r(a: i64, b: i64) -> BigRational {
    BigRational::new(a.into(), b.into())
}

fn ps() -> Vec<BigRational> {
    vec![r(1, 4), r(1, 2), r(3, 4)]
}

fn bx(lo: &[i64], hi: &[i64], conv: Convention) -> LatticeBox {
    LatticeBox::primal(lo, hi, conv).unwrap()
}

fn edge(x: i64, y: i64, dir: usize) -> Cell {
    Cell::primal(&[x, y], &[dir]).unwrap()
}

fn ctx(b: &LatticeBox, i: usize, q: u64, p: &BigRational, bc: BoundaryCondition) -> Result<Context, String> {
    Context::new(b.clone(), i, q, p.clone(), bc).map_err(|e| e.to_string())
}

fn table(c: &Context) -> Result<MeasureTable, String> {
    enumerate_measure(c).map_err(|e| e.to_string())
}

fn model(c: &Context) -> Result<Model, String> {
    Model::new(c).map_err(|e| e.to_string())
}

fn label(b: &LatticeBox, i: usize) -> String {
    format!("{:?} {:?}..{:?} i={i}", b.convention(), b.lo(), b.hi())
}

/// Contexts with at most ten plaquettes.
fn grid() -> Vec<(LatticeBox, usize)> {
    use Convention::*;
    let all = vec![
        (bx(&[0, 0], &[2, 2], Open), 1),
        (bx(&[0, 0], &[3, 2], Open), 1),
        (bx(&[0, 0], &[4, 2], Open), 1),
        (bx(&[0, 0], &[1, 1], Closed), 1),
        (bx(&[0, 0], &[2, 1], Closed), 1),
        (bx(&[0, 0, 0], &[1, 1, 1], Closed), 2),
        (bx(&[0, 0, 0], &[2, 2, 2], Open), 1),
    ];
    for (b, i) in &all {
        assert!(b.cells(*i, *i).len() <= 10, "{}", label(b, *i));
    }
    all
}

/// A plaquette just outside the closed hull of `b`.
fn outside_cell(b: &LatticeBox, i: usize) -> Cell {
    let corner: Vec<i64> = b.lo().iter().map(|x| x.div_floor(&2) - 1).collect();
    Cell::primal(&corner, &(0..i).collect::<Vec<_>>()).unwrap()
}

fn duality() -> Outcome {
    use Convention::*;
    let mut runs = 0;
    let mut configs = 0;
    let planar = [
        bx(&[0, 0], &[2, 2], Open),
        bx(&[0, 0], &[3, 2], Open),
        bx(&[0, 0], &[3, 3], Open),
        bx(&[0, 0], &[1, 1], Closed),
        bx(&[0, 0], &[2, 1], Closed),
        bx(&[0, 0], &[2, 2], Closed),
    ];
    let cube = bx(&[0, 0, 0], &[1, 1, 1], Closed);
    let mut cases: Vec<(LatticeBox, usize, BoundaryCondition)> = Vec::new();
    for b in &planar {
        let s = vec![outside_cell(b, 1), edge(3, 3, 0)];
        for bc in [
            BoundaryCondition::Free,
            BoundaryCondition::Wired,
            BoundaryCondition::Plaquettes(s.clone()),
            BoundaryCondition::WiredAtInfinity(s),
        ] {
            cases.push((b.clone(), 1, bc));
        }
    }
    for i in [1, 2] {
        for bc in [BoundaryCondition::Free, BoundaryCondition::Wired] {
            cases.push((cube.clone(), i, bc));
        }
    }
    for (b, i, bc) in &cases {
        ensure(b.cells(*i, *i).len() <= 12, || label(b, *i))?;
        for q in 1..=4 {
            for p in ps() {
                let c = ctx(b, *i, q, &p, bc.clone())?;
                let rep = verify_duality(&c).map_err(|e| e.to_string())?;
                ensure(rep.passed(), || {
                    format!(
                        "{} {} q={q} p={p}: discrepancy {} at {:?}",
                        label(b, *i),
                        bc.name(),
                        rep.max_discrepancy,
                        rep.witness
                    )
                })?;
                runs += 1;
                configs += rep.configs_checked;
            }
        }
    }
    Ok(format!("{runs} measures, {configs} configurations, discrepancy 0"))
}

fn euler_poincare() -> Outcome {
    use Convention::*;
    let exhaustive = [
        (bx(&[0, 0], &[3, 3], Open), 1),
        (bx(&[0, 0], &[2, 2], Closed), 1),
        (bx(&[0, 0, 0], &[1, 1, 1], Closed), 1),
        (bx(&[0, 0, 0], &[1, 1, 1], Closed), 2),
        (bx(&[0, 0, 0], &[2, 2, 2], Open), 1),
        (bx(&[0, 0, 0], &[2, 2, 2], Open), 2),
    ];
    let mut checked = 0usize;
    for (b, i) in &exhaustive {
        for q in [2, 3, 4] {
            let ep = EulerPoincare::new(b, *i, q).map_err(|e| e.to_string())?;
            let n = ep.plaquette_count();
            let configs: Vec<Configuration> = (0..1u64 << n).map(|k| Configuration::from_index(n, k)).collect();
            ep.verify(&configs).map_err(|e| format!("{} q={q}: {e}", label(b, *i)))?;
            checked += configs.len();
        }
    }
    let hypercube = bx(&[0; 4], &[1; 4], Closed);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut random = 0usize;
    for q in [2, 3] {
        let ep = EulerPoincare::new(&hypercube, 2, q).map_err(|e| e.to_string())?;
        let n = ep.plaquette_count();
        let mut configs = vec![Configuration::empty(n), Configuration::full(n)];
        configs.extend((0..1000).map(|_| {
            let bits: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            Configuration::from_bools(&bits)
        }));
        ep.verify(&configs).map_err(|e| format!("[0,1]^4 i=2 q={q}: {e}"))?;
        random += configs.len();
    }
    Ok(format!("{checked} exhaustive (d=2,3), {random} random (d=4, i=2)"))
}

fn fkg_holley() -> Outcome {
    let mut fkg = 0;
    let mut holley = 0;
    for (b, i) in grid() {
        for q in 1..=4 {
            let mut tables = HashMap::new();
            for (k, p) in ps().iter().enumerate() {
                for (w, bc) in [BoundaryCondition::Free, BoundaryCondition::Wired].into_iter().enumerate() {
                    let t = table(&ctx(&b, i, q, p, bc)?)?;
                    let rep = verify_fkg(&t);
                    ensure(rep.passed(), || format!("FKG {} q={q} p={p} w={w}: {:?}", label(&b, i), rep.violation))?;
                    fkg += 1;
                    tables.insert((k, w), t);
                }
            }
            // Lower pairs: p and boundary both no larger.
            for (&(k1, w1), lo) in &tables {
                for (&(k2, w2), hi) in &tables {
                    if (k1, w1) == (k2, w2) || k1 > k2 || w1 > w2 {
                        continue;
                    }
                    let rep = verify_holley(lo, hi).map_err(|e| e.to_string())?;
                    ensure(rep.passed(), || {
                        format!("Holley {} q={q} ({k1},{w1}) <= ({k2},{w2}): {:?}", label(&b, i), rep.violation)
                    })?;
                    holley += 1;
                }
            }
        }
    }
    Ok(format!("{fkg} FKG tables, {holley} Holley pairs"))
}

fn boundary_conditions() -> Outcome {
    use Convention::*;
    let half = r(1, 2);
    let mut certs = 0;
    let test_set = [
        (bx(&[0, 0], &[2, 2], Open), 1, vec![edge(-1, 1, 0), edge(2, 2, 1)]),
        (bx(&[0, 0], &[2, 2], Open), 1, vec![edge(-2, 0, 1), edge(3, 3, 0)]),
        (bx(&[0, 0], &[2, 2], Open), 1, vec![]),
        (bx(&[0, 0], &[1, 1], Closed), 1, vec![edge(-1, 0, 0), edge(1, 1, 1)]),
        (bx(&[0, 0], &[3, 2], Open), 1, vec![edge(-1, 1, 0), edge(3, 0, 0), edge(1, 2, 1)]),
        (bx(&[0, 0, 0], &[1, 1, 1], Closed), 2, vec![Cell::primal(&[-1, 0, 0], &[1, 2]).unwrap()]),
    ];
    for (b, i, s) in &test_set {
        for bc in [BoundaryCondition::Plaquettes(s.clone()), BoundaryCondition::WiredAtInfinity(s.clone())] {
            for q in [2, 3] {
                let c = ctx(b, *i, q, &half, bc.clone())?;
                let cert = stabilize_truncation(&c).map_err(|e| format!("{} {}: {e}", label(b, *i), bc.name()))?;
                ensure(cert.holds(), || format!("{} {} q={q}", label(b, *i), bc.name()))?;
                certs += 1;
            }
        }
    }

    let mut states = 0;
    let nested = [
        (bx(&[0, 0], &[3, 2], Open), bx(&[0, 0], &[2, 2], Open), vec![edge(-1, 1, 0), edge(2, 2, 1)]),
        (bx(&[0, 0], &[2, 1], Closed), bx(&[0, 0], &[1, 1], Closed), vec![edge(-1, 0, 0), edge(2, 1, 1)]),
    ];
    for (outer, inner, s) in &nested {
        for bc in [
            BoundaryCondition::Free,
            BoundaryCondition::Plaquettes(s.clone()),
            BoundaryCondition::Wired,
            BoundaryCondition::WiredAtInfinity(s.clone()),
        ] {
            for q in [2, 3] {
                let c = ctx(outer, 1, q, &r(2, 5), bc.clone())?;
                let m = annulus_plaquettes(&c, inner).map_err(|e| e.to_string())?.len();
                for k in 0..1u64 << m {
                    let rep = verify_conditioning(&c, inner, &Configuration::from_index(m, k))
                        .map_err(|e| e.to_string())?;
                    ensure(rep.passed(), || {
                        format!("conditioning {} {} q={q} state {k}: {:?}", label(outer, 1), bc.name(), rep.witness)
                    })?;
                    states += 1;
                }
            }
        }
    }

    let mut wired = 0;
    for (b, i) in grid() {
        for q in [2, 3, 4] {
            let shell = model(&ctx(&b, i, q, &half, BoundaryCondition::Wired)?)?.cluster_table();
            let truncated = model(&ctx(&b, i, q, &half, BoundaryCondition::WiredAtInfinity(vec![]))?)?.cluster_table();
            ensure(shell == truncated, || format!("wired {} q={q}", label(&b, i)))?;
            wired += 1;
        }
    }
    Ok(format!("{certs} certificates, {states} conditioned states, {wired} wired agreements"))
}

/// `(delta f)(sigma)` for every plaquette, from cell boundaries.
fn coboundary_oracle(m: &Model, f: &[u64], q: u64) -> Vec<u64> {
    let spins = m.complex().cells(m.complex().top_dim() - 1);
    m.plaquettes()
        .cells()
        .iter()
        .map(|c| {
            let s: i64 = c
                .boundary()
                .into_iter()
                .map(|(face, coef)| coef * f[spins.id(&face).unwrap()] as i64)
                .sum();
            s.rem_euclid(q as i64) as u64
        })
        .collect()
}

fn coupling() -> Outcome {
    use Convention::*;
    let complexes = [
        (bx(&[0, 0], &[1, 1], Closed), 1),
        (bx(&[0, 0], &[1, 1], Closed), 2),
        (bx(&[0, 0], &[2, 1], Closed), 2),
    ];
    let mut checked = 0;
    for (b, i) in &complexes {
        for q in [2, 3] {
            for p in ps() {
                let c = ctx(b, *i, q, &p, BoundaryCondition::Free)?;
                let m = model(&c)?;
                let spin_cells = m.complex().cells(i - 1).len();
                ensure(m.plaquette_count() <= 4 && spin_cells <= 8, || label(b, *i))?;
                let kappa = coupling_table(&m).map_err(|e| e.to_string())?;
                ensure(kappa.complex_marginal() == table(&c)?.probabilities(), || {
                    format!("plaquette marginal {} q={q} p={p}", label(b, *i))
                })?;
                let not_p = BigRational::one() - &p;
                let nu: Vec<BigRational> = (0..q.pow(spin_cells as u32))
                    .map(|k| {
                        let f = SpinConfig::from_index(spin_cells, q, k);
                        let violated = coboundary_oracle(&m, f.values(), q).iter().filter(|&&v| v != 0).count();
                        num_traits::pow(not_p.clone(), violated)
                    })
                    .collect();
                let total: BigRational = nu.iter().sum();
                let nu: Vec<BigRational> = nu.into_iter().map(|w| w / &total).collect();
                ensure(kappa.spin_marginal() == nu, || format!("spin marginal {} q={q} p={p}", label(b, *i)))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} joint tables, both marginals exact"))
}

fn samplers() -> Outcome {
    let sweeps = 100_000;
    let half = r(1, 2);
    let mut worst = 0.0f64;
    let mut runs = 0;
    let mut seed = 0;
    for (b, i) in grid() {
        for q in [2, 3] {
            for (bc, coupled) in [
                (BoundaryCondition::Free, false),
                (BoundaryCondition::Wired, false),
                (BoundaryCondition::Free, true),
            ] {
                let c = ctx(&b, i, q, &half, bc.clone())?;
                let m = model(&c)?;
                let n = m.plaquette_count();
                let exact: Vec<f64> = table(&c)?.probabilities().iter().map(|x| x.to_f64().unwrap()).collect();
                seed += 1;
                let cfg = RunConfig {
                    chains: 4.max((1usize << n) / 16),
                    histogram: true,
                    ..RunConfig::new(sweeps, 1_000, seed)
                };
                let out = if coupled { run_coupled(&m, &cfg, &[]) } else { run_chain(&m, &cfg, &[]) }
                    .map_err(|e| e.to_string())?;
                let tv = out.total_variation(&exact).unwrap();
                let kind = if coupled { "coupled" } else { "heat-bath" };
                ensure(tv < 0.01, || format!("{kind} {} {} q={q}: tv {tv:.4}", label(&b, i), bc.name()))?;
                worst = worst.max(tv);
                runs += 1;
            }
        }
    }

    let mut balanced = 0;
    for (b, i) in grid() {
        let s = vec![outside_cell(&b, i)];
        for bc in [
            BoundaryCondition::Free,
            BoundaryCondition::Wired,
            BoundaryCondition::Plaquettes(s.clone()),
            BoundaryCondition::WiredAtInfinity(s),
        ] {
            for q in [2, 3, 4] {
                for p in ps() {
                    let m = model(&ctx(&b, i, q, &p, bc.clone())?)?;
                    let v = detailed_balance_violation(&m);
                    ensure(v.is_none(), || format!("detailed balance {} {} q={q} p={p}: {v:?}", label(&b, i), bc.name()))?;
                    balanced += 1;
                }
            }
        }
    }
    Ok(format!("{runs} runs of {sweeps} sweeps, max tv {worst:.4}; detailed balance exact on {balanced} models"))
}

fn snf_by_minors(dense: &[Vec<i64>]) -> Vec<i64> {
    fn det(m: &[Vec<i64>]) -> i64 {
        if m.len() == 1 {
            return m[0][0];
        }
        (0..m.len())
            .map(|c| {
                let minor: Vec<Vec<i64>> = m[1..]
                    .iter()
                    .map(|row| row.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, v)| *v).collect())
                    .collect();
                let sign = if c % 2 == 0 { 1 } else { -1 };
                sign * m[0][c] * det(&minor)
            })
            .sum()
    }
    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|j| m & (1 << j) != 0).collect())
            .collect()
    }
    let (rows, cols) = (dense.len(), dense[0].len());
    let mut out = Vec::new();
    let mut prev = 1i64;
    for k in 1..=rows.min(cols) {
        let mut g = 0i64;
        for rs in subsets(rows, k) {
            for cs in subsets(cols, k) {
                let m: Vec<Vec<i64>> = rs.iter().map(|&r| cs.iter().map(|&c| dense[r][c]).collect()).collect();
                g = g.gcd(&det(&m));
            }
        }
        if g == 0 {
            break;
        }
        out.push(g / prev);
        prev = g;
    }
    out
}

fn all_vectors(q: u64, n: usize) -> Vec<Vec<u64>> {
    (0..q.pow(n as u32))
        .map(|mut k| {
            (0..n)
                .map(|_| {
                    let d = k % q;
                    k /= q;
                    d
                })
                .collect()
        })
        .collect()
}

fn brute_span(rows: &[Vec<u64>], q: u64, n: usize) -> BTreeSet<Vec<u64>> {
    let mut span = BTreeSet::from([vec![0u64; n]]);
    let mut frontier = vec![vec![0u64; n]];
    while let Some(v) = frontier.pop() {
        for row in rows {
            let w: Vec<u64> = v.iter().zip(row).map(|(a, b)| (a + b) % q).collect();
            if span.insert(w.clone()) {
                frontier.push(w);
            }
        }
    }
    span
}

fn linear_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 1200;
    for t in 0..trials {
        let (rows, cols) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let dense: Vec<Vec<i64>> =
            (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-8..=8)).collect()).collect();
        let q = rng.gen_range(1..=8u64);
        let m = IntMatrix::from_dense(&dense);
        let diag: Vec<i64> = smith_normal_form(&m).diagonal.iter().map(|d: &BigInt| d.to_i64().unwrap()).collect();
        ensure(diag == snf_by_minors(&dense), || format!("trial {t}: SNF of {dense:?}"))?;
        let h = howell_form(&m, q).map_err(|e| e.to_string())?;
        let span = brute_span(&m.rows_mod(q), q, cols);
        ensure(h.span_size() == BigUint::from(span.len()), || format!("trial {t}: span of {dense:?} mod {q}"))?;
        for v in all_vectors(q, cols) {
            ensure(h.contains(&v) == span.contains(&v), || format!("trial {t}: membership {v:?}"))?;
        }
        let s = kernel_mod(&m, q).map_err(|e| e.to_string())?;
        let kernel = all_vectors(q, cols).into_iter().filter(|x| m.apply_mod(x, q).iter().all(|&y| y == 0)).count();
        ensure(s.kernel_size == BigUint::from(kernel), || format!("trial {t}: kernel of {dense:?} mod {q}"))?;
        ensure(&s.kernel_size * &s.image_size == BigUint::from(q).pow(cols as u32), || {
            format!("trial {t}: kernel x image")
        })?;
    }
    Ok(format!("{trials} random matrices"))
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut x = x;
    while parent[x] != root {
        let next = parent[x];
        parent[x] = root;
        x = next;
    }
    root
}

/// Components of the graph on the complex vertices, the open edges and `extra` edges.
fn union_find_components(m: &Model, open: &Configuration, extra: &[Cell]) -> usize {
    let mut vertices: Vec<Cell> = m.complex().cells(0).cells().to_vec();
    let mut edges: Vec<&Cell> = open.open_indices().map(|j| m.plaquettes().cell(j)).collect();
    edges.extend(extra);
    for e in &edges {
        vertices.extend(e.boundary().into_iter().map(|(v, _)| v));
    }
    let ids: HashMap<Cell, usize> = vertices.into_iter().collect::<BTreeSet<_>>().into_iter().zip(0..).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    for e in edges {
        let ends: Vec<usize> = e.boundary().into_iter().map(|(v, _)| ids[&v]).collect();
        let (a, b) = (find(&mut parent, ends[0]), find(&mut parent, ends[1]));
        parent[a] = b;
    }
    (0..ids.len()).filter(|&x| find(&mut parent, x) == x).count()
}

fn classical_reduction() -> Outcome {
    let mut boxes: Vec<(LatticeBox, usize)> = grid().into_iter().filter(|(_, i)| *i == 1).collect();
    boxes.push((bx(&[0, 0, 0], &[1, 1, 1], Convention::Closed), 1));
    let mut configs = 0;
    for (b, _) in &boxes {
        for q in [2, 3, 4] {
            for (bc, extra) in [
                (BoundaryCondition::Free, vec![]),
                (BoundaryCondition::Wired, b.boundary_shell(1)),
            ] {
                let m = model(&ctx(b, 1, q, &r(1, 2), bc.clone())?)?;
                let n = m.plaquette_count();
                for k in 0..1u64 << n {
                    let open = Configuration::from_index(n, k);
                    let comps = union_find_components(&m, &open, &extra);
                    ensure(m.cluster_term(&open) == BigUint::from(q).pow(comps as u32), || {
                        format!("{} {} q={q} config {}", label(b, 1), bc.name(), open.to_bit_string())
                    })?;
                    configs += 1;
                }
            }
        }
    }

    let mut bernoulli = 0;
    for (b, i) in grid() {
        let s = vec![outside_cell(&b, i)];
        for bc in [
            BoundaryCondition::Free,
            BoundaryCondition::Wired,
            BoundaryCondition::Plaquettes(s.clone()),
            BoundaryCondition::WiredAtInfinity(s),
        ] {
            for p in ps() {
                let t = table(&ctx(&b, i, 1, &p, bc.clone())?)?;
                let n = t.plaquette_count();
                let not_p = BigRational::one() - &p;
                for k in 0..1u64 << n {
                    let open = k.count_ones() as usize;
                    let product = num_traits::pow(p.clone(), open) * num_traits::pow(not_p.clone(), n - open);
                    ensure(t.probability(k) == product, || format!("q=1 {} {} p={p} config {k}", label(&b, i), bc.name()))?;
                    bernoulli += 1;
                }
            }
        }
    }
    Ok(format!("{configs} union-find comparisons, {bernoulli} Bernoulli probabilities"))
}

/// `P(omega restricted to X contains eta)` for every `eta`, by indices over `cells`.
fn upset_probabilities(m: &Model, t: &MeasureTable, cells: &[Cell]) -> Vec<BigRational> {
    let ids: Vec<usize> = cells.iter().map(|c| m.plaquettes().id(c).unwrap()).collect();
    let probs = t.probabilities();
    (0..1u64 << cells.len())
        .map(|eta| {
            let mask = ids.iter().enumerate().filter(|(t, _)| eta >> t & 1 == 1).fold(0u64, |acc, (_, &id)| acc | 1 << id);
            probs.iter().enumerate().filter(|(k, _)| *k as u64 & mask == mask).map(|(_, x)| x.clone()).sum()
        })
        .collect()
}

fn pressure_diagnostics() -> Outcome {
    use Convention::*;
    let mut worst = 0.0f64;
    let mut convex = 0;
    for (b, i) in grid() {
        for q in 1..=4 {
            for bc in [BoundaryCondition::Free, BoundaryCondition::Wired] {
                let mut poly = None;
                for p in ps() {
                    let t = table(&ctx(&b, i, q, &p, bc.clone())?)?;
                    let pr = pressure(&t).map_err(|e| e.to_string())?;
                    let err = pr.derivative_error();
                    ensure(err < 1e-8, || format!("{} {} q={q} p={p}: derivative error {err:e}", label(&b, i), bc.name()))?;
                    worst = worst.max(err);
                    poly = Some(t.partition_polynomial());
                }
                let poly = poly.unwrap();
                let v = convexity_violation(&poly, &r(1, 64), &r(2, 1), 13);
                ensure(v.is_none(), || format!("convexity {} {} q={q} at {v:?}", label(&b, i), bc.name()))?;
                convex += 1;
            }
        }
    }

    let chains = [
        vec![bx(&[0, 0], &[2, 2], Open), bx(&[0, 0], &[3, 2], Open), bx(&[0, 0], &[4, 2], Open)],
        vec![bx(&[0, 0], &[1, 1], Closed), bx(&[0, 0], &[2, 1], Closed)],
    ];
    let mut mono = 0;
    for chain in &chains {
        for q in [1, 2, 3, 4] {
            for p in ps() {
                for (bc, grows) in [(BoundaryCondition::Free, true), (BoundaryCondition::Wired, false)] {
                    for pair in chain.windows(2) {
                        let cells = pair[0].cells(1, 1);
                        let cs = ctx(&pair[0], 1, q, &p, bc.clone())?;
                        let cl = ctx(&pair[1], 1, q, &p, bc.clone())?;
                        let (ms, ml) = (model(&cs)?, model(&cl)?);
                        let (ts, tl) = (table(&cs)?, table(&cl)?);
                        let (us, ul) = (upset_probabilities(&ms, &ts, &cells), upset_probabilities(&ml, &tl, &cells));
                        let ok = us.iter().zip(&ul).all(|(a, b)| if grows { a <= b } else { a >= b });
                        let ms_marg = marginals_on(&ms, &ts, &cells).map_err(|e| e.to_string())?;
                        let ml_marg = marginals_on(&ml, &tl, &cells).map_err(|e| e.to_string())?;
                        let ok = ok && ms_marg.iter().zip(&ml_marg).all(|(a, b)| if grows { a <= b } else { a >= b });
                        ensure(ok, || format!("monotonicity {} -> {} {} q={q} p={p}", label(&pair[0], 1), label(&pair[1], 1), bc.name()))?;
                        mono += 1;
                    }
                }
            }
        }
    }
    Ok(format!("max derivative error {worst:.1e}, {convex} convex grids, {mono} nested pairs"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 9] = [
        ("duality", duality, Some(Duration::from_secs(300))),
        ("euler-poincare", euler_poincare, Some(Duration::from_secs(600))),
        ("fkg-holley", fkg_holley, None),
        ("boundary-conditions", boundary_conditions, None),
        ("coupling", coupling, None),
        ("samplers", samplers, Some(Duration::from_secs(600))),
        ("linear-algebra", linear_algebra, None),
        ("classical-reduction", classical_reduction, None),
        ("pressure", pressure_diagnostics, None),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("runtime {:.0}s over {}s", elapsed.as_secs_f64(), b.as_secs())),
            (o, _) => o,
        };
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {} {name}: {verdict}: {detail} [{:.1}s]", k + 1, elapsed.as_secs_f64());
        failed += outcome.is_err() as usize;
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Homology of percolation complexes with `Z_q` and `Z` coefficients.
//!
//! A percolation complex on a box holds the full `(i-1)`-skeleton plus a set
//! of open `i`-plaquettes. Every size here is for unreduced groups.

use std::collections::HashSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::lattice::{Cell, CellIndex, Configuration, DualPairing, LatticeBox, LatticeError};
use crate::zq_linalg::{
    image_size_mod, kernel_mod, smith_normal_form, HowellForm, IntMatrix, LinalgError,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HomologyError {
    #[error("cell {0} has a face missing from the complex")]
    NotAComplex(Cell),
    #[error("degree {k} is outside the complex (top dimension {top})")]
    Degree { k: usize, top: usize },
    #[error("configuration has {got} bits, complex has {want} plaquettes")]
    ConfigurationLength { got: usize, want: usize },
    #[error("log_q of a cluster ratio is not an integer: {0}")]
    NotAPower(String),
    #[error("modulus {0} is too small for this operation")]
    Modulus(u64),
    #[error("Euler-Poincare value changed from {first} to {found} at configuration {witness}")]
    EulerPoincareMismatch {
        first: i64,
        found: i64,
        witness: String,
    },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Cells of dimensions `0..=top` with their signed boundary matrices.
#[derive(Clone, Debug)]
pub struct CubicalComplex {
    cells: Vec<CellIndex>,
    /// `boundary[k]` is `d_k : C_k -> C_{k-1}`; `boundary[0]` has no rows.
    boundary: Vec<IntMatrix>,
}

impl CubicalComplex {
    /// `cells[k]` lists the `k`-cells; every face of a listed cell must be listed.
    pub fn from_cells(cells: Vec<Vec<Cell>>) -> Result<CubicalComplex, HomologyError> {
        let cells: Vec<CellIndex> = cells.into_iter().map(CellIndex::new).collect();
        let mut boundary = Vec::with_capacity(cells.len());
        for k in 0..cells.len() {
            if k == 0 {
                boundary.push(IntMatrix::zeros(0, cells[0].len()));
                continue;
            }
            boundary.push(boundary_columns(&cells[k - 1], cells[k].cells())?);
        }
        Ok(CubicalComplex { cells, boundary })
    }

    /// The complex of a box for an `i`-dimensional model: every closed cell of
    /// dimension below `i` plus the box's `i`-plaquettes under its convention.
    pub fn of_box(b: &LatticeBox, i: usize) -> Result<CubicalComplex, HomologyError> {
        if i > b.dim() {
            return Err(LatticeError::DimensionTooLarge { k: i, d: b.dim() }.into());
        }
        CubicalComplex::from_cells((0..=i).map(|k| b.cells(k, i)).collect())
    }

    pub fn top_dim(&self) -> usize {
        self.cells.len() - 1
    }

    pub fn cells(&self, k: usize) -> &CellIndex {
        &self.cells[k]
    }

    pub fn plaquettes(&self) -> &CellIndex {
        &self.cells[self.top_dim()]
    }

    /// `d_k` over all `k`-cells.
    pub fn boundary(&self, k: usize) -> &IntMatrix {
        &self.boundary[k]
    }

    /// The slice `d_k, d_{k+1}` for homology in degree `k`, with the
    /// top-dimensional columns restricted to the open plaquettes of `open`.
    pub fn slice(&self, open: &Configuration, k: usize) -> Result<ChainSlice, HomologyError> {
        let top = self.top_dim();
        if k >= top {
            return Err(HomologyError::Degree { k, top });
        }
        if open.len() != self.plaquettes().len() {
            return Err(HomologyError::ConfigurationLength {
                got: open.len(),
                want: self.plaquettes().len(),
            });
        }
        let upper = if k + 1 == top {
            boundary_matrix(self, open)
        } else {
            self.boundary[k + 1].clone()
        };
        Ok(ChainSlice::new(self.boundary[k].clone(), upper))
    }
}

fn boundary_columns(faces: &CellIndex, cells: &[Cell]) -> Result<IntMatrix, HomologyError> {
    let mut triplets = Vec::new();
    for (col, c) in cells.iter().enumerate() {
        for (face, sign) in c.boundary() {
            let row = faces
                .id(&face)
                .ok_or_else(|| HomologyError::NotAComplex(c.clone()))?;
            triplets.push((row, col, sign));
        }
    }
    Ok(IntMatrix::from_triplets(faces.len(), cells.len(), triplets))
}

/// `d_top` restricted to the open plaquettes of `open`, one column per open plaquette.
pub fn boundary_matrix(complex: &CubicalComplex, open: &Configuration) -> IntMatrix {
    let top = complex.top_dim();
    let open_cells: Vec<Cell> = open
        .open_indices()
        .map(|j| complex.plaquettes().cell(j).clone())
        .collect();
    boundary_columns(complex.cells(top - 1), &open_cells)
        .expect("plaquette faces lie in the skeleton")
}

/// The two boundary maps around one degree of a chain complex.
#[derive(Clone, Debug)]
pub struct ChainSlice {
    /// `d_k : C_k -> C_{k-1}`.
    pub lower: IntMatrix,
    /// `d_{k+1} : C_{k+1} -> C_k`.
    pub upper: IntMatrix,
}

impl ChainSlice {
    pub fn new(lower: IntMatrix, upper: IntMatrix) -> ChainSlice {
        assert_eq!(lower.cols(), upper.rows(), "slice maps do not compose");
        debug_assert!(
            lower.mul(&upper).is_zero(),
            "boundary of a boundary must vanish"
        );
        ChainSlice { lower, upper }
    }

    /// Rank of `C_k`.
    pub fn chain_rank(&self) -> usize {
        self.lower.cols()
    }
}

/// `|H_k(.; Z_q)|` from Howell forms over `Z_q`.
pub fn homology_size_mod_q(slice: &ChainSlice, q: u64) -> Result<BigUint, HomologyError> {
    let cycles = kernel_mod(&slice.lower, q)?.kernel_size;
    let boundaries = image_size_mod(&slice.upper, q)?;
    Ok(cycles / boundaries)
}

/// `|H^k(.; Z_q)|` from the coboundary maps.
pub fn cohomology_size(slice: &ChainSlice, q: u64) -> Result<BigUint, HomologyError> {
    let cocycles = kernel_mod(&slice.upper.transpose(), q)?.kernel_size;
    let coboundaries = image_size_mod(&slice.lower.transpose(), q)?;
    Ok(cocycles / coboundaries)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomologySummary {
    pub betti: usize,
    /// Invariant factors above one of the torsion of `H_k(.; Z)`.
    pub torsion: Vec<BigInt>,
    /// Torsion of `H_{k-1}(.; Z)`, which enters the `Z_q` size through Tor.
    pub lower_torsion: Vec<BigInt>,
    pub modulus: u64,
    /// `|H_k(.; Z_q)|` assembled from the integral data.
    pub size_mod_q: BigUint,
}

/// Integral homology in the slice degree via Smith normal forms, with the
/// `Z_q` size from the universal coefficient theorem.
pub fn integral_homology(slice: &ChainSlice, q: u64) -> Result<HomologySummary, HomologyError> {
    if q == 0 {
        return Err(LinalgError::ZeroModulus.into());
    }
    let lower = smith_normal_form(&slice.lower);
    let upper = smith_normal_form(&slice.upper);
    let betti = slice.chain_rank() - lower.rank - upper.rank;
    let torsion = upper.torsion();
    let lower_torsion = lower.torsion();
    let q_big = BigInt::from(q);
    let gcd_product = |ts: &[BigInt]| -> BigUint {
        ts.iter()
            .map(|t| t.gcd(&q_big).to_biguint().expect("gcd is positive"))
            .product()
    };
    let size_mod_q =
        BigUint::from(q).pow(betti as u32) * gcd_product(&torsion) * gcd_product(&lower_torsion);
    Ok(HomologySummary {
        betti,
        torsion,
        lower_torsion,
        modulus: q,
        size_mod_q,
    })
}

/// `|H_{top-1}(P; Z_q)|` for the percolation complex with open set `open`.
pub fn percolation_homology_size(
    complex: &CubicalComplex,
    open: &Configuration,
    q: u64,
) -> Result<BigUint, HomologyError> {
    homology_size_mod_q(&complex.slice(open, complex.top_dim() - 1)?, q)
}

/// Sizes attached to an inclusion-induced map `H_k(P) -> H_k(P u extra)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InducedMapSummary {
    pub image: BigUint,
    pub kernel: BigUint,
}

/// Cluster terms `|(Z + B_extra) / (B_extra + B_P)|` for a fixed context.
///
/// Chains live on a fixed set of `(i-1)`-cells. `Z` is a fixed group of
/// cycles, `B_extra` the boundaries of always-open `i`-cells, and `B_P` the
/// boundaries of the open plaquettes. Free, wired and truncated boundary
/// conditions are all instances.
#[derive(Clone, Debug)]
pub struct ClusterEvaluator {
    modulus: u64,
    plaquette_rows: Vec<Vec<u64>>,
    base: HowellForm,
    numerator: BigUint,
}

impl ClusterEvaluator {
    /// `chain_cells`: the `(i-1)`-cells carrying chains; `cycles`: generators
    /// of `Z` in those coordinates; `extra`: always-open `i`-cells.
    pub fn new(
        chain_cells: &CellIndex,
        cycles: Vec<Vec<u64>>,
        plaquettes: &[Cell],
        extra: &[Cell],
        q: u64,
    ) -> Result<ClusterEvaluator, HomologyError> {
        if q == 0 {
            return Err(LinalgError::ZeroModulus.into());
        }
        let n = chain_cells.len();
        let row_of = |c: &Cell| -> Result<Vec<u64>, HomologyError> {
            let mut row = vec![0u64; n];
            for (face, sign) in c.boundary() {
                let j = chain_cells
                    .id(&face)
                    .ok_or_else(|| HomologyError::NotAComplex(c.clone()))?;
                row[j] = (row[j] as i64 + sign).rem_euclid(q as i64) as u64;
            }
            Ok(row)
        };
        let plaquette_rows = plaquettes
            .iter()
            .map(row_of)
            .collect::<Result<Vec<_>, _>>()?;
        let extra_rows = extra.iter().map(row_of).collect::<Result<Vec<_>, _>>()?;
        let base = HowellForm::from_rows(extra_rows, n, q, false)?;
        let numerator = base.extended(cycles).span_size();
        Ok(ClusterEvaluator {
            modulus: q,
            plaquette_rows,
            base,
            numerator,
        })
    }

    /// `|H_{i-1}(P; Z_q)|` on the box complex.
    pub fn free(complex: &CubicalComplex, q: u64) -> Result<ClusterEvaluator, HomologyError> {
        let top = complex.top_dim();
        if top == 0 {
            return Err(HomologyError::Degree { k: 0, top });
        }
        let cycles = cycle_generators(complex, q)?;
        ClusterEvaluator::new(
            complex.cells(top - 1),
            cycles,
            complex.plaquettes().cells(),
            &[],
            q,
        )
    }

    /// `|H_{i-1}(P u shell; Z_q)|` where the shell holds every boundary cell
    /// of the box of dimension at most `i`.
    pub fn wired(b: &LatticeBox, i: usize, q: u64) -> Result<ClusterEvaluator, HomologyError> {
        let complex = CubicalComplex::of_box(b, i)?;
        if i == 0 {
            return Err(HomologyError::Degree { k: 0, top: 0 });
        }
        let cycles = cycle_generators(&complex, q)?;
        let shell = b.boundary_shell(i);
        ClusterEvaluator::new(
            complex.cells(i - 1),
            cycles,
            complex.plaquettes().cells(),
            &shell,
            q,
        )
    }

    /// Image size of `H_{i-1}(P) -> H_{i-1}(P u extra)` where the target
    /// carries the `(i-1)`-skeleton of `ambient`, which must contain the
    /// closed box of `complex`.
    pub fn relative(
        complex: &CubicalComplex,
        ambient: &LatticeBox,
        extra: &[Cell],
        q: u64,
    ) -> Result<ClusterEvaluator, HomologyError> {
        let top = complex.top_dim();
        if top == 0 {
            return Err(HomologyError::Degree { k: 0, top });
        }
        let chain_cells = CellIndex::new(ambient.closed_cells(top - 1));
        let inner = complex.cells(top - 1);
        let embed: Vec<usize> = inner
            .cells()
            .iter()
            .map(|c| {
                chain_cells
                    .id(c)
                    .ok_or_else(|| HomologyError::NotAComplex(c.clone()))
            })
            .collect::<Result<_, _>>()?;
        let cycles = cycle_generators(complex, q)?
            .into_iter()
            .map(|z| {
                let mut row = vec![0u64; chain_cells.len()];
                for (x, &j) in z.iter().zip(&embed) {
                    row[j] = *x;
                }
                row
            })
            .collect();
        ClusterEvaluator::new(&chain_cells, cycles, complex.plaquettes().cells(), extra, q)
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn plaquette_count(&self) -> usize {
        self.plaquette_rows.len()
    }

    /// Span of the always-open boundaries together with those of `open`.
    pub fn boundary_span(&self, open: &Configuration) -> HowellForm {
        debug_assert_eq!(open.len(), self.plaquette_rows.len());
        self.base
            .extended(open.open_indices().map(|j| self.plaquette_rows[j].clone()))
    }

    pub fn term(&self, open: &Configuration) -> BigUint {
        let span = self.boundary_span(open).span_size();
        debug_assert!((&self.numerator % &span).is_zero());
        &self.numerator / span
    }

    /// Ratio of the terms with plaquette `j` closed and open: the order of
    /// the class of its boundary. Divides `q`.
    pub fn class_order(&self, open: &Configuration, j: usize) -> u64 {
        let span = self.boundary_span(&open.with(j, false));
        order_modulo(&span, &self.plaquette_rows[j])
    }
}

/// Additive order of `v` in the quotient by the span.
fn order_modulo(span: &HowellForm, v: &[u64]) -> u64 {
    let q = span.modulus();
    let mut m = 1;
    while m < q {
        if q % m == 0 {
            let w: Vec<u64> = v
                .iter()
                .map(|x| ((*x as u128 * m as u128) % q as u128) as u64)
                .collect();
            if span.contains(&w) {
                return m;
            }
        }
        m += 1;
    }
    q.max(1)
}

/// Generators over `Z_q` of the `(i-1)`-cycles of the complex's skeleton.
fn cycle_generators(complex: &CubicalComplex, q: u64) -> Result<Vec<Vec<u64>>, HomologyError> {
    let top = complex.top_dim();
    let lower = complex.boundary(top - 1);
    Ok(kernel_mod(lower, q)?.kernel.rows().to_vec())
}

/// `|H_{i-1}(P u shell; Z_q)|` on a box.
pub fn wired_size(
    b: &LatticeBox,
    i: usize,
    open: &Configuration,
    q: u64,
) -> Result<BigUint, HomologyError> {
    Ok(ClusterEvaluator::wired(b, i, q)?.term(open))
}

/// The map on `H_{top-1}(.; Z_q)` induced by adding `extra` cells (of
/// dimension `top` or `top-1`) to the percolation complex `open`.
pub fn induced_image_size(
    complex: &CubicalComplex,
    open: &Configuration,
    extra: &[Cell],
    q: u64,
) -> Result<InducedMapSummary, HomologyError> {
    let top = complex.top_dim();
    if top == 0 {
        return Err(HomologyError::Degree { k: 0, top });
    }
    let mut chain_list: Vec<Cell> = complex.cells(top - 1).cells().to_vec();
    let known: HashSet<Cell> = chain_list.iter().cloned().collect();
    chain_list.extend(
        extra
            .iter()
            .filter(|c| c.dim() + 1 == top && !known.contains(c))
            .cloned(),
    );
    let chain_cells = CellIndex::new(chain_list);
    let tops: Vec<Cell> = extra.iter().filter(|c| c.dim() == top).cloned().collect();
    let open_cells: Vec<Cell> = open
        .open_indices()
        .map(|j| complex.plaquettes().cell(j).clone())
        .collect();
    let mut cycles = cycle_generators(complex, q)?;
    for z in &mut cycles {
        z.resize(chain_cells.len(), 0);
    }
    let ev = ClusterEvaluator::new(&chain_cells, cycles, &open_cells, &tops, q)?;
    let image = ev.term(&Configuration::full(open_cells.len()));
    let source = percolation_homology_size(complex, open, q)?;
    Ok(InducedMapSummary {
        kernel: &source / &image,
        image,
    })
}

/// Order of the class of `d sigma` in `H_{top-1}(P; Z_q)`, which is the
/// ratio of the homology sizes without and with `sigma`.
pub fn boundary_class_order(
    complex: &CubicalComplex,
    open: &Configuration,
    sigma: usize,
    q: u64,
) -> Result<u64, HomologyError> {
    Ok(ClusterEvaluator::free(complex, q)?.class_order(open, sigma))
}

/// Checks that `log_q(|H_{i-1}(P)| / |H_{d-i-1}(Q u shell)|) + |P|` does not
/// depend on `P`, where `Q` is the dual configuration on the dual box.
#[derive(Clone, Debug)]
pub struct EulerPoincare {
    q: u64,
    free: ClusterEvaluator,
    wired_dual: ClusterEvaluator,
    pairing: DualPairing,
}

impl EulerPoincare {
    pub fn new(b: &LatticeBox, i: usize, q: u64) -> Result<EulerPoincare, HomologyError> {
        if q < 2 {
            return Err(HomologyError::Modulus(q));
        }
        let d = b.dim();
        if i == 0 || i >= d {
            return Err(HomologyError::Degree { k: i, top: d });
        }
        let complex = CubicalComplex::of_box(b, i)?;
        let dual_box = b.dual()?;
        let dual_plaquettes = CellIndex::new(dual_box.cells(d - i, d - i));
        let pairing = DualPairing::new(complex.plaquettes(), &dual_plaquettes)
            .ok_or_else(|| LatticeError::BadBox("dual box does not pair plaquettes".into()))?;
        Ok(EulerPoincare {
            q,
            free: ClusterEvaluator::free(&complex, q)?,
            wired_dual: ClusterEvaluator::wired(&dual_box, d - i, q)?,
            pairing,
        })
    }

    pub fn plaquette_count(&self) -> usize {
        self.free.plaquette_count()
    }

    pub fn value(&self, open: &Configuration) -> Result<i64, HomologyError> {
        let primal = self.free.term(open);
        let dual = self.wired_dual.term(&self.pairing.dual_configuration(open));
        Ok(log_ratio(&primal, &dual, self.q)? + open.count_open() as i64)
    }

    /// The common value over `configs`, or the first witness where it changes.
    pub fn verify<'a>(
        &self,
        configs: impl IntoIterator<Item = &'a Configuration>,
    ) -> Result<Option<i64>, HomologyError> {
        let mut first = None;
        for p in configs {
            let c = self.value(p)?;
            match first {
                None => first = Some(c),
                Some(f) if f != c => {
                    return Err(HomologyError::EulerPoincareMismatch {
                        first: f,
                        found: c,
                        witness: p.to_bit_string(),
                    })
                }
                _ => {}
            }
        }
        Ok(first)
    }
}

/// `log_q(a / b)` when it is an integer.
fn log_ratio(a: &BigUint, b: &BigUint, q: u64) -> Result<i64, HomologyError> {
    let (big, small, sign) = if a >= b { (a, b, 1) } else { (b, a, -1) };
    let fail = || HomologyError::NotAPower(format!("{a}/{b} in base {q}"));
    if !(big % small).is_zero() {
        return Err(fail());
    }
    let mut r = big / small;
    let q_big = BigUint::from(q);
    let mut e = 0i64;
    while !r.is_one() {
        if !(&r % &q_big).is_zero() {
            return Err(fail());
        }
        r /= &q_big;
        e += 1;
    }
    Ok(sign * e)
}

/// Connected components of the open edges of an `i = 1` complex.
pub fn component_count(complex: &CubicalComplex, open: &Configuration) -> usize {
    debug_assert_eq!(complex.top_dim(), 1);
    let n = complex.cells(0).len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for j in open.open_indices() {
        let ends: Vec<usize> = complex
            .plaquettes()
            .cell(j)
            .boundary()
            .iter()
            .map(|(v, _)| complex.cells(0).id(v).expect("endpoint in skeleton"))
            .collect();
        let (a, b) = (find(&mut parent, ends[0]), find(&mut parent, ends[1]));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Convention;
    use num_traits::ToPrimitive;

    fn square_box(n: i64, conv: Convention) -> LatticeBox {
        LatticeBox::primal(&[0, 0], &[n, n], conv).unwrap()
    }

    fn all_configs(n: usize) -> impl Iterator<Item = Configuration> {
        (0..1u64 << n).map(move |k| Configuration::from_index(n, k))
    }

    /// Union-find over an arbitrary vertex/edge list.
    fn uf_components(vertices: &[Cell], edges: &[Cell]) -> usize {
        let index = CellIndex::new(vertices.to_vec());
        let mut parent: Vec<usize> = (0..vertices.len()).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        let mut count = vertices.len();
        for e in edges {
            let b = e.boundary();
            let a = find(&mut parent, index.id(&b[0].0).unwrap());
            let c = find(&mut parent, index.id(&b[1].0).unwrap());
            if a != c {
                parent[a] = c;
                count -= 1;
            }
        }
        count
    }

    #[test]
    fn boundary_matrix_examples() {
        let edge = Cell::primal(&[0, 0], &[0]).unwrap();
        let c = CubicalComplex::from_cells(vec![
            vec![
                Cell::primal(&[0, 0], &[]).unwrap(),
                Cell::primal(&[1, 0], &[]).unwrap(),
            ],
            vec![edge],
        ])
        .unwrap();
        let m = boundary_matrix(&c, &Configuration::full(1));
        assert_eq!(m.rows(), 2);
        let col: Vec<i64> = (0..2).map(|r| m.get(r, 0).to_i64().unwrap()).collect();
        assert_eq!(col, vec![-1, 1]);

        let unit = LatticeBox::primal(&[0, 0], &[1, 1], Convention::Closed).unwrap();
        let sq = CubicalComplex::of_box(&unit, 2).unwrap();
        let d2 = boundary_matrix(&sq, &Configuration::full(1));
        assert_eq!(d2.rows(), 4);
        assert!(sq.boundary(1).mul(&d2).is_zero());
        assert_eq!(smith_normal_form(sq.boundary(1)).rank, 3);
    }

    #[test]
    fn homology_size_examples() {
        let b = square_box(2, Convention::Open);
        let c1 = CubicalComplex::of_box(&b, 1).unwrap();
        let full = Configuration::full(c1.plaquettes().len());
        // Only the interior cross is present, so the four corners stay isolated.
        let comps = component_count(&c1, &full);
        assert_eq!(
            percolation_homology_size(&c1, &full, 3).unwrap(),
            BigUint::from(3u32).pow(comps as u32)
        );

        let two = CubicalComplex::from_cells(vec![
            vec![
                Cell::primal(&[0, 0], &[]).unwrap(),
                Cell::primal(&[1, 0], &[]).unwrap(),
            ],
            vec![],
        ])
        .unwrap();
        assert_eq!(
            percolation_homology_size(&two, &Configuration::empty(0), 3).unwrap(),
            BigUint::from(9u32)
        );

        let closed = square_box(2, Convention::Closed);
        let c2 = CubicalComplex::of_box(&closed, 2).unwrap();
        let none = Configuration::empty(c2.plaquettes().len());
        // Unreduced H_1 of the 1-skeleton of [0,2]^2: four independent loops.
        assert_eq!(
            percolation_homology_size(&c2, &none, 2).unwrap(),
            BigUint::from(16u32)
        );
        let all = Configuration::full(4);
        assert_eq!(
            percolation_homology_size(&c2, &all, 2).unwrap(),
            BigUint::one()
        );
    }

    #[test]
    fn synthetic_torsion() {
        let slice = ChainSlice::new(IntMatrix::zeros(0, 1), IntMatrix::from_dense(&[vec![2]]));
        let h = integral_homology(&slice, 4).unwrap();
        assert_eq!(h.betti, 0);
        assert_eq!(h.torsion, vec![BigInt::from(2)]);
        assert_eq!(h.size_mod_q, BigUint::from(2u32));
        assert_eq!(homology_size_mod_q(&slice, 4).unwrap(), BigUint::from(2u32));
        // Odd q sees no torsion in degree k, but Tor reappears one degree up.
        assert_eq!(
            integral_homology(&slice, 3).unwrap().size_mod_q,
            BigUint::one()
        );
        let up = ChainSlice::new(IntMatrix::from_dense(&[vec![2]]), IntMatrix::zeros(1, 0));
        assert_eq!(
            integral_homology(&up, 6).unwrap().size_mod_q,
            BigUint::from(2u32)
        );
        assert_eq!(homology_size_mod_q(&up, 6).unwrap(), BigUint::from(2u32));
        assert_eq!(cohomology_size(&up, 6).unwrap(), BigUint::from(2u32));
    }

    #[test]
    fn full_skeleton_is_acyclic() {
        for (lo, hi, i) in [
            (vec![0, 0, 0], vec![2, 1, 1], 2usize),
            (vec![0, 0, 0], vec![1, 1, 1], 1),
        ] {
            let b = LatticeBox::primal(&lo, &hi, Convention::Closed).unwrap();
            let c = CubicalComplex::of_box(&b, i + 1).unwrap();
            let full = Configuration::full(c.plaquettes().len());
            let s = c.slice(&full, i).unwrap();
            assert_eq!(integral_homology(&s, 5).unwrap().betti, 0);
        }
        let single =
            CubicalComplex::from_cells(vec![vec![Cell::primal(&[0, 0], &[]).unwrap()], vec![]])
                .unwrap();
        let s = single.slice(&Configuration::empty(0), 0).unwrap();
        let h = integral_homology(&s, 7).unwrap();
        assert_eq!((h.betti, h.torsion.len()), (1, 0));
    }

    #[test]
    fn induced_image_examples() {
        let v = Cell::primal(&[0, 0], &[]).unwrap();
        let w = Cell::primal(&[2, 0], &[]).unwrap();
        let mid = Cell::primal(&[1, 0], &[]).unwrap();
        let c = CubicalComplex::from_cells(vec![vec![v.clone(), w.clone()], vec![]]).unwrap();
        let p = Configuration::empty(0);
        let none = induced_image_size(&c, &p, &[], 2).unwrap();
        assert_eq!(none.image, BigUint::from(4u32));
        let path = [
            mid.clone(),
            Cell::primal(&[0, 0], &[0]).unwrap(),
            Cell::primal(&[1, 0], &[0]).unwrap(),
        ];
        let s = induced_image_size(&c, &p, &path, 2).unwrap();
        assert_eq!(
            (s.image, s.kernel),
            (BigUint::from(2u32), BigUint::from(2u32))
        );
    }

    #[test]
    fn class_order_examples() {
        let unit = LatticeBox::primal(&[0, 0], &[1, 1], Convention::Closed).unwrap();
        let c = CubicalComplex::of_box(&unit, 2).unwrap();
        assert_eq!(
            boundary_class_order(&c, &Configuration::empty(1), 0, 4).unwrap(),
            4
        );
        assert_eq!(
            boundary_class_order(&c, &Configuration::empty(1), 0, 1).unwrap(),
            1
        );
        // On the cube surface the other five faces already bound the loop.
        let cube = LatticeBox::primal(&[0, 0, 0], &[1, 1, 1], Convention::Closed).unwrap();
        let c3 = CubicalComplex::of_box(&cube, 2).unwrap();
        let five = Configuration::full(6).with(0, false);
        assert_eq!(boundary_class_order(&c3, &five, 0, 4).unwrap(), 1);
    }

    #[test]
    fn classical_reduction_and_cohomology_agree() {
        let b = LatticeBox::primal(&[0, 0], &[2, 1], Convention::Closed).unwrap();
        let c = CubicalComplex::of_box(&b, 1).unwrap();
        let free = ClusterEvaluator::free(&c, 3).unwrap();
        for p in all_configs(c.plaquettes().len()) {
            let open: Vec<Cell> = p
                .open_indices()
                .map(|j| c.plaquettes().cell(j).clone())
                .collect();
            let comps = uf_components(c.cells(0).cells(), &open);
            assert_eq!(free.term(&p), BigUint::from(3u32).pow(comps as u32));
            let s = c.slice(&p, 0).unwrap();
            assert_eq!(cohomology_size(&s, 3).unwrap(), free.term(&p));
        }
    }

    #[test]
    fn wired_matches_union_find_with_identified_boundary() {
        for conv in [Convention::Open, Convention::Closed] {
            let b = LatticeBox::primal(&[0, 0], &[3, 2], conv).unwrap();
            let c = CubicalComplex::of_box(&b, 1).unwrap();
            let wired = ClusterEvaluator::wired(&b, 1, 2).unwrap();
            let shell = b.boundary_shell(1);
            for p in all_configs(c.plaquettes().len()).step_by(3) {
                let mut edges: Vec<Cell> = p
                    .open_indices()
                    .map(|j| c.plaquettes().cell(j).clone())
                    .collect();
                edges.extend(shell.iter().cloned());
                let comps = uf_components(c.cells(0).cells(), &edges);
                assert_eq!(wired.term(&p), BigUint::from(2u32).pow(comps as u32));
            }
        }
    }

    #[test]
    fn euler_poincare_square_boxes() {
        for conv in [Convention::Open, Convention::Closed] {
            let b = if conv == Convention::Open {
                square_box(3, conv)
            } else {
                square_box(2, conv)
            };
            let ep = EulerPoincare::new(&b, 1, 3).unwrap();
            let configs: Vec<Configuration> = all_configs(ep.plaquette_count()).collect();
            assert!(ep.verify(&configs).unwrap().is_some());
        }
        assert_eq!(
            EulerPoincare::new(&square_box(2, Convention::Open), 1, 1).err(),
            Some(HomologyError::Modulus(1))
        );
    }

    #[test]
    fn log_ratio_cases() {
        assert_eq!(
            log_ratio(&BigUint::from(27u32), &BigUint::from(3u32), 3).unwrap(),
            2
        );
        assert_eq!(
            log_ratio(&BigUint::from(3u32), &BigUint::from(27u32), 3).unwrap(),
            -2
        );
        assert!(log_ratio(&BigUint::from(6u32), &BigUint::from(1u32), 3).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

        fn grid() -> Vec<(LatticeBox, usize)> {
            vec![
                (
                    LatticeBox::primal(&[0, 0], &[2, 2], Convention::Closed).unwrap(),
                    1,
                ),
                (
                    LatticeBox::primal(&[0, 0], &[2, 2], Convention::Closed).unwrap(),
                    2,
                ),
                (
                    LatticeBox::primal(&[0, 0], &[3, 3], Convention::Open).unwrap(),
                    1,
                ),
                (
                    LatticeBox::primal(&[0, 0, 0], &[1, 1, 1], Convention::Closed).unwrap(),
                    1,
                ),
                (
                    LatticeBox::primal(&[0, 0, 0], &[1, 1, 1], Convention::Closed).unwrap(),
                    2,
                ),
                (
                    LatticeBox::primal(&[0, 0, 0], &[2, 2, 1], Convention::Open).unwrap(),
                    2,
                ),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn three_routes_agree(which in 0usize..6, bits in any::<u64>(), q in 1u64..=6) {
                let (b, i) = &grid()[which];
                let c = CubicalComplex::of_box(b, *i).unwrap();
                let n = c.plaquettes().len();
                let p = Configuration::from_index(n, bits & ((1u64 << n) - 1));
                let s = c.slice(&p, i - 1).unwrap();
                let direct = homology_size_mod_q(&s, q).unwrap();
                prop_assert_eq!(&cohomology_size(&s, q).unwrap(), &direct);
                prop_assert_eq!(&integral_homology(&s, q).unwrap().size_mod_q, &direct);
                prop_assert_eq!(&ClusterEvaluator::free(&c, q).unwrap().term(&p), &direct);
            }

            #[test]
            fn class_order_is_homology_ratio(which in 0usize..6, bits in any::<u64>(), q in 1u64..=6, pick in any::<usize>()) {
                let (b, i) = &grid()[which];
                let c = CubicalComplex::of_box(b, *i).unwrap();
                let n = c.plaquettes().len();
                let p = Configuration::from_index(n, bits & ((1u64 << n) - 1));
                let j = pick % n;
                let ev = ClusterEvaluator::free(&c, q).unwrap();
                let m = ev.class_order(&p, j);
                prop_assert_eq!(q % m, 0);
                prop_assert_eq!(ev.term(&p.with(j, false)), ev.term(&p.with(j, true)) * BigUint::from(m));
            }

            #[test]
            fn image_shrinks_as_wiring_grows(bits in any::<u64>(), q in 2u64..=4, grow in 0usize..8) {
                let b = LatticeBox::primal(&[0, 0], &[2, 2], Convention::Open).unwrap();
                let c = CubicalComplex::of_box(&b, 1).unwrap();
                let p = Configuration::from_index(4, bits & 15);
                let shell = b.boundary_shell(1);
                let vertices = b.boundary_shell(0);
                let mut prev: Option<BigUint> = None;
                for k in 0..=grow.min(shell.len()) {
                    let mut extra = vertices.clone();
                    extra.extend(shell[..k].iter().cloned());
                    let s = induced_image_size(&c, &p, &extra, q).unwrap();
                    prop_assert_eq!(&s.image * &s.kernel, percolation_homology_size(&c, &p, q).unwrap());
                    if let Some(prev) = &prev {
                        prop_assert!(&s.image <= prev);
                    }
                    prev = Some(s.image);
                }
            }
        }
    }
}

//! Exact linear algebra over `Z` and `Z_q`.
//!
//! Integer matrices use arbitrary precision and feed the Smith normal form.
//! Everything modulo `q` goes through the Howell form, which is a canonical
//! row echelon form over `Z_q` for composite as well as prime `q`.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinalgError {
    #[error("modulus must be at least 1")]
    ZeroModulus,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("the system has no solution")]
    EmptySolutionSet,
}

/// Sparse integer matrix in canonical (row, col)-sorted triplet form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, BigInt)>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> IntMatrix {
        IntMatrix {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> IntMatrix {
        IntMatrix::from_triplets(n, n, (0..n).map(|j| (j, j, 1i64)))
    }

    /// Duplicate positions are summed and zeros dropped.
    pub fn from_triplets<T: Into<BigInt>>(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> IntMatrix {
        let mut raw: Vec<(usize, usize, BigInt)> = triplets
            .into_iter()
            .map(|(r, c, v)| {
                assert!(
                    r < rows && c < cols,
                    "entry ({r},{c}) outside {rows}x{cols}"
                );
                (r, c, v.into())
            })
            .collect();
        raw.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut entries: Vec<(usize, usize, BigInt)> = Vec::with_capacity(raw.len());
        for (r, c, v) in raw {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| !e.2.is_zero());
        IntMatrix {
            rows,
            cols,
            entries,
        }
    }

    pub fn from_dense(dense: &[Vec<i64>]) -> IntMatrix {
        let rows = dense.len();
        let cols = dense.first().map_or(0, |r| r.len());
        IntMatrix::from_triplets(
            rows,
            cols,
            dense.iter().enumerate().flat_map(|(r, row)| {
                assert_eq!(row.len(), cols, "ragged dense matrix");
                row.iter().enumerate().map(move |(c, &v)| (r, c, v))
            }),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn triplets(&self) -> &[(usize, usize, BigInt)] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> BigInt {
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(r, c)))
            .map(|k| self.entries[k].2.clone())
            .unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self) -> Vec<Vec<BigInt>> {
        let mut out = vec![vec![BigInt::zero(); self.cols]; self.rows];
        for (r, c, v) in &self.entries {
            out[*r][*c] = v.clone();
        }
        out
    }

    pub fn transpose(&self) -> IntMatrix {
        IntMatrix::from_triplets(
            self.cols,
            self.rows,
            self.entries.iter().map(|(r, c, v)| (*c, *r, v.clone())),
        )
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut by_row: Vec<Vec<(usize, &BigInt)>> = vec![Vec::new(); other.rows];
        for (r, c, v) in &other.entries {
            by_row[*r].push((*c, v));
        }
        let mut out = Vec::new();
        for (r, k, a) in &self.entries {
            for (c, b) in &by_row[*k] {
                out.push((*r, *c, a * *b));
            }
        }
        IntMatrix::from_triplets(self.rows, other.cols, out)
    }

    /// Rows reduced into `[0, q)`.
    pub fn rows_mod(&self, q: u64) -> Vec<Vec<u64>> {
        let mut out = vec![vec![0u64; self.cols]; self.rows];
        for (r, c, v) in &self.entries {
            out[*r][*c] = reduce_bigint(v, q);
        }
        out
    }

    /// Columns reduced into `[0, q)`, one vector per column.
    pub fn cols_mod(&self, q: u64) -> Vec<Vec<u64>> {
        let mut out = vec![vec![0u64; self.rows]; self.cols];
        for (r, c, v) in &self.entries {
            out[*c][*r] = reduce_bigint(v, q);
        }
        out
    }

    /// `M x` over `Z_q`.
    pub fn apply_mod(&self, x: &[u64], q: u64) -> Vec<u64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0u64; self.rows];
        for (r, c, v) in &self.entries {
            let v = reduce_bigint(v, q) as u128;
            y[*r] = ((y[*r] as u128 + v * x[*c] as u128) % q as u128) as u64;
        }
        y
    }
}

fn reduce_bigint(v: &BigInt, q: u64) -> u64 {
    v.mod_floor(&BigInt::from(q))
        .to_u64()
        .expect("residue fits in u64")
}

/// Invariant factors of an integer matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnfResult {
    /// Positive invariant factors `d_1 | d_2 | ... | d_rank`.
    pub diagonal: Vec<BigInt>,
    pub rank: usize,
    /// Unimodular `(U, V)` with `U M V` diagonal, when requested.
    pub transforms: Option<(IntMatrix, IntMatrix)>,
}

impl SnfResult {
    /// Invariant factors larger than one: the torsion of the cokernel.
    pub fn torsion(&self) -> Vec<BigInt> {
        self.diagonal
            .iter()
            .filter(|d| !d.is_one())
            .cloned()
            .collect()
    }

    /// `|im M|` for `M` read as a map of `Z_q`-modules.
    pub fn image_size_mod(&self, q: u64) -> BigUint {
        let q_big = BigInt::from(q);
        self.diagonal
            .iter()
            .map(|d| BigUint::from(q / d.gcd(&q_big).to_u64().expect("gcd divides q")))
            .product()
    }
}

pub fn smith_normal_form(m: &IntMatrix) -> SnfResult {
    snf_impl(m, false)
}

pub fn smith_normal_form_with_transforms(m: &IntMatrix) -> SnfResult {
    snf_impl(m, true)
}

struct SnfWork {
    a: Vec<Vec<BigInt>>,
    u: Option<Vec<Vec<BigInt>>>,
    v: Option<Vec<Vec<BigInt>>>,
}

impl SnfWork {
    fn swap_rows(&mut self, i: usize, j: usize) {
        self.a.swap(i, j);
        if let Some(u) = &mut self.u {
            u.swap(i, j);
        }
    }

    fn swap_cols(&mut self, i: usize, j: usize) {
        for row in &mut self.a {
            row.swap(i, j);
        }
        if let Some(v) = &mut self.v {
            for row in v.iter_mut() {
                row.swap(i, j);
            }
        }
    }

    /// row_dst += k * row_src
    fn add_row(&mut self, dst: usize, src: usize, k: &BigInt) {
        let src_row = self.a[src].clone();
        for (x, y) in self.a[dst].iter_mut().zip(&src_row) {
            *x += k * y;
        }
        if let Some(u) = &mut self.u {
            let src_row = u[src].clone();
            for (x, y) in u[dst].iter_mut().zip(&src_row) {
                *x += k * y;
            }
        }
    }

    /// col_dst += k * col_src
    fn add_col(&mut self, dst: usize, src: usize, k: &BigInt) {
        for row in &mut self.a {
            let y = row[src].clone();
            row[dst] += k * y;
        }
        if let Some(v) = &mut self.v {
            for row in v.iter_mut() {
                let y = row[src].clone();
                row[dst] += k * y;
            }
        }
    }

    fn negate_row(&mut self, r: usize) {
        for x in &mut self.a[r] {
            *x = -&*x;
        }
        if let Some(u) = &mut self.u {
            for x in &mut u[r] {
                *x = -&*x;
            }
        }
    }
}

fn dense_identity(n: usize) -> Vec<Vec<BigInt>> {
    (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    if r == c {
                        BigInt::one()
                    } else {
                        BigInt::zero()
                    }
                })
                .collect()
        })
        .collect()
}

fn dense_to_matrix(a: &[Vec<BigInt>], cols: usize) -> IntMatrix {
    IntMatrix::from_triplets(
        a.len(),
        cols,
        a.iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, v)| (r, c, v.clone()))),
    )
}

fn snf_impl(m: &IntMatrix, track: bool) -> SnfResult {
    let (rows, cols) = (m.rows, m.cols);
    let mut w = SnfWork {
        a: m.to_dense(),
        u: track.then(|| dense_identity(rows)),
        v: track.then(|| dense_identity(cols)),
    };
    let mut t = 0;
    while t < rows.min(cols) {
        // Smallest-magnitude pivot in the trailing block.
        let mut best: Option<(usize, usize)> = None;
        for r in t..rows {
            for c in t..cols {
                let x = &w.a[r][c];
                if !x.is_zero() && best.is_none_or(|(br, bc)| x.abs() < w.a[br][bc].abs()) {
                    best = Some((r, c));
                }
            }
        }
        let Some((pr, pc)) = best else { break };
        w.swap_rows(t, pr);
        w.swap_cols(t, pc);
        loop {
            let mut clean = true;
            for r in t + 1..rows {
                if !w.a[r][t].is_zero() {
                    let k = -(&w.a[r][t] / &w.a[t][t]);
                    w.add_row(r, t, &k);
                    clean &= w.a[r][t].is_zero();
                }
            }
            for c in t + 1..cols {
                if !w.a[t][c].is_zero() {
                    let k = -(&w.a[t][c] / &w.a[t][t]);
                    w.add_col(c, t, &k);
                    clean &= w.a[t][c].is_zero();
                }
            }
            if !clean {
                // A remainder survived: promote the smallest entry of the
                // pivot row/column and go again.
                let mut best = (t, t);
                for r in t + 1..rows {
                    if !w.a[r][t].is_zero() && w.a[r][t].abs() < w.a[best.0][best.1].abs() {
                        best = (r, t);
                    }
                }
                for c in t + 1..cols {
                    if !w.a[t][c].is_zero() && w.a[t][c].abs() < w.a[best.0][best.1].abs() {
                        best = (t, c);
                    }
                }
                w.swap_rows(t, best.0);
                w.swap_cols(t, best.1);
                continue;
            }
            // Divisibility chain: fold any offending row into the pivot row.
            let pivot = w.a[t][t].clone();
            let offender =
                (t + 1..rows).find(|&r| (t + 1..cols).any(|c| !(&w.a[r][c] % &pivot).is_zero()));
            match offender {
                Some(r) => w.add_row(t, r, &BigInt::one()),
                None => break,
            }
        }
        if w.a[t][t].is_negative() {
            w.negate_row(t);
        }
        t += 1;
    }
    let diagonal: Vec<BigInt> = (0..t).map(|k| w.a[k][k].clone()).collect();
    let transforms = match (w.u, w.v) {
        (Some(u), Some(v)) => Some((dense_to_matrix(&u, rows), dense_to_matrix(&v, cols))),
        _ => None,
    };
    SnfResult {
        rank: diagonal.len(),
        diagonal,
        transforms,
    }
}

fn xgcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut old_r, mut r) = (a, b);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let qt = old_r / r;
        (old_r, r) = (r, old_r - qt * r);
        (old_s, s) = (s, old_s - qt * s);
        (old_t, t) = (t, old_t - qt * t);
    }
    if old_r < 0 {
        (-old_r, -old_s, -old_t)
    } else {
        (old_r, old_s, old_t)
    }
}

fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// A unit `u` of `Z_n` with `u * g = gcd(g, n)`.
fn unit_normalizer(g: u64, n: u64) -> u64 {
    let d = gcd_u64(g, n);
    let n1 = n / d;
    if n1 == 1 {
        return 1;
    }
    let g1 = (g / d) % n1;
    let (_, s, _) = xgcd(g1 as i128, n1 as i128);
    let u0 = s.rem_euclid(n1 as i128) as u64;
    let mut u = u0;
    while gcd_u64(u, n) != 1 {
        u += n1;
    }
    u % n
}

fn mulmod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

/// Row echelon form over `Z_q` with the Howell property.
///
/// Rows are sorted by pivot column and each pivot entry divides `q`. When
/// built canonically the entries above each pivot are also reduced into
/// `[0, pivot)`, which makes the form unique for a given row span.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HowellForm {
    modulus: u64,
    ncols: usize,
    rows: Vec<Vec<u64>>,
    pivots: Vec<usize>,
}

impl HowellForm {
    /// Builds the form of the row span of `rows` (each of length `ncols`).
    pub fn from_rows(
        rows: Vec<Vec<u64>>,
        ncols: usize,
        q: u64,
        canonical: bool,
    ) -> Result<HowellForm, LinalgError> {
        if q == 0 {
            return Err(LinalgError::ZeroModulus);
        }
        let mut rows: Vec<Vec<u64>> = rows
            .into_iter()
            .map(|mut r| {
                if r.len() != ncols {
                    return Err(LinalgError::Dimension(format!(
                        "row of length {} in a {ncols}-column form",
                        r.len()
                    )));
                }
                for x in &mut r {
                    *x %= q;
                }
                Ok(r)
            })
            .collect::<Result<_, _>>()?;
        rows.retain(|r| r.iter().any(|&x| x != 0));
        let pivots = echelonize(&mut rows, ncols, q, canonical, 0);
        Ok(HowellForm {
            modulus: q,
            ncols,
            rows,
            pivots,
        })
    }

    /// The span of this form together with extra rows. `self` must already be
    /// in echelon form, which lets the pass skip most of the work.
    pub fn extended(&self, extra: impl IntoIterator<Item = Vec<u64>>) -> HowellForm {
        let q = self.modulus;
        let mut rows = self.rows.clone();
        let before = rows.len();
        for mut r in extra {
            debug_assert_eq!(r.len(), self.ncols);
            for x in &mut r {
                *x %= q;
            }
            if r.iter().any(|&x| x != 0) {
                rows.push(r);
            }
        }
        if rows.len() == before {
            return self.clone();
        }
        let pivots = echelonize(&mut rows, self.ncols, q, false, 0);
        HowellForm {
            modulus: q,
            ncols: self.ncols,
            rows,
            pivots,
        }
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Additive order of each row's coefficient: `q / pivot`.
    pub fn coefficient_orders(&self) -> Vec<u64> {
        self.rows
            .iter()
            .zip(&self.pivots)
            .map(|(r, &c)| self.modulus / r[c])
            .collect()
    }

    /// Number of elements in the row span.
    pub fn span_size(&self) -> BigUint {
        self.coefficient_orders()
            .into_iter()
            .map(BigUint::from)
            .product()
    }

    /// Writes `v` as a combination of the rows, returning the coefficients
    /// (each in `[0, order)`), or `None` when `v` is outside the span.
    pub fn decompose(&self, v: &[u64]) -> Option<Vec<u64>> {
        let (coeffs, residual) = self.reduce_prefix(v, self.ncols);
        residual.iter().all(|&x| x == 0).then_some(coeffs)
    }

    pub fn contains(&self, v: &[u64]) -> bool {
        self.decompose(v).is_some()
    }

    /// Reduces `v` by the rows whose pivot lies before `limit`, stopping at
    /// the first column in that range it cannot clear.
    fn reduce_prefix(&self, v: &[u64], limit: usize) -> (Vec<u64>, Vec<u64>) {
        let q = self.modulus;
        let mut v: Vec<u64> = v.iter().map(|x| x % q).collect();
        let mut coeffs = vec![0u64; self.rows.len()];
        let mut next = 0;
        for c in 0..limit.min(self.ncols) {
            if next < self.pivots.len() && self.pivots[next] == c {
                let lead = self.rows[next][c];
                if v[c] % lead != 0 {
                    return (coeffs, v);
                }
                let k = v[c] / lead;
                if k != 0 {
                    for (x, y) in v.iter_mut().zip(&self.rows[next]) {
                        *x = (*x + q - mulmod(k, *y, q)) % q;
                    }
                }
                coeffs[next] = k;
                next += 1;
            } else if v[c] != 0 {
                return (coeffs, v);
            }
        }
        (coeffs, v)
    }

    /// Uniform element of the row span.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        let q = self.modulus;
        let mut v = vec![0u64; self.ncols];
        for (row, order) in self.rows.iter().zip(self.coefficient_orders()) {
            let k = rng.gen_range(0..order);
            if k != 0 {
                for (x, y) in v.iter_mut().zip(row) {
                    *x = (*x + mulmod(k, *y, q)) % q;
                }
            }
        }
        v
    }
}

/// In-place Howell echelonization of `rows`, considering columns from `start`.
/// Returns the pivot column of each surviving row.
fn echelonize(
    rows: &mut Vec<Vec<u64>>,
    ncols: usize,
    q: u64,
    canonical: bool,
    start: usize,
) -> Vec<usize> {
    if q == 1 {
        rows.clear();
        return Vec::new();
    }
    let mut pivots = Vec::new();
    let mut k = 0;
    for c in start..ncols {
        let Some(p) = (k..rows.len()).find(|&j| rows[j][c] != 0) else {
            continue;
        };
        rows.swap(k, p);
        for j in k + 1..rows.len() {
            if rows[j][c] == 0 {
                continue;
            }
            let a = rows[k][c] as i128;
            let b = rows[j][c] as i128;
            let (g, s, t) = xgcd(a, b);
            let s = s.rem_euclid(q as i128) as u64;
            let t = t.rem_euclid(q as i128) as u64;
            let bb = (-(b / g)).rem_euclid(q as i128) as u64;
            let aa = ((a / g) % q as i128) as u64;
            let (head, tail) = rows.split_at_mut(j);
            let rk = &mut head[k];
            let rj = &mut tail[0];
            for col in c..ncols {
                let x = rk[col];
                let y = rj[col];
                rk[col] = (mulmod(s, x, q) + mulmod(t, y, q)) % q;
                rj[col] = (mulmod(bb, x, q) + mulmod(aa, y, q)) % q;
            }
        }
        let u = unit_normalizer(rows[k][c], q);
        if u != 1 {
            for x in rows[k][c..].iter_mut() {
                *x = mulmod(u, *x, q);
            }
        }
        let lead = rows[k][c];
        debug_assert_eq!(q % lead, 0);
        let ann = q / lead;
        if ann != q {
            let extra: Vec<u64> = rows[k].iter().map(|&x| mulmod(ann, x, q)).collect();
            if extra.iter().any(|&x| x != 0) {
                rows.push(extra);
            }
        }
        if canonical {
            let (head, tail) = rows.split_at_mut(k);
            let rk = &tail[0];
            for rj in head.iter_mut() {
                let m = rj[c] / lead;
                if m != 0 {
                    for col in c..ncols {
                        rj[col] = (rj[col] + q - mulmod(m, rk[col], q)) % q;
                    }
                }
            }
        }
        pivots.push(c);
        k += 1;
    }
    rows.truncate(k);
    pivots
}

/// Canonical Howell form of the row span of `m` over `Z_q`.
pub fn howell_form(m: &IntMatrix, q: u64) -> Result<HowellForm, LinalgError> {
    if q == 0 {
        return Err(LinalgError::ZeroModulus);
    }
    HowellForm::from_rows(m.rows_mod(q), m.cols(), q, true)
}

/// Kernel and image data for `x -> M x` from `Z_q^cols` to `Z_q^rows`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleMapSummary {
    pub modulus: u64,
    /// Howell basis of the kernel; uniform coefficients below
    /// [`HowellForm::coefficient_orders`] give a uniform kernel element.
    pub kernel: HowellForm,
    pub kernel_size: BigUint,
    pub image_size: BigUint,
}

impl ModuleMapSummary {
    pub fn kernel_generators(&self) -> &[Vec<u64>] {
        self.kernel.rows()
    }
}

/// Howell form of `[M^T | I]`; its rows with a zero left block are a basis
/// of the kernel, and its left-block rows solve `M x = b`.
fn augmented_form(m: &IntMatrix, q: u64) -> HowellForm {
    let (rows, cols) = (m.rows(), m.cols());
    let aug: Vec<Vec<u64>> = m
        .cols_mod(q)
        .into_iter()
        .enumerate()
        .map(|(j, mut col)| {
            col.resize(rows + cols, 0);
            col[rows + j] = 1 % q;
            col
        })
        .collect();
    HowellForm::from_rows(aug, rows + cols, q, false).expect("q checked by caller")
}

pub fn kernel_mod(m: &IntMatrix, q: u64) -> Result<ModuleMapSummary, LinalgError> {
    if q == 0 {
        return Err(LinalgError::ZeroModulus);
    }
    let rows = m.rows();
    let aug = augmented_form(m, q);
    let kernel_rows: Vec<Vec<u64>> = aug
        .rows()
        .iter()
        .zip(aug.pivots())
        .filter(|(_, &p)| p >= rows)
        .map(|(r, _)| r[rows..].to_vec())
        .collect();
    let kernel = HowellForm::from_rows(kernel_rows, m.cols(), q, true)?;
    let image = HowellForm::from_rows(m.cols_mod(q), rows, q, false)?;
    Ok(ModuleMapSummary {
        modulus: q,
        kernel_size: kernel.span_size(),
        image_size: image.span_size(),
        kernel,
    })
}

/// Size of the column span of `m` over `Z_q`.
pub fn image_size_mod(m: &IntMatrix, q: u64) -> Result<BigUint, LinalgError> {
    Ok(HowellForm::from_rows(m.cols_mod(q), m.rows(), q, false)?.span_size())
}

/// One solution of `M x = b (mod q)`, or `None` when there is none.
pub fn solve_mod(m: &IntMatrix, b: &[u64], q: u64) -> Result<Option<Vec<u64>>, LinalgError> {
    if q == 0 {
        return Err(LinalgError::ZeroModulus);
    }
    if b.len() != m.rows() {
        return Err(LinalgError::Dimension(format!(
            "rhs has length {}, matrix has {} rows",
            b.len(),
            m.rows()
        )));
    }
    let rows = m.rows();
    let aug = augmented_form(m, q);
    let mut target = vec![0u64; rows + m.cols()];
    for (t, x) in target.iter_mut().zip(b) {
        *t = x % q;
    }
    let (_, residual) = aug.reduce_prefix(&target, rows);
    if residual[..rows].iter().any(|&x| x != 0) {
        return Ok(None);
    }
    let x: Vec<u64> = residual[rows..].iter().map(|&r| (q - r) % q).collect();
    debug_assert_eq!(
        m.apply_mod(&x, q),
        b.iter().map(|v| v % q).collect::<Vec<_>>()
    );
    Ok(Some(x))
}

/// Uniform element of `{x : M x = b (mod q)}`.
pub fn uniform_solution_sample<R: Rng + ?Sized>(
    m: &IntMatrix,
    b: &[u64],
    q: u64,
    rng: &mut R,
) -> Result<Vec<u64>, LinalgError> {
    let particular = solve_mod(m, b, q)?.ok_or(LinalgError::EmptySolutionSet)?;
    let summary = kernel_mod(m, q)?;
    let k = summary.kernel.sample(rng);
    Ok(particular
        .iter()
        .zip(&k)
        .map(|(x, y)| (x + y) % q)
        .collect())
}

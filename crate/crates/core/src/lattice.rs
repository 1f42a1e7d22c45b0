//! Cubical geometry on `Z^d` and its dual lattice `Z^d + (1/2, ..., 1/2)`.
//!
//! Every coordinate is stored doubled, so a primal cell has an anchor with
//! all-even coordinates and a dual cell an anchor with all-odd coordinates.
//! A cell spans `[a_m, a_m + 2]` along each of its directions and sits at
//! `a_m` along every other axis.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("cell dimension {k} exceeds ambient dimension {d}")]
    DimensionTooLarge { k: usize, d: usize },
    #[error("anchor coordinates must all be even (primal) or all odd (dual)")]
    MixedParity,
    #[error("direction {0} out of range or repeated")]
    BadDirection(usize),
    #[error("box bounds invalid: {0}")]
    BadBox(String),
    #[error("cannot parse cell `{0}`")]
    Parse(String),
    #[error("cell lives in {found} dimensions, expected {expected}")]
    AmbientMismatch { found: usize, expected: usize },
}

/// Which of the two interleaved lattices a cell or box belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lattice {
    Primal,
    Dual,
}

impl Lattice {
    pub fn other(self) -> Lattice {
        match self {
            Lattice::Primal => Lattice::Dual,
            Lattice::Dual => Lattice::Primal,
        }
    }
}

/// How the top-dimensional (model-dimension `i`) cells of a box are chosen.
///
/// `Open` keeps the `i`-cells that meet the interior of the box, `Closed`
/// keeps every `i`-cell contained in the box. Lower-dimensional cells are
/// the same under both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Convention {
    Open,
    Closed,
}

impl Convention {
    pub fn swapped(self) -> Convention {
        match self {
            Convention::Open => Convention::Closed,
            Convention::Closed => Convention::Open,
        }
    }
}

/// A cube of the primal or dual lattice in doubled coordinates.
///
/// Ordering is lexicographic on `(anchor, dirs)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    anchor: Vec<i64>,
    /// Sorted, zero-based direction indices.
    dirs: Vec<usize>,
}

impl Cell {
    /// Builds a cell from a doubled anchor and zero-based directions.
    pub fn new(anchor: Vec<i64>, mut dirs: Vec<usize>) -> Result<Cell, LatticeError> {
        let d = anchor.len();
        if dirs.len() > d {
            return Err(LatticeError::DimensionTooLarge { k: dirs.len(), d });
        }
        if let Some(first) = anchor.first() {
            let parity = first.rem_euclid(2);
            if anchor.iter().any(|a| a.rem_euclid(2) != parity) {
                return Err(LatticeError::MixedParity);
            }
        }
        dirs.sort_unstable();
        for w in dirs.windows(2) {
            if w[0] == w[1] {
                return Err(LatticeError::BadDirection(w[0] + 1));
            }
        }
        if let Some(&last) = dirs.last() {
            if last >= d {
                return Err(LatticeError::BadDirection(last + 1));
            }
        }
        Ok(Cell { anchor, dirs })
    }

    /// A primal cell from its lowest corner in ordinary integer coordinates.
    pub fn primal(corner: &[i64], dirs: &[usize]) -> Result<Cell, LatticeError> {
        Cell::new(corner.iter().map(|c| 2 * c).collect(), dirs.to_vec())
    }

    pub(crate) fn from_parts_unchecked(anchor: Vec<i64>, dirs: Vec<usize>) -> Cell {
        Cell { anchor, dirs }
    }

    pub fn anchor(&self) -> &[i64] {
        &self.anchor
    }

    pub fn dirs(&self) -> &[usize] {
        &self.dirs
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn lattice(&self) -> Lattice {
        match self.anchor.first() {
            Some(a) if a.rem_euclid(2) == 1 => Lattice::Dual,
            _ => Lattice::Primal,
        }
    }

    pub fn has_dir(&self, m: usize) -> bool {
        self.dirs.binary_search(&m).is_ok()
    }

    /// Doubled coordinates of the cell's center.
    pub fn center(&self) -> Vec<i64> {
        let mut c = self.anchor.clone();
        for &m in &self.dirs {
            c[m] += 1;
        }
        c
    }

    /// Signed cubical boundary.
    ///
    /// For directions `j_1 < ... < j_k` the face pair along `j_t` enters with
    /// sign `(-1)^(t-1)` on the upper face and the opposite sign on the lower
    /// face, so an edge maps to `head - tail`.
    pub fn boundary(&self) -> Vec<(Cell, i64)> {
        let mut out = Vec::with_capacity(2 * self.dirs.len());
        for (t, &m) in self.dirs.iter().enumerate() {
            let sign = if t % 2 == 0 { 1 } else { -1 };
            let mut face_dirs = self.dirs.clone();
            face_dirs.remove(t);
            let lower = Cell::from_parts_unchecked(self.anchor.clone(), face_dirs.clone());
            let mut upper_anchor = self.anchor.clone();
            upper_anchor[m] += 2;
            let upper = Cell::from_parts_unchecked(upper_anchor, face_dirs);
            out.push((upper, sign));
            out.push((lower, -sign));
        }
        out
    }

    /// All faces of the cell, of every dimension, including the cell itself.
    pub fn closure(&self) -> Vec<Cell> {
        let k = self.dirs.len();
        let mut out = Vec::with_capacity(3usize.pow(k as u32));
        // Each direction is kept, or collapsed to its lower or upper end.
        let mut choice = vec![0u8; k];
        loop {
            let mut anchor = self.anchor.clone();
            let mut dirs = Vec::with_capacity(k);
            for (t, &m) in self.dirs.iter().enumerate() {
                match choice[t] {
                    0 => dirs.push(m),
                    1 => {}
                    _ => anchor[m] += 2,
                }
            }
            out.push(Cell::from_parts_unchecked(anchor, dirs));
            let mut t = 0;
            loop {
                if t == k {
                    return out;
                }
                choice[t] += 1;
                if choice[t] < 3 {
                    break;
                }
                choice[t] = 0;
                t += 1;
            }
        }
    }

    /// The unique complementary-dimension cell of the other lattice with the
    /// same center.
    pub fn dual(&self) -> Cell {
        let center = self.center();
        let d = self.anchor.len();
        let dirs: Vec<usize> = (0..d).filter(|m| !self.has_dir(*m)).collect();
        let mut anchor = center;
        for &m in &dirs {
            anchor[m] -= 1;
        }
        Cell { anchor, dirs }
    }
}

impl fmt::Display for Cell {
    /// `anchor=(a1,...,ad);dirs={j1,...}` with doubled coordinates and
    /// one-based directions.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let anchor: Vec<String> = self.anchor.iter().map(|a| a.to_string()).collect();
        let dirs: Vec<String> = self.dirs.iter().map(|m| (m + 1).to_string()).collect();
        write!(
            f,
            "anchor=({});dirs={{{}}}",
            anchor.join(","),
            dirs.join(",")
        )
    }
}

impl FromStr for Cell {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Cell, LatticeError> {
        let err = || LatticeError::Parse(s.to_string());
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (anchor_part, dirs_part) = compact.split_once(';').ok_or_else(err)?;
        let anchor_body = anchor_part
            .strip_prefix("anchor=(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(err)?;
        let dirs_body = dirs_part
            .strip_prefix("dirs={")
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(err)?;
        let anchor = anchor_body
            .split(',')
            .map(|t| t.parse::<i64>().map_err(|_| err()))
            .collect::<Result<Vec<_>, _>>()?;
        let dirs = if dirs_body.is_empty() {
            Vec::new()
        } else {
            dirs_body
                .split(',')
                .map(|t| match t.parse::<usize>() {
                    Ok(j) if j >= 1 => Ok(j - 1),
                    _ => Err(err()),
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        Cell::new(anchor, dirs)
    }
}

/// A rectangular box of either lattice, stored in doubled coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LatticeBox {
    lattice: Lattice,
    lo: Vec<i64>,
    hi: Vec<i64>,
    convention: Convention,
}

impl LatticeBox {
    /// A primal box `prod [lo_m, hi_m]` in ordinary integer coordinates.
    pub fn primal(
        lo: &[i64],
        hi: &[i64],
        convention: Convention,
    ) -> Result<LatticeBox, LatticeError> {
        LatticeBox::from_doubled(
            lo.iter().map(|x| 2 * x).collect(),
            hi.iter().map(|x| 2 * x).collect(),
            convention,
        )
    }

    pub fn from_doubled(
        lo: Vec<i64>,
        hi: Vec<i64>,
        convention: Convention,
    ) -> Result<LatticeBox, LatticeError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(LatticeError::BadBox(
                "lo and hi must have the same positive length".into(),
            ));
        }
        let parity = lo[0].rem_euclid(2);
        if lo
            .iter()
            .chain(hi.iter())
            .any(|x| x.rem_euclid(2) != parity)
        {
            return Err(LatticeError::BadBox(
                "bounds mix primal and dual coordinates".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(LatticeError::BadBox("lo must not exceed hi".into()));
        }
        let lattice = if parity == 0 {
            Lattice::Primal
        } else {
            Lattice::Dual
        };
        Ok(LatticeBox {
            lattice,
            lo,
            hi,
            convention,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn with_convention(&self, convention: Convention) -> LatticeBox {
        LatticeBox {
            convention,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Doubled lower corner.
    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    /// Doubled upper corner.
    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    /// The box enlarged by `n` lattice steps on every side.
    pub fn grow(&self, n: u32) -> LatticeBox {
        let n = 2 * n as i64;
        LatticeBox {
            lattice: self.lattice,
            lo: self.lo.iter().map(|x| x - n).collect(),
            hi: self.hi.iter().map(|x| x + n).collect(),
            convention: self.convention,
        }
    }

    /// The dual box: its closed-convention cells are exactly the duals of this
    /// box's open-convention cells and vice versa.
    pub fn dual(&self) -> Result<LatticeBox, LatticeError> {
        let (lo, hi): (Vec<i64>, Vec<i64>) = match self.convention {
            Convention::Open => (
                self.lo.iter().map(|x| x + 1).collect(),
                self.hi.iter().map(|x| x - 1).collect(),
            ),
            Convention::Closed => (
                self.lo.iter().map(|x| x - 1).collect(),
                self.hi.iter().map(|x| x + 1).collect(),
            ),
        };
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(LatticeError::BadBox(
                "open box too thin to have a dual box".into(),
            ));
        }
        LatticeBox::from_doubled(lo, hi, self.convention.swapped())
    }

    /// Whether the closed cell lies inside the closed box.
    pub fn contains(&self, cell: &Cell) -> bool {
        if cell.ambient_dim() != self.dim() || cell.lattice() != self.lattice {
            return false;
        }
        (0..self.dim()).all(|m| {
            let a = cell.anchor[m];
            let top = if cell.has_dir(m) { a + 2 } else { a };
            a >= self.lo[m] && top <= self.hi[m]
        })
    }

    /// Whether the cell lies in the topological boundary of the box.
    pub fn in_boundary(&self, cell: &Cell) -> bool {
        self.contains(cell)
            && (0..self.dim()).any(|m| {
                !cell.has_dir(m) && (cell.anchor[m] == self.lo[m] || cell.anchor[m] == self.hi[m])
            })
    }

    /// All `k`-cells of the closed box, sorted.
    pub fn closed_cells(&self, k: usize) -> Vec<Cell> {
        let d = self.dim();
        if k > d {
            return Vec::new();
        }
        let mut out = Vec::new();
        for mask in 0u32..(1u32 << d) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let dirs: Vec<usize> = (0..d).filter(|m| mask & (1 << m) != 0).collect();
            let ranges: Vec<(i64, i64)> = (0..d)
                .map(|m| {
                    let top = if mask & (1 << m) != 0 {
                        self.hi[m] - 2
                    } else {
                        self.hi[m]
                    };
                    (self.lo[m], top)
                })
                .collect();
            if ranges.iter().any(|(a, b)| a > b) {
                continue;
            }
            let mut anchor: Vec<i64> = ranges.iter().map(|r| r.0).collect();
            loop {
                out.push(Cell::from_parts_unchecked(anchor.clone(), dirs.clone()));
                let mut m = 0;
                loop {
                    if m == d {
                        break;
                    }
                    anchor[m] += 2;
                    if anchor[m] <= ranges[m].1 {
                        break;
                    }
                    anchor[m] = ranges[m].0;
                    m += 1;
                }
                if m == d {
                    break;
                }
            }
        }
        out.sort();
        out
    }

    /// `k`-cells contained in the boundary of the box.
    pub fn boundary_shell(&self, k: usize) -> Vec<Cell> {
        self.closed_cells(k)
            .into_iter()
            .filter(|c| self.in_boundary(c))
            .collect()
    }

    /// `k`-cells of the box for a model of dimension `i`; the convention only
    /// matters when `k == i`.
    pub fn cells(&self, k: usize, i: usize) -> Vec<Cell> {
        let all = self.closed_cells(k);
        if k == i && self.convention == Convention::Open {
            all.into_iter().filter(|c| !self.in_boundary(c)).collect()
        } else {
            all
        }
    }
}

/// Checked form of [`LatticeBox::cells`].
pub fn enumerate_cells(b: &LatticeBox, k: usize, i: usize) -> Result<Vec<Cell>, LatticeError> {
    if k > b.dim() {
        return Err(LatticeError::DimensionTooLarge { k, d: b.dim() });
    }
    Ok(b.cells(k, i))
}

pub fn boundary_shell(b: &LatticeBox, k: usize) -> Vec<Cell> {
    b.boundary_shell(k)
}

pub fn cell_boundary(c: &Cell) -> Vec<(Cell, i64)> {
    c.boundary()
}

pub fn dual_cell(c: &Cell) -> Cell {
    c.dual()
}

/// Dense ids for an ordered list of cells.
#[derive(Clone, Debug, Default)]
pub struct CellIndex {
    cells: Vec<Cell>,
    ids: HashMap<Cell, usize>,
}

impl CellIndex {
    pub fn new(cells: Vec<Cell>) -> CellIndex {
        let ids = cells
            .iter()
            .cloned()
            .enumerate()
            .map(|(n, c)| (c, n))
            .collect();
        CellIndex { cells, ids }
    }

    pub fn id(&self, cell: &Cell) -> Option<usize> {
        self.ids.get(cell).copied()
    }

    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: &Cell) -> bool {
        self.ids.contains_key(cell)
    }
}

/// Open/closed state of every plaquette of a context, as a packed bitset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    len: usize,
    words: Vec<u64>,
}

impl Configuration {
    pub fn empty(len: usize) -> Configuration {
        Configuration {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn full(len: usize) -> Configuration {
        let mut c = Configuration::empty(len);
        for j in 0..len {
            c.set(j, true);
        }
        c
    }

    /// The configuration whose bit `j` is bit `j` of `index`.
    pub fn from_index(len: usize, index: u64) -> Configuration {
        assert!(len <= 64, "index encoding needs at most 64 plaquettes");
        let mut c = Configuration::empty(len);
        if len > 0 {
            c.words[0] = if len == 64 {
                index
            } else {
                index & ((1u64 << len) - 1)
            };
        }
        c
    }

    pub fn from_bools(bits: &[bool]) -> Configuration {
        let mut c = Configuration::empty(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            c.set(j, b);
        }
        c
    }

    pub fn index(&self) -> u64 {
        assert!(self.len <= 64);
        self.words.first().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_open(&self, j: usize) -> bool {
        debug_assert!(j < self.len);
        self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, j: usize, open: bool) {
        assert!(j < self.len);
        if open {
            self.words[j / 64] |= 1 << (j % 64);
        } else {
            self.words[j / 64] &= !(1 << (j % 64));
        }
    }

    pub fn with(&self, j: usize, open: bool) -> Configuration {
        let mut c = self.clone();
        c.set(j, open);
        c
    }

    pub fn count_open(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn open_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&j| self.is_open(j))
    }

    pub fn union(&self, other: &Configuration) -> Configuration {
        assert_eq!(self.len, other.len);
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a | b)
            .collect();
        Configuration {
            len: self.len,
            words,
        }
    }

    pub fn intersection(&self, other: &Configuration) -> Configuration {
        assert_eq!(self.len, other.len);
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a & b)
            .collect();
        Configuration {
            len: self.len,
            words,
        }
    }

    pub fn is_subset(&self, other: &Configuration) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.len)
            .map(|j| if self.is_open(j) { '1' } else { '0' })
            .collect()
    }
}

/// Bijection between the plaquettes of a box and those of its dual box.
#[derive(Clone, Debug)]
pub struct DualPairing {
    /// `to_dual[j]` is the dual-plaquette id of primal plaquette `j`.
    to_dual: Vec<usize>,
}

impl DualPairing {
    /// Pairs the `i`-plaquettes of `primal` with the `(d-i)`-plaquettes of its
    /// dual box.
    pub fn new(primal: &CellIndex, dual: &CellIndex) -> Option<DualPairing> {
        if primal.len() != dual.len() {
            return None;
        }
        let to_dual = primal
            .cells()
            .iter()
            .map(|c| dual.id(&c.dual()))
            .collect::<Option<Vec<_>>>()?;
        Some(DualPairing { to_dual })
    }

    pub fn dual_id(&self, j: usize) -> usize {
        self.to_dual[j]
    }

    /// The dual configuration: a dual plaquette is open exactly when the
    /// primal plaquette it crosses is closed.
    pub fn dual_configuration(&self, config: &Configuration) -> Configuration {
        let mut q = Configuration::empty(config.len());
        for (j, &k) in self.to_dual.iter().enumerate() {
            q.set(k, !config.is_open(j));
        }
        q
    }
}

/// A formal integer combination of cells of one dimension.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Chain {
    terms: Vec<(Cell, i64)>,
}

impl Chain {
    /// Merges repeated cells and drops zero coefficients.
    pub fn new(terms: impl IntoIterator<Item = (Cell, i64)>) -> Chain {
        let mut merged: Vec<(Cell, i64)> = Vec::new();
        let mut sorted: Vec<(Cell, i64)> = terms.into_iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        for (c, k) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += k,
                _ => merged.push((c, k)),
            }
        }
        merged.retain(|t| t.1 != 0);
        Chain { terms: merged }
    }

    pub fn terms(&self) -> &[(Cell, i64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Dimension of the cells, or `None` for the zero chain or mixed dimensions.
    pub fn dim(&self) -> Option<usize> {
        let k = self.terms.first()?.0.dim();
        self.terms.iter().all(|t| t.0.dim() == k).then_some(k)
    }

    pub fn boundary(&self) -> Chain {
        Chain::new(
            self.terms
                .iter()
                .flat_map(|(c, k)| c.boundary().into_iter().map(move |(f, s)| (f, s * k))),
        )
    }

    pub fn is_cycle(&self) -> bool {
        self.boundary().is_zero()
    }

    /// Coefficients reduced into `[0, q)` on the cells of `index`, or `None`
    /// if the chain touches a cell outside it.
    pub fn to_vector(&self, index: &CellIndex, q: u64) -> Option<Vec<u64>> {
        let mut v = vec![0u64; index.len()];
        for (c, k) in &self.terms {
            let j = index.id(c)?;
            v[j] = (v[j] as i64 + k).rem_euclid(q as i64) as u64;
        }
        Some(v)
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, (c, k)) in self.terms.iter().enumerate() {
            if j > 0 {
                writeln!(f)?;
            }
            write!(f, "{k:+} {c}")?;
        }
        Ok(())
    }
}

/// One term per line, `<coefficient> <cell>` or just `<cell>` for
/// coefficient one. Blank lines and `#` comments are skipped.
impl FromStr for Chain {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Chain, LatticeError> {
        let mut terms = Vec::new();
        for line in s.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (coef, cell) = match line.split_once(char::is_whitespace) {
                Some((head, rest)) if !head.starts_with("anchor") => (
                    head.parse::<i64>()
                        .map_err(|_| LatticeError::Parse(line.to_string()))?,
                    rest,
                ),
                _ => (1, line),
            };
            terms.push((cell.parse::<Cell>()?, coef));
        }
        Ok(Chain::new(terms))
    }
}

/// Parses a list of cells, one per line, skipping blanks and `#` comments.
pub fn parse_cell_list(s: &str) -> Result<Vec<Cell>, LatticeError> {
    s.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::parse)
        .collect()
}

//! Fixtures shared by the benchmarks.

use num_rational::BigRational;
use prcm_core::{BoundaryCondition, Context, Convention, IntMatrix, LatticeBox, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Edge model on a square box with `n x n` unit squares.
pub fn square_model(n: i64, q: u64, bc: BoundaryCondition) -> Model {
    let b = LatticeBox::primal(&[0, 0], &[n, n], Convention::Open).expect("valid box");
    let p = BigRational::new(1.into(), 2.into());
    Model::new(&Context::new(b, 1, q, p, bc).expect("valid context")).expect("model builds")
}

/// Random dense integer matrix with entries in `[-range, range]`.
pub fn random_matrix(rows: usize, cols: usize, range: i64, seed: u64) -> IntMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dense: Vec<Vec<i64>> =
        (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-range..=range)).collect()).collect();
    IntMatrix::from_dense(&dense)
}

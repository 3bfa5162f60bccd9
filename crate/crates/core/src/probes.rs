//! Seeded probe vectors standing in for "arbitrary `f`, `h`" in weak and
//! strong convergence statements.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::opcore::Operator;

/// Number of seeded random unit vectors in the default probe set.
pub const RANDOM_PROBES: usize = 8;
/// Number of standard basis vectors in the default probe set.
pub const BASIS_PROBES: usize = 8;

/// A fixed family of unit probe vectors, stored as matrix columns.
#[derive(Clone, Debug)]
pub struct ProbeSet {
    vectors: DMatrix<f64>,
}

impl ProbeSet {
    /// Eight seeded Gaussian unit vectors followed by an evenly spaced
    /// subsample of eight standard basis vectors (always including `e_0`).
    pub fn seeded(dim: usize, seed: u64) -> ProbeSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut columns: Vec<DVector<f64>> = Vec::new();
        for _ in 0..RANDOM_PROBES {
            let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let norm = v.norm();
            if norm > 0.0 {
                columns.push(v / norm);
            }
        }
        for k in basis_subsample(dim, BASIS_PROBES) {
            let mut e = DVector::zeros(dim);
            e[k] = 1.0;
            columns.push(e);
        }
        ProbeSet::from_columns(dim, &columns)
    }

    pub fn from_columns(dim: usize, columns: &[DVector<f64>]) -> ProbeSet {
        let mut vectors = DMatrix::zeros(dim, columns.len());
        for (k, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), dim, "probe dimension mismatch");
            vectors.set_column(k, c);
        }
        ProbeSet { vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.ncols() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }

    /// `max_{f,h} |(A f, h)|` over all probe pairs.
    pub fn max_pairing(&self, a: &DMatrix<f64>) -> f64 {
        self.pairings(a).amax()
    }

    /// Matrix of pairings `(A f_j, h_i)` at `(i, j)`.
    pub fn pairings(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.vectors.transpose() * (a * &self.vectors)
    }

    /// `max_f ‖A f‖` over the probes.
    pub fn max_image_norm(&self, a: &DMatrix<f64>) -> f64 {
        let images = a * &self.vectors;
        images.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Square matrix with independent standard normal entries scaled by `1/√dim`.
pub fn random_operator(dim: usize, seed: u64) -> Operator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim.max(1) as f64).sqrt();
    let m: DMatrix<f64> = DMatrix::from_fn(dim, dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    });
    Operator::new(m).expect("finite square matrix")
}

/// `AᵀA + I/10` for a seeded [`random_operator`] `A`.
pub fn random_spd(dim: usize, seed: u64) -> Operator {
    let a = random_operator(dim, seed);
    let mut c = a.matrix().transpose() * a.matrix();
    for i in 0..dim {
        c[(i, i)] += 0.1;
    }
    let c = (&c + c.transpose()) * 0.5;
    Operator::new(c).expect("finite square matrix")
}

fn basis_subsample(dim: usize, count: usize) -> Vec<usize> {
    if dim == 0 {
        return Vec::new();
    }
    if dim <= count {
        return (0..dim).collect();
    }
    let mut out: Vec<usize> = (0..count)
        .map(|i| ((i * (dim - 1)) as f64 / (count - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

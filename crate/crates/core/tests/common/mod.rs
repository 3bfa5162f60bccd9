#![allow(dead_code)]

use nalgebra::DMatrix;
use nestfactor::nest::{standard_nest, Nest, Partition};
use nestfactor::{Operator, Projection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    })
}

/// Haar-ish orthogonal matrix from the QR factors of a Gaussian matrix.
pub fn orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian(dim, dim, rng).qr().q()
}

/// General square operator; every fourth draw has deficient rank.
pub fn random_square(dim: usize, rng: &mut ChaCha8Rng) -> Operator {
    let m = if rng.random_range(0..4) == 0 && dim > 1 {
        let r = rng.random_range(1..dim);
        gaussian(dim, r, rng) * gaussian(r, dim, rng) / dim as f64
    } else {
        gaussian(dim, dim, rng) / (dim as f64).sqrt()
    };
    Operator::new(m).unwrap()
}

pub fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> Operator {
    let a = gaussian(dim, dim, rng) / (dim as f64).sqrt();
    let c = a.transpose() * &a + DMatrix::identity(dim, dim) * 0.1;
    Operator::new((&c + c.transpose()) * 0.5).unwrap()
}

/// Half the draws are standard nests; the rest are rotated coordinate nests
/// with a random grid and possibly repeated ranks.
pub fn random_nest(dim: usize, rng: &mut ChaCha8Rng) -> Nest {
    if rng.random_bool(0.5) {
        return standard_nest(dim).unwrap();
    }
    let q = orthogonal(dim, rng);
    let steps = rng.random_range(1..=dim);
    let mut ranks: Vec<usize> = (0..steps - 1).map(|_| rng.random_range(0..=dim)).collect();
    ranks.sort_unstable();
    ranks.insert(0, 0);
    ranks.push(dim);
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let projections = ranks
        .iter()
        .map(|&r| {
            if r == 0 {
                Projection::zero(dim)
            } else {
                Projection::from_basis(q.columns(0, r).into_owned())
            }
        })
        .collect();
    Nest::explicit(1.0, grid, projections).unwrap()
}

pub fn random_partition(nest: &Nest, rng: &mut ChaCha8Rng) -> Partition {
    let last = nest.last_index();
    let mut indices = vec![0];
    indices.extend((1..last).filter(|_| rng.random_bool(0.4)));
    indices.push(last);
    Partition::new(nest, indices).unwrap()
}

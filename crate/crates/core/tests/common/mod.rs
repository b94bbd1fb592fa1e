#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex;
use photonfb::fock::{DensityMatrix, HilbertConfig};
use proptest::prelude::*;

/// Random mixed state: a convex mixture of `rank` random pure states.
pub fn mixed_state(dim: usize, rank: usize) -> impl Strategy<Value = DensityMatrix<f64>> {
    let amp = (-1.0f64..1.0, -1.0f64..1.0);
    (
        prop::collection::vec(prop::collection::vec(amp, dim), rank),
        prop::collection::vec(0.05f64..1.0, rank),
    )
        .prop_map(move |(vecs, weights)| {
            let total: f64 = weights.iter().sum();
            let mut m = DMatrix::<Complex<f64>>::zeros(dim, dim);
            for (v, w) in vecs.iter().zip(&weights) {
                let psi: Vec<Complex<f64>> = v.iter().map(|&(r, i)| Complex::new(r, i)).collect();
                let pure = DensityMatrix::from_pure(&psi).unwrap();
                m += pure.matrix().map(|z| z * (w / total));
            }
            DensityMatrix::from_matrix(m).unwrap()
        })
}

/// Random state supported on the lowest `support` levels of `cfg`, so the
/// truncation edge stays empty.
pub fn low_lying_state(cfg: HilbertConfig, support: usize, rank: usize) -> impl Strategy<Value = DensityMatrix<f64>> {
    let dim = cfg.dim();
    mixed_state(support, rank).prop_map(move |small| {
        let mut m = DMatrix::<Complex<f64>>::zeros(dim, dim);
        m.view_mut((0, 0), (support, support)).copy_from(small.matrix());
        DensityMatrix::from_matrix(m).unwrap()
    })
}

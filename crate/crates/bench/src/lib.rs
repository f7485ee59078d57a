//! Shared fixtures for the benchmark suite. The benchmarks live in
//! `benches/pipelines.rs`; this crate only builds the systems they probe.

use koopmourre::torusdyn::{FrequencyVector, SkewProductSpec};
use koopmourre::trigfun::TrigPoly;

pub const GOLDEN: f64 = 0.6180339887498949;

/// One-harmonic skew product over the golden rotation, the workhorse
/// configuration for operator assembly and quadrature benchmarks.
pub fn harmonic_skew(eps: f64) -> SkewProductSpec {
    let y = FrequencyVector::new(vec![GOLDEN]).unwrap();
    let eta = TrigPoly::sine(1, &[1], eps / std::f64::consts::TAU);
    SkewProductSpec::new(y, vec![vec![1]], vec![eta], vec![1]).unwrap()
}

/// A dense real trigonometric polynomial with harmonics up to `degree`.
pub fn dense_poly(dim: usize, degree: i32) -> TrigPoly {
    let mut p = TrigPoly::zero(dim);
    let mut k = vec![0i32; dim];
    fill(&mut p, dim, degree, 0, &mut k);
    p
}

fn fill(p: &mut TrigPoly, dim: usize, degree: i32, axis: usize, k: &mut Vec<i32>) {
    if axis == dim {
        if k.iter().any(|&c| c != 0) {
            let weight = 1.0 / (1.0 + k.iter().map(|&c| c.abs()).sum::<i32>() as f64);
            *p = p.add(&TrigPoly::cosine(dim, k, weight));
            *p = p.add(&TrigPoly::sine(dim, k, 0.5 * weight));
        }
        return;
    }
    for c in -degree..=degree {
        k[axis] = c;
        fill(p, dim, degree, axis + 1, k);
    }
    k[axis] = 0;
}

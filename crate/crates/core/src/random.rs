//! Seeded generators for test inputs: states, unitaries, distributions, codes.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;

use crate::conditions::{CodeSpec, Word};
use crate::linalg::{QuditDims, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; the 1 - u shift keeps the log argument in (0, 1].
    let u: f64 = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(gaussian(rng), gaussian(rng))
}

/// Haar-random unit vector in `C^l`.
pub fn random_amplitudes<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..l).map(|_| complex_gaussian(rng)).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|z| z / norm).collect();
        }
    }
}

/// Haar-random `l x l` unitary (QR of a Ginibre matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(l: usize, rng: &mut R) -> DMatrix<C64> {
    let g = DMatrix::from_fn(l, l, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..l {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..l {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Probability vector with every entry at least `floor / len`, otherwise
/// uniform on the simplex.
pub fn random_distribution<R: Rng + ?Sized>(len: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let base = floor / len as f64;
    raw.into_iter()
        .map(|x| base + (1.0 - floor) * x / total)
        .collect()
}

/// A well-formed code with `1..=max_class_size` distinct strings per class.
/// Classes may overlap; nothing about correctability is implied.
pub fn random_code<R: Rng + ?Sized>(l: usize, n: usize, max_class_size: usize, rng: &mut R) -> CodeSpec {
    let dims = QuditDims::new(l, n).expect("small dimensions");
    let cap = max_class_size.clamp(1, dims.size());
    let classes: Vec<Vec<Word>> = (0..l)
        .map(|_| {
            let size = rng.random_range(1..=cap);
            let mut picked = BTreeSet::new();
            while picked.len() < size {
                picked.insert(rng.random_range(0..dims.size()));
            }
            picked.into_iter().map(|i| dims.digits_of(i)).collect()
        })
        .collect();
    CodeSpec::new(l, n, classes).expect("generated code is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn outputs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in 2..5 {
            let a = random_amplitudes(l, &mut rng);
            assert!((a.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-12);
            let u = random_unitary(l, &mut rng);
            let dev = (u.adjoint() * &u - DMatrix::<C64>::identity(l, l)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-12);
            let p = random_distribution(l + 3, 0.5, &mut rng);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.5 / (l + 3) as f64 - 1e-15));
            let code = random_code(l, 3, 4, &mut rng);
            assert!(code.classes().iter().all(|c| (1..=4).contains(&c.len())));
        }
    }
}

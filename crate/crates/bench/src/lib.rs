//! Shared fixtures for the criterion benches.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mglbo_core::Dataset;

/// Random dataset over the unit cube with a smooth synthetic objective.
pub fn synthetic_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Dataset::new(d);
    for _ in 0..n {
        let x = DVector::from_fn(d, |_, _| rng.gen::<f64>());
        let y = x.iter().map(|&v| (3.0 * v).sin()).sum::<f64>() + 0.5 * x.norm_squared();
        data.push(x, y).unwrap();
    }
    data
}

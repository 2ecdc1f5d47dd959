//! Fixtures shared by the benchmarks.

use capax_core::{DiscreteMeasure, GridFunction, GridSpec};

pub fn gaussian(spec: GridSpec) -> GridFunction {
    GridFunction::from_fn(spec, |x| (-x.iter().map(|v| v * v).sum::<f64>()).exp())
}

/// Hard-core cloud of `count` atoms in one dimension, seeded.
pub fn cloud(count: usize, seed: u64) -> DiscreteMeasure {
    DiscreteMeasure::random_separated_cloud(1, count, 0.05 * count as f64, 1.0, 4.0, 0.05, seed)
        .expect("cloud fits its window")
}

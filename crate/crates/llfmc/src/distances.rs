//! Pairwise distance tables computed in parallel.

use llfmc_core::graph::{DistanceTable, PairDistance};
use rayon::prelude::*;

/// Same table as [`DistanceTable::compute`], with rows of the upper
/// triangle spread over the rayon pool. Order of the result does not depend
/// on the number of threads.
pub fn parallel_table(source: &(impl PairDistance + Sync)) -> DistanceTable {
    let n = source.n_nodes();
    let upper: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..n).map(move |j| source.distance(i, j).unwrap_or(f64::NAN)))
        .collect();
    DistanceTable::from_upper_triangle(n, upper).expect("upper triangle has n(n-1)/2 entries")
}

//! Running independent per-seed jobs, on the rayon pool when the `parallel`
//! feature is on and in a plain loop otherwise.

use crate::circgen::{generate, GenConfig};
use crate::theorem::{check_circuit, TheoremCheck};

pub fn map_sequential<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    seeds.iter().map(|&s| f(s)).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| f(s)).collect()
}

/// Results in seed order, whichever backend runs them.
pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_parallel(seeds, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(seeds, f)
    }
}

/// Generates one circuit per seed and checks the theorem on it.
pub fn theorem_batch(cfg: &GenConfig, seeds: &[u64]) -> Vec<(u64, TheoremCheck)> {
    map_seeds(seeds, |seed| {
        let check = match generate(&cfg.with_seed(seed)) {
            Ok(c) => check_circuit(&c, None),
            Err(e) => {
                let mut t = check_circuit(&crate::netlist::parse_netlist("R1 1 2 1").expect("valid"), None);
                t.error = Some(e.to_string());
                t
            }
        };
        (seed, check)
    })
}

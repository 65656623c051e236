//! Sample a random-walk loop soup and compare it against the exact
//! per-root mass table.
//!
//! ```bash
//! cargo run --release -p cle-carpet --example sample_soup
//! ```

use cle_carpet::loop_soup::{loop_measure_table, sample_loop_soup, truncated_mass_bound,
                            LatticeDomain};
use cle_carpet::params::KappaParams;

fn main() {
    let params = KappaParams::new(3.0).unwrap();
    println!(
        "kappa = {}, soup intensity c = {}",
        params.kappa, params.central_charge
    );

    // A small grid so the exact mass table is cheap to build.
    let domain = LatticeDomain::rectangle(24, 24, 1.0 / 24.0).unwrap();
    let lmax = 32;
    let table = loop_measure_table(&domain, lmax).unwrap();
    println!(
        "restricted loop measure: total mass {:.5} over {} sites (lengths 4..={lmax})",
        table.total(),
        domain.site_count()
    );
    println!(
        "expected loops per sample: {:.3}, truncation loses about {:.4} loops",
        params.central_charge * table.total(),
        truncated_mass_bound(&params, &domain, lmax)
    );

    let mut lengths = std::collections::BTreeMap::new();
    let mut total = 0usize;
    for seed in 0..200 {
        let sample = sample_loop_soup(&params, &domain, lmax, seed).unwrap();
        total += sample.loops.len();
        for lp in &sample.loops {
            *lengths.entry(lp.len()).or_insert(0usize) += 1;
        }
    }
    println!("sampled {total} loops across 200 seeds; counts by length:");
    for (len, count) in &lengths {
        println!("  length {len:>3}: {count}");
    }

    let sample = sample_loop_soup(&params, &domain, lmax, 1).unwrap();
    if let Some(lp) = sample.loops.first() {
        let steps: String = lp.steps.iter().map(|s| s.to_char()).collect();
        println!("first loop of seed 1: root ({}, {}), steps {steps}", lp.root.x, lp.root.y);
    }
}

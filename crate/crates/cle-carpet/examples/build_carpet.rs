//! Build a nested CLE ensemble, cut its carpet mask, and persist the
//! ensemble to the text format.
//!
//! ```bash
//! cargo run --release -p cle-carpet --example build_carpet
//! ```

use cle_carpet::carpet::{build_carpet_mask, mark_parity, nest_ensemble};
use cle_carpet::ensemble_io::{load_ensemble, save_ensemble};
use cle_carpet::loop_soup::LatticeDomain;
use cle_carpet::params::KappaParams;

fn main() {
    let params = KappaParams::new(3.0).unwrap();
    let side = 256u32;
    let domain = LatticeDomain::rectangle(side, side, 1.0 / side as f64).unwrap();
    let seed = 12;

    let mut ensemble = nest_ensemble(&params, &domain, 1 << 18, 2, seed).unwrap();
    // Parity 0 on the even depths; the odd side is one refinement level
    // shallower at a finite nesting truncation.
    mark_parity(&mut ensemble, 0);

    for depth in 0..=2 {
        let loops: Vec<_> = ensemble.loops.iter().filter(|l| l.depth == depth).collect();
        let biggest = loops.iter().map(|l| l.interior_area()).max().unwrap_or(0);
        println!(
            "depth {depth}: {} loops, largest interior {biggest} cells",
            loops.len()
        );
    }
    println!(
        "boundary-touching clusters discarded: {}",
        ensemble.discarded_boundary_clusters
    );

    let mask = build_carpet_mask(&ensemble);
    let (piece, outer) = mask.label_counts();
    println!(
        "mask: {piece} piece cells + {outer} outer-carpet cells, upsilon {} cells in {} components",
        mask.upsilon.count(),
        mask.components().len()
    );

    let path = std::env::temp_dir().join("cle_example_ensemble.cle");
    save_ensemble(&ensemble, &path).unwrap();
    let loaded = load_ensemble(&path).unwrap();
    assert_eq!(ensemble, loaded);
    println!("ensemble saved to {} and reloaded losslessly", path.display());
}

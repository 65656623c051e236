//! Box-counting dimension of the carpet, calibrated against the
//! deterministic Sierpinski carpet.
//!
//! ```bash
//! cargo run --release -p cle-carpet --example carpet_dimension
//! ```

use cle_carpet::carpet::{build_carpet_mask, mark_parity, nest_ensemble};
use cle_carpet::estimators::{box_dimension, sierpinski_carpet};
use cle_carpet::loop_soup::LatticeDomain;
use cle_carpet::mfpp::median;
use cle_carpet::params::KappaParams;
use cle_carpet::rng::{derive_seed, tag};

fn main() {
    let calibration = box_dimension(&sierpinski_carpet(5)).unwrap();
    println!(
        "Sierpinski carpet (5 generations): {:.4} vs log 8 / log 3 = {:.4}",
        calibration.dimension,
        8f64.ln() / 3f64.ln()
    );

    let params = KappaParams::new(3.0).unwrap();
    let side = 512u32;
    let domain = LatticeDomain::rectangle(side, side, 1.0 / side as f64).unwrap();
    let mut dims = Vec::new();
    for replica in 0..8u64 {
        let seed = derive_seed(99, &[tag::REPLICA, replica]);
        let mut ens = nest_ensemble(&params, &domain, 1 << 20, 2, seed).unwrap();
        mark_parity(&mut ens, 0);
        let mask = build_carpet_mask(&ens);
        let est = box_dimension(&mask.upsilon).unwrap();
        println!(
            "replica {replica}: upsilon {} cells, dimension {:.4} (ci [{:.4}, {:.4}])",
            mask.upsilon.count(),
            est.dimension,
            est.ci_low,
            est.ci_high
        );
        dims.push(est.dimension);
    }
    println!(
        "median {:.4} vs carpet dimension 1 + 2/kappa + 3 kappa/32 = {:.4}",
        median(&dims).unwrap(),
        params.carpet_dimension
    );
}

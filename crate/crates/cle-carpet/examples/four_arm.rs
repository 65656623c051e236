//! Four-arm statistics: how often more than two loop arcs cross an
//! annulus, as a function of the radius ratio.
//!
//! ```bash
//! cargo run --release -p cle-carpet --example four_arm
//! ```

use cle_carpet::carpet::{mark_parity, nest_ensemble, parity_coin};
use cle_carpet::estimators::four_arm_stats;
use cle_carpet::geom::Cell;
use cle_carpet::loop_soup::LatticeDomain;
use cle_carpet::params::KappaParams;

fn main() {
    let params = KappaParams::new(3.0).unwrap();
    let side = 256u32;
    let delta = 1.0 / side as f64;
    let domain = LatticeDomain::rectangle(side, side, delta).unwrap();

    let ensembles: Vec<_> = (0..60u64)
        .map(|s| {
            let mut e = nest_ensemble(&params, &domain, 1 << 18, 2, 500 + s).unwrap();
            mark_parity(&mut e, parity_coin(500 + s));
            e
        })
        .collect();

    let mut centers = Vec::new();
    for fy in [0.3, 0.5, 0.7] {
        for fx in [0.3, 0.5, 0.7] {
            centers.push(Cell::new((side as f64 * fx) as i32, (side as f64 * fy) as i32));
        }
    }

    let report = four_arm_stats(&ensembles, &centers, &[2.0, 4.0, 8.0], 64.0 * delta).unwrap();
    println!("annuli with outer radius {} (64 cells):", report.outer_radius);
    for row in &report.rows {
        println!(
            "  t/s = {:>2}: {} of {} annuli with > 2 crossing arcs (frequency {:.4})",
            row.ratio, row.events_gt2, row.annuli, row.frequency
        );
    }
    println!(
        "fitted decay slope {:?} vs four-arm exponent {:.4}",
        report.fitted_slope, report.alpha_target
    );
}

//! Demonstrate the exact metric properties on a sampled carpet:
//! symmetry, monotonicity under mask inclusion, translation invariance,
//! the rescaling identity, and the surrogate-versus-exact bracket.
//!
//! ```bash
//! cargo run --release -p cle-carpet --example metric_properties
//! ```

use cle_carpet::carpet::{build_carpet_mask, mark_parity, nest_ensemble};
use cle_carpet::geom::{BitGrid, Cell};
use cle_carpet::loop_soup::LatticeDomain;
use cle_carpet::mfpp::{mfpp_distance, mfpp_distance_exact, MfppValue};
use cle_carpet::params::KappaParams;
use cle_carpet::rng::substream;
use rand::Rng;

fn main() {
    let params = KappaParams::new(3.0).unwrap();
    let side = 96u32;
    let delta = 1.0 / side as f64;
    let domain = LatticeDomain::rectangle(side, side, delta).unwrap();
    let mut ens = nest_ensemble(&params, &domain, 1 << 16, 2, 3).unwrap();
    mark_parity(&mut ens, 0);
    let mask = build_carpet_mask(&ens);
    // Probe within one component so the distances are finite.
    let cells: Vec<Cell> = mask
        .components()
        .iter()
        .max_by_key(|c| c.len())
        .unwrap()
        .clone();
    let mut rng = substream(1, &[0]);

    let x = cells[rng.gen_range(0..cells.len())];
    let y = cells[rng.gen_range(0..cells.len())];
    let eps = delta;
    let (d_xy, _) = mfpp_distance(&mask.upsilon, eps, delta, x, y).unwrap();
    let (d_yx, _) = mfpp_distance(&mask.upsilon, eps, delta, y, x).unwrap();
    println!("symmetry: d(x,y) = {d_xy:?}, d(y,x) = {d_yx:?}, equal = {}", d_xy == d_yx);

    let mut eroded = mask.upsilon.clone();
    for _ in 0..cells.len() / 5 {
        let kill = cells[rng.gen_range(0..cells.len())];
        if kill != x && kill != y {
            eroded.set(kill, false);
        }
    }
    let (d_eroded, _) = mfpp_distance(&eroded, eps, delta, x, y).unwrap();
    println!("monotonicity: on the eroded mask the distance is {d_eroded:?} (>= {d_xy:?})");

    let (d_scaled, _) = mfpp_distance(&mask.upsilon, 2.0 * eps, 2.0 * delta, x, y).unwrap();
    if let (MfppValue::Finite(a), MfppValue::Finite(b)) = (d_xy, d_scaled) {
        println!("rescaling: doubling delta and eps scales the value by {:.1} (exactly 4)", b / a);
    }

    // Surrogate bracket on a forced U-turn.
    let mut u_mask = BitGrid::new(4, 4);
    for yy in 0..4 {
        u_mask.set(Cell::new(0, yy), true);
        u_mask.set(Cell::new(2, yy), true);
    }
    u_mask.set(Cell::new(1, 3), true);
    let (sur, _) = mfpp_distance(&u_mask, 1.0, 1.0, Cell::new(0, 0), Cell::new(2, 0)).unwrap();
    let exact = mfpp_distance_exact(&u_mask, 1.0, 1.0, Cell::new(0, 0), Cell::new(2, 0)).unwrap();
    println!(
        "U-turn mask: surrogate {:?} vs exact {:?} (turn overlaps make the true area smaller)",
        sur, exact
    );
}

//! The dual metric routes side by side: the BFS surrogate against the
//! exhaustive exact oracle on small masks, with the [1, 2] ratio bracket.
//!
//! ```bash
//! cargo run --release -p cle-carpet --example exact_oracle
//! ```

use cle_carpet::geom::{BitGrid, Cell};
use cle_carpet::mfpp::{mfpp_distance, mfpp_distance_exact, MfppValue};
use cle_carpet::rng::substream;
use rand::Rng;

fn main() {
    let mut rng = substream(5, &[0]);
    let mut worst = 1.0f64;
    println!("mask_cells  eps  surrogate  exact  ratio");
    for trial in 0..20 {
        let target = rng.gen_range(12..=40);
        let mut mask = BitGrid::new(8, 8);
        let mut cells = vec![Cell::new(4, 4)];
        mask.set(cells[0], true);
        while cells.len() < target {
            let c = cells[rng.gen_range(0..cells.len())];
            let nb = c.neighbors()[rng.gen_range(0..4)];
            if mask.in_bounds(nb) && !mask.get(nb) {
                mask.set(nb, true);
                cells.push(nb);
            }
        }
        let x = *cells.iter().min_by_key(|c| (c.y, c.x)).unwrap();
        let y = *cells.iter().max_by_key(|c| (c.y, c.x)).unwrap();
        for eps in [1.0, 1.5, 2.0] {
            let (sur, _) = mfpp_distance(&mask, eps, 1.0, x, y).unwrap();
            let exact = mfpp_distance_exact(&mask, eps, 1.0, x, y).unwrap();
            if let (MfppValue::Finite(s), MfppValue::Finite(e)) = (sur, exact) {
                let ratio = s / e;
                worst = worst.max(ratio);
                if trial < 5 {
                    println!("{:>10}  {eps:>3}  {s:>9.1}  {e:>5.1}  {ratio:.4}", cells.len());
                }
            }
        }
    }
    println!("worst surrogate/exact ratio over the corpus: {worst:.4} (always within [1, 2])");
}

//! Render a metric ball on the carpet: the distance field from a source
//! cell through the parity-0 union, written as a PPM image.
//!
//! ```bash
//! cargo run --release -p cle-carpet --example metric_ball
//! ```

use cle_carpet::carpet::{build_carpet_mask, mark_parity, nest_ensemble};
use cle_carpet::loop_soup::LatticeDomain;
use cle_carpet::mfpp::distance_field;
use cle_carpet::params::KappaParams;
use cle_carpet::render::render_field;

fn main() {
    let params = KappaParams::new(3.0).unwrap();
    let side = 512u32;
    let delta = 1.0 / side as f64;
    let domain = LatticeDomain::rectangle(side, side, delta).unwrap();

    let mut ensemble = nest_ensemble(&params, &domain, 1 << 20, 2, 7).unwrap();
    mark_parity(&mut ensemble, 0);
    let mask = build_carpet_mask(&ensemble);

    // Source: the largest component's cell nearest the window center.
    let component = mask
        .components()
        .iter()
        .max_by_key(|c| c.len())
        .expect("nonempty carpet");
    let center = cle_carpet::geom::Cell::new(side as i32 / 2, side as i32 / 2);
    let source = *component
        .iter()
        .min_by(|a, b| {
            a.center_distance(center)
                .total_cmp(&b.center_distance(center))
        })
        .unwrap();

    for (i, mult) in [1.0, 2.0].into_iter().enumerate() {
        let field = distance_field(&mask.upsilon, mult * delta, delta, &[source]).unwrap();
        let reachable = field.reachable_count();
        let (far, dmax) = field.max_finite().unwrap();
        println!(
            "eps = {mult} delta: {reachable} reachable cells, farthest ({}, {}) at area distance {dmax:.5}",
            far.x, far.y
        );
        let ppm = render_field(&field).unwrap();
        let path = std::env::temp_dir().join(format!("cle_metric_ball_{i}.ppm"));
        std::fs::write(&path, ppm).unwrap();
        println!("  image written to {}", path.display());
    }
}

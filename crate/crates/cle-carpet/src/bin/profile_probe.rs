use cle_carpet::carpet::{build_carpet_mask, cluster_loops, extract_cle_loops, mark_parity, nest_ensemble, parity_coin};
use cle_carpet::loop_soup::{sample_loop_soup, LatticeDomain};
use cle_carpet::mfpp::annulus_crossing;
use cle_carpet::geom::Cell;
use cle_carpet::params::KappaParams;
use std::time::Instant;

fn main() {
    let side: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(768);
    let delta = 1.0 / 256.0;
    let params = KappaParams::new(3.0).unwrap();
    let domain = LatticeDomain::rectangle(side, side, delta).unwrap();
    let lmax = 1 << 20;

    let t = Instant::now();
    let soup = sample_loop_soup(&params, &domain, lmax, 42).unwrap();
    println!("soup: {:.2}s ({} loops, {} steps)", t.elapsed().as_secs_f64(), soup.loops.len(),
             soup.loops.iter().map(|l| l.len()).sum::<usize>());

    let t = Instant::now();
    let clusters = cluster_loops(&soup);
    println!("cluster: {:.2}s ({} clusters)", t.elapsed().as_secs_f64(), clusters.len());

    let t = Instant::now();
    let layer = extract_cle_loops(&clusters, &domain);
    println!("extract: {:.2}s ({} loops, {} discarded)", t.elapsed().as_secs_f64(),
             layer.loops.len(), layer.discarded_boundary_clusters);

    let t = Instant::now();
    let mut ens = nest_ensemble(&params, &domain, lmax, 2, 42).unwrap();
    println!("nest(depth 2): {:.2}s ({} loops total)", t.elapsed().as_secs_f64(), ens.loops.len());

    let t = Instant::now();
    mark_parity(&mut ens, parity_coin(42));
    let mask = build_carpet_mask(&ens);
    println!("mask: {:.2}s ({} upsilon cells, {} comps)", t.elapsed().as_secs_f64(),
             mask.upsilon.count(), mask.components().len());

    let t = Instant::now();
    let r = side as f64 * delta / 3.0;
    let center = Cell::new(side as i32 / 2, side as i32 / 2);
    let v = annulus_crossing(&mask.upsilon, 0.5 * delta, delta, center, r / 2.0, r).unwrap();
    println!("crossing: {:.2}s ({v:?})", t.elapsed().as_secs_f64());
}

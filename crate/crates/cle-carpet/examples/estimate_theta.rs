//! Estimate the distance exponent from annulus-crossing medians over a
//! dyadic ladder of scales, then check the sandwich bounds.
//!
//! A desk-size run; the acceptance suite uses 200 replicas per scale.
//!
//! ```bash
//! cargo run --release -p cle-carpet --example estimate_theta
//! ```

use cle_carpet::estimators::{fit_theta, sandwich_check, scaling_constants, ScalingConfig};
use cle_carpet::params::KappaParams;

fn main() {
    let params = KappaParams::new(3.0).unwrap();
    let delta = 1.0 / 256.0;
    let cfg = ScalingConfig {
        delta,
        lmax: 1 << 18,
        depth_limit: 1,
        window_factor: 3.0,
        centers_per_replica: 5,
    };
    let scales: Vec<f64> = [16.0, 32.0, 64.0, 128.0, 256.0]
        .iter()
        .map(|m| m * delta)
        .collect();

    println!("estimating crossing constants over {} scales...", scales.len());
    let table = scaling_constants(&params, &scales, 0.5 * delta, 30, 2024, &cfg).unwrap();
    for row in &table.rows {
        println!(
            "  r = {:>6.4}: c_r = {}, {} finite crossings, {} excluded",
            row.scale,
            row.estimate.map_or("n/a".into(), |v| format!("{v:.4e}")),
            row.samples,
            row.excluded
        );
    }

    let fit = fit_theta(&table, &params).unwrap();
    println!(
        "theta_hat = {:.4} (ci [{:.4}, {:.4}], r2 {:.4})",
        fit.theta_hat, fit.ci_low, fit.ci_high, fit.r2
    );
    println!(
        "reference values: predicted {:.5}, carpet dimension {:.5}, upper bound {:.4}",
        fit.theta_predicted, fit.carpet_dimension, fit.theta_upper
    );

    let sandwich = sandwich_check(&table).unwrap();
    println!(
        "sandwich: lower bound holds on all pairs = {}, K_hat = {:?}",
        sandwich.all_lower_ok, sandwich.k_hat
    );
}

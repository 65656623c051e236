//! Experiment driver: seeded batch execution and artifact emission.
//!
//! Every subcommand writes a deterministic artifact set (CSVs, PPM images,
//! the ensemble file) for a given `(config, seed)` pair plus a manifest
//! with wall-clock timings. Replicas are scheduled on a worker pool and
//! merged by replica index, never by completion order, so the artifact
//! bytes do not depend on the worker count.

use crate::carpet::{build_carpet_mask, mark_parity, nest_ensemble, parity_coin, CarpetMask,
                    NestedEnsemble};
use crate::config::{fmt_f64, ExperimentConfig};
use crate::ensemble_io::save_ensemble;
use crate::estimators::{box_dimension, fit_theta, four_arm_stats, geodesic_dimension,
                        hausuni_distance, sandwich_check, scaling_constants, sierpinski_carpet,
                        ScalingConfig, ValuedSet};
use crate::geom::{BitGrid, Cell};
use crate::loop_soup::{sample_loop_soup, truncated_mass_bound, LatticeDomain};
use crate::manifest::RunManifest;
use crate::mfpp::{distance_field, mfpp_distance, mfpp_distance_exact, EpsMetricField,
                  MfppValue};
use crate::params::KappaParams;
use crate::render::render_field;
use crate::rng::{derive_seed, substream, tag};
use rand::Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("projected memory {projected_mb} MB exceeds limit {limit_mb} MB (set CLE_MAX_MEM_MB to raise)")]
    ResourceGuard { projected_mb: u64, limit_mb: u64 },
    #[error("{0} exact checks failed")]
    ChecksFailed(usize),
    #[error(transparent)]
    Params(#[from] crate::params::ParamsError),
    #[error(transparent)]
    Soup(#[from] crate::loop_soup::SoupError),
    #[error(transparent)]
    Carpet(#[from] crate::carpet::CarpetError),
    #[error(transparent)]
    Mfpp(#[from] crate::mfpp::MfppError),
    #[error(transparent)]
    Estimator(#[from] crate::estimators::EstimatorError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    EnsembleIo(#[from] crate::ensemble_io::EnsembleIoError),
}

impl RunError {
    /// Machine-readable error report for the CLI.
    pub fn to_json(&self) -> String {
        let kind = match self {
            RunError::Io { .. } => "io",
            RunError::ResourceGuard { .. } => "resource_guard",
            RunError::ChecksFailed(_) => "checks_failed",
            RunError::Params(_) => "params",
            RunError::Soup(_) => "soup",
            RunError::Carpet(_) => "carpet",
            RunError::Mfpp(_) => "mfpp",
            RunError::Estimator(_) => "estimator",
            RunError::Render(_) => "render",
            RunError::EnsembleIo(_) => "ensemble_io",
        };
        serde_json::json!({ "error": kind, "message": self.to_string() }).to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Sample,
    Carpet,
    Ball,
    Theta,
    Dims,
    Fourarm,
    Check,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Sample => "sample",
            Subcommand::Carpet => "carpet",
            Subcommand::Ball => "ball",
            Subcommand::Theta => "theta",
            Subcommand::Dims => "dims",
            Subcommand::Fourarm => "fourarm",
            Subcommand::Check => "check",
        }
    }
}

/// Artifacts produced by one run.
#[derive(Debug)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub manifest: RunManifest,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| RunError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<(), RunError> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Default memory cap when `CLE_MAX_MEM_MB` is unset.
const DEFAULT_MEM_LIMIT_MB: u64 = 4096;

/// Rough per-cell working-set estimate for the pipeline stages (labels,
/// component ids, hop fields, bit masks).
const BYTES_PER_CELL: u64 = 48;

fn resource_guard(config: &ExperimentConfig, sub: Subcommand) -> Result<(), RunError> {
    let limit_mb = std::env::var("CLE_MAX_MEM_MB")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_MEM_LIMIT_MB);
    let workers = effective_workers(config) as u64;
    let base_cells = config.width as u64 * config.height as u64;
    let cells = match sub {
        Subcommand::Theta => {
            let r_max = config.scales.iter().cloned().fold(0.0, f64::max);
            let side = (config.window_factor * r_max / config.delta).ceil() as u64;
            side * side
        }
        _ => base_cells,
    };
    let projected_mb = cells * BYTES_PER_CELL * workers.min(config.samples.max(1) as u64) / (1 << 20);
    if projected_mb > limit_mb {
        return Err(RunError::ResourceGuard {
            projected_mb,
            limit_mb,
        });
    }
    Ok(())
}

fn effective_workers(config: &ExperimentConfig) -> usize {
    if config.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        config.workers
    }
}

/// Run a subcommand inside a worker pool of the configured size; artifacts
/// land in `config.out_dir`.
pub fn run_experiment(config: &ExperimentConfig, sub: Subcommand) -> Result<RunOutcome, RunError> {
    resource_guard(config, sub)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(effective_workers(config))
        .build()
        .expect("worker pool");
    pool.install(|| run_inner(config, sub))
}

fn run_inner(config: &ExperimentConfig, sub: Subcommand) -> Result<RunOutcome, RunError> {
    let params = KappaParams::new(config.kappa)?;
    let mut manifest = RunManifest::new(config, &params, sub.name());
    let domain = LatticeDomain::rectangle(config.width, config.height, config.delta)?;
    manifest.truncated_mass_bound = truncated_mass_bound(&params, &domain, config.lmax);
    let out = config.out_dir.clone();
    let mut artifacts = Vec::new();
    let started = Instant::now();
    match sub {
        Subcommand::Sample => run_sample(config, &params, &domain, &out, &mut artifacts)?,
        Subcommand::Carpet => {
            run_carpet(config, &params, &domain, &out, &mut artifacts, &mut manifest)?
        }
        Subcommand::Ball => run_ball(config, &params, &domain, &out, &mut artifacts)?,
        Subcommand::Theta => run_theta(config, &params, &out, &mut artifacts)?,
        Subcommand::Dims => run_dims(config, &params, &domain, &out, &mut artifacts)?,
        Subcommand::Fourarm => run_fourarm(config, &params, &domain, &out, &mut artifacts)?,
        Subcommand::Check => run_check(config, &params, &domain, &out, &mut artifacts)?,
    }
    manifest
        .stage_seconds
        .push((sub.name().to_string(), started.elapsed().as_secs_f64()));
    let manifest_path = out.join("manifest.json");
    write_file(&manifest_path, manifest.to_json().as_bytes())?;
    artifacts.push(manifest_path);
    Ok(RunOutcome {
        artifacts,
        manifest,
    })
}

fn run_sample(
    config: &ExperimentConfig,
    params: &KappaParams,
    domain: &LatticeDomain,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(), RunError> {
    let sample = sample_loop_soup(params, domain, config.lmax, config.seed)?;
    let rows: Vec<Vec<String>> = sample
        .loops
        .iter()
        .enumerate()
        .map(|(i, lp)| {
            let steps: String = lp.steps.iter().map(|s| s.to_char()).collect();
            vec![
                i.to_string(),
                lp.root.x.to_string(),
                lp.root.y.to_string(),
                lp.len().to_string(),
                steps,
            ]
        })
        .collect();
    let path = out.join("soup_loops.csv");
    write_csv(&path, "loop_index,root_x,root_y,length,steps", &rows)?;
    artifacts.push(path);

    // The exact mass table costs O(lmax^3) per boundary root, so it is
    // emitted only where that is affordable.
    let cells = config.width as u64 * config.height as u64;
    if cells <= 4096 && config.lmax <= 64 {
        let table = crate::loop_soup::loop_measure_table(domain, config.lmax)?;
        let mut rows = Vec::new();
        for y in 0..config.height as i32 {
            for x in 0..config.width as i32 {
                for n in table.lengths() {
                    let mass = table.mass(Cell::new(x, y), n);
                    if mass > 0.0 {
                        rows.push(vec![
                            x.to_string(),
                            y.to_string(),
                            n.to_string(),
                            fmt_f64(mass),
                        ]);
                    }
                }
            }
        }
        rows.push(vec!["-1".into(), "-1".into(), "-1".into(), fmt_f64(table.total())]);
        let table_path = out.join("mass_table.csv");
        write_csv(&table_path, "x,y,length,mass", &rows)?;
        artifacts.push(table_path);
    }
    Ok(())
}

fn ensemble_with_parity(
    config: &ExperimentConfig,
    params: &KappaParams,
    domain: &LatticeDomain,
    seed: u64,
) -> Result<NestedEnsemble, RunError> {
    let mut ens = nest_ensemble(params, domain, config.lmax, config.depth_limit, seed)?;
    mark_parity(&mut ens, parity_coin(seed));
    Ok(ens)
}

/// Ensemble with the parity-0 side pinned to even depths. The ball and
/// dimension runs measure this side: at a finite nesting truncation the
/// odd side keeps one refinement level less and under-represents the
/// carpet, while the coin-sampled law is exercised by `carpet`/`check`.
fn ensemble_even_side(
    config: &ExperimentConfig,
    params: &KappaParams,
    domain: &LatticeDomain,
    seed: u64,
) -> Result<NestedEnsemble, RunError> {
    let mut ens = nest_ensemble(params, domain, config.lmax, config.depth_limit, seed)?;
    mark_parity(&mut ens, 0);
    Ok(ens)
}

fn run_carpet(
    config: &ExperimentConfig,
    params: &KappaParams,
    domain: &LatticeDomain,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
    manifest: &mut RunManifest,
) -> Result<(), RunError> {
    let ens = ensemble_with_parity(config, params, domain, config.seed)?;
    manifest.discarded_boundary_clusters = ens.discarded_boundary_clusters;
    let mask = build_carpet_mask(&ens);

    let ensemble_path = out.join("ensemble.cle");
    if let Some(parent) = ensemble_path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| RunError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    save_ensemble(&ens, &ensemble_path)?;
    artifacts.push(ensemble_path);

    let mut rows = Vec::new();
    for y in 0..mask.height() as i32 {
        for x in 0..mask.width() as i32 {
            let c = Cell::new(x, y);
            let (loop_id, depth, parity) = match mask.label(c) {
                crate::carpet::CellLabel::Piece(id) => {
                    let lp = &ens.loops[id];
                    (
                        id as i64,
                        lp.depth as i64,
                        lp.parity.map_or(-1, |p| p as i64),
                    )
                }
                crate::carpet::CellLabel::OuterCarpet => (-1, -1, -1),
                crate::carpet::CellLabel::NotInDomain => continue,
            };
            let comp = mask.component_of(c).map_or(-1, |id| id as i64);
            rows.push(vec![
                x.to_string(),
                y.to_string(),
                loop_id.to_string(),
                depth.to_string(),
                parity.to_string(),
                comp.to_string(),
            ]);
        }
    }
    let cells_path = out.join("carpet_cells.csv");
    write_csv(&cells_path, "x,y,loop_id,depth,parity,component", &rows)?;
    artifacts.push(cells_path);

    let max_depth = ens.loops.iter().map(|l| l.depth).max().map_or(0, |d| d + 1);
    let mut summary = Vec::new();
    summary.push(vec!["loops_total".into(), ens.loops.len().to_string()]);
    for d in 0..max_depth {
        let n = ens.loops.iter().filter(|l| l.depth == d).count();
        summary.push(vec![format!("loops_depth_{d}"), n.to_string()]);
    }
    summary.push(vec!["upsilon_cells".into(), mask.upsilon.count().to_string()]);
    summary.push(vec![
        "upsilon_components".into(),
        mask.components().len().to_string(),
    ]);
    summary.push(vec![
        "discarded_boundary_clusters".into(),
        ens.discarded_boundary_clusters.to_string(),
    ]);
    let summary_path = out.join("carpet_summary.csv");
    write_csv(&summary_path, "key,value", &summary)?;
    artifacts.push(summary_path);
    Ok(())
}

/// Source cell for a metric ball: the cell of the largest upsilon
/// component closest to the window center (row-major tie break).
fn ball_source(mask: &CarpetMask) -> Option<(u32, Cell)> {
    let comp_id = (0..mask.components().len() as u32)
        .max_by_key(|&i| (mask.components()[i as usize].len(), std::cmp::Reverse(i)))?;
    let center = Cell::new(mask.width() as i32 / 2, mask.height() as i32 / 2);
    let source = mask.components()[comp_id as usize]
        .iter()
        .copied()
        .min_by(|a, b| {
            a.center_distance(center)
                .total_cmp(&b.center_distance(center))
                .then_with(|| (a.y, a.x).cmp(&(b.y, b.x)))
        })?;
    Some((comp_id, source))
}

fn upsilon_grid(mask: &CarpetMask) -> BitGrid {
    mask.upsilon.clone()
}

fn field_csv_rows(field: &EpsMetricField) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for c in field.mask.iter_set() {
        let value = match field.value(c) {
            Some(v) => fmt_f64(v),
            None => "inf".to_string(),
        };
        rows.push(vec![c.x.to_string(), c.y.to_string(), value]);
    }
    rows
}

fn run_ball(
    config: &ExperimentConfig,
    params: &KappaParams,
    domain: &LatticeDomain,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(), RunError> {
    let ens = ensemble_even_side(config, params, domain, config.seed)?;
    let mask = build_carpet_mask(&ens);
    let Some((_, source)) = ball_source(&mask) else {
        return Err(RunError::Render(crate::render::RenderError::EmptyField));
    };
    let grid = upsilon_grid(&mask);
    let mut summary = Vec::new();
    for (i, &eps) in config.eps_list.iter().enumerate() {
        let field = distance_field(&grid, eps, config.delta, &[source])?;
        let ppm = render_field(&field)?;
        let ppm_path = out.join(format!("ball_{i}.ppm"));
        write_file(&ppm_path, &ppm)?;
        artifacts.push(ppm_path);
        let csv_path = out.join(format!("ball_{i}.csv"));
        write_csv(&csv_path, "x,y,value", &field_csv_rows(&field))?;
        artifacts.push(csv_path);
        summary.push(vec![
            fmt_f64(eps),
            field.reachable_count().to_string(),
            grid.count().to_string(),
            fmt_f64(field.reachable_count() as f64 / grid.count() as f64),
        ]);
    }
    let summary_path = out.join("ball_summary.csv");
    write_csv(
        &summary_path,
        "eps,reachable_cells,upsilon_cells,reachable_fraction",
        &summary,
    )?;
    artifacts.push(summary_path);
    Ok(())
}

fn run_theta(
    config: &ExperimentConfig,
    params: &KappaParams,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(), RunError> {
    let eps = config.eps_list[0];
    let cfg = ScalingConfig {
        delta: config.delta,
        lmax: config.lmax,
        depth_limit: config.depth_limit,
        window_factor: config.window_factor,
        centers_per_replica: config.centers,
    };
    let table = scaling_constants(params, &config.scales, eps, config.samples, config.seed, &cfg)?;

    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.scale),
                r.estimate.map_or("nan".into(), fmt_f64),
                r.samples.to_string(),
                r.excluded.to_string(),
                fmt_f64(r.stderr),
            ]
        })
        .collect();
    let scaling_path = out.join("scaling.csv");
    write_csv(&scaling_path, "scale,c_r,samples,excluded,stderr", &rows)?;
    artifacts.push(scaling_path);

    let mut sample_rows = Vec::new();
    for r in &table.rows {
        for (i, v) in r.values.iter().enumerate() {
            sample_rows.push(vec![fmt_f64(r.scale), i.to_string(), fmt_f64(*v)]);
        }
    }
    let samples_path = out.join("scaling_samples.csv");
    write_csv(&samples_path, "scale,index,value", &sample_rows)?;
    artifacts.push(samples_path);

    let fit = fit_theta(&table, params)?;
    let theta_path = out.join("theta.csv");
    write_csv(
        &theta_path,
        "theta_hat,ci_low,ci_high,r2,theta_predicted,carpet_dimension,theta_upper",
        &[vec![
            fmt_f64(fit.theta_hat),
            fmt_f64(fit.ci_low),
            fmt_f64(fit.ci_high),
            fmt_f64(fit.r2),
            fmt_f64(fit.theta_predicted),
            fmt_f64(fit.carpet_dimension),
            fmt_f64(fit.theta_upper),
        ]],
    )?;
    artifacts.push(theta_path);

    let report = sandwich_check(&table)?;
    let pair_rows: Vec<Vec<String>> = report
        .pairs
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.r_small),
                fmt_f64(p.r_big),
                fmt_f64(p.eps),
                fmt_f64(p.ratio),
                fmt_f64(p.lower_bound),
                (p.lower_ok as u8).to_string(),
                fmt_f64(p.k_required),
            ]
        })
        .collect();
    let sandwich_path = out.join("sandwich.csv");
    write_csv(
        &sandwich_path,
        "r_small,r_big,eps,ratio,lower_bound,lower_ok,k_required",
        &pair_rows,
    )?;
    artifacts.push(sandwich_path);

    let summary_path = out.join("sandwich_summary.csv");
    write_csv(
        &summary_path,
        "k_hat,all_lower_ok",
        &[vec![
            report.k_hat.map_or("nan".into(), fmt_f64),
            (report.all_lower_ok as u8).to_string(),
        ]],
    )?;
    artifacts.push(summary_path);
    Ok(())
}

fn run_dims(
    config: &ExperimentConfig,
    params: &KappaParams,
    domain: &LatticeDomain,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(), RunError> {
    use rayon::prelude::*;
    let estimates: Vec<Option<(f64, f64, f64)>> = (0..config.samples)
        .into_par_iter()
        .map(|replica| {
            let seed = derive_seed(config.seed, &[tag::REPLICA, replica as u64]);
            let ens = ensemble_even_side(config, params, domain, seed).ok()?;
            let mask = build_carpet_mask(&ens);
            if mask.upsilon.is_empty() {
                return None;
            }
            let est = box_dimension(&mask.upsilon).ok()?;
            Some((est.dimension, est.ci_low, est.ci_high))
        })
        .collect();
    let mut rows = Vec::new();
    let mut dims = Vec::new();
    for (i, est) in estimates.iter().enumerate() {
        match est {
            Some((d, lo, hi)) => {
                dims.push(*d);
                rows.push(vec![
                    i.to_string(),
                    "upsilon".into(),
                    fmt_f64(*d),
                    fmt_f64(*lo),
                    fmt_f64(*hi),
                ]);
            }
            None => rows.push(vec![
                i.to_string(),
                "upsilon".into(),
                "nan".into(),
                "nan".into(),
                "nan".into(),
            ]),
        }
    }
    let dims_path = out.join("dims.csv");
    write_csv(&dims_path, "replica,set,dimension,ci_low,ci_high", &rows)?;
    artifacts.push(dims_path);

    // Calibration on the deterministic fractal plus the geodesic estimate
    // from the first replica's metric ball.
    let sierpinski = box_dimension(&sierpinski_carpet(5))?;
    let geodesic = {
        let seed = derive_seed(config.seed, &[tag::REPLICA, 0]);
        let ens = ensemble_even_side(config, params, domain, seed)?;
        let mask = build_carpet_mask(&ens);
        ball_source(&mask)
            .map(|(_, source)| -> Result<_, RunError> {
                let grid = upsilon_grid(&mask);
                let field = distance_field(&grid, config.eps_list[0], config.delta, &[source])?;
                let mut witnesses = Vec::new();
                if let Some((far, _)) = field.max_finite() {
                    if let Some(w) = field.witness_from(far) {
                        witnesses.push(w);
                    }
                }
                Ok(geodesic_dimension(&witnesses).ok())
            })
            .transpose()?
            .flatten()
    };
    let mut summary = Vec::new();
    summary.push(vec![
        "upsilon_median".into(),
        crate::mfpp::median(&dims).map_or("nan".into(), fmt_f64),
    ]);
    summary.push(vec![
        "carpet_dimension_target".into(),
        fmt_f64(params.carpet_dimension),
    ]);
    summary.push(vec!["sierpinski".into(), fmt_f64(sierpinski.dimension)]);
    summary.push(vec![
        "sierpinski_target".into(),
        fmt_f64(8f64.ln() / 3f64.ln()),
    ]);
    summary.push(vec![
        "geodesic".into(),
        geodesic.map_or("nan".into(), |g| fmt_f64(g.dimension)),
    ]);
    summary.push(vec!["theta_upper".into(), fmt_f64(params.theta_upper)]);
    let summary_path = out.join("dims_summary.csv");
    write_csv(&summary_path, "key,value", &summary)?;
    artifacts.push(summary_path);
    Ok(())
}

fn fourarm_centers(config: &ExperimentConfig) -> Vec<Cell> {
    // A 3x3 grid of centers keeping the outer circle inside the window.
    let margin = (config.fourarm_radius / config.delta).ceil() as i32 + 1;
    let (w, h) = (config.width as i32, config.height as i32);
    let mut centers = Vec::new();
    for fy in [0.3, 0.5, 0.7] {
        for fx in [0.3, 0.5, 0.7] {
            let c = Cell::new((w as f64 * fx) as i32, (h as f64 * fy) as i32);
            if c.x >= margin && c.y >= margin && c.x < w - margin && c.y < h - margin {
                centers.push(c);
            }
        }
    }
    if centers.is_empty() {
        centers.push(Cell::new(w / 2, h / 2));
    }
    centers
}

fn run_fourarm(
    config: &ExperimentConfig,
    params: &KappaParams,
    domain: &LatticeDomain,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(), RunError> {
    use rayon::prelude::*;
    let ensembles: Vec<NestedEnsemble> = (0..config.samples)
        .into_par_iter()
        .map(|replica| {
            let seed = derive_seed(config.seed, &[tag::REPLICA, replica as u64]);
            ensemble_with_parity(config, params, domain, seed)
        })
        .collect::<Result<_, _>>()?;
    let centers = fourarm_centers(config);
    let report = four_arm_stats(&ensembles, &centers, &config.fourarm_ratios, config.fourarm_radius)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.ratio),
                r.annuli.to_string(),
                r.events_gt2.to_string(),
                fmt_f64(r.frequency),
            ]
        })
        .collect();
    let path = out.join("fourarm.csv");
    write_csv(&path, "ratio,annuli,events_gt2,frequency", &rows)?;
    artifacts.push(path);
    let excluded: Vec<String> = report.excluded_ratios.iter().map(|&r| fmt_f64(r)).collect();
    let fit_path = out.join("fourarm_fit.csv");
    write_csv(
        &fit_path,
        "slope,alpha_target,excluded_ratios",
        &[vec![
            report.fitted_slope.map_or("nan".into(), fmt_f64),
            fmt_f64(report.alpha_target),
            excluded.join(";"),
        ]],
    )?;
    artifacts.push(fit_path);
    Ok(())
}

fn run_check(
    config: &ExperimentConfig,
    params: &KappaParams,
    domain: &LatticeDomain,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(), RunError> {
    let mut results: Vec<(String, bool)> = Vec::new();
    let mut rng = substream(config.seed, &[tag::CORPUS]);

    // Exact invariants on masks derived from the configured grid.
    let ens = ensemble_with_parity(config, params, domain, config.seed)?;
    let mask = build_carpet_mask(&ens);

    // Parity alternation.
    let parity_ok = ens.loops.iter().all(|l| match l.parent {
        None => true,
        Some(p) => l.parity != ens.loops[p].parity,
    });
    results.push(("parity_alternation".into(), parity_ok));

    // Carpet partition.
    let (piece, outer) = mask.label_counts();
    results.push((
        "carpet_partition".into(),
        piece + outer == domain.site_count(),
    ));

    // Outermost filter idempotence over depth-0 interiors.
    let outermost_ok = ens
        .loops
        .iter()
        .filter(|l| l.depth == 0)
        .all(|a| {
            ens.loops
                .iter()
                .filter(|b| b.depth == 0 && b.id != a.id)
                .all(|b| !b.interior_contains(a.interior_cells().next().unwrap()))
        });
    results.push(("outermost_idempotent".into(), outermost_ok));

    // Metric invariants on random sub-masks of upsilon.
    let eps = config.eps_list[0];
    let cells: Vec<Cell> = mask.upsilon.iter_set().collect();
    let mut metric_ok = true;
    let mut monotone_ok = true;
    let mut translation_ok = true;
    let mut rescale_ok = true;
    let mut surrogate_ok = true;
    if cells.len() >= 2 {
        for _ in 0..20 {
            let a = cells[rng.gen_range(0..cells.len())];
            let b = cells[rng.gen_range(0..cells.len())];
            let (ab, _) = mfpp_distance(&mask.upsilon, eps, config.delta, a, b)?;
            let (ba, _) = mfpp_distance(&mask.upsilon, eps, config.delta, b, a)?;
            metric_ok &= ab == ba;
            // Rescaling identity.
            if let (MfppValue::Finite(v), (MfppValue::Finite(v2), _)) = (
                ab,
                mfpp_distance(&mask.upsilon, eps * 2.0, config.delta * 2.0, a, b)?,
            ) {
                rescale_ok &= (v2 - 4.0 * v).abs() < 1e-9 * v2.abs().max(1.0);
            }
            // Monotonicity under random erosion.
            let mut smaller = mask.upsilon.clone();
            for _ in 0..cells.len() / 8 {
                let kill = cells[rng.gen_range(0..cells.len())];
                if kill != a && kill != b {
                    smaller.set(kill, false);
                }
            }
            let (small_v, _) = mfpp_distance(&smaller, eps, config.delta, a, b)?;
            match (small_v, ab) {
                (MfppValue::Finite(s), MfppValue::Finite(bg)) => monotone_ok &= s >= bg,
                (MfppValue::Unreachable, _) => {}
                (MfppValue::Finite(_), MfppValue::Unreachable) => monotone_ok = false,
            }
        }
        // Translation invariance within a movable crop.
        let a = cells[0];
        let b = cells[cells.len() / 2];
        let base = mfpp_distance(&mask.upsilon, eps, config.delta, a, b)?.0;
        let shifted_mask = mask.upsilon.translated(1, 1);
        if shifted_mask.get(a.translate(1, 1)) && shifted_mask.get(b.translate(1, 1)) {
            let moved =
                mfpp_distance(&shifted_mask, eps, config.delta, a.translate(1, 1), b.translate(1, 1))?
                    .0;
            // Translation can push mask cells off-grid; compare only when
            // nothing was clipped.
            if shifted_mask.count() == mask.upsilon.count() {
                translation_ok &= moved == base;
            }
        }
    }
    results.push(("symmetry".into(), metric_ok));
    results.push(("monotonicity".into(), monotone_ok));
    results.push(("translation_invariance".into(), translation_ok));
    results.push(("rescaling_identity".into(), rescale_ok));

    // Surrogate dominates exact on tiny random masks.
    for _ in 0..20 {
        let mut tiny = BitGrid::new(6, 6);
        for _ in 0..rng.gen_range(8..=30) {
            tiny.set(Cell::new(rng.gen_range(0..6), rng.gen_range(0..6)), true);
        }
        let set: Vec<Cell> = tiny.iter_set().collect();
        if set.len() < 2 {
            continue;
        }
        let x = set[0];
        let y = set[set.len() - 1];
        let (sur, _) = mfpp_distance(&tiny, eps.max(config.delta), config.delta, x, y)?;
        let exact = mfpp_distance_exact(&tiny, eps.max(config.delta), config.delta, x, y)?;
        match (sur, exact) {
            (MfppValue::Finite(s), MfppValue::Finite(e)) => surrogate_ok &= s >= e - 1e-12,
            (MfppValue::Unreachable, MfppValue::Unreachable) => {}
            _ => surrogate_ok = false,
        }
    }
    results.push(("surrogate_dominates_exact".into(), surrogate_ok));

    // HausUni diagnostic across the eps list on the largest component.
    let mut hausuni_rows = Vec::new();
    if let Some((_, source)) = ball_source(&mask) {
        let grid = upsilon_grid(&mask);
        let fields: Vec<(f64, ValuedSet)> = config
            .eps_list
            .iter()
            .map(|&e| -> Result<_, RunError> {
                let field = distance_field(&grid, e, config.delta, &[source])?;
                // Self-normalized values: the diagnostic tracks Cauchy
                // behavior across eps after median normalization.
                let finite: Vec<f64> = field
                    .mask
                    .iter_set()
                    .filter_map(|c| field.value(c))
                    .collect();
                let norm = crate::mfpp::median(&finite).unwrap_or(1.0).max(f64::MIN_POSITIVE);
                let set: ValuedSet = field
                    .mask
                    .iter_set()
                    .filter_map(|c| {
                        field.value(c).map(|v| {
                            (
                                (
                                    (c.x as f64 + 0.5) * config.delta,
                                    (c.y as f64 + 0.5) * config.delta,
                                ),
                                v / norm,
                            )
                        })
                    })
                    .collect();
                Ok((e, set))
            })
            .collect::<Result<_, _>>()?;
        for pair in fields.windows(2) {
            let (ea, sa) = &pair[0];
            let (eb, sb) = &pair[1];
            if !sa.is_empty() && !sb.is_empty() {
                hausuni_rows.push(vec![
                    fmt_f64(*ea),
                    fmt_f64(*eb),
                    fmt_f64(hausuni_distance(sa, sb)),
                ]);
            }
        }
    }
    let hausuni_path = out.join("hausuni.csv");
    write_csv(&hausuni_path, "eps_a,eps_b,distance", &hausuni_rows)?;
    artifacts.push(hausuni_path);

    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(name, ok)| vec![name.clone(), if *ok { "pass".into() } else { "fail".into() }])
        .collect();
    let report_path = out.join("check_report.csv");
    write_csv(&report_path, "check,status", &rows)?;
    artifacts.push(report_path);

    let failures = results.iter().filter(|(_, ok)| !ok).count();
    if failures > 0 {
        return Err(RunError::ChecksFailed(failures));
    }
    Ok(())
}

/// Convenience wrapper used by tests and examples: run on a parsed config
/// text.
pub fn run_from_text(text: &str, sub: Subcommand) -> Result<RunOutcome, Vec<String>> {
    let config = crate::config::parse_config(text)
        .map_err(|errs| errs.iter().map(|e| e.to_string()).collect::<Vec<_>>())?;
    run_experiment(&config, sub).map_err(|e| vec![e.to_string()])
}

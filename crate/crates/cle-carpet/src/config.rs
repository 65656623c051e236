//! Experiment configuration: a line-oriented `key = value` text format.
//!
//! Lines are UTF-8, one key per line, `#` starts a comment. Numbers accept
//! decimals and `p/q` fractions; lengths accept a `d` suffix meaning
//! multiples of the lattice spacing (`eps_list = 1d,2d`). Parsing reports
//! every error with its line number, not just the first.

use crate::params::central_charge;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line number; 0 for whole-file errors.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config line {}: {}", self.line, self.message)
        }
    }
}

/// Validated experiment configuration; every length is resolved to plane
/// units.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kappa: f64,
    pub width: u32,
    pub height: u32,
    pub delta: f64,
    pub lmax: u32,
    pub depth_limit: u32,
    pub eps_list: Vec<f64>,
    pub scales: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub window_factor: f64,
    pub centers: usize,
    pub fourarm_ratios: Vec<f64>,
    pub fourarm_radius: f64,
}

/// 17-significant-digit float formatting used by every CSV and by the
/// canonical config serialization.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_number(text: &str) -> Result<f64, String> {
    let t = text.trim();
    if let Some((p, q)) = t.split_once('/') {
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in `{t}`"))?;
        let q: f64 = q
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in `{t}`"))?;
        if q == 0.0 {
            return Err(format!("zero denominator in `{t}`"));
        }
        return Ok(p / q);
    }
    t.parse().map_err(|_| format!("not a number: `{t}`"))
}

/// A length that may be given in plane units or in lattice spacings.
#[derive(Debug, Clone, Copy)]
enum Length {
    Plane(f64),
    Spacings(f64),
}

impl Length {
    fn parse(text: &str) -> Result<Length, String> {
        let t = text.trim();
        if let Some(stripped) = t.strip_suffix('d') {
            Ok(Length::Spacings(parse_number(stripped)?))
        } else {
            Ok(Length::Plane(parse_number(t)?))
        }
    }

    fn resolve(self, delta: f64) -> f64 {
        match self {
            Length::Plane(v) => v,
            Length::Spacings(m) => m * delta,
        }
    }
}

fn parse_list<T>(text: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    text.split(',').map(f).collect()
}

/// Parse and validate a configuration, reporting all errors at once.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let mut errors: Vec<ConfigError> = Vec::new();
    let mut kappa: Option<f64> = None;
    let mut grid: Option<(u32, u32)> = None;
    let mut delta: Option<f64> = None;
    let mut lmax: Option<u32> = None;
    let mut depth_limit: u32 = 2;
    let mut eps_list: Option<Vec<Length>> = None;
    let mut scales: Option<Vec<Length>> = None;
    let mut samples: usize = 20;
    let mut seed: u64 = 1;
    let mut out_dir = PathBuf::from("out");
    let mut workers: usize = 0;
    let mut window_factor: f64 = 3.0;
    let mut centers: usize = 5;
    let mut fourarm_ratios: Vec<f64> = vec![2.0, 4.0, 8.0];
    let mut fourarm_radius: Option<Length> = None;
    let mut seen = std::collections::HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut err = |message: String| errors.push(ConfigError {
            line: line_no,
            message,
        });
        let Some((key, value)) = line.split_once('=') else {
            err(format!("expected `key = value`, got `{line}`"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            err(format!("duplicate key `{key}`"));
            continue;
        }
        match key {
            "kappa" => match parse_number(value) {
                Ok(v) => kappa = Some(v),
                Err(e) => err(e),
            },
            "grid" => match value.split_once('x') {
                Some((w, h)) => {
                    match (w.trim().parse::<u32>(), h.trim().parse::<u32>()) {
                        (Ok(w), Ok(h)) if w > 0 && h > 0 => grid = Some((w, h)),
                        _ => err(format!("bad grid `{value}`, expected WIDTHxHEIGHT")),
                    }
                }
                None => err(format!("bad grid `{value}`, expected WIDTHxHEIGHT")),
            },
            "delta" => match parse_number(value) {
                Ok(v) if v > 0.0 => delta = Some(v),
                Ok(v) => err(format!("delta must be positive, got {v}")),
                Err(e) => err(e),
            },
            "lmax" => match value.parse::<u32>() {
                Ok(v) => lmax = Some(v),
                Err(_) => err(format!("bad lmax `{value}`")),
            },
            "depth_limit" => match value.parse::<u32>() {
                Ok(v) => depth_limit = v,
                Err(_) => err(format!("bad depth_limit `{value}`")),
            },
            "eps_list" => match parse_list(value, Length::parse) {
                Ok(v) => eps_list = Some(v),
                Err(e) => err(e),
            },
            "scales" => match parse_list(value, Length::parse) {
                Ok(v) => scales = Some(v),
                Err(e) => err(e),
            },
            "samples" => match value.parse::<usize>() {
                Ok(v) if v >= 1 => samples = v,
                _ => err(format!("samples must be a positive integer, got `{value}`")),
            },
            "seed" => match value.parse::<u64>() {
                Ok(v) => seed = v,
                Err(_) => err(format!("bad seed `{value}`")),
            },
            "out_dir" => out_dir = PathBuf::from(value),
            "workers" => match value.parse::<usize>() {
                Ok(v) => workers = v,
                Err(_) => err(format!("bad workers `{value}`")),
            },
            "window_factor" => match parse_number(value) {
                Ok(v) => window_factor = v,
                Err(e) => err(e),
            },
            "centers" => match value.parse::<usize>() {
                Ok(v) if (1..=5).contains(&v) => centers = v,
                _ => err(format!("centers must be 1..=5, got `{value}`")),
            },
            "fourarm_ratios" => match parse_list(value, parse_number) {
                Ok(v) => fourarm_ratios = v,
                Err(e) => err(e),
            },
            "fourarm_radius" => match Length::parse(value) {
                Ok(v) => fourarm_radius = Some(v),
                Err(e) => err(e),
            },
            other => err(format!("unknown key `{other}`")),
        }
    }

    let mut whole = |message: String| errors.push(ConfigError { line: 0, message });

    let Some(kappa) = kappa else {
        whole("missing required key `kappa`".into());
        return Err(errors);
    };
    let Some((width, height)) = grid else {
        whole("missing required key `grid`".into());
        return Err(errors);
    };
    if let Err(e) = central_charge(kappa) {
        whole(e.to_string());
    }
    let delta = delta.unwrap_or(1.0 / width.max(height) as f64);
    // Default truncation: long enough for loops of the window diameter.
    let lmax = lmax.unwrap_or_else(|| {
        let side = width.max(height) as u64;
        ((4 * side * side).min(1 << 22) as u32).max(4) & !1
    });
    if lmax < 4 || lmax % 2 == 1 {
        whole(format!("lmax must be an even integer >= 4, got {lmax}"));
    }
    let eps_resolved: Vec<f64> = eps_list
        .unwrap_or_else(|| vec![Length::Spacings(1.0), Length::Spacings(2.0)])
        .into_iter()
        .map(|l| l.resolve(delta))
        .collect();
    for &e in &eps_resolved {
        if !(e > 0.0) {
            whole(format!("eps values must be positive, got {e}"));
        }
    }
    let scales_resolved: Vec<f64> = scales
        .unwrap_or_else(|| {
            [8.0, 16.0, 32.0, 64.0]
                .into_iter()
                .map(Length::Spacings)
                .collect()
        })
        .into_iter()
        .map(|l| l.resolve(delta))
        .collect();
    if scales_resolved.windows(2).any(|w| w[0] >= w[1]) {
        whole("scales must strictly increase".into());
    }
    if scales_resolved.iter().any(|&s| !(s > 0.0)) {
        whole("scales must be positive".into());
    }
    if window_factor < 2.0 {
        whole(format!("window_factor must be >= 2, got {window_factor}"));
    }
    for &r in &fourarm_ratios {
        if !(r > 1.0) {
            whole(format!("fourarm ratios must exceed 1, got {r}"));
        }
    }
    let fourarm_radius = fourarm_radius
        .unwrap_or(Length::Spacings(48.0))
        .resolve(delta);
    if !(fourarm_radius > 0.0) {
        whole(format!("fourarm_radius must be positive, got {fourarm_radius}"));
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(ExperimentConfig {
        kappa,
        width,
        height,
        delta,
        lmax,
        depth_limit,
        eps_list: eps_resolved,
        scales: scales_resolved,
        samples,
        seed,
        out_dir,
        workers,
        window_factor,
        centers,
        fourarm_ratios,
        fourarm_radius,
    })
}

impl ExperimentConfig {
    /// Canonical serialization: fixed key order, resolved plane units,
    /// 17 significant digits. `parse_config` of this text reproduces the
    /// config exactly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kappa = {}", fmt_f64(self.kappa));
        let _ = writeln!(s, "grid = {}x{}", self.width, self.height);
        let _ = writeln!(s, "delta = {}", fmt_f64(self.delta));
        let _ = writeln!(s, "lmax = {}", self.lmax);
        let _ = writeln!(s, "depth_limit = {}", self.depth_limit);
        let eps: Vec<String> = self.eps_list.iter().map(|&e| fmt_f64(e)).collect();
        let _ = writeln!(s, "eps_list = {}", eps.join(","));
        let scales: Vec<String> = self.scales.iter().map(|&e| fmt_f64(e)).collect();
        let _ = writeln!(s, "scales = {}", scales.join(","));
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "window_factor = {}", fmt_f64(self.window_factor));
        let _ = writeln!(s, "centers = {}", self.centers);
        let ratios: Vec<String> = self.fourarm_ratios.iter().map(|&r| fmt_f64(r)).collect();
        let _ = writeln!(s, "fourarm_ratios = {}", ratios.join(","));
        let _ = writeln!(s, "fourarm_radius = {}", fmt_f64(self.fourarm_radius));
        s
    }

    /// FNV-1a hash of the canonical serialization; stable across platforms.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.serialize().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("kappa = 3\ngrid = 256x256\ndelta = 1/256\nseed = 1\n").unwrap();
        assert_eq!(cfg.kappa, 3.0);
        assert_eq!((cfg.width, cfg.height), (256, 256));
        assert_eq!(cfg.delta, 1.0 / 256.0);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.depth_limit, 2);
        assert_eq!(cfg.samples, 20);
        assert_eq!(cfg.eps_list, vec![cfg.delta, 2.0 * cfg.delta]);
        assert!(cfg.lmax >= 4 && cfg.lmax % 2 == 0);
    }

    #[test]
    fn kappa_out_of_range_cites_interval() {
        let errs = parse_config("kappa = 5\ngrid = 64x64\n").unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("(8/3, 4)")), "{errs:?}");
    }

    #[test]
    fn all_errors_reported_with_line_numbers() {
        let text = "kappa = 3\n\
                    grid = 64x64\n\
                    bogus_key = 1\n\
                    samples = -2\n\
                    eps_list = 1d,frog\n";
        let errs = parse_config(text).unwrap_err();
        assert!(errs.len() >= 3, "{errs:?}");
        assert!(errs.iter().any(|e| e.line == 3 && e.message.contains("bogus_key")));
        assert!(errs.iter().any(|e| e.line == 4));
        assert!(errs.iter().any(|e| e.line == 5 && e.message.contains("frog")));
    }

    #[test]
    fn missing_required_keys() {
        let errs = parse_config("# nothing\n").unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("kappa")));
    }

    #[test]
    fn spacing_suffix_resolves_against_delta() {
        let cfg =
            parse_config("kappa = 3\ngrid = 128x128\ndelta = 1/128\neps_list = 1d,1.5d,0.03125\n")
                .unwrap();
        assert_eq!(cfg.eps_list[0], 1.0 / 128.0);
        assert_eq!(cfg.eps_list[1], 1.5 / 128.0);
        assert_eq!(cfg.eps_list[2], 0.03125);
    }

    #[test]
    fn round_trip_parses_to_equal_config() {
        let text = "kappa = 3.2\ngrid = 96x64\ndelta = 1/96\nscales = 8d,16d,32d\n\
                    samples = 7\nseed = 99\nworkers = 2\ncenters = 3\n";
        let cfg = parse_config(text).unwrap();
        let round = parse_config(&cfg.serialize()).unwrap();
        assert_eq!(cfg, round);
        assert_eq!(cfg.hash(), round.hash());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = parse_config("kappa = 3\ngrid = 64x64\n").unwrap();
        let b = parse_config("kappa = 3\ngrid = 64x64\nseed = 2\n").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn duplicate_keys_rejected() {
        let errs = parse_config("kappa = 3\nkappa = 3.5\ngrid = 64x64\n").unwrap_err();
        assert!(errs.iter().any(|e| e.line == 2 && e.message.contains("duplicate")));
    }

    #[test]
    fn scales_must_increase() {
        let errs =
            parse_config("kappa = 3\ngrid = 64x64\nscales = 16d,8d\n").unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("increase")));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// Canonical serialization round-trips to an equal config with
            /// an equal hash for arbitrary valid inputs.
            #[test]
            fn serialize_parse_round_trip(
                kappa in 2.7f64..3.99,
                w in 1u32..300,
                h in 1u32..300,
                seed in any::<u64>(),
                samples in 1usize..500,
                depth in 0u32..5,
                workers in 0usize..16,
            ) {
                let text = format!(
                    "kappa = {kappa}\ngrid = {w}x{h}\nseed = {seed}\n\
                     samples = {samples}\ndepth_limit = {depth}\nworkers = {workers}\n"
                );
                let cfg = parse_config(&text).unwrap();
                let round = parse_config(&cfg.serialize()).unwrap();
                prop_assert_eq!(&cfg, &round);
                prop_assert_eq!(cfg.hash(), round.hash());
            }

            /// Fraction syntax agrees with plain decimals.
            #[test]
            fn fractions_parse_consistently(p in 1u32..2000, q in 1u32..2000) {
                let frac = parse_number(&format!("{p}/{q}")).unwrap();
                prop_assert!((frac - p as f64 / q as f64).abs() < 1e-15);
            }
        }
    }
}

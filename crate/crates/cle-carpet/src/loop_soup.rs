//! Random-walk loop soup on a finite grid.
//!
//! The rooted loop measure gives every closed nearest-neighbor walk of
//! length `n` rooted at a site the mass `4^(-n) / n`; the soup restricted
//! to a domain keeps the walks that never leave the allowed set. A soup of
//! intensity `c` is a Poisson point process with that intensity measure,
//! sampled here per root site with one substream per site and per loop.
//!
//! Sampling draws from the free-lattice measure (whose per-length masses
//! have the closed form `binom(n, n/2)^2 4^(-n) / n`) and thins by the
//! containment indicator, which realizes the restricted Poisson process
//! exactly while keeping the cost per site at `O(log lmax)` plus the steps
//! actually walked. Uniform closed walks are generated from two independent
//! +/-1 bridges via the diagonal rotation `u = x + y`, `v = x - y`.

use crate::geom::{BitGrid, Cell};
use crate::params::KappaParams;
use crate::rng::{substream, tag};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SoupError {
    #[error("allowed set is empty")]
    EmptyDomain,
    #[error("grid dimensions must be positive, got {0}x{1}")]
    EmptyGrid(u32, u32),
    #[error("lattice spacing must be positive, got {0}")]
    BadDelta(f64),
    #[error("lmax must be an even integer >= 4, got {0}")]
    BadLmax(u32),
    #[error("allowed mask is {0}x{1} but the grid is {2}x{3}")]
    MaskMismatch(u32, u32, u32, u32),
}

/// Discretization of a planar domain: a `width x height` cell grid with
/// spacing `delta` (plane-length units) and a bitmask of interior sites.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDomain {
    pub delta: f64,
    pub width: u32,
    pub height: u32,
    pub allowed: BitGrid,
}

impl LatticeDomain {
    pub fn new(delta: f64, allowed: BitGrid) -> Result<Self, SoupError> {
        let (width, height) = (allowed.width(), allowed.height());
        if width == 0 || height == 0 {
            return Err(SoupError::EmptyGrid(width, height));
        }
        if !(delta > 0.0) {
            return Err(SoupError::BadDelta(delta));
        }
        if allowed.is_empty() {
            return Err(SoupError::EmptyDomain);
        }
        Ok(LatticeDomain {
            delta,
            width,
            height,
            allowed,
        })
    }

    /// Full rectangular domain.
    pub fn rectangle(width: u32, height: u32, delta: f64) -> Result<Self, SoupError> {
        Self::new(delta, BitGrid::full(width, height))
    }

    pub fn site_count(&self) -> usize {
        self.allowed.count()
    }

    #[inline]
    pub fn contains(&self, c: Cell) -> bool {
        self.allowed.get(c)
    }
}

/// One lattice step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Step {
    East = 0,
    North = 1,
    West = 2,
    South = 3,
}

impl Step {
    pub fn offset(self) -> (i32, i32) {
        match self {
            Step::East => (1, 0),
            Step::North => (0, 1),
            Step::West => (-1, 0),
            Step::South => (0, -1),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Step::East => 'E',
            Step::North => 'N',
            Step::West => 'W',
            Step::South => 'S',
        }
    }

    pub fn from_char(ch: char) -> Option<Step> {
        match ch {
            'E' => Some(Step::East),
            'N' => Some(Step::North),
            'W' => Some(Step::West),
            'S' => Some(Step::South),
            _ => None,
        }
    }
}

/// A rooted closed nearest-neighbor walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeLoop {
    pub root: Cell,
    pub steps: Vec<Step>,
}

impl LatticeLoop {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Cells in visit order, starting at the root (the closing return to
    /// the root is not repeated).
    pub fn visited_cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.steps.len());
        let mut pos = self.root;
        out.push(pos);
        for step in &self.steps[..self.steps.len().saturating_sub(1)] {
            let (dx, dy) = step.offset();
            pos = pos.translate(dx, dy);
            out.push(pos);
        }
        out
    }

    /// Whether the walk returns to its root and stays inside `allowed`.
    pub fn is_closed_within(&self, allowed: &BitGrid) -> bool {
        let mut pos = self.root;
        if !allowed.get(pos) {
            return false;
        }
        for step in &self.steps {
            let (dx, dy) = step.offset();
            pos = pos.translate(dx, dy);
            if !allowed.get(pos) {
                return false;
            }
        }
        pos == self.root
    }
}

/// Per-root, per-length masses of the restricted loop measure.
#[derive(Debug, Clone)]
pub struct MassTable {
    width: u32,
    lmax: u32,
    /// `masses[site_index][length_index]`, zero for disallowed sites.
    masses: Vec<Vec<f64>>,
    total: f64,
}

impl MassTable {
    /// Even lengths covered by the table, in increasing order.
    pub fn lengths(&self) -> impl Iterator<Item = u32> {
        (4..=self.lmax).step_by(2)
    }

    pub fn mass(&self, root: Cell, length: u32) -> f64 {
        if root.x < 0 || root.y < 0 || length < 4 || length > self.lmax || length % 2 == 1 {
            return 0.0;
        }
        let site = root.y as usize * self.width as usize + root.x as usize;
        self.masses
            .get(site)
            .map_or(0.0, |row| row[(length as usize - 4) / 2])
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

fn validate_lmax(lmax: u32) -> Result<(), SoupError> {
    if lmax < 4 || lmax % 2 == 1 {
        return Err(SoupError::BadLmax(lmax));
    }
    Ok(())
}

/// Normalized return weights for walks rooted at `root` that stay inside
/// `allowed`: entry `i` is `(#closed walks of length 4 + 2i) * 4^-(4 + 2i)`.
///
/// Dynamic programming over the window the walk can reach; working with the
/// normalized weights (counts scaled by `4^-k`) keeps everything inside f64
/// range for any `lmax`.
fn return_weights(allowed: &BitGrid, root: Cell, lmax: u32) -> Vec<f64> {
    let reach = (lmax / 2) as i32;
    let x0 = (root.x - reach).max(0);
    let y0 = (root.y - reach).max(0);
    let x1 = (root.x + reach).min(allowed.width() as i32 - 1);
    let y1 = (root.y + reach).min(allowed.height() as i32 - 1);
    let w = (x1 - x0 + 1) as usize;
    let h = (y1 - y0 + 1) as usize;
    let local = |c: Cell| (c.y - y0) as usize * w + (c.x - x0) as usize;

    let mut open = vec![false; w * h];
    for y in y0..=y1 {
        for x in x0..=x1 {
            open[(y - y0) as usize * w + (x - x0) as usize] = allowed.get(Cell::new(x, y));
        }
    }

    let mut cur = vec![0.0f64; w * h];
    let mut next = vec![0.0f64; w * h];
    cur[local(root)] = 1.0;
    let mut weights = Vec::with_capacity((lmax as usize - 2) / 2);
    for k in 1..=lmax {
        for (i, slot) in next.iter_mut().enumerate() {
            if !open[i] {
                *slot = 0.0;
                continue;
            }
            let x = i % w;
            let y = i / w;
            let mut acc = 0.0;
            if x + 1 < w {
                acc += cur[i + 1];
            }
            if x > 0 {
                acc += cur[i - 1];
            }
            if y + 1 < h {
                acc += cur[i + w];
            }
            if y > 0 {
                acc += cur[i - w];
            }
            *slot = 0.25 * acc;
        }
        std::mem::swap(&mut cur, &mut next);
        if k >= 4 && k % 2 == 0 {
            weights.push(cur[local(root)]);
        }
    }
    weights
}

fn window_is_free(allowed: &BitGrid, root: Cell, lmax: u32) -> bool {
    let reach = (lmax / 2) as i32;
    if root.x - reach < 0
        || root.y - reach < 0
        || root.x + reach >= allowed.width() as i32
        || root.y + reach >= allowed.height() as i32
    {
        return false;
    }
    for y in (root.y - reach)..=(root.y + reach) {
        for x in (root.x - reach)..=(root.x + reach) {
            if !allowed.get(Cell::new(x, y)) {
                return false;
            }
        }
    }
    true
}

/// Exact per-root, per-length mass table of the restricted loop measure.
///
/// Roots whose reach window never touches the boundary share the free
/// lattice weights, which are computed once; boundary roots each get their
/// own windowed DP. The cost is `O(lmax^3)` per boundary root, so tables
/// are only practical for small `lmax` (sampling does not need them).
pub fn loop_measure_table(domain: &LatticeDomain, lmax: u32) -> Result<MassTable, SoupError> {
    validate_lmax(lmax)?;
    let n_lengths = (lmax as usize - 2) / 2;
    let n_sites = domain.width as usize * domain.height as usize;

    // Free weights from an untouched window with the root at its center.
    let side = lmax + 1;
    let free_allowed = BitGrid::full(side, side);
    let center = Cell::new((lmax / 2) as i32, (lmax / 2) as i32);
    let free_weights = return_weights(&free_allowed, center, lmax);

    let mut masses = vec![Vec::new(); n_sites];
    let mut total = 0.0;
    for y in 0..domain.height as i32 {
        for x in 0..domain.width as i32 {
            let root = Cell::new(x, y);
            let site = y as usize * domain.width as usize + x as usize;
            if !domain.contains(root) {
                masses[site] = vec![0.0; n_lengths];
                continue;
            }
            let weights = if window_is_free(&domain.allowed, root, lmax) {
                free_weights.clone()
            } else {
                return_weights(&domain.allowed, root, lmax)
            };
            let row: Vec<f64> = weights
                .iter()
                .enumerate()
                .map(|(i, &g)| g / (4 + 2 * i) as f64)
                .collect();
            total += row.iter().sum::<f64>();
            masses[site] = row;
        }
    }
    Ok(MassTable {
        width: domain.width,
        lmax,
        masses,
        total,
    })
}

/// Free-lattice rooted loop measure truncated at `lmax`: per-length masses
/// `binom(n, n/2)^2 4^(-n) / n` for even `n in [4, lmax]`.
#[derive(Debug, Clone)]
pub struct FreeLoopMeasure {
    lmax: u32,
    cumulative: Vec<f64>,
    total: f64,
}

impl FreeLoopMeasure {
    pub fn new(lmax: u32) -> Result<Self, SoupError> {
        validate_lmax(lmax)?;
        // q_m = binom(2m, m) / 4^m via the ratio recurrence, overflow-free.
        let mut q = 0.5f64;
        let mut cumulative = Vec::with_capacity((lmax as usize - 2) / 2);
        let mut acc = 0.0f64;
        for m in 2..=(lmax / 2) as u64 {
            q *= (2 * m - 1) as f64 / (2 * m) as f64;
            acc += q * q / (2 * m) as f64;
            cumulative.push(acc);
        }
        Ok(FreeLoopMeasure {
            lmax,
            cumulative,
            total: acc,
        })
    }

    /// Shared table per `lmax`; the nesting recursion samples thousands of
    /// sub-domain soups and must not rebuild the cumulative masses each
    /// time.
    pub fn shared(lmax: u32) -> Result<std::sync::Arc<Self>, SoupError> {
        use std::collections::HashMap;
        use std::sync::{Arc, Mutex, OnceLock};
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<FreeLoopMeasure>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("measure cache lock");
        if let Some(m) = guard.get(&lmax) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(FreeLoopMeasure::new(lmax)?);
        guard.insert(lmax, Arc::clone(&m));
        Ok(m)
    }

    pub fn total_per_site(&self) -> f64 {
        self.total
    }

    /// Draw a loop length proportional to the per-length masses.
    fn sample_length<R: Rng>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen::<f64>() * self.total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        4 + 2 * idx.min(self.cumulative.len() - 1) as u32
    }

    /// Upper bound for the per-site mass dropped by the truncation,
    /// from the free return asymptotics `binom(2m,m)^2 4^(-2m) ~ 1/(pi m)`.
    pub fn truncated_mass_per_site(&self) -> f64 {
        1.0 / (std::f64::consts::PI * self.lmax as f64)
    }
}

/// A sampled loop soup: the realization together with everything needed to
/// regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSoupSample {
    pub params: KappaParams,
    pub domain: LatticeDomain,
    pub seed: u64,
    pub lmax: u32,
    pub loops: Vec<LatticeLoop>,
}

/// Uniform closed walk of length `n` from `root`, thinned by containment:
/// returns `None` as soon as the walk leaves the allowed set.
///
/// In the rotated frame `u = x + y`, `v = x - y` each lattice step moves
/// both `u` and `v` by +/-1 independently, so a uniform closed walk is a
/// pair of independent uniform +/-1 bridges, sampled here without
/// replacement from the remaining sign counts.
fn sample_contained_walk<R: Rng>(
    allowed: &BitGrid,
    root: Cell,
    n: u32,
    rng: &mut R,
) -> Option<LatticeLoop> {
    let mut u_plus = n / 2;
    let mut v_plus = n / 2;
    let mut pos = root;
    let mut steps = Vec::with_capacity(n as usize);
    for t in (1..=n).rev() {
        let su = rng.gen_range(0..t) < u_plus;
        let sv = rng.gen_range(0..t) < v_plus;
        if su {
            u_plus -= 1;
        }
        if sv {
            v_plus -= 1;
        }
        let step = match (su, sv) {
            (true, true) => Step::East,
            (true, false) => Step::North,
            (false, false) => Step::West,
            (false, true) => Step::South,
        };
        let (dx, dy) = step.offset();
        pos = pos.translate(dx, dy);
        if !allowed.get(pos) {
            return None;
        }
        steps.push(step);
    }
    debug_assert_eq!(pos, root);
    Some(LatticeLoop { root, steps })
}

/// Sample a loop soup of intensity `c(kappa)` on `domain`, truncated at
/// `lmax`, reproducible bit-exactly from `(params, domain, lmax, seed)`.
///
/// Per allowed site the loop count is Poisson with the site's restricted
/// mass (free mass times the containment indicator under thinning), and
/// each loop is uniform among the closed walks of its length that stay in
/// the allowed set. Sites and loops use independent substreams, so the
/// result does not depend on traversal or scheduling order.
pub fn sample_loop_soup(
    params: &KappaParams,
    domain: &LatticeDomain,
    lmax: u32,
    seed: u64,
) -> Result<LoopSoupSample, SoupError> {
    let measure = FreeLoopMeasure::shared(lmax)?;
    let loops = sample_soup_loops(params, domain, &measure, seed);
    Ok(LoopSoupSample {
        params: *params,
        domain: domain.clone(),
        seed,
        lmax,
        loops: loops.collect(),
    })
}

/// Iterator form of the sampler so that callers scanning huge windows can
/// consume loops without holding intermediate vectors.
pub(crate) fn sample_soup_loops<'a>(
    params: &KappaParams,
    domain: &'a LatticeDomain,
    measure: &'a FreeLoopMeasure,
    seed: u64,
) -> impl Iterator<Item = LatticeLoop> + 'a {
    let lambda = params.central_charge * measure.total_per_site();
    let poisson = Poisson::new(lambda).expect("positive free mass");
    let width = domain.width as usize;
    (0..width * domain.height as usize).flat_map(move |site| {
        let root = Cell::new((site % width) as i32, (site / width) as i32);
        let mut out = Vec::new();
        if domain.contains(root) {
            let mut site_rng = substream(seed, &[tag::SOUP_SITE, site as u64]);
            let count = poisson.sample(&mut site_rng) as u64;
            for k in 0..count {
                let mut loop_rng = substream(seed, &[tag::SOUP_LOOP, site as u64, k]);
                let n = measure.sample_length(&mut loop_rng);
                if let Some(walk) = sample_contained_walk(&domain.allowed, root, n, &mut loop_rng)
                {
                    out.push(walk);
                }
            }
        }
        out
    })
}

/// Expected number of loops lost to the length truncation, reported in run
/// manifests.
pub fn truncated_mass_bound(params: &KappaParams, domain: &LatticeDomain, lmax: u32) -> f64 {
    params.central_charge
        * domain.site_count() as f64
        * (1.0 / (std::f64::consts::PI * lmax as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive DFS over closed `n`-walks rooted at `root` inside
    /// `allowed`; the independent oracle for the DP table.
    pub fn enumerate_closed_walks(allowed: &BitGrid, root: Cell, n: u32) -> Vec<Vec<Step>> {
        let mut out = Vec::new();
        let mut steps = Vec::with_capacity(n as usize);
        fn rec(
            allowed: &BitGrid,
            root: Cell,
            pos: Cell,
            remaining: u32,
            steps: &mut Vec<Step>,
            out: &mut Vec<Vec<Step>>,
        ) {
            if remaining == 0 {
                if pos == root {
                    out.push(steps.clone());
                }
                return;
            }
            let dist = (pos.x - root.x).abs() + (pos.y - root.y).abs();
            if dist > remaining as i32 {
                return;
            }
            for step in [Step::East, Step::North, Step::West, Step::South] {
                let (dx, dy) = step.offset();
                let next = pos.translate(dx, dy);
                if allowed.get(next) {
                    steps.push(step);
                    rec(allowed, root, next, remaining - 1, steps, out);
                    steps.pop();
                }
            }
        }
        if allowed.get(root) {
            rec(allowed, root, root, n, &mut steps, &mut out);
        }
        out
    }

    fn kappa3() -> KappaParams {
        KappaParams::new(3.0).unwrap()
    }

    #[test]
    fn one_by_one_domain_has_zero_mass() {
        let domain = LatticeDomain::rectangle(1, 1, 1.0).unwrap();
        let table = loop_measure_table(&domain, 8).unwrap();
        assert_eq!(table.total(), 0.0);
    }

    #[test]
    fn two_by_two_masses_match_enumeration() {
        let domain = LatticeDomain::rectangle(2, 2, 1.0).unwrap();
        let table = loop_measure_table(&domain, 4).unwrap();
        let mut total = 0.0;
        for y in 0..2 {
            for x in 0..2 {
                let root = Cell::new(x, y);
                let count = enumerate_closed_walks(&domain.allowed, root, 4).len() as f64;
                let expected = count * 4f64.powi(-4) / 4.0;
                let got = table.mass(root, 4);
                assert!(
                    (got - expected).abs() < 1e-15,
                    "root {root:?}: got {got}, enumeration gives {expected}"
                );
                total += expected;
            }
        }
        assert!((table.total() - total).abs() < 1e-15);
    }

    #[test]
    fn three_by_three_masses_match_enumeration() {
        let domain = LatticeDomain::rectangle(3, 3, 1.0).unwrap();
        let table = loop_measure_table(&domain, 6).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                let root = Cell::new(x, y);
                for n in [4u32, 6] {
                    let count = enumerate_closed_walks(&domain.allowed, root, n).len() as f64;
                    let expected = count * 4f64.powi(-(n as i32)) / n as f64;
                    assert!(
                        (table.mass(root, n) - expected).abs() < 1e-14,
                        "root {root:?} length {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn doubling_lmax_never_decreases_total() {
        let domain = LatticeDomain::rectangle(4, 3, 1.0).unwrap();
        let t8 = loop_measure_table(&domain, 8).unwrap();
        let t16 = loop_measure_table(&domain, 16).unwrap();
        assert!(t16.total() >= t8.total());
    }

    #[test]
    fn enlarging_allowed_set_never_decreases_entries() {
        let mut small = BitGrid::full(4, 4);
        small.set(Cell::new(1, 1), false);
        small.set(Cell::new(2, 3), false);
        let small_domain = LatticeDomain::new(1.0, small).unwrap();
        let big_domain = LatticeDomain::rectangle(4, 4, 1.0).unwrap();
        let ts = loop_measure_table(&small_domain, 8).unwrap();
        let tb = loop_measure_table(&big_domain, 8).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                for n in [4u32, 6, 8] {
                    let c = Cell::new(x, y);
                    assert!(tb.mass(c, n) >= ts.mass(c, n), "cell {c:?} length {n}");
                }
            }
        }
        assert!(tb.total() >= ts.total());
    }

    #[test]
    fn free_measure_matches_table_in_the_bulk() {
        // Center of a 17x17 grid at lmax = 8 never feels the boundary.
        let domain = LatticeDomain::rectangle(17, 17, 1.0).unwrap();
        let table = loop_measure_table(&domain, 8).unwrap();
        let free = FreeLoopMeasure::new(8).unwrap();
        let center = Cell::new(8, 8);
        let bulk: f64 = table.lengths().map(|n| table.mass(center, n)).sum();
        assert!((bulk - free.total_per_site()).abs() < 1e-14);
    }

    #[test]
    fn bad_lmax_rejected() {
        let domain = LatticeDomain::rectangle(3, 3, 1.0).unwrap();
        assert_eq!(
            loop_measure_table(&domain, 2).unwrap_err(),
            SoupError::BadLmax(2)
        );
        assert!(matches!(
            sample_loop_soup(&kappa3(), &domain, 7, 1),
            Err(SoupError::BadLmax(7))
        ));
    }

    #[test]
    fn sample_is_reproducible_and_contained() {
        let domain = LatticeDomain::rectangle(12, 12, 1.0).unwrap();
        let a = sample_loop_soup(&kappa3(), &domain, 16, 99).unwrap();
        let b = sample_loop_soup(&kappa3(), &domain, 16, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_loop_soup(&kappa3(), &domain, 16, 100).unwrap();
        assert_ne!(a, c);
        for lp in &a.loops {
            assert!(lp.is_closed_within(&domain.allowed));
            assert!(lp.len() >= 4 && lp.len() % 2 == 0);
        }
    }

    #[test]
    fn loops_in_two_by_two_are_length_four_closed_walks() {
        let domain = LatticeDomain::rectangle(2, 2, 1.0).unwrap();
        let params = kappa3();
        let mut seen = 0;
        for seed in 0..4000 {
            let sample = sample_loop_soup(&params, &domain, 4, seed).unwrap();
            for lp in &sample.loops {
                assert_eq!(lp.len(), 4);
                assert!(lp.is_closed_within(&domain.allowed));
                seen += 1;
            }
        }
        assert!(seen > 0, "no loops sampled across 4000 seeds");
    }

    #[test]
    fn mean_loop_count_tracks_restricted_total() {
        // 4x4 grid, lmax = 6: expected count = c * total restricted mass.
        let domain = LatticeDomain::rectangle(4, 4, 1.0).unwrap();
        let params = kappa3();
        let table = loop_measure_table(&domain, 6).unwrap();
        let expect = params.central_charge * table.total();
        let runs = 10_000u64;
        let mut total = 0u64;
        for seed in 0..runs {
            total += sample_loop_soup(&params, &domain, 6, seed).unwrap().loops.len() as u64;
        }
        let mean = total as f64 / runs as f64;
        let sigma = (expect / runs as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * sigma,
            "mean {mean} vs expected {expect} (sigma {sigma})"
        );
    }

    #[test]
    fn intensity_vanishes_toward_lower_kappa_limit() {
        let nearly_critical = KappaParams::new(8.0 / 3.0 + 1e-9).unwrap();
        assert!(nearly_critical.central_charge < 1e-8);
        let domain = LatticeDomain::rectangle(8, 8, 1.0).unwrap();
        let sample = sample_loop_soup(&nearly_critical, &domain, 8, 7).unwrap();
        assert!(sample.loops.is_empty());
    }
}

//! The epsilon-Minkowski first-passage-percolation metric on cell masks.
//!
//! The exact metric takes the infimum of the area of the epsilon
//! neighborhood over all paths between two mask cells. The fast surrogate
//! charges every path `delta^2 * (disk area + hops * per-step marginal)`,
//! which equals the true neighborhood area whenever only adjacent-step
//! disks overlap and over-counts otherwise; minimizing it reduces to an
//! unweighted shortest path. A branch-and-bound oracle realizes the exact
//! infimum on tiny instances so the surrogate's gap stays measurable.

use crate::carpet::{CarpetMask, NestedEnsemble};
use crate::geom::{BitGrid, Cell};
use crate::loop_soup::LatticeDomain;
use crate::params::KappaParams;
use crate::rng::{derive_seed, tag};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MfppError {
    #[error("epsilon must be positive, got {0}")]
    BadEps(f64),
    #[error("cell ({0}, {1}) is not in the mask")]
    NotInMask(i32, i32),
    #[error("exact oracle limited to {limit} cells, mask has {cells}")]
    InstanceTooLarge { cells: usize, limit: usize },
    #[error("sources must be a nonempty subset of the mask")]
    BadSources,
    #[error("annulus radii must satisfy 0 < r_in < r_out and fit in the window")]
    InvalidAnnulus,
    #[error("no such upsilon component: {0}")]
    NoSuchComponent(u32),
    #[error("window of {side} cells at spacing {delta} does not cover the unit ball")]
    WindowTooSmall { side: u32, delta: f64 },
    #[error("carpet construction failed: {0}")]
    Carpet(#[from] crate::carpet::CarpetError),
}

/// A distance value in plane-area units, or the distinguished marker for
/// cell pairs in different mask components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MfppValue {
    Finite(f64),
    Unreachable,
}

impl MfppValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            MfppValue::Finite(v) => Some(v),
            MfppValue::Unreachable => None,
        }
    }

    pub fn expect_finite(self) -> f64 {
        self.finite().expect("value is unreachable")
    }

    pub fn is_finite(self) -> bool {
        matches!(self, MfppValue::Finite(_))
    }
}

/// The rasterized epsilon disk: all integer offsets whose center distance
/// is at most `eps / delta` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDisk {
    pub radius_cells: i32,
    pub offsets: Vec<(i32, i32)>,
    pub area_cells: usize,
    /// Cells gained when the disk shifts by one unit step; identical for
    /// all four directions by symmetry.
    pub marginal_cells: usize,
}

impl DiscreteDisk {
    pub fn new(eps: f64, delta: f64) -> Result<Self, MfppError> {
        if !(eps > 0.0) || !(delta > 0.0) {
            return Err(MfppError::BadEps(eps));
        }
        let r = eps / delta;
        let radius_cells = r.round() as i32;
        let reach = r.floor() as i32;
        let mut offsets = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if (dx * dx + dy * dy) as f64 <= r * r {
                    offsets.push((dx, dy));
                }
            }
        }
        let marginal = |sx: i32, sy: i32| {
            offsets
                .iter()
                .filter(|&&(dx, dy)| {
                    let (mx, my) = (dx + sx, dy + sy);
                    (mx * mx + my * my) as f64 > r * r
                })
                .count()
        };
        let marginal_cells = marginal(1, 0);
        debug_assert!(
            [(0, 1), (-1, 0), (0, -1)]
                .iter()
                .all(|&(sx, sy)| marginal(sx, sy) == marginal_cells),
            "marginal differs across directions"
        );
        let area_cells = offsets.len();
        Ok(DiscreteDisk {
            radius_cells,
            offsets,
            area_cells,
            marginal_cells,
        })
    }

    /// Surrogate area of a path with this many hops.
    pub fn area_value(&self, hops: u64, delta: f64) -> f64 {
        delta * delta * (self.area_cells as f64 + hops as f64 * self.marginal_cells as f64)
    }
}

/// Plane area of the epsilon neighborhood of a cell set, counted over the
/// full plane grid (not restricted to any mask).
pub fn neighborhood_area(
    cells: impl IntoIterator<Item = Cell>,
    eps: f64,
    delta: f64,
) -> Result<f64, MfppError> {
    let disk = DiscreteDisk::new(eps, delta)?;
    let cells: Vec<Cell> = cells.into_iter().collect();
    if cells.is_empty() {
        return Ok(0.0);
    }
    let reach = disk.radius_cells + 1;
    let x0 = cells.iter().map(|c| c.x).min().unwrap() - reach;
    let y0 = cells.iter().map(|c| c.y).min().unwrap() - reach;
    let x1 = cells.iter().map(|c| c.x).max().unwrap() + reach + 1;
    let y1 = cells.iter().map(|c| c.y).max().unwrap() + reach + 1;
    let w = (x1 - x0) as usize;
    let mut covered = vec![false; w * (y1 - y0) as usize];
    let mut count = 0usize;
    for c in &cells {
        for &(dx, dy) in &disk.offsets {
            let idx = (c.y + dy - y0) as usize * w + (c.x + dx - x0) as usize;
            if !covered[idx] {
                covered[idx] = true;
                count += 1;
            }
        }
    }
    Ok(delta * delta * count as f64)
}

/// A realized shortest path and its surrogate area.
#[derive(Debug, Clone, PartialEq)]
pub struct PathWitness {
    /// Path cells from source to target, consecutive cells 4-adjacent.
    pub cells: Vec<Cell>,
    pub hops: u64,
    pub area: f64,
}

/// Hop counts from a source set over the mask, by multi-source BFS.
fn hop_field(mask: &BitGrid, sources: &[Cell]) -> Vec<u32> {
    let w = mask.width() as usize;
    let mut hops = vec![u32::MAX; w * mask.height() as usize];
    let mut queue = VecDeque::new();
    for &s in sources {
        let idx = s.y as usize * w + s.x as usize;
        if hops[idx] == u32::MAX {
            hops[idx] = 0;
            queue.push_back(s);
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = hops[c.y as usize * w + c.x as usize];
        for nb in c.neighbors() {
            if mask.get(nb) {
                let nidx = nb.y as usize * w + nb.x as usize;
                if hops[nidx] == u32::MAX {
                    hops[nidx] = d + 1;
                    queue.push_back(nb);
                }
            }
        }
    }
    hops
}

/// MFPP distance field from a source set: per-cell surrogate values over
/// the mask, with unreachable cells marked distinctly.
#[derive(Debug, Clone)]
pub struct EpsMetricField {
    pub eps: f64,
    pub delta: f64,
    pub disk: DiscreteDisk,
    pub mask: BitGrid,
    pub sources: Vec<Cell>,
    hops: Vec<u32>,
}

impl EpsMetricField {
    pub fn hops(&self, c: Cell) -> Option<u64> {
        if !self.mask.get(c) {
            return None;
        }
        match self.hops[c.y as usize * self.mask.width() as usize + c.x as usize] {
            u32::MAX => None,
            h => Some(h as u64),
        }
    }

    /// Area value at a cell; `None` for cells outside the mask or not
    /// connected to the sources.
    pub fn value(&self, c: Cell) -> Option<f64> {
        self.hops(c).map(|h| self.disk.area_value(h, self.delta))
    }

    pub fn min_over(&self, cells: impl IntoIterator<Item = Cell>) -> MfppValue {
        let best = cells
            .into_iter()
            .filter_map(|c| self.hops(c))
            .min();
        match best {
            Some(h) => MfppValue::Finite(self.disk.area_value(h, self.delta)),
            None => MfppValue::Unreachable,
        }
    }

    pub fn max_finite(&self) -> Option<(Cell, f64)> {
        let w = self.mask.width() as usize;
        let mut best: Option<(Cell, u32)> = None;
        for (idx, &h) in self.hops.iter().enumerate() {
            if h != u32::MAX {
                let c = Cell::new((idx % w) as i32, (idx / w) as i32);
                if best.map_or(true, |(_, bh)| h > bh) {
                    best = Some((c, h));
                }
            }
        }
        best.map(|(c, h)| (c, self.disk.area_value(h as u64, self.delta)))
    }

    pub fn reachable_count(&self) -> usize {
        self.hops.iter().filter(|&&h| h != u32::MAX).count()
    }

    /// The lexicographically-first shortest path from `from` down to the
    /// sources: at every cell the first direction in E, N, W, S order that
    /// decreases the hop count is taken.
    pub fn witness_from(&self, from: Cell) -> Option<PathWitness> {
        let mut h = self.hops(from)?;
        let total = h;
        let mut cells = vec![from];
        let mut cur = from;
        while h > 0 {
            let next = cur
                .neighbors()
                .into_iter()
                .find(|&nb| self.hops(nb) == Some(h - 1))
                .expect("BFS field has a descending neighbor");
            cells.push(next);
            cur = next;
            h -= 1;
        }
        Some(PathWitness {
            cells,
            hops: total,
            area: self.disk.area_value(total, self.delta),
        })
    }
}

/// Multi-source propagation of the surrogate metric over the mask.
pub fn distance_field(
    mask: &BitGrid,
    eps: f64,
    delta: f64,
    sources: &[Cell],
) -> Result<EpsMetricField, MfppError> {
    let disk = DiscreteDisk::new(eps, delta)?;
    if sources.is_empty() || sources.iter().any(|&s| !mask.get(s)) {
        return Err(MfppError::BadSources);
    }
    Ok(EpsMetricField {
        eps,
        delta,
        disk,
        mask: mask.clone(),
        sources: sources.to_vec(),
        hops: hop_field(mask, sources),
    })
}

/// Surrogate MFPP distance between two mask cells with its path witness.
///
/// The witness is the lexicographically-first shortest path from `x` to
/// `y` (direction priority East, North, West, South). For `x == y` the
/// value is the base disk area, matching the positive area of the epsilon
/// neighborhood of a single point.
pub fn mfpp_distance(
    mask: &BitGrid,
    eps: f64,
    delta: f64,
    x: Cell,
    y: Cell,
) -> Result<(MfppValue, Option<PathWitness>), MfppError> {
    for q in [x, y] {
        if !mask.get(q) {
            return Err(MfppError::NotInMask(q.x, q.y));
        }
    }
    // Field from the target: the greedy descent from x is then
    // lexicographically first in step order.
    let field = distance_field(mask, eps, delta, &[y])?;
    match field.witness_from(x) {
        Some(witness) => Ok((MfppValue::Finite(witness.area), Some(witness))),
        None => Ok((MfppValue::Unreachable, None)),
    }
}

/// Guard for the exhaustive oracle.
pub const EXACT_ORACLE_CELL_LIMIT: usize = 40;

/// Exact MFPP distance on a tiny mask: the minimum neighborhood area over
/// all simple 4-connected paths from `x` to `y`, by depth-first search
/// with branch-and-bound pruning (a partial path is cut as soon as its
/// covered area plus the uncovered remainder of the target's disk cannot
/// beat the best complete path).
pub fn mfpp_distance_exact(
    mask: &BitGrid,
    eps: f64,
    delta: f64,
    x: Cell,
    y: Cell,
) -> Result<MfppValue, MfppError> {
    let cells: Vec<Cell> = mask.iter_set().collect();
    if cells.len() > EXACT_ORACLE_CELL_LIMIT {
        return Err(MfppError::InstanceTooLarge {
            cells: cells.len(),
            limit: EXACT_ORACLE_CELL_LIMIT,
        });
    }
    for q in [x, y] {
        if !mask.get(q) {
            return Err(MfppError::NotInMask(q.x, q.y));
        }
    }
    let disk = DiscreteDisk::new(eps, delta)?;
    // Initial upper bound: the exact area of the surrogate witness path.
    let (surrogate, witness) = mfpp_distance(mask, eps, delta, x, y)?;
    let Some(witness) = witness else {
        debug_assert_eq!(surrogate, MfppValue::Unreachable);
        return Ok(MfppValue::Unreachable);
    };

    // Coverage counters over the inflated bounding box.
    let reach = disk.radius_cells + 1;
    let x0 = cells.iter().map(|c| c.x).min().unwrap() - reach;
    let y0 = cells.iter().map(|c| c.y).min().unwrap() - reach;
    let x1 = cells.iter().map(|c| c.x).max().unwrap() + reach + 1;
    let w = (x1 - x0) as usize;
    let h = (cells.iter().map(|c| c.y).max().unwrap() + reach + 1 - y0) as usize;

    struct Search<'a> {
        disk: &'a DiscreteDisk,
        mask: &'a BitGrid,
        cover: Vec<u16>,
        covered: usize,
        best: usize,
        target: Cell,
        w: usize,
        x0: i32,
        y0: i32,
    }

    impl Search<'_> {
        fn push(&mut self, c: Cell) {
            for &(dx, dy) in &self.disk.offsets {
                let idx = (c.y + dy - self.y0) as usize * self.w + (c.x + dx - self.x0) as usize;
                if self.cover[idx] == 0 {
                    self.covered += 1;
                }
                self.cover[idx] += 1;
            }
        }

        fn pop(&mut self, c: Cell) {
            for &(dx, dy) in &self.disk.offsets {
                let idx = (c.y + dy - self.y0) as usize * self.w + (c.x + dx - self.x0) as usize;
                self.cover[idx] -= 1;
                if self.cover[idx] == 0 {
                    self.covered -= 1;
                }
            }
        }

        fn target_shortfall(&self) -> usize {
            self.disk
                .offsets
                .iter()
                .filter(|&&(dx, dy)| {
                    let idx = (self.target.y + dy - self.y0) as usize * self.w
                        + (self.target.x + dx - self.x0) as usize;
                    self.cover[idx] == 0
                })
                .count()
        }

        fn dfs(&mut self, cur: Cell, visited: &mut std::collections::HashSet<Cell>) {
            if cur == self.target {
                self.best = self.best.min(self.covered);
                return;
            }
            if self.covered + self.target_shortfall() >= self.best {
                return;
            }
            for nb in cur.neighbors() {
                if self.mask.get(nb) && !visited.contains(&nb) {
                    visited.insert(nb);
                    self.push(nb);
                    self.dfs(nb, visited);
                    self.pop(nb);
                    visited.remove(&nb);
                }
            }
        }
    }

    let exact_area_of = |path: &[Cell], s: &mut Search| -> usize {
        for &c in path {
            s.push(c);
        }
        let a = s.covered;
        for &c in path {
            s.pop(c);
        }
        a
    };

    let mut search = Search {
        disk: &disk,
        mask,
        cover: vec![0; w * h],
        covered: 0,
        best: usize::MAX,
        target: y,
        w,
        x0,
        y0,
    };
    search.best = exact_area_of(&witness.cells, &mut search) + 1;
    let mut visited = std::collections::HashSet::new();
    visited.insert(x);
    search.push(x);
    search.dfs(x, &mut visited);
    Ok(MfppValue::Finite(delta * delta * search.best as f64))
}

const ALL_PAIRS_LIMIT: usize = 200;

/// Diameter of a connected cell set in the surrogate metric: exact
/// all-pairs maximum for sets of at most 200 cells, multi-start double
/// sweep from the boundary-extremal cells otherwise.
pub fn diameter_of_cells(cells: &BitGrid, eps: f64, delta: f64) -> Result<MfppValue, MfppError> {
    let disk = DiscreteDisk::new(eps, delta)?;
    let all: Vec<Cell> = cells.iter_set().collect();
    if all.is_empty() {
        return Ok(MfppValue::Unreachable);
    }
    let max_hops = if all.len() <= ALL_PAIRS_LIMIT {
        let mut best = 0u32;
        for &s in &all {
            let hops = hop_field(cells, &[s]);
            for &c in &all {
                let h = hops[c.y as usize * cells.width() as usize + c.x as usize];
                if h != u32::MAX {
                    best = best.max(h);
                }
            }
        }
        best
    } else {
        double_sweep_hops(cells, &all)
    };
    Ok(MfppValue::Finite(disk.area_value(max_hops as u64, delta)))
}

/// Cap on the number of sweep starts; beyond it the dead-end cells are
/// subsampled with a deterministic stride.
const MAX_SWEEP_STARTS: usize = 128;

/// Double sweep iterated to a fixed point from every boundary-extremal
/// seed: the four coordinate-extremal cells plus the dead-end cells (one
/// component neighbor), where hop-diameter endpoints of thin components
/// live. Each sweep restarts from the farthest cell the previous one found
/// until the estimate stops improving.
pub fn double_sweep_hops(cells: &BitGrid, all: &[Cell]) -> u32 {
    let w = cells.width() as usize;
    let farthest = |hops: &[u32]| -> (Cell, u32) {
        let mut best = (all[0], 0u32);
        for &c in all {
            let h = hops[c.y as usize * w + c.x as usize];
            if h != u32::MAX && h > best.1 {
                best = (c, h);
            }
        }
        best
    };
    let mut starts = vec![
        *all.iter().min_by_key(|c| (c.y, c.x)).unwrap(),
        *all.iter().max_by_key(|c| (c.y, c.x)).unwrap(),
        *all.iter().min_by_key(|c| (c.x, c.y)).unwrap(),
        *all.iter().max_by_key(|c| (c.x, c.y)).unwrap(),
        // Diagonal extremes; hop distance dominates L1 distance, so
        // diameter endpoints of blocky components sit at these corners.
        *all.iter().min_by_key(|c| (c.x + c.y, c.x)).unwrap(),
        *all.iter().max_by_key(|c| (c.x + c.y, c.x)).unwrap(),
        *all.iter().min_by_key(|c| (c.x - c.y, c.x)).unwrap(),
        *all.iter().max_by_key(|c| (c.x - c.y, c.x)).unwrap(),
    ];
    let tips: Vec<Cell> = all
        .iter()
        .copied()
        .filter(|c| c.neighbors().into_iter().filter(|&nb| cells.get(nb)).count() <= 1)
        .collect();
    let budget = MAX_SWEEP_STARTS.saturating_sub(starts.len());
    if tips.len() <= budget {
        starts.extend(tips);
    } else if budget > 0 {
        let stride = tips.len().div_ceil(budget);
        starts.extend(tips.into_iter().step_by(stride));
    }
    let mut best = 0u32;
    for mut seed in starts {
        loop {
            let (far, d) = farthest(&hop_field(cells, &[seed]));
            if d > best {
                best = d;
                seed = far;
            } else {
                break;
            }
        }
    }
    best
}

/// Diameter of an upsilon component of a carpet mask.
pub fn component_diameter(
    mask: &CarpetMask,
    eps: f64,
    component: u32,
) -> Result<MfppValue, MfppError> {
    let comps = mask.components();
    let cells = comps
        .get(component as usize)
        .ok_or(MfppError::NoSuchComponent(component))?;
    let mut grid = BitGrid::new(mask.width(), mask.height());
    for &c in cells {
        grid.set(c, true);
    }
    diameter_of_cells(&grid, eps, mask.delta)
}

/// Cells of the inclusive discrete circle of radius `r` (plane units)
/// around the center of `center`: cells inside the disk with a 4-neighbor
/// outside it.
pub fn circle_cells(center: Cell, r: f64, delta: f64) -> Vec<Cell> {
    let rc = (r / delta).ceil() as i32 + 1;
    let inside = |c: Cell| c.center_distance(center) * delta <= r;
    let mut out = Vec::new();
    for dy in -rc..=rc {
        for dx in -rc..=rc {
            let c = center.translate(dx, dy);
            if inside(c) && c.neighbors().into_iter().any(|nb| !inside(nb)) {
                out.push(c);
            }
        }
    }
    out
}

/// Minimum surrogate distance between the discrete circles of radii
/// `r_in` and `r_out` around `center`, through the mask. Returns the
/// infinity marker when the circles do not meet the mask or no crossing
/// exists.
pub fn annulus_crossing(
    mask: &BitGrid,
    eps: f64,
    delta: f64,
    center: Cell,
    r_in: f64,
    r_out: f64,
) -> Result<MfppValue, MfppError> {
    if !(r_in > 0.0) || !(r_out > r_in) {
        return Err(MfppError::InvalidAnnulus);
    }
    let (cx, cy) = (
        (center.x as f64 + 0.5) * delta,
        (center.y as f64 + 0.5) * delta,
    );
    let (w, h) = (mask.width() as f64 * delta, mask.height() as f64 * delta);
    if cx - r_out < 0.0 || cy - r_out < 0.0 || cx + r_out > w || cy + r_out > h {
        return Err(MfppError::InvalidAnnulus);
    }
    let disk = DiscreteDisk::new(eps, delta)?;
    let sources: Vec<Cell> = circle_cells(center, r_in, delta)
        .into_iter()
        .filter(|&c| mask.get(c))
        .collect();
    let targets: Vec<Cell> = circle_cells(center, r_out, delta)
        .into_iter()
        .filter(|&c| mask.get(c))
        .collect();
    if sources.is_empty() || targets.is_empty() {
        return Ok(MfppValue::Unreachable);
    }
    // Early-exit multi-source BFS; identical to the field minimum over the
    // outer circle.
    let w = mask.width() as usize;
    let mut target_mark = vec![false; w * mask.height() as usize];
    for &t in &targets {
        target_mark[t.y as usize * w + t.x as usize] = true;
    }
    let mut hops = vec![u32::MAX; w * mask.height() as usize];
    let mut queue = VecDeque::new();
    for &s in &sources {
        let idx = s.y as usize * w + s.x as usize;
        if hops[idx] == u32::MAX {
            hops[idx] = 0;
            queue.push_back(s);
            if target_mark[idx] {
                return Ok(MfppValue::Finite(disk.area_value(0, delta)));
            }
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = hops[c.y as usize * w + c.x as usize];
        for nb in c.neighbors() {
            if mask.get(nb) {
                let nidx = nb.y as usize * w + nb.x as usize;
                if hops[nidx] == u32::MAX {
                    hops[nidx] = d + 1;
                    if target_mark[nidx] {
                        return Ok(MfppValue::Finite(disk.area_value(d as u64 + 1, delta)));
                    }
                    queue.push_back(nb);
                }
            }
        }
    }
    Ok(MfppValue::Unreachable)
}

/// Window configuration for the renormalization estimate: a square grid of
/// `side` cells at spacing `delta`, centered on the origin cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaEpsWindow {
    pub side: u32,
    pub delta: f64,
    pub lmax: u32,
    pub depth_limit: u32,
}

/// Renormalization estimate: per-replica diameters and their median.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaEpsEstimate {
    /// Median diameter, or `None` when every replica was unqualified.
    pub median: Option<f64>,
    pub values: Vec<f64>,
    pub excluded_replicas: usize,
}

/// Median of an unordered sample (mean of the two middles for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// The largest loop of the ensemble contained in the radius-1 ball around
/// the window center and surrounding the center cell; ties break toward
/// the smaller id.
pub fn largest_loop_in_unit_ball(ensemble: &NestedEnsemble) -> Option<usize> {
    let delta = ensemble.domain.delta;
    let origin = Cell::new(
        ensemble.domain.width as i32 / 2,
        ensemble.domain.height as i32 / 2,
    );
    let origin_plane = (
        (origin.x as f64 + 0.5) * delta,
        (origin.y as f64 + 0.5) * delta,
    );
    ensemble
        .loops
        .iter()
        .filter(|l| {
            l.interior_contains(origin) && l.max_boundary_distance(origin_plane, delta) <= 1.0
        })
        .max_by(|a, b| {
            a.interior_area()
                .cmp(&b.interior_area())
                .then(b.id.cmp(&a.id))
        })
        .map(|l| l.id)
}

/// Carpet piece of one loop: its interior minus the interiors of its
/// children (parity plays no role here).
pub fn loop_piece_cells(ensemble: &NestedEnsemble, id: usize) -> BitGrid {
    let lp = &ensemble.loops[id];
    let mut grid = BitGrid::new(ensemble.domain.width, ensemble.domain.height);
    for c in lp.interior_cells() {
        grid.set(c, true);
    }
    for child in ensemble.children_of(id) {
        for c in child.interior_cells() {
            grid.set(c, false);
        }
    }
    grid
}

/// Largest 4-connected component of a cell set.
pub fn largest_component(cells: &BitGrid) -> BitGrid {
    let mut best = BitGrid::new(cells.width(), cells.height());
    let mut remaining = cells.clone();
    loop {
        let start = match remaining.iter_set().next() {
            Some(c) => c,
            None => break,
        };
        let comp = remaining.flood_from(start);
        if comp.count() > best.count() {
            best = comp.clone();
        }
        for c in comp.iter_set() {
            remaining.set(c, false);
        }
    }
    best
}

/// Median MFPP diameter of the carpet piece inside the largest loop
/// contained in the unit ball and surrounding the origin, over fresh
/// ensembles. Replicas without a qualifying loop are excluded and counted.
pub fn kappa_eps(
    params: &KappaParams,
    window: &KappaEpsWindow,
    eps: f64,
    n_samples: usize,
    master_seed: u64,
) -> Result<KappaEpsEstimate, MfppError> {
    if window.side as f64 * window.delta < 2.0 {
        return Err(MfppError::WindowTooSmall {
            side: window.side,
            delta: window.delta,
        });
    }
    let domain = LatticeDomain::rectangle(window.side, window.side, window.delta)
        .map_err(crate::carpet::CarpetError::Soup)?;
    let mut values = Vec::new();
    let mut excluded = 0usize;
    for replica in 0..n_samples {
        let seed = derive_seed(master_seed, &[tag::REPLICA, replica as u64]);
        let ensemble = nest_ensemble_for(params, &domain, window, seed)?;
        match largest_loop_in_unit_ball(&ensemble) {
            None => excluded += 1,
            Some(id) => {
                let piece = largest_component(&loop_piece_cells(&ensemble, id));
                match diameter_of_cells(&piece, eps, window.delta)? {
                    MfppValue::Finite(v) => values.push(v),
                    MfppValue::Unreachable => excluded += 1,
                }
            }
        }
    }
    Ok(KappaEpsEstimate {
        median: median(&values),
        values,
        excluded_replicas: excluded,
    })
}

fn nest_ensemble_for(
    params: &KappaParams,
    domain: &LatticeDomain,
    window: &KappaEpsWindow,
    seed: u64,
) -> Result<NestedEnsemble, MfppError> {
    Ok(crate::carpet::nest_ensemble(
        params,
        domain,
        window.lmax,
        window.depth_limit,
        seed,
    )?)
}

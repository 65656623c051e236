//! From loop soups to CLE loops and carpet masks.
//!
//! Loops of a soup are clustered by shared lattice sites; the outer
//! boundaries of the outermost clusters form the non-nested layer of CLE
//! loops. Nesting resamples a fresh soup inside each loop interior. The
//! carpet mask labels every cell with the innermost loop surrounding it,
//! from which the parity-0 union and its connected components are cut.

use crate::geom::{bounding_box, BitGrid, Cell, CellRect};
use crate::loop_soup::{sample_loop_soup, LatticeDomain, LoopSoupSample};
use crate::params::KappaParams;
use crate::rng::{derive_seed, substream, tag};
use rand::Rng;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CarpetError {
    #[error("query cell ({0}, {1}) is not an upsilon cell inside the window")]
    QueryOutsideUpsilonWindow(i32, i32),
    #[error("soup sampling failed: {0}")]
    Soup(#[from] crate::loop_soup::SoupError),
}

/// Disjoint-set forest over loop indices, path compression + union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    /// Returns false if the two were already in the same set.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (hi, lo) = if self.rank[ra as usize] >= self.rank[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo as usize] = hi;
        if self.rank[hi as usize] == self.rank[lo as usize] {
            self.rank[hi as usize] += 1;
        }
        true
    }
}

/// A maximal set of loops pairwise connected through shared sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopCluster {
    /// Indices into the sample's loop list, increasing.
    pub loops: Vec<usize>,
    /// Occupied sites, deduplicated, row-major order.
    pub sites: Vec<Cell>,
}

/// Union-find clustering: two loops belong to the same cluster iff they
/// share a lattice site (directly or through a chain).
pub fn cluster_loops(sample: &LoopSoupSample) -> Vec<LoopCluster> {
    let n = sample.loops.len();
    let mut uf = UnionFind::new(n);
    let w = sample.domain.width as usize;
    let mut owner: Vec<u32> = vec![u32::MAX; w * sample.domain.height as usize];
    for (i, lp) in sample.loops.iter().enumerate() {
        for site in lp.visited_cells() {
            let idx = site.y as usize * w + site.x as usize;
            if owner[idx] == u32::MAX {
                owner[idx] = i as u32;
            } else {
                uf.union(i as u32, owner[idx]);
            }
        }
    }
    // Group loops by representative, clusters ordered by their first loop.
    let mut rep_slot: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    let mut clusters: Vec<LoopCluster> = Vec::new();
    for i in 0..n {
        let rep = uf.find(i as u32);
        let slot = *rep_slot.entry(rep).or_insert_with(|| {
            clusters.push(LoopCluster {
                loops: Vec::new(),
                sites: Vec::new(),
            });
            clusters.len() - 1
        });
        clusters[slot].loops.push(i);
    }
    for cluster in &mut clusters {
        let mut sites: Vec<Cell> = cluster
            .loops
            .iter()
            .flat_map(|&i| sample.loops[i].visited_cells())
            .collect();
        sites.sort_by_key(|c| (c.y, c.x));
        sites.dedup();
        cluster.sites = sites;
    }
    clusters
}

/// A CLE loop: the traced outer boundary of a filled loop cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CleLoop {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: u32,
    pub parity: Option<u8>,
    /// Closed polygon on the dual grid (cell-corner coordinates); the first
    /// vertex is not repeated at the end.
    pub boundary: Vec<(i32, i32)>,
    bbox: CellRect,
    /// Interior cells, local to `bbox`. Boundary cells of the cluster count
    /// as inside.
    interior: BitGrid,
}

impl CleLoop {
    pub fn bbox(&self) -> CellRect {
        self.bbox
    }

    pub fn interior_area(&self) -> usize {
        self.interior.count()
    }

    pub fn interior_contains(&self, c: Cell) -> bool {
        self.bbox.contains(c)
            && self
                .interior
                .get(Cell::new(c.x - self.bbox.x0, c.y - self.bbox.y0))
    }

    pub fn interior_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.interior
            .iter_set()
            .map(|c| Cell::new(c.x + self.bbox.x0, c.y + self.bbox.y0))
    }

    /// Largest Euclidean distance (plane units) from `center` to a boundary
    /// vertex; a loop lies in the ball `B_r(center)` iff this is `<= r`.
    pub fn max_boundary_distance(&self, center: (f64, f64), delta: f64) -> f64 {
        self.boundary
            .iter()
            .map(|&(x, y)| {
                let dx = x as f64 * delta - center.0;
                let dy = y as f64 * delta - center.1;
                (dx * dx + dy * dy).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Construct a loop directly from its parts (ensemble deserialization).
    pub(crate) fn from_parts(
        id: usize,
        parent: Option<usize>,
        depth: u32,
        parity: Option<u8>,
        boundary: Vec<(i32, i32)>,
        bbox: CellRect,
        interior: BitGrid,
    ) -> Self {
        CleLoop {
            id,
            parent,
            depth,
            parity,
            boundary,
            bbox,
            interior,
        }
    }
}

/// Fill result of one cluster: occupied sites plus enclosed holes.
struct FilledCluster {
    bbox: CellRect,
    filled: BitGrid, // local to bbox
    area: usize,
    touches_boundary: bool,
}

fn fill_cluster(cluster: &LoopCluster, domain: &LatticeDomain) -> FilledCluster {
    let bbox = bounding_box(cluster.sites.iter()).expect("cluster has sites");
    let w = bbox.width() as u32;
    let h = bbox.height() as u32;
    let mut occupied = BitGrid::new(w, h);
    let mut touches = false;
    for site in &cluster.sites {
        occupied.set(Cell::new(site.x - bbox.x0, site.y - bbox.y0), true);
        for nb in site.neighbors() {
            if !domain.contains(nb) {
                touches = true;
            }
        }
    }
    // Flood the complement from a 1-cell margin ring; cells not reached are
    // enclosed holes.
    let (mw, mh) = (w + 2, h + 2);
    let mut outside = BitGrid::new(mw, mh);
    let mut queue = VecDeque::new();
    let start = Cell::new(0, 0);
    outside.set(start, true);
    queue.push_back(start);
    while let Some(c) = queue.pop_front() {
        for nb in c.neighbors() {
            if nb.x < 0 || nb.y < 0 || nb.x >= mw as i32 || nb.y >= mh as i32 {
                continue;
            }
            if outside.get(nb) || occupied.get(Cell::new(nb.x - 1, nb.y - 1)) {
                continue;
            }
            outside.set(nb, true);
            queue.push_back(nb);
        }
    }
    let mut filled = BitGrid::new(w, h);
    let mut area = 0;
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            if !outside.get(Cell::new(x + 1, y + 1)) {
                filled.set(Cell::new(x, y), true);
                area += 1;
            }
        }
    }
    FilledCluster {
        bbox,
        filled,
        area,
        touches_boundary: touches,
    }
}

/// Trace the outer boundary of a filled local cell set as a closed
/// dual-grid polygon with the set kept on the left (counterclockwise for y
/// pointing up). Vertices are emitted in global coordinates.
///
/// At a checkerboard pinch the walk turns left, hugging the current cell;
/// the polygon then passes the pinch vertex twice without crossing itself.
fn trace_outer_boundary(filled: &BitGrid, bbox: CellRect) -> Vec<(i32, i32)> {
    let cell = |x: i32, y: i32| filled.get(Cell::new(x, y));
    // Bottom-left most filled cell; its bottom edge is on the outer boundary.
    let (sx, sy) = (0..filled.height() as i32)
        .flat_map(|y| (0..filled.width() as i32).map(move |x| (x, y)))
        .find(|&(x, y)| cell(x, y))
        .expect("filled set nonempty");
    let start = (sx, sy);
    // Directions: 0 = East, 1 = North, 2 = West, 3 = South.
    let step = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    let mut vertices = Vec::new();
    let mut v = start;
    let mut dir = 0usize;
    loop {
        vertices.push((v.0 + bbox.x0, v.1 + bbox.y0));
        let (dx, dy) = step[dir];
        v = (v.0 + dx, v.1 + dy);
        // Cells ahead-left and ahead-right of the incoming direction at v.
        let (left, right) = match dir {
            0 => ((v.0, v.1), (v.0, v.1 - 1)),
            1 => ((v.0 - 1, v.1), (v.0, v.1)),
            2 => ((v.0 - 1, v.1 - 1), (v.0 - 1, v.1)),
            _ => ((v.0, v.1 - 1), (v.0 - 1, v.1 - 1)),
        };
        dir = if !cell(left.0, left.1) {
            (dir + 1) % 4 // turn left
        } else if cell(right.0, right.1) {
            (dir + 3) % 4 // turn right
        } else {
            dir
        };
        if v == start && dir == 0 {
            break;
        }
        assert!(
            vertices.len() <= 8 * (filled.count() + 2),
            "boundary trace did not close"
        );
    }
    vertices
}

/// Reconstruct the enclosed cell set of a closed dual-grid polygon by
/// even-odd scanline filling over its vertical edges.
pub(crate) fn fill_polygon(boundary: &[(i32, i32)], width: u32, height: u32) -> BitGrid {
    let mut crossings: std::collections::HashMap<i32, Vec<i32>> = std::collections::HashMap::new();
    let m = boundary.len();
    for i in 0..m {
        let (x0, y0) = boundary[i];
        let (x1, y1) = boundary[(i + 1) % m];
        if x0 == x1 && y0 != y1 {
            crossings.entry(y0.min(y1)).or_default().push(x0);
        }
    }
    let mut out = BitGrid::new(width, height);
    for (row, mut xs) in crossings {
        if row < 0 || row >= height as i32 {
            continue;
        }
        xs.sort_unstable();
        for pair in xs.chunks(2) {
            if pair.len() == 2 {
                for x in pair[0]..pair[1] {
                    if x >= 0 && x < width as i32 {
                        out.set(Cell::new(x, row), true);
                    }
                }
            }
        }
    }
    out
}

/// One extracted non-nested layer plus diagnostics.
#[derive(Debug, Clone)]
pub struct ExtractedLayer {
    pub loops: Vec<CleLoop>,
    /// Clusters dropped because a site was adjacent to a non-allowed cell;
    /// they correspond to loops not fully contained in the domain.
    pub discarded_boundary_clusters: usize,
}

/// Outer boundaries of the outermost clusters: fill each cluster, drop
/// clusters touching the domain boundary, drop clusters nested inside
/// another cluster's filled region, trace the survivors.
pub fn extract_cle_loops(clusters: &[LoopCluster], domain: &LatticeDomain) -> ExtractedLayer {
    let mut filled: Vec<FilledCluster> = Vec::new();
    let mut discarded = 0usize;
    for cluster in clusters {
        let f = fill_cluster(cluster, domain);
        if f.touches_boundary {
            discarded += 1;
        } else {
            filled.push(f);
        }
    }
    // Distinct clusters have disjoint-or-nested filled regions, so painting
    // larger regions first and probing one representative cell decides
    // nesting exactly.
    let mut order: Vec<usize> = (0..filled.len()).collect();
    order.sort_by_key(|&i| {
        let f = &filled[i];
        (std::cmp::Reverse(f.area), f.bbox.y0, f.bbox.x0)
    });
    let w = domain.width as usize;
    let mut owner: Vec<u32> = vec![u32::MAX; w * domain.height as usize];
    let mut outermost: Vec<usize> = Vec::new();
    for &i in &order {
        let f = &filled[i];
        let rep = f.filled.iter_set().next().expect("nonempty");
        let rep_global = (rep.y + f.bbox.y0) as usize * w + (rep.x + f.bbox.x0) as usize;
        if owner[rep_global] != u32::MAX {
            continue; // nested inside a larger cluster
        }
        for c in f.filled.iter_set() {
            owner[(c.y + f.bbox.y0) as usize * w + (c.x + f.bbox.x0) as usize] = i as u32;
        }
        outermost.push(i);
    }
    // Canonical id order: row-major position of the bounding box.
    outermost.sort_by_key(|&i| (filled[i].bbox.y0, filled[i].bbox.x0, filled[i].bbox.y1));
    let loops = outermost
        .into_iter()
        .enumerate()
        .map(|(id, i)| {
            let f = &filled[i];
            CleLoop {
                id,
                parent: None,
                depth: 0,
                parity: None,
                boundary: trace_outer_boundary(&f.filled, f.bbox),
                bbox: f.bbox,
                interior: f.filled.clone(),
            }
        })
        .collect();
    ExtractedLayer {
        loops,
        discarded_boundary_clusters: discarded,
    }
}

/// A nesting forest of CLE loops over a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedEnsemble {
    pub params: KappaParams,
    pub domain: LatticeDomain,
    pub seed: u64,
    pub lmax: u32,
    pub depth_limit: u32,
    /// Loops in creation order (parents always precede their children).
    pub loops: Vec<CleLoop>,
    pub discarded_boundary_clusters: usize,
}

impl NestedEnsemble {
    pub fn children_of(&self, id: usize) -> impl Iterator<Item = &CleLoop> {
        self.loops.iter().filter(move |l| l.parent == Some(id))
    }

    pub fn roots(&self) -> impl Iterator<Item = &CleLoop> {
        self.loops.iter().filter(|l| l.parent.is_none())
    }
}

/// Interiors smaller than this (in either direction) stop the nesting
/// recursion; below resolution, deeper structure is noise.
const MIN_NEST_SIDE: i32 = 4;

/// Build the nesting forest: extract the non-nested layer, then resample a
/// fresh soup inside each loop interior (with a seed derived from the loop
/// id) and recurse until `depth_limit`.
pub fn nest_ensemble(
    params: &KappaParams,
    domain: &LatticeDomain,
    lmax: u32,
    depth_limit: u32,
    seed: u64,
) -> Result<NestedEnsemble, CarpetError> {
    let root_soup =
        sample_loop_soup(params, domain, lmax, derive_seed(seed, &[tag::NEST_CHILD, 0]))?;
    let layer0 = extract_cle_loops(&cluster_loops(&root_soup), domain);
    let mut loops = layer0.loops;
    let mut discarded = layer0.discarded_boundary_clusters;
    let mut queue: VecDeque<usize> = (0..loops.len()).collect();
    while let Some(parent_id) = queue.pop_front() {
        let (depth, bbox) = (loops[parent_id].depth, loops[parent_id].bbox);
        if depth >= depth_limit || bbox.width() < MIN_NEST_SIDE || bbox.height() < MIN_NEST_SIDE {
            continue;
        }
        // Child domain: the interior as a local allowed mask, intersected
        // with the ambient allowed set.
        let mut allowed = BitGrid::new(bbox.width() as u32, bbox.height() as u32);
        let mut nonempty = false;
        for c in loops[parent_id].interior_cells() {
            if domain.contains(c) {
                allowed.set(Cell::new(c.x - bbox.x0, c.y - bbox.y0), true);
                nonempty = true;
            }
        }
        if !nonempty {
            continue;
        }
        let child_domain = LatticeDomain::new(domain.delta, allowed)?;
        let child_seed = derive_seed(seed, &[tag::NEST_CHILD, parent_id as u64 + 1]);
        let soup = sample_loop_soup(params, &child_domain, lmax, child_seed)?;
        let layer = extract_cle_loops(&cluster_loops(&soup), &child_domain);
        discarded += layer.discarded_boundary_clusters;
        for child in layer.loops {
            let id = loops.len();
            loops.push(CleLoop {
                id,
                parent: Some(parent_id),
                depth: depth + 1,
                parity: None,
                boundary: child
                    .boundary
                    .iter()
                    .map(|&(x, y)| (x + bbox.x0, y + bbox.y0))
                    .collect(),
                bbox: CellRect::new(
                    child.bbox.x0 + bbox.x0,
                    child.bbox.y0 + bbox.y0,
                    child.bbox.x1 + bbox.x0,
                    child.bbox.y1 + bbox.y0,
                ),
                interior: child.interior,
            });
            queue.push_back(id);
        }
    }
    Ok(NestedEnsemble {
        params: *params,
        domain: domain.clone(),
        seed,
        lmax,
        depth_limit,
        loops,
        discarded_boundary_clusters: discarded,
    })
}

/// Assign parities: every root gets `coin`, every child the flip of its
/// parent, so parities alternate along any nesting chain.
pub fn mark_parity(ensemble: &mut NestedEnsemble, coin: u8) {
    let parents: Vec<Option<usize>> = ensemble.loops.iter().map(|l| l.parent).collect();
    for i in 0..ensemble.loops.len() {
        let parity = match parents[i] {
            None => coin & 1,
            Some(p) => 1 - ensemble.loops[p].parity.expect("parents precede children"),
        };
        ensemble.loops[i].parity = Some(parity);
    }
}

/// Sample the uniform parity coin from the ensemble seed.
pub fn parity_coin(seed: u64) -> u8 {
    (substream(seed, &[tag::PARITY_COIN]).gen::<u64>() & 1) as u8
}

/// Per-cell labels of a carpet mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLabel {
    /// Cell belongs to the carpet piece of this loop: it is inside the loop
    /// and inside none of the loop's children.
    Piece(usize),
    /// Allowed cell surrounded by no loop.
    OuterCarpet,
    NotInDomain,
}

const LABEL_OUTER: u32 = u32::MAX;
const LABEL_NOT_IN_DOMAIN: u32 = u32::MAX - 1;
const NO_COMPONENT: u32 = u32::MAX;

/// Cell labeling derived from a parity-marked ensemble: the innermost
/// enclosing loop per cell, the parity-0 union `upsilon`, and its
/// 4-connected components.
#[derive(Debug, Clone)]
pub struct CarpetMask {
    pub delta: f64,
    width: u32,
    height: u32,
    labels: Vec<u32>,
    pub upsilon: BitGrid,
    comp_id: Vec<u32>,
    components: Vec<Vec<Cell>>,
}

impl CarpetMask {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn label(&self, c: Cell) -> CellLabel {
        if c.x < 0 || c.y < 0 || c.x >= self.width as i32 || c.y >= self.height as i32 {
            return CellLabel::NotInDomain;
        }
        match self.labels[c.y as usize * self.width as usize + c.x as usize] {
            LABEL_OUTER => CellLabel::OuterCarpet,
            LABEL_NOT_IN_DOMAIN => CellLabel::NotInDomain,
            id => CellLabel::Piece(id as usize),
        }
    }

    pub fn component_of(&self, c: Cell) -> Option<u32> {
        if !self.upsilon.get(c) {
            return None;
        }
        match self.comp_id[c.y as usize * self.width as usize + c.x as usize] {
            NO_COMPONENT => None,
            id => Some(id),
        }
    }

    /// Components of upsilon in discovery (row-major) order.
    pub fn components(&self) -> &[Vec<Cell>] {
        &self.components
    }

    /// Cells labeled with this loop's piece, scanned over `bbox`.
    pub fn piece_cells(&self, loop_id: usize, bbox: CellRect) -> BitGrid {
        let mut out = BitGrid::new(self.width, self.height);
        for y in bbox.y0.max(0)..bbox.y1.min(self.height as i32) {
            for x in bbox.x0.max(0)..bbox.x1.min(self.width as i32) {
                let c = Cell::new(x, y);
                if self.label(c) == CellLabel::Piece(loop_id) {
                    out.set(c, true);
                }
            }
        }
        out
    }

    /// Count of cells per label kind: (piece cells, outer carpet cells).
    pub fn label_counts(&self) -> (usize, usize) {
        let mut piece = 0;
        let mut outer = 0;
        for &l in &self.labels {
            match l {
                LABEL_OUTER => outer += 1,
                LABEL_NOT_IN_DOMAIN => {}
                _ => piece += 1,
            }
        }
        (piece, outer)
    }
}

/// Cut the carpet mask of a parity-marked ensemble.
///
/// Painting interiors in creation order (parents before children) leaves
/// every cell labeled by its innermost enclosing loop.
pub fn build_carpet_mask(ensemble: &NestedEnsemble) -> CarpetMask {
    let (w, h) = (ensemble.domain.width, ensemble.domain.height);
    let mut labels = vec![LABEL_NOT_IN_DOMAIN; w as usize * h as usize];
    for c in ensemble.domain.allowed.iter_set() {
        labels[c.y as usize * w as usize + c.x as usize] = LABEL_OUTER;
    }
    for lp in &ensemble.loops {
        for c in lp.interior_cells() {
            let idx = c.y as usize * w as usize + c.x as usize;
            if labels[idx] != LABEL_NOT_IN_DOMAIN {
                labels[idx] = lp.id as u32;
            }
        }
    }
    let mut upsilon = BitGrid::new(w, h);
    for (idx, &l) in labels.iter().enumerate() {
        if l != LABEL_OUTER
            && l != LABEL_NOT_IN_DOMAIN
            && ensemble.loops[l as usize].parity == Some(0)
        {
            upsilon.set(
                Cell::new((idx % w as usize) as i32, (idx / w as usize) as i32),
                true,
            );
        }
    }
    // 4-connected components of upsilon, discovered in row-major order.
    let mut comp_id = vec![NO_COMPONENT; w as usize * h as usize];
    let mut components: Vec<Vec<Cell>> = Vec::new();
    for start in upsilon.iter_set() {
        let sidx = start.y as usize * w as usize + start.x as usize;
        if comp_id[sidx] != NO_COMPONENT {
            continue;
        }
        let id = components.len() as u32;
        let mut cells = Vec::new();
        let mut queue = VecDeque::new();
        comp_id[sidx] = id;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            for nb in c.neighbors() {
                if upsilon.get(nb) {
                    let nidx = nb.y as usize * w as usize + nb.x as usize;
                    if comp_id[nidx] == NO_COMPONENT {
                        comp_id[nidx] = id;
                        queue.push_back(nb);
                    }
                }
            }
        }
        components.push(cells);
    }
    CarpetMask {
        delta: ensemble.domain.delta,
        width: w,
        height: h,
        labels,
        upsilon,
        comp_id,
        components,
    }
}

/// Whether `x` and `y` are joined by a 4-connected path of upsilon cells
/// inside `window`. Precondition violations (either endpoint not an upsilon
/// cell in the window) are reported distinctly from "not connected".
pub fn connected(
    mask: &CarpetMask,
    window: CellRect,
    x: Cell,
    y: Cell,
) -> Result<bool, CarpetError> {
    for q in [x, y] {
        if !window.contains(q) || !mask.upsilon.get(q) {
            return Err(CarpetError::QueryOutsideUpsilonWindow(q.x, q.y));
        }
    }
    if x == y {
        return Ok(true);
    }
    let mut seen = std::collections::HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(x);
    queue.push_back(x);
    while let Some(c) = queue.pop_front() {
        for nb in c.neighbors() {
            if nb == y {
                return Ok(true);
            }
            if window.contains(nb) && mask.upsilon.get(nb) && seen.insert(nb) {
                queue.push_back(nb);
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loop_soup::{LatticeLoop, Step};

    fn kappa3() -> KappaParams {
        KappaParams::new(3.0).unwrap()
    }

    /// A loop tracing the edge cells of the square `[x0, x0+side) x
    /// [y0, y0+side)` counterclockwise.
    fn square_ring_loop(x0: i32, y0: i32, side: i32) -> LatticeLoop {
        let k = (side - 1) as usize;
        let mut steps = Vec::new();
        steps.extend(std::iter::repeat(Step::East).take(k));
        steps.extend(std::iter::repeat(Step::North).take(k));
        steps.extend(std::iter::repeat(Step::West).take(k));
        steps.extend(std::iter::repeat(Step::South).take(k));
        LatticeLoop {
            root: Cell::new(x0, y0),
            steps,
        }
    }

    fn sample_with_loops(domain: &LatticeDomain, loops: Vec<LatticeLoop>) -> LoopSoupSample {
        LoopSoupSample {
            params: kappa3(),
            domain: domain.clone(),
            seed: 0,
            lmax: 64,
            loops,
        }
    }

    /// O(n^2) clustering oracle: pairwise site-sharing graph components.
    fn cluster_oracle(sample: &LoopSoupSample) -> Vec<Vec<usize>> {
        let n = sample.loops.len();
        let sets: Vec<std::collections::HashSet<Cell>> = sample
            .loops
            .iter()
            .map(|l| l.visited_cells().into_iter().collect())
            .collect();
        let mut uf = UnionFind::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if sets[i].iter().any(|c| sets[j].contains(c)) {
                    uf.union(i as u32, j as u32);
                }
            }
        }
        let mut groups: std::collections::HashMap<u32, Vec<usize>> = Default::default();
        for i in 0..n {
            groups.entry(uf.find(i as u32)).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort();
        out
    }

    #[test]
    fn disjoint_loops_make_singleton_clusters() {
        let domain = LatticeDomain::rectangle(16, 16, 1.0).unwrap();
        let sample = sample_with_loops(
            &domain,
            vec![square_ring_loop(1, 1, 3), square_ring_loop(8, 8, 3)],
        );
        let clusters = cluster_loops(&sample);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].loops, vec![0]);
        assert_eq!(clusters[1].loops, vec![1]);
    }

    #[test]
    fn loops_sharing_one_site_are_one_cluster() {
        let domain = LatticeDomain::rectangle(16, 16, 1.0).unwrap();
        // The second ring's bottom-left corner (4, 4) is the first ring's
        // top-right corner.
        let sample = sample_with_loops(
            &domain,
            vec![square_ring_loop(2, 2, 3), square_ring_loop(4, 4, 3)],
        );
        let clusters = cluster_loops(&sample);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].loops, vec![0, 1]);
    }

    #[test]
    fn clustering_agrees_with_quadratic_oracle() {
        let domain = LatticeDomain::rectangle(64, 64, 1.0).unwrap();
        let sample = sample_loop_soup(&kappa3(), &domain, 256, 2024).unwrap();
        assert!(sample.loops.len() > 10, "want a nontrivial sample");
        let mut got: Vec<Vec<usize>> = cluster_loops(&sample)
            .into_iter()
            .map(|c| c.loops)
            .collect();
        got.sort();
        assert_eq!(got, cluster_oracle(&sample));
    }

    #[test]
    fn single_square_ring_interior_is_enclosed_square() {
        let domain = LatticeDomain::rectangle(16, 16, 1.0).unwrap();
        let sample = sample_with_loops(&domain, vec![square_ring_loop(2, 2, 5)]);
        let layer = extract_cle_loops(&cluster_loops(&sample), &domain);
        assert_eq!(layer.loops.len(), 1);
        assert_eq!(layer.discarded_boundary_clusters, 0);
        let lp = &layer.loops[0];
        assert_eq!(lp.interior_area(), 25);
        for y in 2..7 {
            for x in 2..7 {
                assert!(lp.interior_contains(Cell::new(x, y)));
            }
        }
        assert!(!lp.interior_contains(Cell::new(1, 2)));
        assert!(!lp.interior_contains(Cell::new(7, 7)));
        // The outline of a 5x5 square: 4 sides of 5 unit edges.
        assert_eq!(lp.boundary.len(), 20);
    }

    #[test]
    fn nested_cluster_is_dropped_by_outermost_filter() {
        let domain = LatticeDomain::rectangle(16, 16, 1.0).unwrap();
        let sample = sample_with_loops(
            &domain,
            vec![square_ring_loop(2, 2, 7), square_ring_loop(4, 4, 3)],
        );
        let layer = extract_cle_loops(&cluster_loops(&sample), &domain);
        assert_eq!(layer.loops.len(), 1);
        assert_eq!(layer.loops[0].interior_area(), 49);
    }

    #[test]
    fn boundary_touching_cluster_is_discarded_and_counted() {
        let domain = LatticeDomain::rectangle(8, 8, 1.0).unwrap();
        let sample = sample_with_loops(&domain, vec![square_ring_loop(0, 0, 3)]);
        let layer = extract_cle_loops(&cluster_loops(&sample), &domain);
        assert!(layer.loops.is_empty());
        assert_eq!(layer.discarded_boundary_clusters, 1);
    }

    #[test]
    fn extracted_interiors_are_pairwise_disjoint() {
        let domain = LatticeDomain::rectangle(48, 48, 1.0).unwrap();
        let sample = sample_loop_soup(&kappa3(), &domain, 128, 77).unwrap();
        let layer = extract_cle_loops(&cluster_loops(&sample), &domain);
        for a in &layer.loops {
            for b in &layer.loops {
                if a.id != b.id {
                    let rep = a.interior_cells().next().unwrap();
                    assert!(!b.interior_contains(rep), "loop {} inside {}", a.id, b.id);
                }
            }
        }
    }

    #[test]
    fn extraction_interiors_match_polygon_refill_oracle() {
        let domain = LatticeDomain::rectangle(64, 64, 1.0).unwrap();
        let sample = sample_loop_soup(&kappa3(), &domain, 256, 4242).unwrap();
        let layer = extract_cle_loops(&cluster_loops(&sample), &domain);
        assert!(!layer.loops.is_empty());
        for lp in &layer.loops {
            let refill = fill_polygon(&lp.boundary, domain.width, domain.height);
            let mut expect = BitGrid::new(domain.width, domain.height);
            for c in lp.interior_cells() {
                expect.set(c, true);
            }
            assert_eq!(refill, expect, "loop {}", lp.id);
        }
    }

    #[test]
    fn pinch_configuration_traces_and_refills_exactly() {
        // A walk whose occupied set touches itself diagonally at the vertex
        // (3,3) (cells (2,2) and (3,3) filled, (3,2) and (2,3) empty around
        // it) and encloses the hole (3,2); the trace passes the pinch
        // vertex twice.
        let domain = LatticeDomain::rectangle(8, 8, 1.0).unwrap();
        let steps: Vec<Step> = "SEENNWESSWWN"
            .chars()
            .map(|c| Step::from_char(c).unwrap())
            .collect();
        let lp = LatticeLoop {
            root: Cell::new(2, 2),
            steps,
        };
        assert!(lp.is_closed_within(&domain.allowed));
        let sample = sample_with_loops(&domain, vec![lp]);
        let layer = extract_cle_loops(&cluster_loops(&sample), &domain);
        assert_eq!(layer.loops.len(), 1);
        let lp = &layer.loops[0];
        let refill = fill_polygon(&lp.boundary, domain.width, domain.height);
        let mut expect = BitGrid::new(domain.width, domain.height);
        for c in lp.interior_cells() {
            expect.set(c, true);
        }
        assert_eq!(refill, expect);
    }

    #[test]
    fn nesting_depth_zero_gives_non_nested_layer_only() {
        let domain = LatticeDomain::rectangle(48, 48, 1.0).unwrap();
        let ens = nest_ensemble(&kappa3(), &domain, 128, 0, 5).unwrap();
        assert!(ens.loops.iter().all(|l| l.depth == 0));
    }

    #[test]
    fn child_interiors_are_strictly_inside_parents() {
        let domain = LatticeDomain::rectangle(96, 96, 1.0).unwrap();
        let ens = nest_ensemble(&kappa3(), &domain, 1024, 2, 11).unwrap();
        let mut seen_child = false;
        for lp in &ens.loops {
            if let Some(p) = lp.parent {
                seen_child = true;
                let parent = &ens.loops[p];
                assert_eq!(lp.depth, parent.depth + 1);
                for c in lp.interior_cells() {
                    assert!(parent.interior_contains(c));
                }
                assert!(lp.interior_area() < parent.interior_area());
            }
        }
        assert!(seen_child, "expected at least one nested loop");
    }

    #[test]
    fn nested_layer_statistics_match_fresh_runs_on_fixed_interior() {
        // Fix one parent interior, then compare child-layer loop counts
        // produced through the nesting path against fresh soups sampled
        // directly on that interior with unrelated seeds.
        let domain = LatticeDomain::rectangle(96, 96, 1.0).unwrap();
        let ens = nest_ensemble(&kappa3(), &domain, 1024, 1, 19).unwrap();
        let parent = ens
            .loops
            .iter()
            .filter(|l| l.depth == 0)
            .max_by_key(|l| l.interior_area())
            .expect("have a depth-0 loop");
        let mut allowed = BitGrid::new(parent.bbox().width() as u32, parent.bbox().height() as u32);
        for c in parent.interior_cells() {
            allowed.set(Cell::new(c.x - parent.bbox().x0, c.y - parent.bbox().y0), true);
        }
        let interior = LatticeDomain::new(1.0, allowed).unwrap();
        let runs = 400;
        let count_layer = |seed: u64| {
            let soup = sample_loop_soup(&kappa3(), &interior, 1024, seed).unwrap();
            extract_cle_loops(&cluster_loops(&soup), &interior).loops.len() as f64
        };
        let via_nest: Vec<f64> = (0..runs)
            .map(|r| count_layer(derive_seed(1234, &[tag::NEST_CHILD, r])))
            .collect();
        let fresh: Vec<f64> = (0..runs).map(|r| count_layer(999_000 + r as u64)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&via_nest), mean(&fresh));
        let pooled = ((var(&via_nest, ma) + var(&fresh, mb)) / runs as f64).sqrt();
        assert!(
            (ma - mb).abs() <= 4.0 * pooled.max(1e-9),
            "two-sample loop-count means differ: {ma} vs {mb} (se {pooled})"
        );
    }

    #[test]
    fn parity_alternates_and_coin_flip_inverts() {
        let domain = LatticeDomain::rectangle(96, 96, 1.0).unwrap();
        let mut ens = nest_ensemble(&kappa3(), &domain, 1024, 2, 11).unwrap();
        let mut flipped = ens.clone();
        mark_parity(&mut ens, 0);
        mark_parity(&mut flipped, 1);
        for (a, b) in ens.loops.iter().zip(&flipped.loops) {
            assert_eq!(a.parity.unwrap(), 1 - b.parity.unwrap());
            if let Some(p) = a.parent {
                assert_ne!(a.parity.unwrap(), ens.loops[p].parity.unwrap());
            } else {
                assert_eq!(a.parity, Some(0));
            }
        }
    }

    #[test]
    fn carpet_mask_partitions_allowed_cells() {
        let domain = LatticeDomain::rectangle(96, 96, 1.0).unwrap();
        let mut ens = nest_ensemble(&kappa3(), &domain, 1024, 2, 13).unwrap();
        mark_parity(&mut ens, 0);
        let mask = build_carpet_mask(&ens);
        let (piece, outer) = mask.label_counts();
        assert_eq!(piece + outer, domain.site_count());
        // Direct recount oracle: the innermost-enclosing-loop rule holds
        // cell by cell.
        for y in 0..96 {
            for x in 0..96 {
                let c = Cell::new(x, y);
                let enclosing: Vec<&CleLoop> = ens
                    .loops
                    .iter()
                    .filter(|l| l.interior_contains(c))
                    .collect();
                match mask.label(c) {
                    CellLabel::OuterCarpet => assert!(enclosing.is_empty()),
                    CellLabel::Piece(id) => {
                        let innermost = enclosing
                            .iter()
                            .max_by_key(|l| l.depth)
                            .expect("piece label implies an enclosing loop");
                        assert_eq!(innermost.id, id);
                    }
                    CellLabel::NotInDomain => panic!("rectangle domain"),
                }
            }
        }
    }

    #[test]
    fn empty_ensemble_has_empty_upsilon() {
        let domain = LatticeDomain::rectangle(8, 8, 1.0).unwrap();
        let mut ens = NestedEnsemble {
            params: kappa3(),
            domain: domain.clone(),
            seed: 0,
            lmax: 8,
            depth_limit: 0,
            loops: Vec::new(),
            discarded_boundary_clusters: 0,
        };
        mark_parity(&mut ens, 0);
        let mask = build_carpet_mask(&ens);
        assert!(mask.upsilon.is_empty());
        assert_eq!(mask.label(Cell::new(3, 3)), CellLabel::OuterCarpet);
    }

    #[test]
    fn single_parity_zero_loop_piece_is_full_interior() {
        let domain = LatticeDomain::rectangle(16, 16, 1.0).unwrap();
        let sample = sample_with_loops(&domain, vec![square_ring_loop(3, 3, 5)]);
        let layer = extract_cle_loops(&cluster_loops(&sample), &domain);
        let mut ens = NestedEnsemble {
            params: kappa3(),
            domain: domain.clone(),
            seed: 0,
            lmax: 64,
            depth_limit: 0,
            loops: layer.loops,
            discarded_boundary_clusters: 0,
        };
        mark_parity(&mut ens, 0);
        let mask = build_carpet_mask(&ens);
        assert_eq!(mask.upsilon.count(), 25);
        assert_eq!(mask.components().len(), 1);
    }

    #[test]
    fn upsilon_and_complement_partition_piece_cells() {
        let domain = LatticeDomain::rectangle(96, 96, 1.0).unwrap();
        let mut a = nest_ensemble(&kappa3(), &domain, 1024, 2, 17).unwrap();
        let mut b = a.clone();
        mark_parity(&mut a, 0);
        mark_parity(&mut b, 1);
        let ma = build_carpet_mask(&a);
        let mb = build_carpet_mask(&b);
        let (piece, _) = ma.label_counts();
        // Disjoint within loop interiors; together they cover every piece cell.
        assert_eq!(ma.upsilon.count() + mb.upsilon.count(), piece);
        for c in ma.upsilon.iter_set() {
            assert!(!mb.upsilon.get(c));
        }
    }

    #[test]
    fn connected_matches_flood_oracle() {
        let domain = LatticeDomain::rectangle(64, 64, 1.0).unwrap();
        let mut ens = nest_ensemble(&kappa3(), &domain, 512, 1, 23).unwrap();
        mark_parity(&mut ens, 0);
        let mask = build_carpet_mask(&ens);
        let window = CellRect::new(0, 0, 64, 64);
        let cells: Vec<Cell> = mask.upsilon.iter_set().collect();
        assert!(cells.len() >= 2, "need a nontrivial upsilon");
        let mut rng = substream(1, &[99]);
        for _ in 0..1000 {
            let x = cells[rng.gen_range(0..cells.len())];
            let y = cells[rng.gen_range(0..cells.len())];
            let expect = mask.upsilon.flood_from(x).get(y);
            assert_eq!(connected(&mask, window, x, y).unwrap(), expect);
        }
        assert!(connected(&mask, window, cells[0], cells[0]).unwrap());
        let outside = Cell::new(-1, 0);
        assert!(matches!(
            connected(&mask, window, outside, cells[0]),
            Err(CarpetError::QueryOutsideUpsilonWindow(-1, 0))
        ));
    }
}

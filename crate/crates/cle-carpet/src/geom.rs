//! Small lattice geometry toolkit: cells, rectangles and packed bit grids.

/// A lattice cell, addressed by column `x` and row `y`.
///
/// Coordinates are signed so that cells can be translated and compared
/// against off-grid positions; grids themselves only store cells with
/// `0 <= x < width` and `0 <= y < height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    /// The four lattice neighbors in the fixed priority order
    /// East, North, West, South used everywhere ties must break
    /// deterministically.
    pub fn neighbors(self) -> [Cell; 4] {
        [
            Cell::new(self.x + 1, self.y),
            Cell::new(self.x, self.y + 1),
            Cell::new(self.x - 1, self.y),
            Cell::new(self.x, self.y - 1),
        ]
    }

    pub fn translate(self, dx: i32, dy: i32) -> Cell {
        Cell::new(self.x + dx, self.y + dy)
    }

    /// Euclidean distance between cell centers, in cell units.
    pub fn center_distance(self, other: Cell) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Half-open cell rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl CellRect {
    pub fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Self {
        CellRect { x0, y0, x1, y1 }
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= self.x0 && c.x < self.x1 && c.y >= self.y0 && c.y < self.y1
    }

    pub fn width(&self) -> i32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i32 {
        self.y1 - self.y0
    }
}

/// A dense bitmask over a `width x height` cell grid, one bit per cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitGrid {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl BitGrid {
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width as usize * height as usize).div_ceil(64);
        BitGrid {
            width,
            height,
            words: vec![0; n],
        }
    }

    /// Grid with every cell set.
    pub fn full(width: u32, height: u32) -> Self {
        let mut g = BitGrid::new(width, height);
        for idx in 0..(width as usize * height as usize) {
            g.words[idx / 64] |= 1 << (idx % 64);
        }
        g
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as u32) < self.width && (c.y as u32) < self.height
    }

    #[inline]
    fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width as usize + c.x as usize
    }

    #[inline]
    pub fn get(&self, c: Cell) -> bool {
        if !self.in_bounds(c) {
            return false;
        }
        let idx = self.index(c);
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn set(&mut self, c: Cell, value: bool) {
        assert!(self.in_bounds(c), "cell {c:?} out of bounds");
        let idx = self.index(c);
        if value {
            self.words[idx / 64] |= 1 << (idx % 64);
        } else {
            self.words[idx / 64] &= !(1 << (idx % 64));
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Iterate over set cells in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width as i32;
        (0..self.width as usize * self.height as usize)
            .filter(move |&idx| self.words[idx / 64] >> (idx % 64) & 1 == 1)
            .map(move |idx| Cell::new(idx as i32 % w, idx as i32 / w))
    }

    pub fn is_subset_of(&self, other: &BitGrid) -> bool {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// Translate set cells by `(dx, dy)` into a grid of the same size;
    /// cells shifted off the grid are dropped.
    pub fn translated(&self, dx: i32, dy: i32) -> BitGrid {
        let mut out = BitGrid::new(self.width, self.height);
        for c in self.iter_set() {
            let t = c.translate(dx, dy);
            if out.in_bounds(t) {
                out.set(t, true);
            }
        }
        out
    }

    /// Keep only the set cells inside `rect`.
    pub fn cropped_to(&self, rect: CellRect) -> BitGrid {
        let mut out = BitGrid::new(self.width, self.height);
        for c in self.iter_set() {
            if rect.contains(c) {
                out.set(c, true);
            }
        }
        out
    }

    /// 4-connected component of `start` within the set cells.
    pub fn flood_from(&self, start: Cell) -> BitGrid {
        let mut out = BitGrid::new(self.width, self.height);
        if !self.get(start) {
            return out;
        }
        let mut queue = std::collections::VecDeque::new();
        out.set(start, true);
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            for n in c.neighbors() {
                if self.get(n) && !out.get(n) {
                    out.set(n, true);
                    queue.push_back(n);
                }
            }
        }
        out
    }

    /// Whether the set is 4-connected (empty sets count as connected).
    pub fn is_connected(&self) -> bool {
        match self.iter_set().next() {
            None => true,
            Some(first) => self.flood_from(first).count() == self.count(),
        }
    }
}

/// Axis-aligned bounding box of a nonempty cell list.
pub fn bounding_box<'a>(cells: impl IntoIterator<Item = &'a Cell>) -> Option<CellRect> {
    let mut it = cells.into_iter();
    let first = it.next()?;
    let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x + 1, first.y + 1);
    for c in it {
        x0 = x0.min(c.x);
        y0 = y0.min(c.y);
        x1 = x1.max(c.x + 1);
        y1 = y1.max(c.y + 1);
    }
    Some(CellRect::new(x0, y0, x1, y1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitgrid_set_get_count() {
        let mut g = BitGrid::new(5, 4);
        assert!(g.is_empty());
        g.set(Cell::new(2, 3), true);
        g.set(Cell::new(0, 0), true);
        assert!(g.get(Cell::new(2, 3)));
        assert!(!g.get(Cell::new(2, 2)));
        assert!(!g.get(Cell::new(-1, 0)));
        assert_eq!(g.count(), 2);
        let cells: Vec<_> = g.iter_set().collect();
        assert_eq!(cells, vec![Cell::new(0, 0), Cell::new(2, 3)]);
    }

    #[test]
    fn flood_fill_stops_at_gaps() {
        let mut g = BitGrid::new(5, 1);
        for x in [0, 1, 3, 4] {
            g.set(Cell::new(x, 0), true);
        }
        let comp = g.flood_from(Cell::new(0, 0));
        assert_eq!(comp.count(), 2);
        assert!(!g.is_connected());
        g.set(Cell::new(2, 0), true);
        assert!(g.is_connected());
    }

    #[test]
    fn neighbor_priority_is_east_north_west_south() {
        let n = Cell::new(0, 0).neighbors();
        assert_eq!(n[0], Cell::new(1, 0));
        assert_eq!(n[1], Cell::new(0, 1));
        assert_eq!(n[2], Cell::new(-1, 0));
        assert_eq!(n[3], Cell::new(0, -1));
    }
}

//! Text persistence for nested ensembles: the `CLECARPET v1` format.
//!
//! Line-oriented, versioned, and documented in `docs/format.md`. Loop
//! interiors are not stored; they are refilled from the boundary polygons
//! and re-validated (parity alternation, child containment) on load.

use crate::carpet::{fill_polygon, CleLoop, NestedEnsemble};
use crate::config::fmt_f64;
use crate::geom::{BitGrid, Cell, CellRect};
use crate::loop_soup::LatticeDomain;
use crate::params::KappaParams;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("expected header `CLECARPET v1`, found `{0}`")]
    VersionMismatch(String),
    #[error("file truncated at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("loop {0}: parity does not alternate with its parent")]
    ParityViolation(usize),
    #[error("loop {0}: interior not contained in its parent")]
    ContainmentViolation(usize),
    #[error("invalid parameters in file: {0}")]
    BadParams(String),
}

const HEADER: &str = "CLECARPET v1";

/// Serialize an ensemble to the v1 text format.
pub fn ensemble_to_string(ensemble: &NestedEnsemble) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "kappa {}", fmt_f64(ensemble.params.kappa));
    let _ = writeln!(s, "delta {}", fmt_f64(ensemble.domain.delta));
    let _ = writeln!(s, "grid {} {}", ensemble.domain.width, ensemble.domain.height);
    let _ = writeln!(s, "lmax {}", ensemble.lmax);
    let _ = writeln!(s, "depth_limit {}", ensemble.depth_limit);
    let _ = writeln!(s, "seed {}", ensemble.seed);
    let _ = writeln!(s, "discarded {}", ensemble.discarded_boundary_clusters);
    let full = ensemble.domain.allowed.count()
        == ensemble.domain.width as usize * ensemble.domain.height as usize;
    if full {
        let _ = writeln!(s, "allowed full");
    } else {
        let _ = writeln!(s, "allowed sparse");
        for c in ensemble.domain.allowed.iter_set() {
            let _ = writeln!(s, "cell {} {}", c.x, c.y);
        }
    }
    let _ = writeln!(s, "loops {}", ensemble.loops.len());
    for lp in &ensemble.loops {
        let parent = lp.parent.map_or(-1, |p| p as i64);
        let parity = lp.parity.map_or("-".to_string(), |p| p.to_string());
        let _ = writeln!(
            s,
            "loop {} {} {} {} {}",
            lp.id,
            parent,
            lp.depth,
            parity,
            lp.boundary.len()
        );
        let mut verts = String::from("verts");
        for &(x, y) in &lp.boundary {
            let _ = write!(verts, " {x} {y}");
        }
        let _ = writeln!(s, "{verts}");
    }
    let _ = writeln!(s, "end");
    s
}

pub fn save_ensemble(ensemble: &NestedEnsemble, path: &Path) -> Result<(), EnsembleIoError> {
    std::fs::write(path, ensemble_to_string(ensemble))?;
    Ok(())
}

struct Lines<'a> {
    text: &'a str,
    offset: usize,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str), EnsembleIoError> {
        if self.offset >= self.text.len() {
            return Err(EnsembleIoError::Truncated {
                offset: self.offset,
            });
        }
        let rest = &self.text[self.offset..];
        let (line, consumed) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.offset += consumed;
        self.line_no += 1;
        Ok((self.line_no, line.trim_end_matches('\r')))
    }
}

fn field<'a>(
    parts: &mut impl Iterator<Item = &'a str>,
    line: usize,
    what: &str,
) -> Result<&'a str, EnsembleIoError> {
    parts.next().ok_or_else(|| EnsembleIoError::Parse {
        line,
        message: format!("missing {what}"),
    })
}

fn expect_key<'a>(
    lines: &mut Lines<'a>,
    key: &str,
) -> Result<(usize, Vec<&'a str>), EnsembleIoError> {
    let (line_no, line) = lines.next_line()?;
    let mut parts = line.split_whitespace();
    let head = field(&mut parts, line_no, "key")?;
    if head != key {
        return Err(EnsembleIoError::Parse {
            line: line_no,
            message: format!("expected `{key}`, found `{head}`"),
        });
    }
    Ok((line_no, parts.collect()))
}

/// Parse the v1 text format, refill interiors, and re-validate structure.
pub fn ensemble_from_str(text: &str) -> Result<NestedEnsemble, EnsembleIoError> {
    let mut lines = Lines {
        text,
        offset: 0,
        line_no: 0,
    };
    let (_, header) = lines.next_line()?;
    if header != HEADER {
        return Err(EnsembleIoError::VersionMismatch(header.to_string()));
    }
    let parse_f64 = |s: &str, line: usize| -> Result<f64, EnsembleIoError> {
        s.parse().map_err(|_| EnsembleIoError::Parse {
            line,
            message: format!("bad number `{s}`"),
        })
    };
    let parse_u64 = |s: &str, line: usize| -> Result<u64, EnsembleIoError> {
        s.parse().map_err(|_| EnsembleIoError::Parse {
            line,
            message: format!("bad integer `{s}`"),
        })
    };

    let (l, v) = expect_key(&mut lines, "kappa")?;
    let kappa = parse_f64(v.first().copied().unwrap_or(""), l)?;
    let (l, v) = expect_key(&mut lines, "delta")?;
    let delta = parse_f64(v.first().copied().unwrap_or(""), l)?;
    let (l, v) = expect_key(&mut lines, "grid")?;
    if v.len() != 2 {
        return Err(EnsembleIoError::Parse {
            line: l,
            message: "grid needs width and height".into(),
        });
    }
    let width = parse_u64(v[0], l)? as u32;
    let height = parse_u64(v[1], l)? as u32;
    let (l, v) = expect_key(&mut lines, "lmax")?;
    let lmax = parse_u64(v.first().copied().unwrap_or(""), l)? as u32;
    let (l, v) = expect_key(&mut lines, "depth_limit")?;
    let depth_limit = parse_u64(v.first().copied().unwrap_or(""), l)? as u32;
    let (l, v) = expect_key(&mut lines, "seed")?;
    let seed = parse_u64(v.first().copied().unwrap_or(""), l)?;
    let (l, v) = expect_key(&mut lines, "discarded")?;
    let discarded = parse_u64(v.first().copied().unwrap_or(""), l)? as usize;

    let (l, v) = expect_key(&mut lines, "allowed")?;
    let allowed = match v.first().copied() {
        Some("full") => BitGrid::full(width, height),
        Some("sparse") => {
            let mut grid = BitGrid::new(width, height);
            loop {
                let checkpoint = (lines.offset, lines.line_no);
                let (line_no, line) = lines.next_line()?;
                let mut parts = line.split_whitespace();
                match parts.next() {
                    Some("cell") => {
                        let x = parse_u64(field(&mut parts, line_no, "x")?, line_no)? as i32;
                        let y = parse_u64(field(&mut parts, line_no, "y")?, line_no)? as i32;
                        grid.set(Cell::new(x, y), true);
                    }
                    _ => {
                        lines.offset = checkpoint.0;
                        lines.line_no = checkpoint.1;
                        break;
                    }
                }
            }
            grid
        }
        other => {
            return Err(EnsembleIoError::Parse {
                line: l,
                message: format!("bad allowed kind `{other:?}`"),
            })
        }
    };

    let params = KappaParams::new(kappa).map_err(|e| EnsembleIoError::BadParams(e.to_string()))?;
    let domain = LatticeDomain::new(delta, allowed)
        .map_err(|e| EnsembleIoError::BadParams(e.to_string()))?;

    let (l, v) = expect_key(&mut lines, "loops")?;
    let count = parse_u64(v.first().copied().unwrap_or(""), l)? as usize;
    let mut loops: Vec<CleLoop> = Vec::with_capacity(count);
    for _ in 0..count {
        let (l, v) = expect_key(&mut lines, "loop")?;
        if v.len() != 5 {
            return Err(EnsembleIoError::Parse {
                line: l,
                message: "loop needs id, parent, depth, parity, vertex count".into(),
            });
        }
        let id = parse_u64(v[0], l)? as usize;
        let parent: Option<usize> = match v[1] {
            "-1" => None,
            s => Some(parse_u64(s, l)? as usize),
        };
        let depth = parse_u64(v[2], l)? as u32;
        let parity: Option<u8> = match v[3] {
            "-" => None,
            s => Some(parse_u64(s, l)? as u8),
        };
        let nverts = parse_u64(v[4], l)? as usize;
        let (l, v) = expect_key(&mut lines, "verts")?;
        if v.len() != 2 * nverts {
            return Err(EnsembleIoError::Parse {
                line: l,
                message: format!("expected {} vertex coordinates, found {}", 2 * nverts, v.len()),
            });
        }
        let mut boundary = Vec::with_capacity(nverts);
        for pair in v.chunks(2) {
            let x: i32 = pair[0].parse().map_err(|_| EnsembleIoError::Parse {
                line: l,
                message: format!("bad coordinate `{}`", pair[0]),
            })?;
            let y: i32 = pair[1].parse().map_err(|_| EnsembleIoError::Parse {
                line: l,
                message: format!("bad coordinate `{}`", pair[1]),
            })?;
            boundary.push((x, y));
        }
        // Refill the interior from the polygon.
        let interior_full = fill_polygon(&boundary, width, height);
        let cells: Vec<Cell> = interior_full.iter_set().collect();
        if cells.is_empty() {
            return Err(EnsembleIoError::Parse {
                line: l,
                message: "loop boundary encloses no cells".into(),
            });
        }
        let bbox = crate::geom::bounding_box(cells.iter()).unwrap();
        let mut interior = BitGrid::new(bbox.width() as u32, bbox.height() as u32);
        for c in &cells {
            interior.set(Cell::new(c.x - bbox.x0, c.y - bbox.y0), true);
        }
        loops.push(CleLoop::from_parts(
            id,
            parent,
            depth,
            parity,
            boundary,
            CellRect::new(bbox.x0, bbox.y0, bbox.x1, bbox.y1),
            interior,
        ));
    }
    expect_key(&mut lines, "end")?;

    // Re-validate structure: depth, parity alternation, containment.
    for lp in &loops {
        if let Some(p) = lp.parent {
            let parent = loops.get(p).ok_or(EnsembleIoError::Parse {
                line: 0,
                message: format!("loop {} references missing parent {p}", lp.id),
            })?;
            if lp.depth != parent.depth + 1 {
                return Err(EnsembleIoError::Parse {
                    line: 0,
                    message: format!("loop {} depth does not follow its parent", lp.id),
                });
            }
            if let (Some(a), Some(b)) = (lp.parity, parent.parity) {
                if a == b {
                    return Err(EnsembleIoError::ParityViolation(lp.id));
                }
            }
            if !lp.interior_cells().all(|c| parent.interior_contains(c)) {
                return Err(EnsembleIoError::ContainmentViolation(lp.id));
            }
        }
    }
    Ok(NestedEnsemble {
        params,
        domain,
        seed,
        lmax,
        depth_limit,
        loops,
        discarded_boundary_clusters: discarded,
    })
}

pub fn load_ensemble(path: &Path) -> Result<NestedEnsemble, EnsembleIoError> {
    let text = std::fs::read_to_string(path)?;
    ensemble_from_str(&text)
}

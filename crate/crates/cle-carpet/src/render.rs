//! Binary PPM rendering of distance fields.
//!
//! Cells outside the mask are black, unreachable mask cells are gray, and
//! reachable cells map through a fixed 256-entry palette by the normalized
//! rank of their value (ties share a color). The output is byte-exact for
//! fixed inputs, which is what the golden-image tests pin.

use crate::geom::Cell;
use crate::mfpp::EpsMetricField;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("field has no reachable cell")]
    EmptyField,
}

const GRAY: [u8; 3] = [128, 128, 128];

/// Piecewise-linear anchors of the embedded palette (dark blue through
/// magenta and orange to bright yellow).
const ANCHORS: [(f64, [u8; 3]); 5] = [
    (0.00, [13, 8, 135]),
    (0.25, [126, 3, 168]),
    (0.50, [204, 71, 120]),
    (0.75, [248, 149, 64]),
    (1.00, [240, 249, 33]),
];

/// The fixed 256-entry palette.
pub fn palette() -> &'static [[u8; 3]; 256] {
    static PALETTE: OnceLock<[[u8; 3]; 256]> = OnceLock::new();
    PALETTE.get_or_init(|| {
        let mut table = [[0u8; 3]; 256];
        for (i, entry) in table.iter_mut().enumerate() {
            let t = i as f64 / 255.0;
            let seg = ANCHORS.windows(2).find(|w| t <= w[1].0).unwrap_or(&ANCHORS[3..5]);
            let (t0, c0) = seg[0];
            let (t1, c1) = seg[1];
            let u = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            for ch in 0..3 {
                let v = c0[ch] as f64 + u * (c1[ch] as f64 - c0[ch] as f64);
                entry[ch] = v.round() as u8;
            }
        }
        table
    })
}

/// Render a field to binary PPM (P6, 8-bit). Row 0 of the image is the
/// top of the grid (largest y).
pub fn render_field(field: &EpsMetricField) -> Result<Vec<u8>, RenderError> {
    let (w, h) = (field.mask.width(), field.mask.height());
    // Dense rank over distinct finite values.
    let mut values: Vec<f64> = (0..h as i32)
        .flat_map(|y| (0..w as i32).map(move |x| Cell::new(x, y)))
        .filter_map(|c| field.value(c))
        .collect();
    if values.is_empty() {
        return Err(RenderError::EmptyField);
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    let distinct = values.len();
    let pal = palette();
    let mut out = Vec::with_capacity(15 + 3 * w as usize * h as usize);
    out.extend_from_slice(format!("P6\n{w} {h}\n255\n").as_bytes());
    for y in (0..h as i32).rev() {
        for x in 0..w as i32 {
            let c = Cell::new(x, y);
            let rgb = if !field.mask.get(c) {
                [0, 0, 0]
            } else {
                match field.value(c) {
                    None => GRAY,
                    Some(v) => {
                        let rank = values.partition_point(|&u| u < v);
                        let idx = if distinct > 1 {
                            rank * 255 / (distinct - 1)
                        } else {
                            0
                        };
                        pal[idx.min(255)]
                    }
                }
            };
            out.extend_from_slice(&rgb);
        }
    }
    Ok(out)
}

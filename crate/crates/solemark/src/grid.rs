//! Grid geometry, contact surfaces, and shape codes.
//!
//! Prints live on a fixed 100-by-200 grid. Cell `(a1, a2)` covers the
//! half-open area `(a1-1, a1] x (a2-1, a2]`, so real-valued accidental
//! coordinates in `(0,100] x (0,200]` map to cells by taking ceilings.

use crate::error::{Error, Result};

/// Number of columns (the `a1` axis).
pub const GRID_WIDTH: usize = 100;
/// Number of rows (the `a2` axis).
pub const GRID_HEIGHT: usize = 200;
/// Total number of grid cells.
pub const CELL_COUNT: usize = GRID_WIDTH * GRID_HEIGHT;

/// A cell on the standardized print grid, with `1 <= a1 <= 100` and
/// `1 <= a2 <= 200`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridIndex {
    pub a1: i32,
    pub a2: i32,
}

impl GridIndex {
    pub fn new(a1: i32, a2: i32) -> Result<Self> {
        if Self::in_bounds(a1, a2) {
            Ok(GridIndex { a1, a2 })
        } else {
            Err(Error::OutOfGrid { a1, a2 })
        }
    }

    pub fn in_bounds(a1: i32, a2: i32) -> bool {
        (1..=GRID_WIDTH as i32).contains(&a1) && (1..=GRID_HEIGHT as i32).contains(&a2)
    }

    /// Row-major flat index, rows ordered by `a2`.
    pub fn flat(self) -> usize {
        (self.a2 as usize - 1) * GRID_WIDTH + (self.a1 as usize - 1)
    }

    pub fn from_flat(idx: usize) -> Self {
        debug_assert!(idx < CELL_COUNT);
        GridIndex {
            a1: (idx % GRID_WIDTH) as i32 + 1,
            a2: (idx / GRID_WIDTH) as i32 + 1,
        }
    }

    /// Cell containing the real-valued location `(x1, x2)`.
    ///
    /// Coordinates at exactly 0 are clamped into cell 1; anything else
    /// outside `(0,100] x (0,200]` is rejected.
    pub fn cell_of(x1: f64, x2: f64) -> Result<Self> {
        if !x1.is_finite() || !x2.is_finite() {
            return Err(Error::NonFinite("accidental coordinate".into()));
        }
        let a1 = x1.ceil().max(1.0);
        let a2 = x2.ceil().max(1.0);
        if x1 < 0.0 || x2 < 0.0 || a1 > GRID_WIDTH as f64 || a2 > GRID_HEIGHT as f64 {
            return Err(Error::OutOfGrid {
                a1: a1 as i32,
                a2: a2 as i32,
            });
        }
        Ok(GridIndex {
            a1: a1 as i32,
            a2: a2 as i32,
        })
    }
}

/// Binary ground-contact mask for one shoe.
#[derive(Debug, Clone)]
pub struct ContactSurface {
    pub shoe_id: String,
    bits: Vec<u8>,
}

impl ContactSurface {
    pub fn new(shoe_id: impl Into<String>, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != CELL_COUNT {
            return Err(Error::Config(format!(
                "contact surface needs {CELL_COUNT} cells, got {}",
                bits.len()
            )));
        }
        if let Some(bad) = bits.iter().find(|b| **b > 1) {
            return Err(Error::Config(format!("contact bit {bad} is not 0 or 1")));
        }
        Ok(ContactSurface {
            shoe_id: shoe_id.into(),
            bits,
        })
    }

    pub fn from_fn(shoe_id: impl Into<String>, f: impl Fn(i32, i32) -> bool) -> Self {
        let mut bits = vec![0u8; CELL_COUNT];
        for (idx, bit) in bits.iter_mut().enumerate() {
            let a = GridIndex::from_flat(idx);
            *bit = f(a.a1, a.a2) as u8;
        }
        ContactSurface {
            shoe_id: shoe_id.into(),
            bits,
        }
    }

    /// Contact bit at `(a1, a2)`; out-of-grid lookups read as 0.
    pub fn get(&self, a1: i32, a2: i32) -> u8 {
        if GridIndex::in_bounds(a1, a2) {
            self.bits[(a2 as usize - 1) * GRID_WIDTH + (a1 as usize - 1)]
        } else {
            0
        }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn contact_count(&self) -> usize {
        self.bits.iter().filter(|b| **b == 1).count()
    }
}

/// One of the 32 local contact configurations around a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeCode(pub u8);

/// Number of distinct shape codes.
pub const SHAPE_CODES: usize = 32;

/// Encode the cross-shaped contact neighborhood of `a` as a code in 1..=32.
///
/// Bits are assigned as down=1, left=2, center=4, right=8, up=16, so an
/// all-empty neighborhood gives code 1 and a fully covered one gives 32.
/// Neighbors beyond the grid edge read as non-contact.
pub fn shape_code(c: &ContactSurface, a: GridIndex) -> ShapeCode {
    let code = 1
        + c.get(a.a1, a.a2 - 1)
        + 2 * c.get(a.a1 - 1, a.a2)
        + 4 * c.get(a.a1, a.a2)
        + 8 * c.get(a.a1 + 1, a.a2)
        + 16 * c.get(a.a1, a.a2 + 1);
    ShapeCode(code)
}

/// Per-cell shape codes for a whole contact surface, cached once per shoe.
#[derive(Debug, Clone)]
pub struct ShapeCodeField {
    codes: Vec<u8>,
}

impl ShapeCodeField {
    pub fn get(&self, a: GridIndex) -> u8 {
        self.codes[a.flat()]
    }

    pub fn at_flat(&self, idx: usize) -> u8 {
        self.codes[idx]
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }
}

pub fn shape_code_field(c: &ContactSurface) -> ShapeCodeField {
    let mut codes = vec![0u8; CELL_COUNT];
    for (idx, slot) in codes.iter_mut().enumerate() {
        *slot = shape_code(c, GridIndex::from_flat(idx)).0;
    }
    ShapeCodeField { codes }
}

const MASK_MAGIC: &str = "CSMASK";

/// Serialize a contact surface in the text mask format: a `CSMASK 100 200`
/// header, then 200 lines of 100 `{0,1}` characters with the toe-end row
/// (`a2 = 200`) first.
pub fn write_mask(c: &ContactSurface) -> String {
    let mut out = String::with_capacity(CELL_COUNT + GRID_HEIGHT + 32);
    out.push_str(&format!("{MASK_MAGIC} {GRID_WIDTH} {GRID_HEIGHT}\n"));
    for k in 1..=GRID_HEIGHT {
        let a2 = (GRID_HEIGHT + 1 - k) as i32;
        for a1 in 1..=GRID_WIDTH as i32 {
            out.push(if c.get(a1, a2) == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

pub fn parse_mask(text: &str, shoe_id: impl Into<String>) -> Result<ContactSurface> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        col: 1,
        msg: "empty mask file".into(),
    })?;
    let expected = format!("{MASK_MAGIC} {GRID_WIDTH} {GRID_HEIGHT}");
    if header != expected {
        return Err(Error::Parse {
            line: 1,
            col: 1,
            msg: format!("expected header '{expected}', got '{header}'"),
        });
    }
    let mut bits = vec![0u8; CELL_COUNT];
    let mut rows = 0usize;
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        if rows == GRID_HEIGHT {
            return Err(Error::Parse {
                line: lineno,
                col: 1,
                msg: format!("expected {GRID_HEIGHT} rows, found extra content"),
            });
        }
        if line.len() != GRID_WIDTH {
            return Err(Error::Parse {
                line: lineno,
                col: line.len() + 1,
                msg: format!("expected {GRID_WIDTH} characters, got {}", line.len()),
            });
        }
        let a2 = GRID_HEIGHT - k; // line k+2 holds row a2 = 200 - k
        for (j, ch) in line.chars().enumerate() {
            let bit = match ch {
                '0' => 0,
                '1' => 1,
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        col: j + 1,
                        msg: format!("invalid character '{ch}'"),
                    })
                }
            };
            bits[(a2 - 1) * GRID_WIDTH + j] = bit;
        }
        rows += 1;
    }
    if rows != GRID_HEIGHT {
        return Err(Error::Parse {
            line: rows + 2,
            col: 1,
            msg: format!("expected {GRID_HEIGHT} rows, got {rows}"),
        });
    }
    ContactSurface::new(shoe_id, bits)
}

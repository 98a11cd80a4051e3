//! Coarse spatial regions carrying the piecewise-constant weight field.
//!
//! The 100x200 grid is partitioned into 10x10 blocks arranged on a 10x20
//! coarse grid. Each active region is the active portion of one block; cells
//! outside every region carry zero spatial weight and are excluded from the
//! model ("inactive"). Region adjacency follows 4-neighborhood of blocks.

use crate::error::{Error, Result};
use crate::grid::{GridIndex, CELL_COUNT, GRID_HEIGHT, GRID_WIDTH};

/// Side length of one coarse block, in grid cells.
pub const BLOCK: usize = 10;
/// Coarse grid dimensions: 10 columns by 20 rows of blocks.
pub const COARSE_WIDTH: usize = GRID_WIDTH / BLOCK;
pub const COARSE_HEIGHT: usize = GRID_HEIGHT / BLOCK;

/// Margin (in cells) that active cells must keep from the grid edge so that
/// kernel smoothing never pushes probability mass off the grid.
pub const EDGE_MARGIN: i32 = 3;

/// Mapping from grid cells to coarse weight regions.
#[derive(Debug, Clone)]
pub struct CoarseMap {
    region_of: Vec<u16>, // 0 = inactive, 1..=n_regions otherwise
    n_regions: usize,
    adjacency: Vec<(u16, u16)>,
    active_cells: Vec<u32>,
    region_sizes: Vec<u32>,
}

fn block_of_flat(idx: usize) -> (usize, usize) {
    let a1 = idx % GRID_WIDTH;
    let a2 = idx / GRID_WIDTH;
    (a1 / BLOCK, a2 / BLOCK)
}

impl CoarseMap {
    /// Build and validate a coarse map from a per-cell region grid.
    ///
    /// Checks: region ids within range, every id used, each region confined
    /// to a single coarse block, and the kernel-reach margin from the grid
    /// edge.
    pub fn from_region_grid(region_of: Vec<u16>, n_regions: usize) -> Result<Self> {
        if region_of.len() != CELL_COUNT {
            return Err(Error::CoarseMap(format!(
                "expected {CELL_COUNT} entries, got {}",
                region_of.len()
            )));
        }
        if n_regions == 0 || n_regions > u16::MAX as usize {
            return Err(Error::CoarseMap(format!("invalid region count {n_regions}")));
        }
        let mut region_block: Vec<Option<(usize, usize)>> = vec![None; n_regions + 1];
        let mut region_sizes = vec![0u32; n_regions + 1];
        let mut active_cells = Vec::new();
        for (idx, &r) in region_of.iter().enumerate() {
            if r == 0 {
                continue;
            }
            if r as usize > n_regions {
                return Err(Error::CoarseMap(format!(
                    "region id {r} exceeds declared count {n_regions}"
                )));
            }
            let a = GridIndex::from_flat(idx);
            if a.a1 <= EDGE_MARGIN
                || a.a1 > GRID_WIDTH as i32 - EDGE_MARGIN
                || a.a2 <= EDGE_MARGIN
                || a.a2 > GRID_HEIGHT as i32 - EDGE_MARGIN
            {
                return Err(Error::CoarseMap(format!(
                    "active cell ({}, {}) is within {EDGE_MARGIN} cells of the grid edge",
                    a.a1, a.a2
                )));
            }
            let blk = block_of_flat(idx);
            match region_block[r as usize] {
                None => region_block[r as usize] = Some(blk),
                Some(prev) if prev != blk => {
                    return Err(Error::CoarseMap(format!(
                        "region {r} spans more than one coarse block"
                    )))
                }
                _ => {}
            }
            region_sizes[r as usize] += 1;
            active_cells.push(idx as u32);
        }
        for r in 1..=n_regions {
            if region_block[r].is_none() {
                return Err(Error::CoarseMap(format!("region id {r} never appears")));
            }
        }
        let mut adjacency = Vec::new();
        for r1 in 1..=n_regions {
            let (bx1, by1) = region_block[r1].unwrap();
            for r2 in (r1 + 1)..=n_regions {
                let (bx2, by2) = region_block[r2].unwrap();
                let touching = (bx1 == bx2 && by1.abs_diff(by2) == 1)
                    || (by1 == by2 && bx1.abs_diff(bx2) == 1);
                if touching {
                    adjacency.push((r1 as u16, r2 as u16));
                }
            }
        }
        Ok(CoarseMap {
            region_of,
            n_regions,
            adjacency,
            active_cells,
            region_sizes,
        })
    }

    /// Region id at `(a1, a2)`; 0 for inactive or out-of-grid cells.
    pub fn region(&self, a1: i32, a2: i32) -> u16 {
        if GridIndex::in_bounds(a1, a2) {
            self.region_of[(a2 as usize - 1) * GRID_WIDTH + (a1 as usize - 1)]
        } else {
            0
        }
    }

    pub fn region_at_flat(&self, idx: usize) -> u16 {
        self.region_of[idx]
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    /// Flat indices of all active cells, in raster order.
    pub fn active_cells(&self) -> &[u32] {
        &self.active_cells
    }

    pub fn active_count(&self) -> usize {
        self.active_cells.len()
    }

    /// Unordered pairs of adjacent region ids.
    pub fn adjacency(&self) -> &[(u16, u16)] {
        &self.adjacency
    }

    pub fn region_sizes(&self) -> &[u32] {
        &self.region_sizes
    }

    /// The default synthetic coarse map: 138 regions covering 11475 cells,
    /// shaped as a rounded sole-like footprint with inactive sides and
    /// extremities. Deterministic; independent of any seed.
    pub fn default_map() -> CoarseMap {
        // Active blocks: the 8x18 interior ring minus four corners and a
        // waist pinch on each side, leaving exactly 138 blocks.
        let dropped: [(usize, usize); 6] = [(1, 1), (8, 1), (1, 18), (8, 18), (1, 10), (8, 10)];
        let mut block_active = [[false; COARSE_HEIGHT]; COARSE_WIDTH];
        let mut n_blocks = 0;
        for bx in 1..COARSE_WIDTH - 1 {
            for by in 1..COARSE_HEIGHT - 1 {
                if !dropped.contains(&(bx, by)) {
                    block_active[bx][by] = true;
                    n_blocks += 1;
                }
            }
        }
        debug_assert_eq!(n_blocks, 138);

        let mut cell_active = vec![false; CELL_COUNT];
        let mut block_counts = [[0u32; COARSE_HEIGHT]; COARSE_WIDTH];
        let mut order: Vec<(f64, usize)> = Vec::new();
        for idx in 0..CELL_COUNT {
            let (bx, by) = block_of_flat(idx);
            if !block_active[bx][by] {
                continue;
            }
            cell_active[idx] = true;
            block_counts[bx][by] += 1;
            let a = GridIndex::from_flat(idx);
            // Rounded outline: cells farthest from the centered ellipse are
            // trimmed first.
            let dx = (a.a1 as f64 - 50.5) / 45.0;
            let dy = (a.a2 as f64 - 100.5) / 95.0;
            order.push((dx * dx + dy * dy, idx));
        }
        // Trim down to the target active-cell count, never emptying a block.
        let target = 11_475usize;
        let mut active = order.len();
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, idx) in &order {
            if active == target {
                break;
            }
            let (bx, by) = block_of_flat(idx);
            if block_counts[bx][by] > 1 {
                cell_active[idx] = false;
                block_counts[bx][by] -= 1;
                active -= 1;
            }
        }
        debug_assert_eq!(active, target);

        // Number surviving blocks in raster order (by, then bx).
        let mut region_id = [[0u16; COARSE_HEIGHT]; COARSE_WIDTH];
        let mut next = 0u16;
        for by in 0..COARSE_HEIGHT {
            for bx in 0..COARSE_WIDTH {
                if block_active[bx][by] {
                    next += 1;
                    region_id[bx][by] = next;
                }
            }
        }
        let mut region_of = vec![0u16; CELL_COUNT];
        for (idx, slot) in region_of.iter_mut().enumerate() {
            if cell_active[idx] {
                let (bx, by) = block_of_flat(idx);
                *slot = region_id[bx][by];
            }
        }
        CoarseMap::from_region_grid(region_of, next as usize).expect("default map is valid")
    }
}

const COARSE_MAGIC: &str = "COARSE";

/// Serialize with a `COARSE 100 200 <n_regions>` header, then 200 lines of
/// 100 space-separated region ids in the same row order as mask files.
pub fn write_coarse(cm: &CoarseMap) -> String {
    let mut out = String::with_capacity(CELL_COUNT * 3);
    out.push_str(&format!(
        "{COARSE_MAGIC} {GRID_WIDTH} {GRID_HEIGHT} {}\n",
        cm.n_regions
    ));
    for k in 1..=GRID_HEIGHT {
        let a2 = (GRID_HEIGHT + 1 - k) as i32;
        for a1 in 1..=GRID_WIDTH as i32 {
            if a1 > 1 {
                out.push(' ');
            }
            out.push_str(&cm.region(a1, a2).to_string());
        }
        out.push('\n');
    }
    out
}

pub fn parse_coarse(text: &str) -> Result<CoarseMap> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        col: 1,
        msg: "empty coarse map file".into(),
    })?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 4
        || parts[0] != COARSE_MAGIC
        || parts[1] != GRID_WIDTH.to_string()
        || parts[2] != GRID_HEIGHT.to_string()
    {
        return Err(Error::Parse {
            line: 1,
            col: 1,
            msg: format!("expected header '{COARSE_MAGIC} {GRID_WIDTH} {GRID_HEIGHT} <regions>'"),
        });
    }
    let n_regions: usize = parts[3].parse().map_err(|_| Error::Parse {
        line: 1,
        col: 1,
        msg: format!("invalid region count '{}'", parts[3]),
    })?;
    let mut region_of = vec![0u16; CELL_COUNT];
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
        let a2 = GRID_HEIGHT - k;
        let mut col = 0usize;
        for (j, tok) in line.split(' ').enumerate() {
            if j >= GRID_WIDTH {
                return Err(Error::Parse {
                    line: lineno,
                    col: col + 1,
                    msg: format!("expected {GRID_WIDTH} values per row"),
                });
            }
            let v: u16 = tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                col: col + 1,
                msg: format!("invalid region id '{tok}'"),
            })?;
            if v as usize > n_regions {
                return Err(Error::Parse {
                    line: lineno,
                    col: col + 1,
                    msg: format!("region id {v} exceeds declared count {n_regions}"),
                });
            }
            region_of[(a2 - 1) * GRID_WIDTH + j] = v;
            col += tok.len() + 1;
        }
        let n_toks = line.split(' ').count();
        if n_toks != GRID_WIDTH {
            return Err(Error::Parse {
                line: lineno,
                col: line.len() + 1,
                msg: format!("expected {GRID_WIDTH} values, got {n_toks}"),
            });
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
    CoarseMap::from_region_grid(region_of, n_regions)
}

/// Small rectangular test map: `nx * ny` regions, each an
/// `patch x patch` square centered in its own coarse block, anchored near
/// the grid center. Used by sampler-validation harnesses and tests.
pub fn tiny_map(nx: usize, ny: usize, patch: usize) -> CoarseMap {
    assert!(patch <= BLOCK && nx <= 4 && ny <= 4);
    let bx0 = 4;
    let by0 = 9;
    let off = (BLOCK - patch) / 2;
    let mut region_of = vec![0u16; CELL_COUNT];
    let mut id = 0u16;
    for by in by0..by0 + ny {
        for bx in bx0..bx0 + nx {
            id += 1;
            for dy in 0..patch {
                for dx in 0..patch {
                    let a1 = bx * BLOCK + off + dx;
                    let a2 = by * BLOCK + off + dy;
                    region_of[a2 * GRID_WIDTH + a1] = id;
                }
            }
        }
    }
    CoarseMap::from_region_grid(region_of, id as usize).expect("tiny map is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_map_hits_paper_scale() {
        let cm = CoarseMap::default_map();
        assert_eq!(cm.n_regions(), 138);
        assert_eq!(cm.active_count(), 11_475);
        let total: u32 = cm.region_sizes()[1..].iter().sum();
        assert_eq!(total as usize, cm.active_count());
        assert!(cm.region_sizes()[1..].iter().all(|&s| s >= 1));
    }

    #[test]
    fn default_map_round_trips() {
        let cm = CoarseMap::default_map();
        let text = write_coarse(&cm);
        let parsed = parse_coarse(&text).unwrap();
        assert_eq!(write_coarse(&parsed), text);
        assert_eq!(parsed.adjacency(), cm.adjacency());
    }

    #[test]
    fn region_id_above_count_is_rejected() {
        let cm = CoarseMap::default_map();
        let mut text = write_coarse(&cm);
        // bump the declared count down so an id of 138 becomes invalid
        text = text.replacen("COARSE 100 200 138", "COARSE 100 200 137", 1);
        let err = parse_coarse(&text).unwrap_err();
        assert!(err.to_string().contains("exceeds declared count"), "{err}");
    }

    #[test]
    fn truncated_coarse_file_is_rejected() {
        let cm = CoarseMap::default_map();
        let text = write_coarse(&cm);
        let truncated: String = text.lines().take(150).map(|l| format!("{l}\n")).collect();
        assert!(parse_coarse(&truncated).is_err());
    }

    #[test]
    fn margin_violation_is_rejected() {
        let mut region_of = vec![0u16; CELL_COUNT];
        region_of[0] = 1; // cell (1,1) hugs the corner
        let err = CoarseMap::from_region_grid(region_of, 1).unwrap_err();
        assert!(err.to_string().contains("grid edge"), "{err}");
    }

    #[test]
    fn tiny_map_has_expected_adjacency() {
        let cm = tiny_map(2, 2, 5);
        assert_eq!(cm.n_regions(), 4);
        assert_eq!(cm.active_count(), 100);
        // 2x2 block square: four touching pairs, no diagonals
        assert_eq!(cm.adjacency().len(), 4);
        assert!(!cm.adjacency().contains(&(1, 4)));
    }

    #[test]
    fn split_region_is_rejected() {
        let mut region_of = vec![0u16; CELL_COUNT];
        // same id in two different blocks
        let a = GridIndex { a1: 45, a2: 95 }.flat();
        let b = GridIndex { a1: 58, a2: 95 }.flat();
        region_of[a] = 1;
        region_of[b] = 1;
        let err = CoarseMap::from_region_grid(region_of, 1).unwrap_err();
        assert!(err.to_string().contains("more than one"), "{err}");
    }
}

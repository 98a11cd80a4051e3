//! Dataset directory layout and atomic file writes.
//!
//! A dataset directory contains `coarse.txt`, one mask per shoe under
//! `masks/<shoe_id>.txt`, and `accidentals.csv`. Simulation also writes the
//! generating parameters to `truth.jsonl` in the draw-record format.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use solemark::coarse::{parse_coarse, write_coarse, CoarseMap};
use solemark::dataset::{parse_accidentals_csv, write_accidentals_csv, Dataset, ShoeRecord};
use solemark::grid::{parse_mask, write_mask};

/// Write via a temp file and rename, so readers never see partial output.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&tmp, contents)
        .with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn save_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    atomic_write(&dir.join("coarse.txt"), &write_coarse(&data.coarse))?;
    for shoe in &data.shoes {
        atomic_write(
            &dir.join("masks").join(format!("{}.txt", shoe.id)),
            &write_mask(&shoe.mask),
        )?;
    }
    atomic_write(
        &dir.join("accidentals.csv"),
        &write_accidentals_csv(&data.shoes),
    )?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let coarse_path = dir.join("coarse.txt");
    let coarse_text = std::fs::read_to_string(&coarse_path)
        .with_context(|| format!("reading {}", coarse_path.display()))?;
    let coarse: CoarseMap = parse_coarse(&coarse_text)?;

    let masks_dir = dir.join("masks");
    let mut mask_paths: Vec<PathBuf> = std::fs::read_dir(&masks_dir)
        .with_context(|| format!("reading {}", masks_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "txt").unwrap_or(false))
        .collect();
    mask_paths.sort();
    if mask_paths.is_empty() {
        bail!("no mask files under {}", masks_dir.display());
    }

    let acc_path = dir.join("accidentals.csv");
    let acc_text = std::fs::read_to_string(&acc_path)
        .with_context(|| format!("reading {}", acc_path.display()))?;
    let mut accidentals: std::collections::HashMap<String, Vec<(f64, f64)>> =
        parse_accidentals_csv(&acc_text)?.into_iter().collect();

    let mut shoes = Vec::with_capacity(mask_paths.len());
    for path in &mask_paths {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.to_string())
            .context("mask filename is not valid UTF-8")?;
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let mask = parse_mask(&text, id.clone())?;
        let pts = accidentals.remove(&id).unwrap_or_default();
        shoes.push(ShoeRecord {
            id,
            mask,
            accidentals: pts,
        });
    }
    if let Some(orphan) = accidentals.keys().next() {
        bail!("accidentals reference shoe '{orphan}' with no mask file");
    }
    Ok(Dataset { coarse, shoes })
}

//! Posterior draw records and the line-delimited draw-log format.
//!
//! Each retained sweep becomes one JSON object per line with fields `iter`,
//! `q`, `log_w_E`, `phi`, `p_h`, `p_v`. Lines starting with `#` are header
//! comments carrying provenance (version, seed, config hash, variant).
//! Simulation truth files reuse the same record format with `iter = -1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SHAPE_CODES;
use crate::kernel::{KernelParams, TIERS};
use crate::likelihood::ModelVariant;
use crate::params::GlobalParams;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DrawRecord {
    pub iter: i64,
    pub q: f64,
    #[serde(rename = "log_w_E")]
    pub log_w_e: Vec<f64>,
    pub phi: Vec<f64>,
    pub p_h: Vec<f64>,
    pub p_v: Vec<f64>,
}

impl DrawRecord {
    pub fn from_params(iter: i64, theta: &GlobalParams) -> DrawRecord {
        DrawRecord {
            iter,
            q: theta.q,
            log_w_e: theta.w_e.iter().map(|w| w.ln()).collect(),
            phi: theta.phi.to_vec(),
            p_h: theta.kparams.p_h.to_vec(),
            p_v: theta.kparams.p_v.to_vec(),
        }
    }

    pub fn to_params(&self) -> Result<GlobalParams> {
        if self.phi.len() != SHAPE_CODES || self.p_h.len() != TIERS || self.p_v.len() != TIERS {
            return Err(Error::Config("draw record has wrong field lengths".into()));
        }
        let mut phi = [0.0; SHAPE_CODES];
        phi.copy_from_slice(&self.phi);
        let mut p_h = [0.0; TIERS];
        p_h.copy_from_slice(&self.p_h);
        let mut p_v = [0.0; TIERS];
        p_v.copy_from_slice(&self.p_v);
        Ok(GlobalParams {
            q: self.q,
            w_e: self.log_w_e.iter().map(|l| l.exp()).collect(),
            phi,
            kparams: KernelParams::new(p_h, p_v),
        })
    }
}

/// An ordered chain of retained draws plus the variant that produced them.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub records: Vec<DrawRecord>,
    pub variant: ModelVariant,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Render a draw log: `#`-prefixed header lines, then one record per line.
pub fn render_draw_log(headers: &[(String, String)], records: &[DrawRecord]) -> String {
    let mut out = String::new();
    for (k, v) in headers {
        out.push_str(&format!("# {k}={v}\n"));
    }
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("draw records serialize"));
        out.push('\n');
    }
    out
}

/// Parse a draw log, returning headers and records.
pub fn parse_draw_log(text: &str) -> Result<(Vec<(String, String)>, Vec<DrawRecord>)> {
    let mut headers = Vec::new();
    let mut records = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some((key, value)) = rest.split_once('=') {
                headers.push((key.to_string(), value.to_string()));
            }
            continue;
        }
        let record: DrawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: k + 1,
            col: 1,
            msg: format!("bad draw record: {e}"),
        })?;
        records.push(record);
    }
    Ok((headers, records))
}

/// Read the `variant` header of a draw log, defaulting to the full model.
pub fn variant_from_headers(headers: &[(String, String)]) -> Result<ModelVariant> {
    match headers.iter().find(|(k, _)| k == "variant") {
        Some((_, v)) => ModelVariant::parse(v),
        None => Ok(ModelVariant::full()),
    }
}

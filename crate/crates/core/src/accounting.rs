//! Trainable-parameter and storage accounting for LoRA and sDCTFT.
//!
//! sDCTFT stores `n` coefficients per adapted layer, so `|Θ| = n·L`. LoRA
//! stores two rank-`r` factors per layer, so `|Θ| = r·(d₁ + d₂)·L`. Storage
//! is 4 bytes per trainable value; selection indices are not counted.
//!
//! A model file may carry published figures next to each row. Each figure is
//! compared against the formula and the row is flagged when they disagree by
//! more than one displayed unit (parameters) or 1% (bytes).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BYTES_PER_PARAM: u64 = 4;
pub const BYTES_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lora,
    Sdctft,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lora => "lora",
            Method::Sdctft => "sdctft",
        }
    }
}

/// One method/budget setting, optionally with reference figures to check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub method: Method,
    /// `r` for LoRA, `n` for sDCTFT.
    pub budget: u64,
    #[serde(default)]
    pub reference_params: Option<String>,
    #[serde(default)]
    pub reference_bytes: Option<String>,
}

/// Layer shape, number of adapted layers and the settings to account.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub d1: u64,
    pub d2: u64,
    pub layers: u64,
    #[serde(default)]
    pub entries: Vec<Entry>,
}

/// Top-level model file: `[[model]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model: Vec<ModelSpec>,
}

impl ModelFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Comparison of a computed row against its reference figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    /// No reference figures given.
    Unchecked,
    Match,
    Flagged,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Unchecked => "unchecked",
            Status::Match => "match",
            Status::Flagged => "flagged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingRow {
    pub model: String,
    pub method: Method,
    pub budget: u64,
    pub layers: u64,
    pub d1: u64,
    pub d2: u64,
    pub params: u64,
    pub bytes: u64,
    pub params_display: String,
    pub bytes_display: String,
    pub reference_params: Option<String>,
    pub reference_bytes: Option<String>,
    pub status: Status,
}

/// `n·L` for sDCTFT, `r·(d₁ + d₂)·L` for LoRA.
pub fn trainable_params(method: Method, budget: u64, d1: u64, d2: u64, layers: u64) -> u64 {
    match method {
        Method::Sdctft => budget * layers,
        Method::Lora => budget * (d1 + d2) * layers,
    }
}

pub fn required_bytes(params: u64) -> u64 {
    params * BYTES_PER_PARAM
}

/// Rounds half away from zero at `decimals` places and trims trailing zeros.
fn fixed(value: f64, decimals: usize) -> String {
    let scale = 10f64.powi(decimals as i32);
    // The nudge keeps exact binary halves such as 18.75 rounding up.
    let rounded = (value * scale + 1e-9).round() / scale;
    let s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Decimal K/M with three significant figures, e.g. `4.8K`, `147K`, `1.47M`.
pub fn format_params(params: u64) -> String {
    let (value, suffix) = if params >= 1_000_000 {
        (params as f64 / 1e6, "M")
    } else if params >= 1_000 {
        (params as f64 / 1e3, "K")
    } else {
        return params.to_string();
    };
    let decimals = if value < 10.0 {
        2
    } else if value < 100.0 {
        1
    } else {
        0
    };
    format!("{}{suffix}", fixed(value, decimals))
}

/// Binary KB/MB: two decimals below 10 and one decimal otherwise, e.g.
/// `18.8KB`, `1.13MB`.
pub fn format_bytes(bytes: u64) -> String {
    let (value, suffix) = if bytes >= 1 << 20 {
        (bytes as f64 / (1u64 << 20) as f64, "MB")
    } else if bytes >= 1 << 10 {
        (bytes as f64 / 1024.0, "KB")
    } else {
        return format!("{bytes}B");
    };
    let decimals = if value < 10.0 { 2 } else { 1 };
    format!("{}{suffix}", fixed(value, decimals))
}

/// Parses a rendered figure into its value and the size of one unit in its
/// last displayed digit, e.g. `"4.8K"` → `(4800, 100)`.
pub fn parse_figure(text: &str) -> Result<(f64, f64)> {
    let t = text.trim();
    let (number, multiplier) = [
        ("MB", 1048576.0),
        ("KB", 1024.0),
        ("B", 1.0),
        ("M", 1e6),
        ("K", 1e3),
    ]
    .iter()
    .find_map(|&(suffix, m)| t.strip_suffix(suffix).map(|n| (n, m)))
    .unwrap_or((t, 1.0));
    let value: f64 = number
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse figure {text:?}")))?;
    let decimals = number.split_once('.').map_or(0, |(_, frac)| frac.len());
    Ok((value * multiplier, multiplier / 10f64.powi(decimals as i32)))
}

fn check(params: u64, bytes: u64, entry: &Entry) -> Result<Status> {
    if entry.reference_params.is_none() && entry.reference_bytes.is_none() {
        return Ok(Status::Unchecked);
    }
    let mut ok = true;
    if let Some(p) = &entry.reference_params {
        let (value, unit) = parse_figure(p)?;
        ok &= (params as f64 - value).abs() <= unit + 1e-9;
    }
    if let Some(b) = &entry.reference_bytes {
        let (value, _) = parse_figure(b)?;
        ok &= (bytes as f64 - value).abs() <= BYTES_TOLERANCE * value.max(1.0);
    }
    Ok(if ok { Status::Match } else { Status::Flagged })
}

/// One row per entry of every model, in file order.
pub fn accounting(models: &[ModelSpec]) -> Result<Vec<AccountingRow>> {
    let mut rows = Vec::new();
    for m in models {
        for e in &m.entries {
            let params = trainable_params(e.method, e.budget, m.d1, m.d2, m.layers);
            let bytes = required_bytes(params);
            rows.push(AccountingRow {
                model: m.name.clone(),
                method: e.method,
                budget: e.budget,
                layers: m.layers,
                d1: m.d1,
                d2: m.d2,
                params,
                bytes,
                params_display: format_params(params),
                bytes_display: format_bytes(bytes),
                reference_params: e.reference_params.clone(),
                reference_bytes: e.reference_bytes.clone(),
                status: check(params, bytes, e)?,
            });
        }
    }
    Ok(rows)
}

/// CSV with one line per row and a header.
pub fn write_csv<W: std::io::Write>(rows: &[AccountingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "method",
        "budget",
        "layers",
        "d1",
        "d2",
        "params",
        "bytes",
        "params_display",
        "bytes_display",
        "reference_params",
        "reference_bytes",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.method.name().to_string(),
            r.budget.to_string(),
            r.layers.to_string(),
            r.d1.to_string(),
            r.d2.to_string(),
            r.params.to_string(),
            r.bytes.to_string(),
            r.params_display.clone(),
            r.bytes_display.clone(),
            r.reference_params.clone().unwrap_or_default(),
            r.reference_bytes.clone().unwrap_or_default(),
            r.status.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Config files, run manifests and CSV/JSON serialization.
//!
//! Tables are CSV with a single header line; every length is in millimeters
//! and written with 9 significant digits so that reruns compare byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::FringeFit;
use crate::histogram::Histogram;
use crate::replication::ExperimentConfig;

pub const HISTOGRAM_HEADER: &str = "bin_lo_mm,bin_hi_mm,center_mm,count";
pub const RESIDUAL_HEADER: &str = "x_mm,observed,fitted";
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Run options that may also come from the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub events: Option<u64>,
    pub scheme: Option<String>,
    pub workers: Option<usize>,
}

/// Whole config file: an `[experiment]` and an optional `[run]` section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: ExperimentConfig,
    pub run: RunSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.experiment.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// SHA-256 of the parsed config in canonical (sorted-key JSON) form, so
    /// key order and formatting in the file do not matter.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub master_seed: Option<u64>,
    pub tool_version: String,
    pub timestamp: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: String, master_seed: Option<u64>, outputs: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            config_digest,
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs,
        }
    }
}

/// `x` with `digits` significant digits, trailing zeros trimmed.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // the exponent after rounding, so 9.9999999996 counts as 10
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, e) = sci.split_once('e').expect("exponent present");
    let exp: i32 = e.parse().expect("integer exponent");
    if !(-5..15).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}"))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn mm(x: f64) -> String {
    format_significant(x, SIGNIFICANT_DIGITS)
}

pub fn histogram_csv(hist: &Histogram) -> String {
    let mut out = String::from(HISTOGRAM_HEADER);
    out.push('\n');
    let edges = hist.bin_edges();
    for (i, (&c, x)) in hist.counts().iter().zip(hist.centers()).enumerate() {
        writeln!(out, "{},{},{},{c}", mm(edges[i]), mm(edges[i + 1]), mm(x)).unwrap();
    }
    out
}

/// Parse a histogram table. The generated count defaults to the accepted
/// count; callers restore it from the run statistics when available.
pub fn parse_histogram_csv(text: &str) -> Result<Histogram> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == HISTOGRAM_HEADER => {}
        Some(h) => return Err(Error::InvalidArgument(format!("unexpected histogram header '{h}'"))),
        None => return Err(Error::InvalidArgument("empty histogram file".into())),
    }
    let mut edges: Vec<f64> = Vec::new();
    let mut counts = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::InvalidArgument(format!("row {}: expected 4 fields", row + 1)));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("row {}: bad number '{s}'", row + 1)))
        };
        let (lo, hi) = (num(fields[0])?, num(fields[1])?);
        let count: u64 = fields[3]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("row {}: bad count '{}'", row + 1, fields[3])))?;
        match edges.last() {
            None => edges.push(lo),
            Some(&prev) if (prev - lo).abs() <= 1e-9 * prev.abs().max(1.0) => {}
            Some(_) => return Err(Error::InvalidArgument(format!("row {}: bins are not contiguous", row + 1))),
        }
        edges.push(hi);
        counts.push(count);
    }
    if counts.is_empty() {
        return Err(Error::InvalidArgument("histogram has no bins".into()));
    }
    let total = counts.iter().sum();
    Histogram::new(edges, counts, total)
}

pub fn residual_csv(hist: &Histogram, fit: &FringeFit) -> String {
    let mut out = String::from(RESIDUAL_HEADER);
    out.push('\n');
    for (x, &c) in hist.centers().iter().zip(hist.counts()) {
        writeln!(out, "{},{c},{}", mm(*x), format_significant(fit.evaluate(*x), SIGNIFICANT_DIGITS)).unwrap();
    }
    out
}

/// Plot table without a fit: the fitted column is left empty.
pub fn observed_csv(hist: &Histogram) -> String {
    let mut out = String::from(RESIDUAL_HEADER);
    out.push('\n');
    for (x, &c) in hist.centers().iter().zip(hist.counts()) {
        writeln!(out, "{},{c},", mm(*x)).unwrap();
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Write `contents` to `dir/name` and return the path.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.345, 9), "0.345");
        assert_eq!(format_significant(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_significant(-2.0 / 3.0, 9), "-0.666666667");
        assert_eq!(format_significant(123456.789012, 9), "123456.789");
        assert_eq!(format_significant(9.9999999996, 9), "10");
        assert_eq!(format_significant(1e-7 / 3.0, 9), "3.33333333e-8");
        assert_eq!(format_significant(0.0, 9), "0");
        assert_eq!(format_significant(-1e-20, 9), "-1e-20");
    }

    #[test]
    fn histogram_round_trip() {
        let h = Histogram::new(vec![-0.075, -0.025, 0.025, 0.075], vec![3, 0, 7], 10).unwrap();
        let back = parse_histogram_csv(&histogram_csv(&h)).unwrap();
        assert_eq!(back.counts(), h.counts());
        for (a, b) in back.bin_edges().iter().zip(h.bin_edges()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_tables_rejected() {
        assert!(parse_histogram_csv("").is_err());
        assert!(parse_histogram_csv(HISTOGRAM_HEADER).is_err());
        assert!(parse_histogram_csv("a,b\n1,2").is_err());
        let gap = format!("{HISTOGRAM_HEADER}\n0,1,0.5,3\n2,3,2.5,1\n");
        assert!(parse_histogram_csv(&gap).is_err());
    }

    #[test]
    fn digest_ignores_key_order() {
        let a = ConfigFile::parse("[experiment]\nscan_step_um = 50\nfiber_core_um = 62.5\n[run]\nseed = 3\n").unwrap();
        let b = ConfigFile::parse("[run]\nseed = 3\n[experiment]\nfiber_core_um = 62.5\nscan_step_um = 50\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = ConfigFile::parse("[experiment]\nscan_step_um = 25\n").unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(ConfigFile::parse("[experiment]\npixel = 3\n"), Err(Error::Config(_))));
        assert!(matches!(ConfigFile::parse("[experiment]\nscan_step_um = -1\n"), Err(Error::Config(_))));
    }
}

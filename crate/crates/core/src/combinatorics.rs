//! Counting photon-on-pixel occupancy patterns.
//!
//! `N` photons over `M` pixels: multisets (PNR and total), all-same-pixel
//! patterns (multi-photon absorption), and all-distinct patterns (single-photon
//! arrays). Integer counts are exact with overflow reported; non-integer `M`
//! only ever appears inside ratios through the Gamma extension.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest multiset family `enumerate_occupancies` will materialize.
pub const ENUMERATION_BOUND: u128 = 10_000_000;

/// Schemes counted over integer occupancy patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CountScheme {
    /// All photons in one pixel (multi-photon absorption).
    Npa,
    /// All photons in distinct pixels (non-resolving single-photon array).
    Spa,
    /// Any pattern (photon-number-resolving array).
    Pnr,
}

/// Schemes compared by `efficiency_ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RatioScheme {
    /// Co-located patterns, scaled by the coupler pass probability.
    Npa,
    Spa,
    Pnr,
    /// Distinct-pixel pairs plus the coupler-split co-located case (N = 2).
    PnrComposite,
}

impl fmt::Display for RatioScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RatioScheme::Npa => "NPA",
            RatioScheme::Spa => "SPA",
            RatioScheme::Pnr => "PNR",
            RatioScheme::PnrComposite => "PNR_COMPOSITE",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for RatioScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NPA" => Ok(RatioScheme::Npa),
            "SPA" => Ok(RatioScheme::Spa),
            "PNR" => Ok(RatioScheme::Pnr),
            "PNR_COMPOSITE" => Ok(RatioScheme::PnrComposite),
            other => Err(invalid(format!("unknown ratio scheme {other}"))),
        }
    }
}

/// How arrival patterns are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlacementModel {
    /// Every multiset equally likely.
    #[default]
    MultisetUniform,
    /// Every ordered placement of the M^N equally likely.
    PlacementUniform,
}

impl std::str::FromStr for PlacementModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "multiset_uniform" | "multiset" => Ok(PlacementModel::MultisetUniform),
            "placement_uniform" | "placement" => Ok(PlacementModel::PlacementUniform),
            other => Err(invalid(format!("unknown placement model {other}"))),
        }
    }
}

fn check_counts_args(m: u64, n: u64) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(invalid(format!("M and N must be at least 1 (M = {m}, N = {n})")));
    }
    Ok(())
}

/// Exact binomial coefficient with overflow reporting.
fn binomial(n: u64, k: u64, what: &'static str) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=u128::from(k) {
        // acc * (n - k + i) is divisible by i at every step
        acc = acc
            .checked_mul(u128::from(n - k) + i)
            .ok_or(Error::Overflow(what))?
            / i;
    }
    u64::try_from(acc).map_err(|_| Error::Overflow(what))
}

/// Multisets of size N over M pixels, (M+N−1)!/(N!(M−1)!).
pub fn c_total(m: u64, n: u64) -> Result<u64> {
    check_counts_args(m, n)?;
    let top = m.checked_add(n - 1).ok_or(Error::Overflow("c_total"))?;
    binomial(top, n, "c_total")
}

/// Patterns with every photon in the same pixel.
pub fn c_npa(m: u64, n: u64) -> Result<u64> {
    check_counts_args(m, n)?;
    Ok(m)
}

/// Patterns with every photon in a distinct pixel; zero when N > M.
pub fn c_spa(m: u64, n: u64) -> Result<u64> {
    check_counts_args(m, n)?;
    binomial(m, n, "c_spa")
}

/// A PNR array accepts every multiset.
pub fn c_pnr(m: u64, n: u64) -> Result<u64> {
    c_total(m, n)
}

/// Classification of one occupancy pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OccupancyTag {
    AllSame,
    AllDistinct,
    Mixed,
}

/// One multiset: non-decreasing pixel indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    pub pixels: Vec<u32>,
    pub tag: OccupancyTag,
}

impl Occupancy {
    fn classify(pixels: Vec<u32>) -> Self {
        let same = pixels.windows(2).all(|w| w[0] == w[1]);
        let distinct = pixels.windows(2).all(|w| w[0] != w[1]);
        // N = 1 is both; count it as co-located and distinct alike
        let tag = match (same, distinct) {
            (true, _) => OccupancyTag::AllSame,
            (false, true) => OccupancyTag::AllDistinct,
            _ => OccupancyTag::Mixed,
        };
        Occupancy { pixels, tag }
    }

    pub fn is_all_same(&self) -> bool {
        self.pixels.windows(2).all(|w| w[0] == w[1])
    }

    pub fn is_all_distinct(&self) -> bool {
        self.pixels.windows(2).all(|w| w[0] != w[1])
    }
}

/// Every multiset of N pixel indices drawn from M pixels, exactly once, in
/// lexicographic order.
pub fn enumerate_occupancies(m: u32, n: u32) -> Result<Vec<Occupancy>> {
    check_counts_args(u64::from(m), u64::from(n))?;
    let count = match c_total(u64::from(m), u64::from(n)) {
        Ok(c) => u128::from(c),
        Err(_) => u128::MAX,
    };
    if count > ENUMERATION_BOUND {
        return Err(Error::EnumerationBound {
            count,
            bound: ENUMERATION_BOUND,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current = vec![0u32; n as usize];
    loop {
        out.push(Occupancy::classify(current.clone()));
        // advance to the next non-decreasing sequence
        let Some(pos) = current.iter().rposition(|&p| p + 1 < m) else {
            break;
        };
        let next = current[pos] + 1;
        for slot in &mut current[pos..] {
            *slot = next;
        }
    }
    Ok(out)
}

/// Counts by tag from an enumeration, used as an oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnumeratedCounts {
    pub total: u64,
    pub all_same: u64,
    pub all_distinct: u64,
}

pub fn enumerated_counts(m: u32, n: u32) -> Result<EnumeratedCounts> {
    let patterns = enumerate_occupancies(m, n)?;
    Ok(EnumeratedCounts {
        total: patterns.len() as u64,
        all_same: patterns.iter().filter(|p| p.is_all_same()).count() as u64,
        all_distinct: patterns.iter().filter(|p| p.is_all_distinct()).count() as u64,
    })
}

fn check_real_args(m: f64, n: u32) -> Result<()> {
    if !m.is_finite() || m < 1.0 {
        return Err(invalid(format!("M must be a finite real >= 1, got {m}")));
    }
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    Ok(())
}

/// Γ(M+N)/(Γ(N+1)Γ(M)) for real M ≥ 1.
pub fn c_total_real(m: f64, n: u32) -> Result<f64> {
    check_real_args(m, n)?;
    let rising: f64 = (0..n).map(|k| m + f64::from(k)).product();
    Ok(rising / factorial(n))
}

/// Γ(M+1)/(Γ(N+1)Γ(M−N+1)), requiring M > N − 1.
pub fn c_spa_real(m: f64, n: u32) -> Result<f64> {
    check_real_args(m, n)?;
    if m <= f64::from(n) - 1.0 {
        return Err(invalid(format!(
            "Gamma-extended C_SPA needs M > N - 1 (M = {m}, N = {n})"
        )));
    }
    let falling: f64 = (0..n).map(|k| m - f64::from(k)).product();
    Ok(falling / factorial(n))
}

pub fn c_npa_real(m: f64, n: u32) -> Result<f64> {
    check_real_args(m, n)?;
    Ok(m)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn scheme_weight(scheme: RatioScheme, m: f64, n: u32, coupler_split: f64) -> Result<f64> {
    match scheme {
        RatioScheme::Npa => Ok(coupler_split * c_npa_real(m, n)?),
        RatioScheme::Spa => c_spa_real(m, n),
        RatioScheme::Pnr => c_total_real(m, n),
        RatioScheme::PnrComposite => {
            if n != 2 {
                return Err(invalid("the PNR composite is defined for photon pairs only"));
            }
            Ok(c_spa_real(m, n)? + coupler_split * c_npa_real(m, n)?)
        }
    }
}

/// Ratio of Gamma-extended pattern counts between two schemes.
///
/// The coupler pass probability multiplies the co-located count wherever it
/// appears (NPA and the composite's zero-separation term).
pub fn efficiency_ratio(
    m: f64,
    n: u32,
    scheme_a: RatioScheme,
    scheme_b: RatioScheme,
    coupler_split: f64,
) -> Result<f64> {
    if !(coupler_split > 0.0 && coupler_split <= 1.0) {
        return Err(invalid(format!("coupler split must lie in (0, 1], got {coupler_split}")));
    }
    let a = scheme_weight(scheme_a, m, n, coupler_split)?;
    let b = scheme_weight(scheme_b, m, n, coupler_split)?;
    if b == 0.0 {
        return Err(Error::UndefinedRatio(format!("{scheme_b} count is zero")));
    }
    Ok(a / b)
}

/// Probability that a random arrival is accepted by `scheme`.
pub fn acceptance_probability(scheme: CountScheme, m: u64, n: u64, model: PlacementModel) -> Result<f64> {
    check_counts_args(m, n)?;
    match model {
        PlacementModel::MultisetUniform => {
            let total = c_total(m, n)? as f64;
            let count = match scheme {
                CountScheme::Npa => c_npa(m, n)?,
                CountScheme::Spa => c_spa(m, n)?,
                CountScheme::Pnr => c_pnr(m, n)?,
            } as f64;
            Ok(count / total)
        }
        PlacementModel::PlacementUniform => {
            let mf = m as f64;
            Ok(match scheme {
                CountScheme::Npa => mf.powf(1.0 - n as f64),
                // M!/((M−N)!·M^N) as a product of (M−k)/M
                CountScheme::Spa => {
                    if n > m {
                        0.0
                    } else {
                        (0..n).map(|k| (m - k) as f64 / mf).product()
                    }
                }
                CountScheme::Pnr => 1.0,
            })
        }
    }
}

/// Integer counts with their enumeration cross-check.
#[derive(Debug, Clone, Serialize)]
pub struct ExactCounts {
    pub c_total: u64,
    pub c_npa: u64,
    pub c_spa: u64,
    pub c_pnr: u64,
    /// `Some(true)` when enumeration was within bounds and agreed.
    pub oracle_verified: Option<bool>,
}

/// Counts, acceptance probabilities and efficiency ratios for one (M, N).
#[derive(Debug, Clone, Serialize)]
pub struct OccupancyReport {
    pub m: f64,
    pub n: u32,
    pub coupler_split: f64,
    pub model: PlacementModel,
    /// Gamma-extended counts (equal to the integers when M is integral).
    pub c_total: f64,
    pub c_npa: f64,
    pub c_spa: Option<f64>,
    pub c_pnr: f64,
    pub exact: Option<ExactCounts>,
    pub acceptance_probabilities: BTreeMap<String, f64>,
    pub ratios: BTreeMap<String, f64>,
}

/// Assemble a report; integer M within bounds triggers the enumeration oracle.
pub fn occupancy_report(m: f64, n: u32, coupler_split: f64, model: PlacementModel) -> Result<OccupancyReport> {
    check_real_args(m, n)?;
    let spa = c_spa_real(m, n).ok();
    let integral = m.fract() == 0.0 && m <= u32::MAX as f64;

    let exact = if integral {
        let mi = m as u64;
        let nn = u64::from(n);
        let counts = (c_total(mi, nn)?, c_npa(mi, nn)?, c_spa(mi, nn)?, c_pnr(mi, nn)?);
        let oracle_verified = match enumerated_counts(mi as u32, n) {
            Ok(e) => Some(e.total == counts.0 && e.all_same == counts.1 && e.all_distinct == counts.2),
            Err(_) => None,
        };
        Some(ExactCounts {
            c_total: counts.0,
            c_npa: counts.1,
            c_spa: counts.2,
            c_pnr: counts.3,
            oracle_verified,
        })
    } else {
        None
    };

    let mut acceptance_probabilities = BTreeMap::new();
    if integral {
        for (name, scheme) in [("NPA", CountScheme::Npa), ("SPA", CountScheme::Spa), ("PNR", CountScheme::Pnr)] {
            acceptance_probabilities.insert(name.to_string(), acceptance_probability(scheme, m as u64, u64::from(n), model)?);
        }
    } else {
        let total = c_total_real(m, n)?;
        acceptance_probabilities.insert("NPA".into(), m / total);
        if let Some(s) = spa {
            acceptance_probabilities.insert("SPA".into(), s / total);
        }
        acceptance_probabilities.insert("PNR".into(), 1.0);
    }

    let mut ratios = BTreeMap::new();
    ratios.insert("PNR/NPA".into(), efficiency_ratio(m, n, RatioScheme::Pnr, RatioScheme::Npa, 1.0)?);
    if spa.is_some() {
        ratios.insert("SPA/NPA".into(), efficiency_ratio(m, n, RatioScheme::Spa, RatioScheme::Npa, 1.0)?);
        ratios.insert("PNR/SPA".into(), efficiency_ratio(m, n, RatioScheme::Pnr, RatioScheme::Spa, 1.0)?);
    }
    if let (2, Some(spa)) = (n, spa) {
        ratios.insert(
            "PNR_COMPOSITE/NPA_coupler".into(),
            efficiency_ratio(m, n, RatioScheme::PnrComposite, RatioScheme::Npa, coupler_split)?,
        );
        // same composite under ordered placements: distinct pairs weigh 2x
        let pu = (2.0 * spa + coupler_split * m) / (coupler_split * m);
        ratios.insert("PNR_COMPOSITE/NPA_coupler[placement_uniform]".into(), pu);
    }

    Ok(OccupancyReport {
        m,
        n,
        coupler_split,
        model,
        c_total: c_total_real(m, n)?,
        c_npa: m,
        c_spa: spa,
        c_pnr: c_total_real(m, n)?,
        exact,
        acceptance_probabilities,
        ratios,
    })
}

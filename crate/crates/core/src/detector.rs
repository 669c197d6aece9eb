//! Pixelated arrays, scanned fibers, and the detection protocols that turn a
//! continuous arrival event into an accepted or rejected record.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::state::PhotonArrivalEvent;

/// Line of equal pixels; pixel `i` covers `[origin + i·δx, origin + (i+1)·δx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorArray {
    pixel_size: f64,
    pixel_count: usize,
    origin: f64,
    /// Per-photon detection probability. Uniform efficiency cancels in every
    /// ratio this crate reports, so it defaults to 1.
    efficiency: f64,
}

impl DetectorArray {
    pub fn new(pixel_size: f64, pixel_count: usize, origin: f64) -> Result<Self> {
        ensure_finite("pixel_size", pixel_size)?;
        ensure_finite("origin", origin)?;
        if pixel_size <= 0.0 {
            return Err(invalid(format!("pixel size must be positive, got {pixel_size}")));
        }
        if pixel_count == 0 {
            return Err(invalid("pixel count must be at least 1"));
        }
        Ok(Self {
            pixel_size,
            pixel_count,
            origin,
            efficiency: 1.0,
        })
    }

    /// Array of `pixel_count` pixels whose span is centered on zero.
    pub fn centered(pixel_size: f64, pixel_count: usize) -> Result<Self> {
        Self::new(pixel_size, pixel_count, -0.5 * pixel_size * pixel_count as f64)
    }

    /// Scan grid of `2·half_stops + 1` stops spaced `step` apart, with a stop at 0.
    pub fn scan_grid(step: f64, half_stops: usize) -> Result<Self> {
        Self::centered(step, 2 * half_stops + 1)
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(invalid(format!("efficiency must lie in (0, 1], got {efficiency}")));
        }
        self.efficiency = efficiency;
        Ok(self)
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn end(&self) -> f64 {
        self.origin + self.pixel_size * self.pixel_count as f64
    }

    pub fn pixel_center(&self, index: usize) -> f64 {
        self.origin + (index as f64 + 0.5) * self.pixel_size
    }

    /// Containing pixel, or `None` off the array.
    pub fn pixel_of(&self, x: f64) -> Option<usize> {
        let rel = (x - self.origin) / self.pixel_size;
        if !(rel >= 0.0) {
            return None;
        }
        let i = rel.floor() as usize;
        (i < self.pixel_count).then_some(i)
    }
}

/// Single scanned fiber feeding a 1×N coupler (or a plain counter for N = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScannedAperture {
    pub aperture_width: f64,
    pub scan_step: f64,
    pub coupler_split: f64,
}

/// Two fibers of variable separation scanned together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberPair {
    pub separations: Vec<f64>,
    pub aperture_width: f64,
    pub scan_step: f64,
    /// Add the single-fiber + 1×2 coupler trace, which together with the
    /// pair traces emulates a PNR array.
    pub include_zero_separation_coupler: bool,
    pub coupler_split: f64,
}

/// Detection protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DetectionScheme {
    /// Multi-photon absorption emulated by a coupler coincidence on one pixel.
    QlMpa { coupler_split: f64 },
    /// Non-resolving single-photon array.
    OcmSp,
    /// Photon-number-resolving array.
    OcmPnr,
    FiberPair(FiberPair),
    ScannedAperture(ScannedAperture),
}

impl DetectionScheme {
    pub fn ql_mpa() -> Self {
        DetectionScheme::QlMpa { coupler_split: 0.5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DetectionScheme::QlMpa { .. } => "QL_MPA",
            DetectionScheme::OcmSp => "OCM_SP",
            DetectionScheme::OcmPnr => "OCM_PNR",
            DetectionScheme::FiberPair(_) => "FIBER_PAIR",
            DetectionScheme::ScannedAperture(_) => "SCANNED_APERTURE",
        }
    }

    pub fn is_scanned(&self) -> bool {
        matches!(self, DetectionScheme::FiberPair(_) | DetectionScheme::ScannedAperture(_))
    }

    pub fn validate(&self) -> Result<()> {
        let split_ok = |s: f64| s > 0.0 && s <= 1.0;
        match self {
            DetectionScheme::QlMpa { coupler_split } => {
                if !split_ok(*coupler_split) {
                    return Err(invalid(format!("coupler split must lie in (0, 1], got {coupler_split}")));
                }
            }
            DetectionScheme::OcmSp | DetectionScheme::OcmPnr => {}
            DetectionScheme::ScannedAperture(a) => {
                if !(a.aperture_width > 0.0 && a.aperture_width.is_finite()) {
                    return Err(invalid("aperture width must be positive"));
                }
                if !(a.scan_step > 0.0 && a.scan_step.is_finite()) {
                    return Err(invalid("scan step must be positive"));
                }
                if !split_ok(a.coupler_split) {
                    return Err(invalid("coupler split must lie in (0, 1]"));
                }
            }
            DetectionScheme::FiberPair(f) => {
                if !(f.aperture_width > 0.0 && f.aperture_width.is_finite()) {
                    return Err(invalid("aperture width must be positive"));
                }
                if !(f.scan_step > 0.0 && f.scan_step.is_finite()) {
                    return Err(invalid("scan step must be positive"));
                }
                if !split_ok(f.coupler_split) {
                    return Err(invalid("coupler split must lie in (0, 1]"));
                }
                if f.separations.is_empty() && !f.include_zero_separation_coupler {
                    return Err(invalid("fiber pair needs at least one separation"));
                }
                for (i, &s) in f.separations.iter().enumerate() {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(invalid(format!("separations must be positive, got {s}")));
                    }
                    if f.separations[..i].contains(&s) {
                        return Err(invalid(format!("duplicate separation {s}")));
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for DetectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Why an event was not recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    None,
    NotColocated,
    CollisionNonPnr,
    OutsideArray,
    CouplerLoss,
    NoPairInApertures,
    /// A photon was lost to sub-unit detector efficiency.
    NotDetected,
}

impl RejectionReason {
    pub const ALL: [RejectionReason; 7] = [
        RejectionReason::None,
        RejectionReason::NotColocated,
        RejectionReason::CollisionNonPnr,
        RejectionReason::OutsideArray,
        RejectionReason::CouplerLoss,
        RejectionReason::NoPairInApertures,
        RejectionReason::NotDetected,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RejectionReason::None => "none",
            RejectionReason::NotColocated => "not_colocated",
            RejectionReason::CollisionNonPnr => "collision_non_pnr",
            RejectionReason::OutsideArray => "outside_array",
            RejectionReason::CouplerLoss => "coupler_loss",
            RejectionReason::NoPairInApertures => "no_pair_in_apertures",
            RejectionReason::NotDetected => "not_detected",
        }
    }

    pub(crate) fn index(&self) -> usize {
        Self::ALL.iter().position(|r| r == self).unwrap()
    }
}

/// Outcome of presenting one event to one detector configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub accepted: bool,
    pub pixel_hits: BTreeMap<usize, u32>,
    pub centroid_estimate: Option<f64>,
    pub rejection_reason: RejectionReason,
}

impl DetectionRecord {
    fn accept(pixel_hits: BTreeMap<usize, u32>, centroid: f64) -> Self {
        Self {
            accepted: true,
            pixel_hits,
            centroid_estimate: Some(centroid),
            rejection_reason: RejectionReason::None,
        }
    }

    fn reject(pixel_hits: BTreeMap<usize, u32>, reason: RejectionReason) -> Self {
        Self {
            accepted: false,
            pixel_hits,
            centroid_estimate: None,
            rejection_reason: reason,
        }
    }
}

/// Pixel occupancy of one event.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PixelAssignment {
    pub hits: BTreeMap<usize, u32>,
    /// Photons that missed the array.
    pub outside: usize,
}

impl PixelAssignment {
    pub fn is_outside_array(&self) -> bool {
        self.outside > 0
    }
}

pub fn assign_pixels(array: &DetectorArray, event: &PhotonArrivalEvent) -> PixelAssignment {
    let mut out = PixelAssignment::default();
    for &x in event.positions() {
        match array.pixel_of(x) {
            Some(i) => *out.hits.entry(i).or_insert(0) += 1,
            None => out.outside += 1,
        }
    }
    out
}

/// Probability that N photons leaving one fiber exit through distinct coupler
/// ports; `split` is the N = 2 pass probability.
pub fn coupler_pass_probability(photon_number: usize, split: f64) -> f64 {
    split.powi(photon_number.saturating_sub(1) as i32)
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    p >= 1.0 || rng.random::<f64>() < p
}

/// Present an event to a pixel-array protocol.
///
/// Scanned protocols have no fixed pixel geometry; use
/// [`detect_fiber_pair`] or [`detect_scanned_aperture`] for those.
pub fn detect<R: Rng + ?Sized>(
    scheme: &DetectionScheme,
    array: &DetectorArray,
    event: &PhotonArrivalEvent,
    rng: &mut R,
) -> Result<DetectionRecord> {
    let assignment = assign_pixels(array, event);
    let hits = assignment.hits;
    if assignment.outside > 0 {
        return Ok(DetectionRecord::reject(hits, RejectionReason::OutsideArray));
    }
    if array.efficiency < 1.0 {
        let lost = (0..event.photon_number()).any(|_| !bernoulli(rng, array.efficiency));
        if lost {
            return Ok(DetectionRecord::reject(hits, RejectionReason::NotDetected));
        }
    }
    let n = event.photon_number();
    match scheme {
        DetectionScheme::QlMpa { coupler_split } => {
            if hits.len() != 1 {
                return Ok(DetectionRecord::reject(hits, RejectionReason::NotColocated));
            }
            if !bernoulli(rng, coupler_pass_probability(n, *coupler_split)) {
                return Ok(DetectionRecord::reject(hits, RejectionReason::CouplerLoss));
            }
            let pixel = *hits.keys().next().unwrap();
            Ok(DetectionRecord::accept(hits, array.pixel_center(pixel)))
        }
        DetectionScheme::OcmSp => {
            if hits.len() != n {
                return Ok(DetectionRecord::reject(hits, RejectionReason::CollisionNonPnr));
            }
            let centroid = hits.keys().map(|&i| array.pixel_center(i)).sum::<f64>() / n as f64;
            Ok(DetectionRecord::accept(hits, centroid))
        }
        DetectionScheme::OcmPnr => {
            let centroid = weighted_centroid(array, &hits);
            Ok(DetectionRecord::accept(hits, centroid))
        }
        DetectionScheme::FiberPair(_) | DetectionScheme::ScannedAperture(_) => Err(Error::Config(format!(
            "{} is a scanned protocol; it has no pixel-array detection",
            scheme.name()
        ))),
    }
}

fn weighted_centroid(array: &DetectorArray, hits: &BTreeMap<usize, u32>) -> f64 {
    let total: u32 = hits.values().sum();
    hits.iter()
        .map(|(&i, &c)| f64::from(c) * array.pixel_center(i))
        .sum::<f64>()
        / f64::from(total)
}

#[inline]
fn within(x: f64, center: f64, half_width: f64) -> bool {
    (x - center).abs() <= half_width
}

/// Geometric part of the fiber-pair condition: one photon in each aperture.
#[inline]
pub(crate) fn pair_in_apertures(p: f64, q: f64, scan: f64, separation: f64, aperture: f64) -> bool {
    let half = 0.5 * aperture;
    if separation == 0.0 {
        return within(p, scan, half) && within(q, scan, half);
    }
    let left = scan - 0.5 * separation;
    let right = scan + 0.5 * separation;
    (within(p, left, half) && within(q, right, half)) || (within(q, left, half) && within(p, right, half))
}

/// Two fibers centered at `scan_position ∓ separation/2`.
///
/// Zero separation means one fiber feeding a 1×2 coupler; that case needs
/// `include_zero_separation_coupler` and passes with `coupler_split`.
pub fn detect_fiber_pair<R: Rng + ?Sized>(
    scheme: &FiberPair,
    event: &PhotonArrivalEvent,
    scan_position: f64,
    separation: f64,
    rng: &mut R,
) -> Result<DetectionRecord> {
    if event.photon_number() != 2 {
        return Err(invalid(format!(
            "fiber-pair detection is defined for photon pairs, got N = {}",
            event.photon_number()
        )));
    }
    if separation < 0.0 || !separation.is_finite() {
        return Err(invalid(format!("separation must be non-negative, got {separation}")));
    }
    if separation == 0.0 && !scheme.include_zero_separation_coupler {
        return Err(Error::Config("zero separation requires the coupler case to be enabled".into()));
    }
    let [p, q] = [event.positions()[0], event.positions()[1]];
    let half = 0.5 * scheme.aperture_width;
    let mut hits = BTreeMap::new();
    if separation == 0.0 {
        let inside = [p, q].iter().filter(|&&x| within(x, scan_position, half)).count() as u32;
        if inside > 0 {
            hits.insert(0, inside);
        }
    } else {
        for x in [p, q] {
            if within(x, scan_position - 0.5 * separation, half) {
                *hits.entry(0).or_insert(0) += 1;
            } else if within(x, scan_position + 0.5 * separation, half) {
                *hits.entry(1).or_insert(0) += 1;
            }
        }
    }
    if !pair_in_apertures(p, q, scan_position, separation, scheme.aperture_width) {
        return Ok(DetectionRecord::reject(hits, RejectionReason::NoPairInApertures));
    }
    if separation == 0.0 && !bernoulli(rng, scheme.coupler_split) {
        return Ok(DetectionRecord::reject(hits, RejectionReason::CouplerLoss));
    }
    Ok(DetectionRecord::accept(hits, scan_position))
}

/// One fiber at `scan_position`; all N photons must enter it, and for N ≥ 2 the
/// coupler coincidence must fire.
pub fn detect_scanned_aperture<R: Rng + ?Sized>(
    scheme: &ScannedAperture,
    event: &PhotonArrivalEvent,
    scan_position: f64,
    rng: &mut R,
) -> DetectionRecord {
    let half = 0.5 * scheme.aperture_width;
    let inside = event.positions().iter().filter(|&&x| within(x, scan_position, half)).count() as u32;
    let mut hits = BTreeMap::new();
    if inside > 0 {
        hits.insert(0, inside);
    }
    if inside as usize != event.photon_number() {
        return DetectionRecord::reject(hits, RejectionReason::NoPairInApertures);
    }
    if !bernoulli(rng, coupler_pass_probability(event.photon_number(), scheme.coupler_split)) {
        return DetectionRecord::reject(hits, RejectionReason::CouplerLoss);
    }
    DetectionRecord::accept(hits, scan_position)
}

/// Range of scan-stop indices whose centers may lie in `[lo, hi]`, padded by
/// one stop on each side; callers re-check the exact predicate.
pub(crate) fn candidate_stops(grid: &DetectorArray, lo: f64, hi: f64) -> std::ops::Range<usize> {
    if hi < lo {
        return 0..0;
    }
    let step = grid.pixel_size();
    let first = ((lo - grid.origin()) / step - 0.5).floor() - 1.0;
    let last = ((hi - grid.origin()) / step - 0.5).ceil() + 1.0;
    let count = grid.pixel_count() as f64;
    let first = first.clamp(0.0, count) as usize;
    let last = (last + 1.0).clamp(0.0, count) as usize;
    first..last.max(first)
}
